"""Closed-form expectation machinery for the ergodic achievable rate.

Builds the second-moment matrices of the stacked equivalent channel (per tap
block and per delay sample) for the MRC and ZF combiners, folds them into the
real-stacked form and evaluates the expected symbol powers and rate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .channel import PowerDelayProfile, pdp_statistics
from .filterbank import PrototypeFilter
from .geometry import NetworkLayout
from .linkmetrics import FilterKernel, kernel_window
from .precoder import DesignBins, InterpolationPlan, theta_matrix


@dataclass
class VMatrix:
    """Second moments of one stacked equivalent channel (L_p blocks of L_v)."""
    vdot: np.ndarray    # (L_p*L_v, L_p*L_v) complex, E{v v^H} role
    vddot: np.ndarray   # (L_p*L_v, L_p*L_v) complex, E{v v^T} role
    l_v: int
    l_p: int

    def fold(self) -> np.ndarray:
        """Real-stacked covariance of [Re v; Im v]."""
        vd, vdd = self.vdot, self.vddot
        top = np.hstack([np.real(vd + vdd), np.imag(vdd - vd)])
        bot = np.hstack([np.imag(vd + vdd), np.real(vd - vdd)])
        return 0.5 * np.vstack([top, bot])


def _block_ranges(l_p: int, l_v: int):
    return [(i * l_v, (i + 1) * l_v) for i in range(l_p)]


def vmatrix_mrc(pdp_rx: PowerDelayProfile, pdp_stream: PowerDelayProfile,
                M: int, l_pbar: int, m: int, tau_rx: int, tau_stream: int,
                beta_ratio: float, N: int, l_v: int,
                theta_inv: np.ndarray, same_user: bool) -> VMatrix:
    """MRC second moments for one (subcarrier, AP, stream) combination.

    ``pdp_rx``/``tau_rx`` describe the receiving user's channel; ``pdp_stream``
    and ``tau_stream`` belong to the precoded stream.  ``beta_ratio`` is
    beta_rx / beta_stream and multiplies both the coherent and the 1/N terms.
    """
    l_p = 2 * l_pbar + 1
    st_rx = pdp_statistics(pdp_rx, M, l_pbar, tau_rx, m, l_v)
    st_stream = pdp_statistics(pdp_stream, M, l_pbar, tau_stream, m, l_v)
    T = theta_inv  # (L_p, L_p), T[i, p]
    # G[i] = sum_p T[i,p] lambda_mod[p]: coherent part collapses per tap block
    G = T @ st_rx.lambda_mod                      # (L_p, L_v)
    S_dot = T @ st_stream.zeta_k @ T.conj().T     # (L_p, L_p) 1/N coefficients
    dim = l_p * l_v
    vdot = np.zeros((dim, dim), dtype=complex)
    vddot = np.zeros((dim, dim), dtype=complex)
    diag_rx = np.diag(st_rx.lambda_shifted)
    rng = _block_ranges(l_p, l_v)
    for i, (a0, a1) in enumerate(rng):
        for j, (b0, b1) in enumerate(rng):
            blk = S_dot[i, j] * diag_rx / N
            if same_user:
                blk = blk + np.outer(G[i], np.conj(G[j]))
                vddot[a0:a1, b0:b1] = (np.outer(G[i], G[j])
                                       + np.outer(G[j], G[i]) / N)
            vdot[a0:a1, b0:b1] = beta_ratio * blk
    return VMatrix(vdot, vddot, l_v, l_p)


def vmatrix_zf(pdp_rx: PowerDelayProfile, pdp_stream: PowerDelayProfile,
               M: int, l_pbar: int, m: int, tau_rx: int, tau_stream: int,
               beta_ratio: float, N: int, U: int, l_v: int,
               theta_inv: np.ndarray, same_user: bool) -> VMatrix:
    """ZF second moments; first-order Taylor approximation, requires N > U."""
    if N <= U:
        raise ValueError("closed form undefined for N <= U")
    l_p = 2 * l_pbar + 1
    st_rx = pdp_statistics(pdp_rx, M, l_pbar, tau_rx, m, l_v)
    st_stream = pdp_statistics(pdp_stream, M, l_pbar, tau_stream, m, l_v)
    T = theta_inv
    lam = st_rx.lambda_mod                      # (L_p, L_v)
    G = T @ lam
    diag_rx = np.diag(st_rx.lambda_shifted)
    zeta_rx = st_rx.zeta_k
    zeta_stream = st_stream.zeta_k
    dim = l_p * l_v
    vdot = np.zeros((dim, dim), dtype=complex)
    vddot = np.zeros((dim, dim), dtype=complex)
    rng = _block_ranges(l_p, l_v)
    nu = N - U
    D = np.einsum("pl,qk->pqlk", lam, np.conj(lam))  # Ddot_{pq}
    for i, (a0, a1) in enumerate(rng):
        for j, (b0, b1) in enumerate(rng):
            corr = np.zeros((l_v, l_v), dtype=complex)
            corr2 = np.zeros((l_v, l_v), dtype=complex)
            for p in range(l_p):
                for q in range(l_p):
                    w = T[i, p] * np.conj(T[j, q])
                    num = (diag_rx - D[p, p] - D[q, q]
                           + zeta_rx[q, p] * D[p, q])
                    corr += w * num / (zeta_stream[q, p] * nu)
                    if same_user:
                        w2 = T[i, p] * T[j, q]
                        Dd_pq = np.outer(lam[p], lam[q])
                        Dd_qp = np.outer(lam[q], lam[p])
                        Dd_pp = np.outer(lam[p], lam[p])
                        Dd_qq = np.outer(lam[q], lam[q])
                        z2 = np.abs(zeta_rx[p, q]) ** 2
                        corr2 += w2 * (Dd_pq + (Dd_qp - zeta_rx[q, p] * Dd_pp
                                                - zeta_rx[p, q] * Dd_qq
                                                + z2 * Dd_pq) / (z2 * nu))
            blk = corr
            if same_user:
                blk = blk + np.outer(G[i], np.conj(G[j]))
                vddot[a0:a1, b0:b1] = corr2
            vdot[a0:a1, b0:b1] = beta_ratio * blk
    return VMatrix(vdot, vddot, l_v, l_p)


def stacked_kernel(kernel: FilterKernel, l_pbar: int, l_v: int,
                   C2: int) -> np.ndarray:
    """Kernel samples rearranged to match the stacked per-tap channel vector.

    Block j holds f_{m,i}[l + j*C2] for l in [0, L_v), so that the stacked
    inner product reproduces sum_l f[l] v[l] over the assembled sequence.
    """
    l_p = 2 * l_pbar + 1
    out = np.zeros(l_p * l_v, dtype=complex)
    for jj, j in enumerate(range(-l_pbar, l_pbar + 1)):
        for ell in range(l_v):
            pos = ell + j * C2 - kernel.start
            if 0 <= pos < kernel.seq.shape[0]:
                out[jj * l_v + ell] = kernel.seq[pos]
    return out


def expected_power(vmatrices: List[VMatrix], f_stacked: np.ndarray) -> float:
    """E{E_{m,i}^u} = sum_k (1/2) Re{f^T Vdot f* + f^T Vddot f}."""
    total = 0.0
    fc = np.conj(f_stacked)
    for vm in vmatrices:
        total += 0.5 * np.real(f_stacked @ vm.vdot @ fc
                               + f_stacked @ vm.vddot @ f_stacked)
    return float(total)


def rate_closed_form(expected: Dict[Tuple[int, int, int], float],
                     m_bar: int, u_bar: int, sigma2: float) -> float:
    """log2(1 + E{desired} / (E{interference} + noise/2))."""
    des = expected[(m_bar, 0, u_bar)]
    tot = sum(expected.values())
    denom = tot - des + sigma2 / 2.0
    if denom <= 0:
        raise ValueError("non-positive interference-plus-noise power")
    return float(np.log2(1.0 + des / denom))


def closed_form_ledger(pdps: List[PowerDelayProfile], layout: NetworkLayout,
                       bins: DesignBins, plan: InterpolationPlan, kind: str,
                       N: int, proto: PrototypeFilter, m_bar: int, u_bar: int,
                       dm: int = 2, di: int | None = None
                       ) -> Dict[Tuple[int, int, int], float]:
    """Expected symbol powers over the interference window for one target.

    ``pdps`` holds one profile per user (a shared profile may be repeated).
    """
    K, U = layout.beta.shape
    M = bins.M
    l_pbar = bins.l_pbar
    l_v = int(layout.tau[:, u_bar].max()) + pdps[u_bar].num_taps
    kernels = kernel_window(proto, m_bar, M, dm, di)
    ms = sorted({kern.m % M for kern in kernels})
    vmats: Dict[Tuple[int, int], List[VMatrix]] = {}
    for m in ms:
        theta_inv = np.linalg.inv(theta_matrix(bins, m, plan.C2))
        for u in range(U):
            mats = []
            for k in range(K):
                ratio = layout.beta[k, u_bar] / layout.beta[k, u]
                args = dict(
                    pdp_rx=pdps[u_bar], pdp_stream=pdps[u],
                    M=M, l_pbar=l_pbar, m=m,
                    tau_rx=int(layout.tau[k, u_bar]),
                    tau_stream=int(layout.tau[k, u]),
                    beta_ratio=ratio, N=N, l_v=l_v,
                    theta_inv=theta_inv, same_user=(u == u_bar))
                if kind == "mrc":
                    mats.append(vmatrix_mrc(**args))
                elif kind == "zf":
                    mats.append(vmatrix_zf(U=U, **args))
                else:
                    raise ValueError(f"unknown combiner {kind!r}")
            vmats[(m, u)] = mats
    expected: Dict[Tuple[int, int, int], float] = {}
    for kern in kernels:
        f_st = stacked_kernel(kern, l_pbar, l_v, plan.C2)
        for u in range(U):
            expected[(kern.m, kern.i, u)] = expected_power(
                vmats[(kern.m % M, u)], f_st)
    return expected


def wishart_trace_check(p: int, q: int, trials: int,
                        rng: np.random.Generator) -> dict:
    """Monte Carlo check of E{Tr((G G^H)^{-1})} = q/(p-q) for q x p Gaussian G."""
    if p <= q:
        raise ValueError("requires p > q")
    acc = 0.0
    for _ in range(trials):
        G = (rng.standard_normal((q, p)) + 1j * rng.standard_normal((q, p)))
        G /= np.sqrt(2.0)
        acc += np.real(np.trace(np.linalg.inv(G @ G.conj().T)))
    est = acc / trials
    expect = q / (p - q)
    return {"estimate": est, "expected": expect,
            "rel_error": abs(est - expect) / expect}
