"""Multi-tap precoder design with phase compensation at target frequency bins,
and the multiple-interpolation transmit structure."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .channel import ChannelRealization, channel_matrix
from .filterbank import PrototypeFilter, oqam_phase
from .geometry import NetworkLayout

THETA_COND_LIMIT = 1e8


@dataclass
class DesignBins:
    """Target frequency bins omega_{m,p} = 2 pi (m + p/(L_pbar+1)) / M."""
    M: int
    l_pbar: int

    @property
    def l_p(self) -> int:
        return 2 * self.l_pbar + 1

    def offsets(self) -> np.ndarray:
        p = np.arange(-self.l_pbar, self.l_pbar + 1)
        return 2.0 * np.pi * p / ((self.l_pbar + 1) * self.M)

    def omega(self, m: int) -> np.ndarray:
        """All L_p bin frequencies of subcarrier m, ascending in p."""
        return 2.0 * np.pi * m / self.M + self.offsets()


@dataclass
class InterpolationPlan:
    """Split of the M/2-fold interpolation into two power-of-two stages."""
    C1: int
    C2: int
    M: int

    def __post_init__(self):
        for c in (self.C1, self.C2):
            if c < 1 or (c & (c - 1)) != 0:
                raise ValueError("interpolation factors must be powers of two")
        if self.C1 * self.C2 != self.M // 2:
            raise ValueError("C1 * C2 must equal M/2")

    @classmethod
    def conventional(cls, M: int) -> "InterpolationPlan":
        return cls(1, M // 2, M)


def phase_targets(omega: float, tau_k: np.ndarray) -> np.ndarray:
    """Diagonal of Lambda_k(omega): unit-modulus phases e^{j omega tau_{k,u}}."""
    return np.exp(1j * omega * np.asarray(tau_k))


def combiner_mrc(H: np.ndarray, lam: np.ndarray,
                 phi: np.ndarray = None) -> np.ndarray:
    """MRC combiner Omega = H^H Phi^{-1} Lambda.

    ``phi`` is the per-user normalization, the statistical average
    N*beta_{k,u} of the diagonal of H H^H.  The deterministic normalization
    keeps the second-moment analysis exact at finite N; falling back to the
    per-realization diagonal when ``phi`` is omitted.
    """
    if phi is None:
        phi = np.real(np.einsum("un,un->u", H, np.conj(H)))
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ValueError("degenerate user channel")
    return H.conj().T * (lam / phi)[None, :]


def combiner_zf(H: np.ndarray, lam: np.ndarray,
                phi: np.ndarray = None) -> np.ndarray:
    """ZF combiner Omega = H^H (H H^H)^{-1} Lambda; exact bin-level goal."""
    U, N = H.shape
    if N < U:
        raise ValueError("ZF infeasible: fewer antennas than users")
    gram = H @ H.conj().T
    try:
        inv_lam = np.linalg.solve(gram, np.diag(lam))
    except np.linalg.LinAlgError as exc:
        raise ValueError("ZF infeasible: rank-deficient channel") from exc
    return H.conj().T @ inv_lam


COMBINERS = {"mrc": combiner_mrc, "zf": combiner_zf}


def theta_matrix(bins: DesignBins, m: int, C2: int) -> np.ndarray:
    """Theta_m with entry (p + L_pbar, i + L_pbar) = e^{-j omega_{m,p} C2 i}."""
    omegas = bins.omega(m)
    i = np.arange(-bins.l_pbar, bins.l_pbar + 1)
    return np.exp(-1j * np.outer(omegas, i) * C2)


def assemble_taps(omegas: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Solve Theta_m P = Omega stack for the L_p tap matrices P_m^k[i].

    ``omegas`` is (L_p, N, U), ordered by bin index p; the result is ordered
    by tap index i.  Equivalent to applying (Theta^{-1} kron I_N).
    """
    if np.linalg.cond(theta) > THETA_COND_LIMIT:
        raise ValueError("ill-conditioned interpolation matrix Theta")
    lp = omegas.shape[0]
    flat = np.linalg.solve(theta, omegas.reshape(lp, -1))
    return flat.reshape(omegas.shape)


@dataclass
class PrecoderSet:
    """Per-(subcarrier, AP) tap matrices plus the design metadata."""
    taps: Dict[int, np.ndarray]   # m -> (K, L_p, N, U)
    bins: DesignBins
    plan: InterpolationPlan
    kind: str
    thetas: Dict[int, np.ndarray] = field(default_factory=dict)

    def subcarriers(self) -> List[int]:
        return sorted(self.taps.keys())


def design_precoders(realization: ChannelRealization, layout: NetworkLayout,
                     bins: DesignBins, plan: InterpolationPlan, kind: str,
                     subcarriers: Sequence[int]) -> PrecoderSet:
    """Design MRC/ZF tap matrices at the target bins for the given subcarriers."""
    combine = COMBINERS[kind]
    K = realization.taps.shape[0]
    N = realization.num_antennas
    taps: Dict[int, np.ndarray] = {}
    thetas: Dict[int, np.ndarray] = {}
    for m in subcarriers:
        theta = theta_matrix(bins, m, plan.C2)
        thetas[m] = theta
        per_ap = []
        for k in range(K):
            omega_stack = np.stack([
                combine(channel_matrix(realization, k, w),
                        phase_targets(w, layout.tau[k]),
                        N * layout.beta[k])
                for w in bins.omega(m)])
            per_ap.append(assemble_taps(omega_stack, theta))
        taps[m] = np.stack(per_ap)
    return PrecoderSet(taps, bins, plan, kind, thetas)


def recombined_response(taps_k: np.ndarray, omega: float, C2: int) -> np.ndarray:
    """Implied frequency response sum_i P[i] e^{-j omega C2 i} of one AP's taps."""
    lp = taps_k.shape[0]
    i = np.arange(-(lp // 2), lp // 2 + 1)
    ph = np.exp(-1j * omega * C2 * i)
    return np.tensordot(ph, taps_k, axes=(0, 0))


def transmit_multistage(oqam: np.ndarray, pset: PrecoderSet,
                        proto: PrototypeFilter):
    """Per-AP sample streams from the multiple-interpolation transmit chain.

    ``oqam`` is (M, n_slots, U) real.  Each tap branch P_m^k[j] feeds the
    partially interpolated grid at position i*C1 + j (the polyphase split of
    the precoder), the second C2-fold interpolation places those points at
    sample offsets i*M/2 + j*C2, and the synthesis filters f_m are applied by
    per-position IFFT blocks.

    Returns (streams, start): streams is (K, L_x, N) complex and ``start`` is
    the sample index of streams[:, 0] relative to OQAM slot 0 (negative:
    anti-causal taps).
    """
    M, n_slots, U = oqam.shape
    plan = pset.plan
    if plan.M != M:
        raise ValueError("interpolation plan does not match subcarrier count")
    l_pbar = pset.bins.l_pbar
    ms = pset.subcarriers()
    K = pset.taps[ms[0]].shape[0]
    N = pset.taps[ms[0]].shape[2]
    phases = oqam_phase(np.arange(M)[:, None], np.arange(n_slots)[None, :])
    d = oqam * phases[:, :, None]  # (M, n_slots, U) complex

    # precoded values on the C2-spaced grid: position n = i*C1 + j
    n_min = -l_pbar
    n_max = (n_slots - 1) * plan.C1 + l_pbar
    grid = np.zeros((K, M, n_max - n_min + 1, N), dtype=complex)
    for m in ms:
        P = pset.taps[m]  # (K, L_p, N, U)
        for jj, j in enumerate(range(-l_pbar, l_pbar + 1)):
            # (K, n_slots, N): branch j contribution for every slot
            contrib = np.einsum("knu,su->ksn", P[:, jj], d[m])
            pos = np.arange(n_slots) * plan.C1 + j - n_min
            grid[:, m, pos, :] += contrib
    start = n_min * plan.C2
    out_len = (n_max - n_min) * plan.C2 + proto.length
    x = np.zeros((K, out_len, N), dtype=complex)
    nz = np.nonzero(np.any(grid != 0, axis=(0, 1, 3)))[0]
    for n in nz:
        blocks = M * np.fft.ifft(grid[:, :, n, :], axis=1)  # (K, M, N)
        tile = np.tile(blocks, (1, proto.kappa, 1)) * proto.taps[None, :, None]
        off = n * plan.C2
        x[:, off:off + proto.length, :] += tile
    return x, start
