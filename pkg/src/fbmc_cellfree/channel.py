"""Power delay profiles, random channel realizations and PDP statistics.

Tap powers live on the sample grid and are normalized to unit sum.  Small
scale fading is i.i.d. circularly-symmetric complex Gaussian per tap and
antenna; the deterministic PDP coefficient tables computed here feed the
closed-form rate analysis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .geometry import NetworkLayout

# 3GPP TS 36.101 Extended Vehicular A model: (excess delay ns, relative power dB)
EVA_PROFILE = [
    (0.0, 0.0),
    (30.0, -1.5),
    (150.0, -1.4),
    (310.0, -3.6),
    (370.0, -0.6),
    (710.0, -9.1),
    (1090.0, -7.0),
    (1730.0, -12.0),
    (2510.0, -16.9),
]


@dataclass
class PowerDelayProfile:
    """Unit-sum tap powers on the sample grid."""
    taps: np.ndarray  # (L_h,) real, non-negative, sums to 1

    @property
    def num_taps(self) -> int:
        return self.taps.shape[0]


PdpSpec = Union[str, Sequence[tuple]]


def load_pdp(spec: PdpSpec, sample_interval_s: float) -> PowerDelayProfile:
    """Build a PDP from a named profile or explicit (delay ns, power dB) pairs.

    Delays are rounded to the nearest sample index; coincident taps are
    power-summed and the result normalized to unit sum.
    """
    if isinstance(spec, str):
        name = spec.lower()
        if name == "flat":
            return PowerDelayProfile(np.array([1.0]))
        if name == "eva":
            pairs = EVA_PROFILE
        else:
            raise ValueError(f"unknown PDP profile {spec!r}")
    else:
        pairs = list(spec)
    if len(pairs) == 0:
        raise ValueError("empty power delay profile")
    delays_ns = np.array([p[0] for p in pairs], dtype=float)
    powers_db = np.array([p[1] for p in pairs], dtype=float)
    if np.any(delays_ns < 0):
        raise ValueError("negative tap delay")
    idx = np.rint(delays_ns * 1e-9 / sample_interval_s).astype(int)
    lam = np.zeros(int(idx.max()) + 1)
    np.add.at(lam, idx, 10.0 ** (powers_db / 10.0))
    return PowerDelayProfile(lam / lam.sum())


@dataclass
class ChannelRealization:
    """One small-scale fading draw for every (AP, user) link.

    ``taps[k][u]`` has shape (L_h, N): complex gain per tap and AP antenna,
    already scaled by sqrt(beta).
    """
    taps: np.ndarray          # (K, U, L_h, N) complex
    beta: np.ndarray          # (K, U)
    pdp: PowerDelayProfile
    seed_info: tuple = ()

    @property
    def num_antennas(self) -> int:
        return self.taps.shape[3]


def draw_channel(pdp: PowerDelayProfile, layout: NetworkLayout, n_antennas: int,
                 rng: np.random.Generator,
                 seed_info: tuple = ()) -> ChannelRealization:
    """i.i.d. CN(0, beta*lambda[l]) taps per antenna; zero-power taps stay 0."""
    K, U = layout.beta.shape
    L = pdp.num_taps
    shape = (K, U, L, n_antennas)
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    scale = np.sqrt(layout.beta)[:, :, None, None] * \
        np.sqrt(pdp.taps / 2.0)[None, None, :, None]
    return ChannelRealization(g * scale, layout.beta, pdp, seed_info)


def freq_response(taps: np.ndarray, omega) -> np.ndarray:
    """DTFT of a tap sequence: sum_l taps[l] e^{-j omega l}.

    ``taps`` is (L_h, N); returns (N,) for scalar omega or (len(omega), N).
    """
    taps = np.asarray(taps)
    ell = np.arange(taps.shape[0])
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    phase = np.exp(-1j * np.outer(w, ell))
    out = phase @ taps.reshape(taps.shape[0], -1)
    out = out.reshape(w.shape[0], *taps.shape[1:])
    if np.isscalar(omega) or np.ndim(omega) == 0:
        return out[0]
    return out


def channel_matrix(realization: ChannelRealization, k: int,
                   omega: float) -> np.ndarray:
    """U x N frequency response of AP ``k`` at frequency ``omega``."""
    return np.array([freq_response(realization.taps[k, u], omega)
                     for u in range(realization.taps.shape[1])])


# --- deterministic PDP coefficient tables ---------------------------------

def design_bin_offset(p: int, l_pbar: int, M: int) -> float:
    """Frequency of design bin p relative to the subcarrier centre."""
    return 2.0 * np.pi * p / ((l_pbar + 1) * M)


def mu_coeff(pdp: PowerDelayProfile, M: int, l_pbar: int,
             delta_m: int, p: int) -> complex:
    """Correlation of the channel response at bin (m, p) with subcarrier m - delta_m.

    mu = sum_l lambda[l] e^{j(omega_{m,p} - omega_{m-delta_m,0}) l}.
    """
    w = 2.0 * np.pi * delta_m / M + design_bin_offset(p, l_pbar, M)
    ell = np.arange(pdp.num_taps)
    return complex(np.sum(pdp.taps * np.exp(1j * w * ell)))


def xi_coeff(pdp: PowerDelayProfile, M: int, delta_m: int) -> complex:
    """xi = sum_l lambda[l] e^{j 2 pi delta_m l / M}."""
    ell = np.arange(pdp.num_taps)
    return complex(np.sum(pdp.taps * np.exp(2j * np.pi * delta_m * ell / M)))


def zeta_table(pdp: PowerDelayProfile, M: int, l_pbar: int) -> np.ndarray:
    """(L_p, L_p) table of inter-bin correlation coefficients zeta_{pq}."""
    lp = 2 * l_pbar + 1
    ell = np.arange(pdp.num_taps)
    out = np.empty((lp, lp), dtype=complex)
    for a, p in enumerate(range(-l_pbar, l_pbar + 1)):
        for b, q in enumerate(range(-l_pbar, l_pbar + 1)):
            w = design_bin_offset(p - q, l_pbar, M)
            out[a, b] = np.sum(pdp.taps * np.exp(1j * w * ell))
    return out


def zeta_phase(tau: int, M: int, l_pbar: int) -> np.ndarray:
    """Offset phase e^{j 2 pi (p - q) tau / ((L_pbar + 1) M)} as an (L_p, L_p) table."""
    lp = 2 * l_pbar + 1
    p = np.arange(-l_pbar, l_pbar + 1)
    return np.exp(1j * design_bin_offset(1, l_pbar, M) * tau *
                  (p[:, None] - p[None, :]))


def shifted_pdp(pdp: PowerDelayProfile, tau: int, length: int) -> np.ndarray:
    """lambda_u[l - tau] on a grid of ``length`` samples (head zero-padded)."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    out = np.zeros(length)
    hi = min(length, tau + pdp.num_taps)
    if hi > tau:
        out[tau:hi] = pdp.taps[:hi - tau]
    return out


def modulated_pdp(lam_shifted: np.ndarray, omega: float) -> np.ndarray:
    """lambda_{k,u}[l] e^{j omega l} over the shifted-PDP grid."""
    ell = np.arange(lam_shifted.shape[0])
    return lam_shifted * np.exp(1j * omega * ell)


@dataclass
class PdpStatistics:
    """PDP-derived tables for one (subcarrier, AP, user) combination."""
    zeta: np.ndarray          # (L_p, L_p) zeta_{pq}^u
    zeta_k: np.ndarray        # (L_p, L_p) zeta_{pq}^{k,u} with offset phase
    lambda_shifted: np.ndarray   # (L_v,) lambda_u[l - tau]
    lambda_mod: np.ndarray    # (L_p, L_v) lambda_shifted * e^{j omega_{m,p} l}
    tau: int
    m: int
    l_pbar: int
    M: int


def pdp_statistics(pdp: PowerDelayProfile, M: int, l_pbar: int, tau: int,
                   m: int, length: int) -> PdpStatistics:
    """Assemble all coefficient tables by direct summation over the PDP support."""
    lam_shift = shifted_pdp(pdp, tau, length)
    omegas = [2.0 * np.pi * m / M + design_bin_offset(p, l_pbar, M)
              for p in range(-l_pbar, l_pbar + 1)]
    lam_mod = np.array([modulated_pdp(lam_shift, w) for w in omegas])
    zt = zeta_table(pdp, M, l_pbar)
    return PdpStatistics(zeta=zt, zeta_k=zt * zeta_phase(tau, M, l_pbar),
                         lambda_shifted=lam_shift, lambda_mod=lam_mod,
                         tau=tau, m=m, l_pbar=l_pbar, M=M)
