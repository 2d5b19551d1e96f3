"""PHYDYAS prototype filter and the FBMC/OQAM synthesis/analysis filter banks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Frequency-sampling coefficients of the PHYDYAS prototype per overlapping factor.
PHYDYAS_COEFFS = {
    2: [1.0, np.sqrt(2.0) / 2.0],
    3: [1.0, 0.911438, 0.411438],
    4: [1.0, 0.971960, np.sqrt(2.0) / 2.0, 0.235147],
}


@dataclass
class PrototypeFilter:
    taps: np.ndarray  # (kappa*M,) real, unit energy
    M: int
    kappa: int

    @property
    def length(self) -> int:
        return self.taps.shape[0]


def phydyas_prototype(M: int, kappa: int) -> PrototypeFilter:
    """Frequency-sampling PHYDYAS prototype, normalized to unit energy.

    f[l] = H0 + 2 sum_k (-1)^k H_k cos(2 pi k l / (kappa M)); symmetric about
    the integer midpoint kappa*M/2 (f[l] = f[kappa*M - l], f[0] ~ 0), which
    keeps the residual reconstruction error of the transmultiplexer below
    -60 dB for kappa = 4.
    """
    if kappa not in PHYDYAS_COEFFS:
        raise ValueError(f"unsupported overlapping factor {kappa}")
    if M < 2 or (M & (M - 1)) != 0:
        raise ValueError("M must be a power of two")
    H = PHYDYAS_COEFFS[kappa]
    ell = np.arange(kappa * M)
    f = np.full(kappa * M, H[0])
    for k in range(1, kappa):
        f = f + 2.0 * (-1) ** k * H[k] * np.cos(
            2.0 * np.pi * k * ell / (kappa * M))
    return PrototypeFilter(f / np.linalg.norm(f), M, kappa)


def subcarrier_filter(proto: PrototypeFilter, m: int) -> np.ndarray:
    """f_m[l] = f[l] e^{j 2 pi m l / M}."""
    ell = np.arange(proto.length)
    return proto.taps * np.exp(2j * np.pi * m * ell / proto.M)


def oqam_phase(m, i):
    """e^{j phi_{m,i}} with phi = (pi/2)(m + i)."""
    return 1j ** (np.asarray(m) + np.asarray(i))


def oqam_map(qam: np.ndarray) -> np.ndarray:
    """Interleave real/imaginary parts into consecutive OQAM half-slots.

    Input shape (..., n_slots, U) complex with unit average power; output
    (..., 2*n_slots, U) real, scaled by sqrt(2) so each OQAM stream has unit
    power (the transmit normalization assumed throughout).
    """
    re = np.real(qam)
    im = np.imag(qam)
    out = np.empty(qam.shape[:-2] + (2 * qam.shape[-2], qam.shape[-1]))
    out[..., 0::2, :] = re
    out[..., 1::2, :] = im
    return np.sqrt(2.0) * out


def oqam_demap(oqam: np.ndarray) -> np.ndarray:
    """Inverse of :func:`oqam_map`: demap(map(x)) == x."""
    return (oqam[..., 0::2, :] + 1j * oqam[..., 1::2, :]) / np.sqrt(2.0)


def synthesize(precoded: np.ndarray, proto: PrototypeFilter) -> np.ndarray:
    """Synthesis filter bank: x[l] = sum_i sum_m f_m[l - i M/2] s_m[i].

    ``precoded`` is (M, n_slots) or (M, n_slots, N).  Fast path: one M-point
    IFFT per OQAM slot, tiled across the prototype and overlap-added at
    stride M/2.
    """
    M = proto.M
    if precoded.shape[0] != M:
        raise ValueError("first axis of precoded input must have length M")
    s = precoded if precoded.ndim == 3 else precoded[:, :, None]
    n_slots, n_ant = s.shape[1], s.shape[2]
    half = M // 2
    out_len = (n_slots - 1) * half + proto.length
    x = np.zeros((out_len, n_ant), dtype=complex)
    # M * ifft over the subcarrier axis gives sum_m s_m e^{j 2 pi m l / M}
    blocks = M * np.fft.ifft(s, axis=0)
    tiles = proto.kappa
    for i in range(n_slots):
        block = np.tile(blocks[:, i, :], (tiles, 1)) * proto.taps[:, None]
        x[i * half:i * half + proto.length] += block
    if precoded.ndim == 2:
        return x[:, 0]
    return x


def analyze_complex(y: np.ndarray, m_bar: int, proto: PrototypeFilter,
                    n_slots: int, offset: int = 0) -> np.ndarray:
    """Matched-filter outputs before derotation and the real-part step.

    Returns sum_l y[l] f_mbar*[l - i M/2] for i = 0..n_slots-1, where sample
    index l is taken relative to ``offset`` within ``y``.
    """
    half = proto.M // 2
    fm = np.conj(subcarrier_filter(proto, m_bar))
    out = np.zeros(n_slots, dtype=complex)
    for i in range(n_slots):
        lo = offset + i * half
        hi = lo + proto.length
        a = max(lo, 0)
        b = min(hi, y.shape[0])
        if b <= a:
            continue
        out[i] = np.dot(y[a:b], fm[a - lo:b - lo])
    return out


def analyze(y: np.ndarray, m_bar: int, proto: PrototypeFilter,
            n_slots: int, offset: int = 0) -> np.ndarray:
    """OQAM symbol estimates: derotate by e^{-j phi_{mbar,i}} and take Re{.}.

    No equalization is applied after the analysis filter bank.
    """
    z = analyze_complex(y, m_bar, proto, n_slots, offset)
    i = np.arange(n_slots)
    return np.real(z * (-1j) ** (m_bar + i))
