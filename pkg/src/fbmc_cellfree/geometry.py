"""Cell-free deployment geometry.

APs and users are dropped uniformly over a disc; large-scale gains follow a
three-slope log-distance law and per-link time offsets are the integer number
of samples by which each AP's signal trails the nearest AP's arrival.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8  # m/s


def cost231_loss_constant(freq_mhz: float = 1900.0, h_ap_m: float = 15.0,
                          h_user_m: float = 1.65) -> float:
    """Fixed part of the COST-231 Hata urban path loss, in dB (distance in km)."""
    lf = math.log10(freq_mhz)
    return (46.3 + 33.9 * lf - 13.82 * math.log10(h_ap_m)
            - (1.1 * lf - 0.7) * h_user_m + (1.56 * lf - 0.8))


@dataclass
class ThreeSlopeModel:
    """Piecewise log-distance path loss with two breakpoints.

    Below ``d0_m`` the gain is flat; between the breakpoints the slope is
    20 dB/decade and beyond ``d1_m`` it is 35 dB/decade.  The law is
    continuous at both breakpoints.  ``shadow_std_db`` enables optional
    log-normal shadowing (off by default).
    """
    d0_m: float = 10.0
    d1_m: float = 50.0
    loss_const_db: float = field(default_factory=cost231_loss_constant)
    shadow_std_db: float = 0.0

    def validate(self) -> None:
        if not (0.0 < self.d0_m < self.d1_m):
            raise ValueError("breakpoint distances must satisfy 0 < d0 < d1")


@dataclass
class GeometryConfig:
    area_radius_m: float = 1000.0
    num_aps: int = 8
    num_users: int = 4
    model: ThreeSlopeModel = field(default_factory=ThreeSlopeModel)
    min_distance_m: float = 1.0  # floor against singular path loss

    def validate(self) -> None:
        if self.num_aps < 1 or self.num_users < 1:
            raise ValueError("need at least one AP and one user")
        if self.area_radius_m <= 0:
            raise ValueError("area radius must be positive")
        self.model.validate()


@dataclass
class NetworkLayout:
    """One deployment drop: positions, distances, gains and time offsets."""
    ap_positions: np.ndarray     # (K, 2) metres
    user_positions: np.ndarray   # (U, 2) metres
    distances: np.ndarray        # (K, U) metres
    beta: np.ndarray             # (K, U) linear power gain
    tau: np.ndarray              # (K, U) non-negative integer samples
    area_radius_m: float
    sample_interval_s: float

    @property
    def num_aps(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_positions.shape[0]

    def to_csv(self) -> str:
        """Audit dump: one row per (AP, user) link."""
        buf = io.StringIO()
        buf.write("ap_x,ap_y,user_x,user_y,d,beta,tau\n")
        for k in range(self.num_aps):
            for u in range(self.num_users):
                buf.write("%.6f,%.6f,%.6f,%.6f,%.6f,%.10e,%d\n" % (
                    self.ap_positions[k, 0], self.ap_positions[k, 1],
                    self.user_positions[u, 0], self.user_positions[u, 1],
                    self.distances[k, u], self.beta[k, u], self.tau[k, u]))
        return buf.getvalue()


def sample_disc(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points uniformly over a disc (exact via sqrt radius map)."""
    r = radius * np.sqrt(rng.uniform(size=n))
    phi = 2.0 * np.pi * rng.uniform(size=n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def large_scale_gain(d_m, model: ThreeSlopeModel,
                     shadow_db=0.0) -> np.ndarray:
    """Linear power gain of the three-slope law at distance ``d_m`` (metres).

    Distances at or below the inner breakpoint are clamped to it, which also
    covers degenerate co-location (d = 0).
    """
    d = np.maximum(np.asarray(d_m, dtype=float), model.d0_m)
    d0_km = model.d0_m / 1000.0
    d1_km = model.d1_m / 1000.0
    d_km = d / 1000.0
    pl = np.where(
        d_km > d1_km,
        -model.loss_const_db - 35.0 * np.log10(d_km),
        -model.loss_const_db - 15.0 * np.log10(d1_km)
        - 20.0 * np.log10(np.maximum(d_km, d0_km)),
    )
    return 10.0 ** ((pl + shadow_db) / 10.0)


def time_offsets(distances: np.ndarray, sample_interval_s: float) -> np.ndarray:
    """Integer sample offsets relative to each user's nearest AP.

    tau[k, u] = floor((d[k, u] - min_k d[k, u]) / (c * T_s)); the argmin AP
    (lowest index on ties) gets exactly zero.
    """
    excess = distances - distances.min(axis=0, keepdims=True)
    return np.floor(excess / (SPEED_OF_LIGHT * sample_interval_s)).astype(int)


def tau_max_bound(area_radius_m: float, sample_interval_s: float) -> float:
    """Upper bound 2R/(c*T_s) on attainable time offsets, in samples."""
    return 2.0 * area_radius_m / (SPEED_OF_LIGHT * sample_interval_s)


def place_network(cfg: GeometryConfig, sample_interval_s: float,
                  rng: np.random.Generator) -> NetworkLayout:
    """Drop APs and users uniformly over the disc and fill all link tables."""
    cfg.validate()
    ap_pos = sample_disc(cfg.num_aps, cfg.area_radius_m, rng)
    user_pos = sample_disc(cfg.num_users, cfg.area_radius_m, rng)
    diff = ap_pos[:, None, :] - user_pos[None, :, :]
    dist = np.maximum(np.linalg.norm(diff, axis=2), cfg.min_distance_m)
    if cfg.model.shadow_std_db > 0.0:
        shadow = rng.normal(0.0, cfg.model.shadow_std_db, size=dist.shape)
    else:
        shadow = 0.0
    beta = large_scale_gain(dist, cfg.model, shadow)
    tau = time_offsets(dist, sample_interval_s)
    return NetworkLayout(ap_pos, user_pos, dist, beta, tau,
                         cfg.area_radius_m, sample_interval_s)
