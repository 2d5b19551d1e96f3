"""Run configuration: INI-style file with sections, Table-style defaults,
cross-field validation and round-trippable effective-config emission."""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from typing import Dict, List, Sequence


FBMC_SCHEMES = ("proposed-zf", "proposed-mrc", "conventional-zf",
                "conventional-mrc")
ALL_SCHEMES = FBMC_SCHEMES + ("ofdm",)


@dataclass
class GeometrySection:
    radius_m: float = 1000.0
    num_aps: int = 8
    num_users: int = 4
    min_distance_m: float = 1.0
    breakpoint0_m: float = 10.0
    breakpoint1_m: float = 50.0
    shadow_std_db: float = 0.0


@dataclass
class ChannelSection:
    num_antennas: int = 16
    pdp: str = "eva"


@dataclass
class FilterbankSection:
    num_subcarriers: int = 256
    overlap: int = 4
    spacing_khz: float = 30.0


@dataclass
class PrecoderSection:
    c1: int = 2
    num_taps: int = 3   # L_p = 2*L_pbar + 1


@dataclass
class ExperimentSection:
    snr_db: List[float] = field(default_factory=lambda: [0.0, 10.0, 20.0])
    spacing_khz: List[float] = field(
        default_factory=lambda: [15.0, 30.0, 60.0, 120.0])
    ebn0_db: List[float] = field(default_factory=lambda: [0.0, 5.0, 10.0])
    mod_order: int = 4
    outer_trials: int = 10
    inner_trials: int = 50
    schemes: List[str] = field(default_factory=lambda: list(ALL_SCHEMES))
    cp_set: List[int] = field(default_factory=lambda: [0, 16, 32, 64])
    target_subcarrier: int = -1   # -1 -> M/2
    avg_subcarriers: int = 1      # evenly spaced extra targets averaged in
    min_bits: int = 100000


@dataclass
class RunConfig:
    geometry: GeometrySection = field(default_factory=GeometrySection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    filterbank: FilterbankSection = field(default_factory=FilterbankSection)
    precoder: PrecoderSection = field(default_factory=PrecoderSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    seed: int = 1234
    threads: int = 1

    @property
    def sample_interval_s(self) -> float:
        return 1.0 / (self.filterbank.num_subcarriers
                      * self.filterbank.spacing_khz * 1e3)

    def target_subcarrier(self) -> int:
        t = self.experiment.target_subcarrier
        return self.filterbank.num_subcarriers // 2 if t < 0 else t


_SECTIONS = {
    "geometry": GeometrySection,
    "channel": ChannelSection,
    "filterbank": FilterbankSection,
    "precoder": PrecoderSection,
    "experiment": ExperimentSection,
}
_LIST_FIELDS = {"snr_db", "spacing_khz", "ebn0_db", "schemes", "cp_set"}


def _parse_value(name: str, typ, raw: str):
    raw = raw.strip()
    if typ is list:
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if name == "schemes":
            return items
        if name == "cp_set":
            return [int(x) for x in items]
        return [float(x) for x in items]
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw


def load_config(path: str | None) -> RunConfig:
    """Parse an INI config file; None or empty file yields all defaults."""
    cfg = RunConfig()
    if path is None:
        return validate(cfg)
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    for section in parser.sections():
        if section == "run":
            for key, raw in parser.items(section):
                if key == "seed":
                    cfg.seed = int(raw)
                elif key == "threads":
                    cfg.threads = int(raw)
                else:
                    raise ValueError(f"unknown config key [run] {key}")
            continue
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        target = getattr(cfg, section)
        known = {f.name: f.type for f in fields(target)}
        types = {f.name: type(getattr(target, f.name))
                 for f in fields(target)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ValueError(f"unknown config key [{section}] {key}")
            cur = getattr(target, key)
            typ = type(cur) if not isinstance(cur, list) else list
            setattr(target, key, _parse_value(key, types[key] if typ is not list
                                              else list, raw))
    return validate(cfg)


def validate(cfg: RunConfig) -> RunConfig:
    """Cross-field consistency checks; distinct message per failure mode."""
    M = cfg.filterbank.num_subcarriers
    if M < 2 or (M & (M - 1)) != 0:
        raise ValueError("num_subcarriers must be a power of two")
    c1 = cfg.precoder.c1
    if c1 < 1 or (c1 & (c1 - 1)) != 0 or (M // 2) % c1 != 0:
        raise ValueError(
            "c1 must be a power of two dividing M/2 (got "
            f"c1={c1}, M={M})")
    if cfg.precoder.num_taps % 2 != 1 or cfg.precoder.num_taps < 1:
        raise ValueError("num_taps (L_p) must be odd")
    for s in cfg.experiment.schemes:
        if s not in ALL_SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    wants_zf_theory = any(s.endswith("zf") for s in cfg.experiment.schemes
                          if s != "ofdm")
    if wants_zf_theory and cfg.channel.num_antennas <= cfg.geometry.num_users:
        raise ValueError(
            "ZF closed form requires N > U (got "
            f"N={cfg.channel.num_antennas}, U={cfg.geometry.num_users})")
    if cfg.experiment.outer_trials < 1 or cfg.experiment.inner_trials < 1:
        raise ValueError("trial counts must be >= 1")
    if not cfg.experiment.schemes:
        raise ValueError("scheme list must be non-empty")
    if cfg.geometry.breakpoint0_m >= cfg.geometry.breakpoint1_m:
        raise ValueError("breakpoint distances must be strictly increasing")
    return cfg


def dump_config(cfg: RunConfig) -> str:
    """Effective configuration as INI text; re-parsing yields an equal config."""
    parser = configparser.ConfigParser()
    parser["run"] = {"seed": str(cfg.seed), "threads": str(cfg.threads)}
    for name in _SECTIONS:
        section = getattr(cfg, name)
        out: Dict[str, str] = {}
        for f in fields(section):
            val = getattr(section, f.name)
            if isinstance(val, list):
                out[f.name] = ", ".join(str(x) for x in val)
            else:
                out[f.name] = str(val)
        parser[name] = out
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
