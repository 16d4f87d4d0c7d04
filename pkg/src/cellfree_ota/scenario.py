"""Simulation configuration, network geometry and channel draws.

All powers are handled internally in linear milliwatts. Channels are stored as
a single array ``H`` of shape ``(B, K, M, N)`` so that ``H[b, k]`` is the
uplink channel matrix between UE ``k`` and BS ``b``.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid or inconsistent scenario parameters."""


def dbm_to_mw(dbm: float) -> float:
    if dbm == -math.inf:
        return 0.0
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw == 0.0:
        return -math.inf
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class ScenarioConfig:
    """Every parameter of one simulation run.

    Fields ending in ``_dbm`` are logarithmic; their linear (mW) values are
    exposed as ``rho_bs``, ``rho_ue``, ``sigma2_bs`` and ``sigma2_ue``.
    """

    num_bs: int = 25
    antennas_per_bs: int = 4
    num_ue: int = 16
    antennas_per_ue: int = 2
    inter_site_distance: float = 100.0
    bs_height: float = 10.0
    bs_power_dbm: float = 30.0
    ue_power_dbm: float = 20.0
    bs_noise_dbm: float = -95.0
    ue_noise_dbm: float = -95.0

    # None -> K*N (the smallest length giving a fully orthogonal pilot book)
    pilot_length: int | None = None
    pilot_mode: str = "orthogonal"

    step_size: float = 0.5
    ue_weights: tuple[float, ...] | None = None

    max_iter: int = 50
    rate_tol: float | None = None
    precoder_tol: float | None = None

    # frame/overhead accounting
    frames_T: float = 1.0
    symbols_per_frame: float = 1120.0
    symbols_per_iteration: float = 4.67

    drops: int = 200
    master_seed: int = 0

    backhaul_delay: int = 1
    local_mmse_csi: str = "trained"
    centralized_alternations: int = 30
    bisection_tol: float = 1e-6
    bisection_steps: int = 50
    dual_sweeps: int = 500

    rho_bs: float = field(init=False, repr=False)
    rho_ue: float = field(init=False, repr=False)
    sigma2_bs: float = field(init=False, repr=False)
    sigma2_ue: float = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("num_bs", "antennas_per_bs", "num_ue", "antennas_per_ue", "drops", "max_iter"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 < self.step_size <= 1.0:
            raise ConfigError("step_size must lie in (0, 1]")
        if self.pilot_mode not in ("orthogonal", "random"):
            raise ConfigError(f"unknown pilot_mode {self.pilot_mode!r}")
        if self.local_mmse_csi not in ("trained", "perfect"):
            raise ConfigError(f"unknown local_mmse_csi {self.local_mmse_csi!r}")
        if self.backhaul_delay < 0:
            raise ConfigError("backhaul_delay must be >= 0")
        if self.ue_weights is not None:
            w = tuple(float(x) for x in self.ue_weights)
            if len(w) != self.num_ue or min(w) <= 0:
                raise ConfigError("ue_weights needs one positive weight per UE")
            object.__setattr__(self, "ue_weights", w)

        tau = self.tau
        if tau < 1:
            raise ConfigError("pilot_length must be >= 1")
        if self.pilot_mode == "orthogonal" and tau < self.num_ue * self.antennas_per_ue:
            raise ConfigError("orthogonal pilots need pilot_length >= K*N")
        if self.pilot_mode == "random" and tau < self.antennas_per_ue:
            raise ConfigError("random pilots need pilot_length >= N")

        object.__setattr__(self, "rho_bs", dbm_to_mw(self.bs_power_dbm))
        object.__setattr__(self, "rho_ue", dbm_to_mw(self.ue_power_dbm))
        object.__setattr__(self, "sigma2_bs", dbm_to_mw(self.bs_noise_dbm))
        object.__setattr__(self, "sigma2_ue", dbm_to_mw(self.ue_noise_dbm))

    @property
    def tau(self) -> int:
        if self.pilot_length is None:
            return self.num_ue * self.antennas_per_ue
        return int(self.pilot_length)

    @property
    def weights(self) -> np.ndarray:
        if self.ue_weights is None:
            return np.ones(self.num_ue)
        return np.asarray(self.ue_weights, dtype=float)

    @property
    def noise_bs(self) -> np.ndarray:
        """Per-BS noise powers (mW), shape ``(B,)``."""
        return np.full(self.num_bs, self.sigma2_bs)

    @property
    def noise_ue(self) -> np.ndarray:
        return np.full(self.num_ue, self.sigma2_ue)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.init:
                val = getattr(self, f.name)
                out[f.name] = list(val) if isinstance(val, tuple) else val
        return out


def _init_field_names() -> set[str]:
    return {f.name for f in dataclasses.fields(ScenarioConfig) if f.init}


def config_from_dict(data: dict) -> ScenarioConfig:
    known = _init_field_names()
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(data)
    if kwargs.get("ue_weights") is not None:
        kwargs["ue_weights"] = tuple(kwargs["ue_weights"])
    for key, val in list(kwargs.items()):
        # "-inf" strings allow zero-noise configs in JSON/YAML
        if key.endswith("_dbm") and isinstance(val, str):
            kwargs[key] = float(val)
    return ScenarioConfig(**kwargs)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a flat key-value config file (``.json``, ``.yaml`` or ``.yml``)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a flat mapping")
    return config_from_dict(data)


@dataclass(frozen=True)
class Topology:
    bs_positions: np.ndarray  # (B, 3)
    ue_positions: np.ndarray  # (K, 3)
    side: float

    def distances(self) -> np.ndarray:
        """3-D BS-UE distances, shape ``(B, K)``."""
        diff = self.bs_positions[:, None, :] - self.ue_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class ChannelSet:
    H: np.ndarray  # (B, K, M, N)
    gains: np.ndarray  # (B, K) per-entry variance delta_{b,k}

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.H.shape

    def aggregated(self, k: int) -> np.ndarray:
        """Stack ``H[0, k], ..., H[B-1, k]`` into the ``(B*M, N)`` matrix of UE ``k``."""
        B, _, M, N = self.H.shape
        return self.H[:, k].reshape(B * M, N)


def drop_seed(master_seed: int, drop: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for one Monte-Carlo drop."""
    return np.random.SeedSequence([int(master_seed), int(drop)])


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_topology(config: ScenarioConfig, seed) -> Topology:
    """BSs at the centres of a square grid cells, UEs uniform in the square."""
    B = config.num_bs
    side_n = math.isqrt(B)
    if side_n * side_n != B:
        raise ConfigError(f"num_bs={B} is not a perfect square")
    isd = config.inter_site_distance
    side = side_n * isd
    centres = (np.arange(side_n) + 0.5) * isd
    gx, gy = np.meshgrid(centres, centres, indexing="ij")
    bs = np.column_stack([gx.ravel(), gy.ravel(), np.full(B, config.bs_height)])

    rng = _rng(seed)
    xy = rng.uniform(0.0, side, size=(config.num_ue, 2))
    ue = np.column_stack([xy, np.zeros(config.num_ue)])
    return Topology(bs_positions=bs, ue_positions=ue, side=side)


def pathloss_db(distance_m):
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = -30.5 - 36.7 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def draw_channels(topology: Topology, config: ScenarioConfig, seed) -> ChannelSet:
    """i.i.d. Rayleigh fading scaled by the distance-dependent pathloss."""
    rng = _rng(seed)
    gains = 10.0 ** (pathloss_db(topology.distances()) / 10.0)
    B, K = gains.shape
    M, N = config.antennas_per_bs, config.antennas_per_ue
    shape = (B, K, M, N)
    fading = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    H = fading * np.sqrt(gains)[:, :, None, None]
    return ChannelSet(H=H, gains=gains)


def draw_drop(config: ScenarioConfig, drop: int) -> tuple[Topology, ChannelSet]:
    """Topology and channels of Monte-Carlo drop ``drop``."""
    topo_seed, chan_seed = drop_seed(config.master_seed, drop).spawn(2)
    topo = generate_topology(config, topo_seed)
    return topo, draw_channels(topo, config, chan_seed)
