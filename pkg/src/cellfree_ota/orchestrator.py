"""End-to-end training loops for every precoding scheme.

Each run gets its own noise stream per signaling phase (DL, UL-1, UL-2, UL)
plus one for the precoder initialisation, all derived from ``seed``. Schemes
that share phases therefore see identical noise in those phases, which makes
paired comparisons and reduction tests exact.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import airlink as al
from . import precoding as pc
from .evaluation.metrics import per_ue_rates
from .pilots import PilotBook
from .scenario import ChannelSet, ScenarioConfig


class AlgorithmId(str, enum.Enum):
    LocalMMSE = "LocalMMSE"
    Centralized = "Centralized"
    CentralizedIterative = "CentralizedIterative"
    DistributedBackhaul = "DistributedBackhaul"
    DistributedOTA = "DistributedOTA"
    PerfectCentralized = "PerfectCentralized"
    PerfectDistributed = "PerfectDistributed"


@dataclass
class IterationTrace:
    algorithm: str
    iterations: list[int] = field(default_factory=list)
    rates: list[float] = field(default_factory=list)
    trained_rates: list[float] = field(default_factory=list)
    per_ue: list[np.ndarray] = field(default_factory=list)
    duals: list[np.ndarray] = field(default_factory=list)
    bs_power_ratio: list[float] = field(default_factory=list)
    ue_power_ratio: list[float] = field(default_factory=list)
    precoder_change: list[float] = field(default_factory=list)
    precoders: list[np.ndarray] = field(default_factory=list)
    phases: list[tuple[int, str]] = field(default_factory=list)

    def record(self, i, H, W, sigma2_ue, rho_bs, *, lam=None, V_used=None, ue_ratio=0.0,
               change=0.0, keep_precoders=False):
        if self.iterations and i <= self.iterations[-1]:
            raise ValueError("iteration indices must increase")
        rates = per_ue_rates(H, W, pc.mmse_combiner_perfect(H, W, sigma2_ue), sigma2_ue)
        self.iterations.append(i)
        self.per_ue.append(rates)
        self.rates.append(float(rates.sum()))
        if V_used is not None:
            self.trained_rates.append(float(per_ue_rates(H, W, V_used, sigma2_ue).sum()))
        else:
            self.trained_rates.append(float("nan"))
        self.duals.append(np.array([]) if lam is None else np.asarray(lam).copy())
        self.bs_power_ratio.append(float(np.max(pc.per_bs_power(W)) / rho_bs))
        self.ue_power_ratio.append(float(ue_ratio))
        self.precoder_change.append(float(change))
        if keep_precoders:
            self.precoders.append(W.copy())

    @property
    def final_rate(self) -> float:
        return self.rates[-1]


def check_termination(trace: IterationTrace, config: ScenarioConfig) -> bool:
    """Stop at ``max_iter``, on a rate plateau, or on a precoder plateau."""
    if not trace.iterations:
        return False
    if trace.iterations[-1] >= config.max_iter:
        return True
    if config.rate_tol is not None and len(trace.rates) >= 2:
        if abs(trace.rates[-1] - trace.rates[-2]) <= config.rate_tol:
            return True
    if config.precoder_tol is not None and len(trace.precoder_change) >= 2:
        if trace.precoder_change[-1] <= config.precoder_tol:
            return True
    return False


@dataclass
class _Streams:
    init: np.random.Generator
    dl: np.random.Generator
    ul1: np.random.Generator
    ul2: np.random.Generator
    ul: np.random.Generator


def _streams(seed) -> _Streams:
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        ss = np.random.SeedSequence(seed)
    return _Streams(*(np.random.default_rng(s) for s in ss.spawn(5)))


def _initial_precoders(config: ScenarioConfig, rng) -> np.ndarray:
    return pc.init_precoders(config.num_bs, config.antennas_per_bs, config.num_ue,
                             config.rho_bs, rng)


def _ue_ratio(V, scaling, rho_ue, Y_dl=None) -> float:
    powers = al.ue_transmit_powers(V, scaling, Y_dl)
    return max(float(np.max(p)) for p in powers.values()) / rho_ue


def _distributed_loop(channels: ChannelSet, pilots: PilotBook, config: ScenarioConfig, seed,
                      mode: str, keep_precoders: bool, name: str) -> IterationTrace:
    """Shared bi-directional training loop of the trained-CSI distributed schemes.

    ``mode`` is ``"ota"``, ``"ota-zero"`` (OTA phases, cross terms dropped),
    ``"backhaul"`` or ``"local"``.
    """
    H = channels.H
    cfg = config
    st = _streams(seed)
    W = _initial_precoders(cfg, st.init)
    trace = IterationTrace(name)
    sigma_bs, sigma_ue = cfg.noise_bs, cfg.noise_ue
    N = cfg.antennas_per_ue
    history: list[np.ndarray] = []
    i = 0
    while True:
        i += 1
        Y_dl = al.dl_phase(H, W, pilots, sigma_ue, st.dl)
        trace.phases.append((i, "DL"))
        V = pc.mmse_combiner_trained(Y_dl, pilots)
        with_ul2 = mode in ("ota", "ota-zero")
        scaling = al.compute_power_scaling(V, cfg.rho_ue, N, Y_dl if with_ul2 else None)
        Y1 = al.ul1_phase(H, V, pilots, scaling.beta_ul1, sigma_bs, st.ul1, cfg.rho_ue)
        trace.phases.append((i, "UL-1"))
        if with_ul2:
            Y2 = al.ul2_phase(H, V, Y_dl, scaling.beta_ul2, sigma_bs, st.ul2, cfg.rho_ue)
            trace.phases.append((i, "UL-2"))

        if mode == "ota":
            W_new, dual = pc.distributed_precoder_step_ota(
                Y1, Y2, pilots, scaling.beta_ul1, scaling.beta_ul2, W, sigma_bs, cfg.rho_bs,
                cfg.bisection_tol, cfg.bisection_steps)
        else:
            incoming = np.zeros((cfg.num_bs, pilots.tau, cfg.num_ue), dtype=complex)
            if mode == "backhaul":
                history.append(pc.backhaul_terms(Y1, W, scaling.beta_ul1))
                lag = cfg.backhaul_delay
                if len(history) > lag:
                    incoming = pc.gather_backhaul(history[-1 - lag])
                    trace.phases.append((i, "BACKHAUL"))
                del history[:-(lag + 1)]
            W_new, dual = pc.distributed_precoder_step_backhaul(
                Y1, pilots, scaling.beta_ul1, incoming, sigma_bs, cfg.rho_bs,
                cfg.bisection_tol, cfg.bisection_steps)

        W_next = pc.damped_update(W, W_new, cfg.step_size)
        trace.record(i, H, W_next, cfg.sigma2_ue, cfg.rho_bs, lam=dual.lam, V_used=V,
                     ue_ratio=_ue_ratio(V, scaling, cfg.rho_ue, Y_dl if with_ul2 else None),
                     change=float(np.sum(np.abs(W_next - W) ** 2)),
                     keep_precoders=keep_precoders)
        W = W_next
        if check_termination(trace, cfg):
            return trace


def run_algorithm_4(channels, pilots, config, seed, keep_precoders=False,
                    zero_cross_terms=False) -> IterationTrace:
    """Distributed precoding with cross terms recovered over the air (DL, UL-1, UL-2)."""
    mode = "ota-zero" if zero_cross_terms else "ota"
    return _distributed_loop(channels, pilots, config, seed, mode, keep_precoders,
                             AlgorithmId.DistributedOTA.value)


def run_algorithm_2(channels, pilots, config, seed, keep_precoders=False) -> IterationTrace:
    """Distributed precoding with cross terms exchanged over a delayed backhaul."""
    return _distributed_loop(channels, pilots, config, seed, "backhaul", keep_precoders,
                             AlgorithmId.DistributedBackhaul.value)


def run_local_mmse(channels, pilots, config, seed, keep_precoders=False) -> IterationTrace:
    """Distributed loop without cross terms (local MMSE precoding)."""
    if config.local_mmse_csi == "perfect":
        trace = _perfect_distributed(channels, config, seed, keep_precoders, use_cross=False)
        trace.algorithm = AlgorithmId.LocalMMSE.value
        return trace
    return _distributed_loop(channels, pilots, config, seed, "local", keep_precoders,
                             AlgorithmId.LocalMMSE.value)


def run_algorithm_3(channels, pilots, config, seed, keep_precoders=False) -> IterationTrace:
    """Centralized precoding with iterative bi-directional training."""
    H = channels.H
    cfg = config
    st = _streams(seed)
    W = _initial_precoders(cfg, st.init)
    trace = IterationTrace(AlgorithmId.CentralizedIterative.value)
    lam = None
    i = 0
    while True:
        i += 1
        Y_dl = al.dl_phase(H, W, pilots, cfg.noise_ue, st.dl)
        trace.phases.append((i, "DL"))
        V = pc.mmse_combiner_trained(Y_dl, pilots)
        scaling = al.compute_power_scaling(V, cfg.rho_ue, cfg.antennas_per_ue)
        Y1 = al.ul1_phase(H, V, pilots, scaling.beta_ul1, cfg.noise_bs, st.ul1, cfg.rho_ue)
        trace.phases.append((i, "UL-1"))
        W_next, dual = pc.centralized_precoder_trained(
            Y1, pilots, scaling.beta_ul1, cfg.noise_bs, cfg.rho_bs, cfg.bisection_tol,
            cfg.dual_sweeps, lam0=lam)
        lam = dual.lam
        trace.record(i, H, W_next, cfg.sigma2_ue, cfg.rho_bs, lam=lam, V_used=V,
                     ue_ratio=_ue_ratio(V, scaling, cfg.rho_ue),
                     change=float(np.sum(np.abs(W_next - W) ** 2)),
                     keep_precoders=keep_precoders)
        W = W_next
        if check_termination(trace, cfg):
            return trace


def run_algorithm_1(channels, pilots, config, seed, keep_precoders=False) -> IterationTrace:
    """Centralized precoding from a single full-pilot uplink estimation (UL, then DL)."""
    H = channels.H
    cfg = config
    st = _streams(seed)
    trace = IterationTrace(AlgorithmId.Centralized.value)
    Y_ul = al.ul_full_phase(H, pilots, cfg.rho_ue, cfg.noise_bs, st.ul)
    trace.phases.append((1, "UL"))
    H_hat = al.ls_full_channel(Y_ul, pilots, cfg.rho_ue)
    W0 = _initial_precoders(cfg, st.init)
    W, _, dual, _ = pc.centralized_precoder_oneshot(
        H_hat, cfg.sigma2_ue, cfg.rho_bs, W0, cfg.centralized_alternations,
        tol=cfg.bisection_tol, max_sweeps=cfg.dual_sweeps)
    Y_dl = al.dl_phase(H, W, pilots, cfg.noise_ue, st.dl)
    trace.phases.append((1, "DL"))
    V = pc.mmse_combiner_trained(Y_dl, pilots)
    trace.record(1, H, W, cfg.sigma2_ue, cfg.rho_bs, lam=dual.lam, V_used=V,
                 keep_precoders=keep_precoders)
    return trace


def _perfect_distributed(channels, config, seed, keep_precoders, use_cross=True):
    H = channels.H
    cfg = config
    st = _streams(seed)
    W = _initial_precoders(cfg, st.init)
    trace = IterationTrace(AlgorithmId.PerfectDistributed.value)
    weights = cfg.weights
    i = 0
    while True:
        i += 1
        V = pc.mmse_combiner_perfect(H, W, cfg.sigma2_ue)
        if use_cross:
            xi = pc.cross_terms(al.effective_uplink(H, V), W, weights)
        else:
            xi = np.zeros_like(W)
        W_new, dual = pc.distributed_precoder_step_perfect(
            H, V, xi, cfg.rho_bs, weights, cfg.bisection_tol, cfg.bisection_steps)
        W_next = pc.damped_update(W, W_new, cfg.step_size)
        trace.record(i, H, W_next, cfg.sigma2_ue, cfg.rho_bs, lam=dual.lam, V_used=V,
                     change=float(np.sum(np.abs(W_next - W) ** 2)),
                     keep_precoders=keep_precoders)
        W = W_next
        if check_termination(trace, cfg):
            return trace


def _perfect_centralized(channels, config, seed, keep_precoders):
    H = channels.H
    cfg = config
    st = _streams(seed)
    W = _initial_precoders(cfg, st.init)
    trace = IterationTrace(AlgorithmId.PerfectCentralized.value)
    lam = None
    i = 0
    while True:
        i += 1
        V = pc.mmse_combiner_perfect(H, W, cfg.sigma2_ue)
        W_next, dual = pc.centralized_precoder_perfect(
            H, V, cfg.rho_bs, cfg.weights, cfg.bisection_tol, cfg.dual_sweeps, lam0=lam)
        lam = dual.lam
        trace.record(i, H, W_next, cfg.sigma2_ue, cfg.rho_bs, lam=lam, V_used=V,
                     change=float(np.sum(np.abs(W_next - W) ** 2)),
                     keep_precoders=keep_precoders)
        W = W_next
        if check_termination(trace, cfg):
            return trace


def run_perfect_reference(channels, config, which, seed=0, keep_precoders=False):
    """Alternating optimisation on the true channels (``which``: Centralized or Distributed)."""
    which = getattr(which, "value", which)
    if which in ("Centralized", AlgorithmId.PerfectCentralized.value):
        return _perfect_centralized(channels, config, seed, keep_precoders)
    if which in ("Distributed", AlgorithmId.PerfectDistributed.value):
        return _perfect_distributed(channels, config, seed, keep_precoders)
    raise ValueError(f"unknown perfect-CSI reference {which!r}")


def run(algorithm, channels, pilots, config, seed, keep_precoders=False) -> IterationTrace:
    alg = AlgorithmId(getattr(algorithm, "value", algorithm))
    if alg is AlgorithmId.LocalMMSE:
        return run_local_mmse(channels, pilots, config, seed, keep_precoders)
    if alg is AlgorithmId.Centralized:
        return run_algorithm_1(channels, pilots, config, seed, keep_precoders)
    if alg is AlgorithmId.CentralizedIterative:
        return run_algorithm_3(channels, pilots, config, seed, keep_precoders)
    if alg is AlgorithmId.DistributedBackhaul:
        return run_algorithm_2(channels, pilots, config, seed, keep_precoders)
    if alg is AlgorithmId.DistributedOTA:
        return run_algorithm_4(channels, pilots, config, seed, keep_precoders)
    if alg is AlgorithmId.PerfectCentralized:
        return run_perfect_reference(channels, config, "Centralized", seed, keep_precoders)
    return run_perfect_reference(channels, config, "Distributed", seed, keep_precoders)
