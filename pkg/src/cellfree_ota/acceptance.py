"""Acceptance checks: one function per criterion, each returning a ``CriterionResult``.

Statistical checks take a finished ``RateReport``; property checks draw
their own instances from fixed seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import airlink as al
from . import precoding as pc
from .evaluation.campaign import RateReport, run_campaign
from .evaluation.metrics import overhead_fraction
from .orchestrator import AlgorithmId, _perfect_distributed, run_algorithm_4
from .pilots import make_pilots, orthogonal_pilots, random_pilots
from .scenario import ScenarioConfig, draw_drop

LOCAL = AlgorithmId.LocalMMSE.value
CENT = AlgorithmId.Centralized.value
CENT_IT = AlgorithmId.CentralizedIterative.value
BACKHAUL = AlgorithmId.DistributedBackhaul.value
OTA = AlgorithmId.DistributedOTA.value

# Of the admissible step sizes {0.3, 0.5, 0.7}, 0.3 gave the highest
# distributed rates in calibration runs.
ACCEPTANCE_STEP_SIZE = 0.3
PILOT_SWEEP_TAUS = (4, 8, 16, 32, 64)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: str
    target: str

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] criterion {self.number} ({self.name}): {self.measured} | target {self.target}"


def acceptance_config(**overrides) -> ScenarioConfig:
    base = dict(step_size=ACCEPTANCE_STEP_SIZE, max_iter=50, drops=200)
    base.update(overrides)
    return ScenarioConfig(**base)


def main_campaign(drops: int = 200, progress=None, **overrides) -> RateReport:
    cfg = acceptance_config(drops=drops, **overrides)
    return run_campaign(cfg, progress=progress)


def pilot_sweep(taus=PILOT_SWEEP_TAUS, drops: int = 100, progress=None,
                **overrides) -> dict[int, RateReport]:
    """Random-pilot campaigns over the pilot length for Local MMSE, Centralized and OTA."""
    out = {}
    for tau in taus:
        cfg = acceptance_config(drops=drops, pilot_mode="random", pilot_length=int(tau),
                                **overrides)
        out[int(tau)] = run_campaign(cfg, (LOCAL, CENT, OTA), progress=progress)
    return out


def convergence_iteration(curve, rel: float = 0.01) -> int:
    """First iteration (1-based) after which the curve stays within ``rel`` of its last value."""
    c = np.asarray(curve, dtype=float)
    outside = np.nonzero(np.abs(c - c[-1]) > rel * abs(c[-1]))[0]
    return 1 if outside.size == 0 else int(outside[-1]) + 2


def _within(x, target, tol) -> bool:
    return bool(abs(x - target) <= tol)


# ---------------------------------------------------------------- statistical

def check_convergence_gains(report: RateReport) -> CriterionResult:
    ota, loc = report.mean_curve(OTA), report.mean_curve(LOCAL)
    g5 = 100 * (ota[4] / loc[4] - 1)
    gc = 100 * (ota[-1] / loc[-1] - 1)
    ok = _within(g5, 55, 15) and _within(gc, 90, 15)
    return CriterionResult(1, "convergence gains", ok,
                           f"OTA vs Local {g5:+.1f} % at i=5, {gc:+.1f} % at i={report.length}",
                           "+55 % and +90 %, +/-15 pp")


def check_crossover(report: RateReport) -> CriterionResult:
    ota, cen = report.mean_curve(OTA), report.mean_curve(CENT)
    hit = np.nonzero(ota >= cen)[0]
    if hit.size == 0:
        return CriterionResult(2, "centralized crossover", False,
                               f"no crossing within {report.length} iterations "
                               f"(OTA max {ota.max():.1f} vs Centralized {cen[-1]:.1f})",
                               "i = 14 +/- 5")
    i = int(hit[0]) + 1
    return CriterionResult(2, "centralized crossover", _within(i, 14, 5), f"i = {i}",
                           "i = 14 +/- 5")


ORDERING = (CENT_IT, BACKHAUL, OTA, CENT, LOCAL)


def check_ordering(report: RateReport) -> CriterionResult:
    parts, ok = [], True
    for hi, lo in zip(ORDERING, ORDERING[1:]):
        d = report.final_rates(hi) - report.final_rates(lo)
        half = 1.96 * d.std(ddof=1) / math.sqrt(d.size) if d.size > 1 else 0.0
        stable = d.mean() - half >= 0
        ok &= bool(stable)
        parts.append(f"{hi}-{lo} {d.mean():+.1f}+/-{half:.1f}")
    return CriterionResult(3, "scheme ordering", ok, "; ".join(parts),
                           "every paired gap >= 0 with its 95 % CI")


def check_fairness(report: RateReport, threshold: float = 10.0) -> CriterionResult:
    p_ota = float(np.mean(report.per_ue(OTA) > threshold))
    p_cen = float(np.mean(report.per_ue(CENT) > threshold))
    ok = _within(p_ota, 0.98, 0.08) and _within(p_cen, 0.60, 0.10)
    return CriterionResult(4, "fairness CDF", ok,
                           f"P(rate>10) OTA {p_ota:.3f}, Centralized {p_cen:.3f}",
                           "0.98 +/- 0.08 and 0.60 +/- 0.10")


def check_overhead(report: RateReport) -> CriterionResult:
    eff = report.effective_curve(OTA, 1.0)
    i_opt = int(np.nanargmax(eff)) + 1
    i_conv = convergence_iteration(report.mean_curve(OTA))
    penalty = 100 * float(overhead_fraction(i_conv, 5.0, report.config))
    ok = _within(i_opt, 19, 4) and penalty < 5.0
    return CriterionResult(5, "overhead optimum", ok,
                           f"T=1 arg-max i = {i_opt}; T=5 penalty {penalty:.2f} % at i = {i_conv}",
                           "i = 19 +/- 4 and penalty < 5 %")


def check_pilot_contamination(sweep: dict[int, RateReport]) -> CriterionResult:
    taus = sorted(sweep)
    small = sweep[taus[0]]
    c, l = small.final_rates(CENT).mean(), small.final_rates(LOCAL).mean()
    ota = np.array([sweep[t].final_rates(OTA).mean() for t in taus])
    drops = int(np.sum(np.diff(ota) < 0))
    ok = bool(c < l) and drops <= 1
    return CriterionResult(6, "pilot contamination", ok,
                           f"tau={taus[0]}: Centralized {c:.1f} vs Local {l:.1f}; OTA over tau "
                           f"{[round(float(x), 1) for x in ota]} ({drops} decreases)",
                           "Centralized < Local at small tau, OTA increasing (<= 1 decrease)")


def check_power_compliance(report: RateReport, slack: float = 1e-9) -> tuple[bool, str]:
    worst_bs = max(max(v) for v in report.bs_power_ratio.values())
    worst_ue = max(max(v) for v in report.ue_power_ratio.values())
    ok = worst_bs <= 1 + slack and worst_ue <= 1 + slack
    return ok, f"max BS/UE power ratio {worst_bs:.6f}/{worst_ue:.6f}"


# ------------------------------------------------------------------ property

def _noiseless(**kw) -> ScenarioConfig:
    return ScenarioConfig(bs_noise_dbm=-math.inf, ue_noise_dbm=-math.inf, **kw)


def check_noiseless_equivalence(drop: int = 0) -> CriterionResult:
    """Noiseless OTA against perfect-CSI references.

    The trajectory match uses the default scenario. Convergence to the
    centralized solution uses a small network with more UEs than BS antennas
    so ``Phi`` has full rank and that solution is unique.
    """
    cfg = _noiseless(max_iter=30, step_size=ACCEPTANCE_STEP_SIZE)
    _, ch = draw_drop(cfg, drop)
    a = run_algorithm_4(ch, make_pilots(cfg), cfg, 0, keep_precoders=True)
    b = _perfect_distributed(ch, cfg, 0, True)
    traj = max(float(np.linalg.norm(x - y) / np.linalg.norm(y))
               for x, y in zip(a.precoders, b.precoders))

    small = _noiseless(num_bs=4, antennas_per_bs=2, num_ue=10, antennas_per_ue=2,
                       max_iter=300, step_size=0.5, precoder_tol=1e-24)
    _, ch = draw_drop(small, drop)
    finals = [run_algorithm_4(ch, make_pilots(small), small, 0, keep_precoders=True),
              _perfect_distributed(ch, small, 0, True)]
    gaps = []
    for tr in finals:
        W = tr.precoders[-1]
        V = pc.mmse_combiner_perfect(ch.H, W, small.sigma2_ue)
        Wc, _ = pc.centralized_precoder_perfect(ch.H, V, small.rho_bs, tol=1e-12)
        gaps.append(float(np.linalg.norm(W - Wc) / np.linalg.norm(Wc)))
    ok = traj <= 1e-8 and max(gaps) <= 1e-4
    return CriterionResult(7, "noiseless-oracle equivalence", ok,
                           f"trajectory {traj:.2e}; distance to centralized OTA {gaps[0]:.2e}, "
                           f"perfect {gaps[1]:.2e}", "<= 1e-8 and <= 1e-4")


def _random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    A = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return A @ A.conj().T


def check_schur_identity(instances: int = 100, seed: int = 8) -> CriterionResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        M = int(rng.integers(1, 7))
        K = int(rng.integers(1, 9))
        Phi = _random_psd(rng, 2 * M, int(rng.integers(1, 2 * M + 1)))
        R = rng.standard_normal((2 * M, K)) + 1j * rng.standard_normal((2 * M, K))
        lam = rng.uniform(0.1, 5.0, 2)
        a = pc.stacked_solution(Phi, R, lam, 2)
        b = pc.schur_two_bs_solution(Phi, R, lam)
        worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(a)))
    return CriterionResult(8, "two-BS Schur identity", worst <= 1e-10,
                           f"max relative difference {worst:.2e} over {instances} instances",
                           "<= 1e-10")


def fd_gradient(f, W, h: float = 1e-6) -> np.ndarray:
    """Central differences packed as ``df/dRe + 1j df/dIm``."""
    g = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        for unit in (1.0, 1j):
            E = np.zeros_like(W)
            E[idx] = unit * h
            d = (f(W + E) - f(W - E)) / (2 * h)
            g[idx] += d * unit
    return g


def check_kkt_suite(report: RateReport | None = None, instances: int = 5,
                    seed: int = 9) -> CriterionResult:
    rng = np.random.default_rng(seed)
    worst_kkt, worst_fd = 0.0, 0.0
    for n in range(instances):
        cfg = ScenarioConfig()
        _, ch = draw_drop(cfg, 1000 + n)
        H = ch.H
        W0 = pc.init_precoders(cfg.num_bs, cfg.antennas_per_bs, cfg.num_ue, cfg.rho_bs, rng)
        V = pc.mmse_combiner_perfect(H, W0, cfg.sigma2_ue)
        W, st = pc.centralized_precoder_perfect(H, V, cfg.rho_bs, tol=1e-12)
        h = al.effective_uplink(H, V)
        Phi, R = pc.phi_matrix(h), pc.aggregate(h)
        worst_kkt = max(worst_kkt, pc.kkt_residual(Phi, R, W, st.lam, cfg.num_bs),
                        st.power_residual if st.power_residual > 0 else 0.0)

        # small instance for the finite-difference check
        B, M, K, N = 2, 2, 3, 2
        Hs = (rng.standard_normal((B, K, M, N)) + 1j * rng.standard_normal((B, K, M, N))) / 2
        Vs = rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))
        Ws = rng.standard_normal((B, M, K)) + 1j * rng.standard_normal((B, M, K))
        lam = rng.uniform(0.1, 1.0, B)
        sig = 0.3

        def lagrangian(X):
            return (pc.weighted_sum_mse(Hs, X, Vs, sig)
                    + float(np.sum(lam * (pc.per_bs_power(X) - 1.0))))

        hs = al.effective_uplink(Hs, Vs)
        g = pc.split(pc.lagrangian_gradient(pc.phi_matrix(hs), pc.aggregate(hs), Ws, lam, B), B)
        fd = fd_gradient(lagrangian, Ws)
        worst_fd = max(worst_fd, float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
    ok = worst_kkt <= 1e-6 and worst_fd <= 1e-4
    measured = f"KKT residual {worst_kkt:.2e}, FD gradient {worst_fd:.2e}"
    if report is not None:
        p_ok, p_msg = check_power_compliance(report)
        ok &= p_ok
        measured += f", {p_msg}"
    return CriterionResult(9, "KKT and gradient suite", ok, measured,
                           "<= 1e-6, <= 1e-4, powers within budget in every iteration")


def check_ota_identity(instances: int = 100, seed: int = 10) -> CriterionResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in range(instances):
        B, M = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        K, N = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        if n % 2:
            pil = orthogonal_pilots(K, N, K * N + int(rng.integers(0, 3)))
        else:
            pil = random_pilots(K, N, int(rng.integers(N, 2 * K * N + 1)), rng)
        tau = pil.tau

        def cn(*shape):
            return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

        Y1, Y2, W = cn(B, M, tau), cn(B, M, tau), cn(B, M, K)
        b1, b2 = rng.uniform(0.1, 10.0, 2)
        sig = rng.uniform(0.0, 1.0, B)
        lam = rng.uniform(0.5, 5.0, B)
        closed = pc.ota_closed_form(Y1, Y2, pil, b1, b2, W, sig, lam)
        Phi = pc.estimated_phi_bb(Y1, b1, sig)
        h = al.ls_effective_channel(Y1, pil, b1)
        xi = pc.ota_cross_term(Y2, Y1, pil, b1, b2, W, sig)
        direct = np.linalg.solve(Phi + lam[:, None, None] * np.eye(M), h - xi)
        worst = max(worst, float(np.linalg.norm(closed - direct) / np.linalg.norm(direct)))
    return CriterionResult(10, "OTA closed-form identity", worst <= 1e-10,
                           f"max relative difference {worst:.2e} over {instances} instances",
                           "<= 1e-10")


def run_acceptance(drops: int = 200, sweep_drops: int = 100, progress=None,
                   report: RateReport | None = None,
                   sweep: dict[int, RateReport] | None = None) -> list[CriterionResult]:
    report = main_campaign(drops, progress) if report is None else report
    sweep = pilot_sweep(drops=sweep_drops, progress=progress) if sweep is None else sweep
    return [
        check_convergence_gains(report),
        check_crossover(report),
        check_ordering(report),
        check_fairness(report),
        check_overhead(report),
        check_pilot_contamination(sweep),
        check_noiseless_equivalence(),
        check_schur_identity(),
        check_kkt_suite(report),
        check_ota_identity(),
    ]
