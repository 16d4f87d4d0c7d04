"""Monte-Carlo campaigns: paired drops, per-iteration averages, persisted artifacts."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..orchestrator import AlgorithmId, IterationTrace, run
from ..pilots import make_pilots
from ..precoding import DualSolverError
from ..airlink import PowerViolation
from ..scenario import ScenarioConfig, draw_drop
from .metrics import effective_rate

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01
DEFAULT_ALGORITHMS = (
    AlgorithmId.LocalMMSE.value,
    AlgorithmId.Centralized.value,
    AlgorithmId.CentralizedIterative.value,
    AlgorithmId.DistributedBackhaul.value,
    AlgorithmId.DistributedOTA.value,
)


class CampaignError(RuntimeError):
    """Too many drops failed."""


def pilot_seed(master_seed: int, drop: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(drop), 1])


def noise_seed(master_seed: int, drop: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(drop), 2])


def run_drop(config: ScenarioConfig, drop: int, algorithms=DEFAULT_ALGORITHMS,
             keep_precoders: bool = False) -> dict[str, IterationTrace]:
    """All algorithms on one drop. They share the channels, the pilots and the noise seed."""
    _, channels = draw_drop(config, drop)
    pilots = make_pilots(config, pilot_seed(config.master_seed, drop))
    seed = noise_seed(config.master_seed, drop)
    return {AlgorithmId(getattr(a, "value", a)).value:
            run(a, channels, pilots, config, seed, keep_precoders) for a in algorithms}


def _pad(values, length: int) -> np.ndarray:
    """Hold the last value, so single-shot and early-stopped runs give full-length curves."""
    v = np.asarray(values, dtype=float)
    if v.size >= length:
        return v[:length]
    return np.concatenate([v, np.full(length - v.size, v[-1])])


@dataclass
class RateReport:
    """Per-drop curves of every algorithm, aligned on the iteration axis ``1..max_iter``."""

    config: ScenarioConfig
    algorithms: list[str]
    drops: list[int] = field(default_factory=list)
    curves: dict[str, list[np.ndarray]] = field(default_factory=dict)
    trained: dict[str, list[np.ndarray]] = field(default_factory=dict)
    per_ue_final: dict[str, list[np.ndarray]] = field(default_factory=dict)
    iterations_used: dict[str, list[int]] = field(default_factory=dict)
    bs_power_ratio: dict[str, list[float]] = field(default_factory=dict)
    ue_power_ratio: dict[str, list[float]] = field(default_factory=dict)
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.config.max_iter

    def add(self, drop: int, traces: dict[str, IterationTrace]):
        self.drops.append(drop)
        for alg, tr in traces.items():
            self.curves.setdefault(alg, []).append(_pad(tr.rates, self.length))
            self.trained.setdefault(alg, []).append(_pad(tr.trained_rates, self.length))
            self.per_ue_final.setdefault(alg, []).append(np.asarray(tr.per_ue[-1]))
            self.iterations_used.setdefault(alg, []).append(tr.iterations[-1])
            self.bs_power_ratio.setdefault(alg, []).append(max(tr.bs_power_ratio))
            self.ue_power_ratio.setdefault(alg, []).append(max(tr.ue_power_ratio))

    def matrix(self, alg: str) -> np.ndarray:
        """``(drops, max_iter)`` genie sum rates."""
        return np.vstack(self.curves[alg])

    def mean_curve(self, alg: str) -> np.ndarray:
        return self.matrix(alg).mean(axis=0)

    def ci95(self, alg: str) -> np.ndarray:
        m = self.matrix(alg)
        if m.shape[0] < 2:
            return np.zeros(m.shape[1])
        return 1.96 * m.std(axis=0, ddof=1) / math.sqrt(m.shape[0])

    def final_rates(self, alg: str) -> np.ndarray:
        return self.matrix(alg)[:, -1]

    def per_ue(self, alg: str) -> np.ndarray:
        return np.concatenate(self.per_ue_final[alg])

    def effective_curve(self, alg: str, T: float) -> np.ndarray:
        i = np.arange(1, self.length + 1)
        ok = i * self.config.symbols_per_iteration <= self.config.symbols_per_frame * T
        out = np.full(self.length, np.nan)
        out[ok] = effective_rate(self.mean_curve(alg)[ok], i[ok], T, self.config)
        return out

    def rows(self):
        for alg in self.algorithms:
            if alg not in self.curves:
                continue
            mean, ci = self.mean_curve(alg), self.ci95(alg)
            for i in range(self.length):
                yield {"algorithm": alg, "iteration": i + 1, "mean_rate": float(mean[i]),
                       "ci95": float(ci[i]), "drops": len(self.curves[alg])}

    def summary(self) -> dict:
        return {alg: {"final_mean_rate": float(self.final_rates(alg).mean()),
                      "final_ci95": float(self.ci95(alg)[-1]),
                      "drops": len(self.curves[alg])}
                for alg in self.algorithms if alg in self.curves}


_DROP_ERRORS = (DualSolverError, PowerViolation, np.linalg.LinAlgError, FloatingPointError)


def _safe_drop(args):
    config, drop, algorithms = args
    try:
        return drop, run_drop(config, drop, algorithms), None
    except _DROP_ERRORS as exc:
        return drop, None, exc


def run_campaign(config: ScenarioConfig, algorithms=DEFAULT_ALGORITHMS, drops=None,
                 progress=None, workers: int = 1) -> RateReport:
    """Paired Monte-Carlo over ``drops`` (default ``config.drops``) UE drops.

    A drop in which any algorithm raises a solver or power error is logged
    and excluded; more than 1 % failed drops abort the campaign. With
    ``workers > 1`` drops run in a process pool; results are reduced in drop
    order, so the report does not depend on the worker count.
    """
    algorithms = [AlgorithmId(getattr(a, "value", a)).value for a in algorithms]
    n = config.drops if drops is None else int(drops)
    report = RateReport(config=config, algorithms=algorithms)
    jobs = [(config, d, algorithms) for d in range(n)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_safe_drop, jobs, chunksize=max(1, n // (4 * workers)))
    else:
        pool, results = None, map(_safe_drop, jobs)
    try:
        for d, traces, exc in results:
            if exc is not None:
                log.warning("drop %d failed: %s", d, exc)
                report.failures.append((d, str(exc)))
                if len(report.failures) > MAX_FAILURE_FRACTION * n:
                    raise CampaignError(
                        f"{len(report.failures)} of {n} drops failed; last: {exc}") from exc
                continue
            report.add(d, traces)
            if progress is not None:
                progress(d + 1, n)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return report


def content_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_report(report: RateReport, out_dir, name: str = "rates") -> dict[str, Path]:
    """Write ``<name>.csv`` and ``<name>.manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["algorithm", "iteration", "mean_rate", "ci95",
                                                "drops"])
        writer.writeheader()
        writer.writerows(report.rows())
    inputs = {"config": report.config.to_dict(), "algorithms": report.algorithms,
              "drops": report.drops}
    manifest = {
        "config": report.config.to_dict(),
        "master_seed": report.config.master_seed,
        "algorithms": report.algorithms,
        "drops_requested": len(report.drops) + len(report.failures),
        "drops_completed": len(report.drops),
        "failures": [{"drop": d, "error": e} for d, e in report.failures],
        "summary": report.summary(),
        "input_hash": content_hash(inputs),
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
    man_path = out / f"{name}.manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2, default=str))
    return {"csv": csv_path, "manifest": man_path}
