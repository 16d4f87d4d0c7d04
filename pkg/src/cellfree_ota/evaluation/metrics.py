"""SINR, rate and overhead metrics."""
from __future__ import annotations

import numpy as np

from ..airlink import downlink_gains
from ..scenario import ScenarioConfig


def sinr(H, W, V, sigma2_ue) -> np.ndarray:
    """Per-UE SINR for precoders ``W`` and combiners ``V``; zero combiners give 0."""
    G = downlink_gains(H, W)
    c = np.abs(np.einsum("kn,knj->kj", V.conj(), G)) ** 2
    K = c.shape[0]
    sig = np.broadcast_to(np.asarray(sigma2_ue, dtype=float), (K,))
    desired = np.diag(c)
    denom = c.sum(axis=1) - desired + sig * np.sum(np.abs(V) ** 2, axis=1)
    out = np.zeros(K)
    ok = denom > 0
    out[ok] = desired[ok] / denom[ok]
    # noiseless, interference-free links with a non-zero combiner
    out[~ok & (desired > 0)] = np.inf
    return out


def per_ue_rates(H, W, V, sigma2_ue) -> np.ndarray:
    return np.log2(1.0 + sinr(H, W, V, sigma2_ue))


def sum_rate(H, W, V, sigma2_ue) -> float:
    return float(per_ue_rates(H, W, V, sigma2_ue).sum())


def genie_rate(H, W, sigma2_ue) -> float:
    """Sum rate with MMSE combiners computed from the true channels for ``W``."""
    from ..precoding import mmse_combiner_perfect

    if not np.any(W):
        return 0.0
    return sum_rate(H, W, mmse_combiner_perfect(H, W, sigma2_ue), sigma2_ue)


def overhead_fraction(i, T, config: ScenarioConfig | None = None,
                      symbols_per_iteration=None, symbols_per_frame=None):
    if config is not None:
        symbols_per_iteration = symbols_per_iteration or config.symbols_per_iteration
        symbols_per_frame = symbols_per_frame or config.symbols_per_frame
    symbols_per_iteration = 4.67 if symbols_per_iteration is None else symbols_per_iteration
    symbols_per_frame = 1120.0 if symbols_per_frame is None else symbols_per_frame
    return symbols_per_iteration * np.asarray(i, dtype=float) / (symbols_per_frame * T)


def effective_rate(R, i, T, config: ScenarioConfig | None = None):
    """Rate discounted by the training overhead of ``i`` iterations in a ``T``-frame block."""
    frac = overhead_fraction(i, T, config)
    if np.any(frac > 1.0):
        raise ValueError("training overhead exceeds the scheduling block")
    out = (1.0 - frac) * np.asarray(R, dtype=float)
    return float(out) if out.ndim == 0 else out


def per_ue_cdf(rates, grid=None):
    """Empirical CDF of per-UE rates; returns ``(grid, F)`` with ``F`` on ``grid``."""
    x = np.sort(np.ravel(np.asarray(rates, dtype=float)))
    if x.size == 0:
        raise ValueError("no rates")
    if grid is None:
        grid = x
    grid = np.asarray(grid, dtype=float)
    F = np.searchsorted(x, grid, side="right") / x.size
    return grid, F


def prob_rate_above(rates, threshold: float) -> float:
    x = np.ravel(np.asarray(rates, dtype=float))
    return float(np.mean(x > threshold))
