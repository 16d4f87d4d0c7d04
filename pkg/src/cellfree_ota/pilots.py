"""Pilot sequences ``p_k`` and pilot matrices ``P_k``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ConfigError, ScenarioConfig


@dataclass(frozen=True)
class PilotBook:
    """Pilot matrices ``P`` of shape ``(K, tau, N)``; ``p_k`` is column 0 of ``P_k``."""

    P: np.ndarray
    mode: str

    @property
    def tau(self) -> int:
        return self.P.shape[1]

    @property
    def sequences(self) -> np.ndarray:
        """``(K, tau)`` array whose row ``k`` is ``p_k``."""
        return self.P[:, :, 0]

    @property
    def stacked(self) -> np.ndarray:
        """``(tau, K)`` matrix ``[p_1, ..., p_K]``."""
        return self.P[:, :, 0].T


def orthogonal_pilots(K: int, N: int, tau: int) -> PilotBook:
    """Columns of a sqrt(tau)-scaled DFT matrix.

    Column ``n*K + k`` goes to antenna ``n`` of UE ``k``, so the sequences
    ``p_k`` occupy the first ``K`` DFT columns.
    """
    if tau < K * N:
        raise ConfigError(f"orthogonal pilots need tau >= K*N = {K * N}, got {tau}")
    t = np.arange(tau)
    F = np.exp(-2j * np.pi * np.outer(t, t) / tau)  # unit-modulus entries
    P = np.empty((K, tau, N), dtype=complex)
    for k in range(K):
        for n in range(N):
            P[k, :, n] = F[:, n * K + k]
    return PilotBook(P=P, mode="orthogonal")


def random_pilots(K: int, N: int, tau: int, seed) -> PilotBook:
    """Independent Gaussian pilots, orthonormalised per UE and scaled by sqrt(tau)."""
    if tau < N:
        raise ConfigError(f"random pilots need tau >= N = {N}, got {tau}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    G = (rng.standard_normal((K, tau, N)) + 1j * rng.standard_normal((K, tau, N))) / np.sqrt(2)
    Q, _ = np.linalg.qr(G)
    return PilotBook(P=np.sqrt(tau) * Q, mode="random")


def make_pilots(config: ScenarioConfig, seed=None) -> PilotBook:
    K, N, tau = config.num_ue, config.antennas_per_ue, config.tau
    if config.pilot_mode == "orthogonal":
        return orthogonal_pilots(K, N, tau)
    return random_pilots(K, N, tau, seed)
