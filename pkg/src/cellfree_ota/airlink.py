"""Over-the-air signaling phases (DL, UL-1, UL, UL-2) and LS estimators.

Array conventions used throughout the package:

* channels ``H``: ``(B, K, M, N)``
* precoders ``W``: ``(B, M, K)`` -- ``W[b, :, k]`` is ``w_{b,k}``; ``W.reshape(B*M, K)``
  is the aggregated precoding matrix
* combiners ``V``: ``(K, N)``
* BS receive signals: ``(B, M, tau)``; UE receive signals: ``(K, N, tau)``
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pilots import PilotBook

POWER_SLACK = 1e-9


class PowerViolation(RuntimeError):
    """A UE transmit signal exceeds its per-symbol power budget."""


@dataclass(frozen=True)
class PowerScaling:
    beta_ul1: float
    beta_ul2: float | None
    beta_ul: float


def complex_noise(rng: np.random.Generator, shape, var) -> np.ndarray:
    """Circularly-symmetric Gaussian samples; ``var`` broadcasts against ``shape``."""
    std = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def effective_uplink(H: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``h_{b,k} = H_{b,k} v_k`` as a ``(B, M, K)`` array."""
    return np.einsum("bkmn,kn->bmk", H, V)


def downlink_gains(H: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``G[k, :, j] = sum_b H_{b,k}^H w_{b,j}``, shape ``(K, N, K)``.

    The diagonal ``G[k, :, k]`` is the effective downlink channel ``g_k``.
    """
    return np.einsum("bkmn,bmj->knj", H.conj(), W)


def _check_ue_power(per_ue: np.ndarray, rho_ue: float | None, phase: str):
    if rho_ue is None:
        return
    worst = float(np.max(per_ue))
    if worst > rho_ue * (1 + POWER_SLACK):
        raise PowerViolation(f"{phase}: UE power {worst:.6g} mW exceeds {rho_ue:.6g} mW")


def ul1_phase(H, V, pilots: PilotBook, beta_ul1: float, noise_bs, rng, rho_ue=None):
    """Each UE sends ``sqrt(beta) v_k p_k^H``; returns ``Y_ul1`` of shape ``(B, M, tau)``."""
    _check_ue_power(beta_ul1 * np.sum(np.abs(V) ** 2, axis=1), rho_ue, "UL-1")
    h = effective_uplink(H, V)
    p = pilots.sequences
    Y = np.sqrt(beta_ul1) * np.einsum("bmk,kt->bmt", h, p.conj())
    return Y + complex_noise(rng, Y.shape, np.asarray(noise_bs)[:, None, None])


def ul_full_phase(H, pilots: PilotBook, rho_ue: float, noise_bs, rng):
    """Each UE sends its whole pilot matrix with ``beta_ul = rho_ue / N``."""
    N = H.shape[-1]
    beta = rho_ue / N
    Y = np.sqrt(beta) * np.einsum("bkmn,ktn->bmt", H, pilots.P.conj())
    return Y + complex_noise(rng, Y.shape, np.asarray(noise_bs)[:, None, None])


def dl_phase(H, W, pilots: PilotBook, noise_ue, rng):
    """Each BS sends ``sum_k w_{b,k} p_k^H``; returns ``Y_dl`` of shape ``(K, N, tau)``."""
    G = downlink_gains(H, W)
    Y = G @ pilots.sequences.conj()
    return Y + complex_noise(rng, Y.shape, np.asarray(noise_ue)[:, None, None])


def ul2_payload(V, Y_dl):
    """UE-side combined signal ``v_k^H Y_k^DL``, shape ``(K, tau)``."""
    return np.einsum("kn,knt->kt", V.conj(), Y_dl)


def ul2_phase(H, V, Y_dl, beta_ul2: float, noise_bs, rng, rho_ue=None):
    """Each UE re-sends ``sqrt(beta) v_k v_k^H Y_k^DL``; returns ``Y_ul2`` ``(B, M, tau)``."""
    s = ul2_payload(V, Y_dl)
    tau = Y_dl.shape[-1]
    per_ue = beta_ul2 * np.sum(np.abs(V) ** 2, axis=1) * np.sum(np.abs(s) ** 2, axis=1) / tau
    _check_ue_power(per_ue, rho_ue, "UL-2")
    h = effective_uplink(H, V)
    Y = np.sqrt(beta_ul2) * np.einsum("bmk,kt->bmt", h, s)
    return Y + complex_noise(rng, Y.shape, np.asarray(noise_bs)[:, None, None])


def compute_power_scaling(V, rho_ue: float, N: int, Y_dl=None) -> PowerScaling:
    """Common UE scale factors set by the strongest transmitter (max rule)."""
    v_pow = np.sum(np.abs(V) ** 2, axis=1)
    if not np.any(v_pow > 0):
        raise ValueError("all combiners are zero; UL power scaling undefined")
    beta_ul1 = rho_ue / float(np.max(v_pow))
    beta_ul2 = None
    if Y_dl is not None:
        tau = Y_dl.shape[-1]
        s = ul2_payload(V, Y_dl)
        x2 = v_pow * np.sum(np.abs(s) ** 2, axis=1)
        if not np.any(x2 > 0):
            raise ValueError("UL-2 payload is zero; power scaling undefined")
        beta_ul2 = rho_ue * tau / float(np.max(x2))
    return PowerScaling(beta_ul1=beta_ul1, beta_ul2=beta_ul2, beta_ul=rho_ue / N)


def ue_transmit_powers(V, scaling: PowerScaling, Y_dl=None) -> dict[str, np.ndarray]:
    """Per-UE per-symbol transmit powers in each uplink phase (for compliance logs)."""
    v_pow = np.sum(np.abs(V) ** 2, axis=1)
    out = {"ul1": scaling.beta_ul1 * v_pow}
    if Y_dl is not None and scaling.beta_ul2 is not None:
        tau = Y_dl.shape[-1]
        s = ul2_payload(V, Y_dl)
        out["ul2"] = scaling.beta_ul2 * v_pow * np.sum(np.abs(s) ** 2, axis=1) / tau
    return out


def ls_effective_channel(Y_ul1, pilots: PilotBook, beta_ul1: float) -> np.ndarray:
    """``h_hat_{b,k} = Y_b p_k / (tau sqrt(beta))`` for all ``b, k``: ``(B, M, K)``."""
    return Y_ul1 @ pilots.stacked / (pilots.tau * np.sqrt(beta_ul1))


def ls_full_channel(Y_ul, pilots: PilotBook, rho_ue: float) -> np.ndarray:
    """``H_hat_{b,k} = Y_b P_k / (tau sqrt(beta_ul))``, shape ``(B, K, M, N)``."""
    N = pilots.P.shape[-1]
    beta = rho_ue / N
    return np.einsum("bmt,ktn->bkmn", Y_ul, pilots.P) / (pilots.tau * np.sqrt(beta))


def ls_effective_dl(Y_dl, pilots: PilotBook) -> np.ndarray:
    """``g_hat_k = Y_k p_k / tau``, shape ``(K, N)``."""
    return np.einsum("knt,kt->kn", Y_dl, pilots.sequences) / pilots.tau
