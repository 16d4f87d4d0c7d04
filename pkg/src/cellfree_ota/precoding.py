"""Combiner and precoder updates for weighted sum-MSE minimisation.

Every per-BS precoder update has the form ``w_{b,k} = (A_b + lam_b I)^{-1} r_{b,k}``
with ``A_b`` an (exact or estimated) local correlation matrix. Imperfect-CSI
updates are evaluated in the same normalised units as their perfect-CSI
counterparts, i.e. after dividing the trained matrices by ``tau * beta_ul1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .airlink import downlink_gains, effective_uplink
from .pilots import PilotBook

FLOOR_REL = 1e-9
RIDGE_COND = 1e12
RIDGE_REL = 1e-12
POWER_SLACK = 1e-9
# near-singular (zero-forcing) limits only resolve powers to this accuracy;
# the final block scaling removes the remainder
POWER_FEAS = 1e-4
# relative duality gaps below this are rounding noise
GAP_FLOOR = 1e-11


class DualSolverError(RuntimeError):
    """Dual variable search failed (bracket or sweep budget exhausted)."""


@dataclass
class DualState:
    lam: np.ndarray
    steps: int = 0
    power_residual: float = 0.0
    slackness: float = 0.0
    floor: np.ndarray | None = field(default=None, repr=False)


# --------------------------------------------------------------------------
# small helpers


def per_bs_power(W: np.ndarray) -> np.ndarray:
    """``sum_k ||w_{b,k}||^2`` for every BS, shape ``(B,)``."""
    return np.sum(np.abs(W) ** 2, axis=(1, 2))


def aggregate(W: np.ndarray) -> np.ndarray:
    B, M, K = W.shape
    return W.reshape(B * M, K)


def split(Wagg: np.ndarray, num_bs: int) -> np.ndarray:
    n, K = Wagg.shape
    return Wagg.reshape(num_bs, n // num_bs, K)


def init_precoders(B: int, M: int, K: int, rho_bs: float, rng) -> np.ndarray:
    """Random Gaussian directions, each ``w_{b,k}`` with power ``rho_bs / K``."""
    W = rng.standard_normal((B, M, K)) + 1j * rng.standard_normal((B, M, K))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    return W * np.sqrt(rho_bs / K)


def damped_update(w_prev, w_new, alpha: float):
    return (1.0 - alpha) * w_prev + alpha * w_new


def weighted_sum_mse(H, W, V, sigma2_ue, weights=None) -> float:
    """``sum_k omega_k MSE_k`` straight from the per-UE MSE definition."""
    G = downlink_gains(H, W)
    c = np.einsum("kn,knj->kj", V.conj(), G)  # c[k, j] = v_k^H sum_b H_bk^H w_bj
    K = c.shape[0]
    sig = np.broadcast_to(np.asarray(sigma2_ue, dtype=float), (K,))
    mse = (np.sum(np.abs(c) ** 2, axis=1) - 2 * np.real(np.diag(c))
           + sig * np.sum(np.abs(V) ** 2, axis=1) + 1.0)
    w = np.ones(K) if weights is None else np.asarray(weights)
    return float(np.sum(w * mse))


def phi_matrix(h: np.ndarray, weights=None) -> np.ndarray:
    """``Phi = sum_k omega_k h_k h_k^H`` from effective channels ``h`` ``(B, M, K)``."""
    hagg = aggregate(h)
    w = np.ones(hagg.shape[1]) if weights is None else np.asarray(weights)
    return (hagg * w) @ hagg.conj().T


def phi_diag_blocks(h: np.ndarray, weights=None) -> np.ndarray:
    """``Phi_bb`` for every BS, shape ``(B, M, M)``."""
    w = np.ones(h.shape[2]) if weights is None else np.asarray(weights)
    return np.einsum("bmk,bnk->bmn", h * w, h.conj())


def cross_terms(h: np.ndarray, W: np.ndarray, weights=None) -> np.ndarray:
    """Exact ``xi_{b,k} = sum_{b' != b} Phi_{b b'} w_{b',k}``, shape ``(B, M, K)``."""
    B = h.shape[0]
    full = split(phi_matrix(h, weights) @ aggregate(W), B)
    return full - phi_diag_blocks(h, weights) @ W


# --------------------------------------------------------------------------
# combiners


def mmse_combiner_perfect(H, W, sigma2_ue) -> np.ndarray:
    """``v_k = (Psi_k + sigma_k^2 I)^{-1} g_k`` for all UEs, shape ``(K, N)``."""
    G = downlink_gains(H, W)
    K, N, _ = G.shape
    Psi = G @ G.conj().transpose(0, 2, 1)
    sig = np.broadcast_to(np.asarray(sigma2_ue, dtype=float), (K,))
    A = Psi + sig[:, None, None] * np.eye(N)
    g = G[np.arange(K), :, np.arange(K)]
    return _solve_psd(A, g)


def mmse_combiner_trained(Y_dl, pilots: PilotBook) -> np.ndarray:
    """``v_k = (Y_k Y_k^H)^{-1} Y_k p_k`` computed from the DL receive signal only."""
    gram = Y_dl @ Y_dl.conj().transpose(0, 2, 1)
    rhs = np.einsum("knt,kt->kn", Y_dl, pilots.sequences)
    return _solve_psd(gram, rhs)


def _solve_psd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched ``A x = b`` with a small ridge on ill-conditioned matrices."""
    N = A.shape[-1]
    ev = np.linalg.eigvalsh(A)
    top = np.maximum(ev[:, -1], 0.0)
    bad = (ev[:, 0] <= top / RIDGE_COND)
    if np.any(bad):
        A = A.copy()
        tr = np.real(np.trace(A, axis1=1, axis2=2))
        ridge = np.where(bad, RIDGE_REL * np.maximum(tr, np.finfo(float).tiny) / N, 0.0)
        A += ridge[:, None, None] * np.eye(N)
    return np.linalg.solve(A, b[..., None])[..., 0]


# --------------------------------------------------------------------------
# dual variables


def solve_dual_bisection(power_fn, rho: float, lam_floor=0.0, tol: float = 1e-6,
                         max_steps: int = 50, lam_start=1.0, max_expand: int = 400):
    """Smallest ``lam >= max(lam_floor, 0)`` with ``power_fn(lam) <= rho``.

    Works elementwise on arrays of independent duals (one per BS). Returns
    ``(lam, steps)``. Inactive constraints give ``lam = max(lam_floor, 0)``
    exactly; active ones end on the feasible side of the root with
    ``rho (1 - tol) <= power <= rho``, or at the feasible bracket end once
    ``max_steps`` bisections are spent.
    """
    lo = np.maximum(np.atleast_1d(np.asarray(lam_floor, dtype=float)), 0.0)
    p_lo = np.atleast_1d(power_fn(lo))
    lo = np.broadcast_to(lo, p_lo.shape).copy()
    lam = lo.copy()
    active = p_lo > rho
    if not np.any(active):
        return lam, 0

    start = np.broadcast_to(np.atleast_1d(np.asarray(lam_start, dtype=float)), lo.shape)
    step = np.where(active, np.maximum(start, np.finfo(float).tiny), 0.0)
    hi = lo + step
    p_hi = np.atleast_1d(power_fn(hi))
    n_expand = 0
    while np.any(active & (p_hi > rho)):
        grow = active & (p_hi > rho)
        lo = np.where(grow, hi, lo)
        p_lo = np.where(grow, p_hi, p_lo)
        step = np.where(grow, 2.0 * step, step)
        hi = np.where(grow, hi + step, hi)
        p_hi = np.atleast_1d(power_fn(hi))
        n_expand += 1
        if n_expand > max_expand:
            raise DualSolverError("dual bracket expansion exceeded its budget")

    if np.any(p_lo[active] < p_hi[active]):
        raise DualSolverError("power function is not monotone on the dual bracket")

    done = ~active | (p_hi >= rho * (1 - tol))
    steps = 0
    while not np.all(done) and steps < max_steps:
        mid = 0.5 * (lo + hi)
        p_mid = np.atleast_1d(power_fn(mid))
        above = p_mid > rho
        upd = ~done
        lo = np.where(upd & above, mid, lo)
        hi = np.where(upd & ~above, mid, hi)
        p_hi = np.where(upd & ~above, p_mid, p_hi)
        done = done | (upd & ~above & (p_mid >= rho * (1 - tol)))
        steps += 1
    lam = np.where(active, hi, lam)
    return lam, steps


def _eig_power_fn(d: np.ndarray, c: np.ndarray):
    """``lam -> sum_m c_m / (d_m + lam)^2`` per row (one row per BS)."""
    def power(lam):
        lam = np.asarray(lam, dtype=float)
        return np.sum(c / (d + lam[..., None]) ** 2, axis=-1)
    return power


def regularized_local_solve(A: np.ndarray, R: np.ndarray, rho: float, tol: float = 1e-6,
                            max_steps: int = 50):
    """Per-BS ``W_b = (A_b + lam_b I)^{-1} R_b`` with ``lam_b`` set by the power budget.

    ``A`` is ``(B, M, M)`` Hermitian (possibly indefinite after noise-bias
    removal), ``R`` is ``(B, M, K)``. ``lam_b`` is floored so the smallest
    eigenvalue of ``A_b + lam_b I`` is at least ``1e-9 * |tr A_b| / M``.
    """
    A = 0.5 * (A + A.conj().transpose(0, 2, 1))
    d, U = np.linalg.eigh(A)
    M = A.shape[-1]
    scale = np.abs(d).sum(axis=1) / M
    scale = np.where(scale > 0, scale, 1.0)
    floor = np.maximum(0.0, FLOOR_REL * scale - d[:, 0])
    q = U.conj().transpose(0, 2, 1) @ R  # (B, M, K)
    c = np.sum(np.abs(q) ** 2, axis=2)
    lam, steps = solve_dual_bisection(_eig_power_fn(d, c), rho, floor, tol, max_steps,
                                      lam_start=scale)
    W = U @ (q / (d + lam[:, None])[:, :, None])
    return W, DualState(lam=lam, steps=steps, floor=floor,
                        power_residual=float(np.max(per_bs_power(W)) / rho - 1.0))


# --------------------------------------------------------------------------
# distributed updates


def distributed_precoder_step_perfect(H, V, xi, rho_bs: float, weights=None,
                                      tol: float = 1e-6, max_steps: int = 50):
    """``w_{b,k} = (Phi_bb + lam_b I)^{-1} (omega_k h_{b,k} - xi_{b,k})`` for every BS."""
    h = effective_uplink(H, V)
    w = np.ones(h.shape[2]) if weights is None else np.asarray(weights)
    return regularized_local_solve(phi_diag_blocks(h, weights), h * w - xi, rho_bs, tol, max_steps)


def estimated_phi_bb(Y_ul1, beta_ul1: float, sigma2_bs) -> np.ndarray:
    """``Y_b Y_b^H / (tau beta) - sigma_b^2 / beta I``: bias-free estimate of ``Phi_bb``."""
    B, M, tau = Y_ul1.shape
    gram = Y_ul1 @ Y_ul1.conj().transpose(0, 2, 1)
    sig = np.broadcast_to(np.asarray(sigma2_bs, dtype=float), (B,))
    return (gram - tau * sig[:, None, None] * np.eye(M)) / (tau * beta_ul1)


def backhaul_terms(Y_ul1, W, beta_ul1: float) -> np.ndarray:
    """Terms ``(Y_b^UL-1)^H w_{b,k} / sqrt(beta)`` each BS shares, shape ``(B, tau, K)``."""
    return Y_ul1.conj().transpose(0, 2, 1) @ W / np.sqrt(beta_ul1)


def gather_backhaul(terms: np.ndarray) -> np.ndarray:
    """For each BS, the sum of the terms received from all the other BSs."""
    return terms.sum(axis=0, keepdims=True) - terms


def distributed_precoder_step_backhaul(Y_ul1, pilots: PilotBook, beta_ul1: float, incoming,
                                       sigma2_bs, rho_bs: float, tol: float = 1e-6,
                                       max_steps: int = 50):
    """Local update from UL-1 signals plus cross terms received over the backhaul.

    ``incoming[b]`` (``(tau, K)``) is the sum over the other BSs of their
    shared terms. Zero ``incoming`` gives local MMSE precoding from training.
    """
    tau = pilots.tau
    A = estimated_phi_bb(Y_ul1, beta_ul1, sigma2_bs)
    R = Y_ul1 @ (pilots.stacked[None] - incoming) / (tau * np.sqrt(beta_ul1))
    return regularized_local_solve(A, R, rho_bs, tol, max_steps)


def ota_cross_term(Y_ul2, Y_ul1, pilots: PilotBook, beta_ul1: float, beta_ul2: float,
                   W_prev, sigma2_bs) -> np.ndarray:
    """Cross terms recovered from the two uplink resources, shape ``(B, M, K)``.

    The UL-2 correlation estimates ``sum_b' Phi_{b b'} w_{b',k}``; the local
    part ``Phi_bb w_{b,k}`` (previous-iteration precoder) is removed using the
    bias-corrected UL-1 Gram matrix.
    """
    B, M, tau = Y_ul1.shape
    P = pilots.stacked
    sig = np.broadcast_to(np.asarray(sigma2_bs, dtype=float), (B,))
    gram = Y_ul1 @ Y_ul1.conj().transpose(0, 2, 1) - tau * sig[:, None, None] * np.eye(M)
    return (Y_ul2 @ P / np.sqrt(beta_ul2) - gram @ W_prev / beta_ul1) / tau


def _ota_system(Y_ul1, Y_ul2, pilots, beta_ul1, beta_ul2, W_prev, sigma2_bs):
    """Matrix and right-hand side of the OTA closed form, un-normalised."""
    B, M, tau = Y_ul1.shape
    P = pilots.stacked
    sig = np.broadcast_to(np.asarray(sigma2_bs, dtype=float), (B,))
    gram = Y_ul1 @ Y_ul1.conj().transpose(0, 2, 1)
    A = gram - tau * sig[:, None, None] * np.eye(M)
    rhs = (Y_ul1 @ (np.sqrt(beta_ul1) * P[None] + Y_ul1.conj().transpose(0, 2, 1) @ W_prev)
           - beta_ul1 / np.sqrt(beta_ul2) * (Y_ul2 @ P)
           - tau * sig[:, None, None] * W_prev)
    return A, rhs


def ota_closed_form(Y_ul1, Y_ul2, pilots, beta_ul1, beta_ul2, W_prev, sigma2_bs, lam):
    """OTA precoder for given duals:
    ``(Y1 Y1^H + tau (beta1 lam - sigma^2) I)^{-1} (Y1 (sqrt(beta1) p_k + Y1^H w_k)
    - beta1 / sqrt(beta2) Y2 p_k - tau sigma^2 w_k)``.
    """
    A, rhs = _ota_system(Y_ul1, Y_ul2, pilots, beta_ul1, beta_ul2, W_prev, sigma2_bs)
    tau = pilots.tau
    lam = np.asarray(lam, dtype=float)
    M = A.shape[-1]
    return np.linalg.solve(A + (tau * beta_ul1 * lam)[:, None, None] * np.eye(M), rhs)


def distributed_precoder_step_ota(Y_ul1, Y_ul2, pilots: PilotBook, beta_ul1: float,
                                  beta_ul2: float, W_prev, sigma2_bs, rho_bs: float,
                                  tol: float = 1e-6, max_steps: int = 50):
    """Local update using only BS ``b``'s own UL-1/UL-2 signals and its previous precoders."""
    A, rhs = _ota_system(Y_ul1, Y_ul2, pilots, beta_ul1, beta_ul2, W_prev, sigma2_bs)
    scale = pilots.tau * beta_ul1
    return regularized_local_solve(A / scale, rhs / scale, rho_bs, tol, max_steps)


# --------------------------------------------------------------------------
# centralized updates


def solve_coupled_duals(Phi: np.ndarray, R: np.ndarray, num_bs: int, rho: float,
                        tol: float = 1e-6, max_sweeps: int = 500, max_steps: int = 50,
                        lam0=None, method: str = "newton"):
    """Per-BS duals of ``W = (Phi + sum_b lam_b E_b^H E_b)^{-1} R``.

    ``method="newton"`` maximises the concave dual function by projected
    Newton steps (see :func:`solve_coupled_duals_factored`); ``Phi`` is
    factored as ``F F^H - s I`` with ``s`` its most negative eigenvalue and
    the part of ``R`` outside the range of ``F`` is dropped. ``method="cyclic"``
    runs per-BS bisection sweeps on the Schur complements. Both return
    ``(W, DualState)`` with ``W`` of shape ``(B, M, K)``.
    """
    if method == "cyclic":
        return _coupled_duals_cyclic(Phi, R, num_bs, rho, tol, max_sweeps, max_steps, lam0)
    if method != "newton":
        raise ValueError(f"unknown dual method {method!r}")
    Phi = 0.5 * (Phi + Phi.conj().T)
    d, U = np.linalg.eigh(Phi)
    shift = max(0.0, -float(d[0]))
    e = d + shift
    keep = e > 1e-13 * max(float(e[-1]), np.finfo(float).tiny)
    F = U[:, keep] * np.sqrt(e[keep])
    C = (U[:, keep].conj().T @ R) / np.sqrt(e[keep])[:, None]
    return solve_coupled_duals_factored(F, C, num_bs, rho, shift, tol, max_sweeps, lam0)


def solve_coupled_duals_factored(F: np.ndarray, C: np.ndarray, num_bs: int, rho: float,
                                 shift=0.0, tol: float = 1e-6, max_iter: int = 500,
                                 lam0=None):
    """Coupled duals for ``Phi = F F^H - Diag(shift_b I)`` and ``R = F C``.

    With ``mu_b = lam_b - shift_b > 0`` the solution is evaluated through the
    push-through identity ``W = Mu^{-1} F (I + F^H Mu^{-1} F)^{-1} C``, which
    stays accurate when some duals approach zero (the zero-forcing limit where
    ``Phi`` alone is singular). The concave dual is maximised by projected
    Newton steps with ``lam_b >= shift_b + 1e-9 * tr(F_b F_b^H) / M``. Stops
    when every power is within budget and the gap
    ``sum_b (lam_b - floor_b) |power_b - rho|`` is below ``tol`` relative.
    """
    n, r = F.shape
    M = n // num_bs
    K = C.shape[1]
    F4 = F.reshape(num_bs, M, r)
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (num_bs,)).copy()
    scale = np.sum(np.abs(F4) ** 2, axis=(1, 2)) / M
    scale = np.where(scale > 0, scale, 1.0)
    lb = shift + FLOOR_REL * scale
    eye_r = np.eye(r)

    def evaluate(lam):
        mu = lam - shift
        Fm = F4 / mu[:, None, None]
        G = eye_r + np.einsum("bmr,bms->rs", F4.conj(), Fm)
        W3 = np.einsum("bmr,rk->bmk", Fm, np.linalg.solve(G, C))
        p = np.sum(np.abs(W3) ** 2, axis=(1, 2))
        return G, Fm, W3, p

    def jacobian(G, Fm, W3, p, lam):
        # d power_c / d lam_b = -2 Re tr(W_c^H [A^{-1}]_{cb} W_b)
        X = np.einsum("bmr,bmk->brk", Fm.conj(), W3)
        GX = np.linalg.solve(G, X.transpose(1, 0, 2).reshape(r, num_bs * K))
        GX = GX.reshape(r, num_bs, K).transpose(1, 0, 2)
        cross = np.real(np.einsum("crk,brk->cb", X.conj(), GX))
        return -2.0 * (np.diag(p / (lam - shift)) - cross)

    if lam0 is None:
        blocks = np.einsum("bmr,bnr->bmn", F4, F4.conj()) - shift[:, None, None] * np.eye(M)
        R4 = np.einsum("bmr,rk->bmk", F4, C)
        lam = regularized_local_solve(blocks, R4, rho, tol)[1].lam
    else:
        lam = np.array(lam0, dtype=float)
    lam = np.maximum(lam, lb)
    cur = evaluate(lam)
    ref = max(float(np.real(np.einsum("rk,bmr,bmk->", C.conj(), F4.conj(), cur[2]))),
              np.finfo(float).tiny)

    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        G, Fm, W3, p = cur
        grad = p - rho
        gap = float(np.sum((lam - lb) * np.abs(grad)))
        if np.all(p <= rho * (1 + max(tol, POWER_FEAS))) and gap <= max(tol, GAP_FLOOR) * ref:
            converged = True
            break
        J = jacobian(G, Fm, W3, p, lam)
        at_lb = lam <= lb * (1 + 1e-9)
        free = ~(at_lb & (grad <= 0))
        d = np.zeros(num_bs)
        for _ in range(num_bs):
            Jf = -J[np.ix_(free, free)]
            ridge = 1e-13 * max(float(np.max(np.diag(Jf), initial=0.0)), np.finfo(float).tiny)
            d[:] = 0.0
            d[free] = np.linalg.solve(Jf + ridge * np.eye(Jf.shape[0]), grad[free])
            blocked = free & at_lb & (d < 0)
            if not np.any(blocked):
                break
            free &= ~blocked
        accepted = False
        # projected search along Newton, then along a diagonally scaled gradient
        for direction in (d, grad / np.maximum(-np.diag(J), np.finfo(float).tiny)):
            t = 1.0
            while t > 1e-14 and not accepted:
                trial = np.maximum(lam + t * direction, lb)
                step = trial - lam
                if not np.any(step):
                    break
                nxt = evaluate(trial)
                # the concave dual increases along the whole segment iff its
                # derivative at the far end still points forward
                if float((nxt[3] - rho) @ step) >= 0.0:
                    lam, cur, accepted = trial, nxt, True
                t *= 0.5
            if accepted:
                break
        if not accepted:
            break
    p = cur[3]
    gap = float(np.sum((lam - lb) * np.abs(p - rho)))
    if not converged and not (np.all(p <= rho * (1 + 10 * max(tol, POWER_FEAS)))
                              and gap <= 10 * max(tol, GAP_FLOOR) * ref):
        raise DualSolverError(
            f"coupled duals not converged after {it} Newton steps; "
            f"max power ratio {np.max(p) / rho:.6g}, relative duality gap {gap / ref:.3g}")
    return _clip_and_state(cur[2].copy(), lam, rho, it, lb)


def _clip_and_state(W, lam, rho, steps, floor):
    pw = per_bs_power(W)
    # clip the last solver tolerance so the budget holds strictly
    over = pw > rho
    if np.any(over):
        W[over] *= np.sqrt(rho / pw[over])[:, None, None]
        pw = per_bs_power(W)
    return W, DualState(lam=lam, steps=steps, floor=floor,
                        power_residual=float(np.max(pw) / rho - 1.0),
                        slackness=float(np.max(np.abs((lam - floor) * (pw - rho))) / rho))


def _coupled_duals_cyclic(Phi, R, num_bs, rho, tol=1e-6, max_sweeps=500, max_steps=50,
                          lam0=None):
    """Cyclic per-BS bisection on the duals.

    One coordinate at a time: with the other duals fixed, block ``b`` of the
    solution is ``(S_b + lam_b I)^{-1} r_b`` with ``S_b`` the Schur complement,
    so its power is a monotone scalar function of ``lam_b``. The inverse is
    kept current with rank-``M`` Woodbury updates and refreshed every sweep.
    """
    n = Phi.shape[0]
    M = n // num_bs
    Phi = 0.5 * (Phi + Phi.conj().T)
    blocks = [slice(b * M, (b + 1) * M) for b in range(num_bs)]
    scale = np.array([abs(np.real(np.trace(Phi[s, s]))) / M for s in blocks])
    scale = np.where(scale > 0, scale, 1.0)

    if lam0 is None:
        dmin = float(np.linalg.eigvalsh(Phi)[0])
        lam = np.maximum(0.0, FLOOR_REL * scale - dmin)
    else:
        lam = np.array(lam0, dtype=float)
    floor = np.zeros(num_bs)
    eye = np.eye(M)

    def assemble():
        A = Phi.copy()
        A[np.diag_indices(n)] += np.repeat(lam, M)
        return A

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        A = assemble()
        try:
            Ainv = np.linalg.inv(A)
        except np.linalg.LinAlgError as exc:
            raise DualSolverError("regularised Phi is singular") from exc
        Wc = Ainv @ R
        changed = False
        for b, s in enumerate(blocks):
            G = 0.5 * (Ainv[s, s] + Ainv[s, s].conj().T)
            Ginv = np.linalg.inv(G)
            S = Ginv - lam[b] * eye
            S = 0.5 * (S + S.conj().T)
            d, U = np.linalg.eigh(S)
            floor[b] = max(0.0, FLOOR_REL * scale[b] - d[0])
            q = U.conj().T @ (Ginv @ Wc[s])
            c = np.sum(np.abs(q) ** 2, axis=1)
            p_cur = float(np.sum(np.abs(Wc[s]) ** 2))
            at_floor = lam[b] <= floor[b] * (1 + 1e-12) + 1e-300
            if (at_floor and p_cur <= rho * (1 + tol)) or abs(p_cur - rho) <= tol * rho:
                continue
            new, _ = solve_dual_bisection(_eig_power_fn(d[None], c[None]), rho, floor[b], tol,
                                          max_steps, lam_start=scale[b])
            delta = float(new[0]) - lam[b]
            if delta == 0.0:
                continue
            changed = True
            corr = delta * np.linalg.inv(eye + delta * G)
            col = Ainv[:, s].copy()
            Ainv -= col @ corr @ Ainv[s, :]
            Wc -= col @ corr @ Wc[s]
            lam[b] = float(new[0])
        if not changed:
            break
    else:
        pw = per_bs_power(split(Wc, num_bs))
        raise DualSolverError(
            f"coupled duals not converged after {max_sweeps} sweeps; "
            f"max power residual {np.max(np.abs(pw - rho)) / rho:.3g}")

    W = split(np.linalg.solve(assemble(), R), num_bs)
    return _clip_and_state(W, lam, rho, sweeps, floor)


def centralized_precoder_perfect(H, V, rho_bs: float, weights=None, tol: float = 1e-6,
                                 max_sweeps: int = 500, lam0=None):
    """``w_k = omega_k (Phi + sum_b lam_b E_b^H E_b)^{-1} h_k`` with coupled per-BS duals."""
    h = effective_uplink(H, V)
    B, M, K = h.shape
    w = np.ones(K) if weights is None else np.asarray(weights)
    return solve_coupled_duals_factored(aggregate(h) * np.sqrt(w), np.diag(np.sqrt(w)), B,
                                        rho_bs, 0.0, tol, max_sweeps, lam0)


def centralized_precoder_trained(Y_ul1, pilots: PilotBook, beta_ul1: float, sigma2_bs,
                                 rho_bs: float, tol: float = 1e-6, max_sweeps: int = 500,
                                 lam0=None):
    """Stacked solution from the UL-1 signals of all BSs (bias-corrected)."""
    B, M, tau = Y_ul1.shape
    Y = Y_ul1.reshape(B * M, tau)
    sig = np.broadcast_to(np.asarray(sigma2_bs, dtype=float), (B,))
    # Phi = F F^H - sigma_b^2 / beta I and R = F C with
    F = Y / np.sqrt(tau * beta_ul1)
    C = pilots.stacked / np.sqrt(tau)
    return solve_coupled_duals_factored(F, C, B, rho_bs, sig / beta_ul1, tol, max_sweeps, lam0)


def centralized_precoder_oneshot(H_hat, sigma2_ue, rho_bs: float, W0, i_alt: int = 30,
                                 mse_tol: float = 1e-8, tol: float = 1e-6,
                                 max_sweeps: int = 500):
    """Alternate MMSE combiners and centralized precoders on estimated channels.

    Returns ``(W, V, DualState, n_alternations)``; ``V`` stays at the CPU.
    """
    W = W0
    lam = None
    prev = math.inf
    state = None
    n = 0
    for n in range(1, i_alt + 1):
        V = mmse_combiner_perfect(H_hat, W, sigma2_ue)
        W, state = centralized_precoder_perfect(H_hat, V, rho_bs, tol=tol,
                                                max_sweeps=max_sweeps, lam0=lam)
        lam = state.lam
        mse = weighted_sum_mse(H_hat, W, V, sigma2_ue)
        if abs(prev - mse) < mse_tol:
            break
        prev = mse
    V = mmse_combiner_perfect(H_hat, W, sigma2_ue)
    return W, V, state, n


def kkt_residual(Phi, R, W, lam, num_bs: int) -> float:
    """Relative stationarity residual ``||(Phi + Lambda) W - R|| / ||R||``."""
    M = Phi.shape[0] // num_bs
    Wagg = aggregate(W)
    res = Phi @ Wagg + np.repeat(lam, M)[:, None] * Wagg - R
    return float(np.linalg.norm(res) / np.linalg.norm(R))


def stacked_solution(Phi, R, lam, num_bs: int) -> np.ndarray:
    """``(Phi + sum_b lam_b E_b^H E_b)^{-1} R`` for given duals, shape ``(B, M, K)``."""
    M = Phi.shape[0] // num_bs
    A = Phi + np.diag(np.repeat(np.asarray(lam, dtype=float), M))
    return split(np.linalg.solve(A, R), num_bs)


def schur_two_bs_solution(Phi, R, lam) -> np.ndarray:
    """Per-BS closed forms of the two-BS stacked solution via Schur complements."""
    M = Phi.shape[0] // 2
    s1, s2 = slice(0, M), slice(M, 2 * M)
    I = np.eye(M)
    A11 = Phi[s1, s1] + lam[0] * I
    A22 = Phi[s2, s2] + lam[1] * I
    P12, P21 = Phi[s1, s2], Phi[s2, s1]
    w1 = np.linalg.solve(A11 - P12 @ np.linalg.solve(A22, P21),
                         R[s1] - P12 @ np.linalg.solve(A22, R[s2]))
    w2 = np.linalg.solve(A22 - P21 @ np.linalg.solve(A11, P12),
                         R[s2] - P21 @ np.linalg.solve(A11, R[s1]))
    return np.stack([w1, w2])


def lagrangian_gradient(Phi, R, W, lam, num_bs: int) -> np.ndarray:
    """Gradient of the weighted sum MSE plus dual terms w.r.t. ``conj(W)``, times two.

    ``2 ((Phi + Lambda) W - R)`` in aggregated ``(BM, K)`` layout; it equals
    the real-coordinate gradient packed as ``d/dRe + 1j d/dIm``.
    """
    M = Phi.shape[0] // num_bs
    Wagg = aggregate(W)
    return 2.0 * (Phi @ Wagg + np.repeat(np.asarray(lam, dtype=float), M)[:, None] * Wagg - R)
