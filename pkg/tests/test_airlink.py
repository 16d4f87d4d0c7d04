import numpy as np
import pytest
from hypothesis import given, strategies as st

from cellfree_ota import airlink as al
from cellfree_ota import precoding as pc
from cellfree_ota.pilots import orthogonal_pilots, random_pilots

from conftest import cn


def _setup(rng, B=3, K=4, M=2, N=2):
    H = cn(rng, B, K, M, N)
    V = cn(rng, K, N)
    W = cn(rng, B, M, K)
    return H, V, W


def test_ul1_noiseless_single_ue(rng):
    H, V, _ = _setup(rng, K=1)
    pil = orthogonal_pilots(1, 2, 2)
    Y = al.ul1_phase(H, V, pil, 0.7, np.zeros(3), rng)
    np.testing.assert_allclose(al.ls_effective_channel(Y, pil, 0.7), al.effective_uplink(H, V),
                               rtol=1e-12)


def test_ul1_no_leakage_between_ues(rng):
    H, V, _ = _setup(rng, K=2)
    pil = orthogonal_pilots(2, 2, 4)
    Y = al.ul1_phase(H, V, pil, 2.0, np.zeros(3), rng)
    h = al.effective_uplink(H, V)
    np.testing.assert_allclose(Y @ pil.sequences[0] / (4 * np.sqrt(2.0)), h[:, :, 0], atol=1e-12)


def test_ul1_noise_floor(rng):
    H, V, _ = _setup(rng)
    pil = orthogonal_pilots(4, 2, 8)
    sig = np.array([1.0, 2.0, 0.5])
    Y = al.ul1_phase(H, np.zeros_like(V), pil, 1.0, sig, rng)
    big = np.concatenate([al.ul1_phase(H, np.zeros_like(V), pil, 1.0, sig, rng)
                          for _ in range(800)], axis=2)
    np.testing.assert_allclose(np.mean(np.abs(big) ** 2, axis=(1, 2)), sig, rtol=0.05)
    assert Y.shape == (3, 2, 8)


def test_ul1_power_violation(rng):
    H, V, _ = _setup(rng)
    pil = orthogonal_pilots(4, 2, 8)
    beta = 2 * 1.0 / np.max(np.sum(np.abs(V) ** 2, axis=1))
    with pytest.raises(al.PowerViolation):
        al.ul1_phase(H, V, pil, beta, np.zeros(3), rng, rho_ue=1.0)


def test_ul_full_recovers_channels(rng):
    H, _, _ = _setup(rng)
    pil = orthogonal_pilots(4, 2, 8)
    Y = al.ul_full_phase(H, pil, 100.0, np.zeros(3), rng)
    np.testing.assert_allclose(al.ls_full_channel(Y, pil, 100.0), H, atol=1e-12)


def test_ul_full_reduces_to_ul1(rng):
    H, _, _ = _setup(rng, K=1, N=1)
    pil = orthogonal_pilots(1, 1, 3)
    r = np.random.default_rng(0)
    a = al.ul_full_phase(H, pil, 5.0, np.zeros(3), r)
    b = al.ul1_phase(H, np.ones((1, 1)), pil, 5.0, np.zeros(3), r)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_ul_full_contamination_bias(rng):
    H, _, _ = _setup(rng)
    pil = random_pilots(4, 2, 5, 7)
    Y = al.ul_full_phase(H, pil, 4.0, np.zeros(3), rng)
    est = al.ls_full_channel(Y, pil, 4.0)
    # H_hat_k = sum_j H_j P_j^H P_k / tau
    C = np.einsum("jtn,kto->jkno", pil.P.conj(), pil.P) / pil.tau
    oracle = np.einsum("bjmn,jkno->bkmo", H, C)
    np.testing.assert_allclose(est, oracle, atol=1e-12)


def test_dl_noiseless_effective_channel(rng):
    H, _, W = _setup(rng)
    pil = orthogonal_pilots(4, 2, 8)
    Y = al.dl_phase(H, W, pil, np.zeros(4), rng)
    g = np.einsum("bkmn,bmk->kn", H.conj(), W)
    np.testing.assert_allclose(al.ls_effective_dl(Y, pil), g, atol=1e-12)


def test_dl_scalar_example(rng):
    H = np.full((1, 1, 1, 1), 2.0 + 0j)
    W = np.full((1, 1, 1), 3.0 + 0j)
    tau = 4
    pil = orthogonal_pilots(1, 1, tau)
    pil = type(pil)(P=np.full((1, tau, 1), 1.0 + 0j), mode="orthogonal")
    Y = al.dl_phase(H, W, pil, np.zeros(1), rng)
    assert al.ls_effective_dl(Y, pil)[0, 0] == pytest.approx(6.0)


def test_dl_noise_floor(rng):
    H, _, W = _setup(rng)
    pil = orthogonal_pilots(4, 2, 8)
    Y = np.concatenate([al.dl_phase(H, 0 * W, pil, np.full(4, 0.3), rng) for _ in range(400)],
                       axis=2)
    assert np.mean(np.abs(Y) ** 2) == pytest.approx(0.3, rel=0.05)


def test_ul2_noiseless_recovers_phi_w(rng):
    H, V, W = _setup(rng)
    pil = orthogonal_pilots(4, 2, 8)
    Ydl = al.dl_phase(H, W, pil, np.zeros(4), rng)
    Y2 = al.ul2_phase(H, V, Ydl, 0.4, np.zeros(3), rng)
    h = al.effective_uplink(H, V)
    oracle = pc.split(pc.phi_matrix(h) @ pc.aggregate(W), 3)
    np.testing.assert_allclose(Y2 @ pil.stacked / (8 * np.sqrt(0.4)), oracle, atol=1e-11)


def test_ul2_single_link(rng):
    H, V, W = _setup(rng, B=1, K=1)
    pil = orthogonal_pilots(1, 2, 2)
    Ydl = al.dl_phase(H, W, pil, np.zeros(1), rng)
    Y2 = al.ul2_phase(H, V, Ydl, 1.0, np.zeros(1), rng)
    h = H[0, 0] @ V[0]
    np.testing.assert_allclose(Y2[0] @ pil.stacked[:, 0] / 2, np.outer(h, h.conj()) @ W[0, :, 0],
                               atol=1e-12)


def test_ul2_zero_combiner_is_noise(rng):
    H, V, W = _setup(rng)
    pil = orthogonal_pilots(4, 2, 8)
    Ydl = al.dl_phase(H, W, pil, np.zeros(4), rng)
    Y2 = al.ul2_phase(H, 0 * V, Ydl, 1.0, np.zeros(3), rng)
    assert not np.any(Y2)


def test_power_scaling_examples():
    s = al.compute_power_scaling(np.array([[2.0 + 0j]]), 100.0, 1)
    assert s.beta_ul1 == pytest.approx(25.0)
    assert al.compute_power_scaling(np.ones((1, 2)), 100.0, 2).beta_ul == 50.0
    with pytest.raises(ValueError):
        al.compute_power_scaling(np.zeros((2, 2)), 1.0, 2)


@given(seed=st.integers(0, 2**31), rho=st.floats(0.01, 1e3))
def test_power_scaling_max_rule(seed, rho):
    r = np.random.default_rng(seed)
    H, V, W = _setup(r)
    pil = orthogonal_pilots(4, 2, 8)
    Ydl = al.dl_phase(H, W, pil, np.full(4, 0.1), r)
    s = al.compute_power_scaling(V, rho, 2, Ydl)
    powers = al.ue_transmit_powers(V, s, Ydl)
    for p in powers.values():
        assert np.max(p) == pytest.approx(rho, rel=1e-12)
        assert np.all(p <= rho * (1 + 1e-12))
    # and the phases accept the scaled signals
    al.ul1_phase(H, V, pil, s.beta_ul1, np.zeros(3), r, rho_ue=rho)
    al.ul2_phase(H, V, Ydl, s.beta_ul2, np.zeros(3), r, rho_ue=rho)


def test_ls_effective_contamination_bias(rng):
    H, V, _ = _setup(rng)
    pil = random_pilots(4, 2, 3, 1)
    Y = al.ul1_phase(H, V, pil, 1.5, np.zeros(3), rng)
    h = al.effective_uplink(H, V)
    p = pil.sequences
    C = p.conj() @ p.T / pil.tau  # C[j, k] = p_j^H p_k / tau
    np.testing.assert_allclose(al.ls_effective_channel(Y, pil, 1.5), h @ C, atol=1e-12)


def test_ls_effective_noise_variance(rng):
    B, M, tau, beta, sig = 1, 3, 8, 2.0, 0.5
    pil = orthogonal_pilots(2, 1, tau)
    H = np.zeros((B, 2, M, 1), complex)
    V = np.ones((2, 1), complex)
    est = np.array([al.ls_effective_channel(al.ul1_phase(H, V, pil, beta, np.full(B, sig), rng),
                                            pil, beta)[0, :, 0] for _ in range(5000)])
    assert abs(est.mean()) < 0.02
    assert np.mean(np.sum(np.abs(est) ** 2, axis=1)) == pytest.approx(M * sig / (tau * beta),
                                                                      rel=0.05)


def test_ls_dl_contamination_bias(rng):
    H, _, W = _setup(rng)
    pil = random_pilots(4, 2, 3, 2)
    Y = al.dl_phase(H, W, pil, np.zeros(4), rng)
    G = al.downlink_gains(H, W)  # G[k, :, j]
    p = pil.sequences
    C = p.conj() @ p.T / pil.tau
    oracle = np.einsum("knj,jk->kn", G, C)
    np.testing.assert_allclose(al.ls_effective_dl(Y, pil), oracle, atol=1e-12)


@given(a=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       b=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_estimators_linear(a, b):
    r = np.random.default_rng(0)
    pil = orthogonal_pilots(4, 2, 8)
    Y1, Y2 = cn(r, 3, 2, 8), cn(r, 3, 2, 8)
    for f in (lambda Y: al.ls_effective_channel(Y, pil, 3.0),
              lambda Y: al.ls_full_channel(Y, pil, 3.0)):
        np.testing.assert_allclose(f(a * Y1 + b * Y2), a * f(Y1) + b * f(Y2), atol=1e-9)
    D1, D2 = cn(r, 4, 2, 8), cn(r, 4, 2, 8)
    np.testing.assert_allclose(al.ls_effective_dl(a * D1 + b * D2, pil),
                               a * al.ls_effective_dl(D1, pil) + b * al.ls_effective_dl(D2, pil),
                               atol=1e-9)
