import json
import math

import numpy as np
import pytest

from cellfree_ota.scenario import (ConfigError, ScenarioConfig, dbm_to_mw, draw_channels,
                                   draw_drop, generate_topology, load_config, mw_to_dbm,
                                   pathloss_db)


def test_default_config_matches_setup():
    c = ScenarioConfig()
    assert (c.num_bs, c.antennas_per_bs, c.num_ue, c.antennas_per_ue) == (25, 4, 16, 2)
    assert c.rho_bs == pytest.approx(1000.0)
    assert c.rho_ue == pytest.approx(100.0)
    assert c.sigma2_ue == pytest.approx(10 ** -9.5)
    assert c.tau == 32


def test_grid_5x5():
    topo = generate_topology(ScenarioConfig(), 0)
    assert topo.side == pytest.approx(500.0)
    xs = np.unique(topo.bs_positions[:, 0])
    np.testing.assert_allclose(xs, [50, 150, 250, 350, 450])
    assert np.all(topo.bs_positions[:, 2] == 10.0)
    assert np.all((topo.ue_positions[:, :2] >= 0) & (topo.ue_positions[:, :2] <= 500))


def test_single_bs_at_centre():
    topo = generate_topology(ScenarioConfig(num_bs=1), 3)
    np.testing.assert_allclose(topo.bs_positions[0], [50, 50, 10])


def test_non_square_bs_count():
    with pytest.raises(ConfigError):
        generate_topology(ScenarioConfig(num_bs=3), 0)


def test_topology_deterministic():
    a = generate_topology(ScenarioConfig(), 11)
    b = generate_topology(ScenarioConfig(), 11)
    np.testing.assert_array_equal(a.ue_positions, b.ue_positions)


@pytest.mark.parametrize("d, expected", [(1, -30.5), (10, -67.2), (100, -103.9)])
def test_pathloss_values(d, expected):
    assert pathloss_db(d) == pytest.approx(expected)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_pathloss_domain(d):
    with pytest.raises(ValueError):
        pathloss_db(d)


def test_channel_variance_monte_carlo():
    cfg = ScenarioConfig(num_bs=1, num_ue=2, antennas_per_bs=2, antennas_per_ue=2)
    topo = generate_topology(cfg, 5)
    rng = np.random.default_rng(0)
    acc = np.zeros((1, 2))
    n = 10_000
    first = []
    for _ in range(n):
        ch = draw_channels(topo, cfg, rng)
        acc += np.sum(np.abs(ch.H) ** 2, axis=(2, 3)) / 4
        first.append(ch.H[0, :, 0, 0])
    np.testing.assert_allclose(acc / n, ch.gains, rtol=0.03)

    # independence of two (b, k) pairs: normalised cross-correlation within 3 sigma
    x = np.array(first)
    x /= np.sqrt(ch.gains[0])
    corr = np.mean(x[:, 0] * x[:, 1].conj())
    assert abs(corr) < 3 / math.sqrt(n)


def test_channel_variance_chi2():
    # sum of |h|^2 / (delta/2) over 2n real components is chi-square with 2n dof
    cfg = ScenarioConfig(num_bs=1, num_ue=1, antennas_per_bs=1, antennas_per_ue=1)
    topo = generate_topology(cfg, 2)
    rng = np.random.default_rng(1)
    n = 10_000
    s = sum(float(np.abs(draw_channels(topo, cfg, rng).H[0, 0, 0, 0]) ** 2) for _ in range(n))
    delta = 10 ** (pathloss_db(topo.distances()[0, 0]) / 10)
    stat = s / (delta / 2)
    dof = 2 * n
    # normal approximation of the chi-square 1 % two-sided band
    assert abs(stat - dof) < 2.576 * math.sqrt(2 * dof)


def test_three_d_distance_bound():
    cfg = ScenarioConfig(num_bs=1)
    topo = generate_topology(cfg, 0)
    object.__setattr__(topo, "ue_positions", np.array([[50.0, 50.0, 0.0]] * cfg.num_ue))
    assert np.all(topo.distances() >= cfg.bs_height)


def test_drop_deterministic_and_distinct():
    cfg = ScenarioConfig()
    _, a = draw_drop(cfg, 4)
    _, b = draw_drop(cfg, 4)
    _, c = draw_drop(cfg, 5)
    np.testing.assert_array_equal(a.H, b.H)
    assert not np.allclose(a.H, c.H)


def test_aggregated_channel_stacks_in_bs_order():
    _, ch = draw_drop(ScenarioConfig(), 0)
    agg = ch.aggregated(3)
    np.testing.assert_array_equal(agg[4:8], ch.H[1, 3])


@pytest.mark.parametrize("dbm", [-95.0, 0.0, 20.0, 30.0])
def test_dbm_round_trip(dbm):
    assert mw_to_dbm(dbm_to_mw(dbm)) == pytest.approx(dbm, abs=1e-12)


def test_load_yaml_and_json(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("num_ue: 8\nbs_power_dbm: 27\nue_noise_dbm: '-inf'\n")
    c = load_config(y)
    assert c.num_ue == 8 and c.tau == 16 and c.sigma2_ue == 0.0
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"step_size": 0.3}))
    assert load_config(j).step_size == 0.3


def test_unknown_key_rejected(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("bogus: 1\n")
    with pytest.raises(ConfigError):
        load_config(y)


@pytest.mark.parametrize("kw", [dict(step_size=0.0), dict(pilot_length=8),
                                dict(pilot_mode="random", pilot_length=1),
                                dict(pilot_mode="zc"), dict(num_ue=0)])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kw)
