import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spindiff.couplings import CouplingTable, HyperfineParams, build_coupling_table, dipolar_many
from spindiff.errors import InvalidInputError
from spindiff.lattice import LatticeSpec, build_supercell, config_seed, populate_isotopes
from spindiff.pairecho import (
    DecayCurve,
    EnsembleSpec,
    config_table,
    default_tau_grid,
    echo_curve,
    echo_exponent,
    ensemble_curves,
    ensemble_decay,
    format_curve_csv,
    id_factor,
    pair_exponent,
    sphere_directions,
    tree_mean,
)

SMALL = LatticeSpec(bath_radius=4.0)
coupling = st.floats(-1e6, 1e6, allow_nan=False)


def _table(A, pairs):
    A = np.asarray(A, float)
    i = np.array([p[0] for p in pairs], dtype=np.int64)
    j = np.array([p[1] for p in pairs], dtype=np.int64)
    d = np.array([p[2] for p in pairs], dtype=float)
    return CouplingTable(A, i, j, d, 1.0)


# -- single pair -----------------------------------------------------------------


def test_pair_exponent_trivia():
    taus = np.linspace(0, 1e-4, 11)
    assert np.all(pair_exponent(5.0, 5.0, 300.0, taus) == 0)
    assert np.all(pair_exponent(5.0, 900.0, 0.0, taus) == 0)
    assert np.all(pair_exponent(0.0, 0.0, 0.0, taus) == 0)
    dA, d = 4000.0, 700.0
    w = 0.5 * math.sqrt(dA**2 + 4 * d**2)
    assert pair_exponent(dA, 0.0, d, 2 * math.pi / w) == pytest.approx(0.0, abs=1e-20)


def test_pair_exponent_half_period_value():
    # dA = 2 d = 2e4 rad/s, w tau = pi: d^2 dA^2 / (4 w^4) * 4 evaluated by hand = 1.0
    d, dA = 1e4, 2e4
    w = 0.5 * math.sqrt(dA**2 + 4 * d**2)
    assert pair_exponent(dA, 0.0, d, math.pi / w) == pytest.approx(1.0, rel=1e-14)


@given(coupling, coupling, coupling, st.floats(0, 1e-3))
def test_pair_exponent_bounds(Ai, Aj, d, tau):
    x = pair_exponent(Ai, Aj, d, tau)
    dA = Ai - Aj
    s = dA * dA + 4 * d * d
    assert x >= 0
    if s > 0:
        assert x <= 16 * (d * dA / s) ** 2 * (1 + 1e-12) + 1e-300
    assert pair_exponent(Aj, Ai, d, tau) == pytest.approx(x, rel=1e-12, abs=1e-300)


def test_short_time_slope_is_four():
    dA, d = 2 * math.pi * 5e3, 2 * math.pi * 20.0
    w = 0.5 * math.sqrt(dA**2 + 4 * d**2)
    t = _table([dA, 0.0], [(0, 1, d)])
    taus = np.logspace(-3, -2, 20) / w       # first decade, w tau << 1
    x = echo_exponent(t, taus)
    slope = np.polyfit(np.log(taus), np.log(x), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.1)
    # small-argument limit d^2 dA^2 tau^4 / 16
    np.testing.assert_allclose(x[:3], d**2 * dA**2 * taus[:3] ** 4 / 16, rtol=1e-5)
    # same slope read off the echo itself for a strong pair over the first decade of the grid
    t = _table([2 * math.pi * 5e3, 0.0], [(0, 1, 2 * math.pi * 500.0)])
    taus = np.linspace(1e-7, 1e-6, 10)
    S = echo_curve(t, taus).S
    slope = np.polyfit(np.log(taus), np.log(-np.log(S)), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.1)


# -- tables ----------------------------------------------------------------------


def test_empty_table():
    taus = default_tau_grid()
    t = _table([1.0, 2.0], [])
    assert np.all(echo_curve(t, taus).S == 1.0)
    c = echo_curve(t, [600e-6], include_id=True, T_ID=1.2e-3)
    assert c.S[0] == pytest.approx(1 / math.e, rel=1e-14)


def test_three_spin_table_is_product_of_pairs():
    A = [2 * math.pi * 4e3, -2 * math.pi * 1e3, 2 * math.pi * 7e3]
    pairs = [(0, 1, 80.0), (0, 2, -45.0), (1, 2, 120.0)]
    taus = default_tau_grid()
    S = echo_curve(_table(A, pairs), taus).S
    prod = np.ones_like(taus)
    for i, j, d in pairs:
        prod *= np.exp(-pair_exponent(A[i], A[j], d, taus))
    np.testing.assert_allclose(S, prod, rtol=1e-13)


def test_exponent_additivity():
    rng = np.random.default_rng(0)
    A = rng.uniform(-1e5, 1e5, 30)
    pairs = [(i, j, rng.uniform(-300, 300)) for i in range(30) for j in range(i + 1, 30) if rng.random() < 0.2]
    taus = default_tau_grid()
    full = echo_exponent(_table(A, pairs), taus)
    half = len(pairs) // 2
    parts = echo_exponent(_table(A, pairs[:half]), taus) + echo_exponent(_table(A, pairs[half:]), taus)
    np.testing.assert_allclose(full, parts, rtol=1e-12)


def test_field_independence():
    """S depends only on A and d; no Zeeman input reaches the pair echo."""
    sites = build_supercell(SMALL)
    cfg = populate_isotopes(sites, 0.0467, 3)
    t = build_coupling_table(cfg)
    taus = default_tau_grid()
    a = echo_curve(t, taus).S
    b = echo_curve(CouplingTable(t.A.copy(), t.pair_i, t.pair_j, t.d.copy(), t.pair_cutoff,
                                 meta={"field_T": 8.58}), taus).S
    assert np.array_equal(a, b)


def test_bad_grid():
    t = _table([1.0], [])
    for g in ([], [2e-6, 1e-6], [-1e-6, 1e-6], [[1e-6]]):
        with pytest.raises(InvalidInputError):
            echo_curve(t, g)


def test_tau_zero_is_one():
    sites = build_supercell(SMALL)
    t = build_coupling_table(populate_isotopes(sites, 0.0467, 1))
    assert t.n_pairs > 0
    c = echo_curve(t, [0.0, 1e-5], include_id=True)
    assert c.S[0] == 1.0


def test_default_grid():
    g = default_tau_grid()
    assert len(g) == 50
    assert g[0] == pytest.approx(2e-6) and g[-1] == pytest.approx(100e-6)
    np.testing.assert_allclose(np.diff(g), 2e-6)


# -- ensemble --------------------------------------------------------------------


def test_single_configuration_equals_echo_curve():
    spec = EnsembleSpec(n_configs=1, base_seed=17, orientation=(1, 1, 0))
    curve = ensemble_decay(spec, SMALL)
    sites = build_supercell(SMALL)
    cfg = populate_isotopes(sites, SMALL.abundance, config_seed(17, 0))
    from spindiff.lattice import set_orientation

    t = build_coupling_table(set_orientation(cfg, (1, 1, 0)), HyperfineParams())
    ref = echo_curve(t, spec.tau, include_id=True)
    np.testing.assert_allclose(curve.S, ref.S, rtol=1e-12)


def test_zero_abundance_gives_id_factor():
    spec = EnsembleSpec(n_configs=3)
    curve = ensemble_decay(spec, LatticeSpec(bath_radius=3.0, abundance=0.0))
    np.testing.assert_allclose(curve.S, id_factor(spec.tau), rtol=1e-15)
    spec = EnsembleSpec(n_configs=2, include_id=False)
    assert np.all(ensemble_decay(spec, LatticeSpec(bath_radius=3.0, abundance=0.0)).S == 1.0)


def test_ensemble_mean_and_meta():
    spec = EnsembleSpec(n_configs=6, base_seed=4)
    rows = ensemble_curves(spec, SMALL)
    curve = ensemble_decay(spec, SMALL)
    np.testing.assert_allclose(curve.S, rows.mean(axis=0), rtol=1e-14)
    assert curve.meta["n_configs"] == 6
    assert curve.meta["seed_range"] == [4, 9]
    assert curve.meta["bath_radius"] == SMALL.bath_radius
    assert np.all(np.diff(curve.S) <= 0)


def test_ensemble_deterministic_and_worker_independent():
    spec = EnsembleSpec(n_configs=7, base_seed=2)
    a = ensemble_decay(spec, SMALL, workers=1)
    b = ensemble_decay(spec, SMALL, workers=3)
    assert format_curve_csv(a) == format_curve_csv(b)


def test_tree_mean_permutation():
    rows = np.random.default_rng(0).random((37, 5))
    perm = rows[np.random.default_rng(1).permutation(37)]
    np.testing.assert_allclose(tree_mean(rows), tree_mean(perm), rtol=1e-15)
    np.testing.assert_allclose(tree_mean(rows), rows.mean(0), rtol=1e-14)
    with pytest.raises(InvalidInputError):
        tree_mean(np.empty((0, 3)))


def test_axis_list_averages_orientations():
    axes = ((1, 0, 0), (0, 1, 0))
    spec = EnsembleSpec(n_configs=2, orientation=axes)
    both = ensemble_decay(spec, SMALL).S
    x = ensemble_curves(EnsembleSpec(n_configs=2, orientation=axes[0]), SMALL)
    y = ensemble_curves(EnsembleSpec(n_configs=2, orientation=axes[1]), SMALL)
    np.testing.assert_allclose(both, ((x + y) / 2).mean(0), rtol=1e-13)


def test_sphere_directions():
    d = sphere_directions(4000, 3)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, rtol=1e-12)
    assert np.abs(d.mean(0)).max() < 0.01
    np.testing.assert_array_equal(d, sphere_directions(4000, 3))
    # angular average of the dipolar pattern vanishes
    assert abs(np.mean(dipolar_many(np.array([[0.0, 0.0, 0.5]]).repeat(1, 0), [0, 0, 1]))) > 0
    rv = np.array([0.2, 0.1, 0.4])
    vals = np.array([dipolar_many(rv[None], b)[0] for b in d])
    assert abs(vals.mean()) < 0.01 * np.abs(vals).max()
    spec = EnsembleSpec(n_configs=3, orientation="sphere")
    assert ensemble_decay(spec, SMALL).S.shape == spec.tau.shape


def test_config_table_tau_zero():
    spec = EnsembleSpec(n_configs=1)
    t = config_table(0, spec, SMALL, HyperfineParams(), 0.9, (0, 0, 1))
    assert echo_curve(t, [0.0], include_id=True).S[0] == 1.0


def test_invalid_ensemble_spec():
    for spec in (EnsembleSpec(n_configs=0), EnsembleSpec(tau_max=0), EnsembleSpec(orientation="cube"),
                 EnsembleSpec(orientation=(1, 2))):
        with pytest.raises(InvalidInputError):
            ensemble_decay(spec, SMALL)
    with pytest.raises(InvalidInputError):
        ensemble_decay(EnsembleSpec(n_configs=1), SMALL, pair_cutoff=0.0)


def test_curve_csv_format(tmp_path):
    c = DecayCurve([2e-6, 4e-6], [0.5, 0.25])
    assert format_curve_csv(c) == "tau_us,S\n2,0.5\n4,0.25\n"
