"""Acceptance gate: one check per acceptance criterion, each at its stated tolerance.

Every criterion prints a single ``CRITERION k PASS|FAIL`` line.  The lines are
collected again in the pytest terminal summary (see conftest.py) and the file
can also be run directly: ``python3 tests/test_acceptance.py``.

Tolerances are the stated ones; a failing criterion is reported as failing.
"""

from __future__ import annotations

import functools
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

from spindiff import cli
from spindiff.config import RunConfig
from spindiff.couplings import CouplingTable, HyperfineParams, dipolar, thermal_polarization
from spindiff.fitting import DecayModel, eval_decay_model, fit_decay, fit_saturation, saturation_model
from spindiff.lattice import LatticeSpec
from spindiff.oracle import (
    ClusterProblem,
    exact_echo_state,
    exact_echo_trace,
    exact_echo_trace_curve,
    pair_approximation,
)
from spindiff.pairecho import (
    DecayCurve,
    EnsembleSpec,
    config_table,
    default_tau_grid,
    echo_curve,
    echo_exponent,
    ensemble_decay,
)
from spindiff.validation import commuting_cluster, compare, random_cluster, weak_lattice_clusters

RESULTS: dict[int, str] = {}
AXES = {"[100]": (1, 0, 0), "[110]": (1, 1, 0), "[111]": (1, 1, 1)}
WORKERS = max(1, min(8, os.cpu_count() or 1))


def report(k: int, passed: bool, detail: str) -> bool:
    line = f"CRITERION {k} {'PASS' if passed else 'FAIL'}: {detail}"
    RESULTS[k] = line
    print(line, flush=True)
    return passed


# -- shared ensemble (criteria 1 and 2) --------------------------------------------


@functools.lru_cache(maxsize=None)
def principal_curves() -> dict[str, DecayCurve]:
    """300 configurations per principal axis, natural abundance, R = 10 nm, cutoff 0.9 nm."""
    lat = LatticeSpec(bath_radius=10.0, abundance=0.0467)
    out = {}
    for name, axis in AXES.items():
        spec = EnsembleSpec(n_configs=300, base_seed=0, orientation=axis, tau_max=100e-6,
                            tau_steps=50, include_id=True, T_ID=1.2e-3)
        out[name] = ensemble_decay(spec, lat, HyperfineParams(), pair_cutoff=0.9, workers=WORKERS)
    return out


def criterion_1():
    tpl = DecayModel(S0=1.0, T_ID=1.2e-3, n=2.3, free=("T_SD",))
    T = {k: fit_decay(c, tpl).T_SD * 1e6 for k, c in principal_curves().items()}
    ok = all(200.0 <= t <= 800.0 for t in T.values())
    txt = ", ".join(f"{k} {v:.1f} us" for k, v in T.items())
    return ok, f"fixed-n T_SD in [200, 800] us for principal axes: {txt}"


def criterion_2():
    tpl = DecayModel(S0=1.0, T_ID=1.2e-3, n=2.3, free=("T_SD", "n"))
    n = {k: fit_decay(c, tpl).n for k, c in principal_curves().items()}
    ok = all(1.9 <= v <= 2.9 for v in n.values())
    txt = ", ".join(f"{k} n={v:.3f}" for k, v in n.items())
    return ok, f"free-exponent n in [1.9, 2.9]: {txt}"


# -- oracle consistency ------------------------------------------------------------


def criterion_3():
    from spindiff.pairecho import _supercell_and_A

    taus = np.linspace(0.0, 100e-6, 51)
    rng = np.random.default_rng(2024)
    lat = LatticeSpec(bath_radius=8.0)
    sites, A_all = _supercell_and_A(lat, HyperfineParams())
    weak = [compare(p, taus, k) for k, p in
            enumerate(weak_lattice_clusters(rng, 1000, sites, A_all, lat.abundance, 2, 8, 0.01))]
    assert all(c.regime == "weak" and c.n_spins <= 8 for c in weak)
    weak_max = max(c.max_deviation for c in weak)

    comm_max = 0.0
    for kind in ("no-dipolar", "equal-A"):
        for _ in range(50):
            p = commuting_cluster(rng, int(rng.integers(2, 9)), 2 * np.pi * 50e3, kind)
            comm_max = max(comm_max, float(np.max(np.abs(exact_echo_trace_curve(p, taus) - 1))),
                           float(np.max(np.abs(pair_approximation(p, taus) - 1))))

    # diagnostic only: dense synthetic clusters, each pair individually weak
    synth = max(compare(random_cluster(rng, int(rng.integers(2, 9)), 2 * np.pi * 50e3), taus).max_deviation
                for _ in range(200))
    ok = len(weak) >= 1000 and weak_max <= 1e-3 and comm_max <= 1e-9
    return ok, (f"{len(weak)} weak lattice clusters (N<=8) max|S_exact-S_pair| = {weak_max:.2e} (<= 1e-3); "
                f"commuting limits max|S-1| = {comm_max:.1e} (<= 1e-9); "
                f"[diagnostic] dense synthetic clusters max dev = {synth:.2e}")


# -- polarization ------------------------------------------------------------------


def criterion_4():
    p = thermal_polarization(8.58, 4.0)
    rel = abs(p - 4.4e-4) / 4.4e-4
    return rel <= 0.05, f"thermal polarization {p:.4e} vs 4.4e-4 (rel {rel:.2%}, <= 5%)"


# -- fit round trips ---------------------------------------------------------------


def criterion_5():
    tau = default_tau_grid()
    worst = 0.0
    for T_SD in (124e-6, 201e-6, 60e-6, 400e-6):
        for n in (2.0, 2.3, 2.8):
            S = eval_decay_model(DecayModel(1.0, math.inf, math.inf, T_SD, n, ()), tau)
            f = fit_decay(DecayCurve(tau, S), DecayModel(T_ID=math.inf, free=("S0", "T_SD", "n")))
            worst = max(worst, abs(f.T_SD / T_SD - 1), abs(f.n / n - 1))
    noiseless_ok = worst < 5e-5     # 4 significant figures

    tpl = DecayModel(T_ID=math.inf, n=2.3, free=("S0", "T_SD"))
    counts = {}
    for T_SD, tol in ((124e-6, 7e-6), (201e-6, 11e-6)):
        clean = eval_decay_model(DecayModel(1.0, math.inf, math.inf, T_SD, 2.3, ()), tau)
        ok = 0
        for seed in range(100):
            y = clean + np.random.default_rng(seed).normal(0.0, 0.01, len(tau))
            ok += abs(fit_decay(DecayCurve(tau, y), tpl).T_SD - T_SD) <= tol
        counts[T_SD] = ok
    ok = noiseless_ok and all(c >= 90 for c in counts.values())
    return ok, (f"noiseless worst rel err {worst:.1e} (< 5e-5); 1% noise: 124+-7 us {counts[124e-6]}/100, "
                f"201+-11 us {counts[201e-6]}/100 (>= 90)")


# -- saturation --------------------------------------------------------------------


def criterion_6():
    T, alpha = 207.7e-6, 3.0
    P0 = math.log(1 - 124e-6 / T) / alpha
    P = np.linspace(0.0, 2.0, 20)
    clean = saturation_model(P, T, alpha, P0)
    f = fit_saturation(list(zip(P, clean)))
    exact_err = max(abs(f.T / T - 1), abs(f.alpha / alpha - 1), abs(f.P0 / P0 - 1))
    errs = []
    for seed in range(100):
        y = clean * (1 + np.random.default_rng(seed).normal(0.0, 0.1, len(P)))
        errs.append(abs(fit_saturation(list(zip(P, y))).T / T - 1))
    within = sum(e <= 0.15 for e in errs)
    ok = exact_err < 1e-6 and within == 100
    return ok, (f"noiseless max rel err {exact_err:.1e}; 10% noise: {within}/100 plateaus within 15% "
                f"(worst {max(errs):.1%}), all 100 required")


# -- analytic structure ------------------------------------------------------------


def criterion_7():
    # single-pair slope over the first decade of w*tau
    dA, d = 2 * np.pi * 5e3, 2 * np.pi * 20.0
    w = 0.5 * math.sqrt(dA**2 + 4 * d**2)
    table = CouplingTable(np.array([dA, 0.0]), np.array([0]), np.array([1]), np.array([d]), 1.0)
    taus = np.logspace(-3, -2, 20) / w
    slope_x = float(np.polyfit(np.log(taus), np.log(echo_exponent(table, taus)), 1)[0])
    # same slope read off S itself, for a pair strong enough that -ln S is resolvable
    strong = CouplingTable(np.array([dA, 0.0]), np.array([0]), np.array([1]), np.array([2 * np.pi * 500.0]), 1.0)
    taus = np.linspace(1e-7, 1e-6, 10)
    slope_S = float(np.polyfit(np.log(taus), np.log(-np.log(echo_curve(strong, taus).S)), 1)[0])

    a0 = 0.5431
    b = (1 / math.sqrt(3),) * 3
    magic = abs(dipolar((a0 / 4, 0, 0), (0, 0, 0), b)), abs(dipolar((a0 / 4,) * 3, (0, 0, 0), (0, 0, 1)))
    ref = abs(dipolar((0, 0, a0 / 4), (0, 0, 0), (0, 0, 1)))
    magic_ok = max(magic) <= 1e-12 * ref

    p = ClusterProblem.from_pairs([2e4, -3e4, 5e3], [(0, 1, 300.0), (1, 2, -150.0)])
    t0 = config_table(0, EnsembleSpec(n_configs=1), LatticeSpec(bath_radius=6.0), HyperfineParams(), 0.9, (0, 0, 1))
    at_zero = {
        "echo_curve": echo_curve(t0, [0.0], include_id=True).S[0],
        "pair_approximation": pair_approximation(p, [0.0])[0],
        "exact_trace": exact_echo_trace(p, 0.0).real,
        **{f"exact_state_{J}": exact_echo_state(p, J, 0.0).real for J in range(2**p.N)},
        "decay_model": eval_decay_model(DecayModel(S0=1.0, T_ID=1.2e-3, T_2=1e-3, T_SD=1e-4), 0.0),
    }
    zero_ok = all(v == 1.0 for v in at_zero.values())
    ok = max(abs(slope_x - 4.0), abs(slope_S - 4.0)) <= 0.1 and magic_ok and zero_ok
    bad = [k for k, v in at_zero.items() if v != 1.0]
    return ok, (f"slope {slope_x:.4f} from exponent, {slope_S:.4f} from S (4 +- 0.1); magic-angle |d| {max(magic):.1e} rad/s vs {ref:.0f}; "
                f"S(0) = 1 on {len(at_zero) - len(bad)}/{len(at_zero)} paths" + (f" (bad: {bad})" if bad else ""))


# -- determinism -------------------------------------------------------------------


def criterion_8():
    cfg = RunConfig.model_validate({"seed": 11, "lattice": {"bath_radius": 6.0},
                                    "ensemble": {"n_configs": 12, "orientation": "110"}})
    n = max(2, WORKERS)
    with tempfile.TemporaryDirectory() as tmp:
        cli.cmd_simulate(cfg, Path(tmp) / "w1", workers=1, svg=True)
        cli.cmd_simulate(cfg, Path(tmp) / "wn", workers=n, svg=True)
        names = ("decay.csv", "decay.meta.json", "fit.json", "decay.svg")
        same = {f: (Path(tmp) / "w1" / f).read_bytes() == (Path(tmp) / "wn" / f).read_bytes() for f in names}
    ok = all(same.values())
    return ok, f"simulate outputs 1 vs {n} workers byte-identical: " + ", ".join(
        f"{k} {'yes' if v else 'NO'}" for k, v in same.items())


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8}


@pytest.mark.slow
@pytest.mark.parametrize("k", sorted(CRITERIA), ids=[f"criterion_{k}" for k in sorted(CRITERIA)])
def test_acceptance(k):
    passed, detail = CRITERIA[k]()
    assert report(k, passed, detail), RESULTS[k]


if __name__ == "__main__":
    results = [report(k, *CRITERIA[k]()) for k in sorted(CRITERIA)]
    sys.exit(0 if all(results) else 1)
