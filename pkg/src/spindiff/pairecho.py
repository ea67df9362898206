"""Pair-correlation Hahn echo and its ensemble average.

For a nuclear pair (i, j) with hyperfine difference dA = A_i - A_j and
flip-flop coupling d, the echo exponent is::

    x_ij(tau) = d**2 dA**2 / (4 w**4) * (cos(w tau) - 1)**2,
    w = sqrt(dA**2 + 4 d**2) / 2

and the echo at 2 tau is exp(-sum_ij x_ij), optionally times the
instantaneous-diffusion factor exp(-2 tau / T_ID).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import functools
import json
from typing import Optional, Union

import numpy as np
from scipy.stats import qmc

from .couplings import (
    DEFAULT_PAIR_CUTOFF,
    CouplingTable,
    HyperfineParams,
    dipolar_many,
    find_pairs,
    hyperfine_many,
)
from .errors import InvalidInputError
from .lattice import LatticeSpec, build_supercell, config_seed, normalize_direction, populate_isotopes

T_ID_DEFAULT = 1.2e-3
# 2 us .. 100 us in 2 us steps
TAU_MAX_DEFAULT = 100e-6
TAU_STEPS_DEFAULT = 50
_TAU_CHUNK = 4096

PRINCIPAL_AXES = {
    "100": (1.0, 0.0, 0.0),
    "110": (1.0, 1.0, 0.0),
    "111": (1.0, 1.0, 1.0),
}


def default_tau_grid(tau_max: float = TAU_MAX_DEFAULT, tau_steps: int = TAU_STEPS_DEFAULT) -> np.ndarray:
    return tau_max / tau_steps * np.arange(1, tau_steps + 1)


@dataclass
class DecayCurve:
    tau: np.ndarray
    S: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        if self.tau.shape != self.S.shape or self.tau.ndim != 1:
            raise InvalidInputError("tau and S must be 1-d arrays of equal length")

    def max_local_increase(self) -> float:
        if len(self.S) < 2:
            return 0.0
        return float(max(0.0, np.max(np.diff(self.S))))


@dataclass(frozen=True)
class EnsembleSpec:
    """Ensemble of bath realizations.

    ``orientation`` is a 3-vector (fixed field direction), the string
    ``"sphere"`` (one low-discrepancy direction per configuration) or a
    list of 3-vectors (every configuration averaged over all of them).
    """

    n_configs: int = 300
    base_seed: int = 0
    orientation: Union[str, tuple] = (0.0, 0.0, 1.0)
    tau_max: float = TAU_MAX_DEFAULT
    tau_steps: int = TAU_STEPS_DEFAULT
    include_id: bool = True
    T_ID: float = T_ID_DEFAULT

    def validate(self) -> "EnsembleSpec":
        if int(self.n_configs) < 1:
            raise InvalidInputError("n_configs must be >= 1")
        if not self.tau_max > 0:
            raise InvalidInputError("tau_max must be > 0")
        if int(self.tau_steps) < 1:
            raise InvalidInputError("tau_steps must be >= 1")
        if self.include_id and not self.T_ID > 0:
            raise InvalidInputError("T_ID must be > 0")
        orientation_mode(self.orientation)
        return self

    @property
    def tau(self) -> np.ndarray:
        return default_tau_grid(self.tau_max, self.tau_steps)


def orientation_mode(orientation) -> str:
    if isinstance(orientation, str):
        if orientation != "sphere":
            raise InvalidInputError(f"unknown orientation mode {orientation!r}")
        return "sphere"
    arr = np.asarray(orientation, dtype=float)
    if arr.shape == (3,):
        return "fixed"
    if arr.ndim == 2 and arr.shape[1] == 3 and len(arr) >= 1:
        return "axes"
    raise InvalidInputError("orientation must be a 3-vector, a list of 3-vectors or 'sphere'")


def sphere_directions(n: int, seed: int) -> np.ndarray:
    """``n`` scrambled-Halton directions, uniform on the unit sphere."""
    u = qmc.Halton(d=2, scramble=True, seed=np.random.default_rng(int(seed) % 2**64)).random(n)
    z = 1.0 - 2.0 * u[:, 0]
    phi = 2.0 * np.pi * u[:, 1]
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


# -- single-pair and single-table echoes --------------------------------------


def pair_amplitude(A_i, A_j, d):
    """Peak-to-peak scale d^2 dA^2 / (4 w^4) and pair frequency w."""
    dA = np.asarray(A_i, float) - np.asarray(A_j, float)
    d = np.asarray(d, float)
    s = dA * dA + 4.0 * d * d
    w = 0.5 * np.sqrt(s)
    # d^2 dA^2 / (4 w^4) == 4 (d dA / s)^2; the ratio form avoids s^2 underflow
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(s > 0, d * dA / np.where(s > 0, s, 1.0), 0.0)
    return 4.0 * r * r, w


def _half_cycle(w, tau):
    """(cos(w tau) - 1)^2 computed as 4 sin^4(w tau / 2), accurate for small w tau."""
    h = np.sin(0.5 * w * tau)
    h2 = h * h
    return 4.0 * h2 * h2


def pair_exponent(A_i, A_j, d, tau):
    """Single-pair contribution to -ln S at pulse spacing ``tau`` (s)."""
    amp, w = pair_amplitude(A_i, A_j, d)
    out = amp * _half_cycle(w, np.asarray(tau, float))
    return float(out) if np.ndim(out) == 0 else out


def echo_exponent(table: CouplingTable, tau_grid) -> np.ndarray:
    """sum over pairs of :func:`pair_exponent` on ``tau_grid``."""
    tau = np.asarray(tau_grid, dtype=float)
    if table.n_pairs == 0:
        return np.zeros_like(tau)
    amp, w = pair_amplitude(table.A[table.pair_i], table.A[table.pair_j], table.d)
    out = np.empty_like(tau)
    for k in range(0, len(tau), _TAU_CHUNK):
        t = tau[k:k + _TAU_CHUNK]
        # plain reduction, not BLAS: bit-stable regardless of thread count
        out[k:k + _TAU_CHUNK] = np.sum(amp[:, None] * _half_cycle(w[:, None], t[None, :]), axis=0)
    return out


def id_factor(tau, T_ID: float = T_ID_DEFAULT) -> np.ndarray:
    return np.exp(-2.0 * np.asarray(tau, float) / T_ID)


def _check_grid(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if tau.ndim != 1 or len(tau) == 0 or np.any(np.diff(tau) <= 0) or np.any(tau < 0):
        raise InvalidInputError("tau grid must be a non-empty, strictly increasing, non-negative 1-d array")
    return tau


def echo_curve(table: CouplingTable, tau_grid, include_id: bool = False,
               T_ID: float = T_ID_DEFAULT) -> DecayCurve:
    tau = _check_grid(tau_grid)
    S = np.exp(-echo_exponent(table, tau))
    if include_id:
        S = S * id_factor(tau, T_ID)
    return DecayCurve(tau, S, {"n_pairs": table.n_pairs, "include_id": bool(include_id),
                               "T_ID": float(T_ID) if include_id else None})


# -- ensemble ----------------------------------------------------------------


def tree_mean(rows: np.ndarray) -> np.ndarray:
    """Mean over axis 0 by fixed pairwise-tree summation.

    The reduction order depends only on the number of rows, so results are
    independent of how rows were produced.
    """
    rows = np.asarray(rows, dtype=float)
    n = len(rows)
    if n == 0:
        raise InvalidInputError("cannot average zero curves")

    def _sum(lo, hi):
        if hi - lo == 1:
            return rows[lo].copy()
        mid = (lo + hi) // 2
        return _sum(lo, mid) + _sum(mid, hi)

    return _sum(0, n) / n


@functools.lru_cache(maxsize=4)
def _supercell_and_A(lattice_spec: LatticeSpec, params: HyperfineParams):
    sites = build_supercell(lattice_spec)
    A = hyperfine_many(sites.pos, params) if len(sites) else np.empty(0)
    A.setflags(write=False)
    return sites, A


def _directions_for(spec: EnsembleSpec, k: int, sphere: Optional[np.ndarray]) -> np.ndarray:
    mode = orientation_mode(spec.orientation)
    if mode == "sphere":
        return sphere[k:k + 1]
    arr = np.asarray(spec.orientation, dtype=float).reshape(-1, 3)
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


def config_table(k: int, spec: EnsembleSpec, lattice_spec: LatticeSpec, params: HyperfineParams,
                 pair_cutoff: float, b_dir) -> CouplingTable:
    """Coupling table of ensemble member ``k`` for field direction ``b_dir``."""
    sites, A_all = _supercell_and_A(lattice_spec, params)
    cfg = populate_isotopes(sites, lattice_spec.abundance, config_seed(spec.base_seed, k))
    pos = cfg.positions
    pairs = find_pairs(pos, pair_cutoff)
    i, j = pairs[:, 0], pairs[:, 1]
    d = dipolar_many(pos[i] - pos[j], b_dir) if len(i) else np.empty(0)
    return CouplingTable(A_all[cfg.sites.index], i, j, d, pair_cutoff, pos,
                         normalize_direction(b_dir), {"seed": cfg.seed})


def _config_curves(ks, spec, lattice_spec, params, pair_cutoff, sphere):
    tau = spec.tau
    out = np.empty((len(ks), len(tau)))
    for row, k in enumerate(ks):
        dirs = _directions_for(spec, k, sphere)
        base = config_table(k, spec, lattice_spec, params, pair_cutoff, dirs[0])
        curves = []
        for m, b in enumerate(dirs):
            table = base if m == 0 else base.with_orientation(b)
            curves.append(echo_curve(table, tau, spec.include_id, spec.T_ID).S)
        out[row] = curves[0] if len(curves) == 1 else tree_mean(np.array(curves))
    return out


def _chunks(n: int, parts: int) -> list[list[int]]:
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [list(range(bounds[p], bounds[p + 1])) for p in range(parts)]


def ensemble_curves(spec: EnsembleSpec, lattice_spec: LatticeSpec = LatticeSpec(),
                    hyperfine_params: HyperfineParams = HyperfineParams(),
                    pair_cutoff: float = DEFAULT_PAIR_CUTOFF, workers: int = 1) -> np.ndarray:
    """Per-configuration curves, shape (n_configs, tau_steps), in seed order."""
    spec.validate()
    lattice_spec.validate()
    hyperfine_params.validate()
    if not pair_cutoff > 0:
        raise InvalidInputError(f"pair_cutoff must be > 0, got {pair_cutoff}")
    n = int(spec.n_configs)
    sphere = sphere_directions(n, spec.base_seed) if orientation_mode(spec.orientation) == "sphere" else None
    chunks = _chunks(n, int(workers))
    args = (spec, lattice_spec, hyperfine_params, pair_cutoff, sphere)
    if len(chunks) == 1:
        return _config_curves(chunks[0], *args)
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(_config_curves, chunks, *[[a] * len(chunks) for a in args]))
    return np.concatenate(parts, axis=0)


def ensemble_decay(spec: EnsembleSpec, lattice_spec: LatticeSpec = LatticeSpec(),
                   hyperfine_params: HyperfineParams = HyperfineParams(),
                   pair_cutoff: float = DEFAULT_PAIR_CUTOFF, workers: int = 1) -> DecayCurve:
    """Arithmetic mean echo over ``spec.n_configs`` seeded bath realizations."""
    rows = ensemble_curves(spec, lattice_spec, hyperfine_params, pair_cutoff, workers)
    meta = {
        "n_configs": int(spec.n_configs),
        "seed_range": [int(spec.base_seed), int(spec.base_seed) + int(spec.n_configs) - 1],
        "orientation": spec.orientation if isinstance(spec.orientation, str)
        else np.asarray(spec.orientation, float).tolist(),
        "include_id": bool(spec.include_id),
        "T_ID": float(spec.T_ID),
        "lattice_constant": lattice_spec.lattice_constant,
        "bath_radius": lattice_spec.bath_radius,
        "abundance": lattice_spec.abundance,
        "pair_cutoff": float(pair_cutoff),
        "hyperfine": {"a": hyperfine_params.a, "b": hyperfine_params.b,
                      "k0_frac": hyperfine_params.k0_frac, "eta": hyperfine_params.eta},
    }
    return DecayCurve(spec.tau, tree_mean(rows), meta)


# -- I/O ---------------------------------------------------------------------
#
# curve CSV: header "tau_us,S". tau is written to 10 significant digits (the
# grid itself is exact in us; this drops s -> us conversion noise), S in %.17g.


def format_curve_csv(curve: DecayCurve) -> str:
    lines = ["tau_us,S"]
    for t, s in zip(curve.tau, curve.S):
        lines.append(f"{t * 1e6:.10g},{s:.17g}")
    return "\n".join(lines) + "\n"


def write_curve_csv(curve: DecayCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_curve_csv(curve))


def write_curve_meta(curve: DecayCurve, path) -> None:
    with open(path, "w") as fh:
        json.dump(curve.meta, fh, indent=2, sort_keys=True)
