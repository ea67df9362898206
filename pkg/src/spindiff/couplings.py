"""Hyperfine and nuclear dipolar couplings, in angular frequency (rad/s).

The hyperfine model is the contact term of a six-valley Kohn-Luttinger
envelope::

    Psi(r) = 6**-0.5 * sum_mu F_mu(r) cos(k0 r_mu)
    F_mu(r) = exp(-sqrt(r_perp**2 / a**2 + r_mu**2 / b**2)) / sqrt(pi a**2 b)
    A(r) = prefactor * |Psi(r)|**2

with ``prefactor = (2/3) mu0 hbar gamma_e gamma_n eta`` unless a calibration
point is supplied. The secular dipolar coupling between two nuclei is::

    d_ij = (mu0 / 4 pi) hbar gamma_n**2 (3 cos^2 theta - 1) / (2 r**3)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .constants import CONSTANTS
from .errors import InvalidInputError, SingularGeometryError
from .lattice import BathConfiguration

NM = 1e-9
DEFAULT_PAIR_CUTOFF = 0.9


@dataclass(frozen=True)
class HyperfineParams:
    a: float = 2.509
    b: float = 1.443
    k0_frac: float = 0.85
    # electron density enhancement at the nucleus (Bloch function bunching)
    eta: float = 186.0
    lattice_constant: float = CONSTANTS.a0_si
    # optional (r_nm, A_rad_s); overrides the eta-based prefactor
    A_nn_calibration: Optional[tuple] = None

    def validate(self) -> "HyperfineParams":
        if not (self.a > 0 and self.b > 0):
            raise InvalidInputError("envelope radii a, b must be > 0")
        if not 0 < self.k0_frac < 1:
            raise InvalidInputError(f"k0_frac must lie in (0, 1), got {self.k0_frac}")
        if self.A_nn_calibration is not None:
            r, A = self.A_nn_calibration
            if np.linalg.norm(np.asarray(r, float)) == 0:
                raise SingularGeometryError("calibration site cannot be the donor site")
            if not math.isfinite(A):
                raise InvalidInputError("calibration coupling must be finite")
        return self

    @property
    def k0(self) -> float:
        """Valley wavevector, nm^-1."""
        return self.k0_frac * 2 * np.pi / self.lattice_constant


def envelope_density(pos, params: HyperfineParams) -> np.ndarray:
    """|Psi(r)|^2 in nm^-3 for an (..., 3) array of positions in nm."""
    p = np.asarray(pos, dtype=float)
    a, b, k0 = params.a, params.b, params.k0
    r2 = np.sum(p * p, axis=-1)
    norm = 1.0 / math.sqrt(math.pi * a * a * b)
    total = np.zeros(p.shape[:-1])
    for mu in range(3):
        x = p[..., mu]
        perp2 = r2 - x * x
        F = norm * np.exp(-np.sqrt(perp2 / (a * a) + x * x / (b * b)))
        # +mu and -mu valleys contribute identical terms
        total = total + 2.0 * F * np.cos(k0 * x)
    return total * total / 6.0


def contact_prefactor(params: HyperfineParams, constants=CONSTANTS) -> float:
    """rad/s per nm^-3 of electron density."""
    if params.A_nn_calibration is not None:
        r, A = params.A_nn_calibration
        return float(A) / float(envelope_density(np.asarray(r, float), params))
    mu0 = 4 * math.pi * constants.mu0_over_4pi
    per_m3 = (2.0 / 3.0) * mu0 * constants.hbar * constants.gamma_e * constants.gamma_n * params.eta
    return per_m3 / NM**3


def hyperfine_many(positions, params: HyperfineParams = HyperfineParams()) -> np.ndarray:
    params.validate()
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    if np.any(np.einsum("ij,ij->i", p, p) == 0.0):
        raise SingularGeometryError("hyperfine coupling is undefined at the donor site")
    return contact_prefactor(params) * envelope_density(p, params)


def hyperfine(pos, params: HyperfineParams = HyperfineParams()) -> float:
    """Contact hyperfine coupling A(pos) of a nucleus at ``pos`` (nm), rad/s."""
    return float(hyperfine_many(np.asarray(pos, float).reshape(1, 3), params)[0])


def dipolar_prefactor(gamma_n: float = CONSTANTS.gamma_n) -> float:
    """(mu0/4pi) hbar gamma^2 / 2 in rad/s * nm^3."""
    return CONSTANTS.mu0_over_4pi * CONSTANTS.hbar * gamma_n**2 / 2.0 / NM**3


def dipolar_many(rvec, b_dir, gamma_n: float = CONSTANTS.gamma_n) -> np.ndarray:
    """Secular couplings for separation vectors ``rvec`` (n, 3) in nm."""
    rv = np.asarray(rvec, dtype=float).reshape(-1, 3)
    b = np.asarray(b_dir, dtype=float)
    b = b / np.linalg.norm(b)
    r2 = np.einsum("ij,ij->i", rv, rv)
    if np.any(r2 == 0.0):
        raise SingularGeometryError("dipolar coupling is undefined for coincident spins")
    c2 = (rv @ b) ** 2 / r2
    return dipolar_prefactor(gamma_n) * (3.0 * c2 - 1.0) / (r2 * np.sqrt(r2))


def dipolar(pos_i, pos_j, b_dir, gamma_n: float = CONSTANTS.gamma_n) -> float:
    rv = np.asarray(pos_i, float) - np.asarray(pos_j, float)
    return float(dipolar_many(rv.reshape(1, 3), b_dir, gamma_n)[0])


def thermal_polarization(B: float, T: float, gamma_n: float = CONSTANTS.gamma_n) -> float:
    """Equilibrium spin-1/2 polarization tanh(hbar |gamma| B / 2 kB T)."""
    if not T > 0:
        raise InvalidInputError(f"temperature must be > 0 K, got {T}")
    return math.tanh(CONSTANTS.hbar * abs(gamma_n) * B / (2.0 * CONSTANTS.kB * T))


# -- pair enumeration --------------------------------------------------------


def find_pairs(positions, cutoff: float) -> np.ndarray:
    """(m, 2) index pairs i < j with separation <= cutoff, lexicographic order."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(p) < 2:
        return np.empty((0, 2), dtype=np.int64)
    pairs = cKDTree(p).query_pairs(cutoff, output_type="ndarray").astype(np.int64)
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    pairs.sort(axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def all_pairs_reference(positions, cutoff: float) -> np.ndarray:
    """O(N^2) scan, kept as the reference for :func:`find_pairs`."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    out = []
    for i in range(len(p)):
        d = np.linalg.norm(p[i + 1:] - p[i], axis=1)
        for j in np.nonzero(d <= cutoff)[0]:
            out.append((i, i + 1 + j))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class CouplingTable:
    """Per-site hyperfine couplings and sparse pair couplings (rad/s).

    ``pair_i < pair_j`` index into ``A``; ``pos`` (nm) is carried along so
    clusters can be cut out for the exact oracle.
    """

    A: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    d: np.ndarray
    pair_cutoff: float
    pos: Optional[np.ndarray] = None
    b_dir: tuple = (0.0, 0.0, 1.0)
    meta: dict = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        return len(self.A)

    @property
    def n_pairs(self) -> int:
        return len(self.d)

    @property
    def pairs(self) -> list[tuple[int, int, float]]:
        return list(zip(self.pair_i.tolist(), self.pair_j.tolist(), self.d.tolist()))

    def dense_dipolar(self) -> np.ndarray:
        D = np.zeros((self.n_sites, self.n_sites))
        D[self.pair_i, self.pair_j] = self.d
        D[self.pair_j, self.pair_i] = self.d
        return D

    def with_orientation(self, b_dir) -> "CouplingTable":
        """Same sites and pair list, dipolar couplings recomputed for ``b_dir``."""
        if self.pos is None:
            raise InvalidInputError("table carries no positions; cannot reorient")
        d = dipolar_many(self.pos[self.pair_i] - self.pos[self.pair_j], b_dir)
        return CouplingTable(self.A, self.pair_i, self.pair_j, d, self.pair_cutoff,
                             self.pos, tuple(np.asarray(b_dir, float) / np.linalg.norm(b_dir)),
                             dict(self.meta))


def table_from_arrays(pos, A, b_dir, pair_cutoff: float = DEFAULT_PAIR_CUTOFF) -> CouplingTable:
    if not pair_cutoff > 0:
        raise InvalidInputError(f"pair_cutoff must be > 0, got {pair_cutoff}")
    pos = np.asarray(pos, dtype=float).reshape(-1, 3)
    pairs = find_pairs(pos, pair_cutoff)
    i, j = pairs[:, 0], pairs[:, 1]
    d = dipolar_many(pos[i] - pos[j], b_dir) if len(i) else np.empty(0)
    return CouplingTable(np.asarray(A, float), i, j, d, float(pair_cutoff), pos, tuple(b_dir))


def build_coupling_table(config: BathConfiguration, params: HyperfineParams = HyperfineParams(),
                         pair_cutoff: float = DEFAULT_PAIR_CUTOFF) -> CouplingTable:
    pos = config.positions - np.asarray(config.donor_pos, float)
    A = hyperfine_many(pos, params) if len(pos) else np.empty(0)
    return table_from_arrays(pos, A, config.b_dir, pair_cutoff)


# -- CSV export --------------------------------------------------------------
#
# sites.csv : index,x_nm,y_nm,z_nm,A_rad_s
# pairs.csv : i,j,d_rad_s


def write_table_csv(table: CouplingTable, sites_path, pairs_path) -> None:
    pos = table.pos if table.pos is not None else np.full((table.n_sites, 3), np.nan)
    with open(sites_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x_nm", "y_nm", "z_nm", "A_rad_s"])
        for k in range(table.n_sites):
            x, y, z = (float(v) for v in pos[k])
            w.writerow([k, repr(x), repr(y), repr(z), repr(float(table.A[k]))])
    with open(pairs_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "d_rad_s"])
        for i, j, d in table.pairs:
            w.writerow([i, j, repr(d)])


def read_table_csv(sites_path, pairs_path, pair_cutoff: float = float("nan")) -> CouplingTable:
    try:
        with open(sites_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        pos = np.array([[float(r["x_nm"]), float(r["y_nm"]), float(r["z_nm"])] for r in rows]).reshape(-1, 3)
        A = np.array([float(r["A_rad_s"]) for r in rows])
        with open(pairs_path, newline="") as fh:
            prow = list(csv.DictReader(fh))
        i = np.array([int(r["i"]) for r in prow], dtype=np.int64)
        j = np.array([int(r["j"]) for r in prow], dtype=np.int64)
        d = np.array([float(r["d_rad_s"]) for r in prow])
    except (KeyError, ValueError) as exc:
        raise InvalidInputError(f"malformed coupling CSV: {exc}") from exc
    return CouplingTable(A, i, j, d, pair_cutoff, pos)
