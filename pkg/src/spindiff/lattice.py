"""Diamond-cubic host lattice around a substitutional donor.

Positions are in nm in the crystal frame, with the donor at the origin.
Fractional coordinates are stored exactly as integer quarter-cell units.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import itertools
from typing import Iterator, Sequence

import numpy as np

from .constants import CONSTANTS
from .errors import InvalidInputError

# FCC translations + (1/4,1/4,1/4) second basis atom, in quarter-cell units
_FCC = np.array([[0, 0, 0], [2, 2, 0], [2, 0, 2], [0, 2, 2]])
DIAMOND_BASIS_Q = np.vstack([_FCC, _FCC + 1])

DEFAULT_BATH_RADIUS = 10.0


@dataclass(frozen=True)
class LatticeSpec:
    lattice_constant: float = CONSTANTS.a0_si
    bath_radius: float = DEFAULT_BATH_RADIUS
    abundance: float = CONSTANTS.abundance_si29

    def validate(self) -> "LatticeSpec":
        if not self.lattice_constant > 0:
            raise InvalidInputError(f"lattice_constant must be > 0, got {self.lattice_constant}")
        if not self.bath_radius > 0:
            raise InvalidInputError(f"bath_radius must be > 0, got {self.bath_radius}")
        if not 0.0 <= self.abundance <= 1.0:
            raise InvalidInputError(f"abundance must lie in [0, 1], got {self.abundance}")
        return self


@dataclass(frozen=True)
class LatticeSite:
    index: int
    frac: tuple[float, float, float]
    pos: tuple[float, float, float]


class Sites(Sequence):
    """Array-backed, read-only sequence of :class:`LatticeSite`.

    ``quarters`` holds fractional coordinates in units of a0/4, so
    ``frac == quarters / 4`` exactly and ``pos == a0 * frac``.
    """

    def __init__(self, index, quarters, lattice_constant):
        self.index = np.asarray(index, dtype=np.int64)
        self.quarters = np.asarray(quarters, dtype=np.int64).reshape(-1, 3)
        self.lattice_constant = float(lattice_constant)
        self.index.setflags(write=False)
        self.quarters.setflags(write=False)
        pos = self.quarters * (self.lattice_constant / 4.0)
        pos.setflags(write=False)
        self.pos = pos

    @property
    def frac(self) -> np.ndarray:
        return self.quarters / 4.0

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return self.subset(np.arange(len(self))[k])
        i = int(self.index[k])
        return LatticeSite(i, tuple(self.quarters[k] / 4.0), tuple(self.pos[k]))

    def __iter__(self) -> Iterator[LatticeSite]:
        for k in range(len(self)):
            yield self[k]

    def __eq__(self, other):
        if not isinstance(other, Sites):
            return NotImplemented
        return (
            self.lattice_constant == other.lattice_constant
            and np.array_equal(self.index, other.index)
            and np.array_equal(self.quarters, other.quarters)
        )

    __hash__ = None

    def subset(self, mask_or_idx) -> "Sites":
        return Sites(self.index[mask_or_idx], self.quarters[mask_or_idx], self.lattice_constant)

    def __repr__(self):
        return f"Sites(n={len(self)}, a0={self.lattice_constant})"


def build_supercell(spec: LatticeSpec) -> Sites:
    """All diamond-cubic sites within ``spec.bath_radius`` of the donor.

    The donor site at the origin is excluded. Sites are ordered
    lexicographically by conventional cell, then by basis index.
    """
    spec.validate()
    a0, R = spec.lattice_constant, spec.bath_radius
    n = int(np.ceil(R / a0)) + 1
    rng = range(-n, n + 1)
    cells = np.array(list(itertools.product(rng, rng, rng)), dtype=np.int64)
    q = (4 * cells[:, None, :] + DIAMOND_BASIS_Q[None, :, :]).reshape(-1, 3)
    # distance test in exact integer arithmetic: |q|^2 * (a0/4)^2 <= R^2
    q2 = np.einsum("ij,ij->i", q, q)
    keep = (q2 * (a0 / 4.0) ** 2 <= R * R) & (q2 > 0)
    q = q[keep]
    return Sites(np.arange(len(q)), q, a0)


@dataclass(frozen=True, eq=False)
class BathConfiguration:
    """One Monte Carlo realization of occupied spin-1/2 sites."""

    sites: Sites
    seed: int
    abundance: float
    b_dir: tuple[float, float, float] = (0.0, 0.0, 1.0)
    donor_pos: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    @property
    def positions(self) -> np.ndarray:
        return self.sites.pos

    def __len__(self):
        return len(self.sites)

    def __eq__(self, other):
        if not isinstance(other, BathConfiguration):
            return NotImplemented
        return (
            self.sites == other.sites
            and self.seed == other.seed
            and self.abundance == other.abundance
            and self.b_dir == other.b_dir
            and self.donor_pos == other.donor_pos
        )

    __hash__ = None


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def config_seed(base_seed: int, k: int) -> int:
    """Seed of ensemble member ``k``; members are independent of each other."""
    return (int(base_seed) + int(k)) % 2**64


def populate_isotopes(sites: Sites, abundance: float, seed: int) -> BathConfiguration:
    """Retain each site independently with probability ``abundance``."""
    if not 0.0 <= abundance <= 1.0:
        raise InvalidInputError(f"abundance must lie in [0, 1], got {abundance}")
    u = make_rng(seed).random(len(sites))
    keep = u < abundance
    return BathConfiguration(sites=sites.subset(keep), seed=int(seed) % 2**64,
                             abundance=float(abundance))


def normalize_direction(b_dir) -> tuple[float, float, float]:
    v = np.asarray(b_dir, dtype=float).reshape(3)
    nrm = np.linalg.norm(v)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise InvalidInputError(f"field direction must be a nonzero finite vector, got {b_dir}")
    v = v / nrm
    return (float(v[0]), float(v[1]), float(v[2]))


def set_orientation(config: BathConfiguration, b_dir) -> BathConfiguration:
    return replace(config, b_dir=normalize_direction(b_dir))


# -- text format -------------------------------------------------------------
#
#   # spindiff-bath v1
#   # lattice_constant 0.5431
#   # abundance 0.0467
#   # seed 7
#   # b_dir 0.0 0.0 1.0
#   <index> <x_nm> <y_nm> <z_nm>
#   ...


def write_bath(config: BathConfiguration, path) -> None:
    s = config.sites
    with open(path, "w") as fh:
        fh.write("# spindiff-bath v1\n")
        fh.write(f"# lattice_constant {float(s.lattice_constant)!r}\n")
        fh.write(f"# abundance {float(config.abundance)!r}\n")
        fh.write(f"# seed {int(config.seed)}\n")
        fh.write("# b_dir {!r} {!r} {!r}\n".format(*map(float, config.b_dir)))
        for i, (x, y, z) in zip(s.index.tolist(), s.pos.tolist()):
            fh.write(f"{i} {x!r} {y!r} {z!r}\n")


def read_bath(path) -> BathConfiguration:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 2:
                    meta[parts[0]] = parts[1:]
                continue
            rows.append(line.split())
    try:
        a0 = float(meta["lattice_constant"][0])
        idx = np.array([int(r[0]) for r in rows], dtype=np.int64)
        pos = np.array([[float(v) for v in r[1:4]] for r in rows], dtype=float).reshape(-1, 3)
    except (KeyError, ValueError, IndexError) as exc:
        raise InvalidInputError(f"malformed bath file {path}: {exc}") from exc
    quarters = np.rint(pos / (a0 / 4.0)).astype(np.int64)
    return BathConfiguration(
        sites=Sites(idx, quarters, a0),
        seed=int(meta.get("seed", ["0"])[0]),
        abundance=float(meta.get("abundance", ["nan"])[0]),
        b_dir=tuple(float(v) for v in meta.get("b_dir", ["0", "0", "1"])),
    )
