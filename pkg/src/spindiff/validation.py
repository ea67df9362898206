"""Cross-check of the pair-correlation echo against the exact cluster oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .oracle import ClusterProblem, exact_echo_trace_curve, max_pair_exponent, pair_approximation


def random_cluster(rng: np.random.Generator, n_spins: int, A_max: float,
                   max_pair_exp: Optional[float] = 0.01, d_scale: float = 0.05) -> ClusterProblem:
    """Random cluster with A ~ U(-A_max, A_max) and dense random dipolar couplings.

    With ``max_pair_exp`` set, D is shrunk until every pair's largest
    attainable exponent d^2 dA^2 / w^4 is at most that value (weak coupling).
    """
    A = rng.uniform(-A_max, A_max, n_spins)
    D = np.triu(rng.uniform(-1.0, 1.0, (n_spins, n_spins)) * d_scale * A_max, 1)
    D = D + D.T
    p = ClusterProblem(A, D)
    if max_pair_exp is not None:
        while max_pair_exponent(p) > max_pair_exp:
            # the bound grows like d^2 for d << dA; shrink with a little margin
            f = 0.999 * np.sqrt(max_pair_exp / max_pair_exponent(p))
            p = ClusterProblem(A, p.D * f)
    return p


def commuting_cluster(rng: np.random.Generator, n_spins: int, A_max: float, kind: str) -> ClusterProblem:
    """Cluster in a commuting limit: ``kind`` is ``"no-dipolar"`` or ``"equal-A"``."""
    if kind == "no-dipolar":
        return ClusterProblem(rng.uniform(-A_max, A_max, n_spins), np.zeros((n_spins, n_spins)))
    if kind == "equal-A":
        D = np.triu(rng.uniform(-1, 1, (n_spins, n_spins)) * 0.1 * A_max, 1)
        return ClusterProblem(np.full(n_spins, rng.uniform(-A_max, A_max)), D + D.T)
    raise ValueError(f"unknown commuting limit {kind!r}")


@dataclass
class ClusterComparison:
    index: int
    n_spins: int
    max_pair_exponent: float
    sum_sq_pair_exponent: float
    max_deviation: float
    regime: str


def compare(p: ClusterProblem, taus, index: int = 0, weak_limit: float = 0.01) -> ClusterComparison:
    exact = exact_echo_trace_curve(p, taus)
    pair = pair_approximation(p, taus)
    iu, ju = np.triu_indices(p.N, 1)
    bounds = [max_pair_exponent(ClusterProblem(p.A[[i, j]], np.array([[0, p.D[i, j]], [p.D[i, j], 0]])))
              for i, j in zip(iu, ju)]
    mpe = max(bounds) if bounds else 0.0
    return ClusterComparison(
        index=index, n_spins=p.N, max_pair_exponent=mpe,
        sum_sq_pair_exponent=float(np.sum(np.square(bounds))) if bounds else 0.0,
        max_deviation=float(np.max(np.abs(exact - pair))),
        regime="weak" if mpe <= weak_limit else "strong",
    )


def lattice_cluster(rng: np.random.Generator, sites, A_all, abundance: float, n_spins: int,
                    b_dir=(0.0, 0.0, 1.0), shell=(1.5, 6.0)) -> ClusterProblem:
    """Cluster cut from a random bath realization.

    A nucleus is picked at a distance within ``shell`` (nm) from the donor and
    grouped with its ``n_spins - 1`` nearest occupied neighbours.
    """
    from .couplings import dipolar_many
    from .lattice import populate_isotopes

    while True:
        cfg = populate_isotopes(sites, abundance, int(rng.integers(2**63)))
        pos = cfg.positions
        r = np.linalg.norm(pos, axis=1)
        cand = np.nonzero((r > shell[0]) & (r < shell[1]))[0]
        if len(pos) >= n_spins and len(cand):
            break
    c = rng.choice(cand)
    near = np.sort(np.argsort(np.linalg.norm(pos - pos[c], axis=1), kind="stable")[:n_spins])
    sub = pos[near]
    iu, ju = np.triu_indices(n_spins, 1)
    D = np.zeros((n_spins, n_spins))
    if len(iu):
        D[iu, ju] = dipolar_many(sub[iu] - sub[ju], b_dir)
    return ClusterProblem(A_all[cfg.sites.index[near]], D + D.T)


def weak_lattice_clusters(rng: np.random.Generator, count: int, sites, A_all, abundance: float,
                          min_spins: int = 2, max_spins: int = 8, weak_limit: float = 0.01,
                          b_dir=(0.0, 0.0, 1.0)):
    """Yield ``count`` lattice clusters whose every pair exponent is <= ``weak_limit``."""
    made = 0
    while made < count:
        n = int(rng.integers(min_spins, max_spins + 1))
        p = lattice_cluster(rng, sites, A_all, abundance, n, b_dir)
        if max_pair_exponent(p) <= weak_limit:
            made += 1
            yield p


def strong_lattice_clusters(rng: np.random.Generator, count: int, sites, A_all, abundance: float,
                            min_spins: int = 2, max_spins: int = 8, weak_limit: float = 0.01,
                            b_dir=(0.0, 0.0, 1.0)):
    """Lattice clusters with at least one pair exponent above ``weak_limit``."""
    made = 0
    while made < count:
        n = int(rng.integers(max(min_spins, 2), max_spins + 1))
        p = lattice_cluster(rng, sites, A_all, abundance, n, b_dir, shell=(3.0, 8.0))
        if max_pair_exponent(p) > weak_limit:
            made += 1
            yield p
