"""Exact Hahn echo of a small nuclear cluster.

The bath Hamiltonians conditioned on the electron state are::

    H(+/-) = +/- 1/2 sum_i A_i Iz_i + sum_{i<j} d_ij (Ix Ix + Iy Iy - 2 Iz Iz)_ij

in units hbar = 1 (entries in rad/s, tau in s). Both conserve total Iz, so
they are diagonalized sector by sector. Basis state ``J`` has spin ``k``
down iff bit ``k`` of ``J`` is set; ``J = 0`` is all spins up.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from .couplings import CouplingTable
from .errors import CapacityError, InvalidInputError, SpindiffError
from .pairecho import pair_amplitude, pair_exponent

MAX_SPINS = 12
REALNESS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ClusterProblem:
    A: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).reshape(-1)
        D = np.asarray(self.D, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", D)
        if len(A) < 1:
            raise InvalidInputError("cluster needs at least one spin")
        if D.shape != (len(A), len(A)):
            raise InvalidInputError(f"D must be {len(A)}x{len(A)}, got {D.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(D))):
            raise InvalidInputError("couplings must be finite")
        if not np.array_equal(D, D.T):
            raise InvalidInputError("D must be symmetric")
        if np.any(np.diag(D) != 0):
            raise InvalidInputError("D must have zero diagonal")

    @property
    def N(self) -> int:
        return len(self.A)

    @classmethod
    def from_pairs(cls, A, pairs) -> "ClusterProblem":
        A = np.asarray(A, float)
        D = np.zeros((len(A), len(A)))
        for i, j, d in pairs:
            D[i, j] = D[j, i] = d
        return cls(A, D)


@dataclass(frozen=True)
class EchoResult:
    tau: float
    S: complex
    basis: str = "trace"

    @property
    def real(self) -> float:
        return float(np.real(self.S))

    @property
    def magnitude(self) -> float:
        return float(np.abs(self.S))


def _check_capacity(p: ClusterProblem, max_spins: int):
    if p.N > max_spins:
        raise CapacityError(
            f"cluster of {p.N} spins exceeds the exact-oracle capacity of {max_spins}; "
            "truncate the cluster (e.g. cluster_from_table(..., m=...)) or raise max_spins"
        )


def _mz(N: int, states: np.ndarray) -> np.ndarray:
    """(len(states), N) array of m_k = +1/2 (bit clear) or -1/2 (bit set)."""
    bits = (states[:, None] >> np.arange(N)[None, :]) & 1
    return 0.5 - bits


def _block(p: ClusterProblem, states: np.ndarray):
    """Zeeman-like diagonal, dipolar diagonal and flip-flop part of one sector."""
    N = p.N
    m = _mz(N, states)
    zeeman = 0.5 * m @ p.A
    iu, ju = np.triu_indices(N, k=1)
    dz = -2.0 * (m[:, iu] * m[:, ju]) @ p.D[iu, ju]
    off = np.zeros((len(states), len(states)))
    where = {int(s): k for k, s in enumerate(states)}
    for i, j in zip(iu, ju):
        dij = p.D[i, j]
        if dij == 0.0:
            continue
        mask = (1 << int(i)) | (1 << int(j))
        for a, s in enumerate(states):
            s = int(s)
            # flip-flop only connects states whose bits i and j differ
            if ((s >> int(i)) ^ (s >> int(j))) & 1:
                off[a, where[s ^ mask]] = 0.5 * dij
    return zeeman, dz, off


def _sectors(N: int) -> list[np.ndarray]:
    states = np.arange(2**N, dtype=np.int64)
    weight = np.array([bin(int(s)).count("1") for s in states])
    return [states[weight == w] for w in range(N + 1)]


def build_conditional_hamiltonians(p: ClusterProblem, max_spins: int = MAX_SPINS):
    """Dense (H_plus, H_minus), each 2^N x 2^N, real symmetric."""
    _check_capacity(p, max_spins)
    dim = 2**p.N
    Hp = np.zeros((dim, dim))
    Hm = np.zeros((dim, dim))
    for states in _sectors(p.N):
        zeeman, dz, off = _block(p, states)
        ix = np.ix_(states, states)
        Hp[ix] = off + np.diag(dz + zeeman)
        Hm[ix] = off + np.diag(dz - zeeman)
    return Hp, Hm


class _BlockEigensystem:
    """Eigendecompositions of H(+/-) per total-Iz sector, reused across tau."""

    def __init__(self, p: ClusterProblem, max_spins: int = MAX_SPINS):
        _check_capacity(p, max_spins)
        self.N = p.N
        self.blocks = []
        for states in _sectors(p.N):
            zeeman, dz, off = _block(p, states)
            ep, vp = np.linalg.eigh(off + np.diag(dz + zeeman))
            em, vm = np.linalg.eigh(off + np.diag(dz - zeeman))
            self.blocks.append((states, ep, vp, em, vm))

    @staticmethod
    def _echo_operator(tau, ep, vp, em, vm):
        if tau == 0.0:
            # every propagator is the identity; avoid eigenvector round-off
            return np.eye(len(ep), dtype=complex)
        up = (vp * np.exp(-1j * ep * tau)) @ vp.T   # e^{-i H+ tau}
        um = (vm * np.exp(-1j * em * tau)) @ vm.T   # e^{-i H- tau}
        # e^{iH-t} e^{iH+t} e^{-iH-t} e^{-iH+t} = (e^{-iH+t} e^{-iH-t})^dagger (e^{-iH-t} e^{-iH+t})
        return (up @ um).conj().T @ (um @ up)

    def trace(self, tau: float) -> complex:
        total = 0j
        for states, ep, vp, em, vm in self.blocks:
            total += np.trace(self._echo_operator(tau, ep, vp, em, vm))
        return total / 2**self.N

    def state(self, J: int, tau: float) -> complex:
        for states, ep, vp, em, vm in self.blocks:
            k = np.searchsorted(states, J)
            if k < len(states) and states[k] == J:
                return complex(self._echo_operator(tau, ep, vp, em, vm)[k, k])
        raise InvalidInputError(f"basis index {J} not found")  # unreachable for valid J


def exact_echo_trace(p: ClusterProblem, tau: float, max_spins: int = MAX_SPINS) -> EchoResult:
    """Infinite-temperature echo (1/2^N) Tr[e^{iH-t} e^{iH+t} e^{-iH-t} e^{-iH+t}]."""
    S = _BlockEigensystem(p, max_spins).trace(float(tau))
    _check_real(S)
    return EchoResult(float(tau), S, "trace")


def exact_echo_trace_curve(p: ClusterProblem, taus, max_spins: int = MAX_SPINS) -> np.ndarray:
    """Real part of the exact trace echo on a grid; one diagonalization."""
    sys = _BlockEigensystem(p, max_spins)
    out = np.empty(len(np.atleast_1d(taus)))
    for k, t in enumerate(np.atleast_1d(taus)):
        S = sys.trace(float(t))
        _check_real(S)
        out[k] = S.real
    return out


def exact_echo_state(p: ClusterProblem, J: int, tau: float, max_spins: int = MAX_SPINS) -> EchoResult:
    """Echo amplitude <J| e^{iH-t} e^{iH+t} e^{-iH-t} e^{-iH+t} |J> for one bath state."""
    if not 0 <= int(J) < 2**p.N:
        raise InvalidInputError(f"basis index {J} out of range [0, {2**p.N})")
    S = _BlockEigensystem(p, max_spins).state(int(J), float(tau))
    return EchoResult(float(tau), S, "single-state")


def _check_real(S: complex):
    if abs(S.imag) > REALNESS_TOL:
        raise SpindiffError(f"trace echo has imaginary part {S.imag:.3e}; expected real")


def pair_approximation(p: ClusterProblem, taus) -> np.ndarray:
    """Pair-correlation echo of the same cluster, for comparison."""
    taus = np.atleast_1d(np.asarray(taus, float))
    x = np.zeros_like(taus)
    for i, j in combinations(range(p.N), 2):
        if p.D[i, j] != 0.0:
            x = x + pair_exponent(p.A[i], p.A[j], p.D[i, j], taus)
    return np.exp(-x)


def max_pair_exponent(p: ClusterProblem) -> float:
    """Largest attainable single-pair exponent, max over tau of d^2 dA^2/(4w^4)(cos wt - 1)^2."""
    iu, ju = np.triu_indices(p.N, k=1)
    amp, _ = pair_amplitude(p.A[iu], p.A[ju], p.D[iu, ju])
    # (cos - 1)^2 peaks at 4
    return float(4.0 * amp.max()) if len(amp) else 0.0


def cluster_from_table(table: CouplingTable, m: int, center: Optional[np.ndarray] = None) -> ClusterProblem:
    """The ``m`` spins of ``table`` nearest to ``center`` (default: the donor)."""
    if table.pos is None:
        raise InvalidInputError("table carries no positions")
    c = np.zeros(3) if center is None else np.asarray(center, float)
    dist = np.linalg.norm(table.pos - c, axis=1)
    pick = np.sort(np.argsort(dist, kind="stable")[:m])
    D = table.dense_dipolar()[np.ix_(pick, pick)]
    return ClusterProblem(table.A[pick], D)
