"""Least-squares fits of echo decays and of T_SD saturation with laser power.

Decay model (``tau`` is the pulse spacing, the echo sits at ``2 tau``)::

    S(2 tau) = S0 exp(-2 tau / T_ID) exp(-2 tau / T_2) exp(-(2 tau / T_SD)**n)

Saturation model::

    T_SD(P) = T (1 - exp(-alpha (P - P0)))

Both are solved with the damped Gauss-Newton routine :func:`levenberg_marquardt`
using analytic Jacobians. Disabled time constants are ``math.inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import hashlib
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ConvergenceError, InvalidInputError

PARAM_NAMES = ("S0", "T_ID", "T_2", "T_SD", "n")
TIME_PARAMS = ("T_ID", "T_2", "T_SD")
N_BOUNDS = (1.0, 4.0)
DEFAULT_MIN_SIGNAL = 0.02


# -- optimizer ---------------------------------------------------------------


@dataclass
class LMResult:
    x: np.ndarray
    jac: np.ndarray
    residuals: np.ndarray
    rss: float
    iterations: int
    converged: bool
    grad_norm: float
    history: list = field(default_factory=list)
    message: str = ""


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0,
    valid: Optional[Callable[[np.ndarray], bool]] = None,
    max_iter: int = 500,
    xtol: float = 1e-12,
    ftol: float = 1e-15,
    gtol: float = 1e-10,
    lam0: float = 1e-3,
    scale: float = 1.0,
    gtol_final: float = 1e-6,
) -> LMResult:
    """Minimize ``sum(residual(x)**2)``.

    Damping is Marquardt's diagonal scaling, so the iteration is invariant
    to rescaling of individual parameters. A trial step is accepted only if
    it lowers the objective (and passes ``valid``); otherwise damping grows.
    The gradient test uses ``max_k |J_k . r| / |J_k|`` divided by ``scale``
    (the data norm), which is invariant to parameter rescaling.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    rss = float(r @ r)
    if not math.isfinite(rss):
        raise ConvergenceError("objective is not finite at the initial guess", last=x, iterations=0)
    lam = lam0
    history = [rss]
    J = jacobian(x)
    it = 0
    message = "maximum iterations reached"
    converged = False
    gnorm = _scaled_gradient(J, r, scale)
    while it < max_iter:
        it += 1
        g = J.T @ r
        JtJ = J.T @ J
        diag = np.diag(JtJ).copy()
        diag[diag == 0] = 1.0
        gnorm = _scaled_gradient(J, r, scale)
        if gnorm < gtol:
            converged, message = True, "gradient below tolerance"
            break
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            xn = x + step
            if valid is not None and not valid(xn):
                lam *= 10.0
                continue
            rn = residual(xn)
            rssn = float(rn @ rn)
            if math.isfinite(rssn) and rssn <= rss:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill step at any damping: x is a (numerical) stationary point
            gnorm = _scaled_gradient(J, r, scale)
            converged, message = gnorm < gtol_final, "no further decrease possible"
            break
        drel = np.max(np.abs(step) / np.maximum(np.abs(x), 1e-300))
        frel = (rss - rssn) / max(rss, 1e-300)
        x, r, rss = xn, rn, rssn
        history.append(rss)
        J = jacobian(x)
        lam = max(lam / 10.0, 1e-12)
        if drel < xtol or frel < ftol:
            gnorm = _scaled_gradient(J, r, scale)
            converged, message = gnorm < gtol_final, "step below tolerance"
            break
    return LMResult(x, J, r, rss, it, converged, gnorm, history, message)


def _scaled_gradient(J, r, scale=1.0) -> float:
    cn = np.linalg.norm(J, axis=0)
    cn[cn == 0] = 1.0
    return float(np.max(np.abs(J.T @ r) / cn) / scale)


# -- decay model -------------------------------------------------------------


@dataclass(frozen=True)
class DecayModel:
    S0: float = 1.0
    T_ID: float = 1.2e-3
    T_2: float = math.inf
    T_SD: float = 124e-6
    n: float = 2.3
    free: tuple = ("S0", "T_SD")

    def validate(self) -> "DecayModel":
        for name in TIME_PARAMS:
            v = getattr(self, name)
            if not v > 0:
                raise InvalidInputError(f"{name} must be > 0 (use math.inf to disable), got {v}")
        if not N_BOUNDS[0] <= self.n <= N_BOUNDS[1]:
            raise InvalidInputError(f"stretch exponent n must lie in {list(N_BOUNDS)}, got {self.n}")
        if not self.S0 > 0:
            raise InvalidInputError("S0 must be > 0")
        for name in self.free:
            if name not in PARAM_NAMES:
                raise InvalidInputError(f"unknown parameter {name!r}")
            if name in TIME_PARAMS and math.isinf(getattr(self, name)):
                raise InvalidInputError(f"{name} is disabled (inf) and cannot float")
        return self

    def values(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}


def eval_decay_model(m: DecayModel, tau):
    """Model echo at 2 tau for pulse spacing(s) ``tau`` in seconds."""
    t2 = 2.0 * np.asarray(tau, dtype=float)
    x = t2 / m.T_SD
    S = m.S0 * np.exp(-t2 / m.T_ID - t2 / m.T_2 - x**m.n)
    return float(S) if np.ndim(S) == 0 else S


def decay_model_gradient(m: DecayModel, tau) -> dict:
    """Analytic partial derivatives of :func:`eval_decay_model`."""
    t2 = 2.0 * np.asarray(tau, dtype=float)
    S = np.asarray(eval_decay_model(m, tau))
    x = t2 / m.T_SD
    xn = x**m.n
    with np.errstate(divide="ignore", invalid="ignore"):
        lnx = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), 0.0)
    return {
        "S0": S / m.S0,
        "T_ID": S * t2 / m.T_ID**2,
        "T_2": S * t2 / m.T_2**2,
        "T_SD": S * m.n * xn / m.T_SD,
        "n": -S * xn * lnx,
    }


@dataclass
class DecayModelFit:
    model: DecayModel
    estimates: dict
    stderr: dict
    ci95: dict
    rss: float
    iterations: int
    converged: bool
    grad_norm: float
    residuals: np.ndarray
    n_points: int
    ci_method: str = "linearized"
    log_params: bool = True
    history: list = field(default_factory=list)

    @property
    def T_SD(self) -> float:
        return self.estimates["T_SD"]

    @property
    def n(self) -> float:
        return self.estimates["n"]

    def report(self, source: str = "", digest: str = "") -> dict:
        """JSON-serializable fit report (times in seconds)."""
        return {
            "source": source,
            "input_digest": digest,
            "model": "S0*exp(-2tau/T_ID)*exp(-2tau/T_2)*exp(-(2tau/T_SD)^n)",
            "estimates": {k: _json_float(v) for k, v in self.estimates.items()},
            "free": list(self.model.free),
            "stderr": {k: _json_float(v) for k, v in self.stderr.items()},
            "ci95": {k: [_json_float(a), _json_float(b)] for k, (a, b) in self.ci95.items()},
            "ci_method": self.ci_method,
            "include_id": not math.isinf(self.model.T_ID),
            "include_T2": not math.isinf(self.model.T_2),
            "rss": self.rss,
            "n_points": self.n_points,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
        }


def _json_float(v):
    v = float(v)
    return None if math.isinf(v) or math.isnan(v) else v


def _initial_guess(tau, S, template: DecayModel) -> DecayModel:
    free = template.free
    S0 = float(np.max(S)) if "S0" in free else template.S0
    t2 = 2.0 * tau
    # strip the exponential factors before locating the SD e-fold point
    sd = S / (S0 * np.exp(-t2 / template.T_ID - t2 / template.T_2))
    T_SD = template.T_SD
    if "T_SD" in free:
        below = np.nonzero(sd <= 1.0 / math.e)[0]
        if len(below):
            k = below[0]
            if k == 0:
                T_SD = t2[0]
            else:
                # linear interpolation of the 1/e crossing
                f0, f1 = sd[k - 1], sd[k]
                T_SD = t2[k - 1] + (f0 - 1 / math.e) * (t2[k] - t2[k - 1]) / (f0 - f1)
        else:
            last = sd[-1]
            if 0 < last < 1:
                T_SD = t2[-1] / (-math.log(last)) ** (1.0 / template.n)
            else:
                T_SD = 10.0 * t2[-1]
    return replace(template, S0=S0, T_SD=float(T_SD))


def fit_decay(curve, model_template: DecayModel = DecayModel(), log_params: bool = True,
              min_signal: float = DEFAULT_MIN_SIGNAL, ci_method: str = "linearized",
              n_boot: int = 1000, boot_seed: int = 0, max_iter: int = 500,
              initial: Optional[DecayModel] = None) -> DecayModelFit:
    """Fit a decay curve (``curve.tau`` in s, ``curve.S``) to the decay model.

    Parameters named in ``model_template.free`` float; the rest stay at the
    template values. Points with ``S < min_signal`` are excluded. With
    ``log_params`` the time constants are optimized as logarithms.
    """
    template = model_template.validate()
    tau = np.asarray(curve.tau, dtype=float)
    S = np.asarray(curve.S, dtype=float)
    if tau.shape != S.shape or tau.ndim != 1:
        raise InvalidInputError("tau and S must be 1-d arrays of equal length")
    keep = np.isfinite(S) & np.isfinite(tau) & (S >= min_signal)
    tau, S = tau[keep], S[keep]
    free = list(template.free)
    if len(free) == 0:
        raise InvalidInputError("no free parameters")
    if len(tau) < len(free) + 3:
        raise InvalidInputError(
            f"need at least {len(free) + 3} points above the {min_signal} signal floor, got {len(tau)}")
    if np.any(tau < 0) or len(np.unique(tau)) < len(free) + 1 or np.ptp(tau) == 0:
        raise InvalidInputError("degenerate tau grid")

    start = initial if initial is not None else _initial_guess(tau, S, template)
    pack, unpack = _codec(start, free, log_params)

    def residual(u):
        return eval_decay_model(unpack(u), tau) - S

    def jacobian(u):
        m = unpack(u)
        g = decay_model_gradient(m, tau)
        cols = []
        for name in free:
            col = g[name]
            if log_params and name in TIME_PARAMS:
                col = col * getattr(m, name)
            cols.append(col)
        return np.column_stack(cols)

    def valid(u):
        m = unpack(u)
        if not np.all(np.isfinite(u)):
            return False
        if "n" in free and not N_BOUNDS[0] <= m.n <= N_BOUNDS[1]:
            return False
        return all(getattr(m, k) > 0 for k in ("S0",) + TIME_PARAMS)

    res = levenberg_marquardt(residual, jacobian, pack(start), valid=valid, max_iter=max_iter,
                              scale=float(np.linalg.norm(S)) or 1.0)
    best = unpack(res.x)
    if not res.converged:
        raise ConvergenceError(f"decay fit did not converge: {res.message}", last=best,
                               iterations=res.iterations)

    g = decay_model_gradient(best, tau)
    Jlin = np.column_stack([g[k] for k in free])
    stderr, ci = _linearized_ci(Jlin, res.rss, len(tau), free, best.values())
    if ci_method == "bootstrap":
        ci = _bootstrap_ci(tau, S - res.residuals, res.residuals, template, best, free,
                           log_params, n_boot, boot_seed, max_iter)
    elif ci_method != "linearized":
        raise InvalidInputError(f"unknown ci_method {ci_method!r}")
    return DecayModelFit(
        model=best, estimates=best.values(), stderr=stderr, ci95=ci, rss=res.rss,
        iterations=res.iterations, converged=res.converged, grad_norm=res.grad_norm,
        residuals=res.residuals, n_points=len(tau), ci_method=ci_method,
        log_params=log_params, history=res.history,
    )


def _codec(start: DecayModel, free, log_params):
    def pack(m: DecayModel):
        return np.array([math.log(getattr(m, k)) if log_params and k in TIME_PARAMS else getattr(m, k)
                         for k in free])

    def unpack(u):
        vals = {}
        for k, v in zip(free, u):
            vals[k] = float(np.exp(v)) if log_params and k in TIME_PARAMS else float(v)
        return replace(start, **vals)

    return pack, unpack


def _linearized_ci(J, rss, m, names, values):
    p = len(names)
    dof = max(m - p, 1)
    s2 = rss / dof
    try:
        cov = s2 * np.linalg.inv(J.T @ J)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(p, np.inf)
    tq = stats.t.ppf(0.975, dof)
    stderr = {k: float(s) for k, s in zip(names, se)}
    ci = {k: (values[k] - tq * s, values[k] + tq * s) for k, s in zip(names, se)}
    return stderr, ci


def _bootstrap_ci(tau, fitted, resid, template, best, free, log_params, n_boot, seed, max_iter):
    from .pairecho import DecayCurve

    rng = np.random.default_rng(seed)
    draws = {k: [] for k in free}
    for _ in range(n_boot):
        y = fitted + rng.choice(resid, size=len(resid), replace=True)
        try:
            f = fit_decay(DecayCurve(tau, y), template, log_params=log_params, min_signal=-np.inf,
                          initial=best, max_iter=max_iter)
        except (ConvergenceError, InvalidInputError):
            continue
        for k in free:
            draws[k].append(f.estimates[k])
    ci = {}
    for k in free:
        lo, hi = np.percentile(draws[k], [2.5, 97.5]) if draws[k] else (np.nan, np.nan)
        v = best.values()[k]
        # percentile intervals need not contain the estimate; widen to include it
        ci[k] = (float(min(lo, v)), float(max(hi, v)))
    return ci


# -- saturation --------------------------------------------------------------


@dataclass
class SaturationFit:
    T: float
    alpha: float
    P0: float
    ci95: dict
    stderr: dict
    rss: float
    iterations: int
    converged: bool

    def __call__(self, P):
        return saturation_model(P, self.T, self.alpha, self.P0)

    def report(self) -> dict:
        return {
            "model": "T*(1-exp(-alpha*(P-P0)))",
            "units": {"T": "s", "alpha": "1/mW", "P0": "mW"},
            "estimates": {"T": self.T, "alpha": self.alpha, "P0": self.P0},
            "stderr": self.stderr,
            "ci95": {k: list(v) for k, v in self.ci95.items()},
            "rss": self.rss,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def saturation_model(P, T, alpha, P0):
    P = np.asarray(P, dtype=float)
    return T * (1.0 - np.exp(-alpha * (P - P0)))


def _saturation_jac(P, T, alpha, P0):
    e = np.exp(-alpha * (P - P0))
    return np.column_stack([1.0 - e, T * (P - P0) * e, -T * alpha * e])


def fit_saturation(points: Sequence, max_iter: int = 500) -> SaturationFit:
    """Fit (power mW, T_SD s) points to T (1 - exp(-alpha (P - P0)))."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise InvalidInputError("need at least 4 (power, T_SD) points")
    P, y = pts[:, 0], pts[:, 1]
    if np.ptp(P) == 0:
        raise InvalidInputError("powers must not all be equal")

    # coarse scan over alpha with P0 = 0 and T from linear least squares
    best = None
    for alpha in np.geomspace(0.01, 100.0, 81) / max(np.ptp(P), 1e-12):
        basis = 1.0 - np.exp(-alpha * P)
        denom = basis @ basis
        if denom == 0:
            continue
        T = (basis @ y) / denom
        rss = float(np.sum((T * basis - y) ** 2))
        if T > 0 and (best is None or rss < best[0]):
            best = (rss, T, alpha)
    if best is None:
        raise ConvergenceError("no positive plateau found for saturation fit")
    x0 = np.array([best[1], best[2], 0.0])

    res = levenberg_marquardt(
        lambda u: saturation_model(P, *u) - y,
        lambda u: _saturation_jac(P, *u),
        x0,
        valid=lambda u: bool(np.all(np.isfinite(u)) and u[0] > 0 and u[1] > 0),
        max_iter=max_iter,
        scale=float(np.linalg.norm(y)) or 1.0,
    )
    if not res.converged:
        raise ConvergenceError(f"saturation fit did not converge: {res.message}", last=res.x,
                               iterations=res.iterations)
    T, alpha, P0 = (float(v) for v in res.x)
    names = ["T", "alpha", "P0"]
    stderr, ci = _linearized_ci(_saturation_jac(P, T, alpha, P0), res.rss, len(P), names,
                                dict(zip(names, (T, alpha, P0))))
    return SaturationFit(T, alpha, P0, ci, stderr, res.rss, res.iterations, res.converged)


def digest_arrays(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()[:16]
