"""Levenberg-Marquardt least squares with box bounds.

Bounded parameters are optimized in an unconstrained internal space
(``sin`` map for two-sided bounds, ``sqrt(u^2 + 1)`` map for one-sided
bounds), so every trial step is feasible and the local quadratic model
stays smooth at the boundary.  Standard errors are computed from a
finite-difference Jacobian in the external parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

__all__ = ["FitResult", "FitInputError", "fit_least_squares"]

_EPS = np.finfo(float).eps
_SQRT_EPS = math.sqrt(_EPS)


class FitInputError(ValueError):
    """Data or starting values unusable for a fit."""


@dataclass
class FitResult:
    """Outcome of a weighted least-squares fit.

    ``covariance`` is indexed like ``free``; fixed parameters report a
    standard error of zero.
    """
    parameters: dict[str, float]
    standard_errors: dict[str, float]
    covariance: np.ndarray
    free: list[str]
    chi2: float
    dof: int
    converged: bool
    n_iterations: int
    message: str = ""
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def redchi(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    @property
    def aic(self) -> float:
        """Akaike criterion for Gaussian errors of known scale: ``chi2 + 2 k``."""
        return self.chi2 + 2 * len(self.free)

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]

    def correlation(self) -> np.ndarray:
        d = np.sqrt(np.diag(self.covariance))
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.covariance / np.outer(d, d)


class _Transform:
    """Map between one external parameter and its unconstrained internal value."""

    def __init__(self, lo: float, hi: float, scale: float):
        self.lo, self.hi, self.s = lo, hi, scale
        if np.isfinite(lo) and np.isfinite(hi):
            self.kind = "both"
        elif np.isfinite(lo):
            self.kind = "lower"
        elif np.isfinite(hi):
            self.kind = "upper"
        else:
            self.kind = "free"

    def to_internal(self, x: float) -> float:
        lo, hi, s = self.lo, self.hi, self.s
        if self.kind == "both":
            return math.asin(min(1.0, max(-1.0, 2.0 * (x - lo) / (hi - lo) - 1.0)))
        if self.kind == "lower":
            return math.sqrt(max((1.0 + (x - lo) / s) ** 2 - 1.0, 0.0))
        if self.kind == "upper":
            return math.sqrt(max((1.0 + (hi - x) / s) ** 2 - 1.0, 0.0))
        return x

    def to_external(self, u: float) -> float:
        lo, hi, s = self.lo, self.hi, self.s
        if self.kind == "both":
            return lo + (hi - lo) * (math.sin(u) + 1.0) / 2.0
        if self.kind == "lower":
            return lo + s * (math.sqrt(u * u + 1.0) - 1.0)
        if self.kind == "upper":
            return hi - s * (math.sqrt(u * u + 1.0) - 1.0)
        return u

    def nudge(self, x: float) -> float:
        """Move a start value sitting exactly on a bound slightly inside."""
        lo, hi = self.lo, self.hi
        if self.kind == "both":
            gap = 1e-6 * (hi - lo)
            return min(max(x, lo + gap), hi - gap)
        if self.kind == "lower" and x <= lo:
            return lo + 1e-6 * self.s
        if self.kind == "upper" and x >= hi:
            return hi - 1e-6 * self.s
        return x


def fit_least_squares(model: Callable, data, init: Mapping[str, float],
                      bounds: Optional[Mapping[str, tuple]] = None,
                      fixed: Iterable[str] = (), *, scale_covariance: bool = True,
                      max_iter: int = 10_000, ftol: float = 1e-10, gtol: float = 1e-12,
                      xtol: float = 1e-14) -> FitResult:
    """Minimize ``sum(((y - model(x, **params)) / y_err) ** 2)``.

    Parameters
    ----------
    model : callable
        ``model(x, **params)`` returning an array shaped like ``y``.
    data : tuple
        ``(x, y)`` or ``(x, y, y_err)``; ``y_err`` defaults to ones.
    init : mapping
        Start values; their order defines the parameter order.
    bounds : mapping, optional
        ``name -> (lo, hi)``; use ``None`` or ``+-inf`` for an open side.
    fixed : iterable of str
        Parameters held at their start value.
    scale_covariance : bool
        Multiply the covariance by ``chi2 / dof`` (errors then reflect the
        observed scatter rather than the stated ``y_err``).

    Convergence is declared when an accepted step changes chi2 by less than
    ``ftol`` relative, when the scaled gradient falls below ``gtol``, or
    when the step length falls below ``xtol`` relative.  A rank-deficient
    Jacobian at the optimum is reported through ``converged=False`` and
    ``message``; no exception is raised for it.
    """
    if len(data) == 2:
        x, y = data
        y_err = None
    else:
        x, y, y_err = data
    y = np.asarray(y, dtype=float)
    y_err = np.ones_like(y) if y_err is None else np.broadcast_to(np.asarray(y_err, float), y.shape)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_err))):
        raise FitInputError("data contain NaN or infinite values")
    if np.any(y_err <= 0):
        raise FitInputError("uncertainties must be positive")
    if isinstance(x, np.ndarray) and x.dtype.kind == "f" and not np.all(np.isfinite(x)):
        raise FitInputError("x contains NaN or infinite values")

    names = list(init)
    fixed = set(fixed)
    unknown = fixed.difference(names)
    if unknown:
        raise FitInputError(f"fixed names not in init: {sorted(unknown)}")
    bounds = dict(bounds or {})
    free = [n for n in names if n not in fixed]
    if not free:
        raise FitInputError("no free parameters")
    dof = y.size - len(free)
    if dof <= 0:
        raise FitInputError(f"{y.size} points cannot constrain {len(free)} parameters")

    values = {n: float(init[n]) for n in names}
    transforms = []
    for n in free:
        lo, hi = bounds.get(n, (None, None))
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if not lo < hi:
            raise FitInputError(f"empty bounds for {n}")
        if not lo <= values[n] <= hi:
            raise FitInputError(f"start value of {n} outside its bounds")
        scale = abs(values[n]) if values[n] != 0 else 1.0
        tr = _Transform(lo, hi, scale)
        values[n] = tr.nudge(values[n])
        transforms.append(tr)

    inv_err = 1.0 / y_err

    def params_of(u):
        p = dict(values)
        for n, tr, ui in zip(free, transforms, u):
            p[n] = tr.to_external(ui)
        return p

    def residual_ext(p):
        r = (y - np.asarray(model(x, **p), dtype=float)) * inv_err
        return r

    def residual(u):
        return residual_ext(params_of(u))

    u = np.array([tr.to_internal(values[n]) for n, tr in zip(free, transforms)])
    u_scale = np.maximum(np.abs(u), 1.0)
    r = residual(u)
    if not np.all(np.isfinite(r)):
        raise FitInputError("model is not finite at the start values")
    chi2 = float(r @ r)

    def jacobian(u, r):
        J = np.empty((r.size, u.size))
        for j in range(u.size):
            h = _SQRT_EPS * max(abs(u[j]), u_scale[j] * 1e-3)
            up = u.copy()
            up[j] += h
            J[:, j] = (residual(up) - r) / h
        return J

    lam = 1e-3
    converged = False
    message = "maximum number of iterations reached"
    it = 0
    J = jacobian(u, r)
    while it < max_iter:
        it += 1
        g = J.T @ r
        col = np.sqrt(np.einsum("ij,ij->j", J, J))
        rnorm = math.sqrt(chi2)
        if chi2 == 0.0:
            converged, message = True, "exact fit"
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            cos = np.where(col > 0, np.abs(g) / (col * rnorm), 0.0)
        if cos.max() < gtol:
            converged, message = True, "gradient below tolerance"
            break
        D = np.maximum(col ** 2, 1e-30 * max(col.max() ** 2, 1e-300))
        improved = False
        while lam < 1e32:
            A = np.vstack([J, np.diag(np.sqrt(lam * D))])
            b = np.concatenate([-r, np.zeros(u.size)])
            step = np.linalg.lstsq(A, b, rcond=None)[0]
            u_new = u + step
            r_new = residual(u_new)
            chi2_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if chi2_new < chi2:
                improved = True
                break
            if np.all(np.abs(step) <= xtol * (np.abs(u) + xtol)):
                break
            lam *= 10.0
        if not improved:
            converged = True
            message = "no further decrease of chi2 possible"
            break
        rel = (chi2 - chi2_new) / max(chi2_new, 1e-300)
        small_step = np.all(np.abs(step) <= xtol * (np.abs(u) + xtol))
        u, r, chi2 = u_new, r_new, chi2_new
        lam = max(lam / 10.0, 1e-12)
        if rel < ftol or small_step or chi2 == 0.0:
            converged, message = True, "relative chi2 change below tolerance"
            break
        J = jacobian(u, r)

    best = params_of(u)
    cov, errors, rank_msg = _covariance(model, x, y, inv_err, best, free, transforms,
                                        chi2, dof, scale_covariance)
    if rank_msg:
        converged = False
        message = f"{message}; {rank_msg}"
    return FitResult(best, errors, cov, free, chi2, dof, converged, it, message, r)


def _covariance(model, x, y, inv_err, best, free, transforms, chi2, dof, scale):
    """Covariance from a one-sided difference Jacobian in external parameters."""
    m0 = np.asarray(model(x, **best), dtype=float)
    base = (y - m0) * inv_err
    floor = 1e-7 * max(float(np.max(np.abs(m0))), 1e-300)
    J = np.empty((base.size, len(free)))
    for j, (n, tr) in enumerate(zip(free, transforms)):
        xv = best[n]
        h = _SQRT_EPS * max(abs(xv), tr.s * 1e-6, 1e-300)
        # widen steps that are lost in rounding (parameters sitting near zero)
        room = max(tr.hi - xv, xv - tr.lo)
        for _ in range(12):
            # step towards the interior so bounded models stay valid
            h = min(h, 0.5 * room)
            hs = -h if xv + h > tr.hi else h
            p = dict(best)
            p[n] = xv + hs
            m = np.asarray(model(x, **p), dtype=float)
            if np.max(np.abs(m - m0)) > floor:
                break
            if h >= 0.5 * room:
                break
            h *= 100.0
        J[:, j] = ((y - m) * inv_err - base) / hs
    JTJ = J.T @ J
    msg = ""
    s = np.linalg.svd(J, compute_uv=False)
    if s.size == 0 or s[-1] <= s[0] * 1e-10 or not np.all(np.isfinite(s)):
        weak = [free[i] for i in np.where(np.abs(np.linalg.svd(J)[2][-1]) > 0.3)[0]] \
            if s.size and np.all(np.isfinite(J)) else free
        msg = f"singular Jacobian, poorly determined: {', '.join(weak)}"
        cov = np.linalg.pinv(JTJ)
    else:
        cov = np.linalg.inv(JTJ)
    if scale:
        cov = cov * (chi2 / dof)
    errors = {n: 0.0 for n in best}
    for i, n in enumerate(free):
        errors[n] = float(np.sqrt(max(cov[i, i], 0.0)))
    return cov, errors, msg
