"""Jackknife empirical likelihood on leave-one-cluster pseudo-values."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .errors import Infeasible, UndefinedLeaveOneOut

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PseudoValues:
    tau_hat: float
    values: np.ndarray
    estimand: str = "WD"

    @property
    def M(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class JelResult:
    tau0: float
    lam: float
    R: float
    p_value: float
    feasible: bool


def pseudo_values(tau_hat: float, deleted, estimand: str = "WD") -> PseudoValues:
    """``M * tau_hat - (M - 1) * tau_(-i)`` for each cluster."""
    deleted = np.asarray(deleted, dtype=np.float64)
    if not np.isfinite(deleted).all() or not math.isfinite(tau_hat):
        raise UndefinedLeaveOneOut(f"{estimand}: leave-one-out estimate undefined for some cluster")
    M = len(deleted)
    vals = M * tau_hat - (M - 1) * deleted
    vals.setflags(write=False)
    return PseudoValues(float(tau_hat), vals, estimand)


def _g(lam, Z):
    den = 1.0 + lam * Z
    return float(np.sum(Z / den)), float(-np.sum((Z / den) ** 2))


def solve_lambda(Z) -> float:
    """Root of ``sum Z_i / (1 + lam Z_i) = 0`` with every ``1 + lam Z_i > 0``.

    The function is strictly decreasing on ``(-1/max Z, -1/min Z)``, so
    Newton steps are kept inside a shrinking bracket and replaced by
    bisection whenever they would leave it.
    """
    Z = np.sort(np.asarray(Z, dtype=np.float64))
    if not Z.any():
        return 0.0
    zmin, zmax = Z[0], Z[-1]
    if not (zmin < 0 < zmax):
        raise Infeasible("centered pseudo-values do not straddle zero")
    # solve for lam * scale on Z / scale, which keeps the bracket finite
    scale = max(-zmin, zmax)
    Zs = Z / scale
    tol = RESIDUAL_TOL / scale
    big = np.finfo(float).max
    with np.errstate(over="ignore", divide="ignore"):
        a = max(-1.0 / Zs[-1], -big)
        b = min(-1.0 / Zs[0], big)
    x = 0.0
    for _ in range(2000):
        g, dg = _g(x, Zs)
        if abs(g) < tol:
            break
        if g > 0:
            a = x
        else:
            b = x
        step = x - g / dg
        x = step if a < step < b else 0.5 * (a + b)
        if b - a <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            break
    return x / scale


def log_ratio(Z) -> tuple[float, float]:
    """``(lambda, R)`` for centered values ``Z``; raises :class:`Infeasible`."""
    Z = np.asarray(Z, dtype=np.float64)
    lam = solve_lambda(Z)
    if lam == 0.0:
        return 0.0, 0.0
    R = 2.0 * float(np.sum(np.log1p(lam * Z)))
    return lam, max(R, 0.0)


def jel_test(pv: PseudoValues, tau0: float) -> JelResult:
    """Likelihood ratio test of ``tau = tau0`` against chi-square(1).

    When ``tau0`` lies outside the convex hull of the pseudo-values the
    constraint is infeasible; that is reported as ``R = inf``, ``p = 0``.
    """
    Z = pv.values - tau0
    try:
        lam, R = log_ratio(Z)
    except Infeasible:
        return JelResult(float(tau0), math.nan, math.inf, 0.0, False)
    return JelResult(float(tau0), lam, R, float(stats.chi2.sf(R, 1)), True)


@dataclass(frozen=True)
class JelInterval:
    lower: float
    upper: float
    flags: tuple = ()


def _R_at(values: np.ndarray, tau: float) -> float:
    try:
        return log_ratio(values - tau)[1]
    except Infeasible:
        return math.inf


def jel_ci(pv: PseudoValues, alpha: float = 0.05, xtol: float = 1e-10) -> JelInterval:
    """``{tau : R(tau) <= chi2_(1, 1-alpha)}`` by root-finding on each side of the mean."""
    v = pv.values
    crit = float(stats.chi2.ppf(1 - alpha, 1))
    center = float(v.mean())
    lo_h, hi_h = float(v.min()), float(v.max())
    if hi_h - lo_h <= 0:
        return JelInterval(center, center, ("degenerate",))
    flags = []
    ends = []
    for edge in (lo_h, hi_h):
        near = edge + 1e-9 * (center - edge)
        f = lambda t: _R_at(v, t) - crit
        if f(near) < 0:
            ends.append(edge)
            flags.append("hull_boundary")
        else:
            a, b = sorted((center, near))
            ends.append(optimize.brentq(f, a, b, xtol=xtol))
    return JelInterval(ends[0], ends[1], tuple(dict.fromkeys(flags)))
