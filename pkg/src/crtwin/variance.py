"""Wald inference with three variance routes.

* ``fcl``: arm-wise sample variances of cluster scores (clustered rank sum).
* ``zj``: bivariate clustered U-statistic covariance of (pi_win, pi_loss).
* ``jk``: delete-one-cluster jackknife.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
from scipy import stats

from .errors import (
    DegenerateDeletion,
    MethodError,
    TooFewClustersPerArm,
    UndefinedEstimate,
    UndefinedGradient,
    UndefinedLeaveOneOut,
    ZeroVariance,
)
from .estimators import ESTIMANDS, NULL_VALUE, WinEstimates, check_estimand, gradients, tau_from_counts
from .pairwise import ClusterScores, DeletedTallySet, ProjectionTable

ALTERNATIVES = ("two.sided", "greater", "less")


@dataclass(frozen=True)
class VarianceEstimate:
    """Per-estimand variance on the inference scale.

    ``var[k]`` is ``nan`` when undefined; ``errors[k]`` then holds the
    exception a Wald test on ``k`` should raise.
    """

    method: str
    M: int
    var: dict
    errors: dict = field(default_factory=dict)
    intermediate: dict = field(default_factory=dict)

    def get(self, estimand: str) -> float:
        key = check_estimand(estimand)
        if key in self.errors:
            raise self.errors[key]
        return self.var[key]


@dataclass(frozen=True)
class TestResult:
    estimand: str
    method: str
    estimate: float
    tau_hat: float
    tau0: float
    statistic: float
    p_value: float
    reference: str
    df: float | None = None
    se: float | None = None
    ci: tuple | None = None
    alternative: str = "two.sided"
    flags: tuple = ()
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def rejects(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


def _require_arms(A: np.ndarray) -> tuple[int, int]:
    M1 = int((A == 1).sum())
    M0 = int((A == 0).sum())
    if M1 < 2 or M0 < 2:
        raise TooFewClustersPerArm(f"need at least 2 clusters per arm, have M1={M1}, M0={M0}")
    return M1, M0


def fcl_variance(cs: ClusterScores, e: WinEstimates | None = None, tie_cov=None) -> VarianceEstimate:
    """Cluster-score variance of the win difference and its transforms.

    Without ``e`` the tie probability is unknown, so only WD, DOOR and WO
    are produced (the WD estimate follows from the scores). ``tie_cov``
    optionally supplies the ZJ covariance of (WD, pi_tie) so that the win
    ratio variance accounts for variability in the tie probability; its
    WD-WD entry is replaced by the cluster-score variance.
    """
    S = np.asarray(cs.S, dtype=np.float64)
    A = np.asarray(cs.A)
    M1, M0 = _require_arms(A)
    M = len(S)
    q = M1 / M
    s1 = float(np.var(S[A == 1], ddof=1))
    s0 = float(np.var(S[A == 0], ddof=1))
    v_wd = (M * q * (1 - q) / (cs.n1 * cs.n0)) ** 2 * (s1 / (q * M) + s0 / ((1 - q) * M))
    wd = float(S[A == 1].sum()) / (cs.n1 * cs.n0) if e is None else e.WD

    var = {"WD": v_wd, "DOOR": v_wd / 4.0}
    errors = {}
    if abs(wd) < 1:
        var["WO"] = 4.0 * v_wd / (1 - wd * wd) ** 2
    else:
        var["WO"] = math.nan
        errors["WO"] = UndefinedGradient("WO: |WD| = 1")
    if e is None:
        var["WR"] = math.nan
        errors["WR"] = UndefinedGradient("WR: tie probability not supplied")
    else:
        g = gradients(e)
        if g.wrt_wd["WR"] is None:
            var["WR"] = math.nan
            errors["WR"] = UndefinedGradient(f"WR: {g.reason['WR']}")
        elif tie_cov is None:
            var["WR"] = g.wrt_wd["WR"] ** 2 * v_wd
        else:
            C = np.array(tie_cov, dtype=float)
            C[0, 0] = v_wd
            gv = np.array([g.wrt_wd["WR"], g.wrt_tie["WR"]])
            var["WR"] = float(gv @ C @ gv)
    return VarianceEstimate("fcl", M, var, errors, {"sigma2_1": s1, "sigma2_0": s0})


def zj_covariance(p: ProjectionTable, d=None) -> VarianceEstimate:
    """Bivariate clustered U-statistic covariance and delta-method variances."""
    A = np.asarray(p.A)
    M1, M0 = _require_arms(A)
    G = np.column_stack([p.G_win, p.G_loss])
    S1 = np.cov(G[A == 1], rowvar=False, ddof=1)
    S0 = np.cov(G[A == 0], rowvar=False, ddof=1)
    N1, N0 = p.Nbar1, p.Nbar0
    SU = (N0 ** 2 / M1) * S1 + (N1 ** 2 / M0) * S0
    Spi = SU / (N1 * N0) ** 2
    pw, pl = p.pi_win, p.pi_loss
    g = gradients(SimpleNamespace(pi_win=pw, pi_loss=pl, pi_tie=1 - pw - pl, WD=pw - pl))
    var, errors = {}, {}
    for k in ESTIMANDS:
        vec = g.wrt_pi[k]
        if vec is None:
            var[k] = math.nan
            errors[k] = UndefinedGradient(f"{k}: {g.reason[k]}")
        else:
            var[k] = max(float(vec @ Spi @ vec), 0.0)
    # covariance of (WD, pi_tie) = J Spi J^T
    J = np.array([[1.0, -1.0], [-1.0, -1.0]])
    inter = {"Sigma1": S1, "Sigma0": S0, "SigmaU": SU, "Sigma_pi": Spi, "Sigma_wd_tie": J @ Spi @ J.T}
    return VarianceEstimate("zj", len(A), var, errors, inter)


def leave_one_out_estimates(dt: DeletedTallySet, estimand: str) -> np.ndarray:
    """Inference-scale estimates with each cluster deleted; ``nan`` where undefined."""
    out = tau_from_counts(dt.W, dt.L, dt.n1, dt.n0, estimand)
    return np.where(dt.degenerate | ~np.isfinite(out), np.nan, out)


def jackknife_variance(dt: DeletedTallySet, estimands=ESTIMANDS) -> VarianceEstimate:
    M = dt.M
    var, errors, loo = {}, {}, {}
    for k in estimands:
        k = check_estimand(k)
        if dt.degenerate.any():
            var[k] = math.nan
            errors[k] = DegenerateDeletion(f"deleting cluster(s) {np.flatnonzero(dt.degenerate).tolist()} empties an arm")
            continue
        t = leave_one_out_estimates(dt, k)
        loo[k] = t
        if np.isnan(t).any():
            var[k] = math.nan
            errors[k] = UndefinedLeaveOneOut(f"{k}: undefined after deleting cluster(s) {np.flatnonzero(np.isnan(t)).tolist()}")
            continue
        var[k] = float((M - 1) / M * np.sum((t - t.mean()) ** 2))
    return VarianceEstimate("jk", M, var, errors, {"loo": loo})


def p_from_z(z: float, alternative: str, df: float | None) -> float:
    dist = stats.norm if df is None else stats.t(df)
    if alternative == "two.sided":
        return float(min(1.0, 2.0 * dist.sf(abs(z))))
    if alternative == "greater":
        return float(dist.sf(z))
    if alternative == "less":
        return float(dist.cdf(z))
    raise ValueError(f"alternative must be one of {ALTERNATIVES}")


def report_interval(estimand: str, lo: float, hi: float) -> tuple[float, float]:
    """Map an inference-scale interval to the reporting scale."""
    if estimand in ("WR", "WO"):
        return math.exp(lo), math.exp(hi)
    if estimand == "DOOR":
        return max(lo, 0.0), min(hi, 1.0)
    return lo, hi


def wald_test(e: WinEstimates, v: VarianceEstimate, estimand: str, reference: str = "t",
              alpha: float = 0.05, tau0: float | None = None, alternative: str = "two.sided") -> TestResult:
    """Wald test of ``tau = tau0`` on the inference scale.

    ``reference`` is ``"t"`` (``M - 2`` degrees of freedom) or ``"normal"``.
    The interval is two-sided at level ``1 - alpha`` whatever the alternative.
    """
    key = check_estimand(estimand)
    tau0 = NULL_VALUE[key] if tau0 is None else float(tau0)
    tau = e.tau(key)
    if not math.isfinite(tau):
        raise UndefinedEstimate(f"{key} estimate is undefined")
    var = v.get(key)
    if not var > 0:
        raise ZeroVariance(f"{key} variance is {var}")
    se = math.sqrt(var)
    df = None if reference == "normal" else v.M - 2
    if df is not None and df < 1:
        raise TooFewClustersPerArm("t reference needs M >= 3")
    z = (tau - tau0) / se
    crit = float(stats.norm.ppf(1 - alpha / 2) if df is None else stats.t.ppf(1 - alpha / 2, df))
    ci = report_interval(key, tau - crit * se, tau + crit * se)
    method = {"fcl": "wald_score", "zj": "wald_u", "jk": "wald_jk"}.get(v.method, v.method)
    return TestResult(key, method, e.reported(key), tau, tau0, z, p_from_z(z, alternative, df),
                      "normal" if df is None else "t", df, se, ci, alternative)


__all__ = [
    "VarianceEstimate", "TestResult", "fcl_variance", "zj_covariance", "jackknife_variance",
    "leave_one_out_estimates", "wald_test", "p_from_z", "MethodError",
]
