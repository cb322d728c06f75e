"""One-call analysis front end for the six inference procedures."""
from __future__ import annotations

import math

from .data import BOTH_EVENTS, ComparisonRule, Dataset
from .errors import CrtWinError, DegenerateDeletion, MethodError, UndefinedEstimate
from .estimators import ESTIMANDS, NULL_VALUE, WinEstimates, check_estimand, estimate_all
from .jel import jel_ci, jel_test, pseudo_values
from .pairwise import PairCache
from .randomization import PermutationPlan, fs_score_test, perm_result_to_test, permutation_tests
from .variance import (
    ALTERNATIVES,
    TestResult,
    VarianceEstimate,
    fcl_variance,
    jackknife_variance,
    leave_one_out_estimates,
    report_interval,
    wald_test,
    zj_covariance,
)

METHODS = ("wald_score", "wald_u", "wald_jk", "perm", "fs", "jel")


class Analysis:
    """Lazily shared intermediate results for one dataset under one rule.

    The pairwise pass, projections, deletions and variance estimates are
    computed at most once and reused across methods and estimands.
    """

    def __init__(self, d: Dataset, rule: ComparisonRule = BOTH_EVENTS, workers: int = 1,
                 tie_cov: bool = False):
        self.dataset = d
        self.rule = rule
        self.tie_cov = tie_cov
        self.cache = PairCache(d, rule, workers)
        self._memo: dict = {}

    def _get(self, key, fn):
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    @property
    def estimates(self) -> WinEstimates:
        return self._get("est", lambda: estimate_all(self.cache.tallies()))

    @property
    def deleted(self):
        return self._get("del", self.cache.leave_one_cluster)

    def variance(self, method: str) -> VarianceEstimate:
        if method == "fcl":
            def fn():
                tc = self.variance("zj").intermediate["Sigma_wd_tie"] if self.tie_cov else None
                return fcl_variance(self.cache.cluster_scores(), self.estimates, tc)
            return self._get("v_fcl", fn)
        if method == "zj":
            return self._get("v_zj", lambda: zj_covariance(self.cache.projections()))
        if method == "jk":
            return self._get("v_jk", lambda: jackknife_variance(self.deleted))
        raise ValueError(method)

    # ------------------------------------------------------------------
    def test(self, method: str, estimand: str = "WD", null: float | None = None,
             alternative: str = "two.sided", alpha: float = 0.05, use_t: bool = True,
             plan: PermutationPlan | None = None, fs_reference: str = "normal") -> TestResult:
        return self.run([method], [estimand], null, alternative, alpha, use_t, plan,
                        raise_errors=True, fs_reference=fs_reference)[(method, check_estimand(estimand))]

    def run(self, methods=METHODS, estimands=ESTIMANDS, null: float | None = None,
            alternative: str = "two.sided", alpha: float = 0.05, use_t: bool = True,
            plan: PermutationPlan | None = None, raise_errors: bool = False,
            fs_reference: str = "normal") -> dict:
        """``{(method, estimand): TestResult | MethodError}`` for every combination.

        ``use_t`` selects the t(M - 2) reference for the Wald tests. The FS
        test has its own ``fs_reference``: its variance is the exact
        randomization variance, so the normal reference is the default.

        With ``raise_errors`` the first failure propagates instead of being
        stored in the result map.
        """
        if alternative not in ALTERNATIVES:
            raise ValueError(f"alternative must be one of {ALTERNATIVES}")
        estimands = [check_estimand(k) for k in estimands]
        for m in methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
        d = self.dataset
        if fs_reference not in ("normal", "t"):
            raise ValueError("fs_reference must be 'normal' or 't'")
        reference = "t" if use_t else "normal"
        out = {}
        perm = None
        if "perm" in methods:
            for k in estimands:
                _sharp_null_only("perm", k, null)
            plan = plan or PermutationPlan.auto(d.M, d.M1)
            try:
                perm = permutation_tests(self.cache, plan, estimands, alternative)
            except MethodError as exc:
                if raise_errors:
                    raise
                perm = {k: exc for k in estimands}
        for m in methods:
            for k in estimands:
                try:
                    out[(m, k)] = self._one(m, k, null, alternative, alpha, reference, perm, fs_reference)
                except MethodError as exc:
                    if raise_errors:
                        raise
                    out[(m, k)] = exc
        return out

    def _one(self, m, k, null, alternative, alpha, reference, perm, fs_reference) -> TestResult:
        e = self.estimates
        if m in ("wald_score", "wald_u", "wald_jk"):
            v = self.variance({"wald_score": "fcl", "wald_u": "zj", "wald_jk": "jk"}[m])
            return wald_test(e, v, k, reference, alpha, null, alternative)
        if m == "perm":
            if isinstance(perm[k], MethodError):
                raise perm[k]
            return perm_result_to_test(perm[k], e)
        if m == "fs":
            _sharp_null_only("fs", k, null)
            return fs_score_test(self.cache.cluster_scores(), fs_reference, alternative, k, e)
        return self._jel(k, null, alternative, alpha)

    def _jel(self, k, null, alternative, alpha) -> TestResult:
        if alternative != "two.sided":
            raise ValueError("the JEL test is two-sided only")
        e = self.estimates
        tau_hat = e.tau(k)
        if not math.isfinite(tau_hat):
            raise UndefinedEstimate(f"{k} estimate is undefined")
        dt = self.deleted
        if dt.degenerate.any():
            raise DegenerateDeletion("a single-cluster deletion empties an arm")
        pv = pseudo_values(tau_hat, leave_one_out_estimates(dt, k), k)
        tau0 = NULL_VALUE[k] if null is None else float(null)
        r = jel_test(pv, tau0)
        iv = jel_ci(pv, alpha)
        flags = iv.flags + (() if r.feasible else ("infeasible",))
        return TestResult(k, "jel", e.reported(k), tau_hat, tau0, r.R, r.p_value, "chi2", 1, None,
                          report_interval(k, iv.lower, iv.upper), alternative, flags,
                          {"lambda": r.lam, "pseudo_mean": float(pv.values.mean())})


def _sharp_null_only(method, k, null):
    if null is not None and float(null) != NULL_VALUE[k]:
        raise ValueError(f"{method} tests the sharp null only; null must be {NULL_VALUE[k]} for {k}")


def analyze(d: Dataset, method: str = "wald_score", estimand: str = "WD", null: float | None = None,
            alternative: str = "two.sided", alpha: float = 0.05, use_t: bool = True, B: int = 2000,
            seed: int | None = None, rule: ComparisonRule = BOTH_EVENTS, workers: int = 1,
            tie_cov: bool = False, fs_reference: str = "normal") -> TestResult:
    """Estimate one win statistic and test it with one procedure.

    ``null`` is on the inference scale (log scale for WR and WO); the
    default is the no-effect value. For ``perm`` the reference set is fully
    enumerated when it has at most 2e5 allocations, otherwise ``B`` Monte
    Carlo allocations are drawn from ``seed``.
    """
    a = Analysis(d, rule, workers, tie_cov)
    plan = PermutationPlan.auto(d.M, d.M1, B, seed)
    return a.test(method, estimand, null, alternative, alpha, use_t, plan, fs_reference)


__all__ = ["Analysis", "analyze", "METHODS", "CrtWinError"]
