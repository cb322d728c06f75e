"""Randomization inference: cluster permutation test and the FS score test."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .data import BOTH_EVENTS, ComparisonRule, Dataset
from .errors import CapExceeded
from .estimators import ESTIMANDS, NULL_VALUE, check_estimand, estimate_all, gradients
from .pairwise import ClusterScores, PairCache
from .variance import TestResult, p_from_z

DEFAULT_CAP = 200_000
_TOL = 1e-10


@dataclass(frozen=True)
class PermutationPlan:
    """Reference set of allocations with exactly ``M1`` treated clusters.

    ``mode="full"`` enumerates all ``C(M, M1)`` allocations;
    ``mode="monte_carlo"`` draws ``B`` uniformly with replacement.
    """

    mode: str = "monte_carlo"
    B: int = 2000
    seed: int | None = None
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.mode not in ("full", "monte_carlo"):
            raise ValueError(f"unknown permutation mode {self.mode!r}")
        if self.mode == "monte_carlo" and self.B < 1:
            raise ValueError("B must be positive")

    @classmethod
    def auto(cls, M: int, M1: int, B: int = 2000, seed=None, cap: int = DEFAULT_CAP) -> "PermutationPlan":
        """Full enumeration whenever the reference set fits under ``cap``."""
        if math.comb(M, M1) <= cap:
            return cls("full", B, seed, cap)
        return cls("monte_carlo", B, seed, cap)

    def allocations(self, M: int, M1: int) -> np.ndarray:
        if self.mode == "full":
            total = math.comb(M, M1)
            if total > self.cap:
                raise CapExceeded(f"C({M},{M1}) = {total} allocations exceeds cap {self.cap}")
            out = np.zeros((total, M), dtype=np.int8)
            for r, idx in enumerate(itertools.combinations(range(M), M1)):
                out[r, list(idx)] = 1
            return out
        rng = np.random.default_rng(self.seed)
        base = np.zeros(M, dtype=np.int8)
        base[:M1] = 1
        return rng.permuted(np.tile(base, (self.B, 1)), axis=1)


@dataclass(frozen=True, eq=False)
class PermutationResult:
    estimand: str
    observed: float
    p_value: float
    n_undefined: int
    n_alloc: int
    mode: str
    alternative: str = "two.sided"
    replicates: np.ndarray | None = None


def permutation_statistic(W, L, n1, n0, estimand: str) -> np.ndarray:
    """Centered permutation statistic: WD, log WR, log WO or DOOR - 1/2."""
    key = check_estimand(estimand)
    W = np.asarray(W, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    N = np.asarray(n1, dtype=np.float64) * np.asarray(n0, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        if key == "WD":
            return (W - L) / N
        if key == "DOOR":
            return (W - L) / (2.0 * N)
        if key == "WR":
            return np.log(W) - np.log(L)
        T = N - W - L
        return np.log(W + 0.5 * T) - np.log(L + 0.5 * T)


def count_extreme(reps: np.ndarray, obs: float, alternative: str = "two.sided") -> tuple[int, int]:
    """Replicates at least as extreme as ``obs``; undefined ones always count."""
    reps = np.asarray(reps, dtype=np.float64)
    undefined = ~np.isfinite(reps)
    finite = reps[~undefined]
    if alternative == "two.sided":
        a = abs(obs) if math.isfinite(obs) else math.inf
        hit = np.abs(finite) >= a - _TOL * max(1.0, a) if math.isfinite(a) else np.zeros(finite.shape, bool)
    elif alternative == "greater":
        hit = finite >= obs - _TOL * max(1.0, abs(obs)) if math.isfinite(obs) else finite >= obs
    elif alternative == "less":
        hit = finite <= obs + _TOL * max(1.0, abs(obs)) if math.isfinite(obs) else finite <= obs
    else:
        raise ValueError(f"bad alternative {alternative!r}")
    return int(hit.sum() + undefined.sum()), int(undefined.sum())


def permutation_tests(cache: PairCache, plan: PermutationPlan, estimands=ESTIMANDS,
                      alternative: str = "two.sided", keep: bool = False) -> dict[str, PermutationResult]:
    """All requested estimands against one shared set of allocations."""
    d = cache.dataset
    alloc = plan.allocations(d.M, d.M1)
    W, L, n1, n0 = cache.replicate_counts(alloc)
    oW, oL, on1, on0 = cache.replicate_counts(d.arms[None, :])
    out = {}
    for k in estimands:
        k = check_estimand(k)
        reps = permutation_statistic(W, L, n1, n0, k)
        obs = float(permutation_statistic(oW, oL, on1, on0, k)[0])
        hits, undef = count_extreme(reps, obs, alternative)
        if plan.mode == "full":
            p = hits / len(reps)
        else:
            p = (1 + hits) / (len(reps) + 1)
        out[k] = PermutationResult(k, obs, min(1.0, p), undef, len(reps), plan.mode, alternative,
                                   reps if keep else None)
    return out


def permutation_test(d: Dataset, rule: ComparisonRule = BOTH_EVENTS, estimand: str = "WD",
                     plan: PermutationPlan | None = None, alternative: str = "two.sided",
                     keep: bool = False, cache: PairCache | None = None) -> PermutationResult:
    cache = cache or PairCache(d, rule)
    plan = plan or PermutationPlan.auto(d.M, d.M1)
    return permutation_tests(cache, plan, (estimand,), alternative, keep)[check_estimand(estimand)]


@dataclass(frozen=True)
class ScoreStatistic:
    statistic: float
    numerator: float
    variance: float
    degenerate: bool


def fs_statistic(cs: ClusterScores) -> ScoreStatistic:
    """Assignment-weighted score contrast over its randomization SD."""
    S = np.asarray(cs.S, dtype=np.float64)
    A = np.asarray(cs.A, dtype=np.float64)
    M = len(S)
    q = A.mean()
    num = float(((A - q) * S).sum())
    var = float(q * (1 - q) * M / (M - 1) * np.sum((S - S.mean()) ** 2))
    if var <= 0:
        return ScoreStatistic(0.0, num, 0.0, True)
    return ScoreStatistic(num / math.sqrt(var), num, var, False)


def fs_score_test(cs: ClusterScores, reference: str = "t", alternative: str = "two.sided",
                  estimand: str = "WD", estimates=None) -> TestResult:
    """Score test with the finite-population randomization variance.

    The statistic is built on cluster scores and is shared by every
    estimand; ``estimates`` (a WinEstimates) only fills in the reported
    estimate and a delta-method standard error.
    """
    key = check_estimand(estimand)
    st = fs_statistic(cs)
    df = None if reference == "normal" else cs.M - 2
    flags = ()
    if st.degenerate:
        p = 1.0
        flags = ("degenerate_scores",)
    else:
        p = p_from_z(st.statistic, alternative, df)
    se = None
    est = tau = math.nan
    if estimates is not None:
        est, tau = estimates.reported(key), estimates.tau(key)
        se_wd = math.sqrt(st.variance) / (cs.n1 * cs.n0)
        g = gradients(estimates).wrt_wd[key]
        se = abs(g) * se_wd if g is not None else None
    return TestResult(key, "fs", est, tau, NULL_VALUE[key], st.statistic, p,
                      "normal" if df is None else "t", df, se, None, alternative, flags,
                      {"shared_statistic": "WD"})


def perm_result_to_test(pr: PermutationResult, estimates=None) -> TestResult:
    est = tau = math.nan
    if estimates is not None:
        est, tau = estimates.reported(pr.estimand), estimates.tau(pr.estimand)
    flags = ("undefined_replicates",) if pr.n_undefined else ()
    return TestResult(pr.estimand, "perm", est, tau, NULL_VALUE[pr.estimand], pr.observed, pr.p_value,
                      "permutation", None, None, None, pr.alternative, flags,
                      {"mode": pr.mode, "n_alloc": pr.n_alloc, "n_undefined": pr.n_undefined})


__all__ = ["PermutationPlan", "PermutationResult", "permutation_test", "permutation_tests",
           "fs_score_test", "fs_statistic", "count_extreme", "permutation_statistic", "estimate_all"]
