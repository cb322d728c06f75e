"""Cross-arm tallies, cluster scores, projections and leave-one-cluster deletes.

Everything here is derived from one pass over the ``n x n`` comparison
matrix, reduced on the fly to a subject-by-cluster table of win and loss
counts. The table is label-free, so relabelled allocations (permutation
tests) and deleted clusters (jackknife) never need another pass.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import BOTH_EVENTS, ComparisonRule, Dataset, RuleVariant
from .errors import DegenerateDeletion, EmptyArm, PairCountOverflow

MAX_PAIRS = 3_000_000_000
_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class Tallies:
    W: int
    L: int
    T: int
    n1: int
    n0: int

    def __post_init__(self):
        if self.n1 <= 0 or self.n0 <= 0:
            raise EmptyArm("tallies need both arms nonempty")
        if min(self.W, self.L, self.T) < 0 or self.W + self.L + self.T != self.n1 * self.n0:
            raise ValueError(f"inconsistent tallies {self}")

    @property
    def pairs(self) -> int:
        return self.n1 * self.n0


@dataclass(frozen=True, eq=False)
class ClusterScores:
    S: np.ndarray
    A: np.ndarray
    n1: int
    n0: int

    @property
    def M(self) -> int:
        return len(self.S)

    @property
    def q(self) -> float:
        return float(self.A.mean())


@dataclass(frozen=True, eq=False)
class ProjectionTable:
    phi_win: np.ndarray
    phi_loss: np.ndarray
    G_win: np.ndarray
    G_loss: np.ndarray
    A: np.ndarray
    sizes: np.ndarray
    pi_win: float
    pi_loss: float

    @property
    def M1(self) -> int:
        return int(self.A.sum())

    @property
    def M0(self) -> int:
        return len(self.A) - self.M1

    @property
    def Nbar1(self) -> float:
        return float(self.sizes[self.A == 1].mean())

    @property
    def Nbar0(self) -> float:
        return float(self.sizes[self.A == 0].mean())


@dataclass(frozen=True, eq=False)
class DeletedTallySet:
    """Tallies with each cluster removed in turn.

    ``contrib_W[i]`` / ``contrib_L[i]`` are cluster ``i``'s cross-arm wins
    and losses (seen from the treated side), so ``W[i] + contrib_W[i]``
    recovers the full ``W``.
    """

    W: np.ndarray
    L: np.ndarray
    T: np.ndarray
    n1: np.ndarray
    n0: np.ndarray
    contrib_W: np.ndarray
    contrib_L: np.ndarray
    degenerate: np.ndarray
    full: Tallies

    @property
    def M(self) -> int:
        return len(self.W)

    def tallies(self, i: int) -> Tallies:
        if self.degenerate[i]:
            raise DegenerateDeletion(f"removing cluster {i} empties an arm")
        return Tallies(int(self.W[i]), int(self.L[i]), int(self.T[i]), int(self.n1[i]), int(self.n0[i]))


def sign_block(t_rows, d_rows, t_cols, d_cols, rule: ComparisonRule = BOTH_EVENTS) -> np.ndarray:
    """Signed comparison matrix (int8) between two blocks of subjects."""
    gehan = rule.variant is RuleVariant.GEHAN
    out = np.zeros((t_rows.shape[0], t_cols.shape[0]), dtype=np.int8)
    open_ = np.ones(out.shape, dtype=bool)
    for v in range(t_rows.shape[1]):
        ti = t_rows[:, v, None]
        tj = t_cols[None, :, v]
        di = d_rows[:, v, None]
        dj = d_cols[None, :, v]
        if gehan:
            win = dj & (tj < ti)
            loss = di & (ti < tj)
        else:
            both = di & dj
            win = both & (ti > tj)
            loss = both & (ti < tj)
        win &= open_
        loss &= open_
        out[win] = 1
        out[loss] = -1
        open_ &= ~(win | loss)
    return out


class PairCache:
    """Subject-by-cluster win/loss counts for one dataset under one rule.

    ``wins[s, k]`` counts subjects of cluster ``k`` that subject ``s`` beats,
    ``losses[s, k]`` those that beat ``s``. ``Wc[i, k]`` aggregates to
    cluster pairs: wins of cluster ``i``'s subjects over cluster ``k``'s.
    """

    def __init__(self, d: Dataset, rule: ComparisonRule = BOTH_EVENTS, workers: int = 1):
        if d.n1 * d.n0 > MAX_PAIRS:
            raise PairCountOverflow(f"{d.n1 * d.n0} treated-control pairs exceeds {MAX_PAIRS}")
        self.dataset = d
        self.rule = rule
        n, M = d.n, d.M
        member = np.zeros((n, M), dtype=np.float32)
        member[np.arange(n), d.subject_cluster] = 1.0
        wins = np.empty((n, M), dtype=np.int64)
        losses = np.empty((n, M), dtype=np.int64)
        step = max(1, _CHUNK_CELLS // max(n, 1))
        starts = list(range(0, n, step))

        def work(a):
            b = min(a + step, n)
            s = sign_block(d.times[a:b], d.events[a:b], d.times, d.events, rule)
            # float32 matmul is exact: each cell is at most a cluster size
            wins[a:b] = np.rint((s == 1).astype(np.float32) @ member)
            losses[a:b] = np.rint((s == -1).astype(np.float32) @ member)

        if workers > 1 and len(starts) > 1:
            with ThreadPoolExecutor(workers) as ex:
                list(ex.map(work, starts))
        else:
            for a in starts:
                work(a)
        wins.setflags(write=False)
        losses.setflags(write=False)
        self.wins = wins
        self.losses = losses
        Wc = np.add.reduceat(wins, d.offsets[:-1], axis=0)
        Wc.setflags(write=False)
        self.Wc = Wc

    # ------------------------------------------------------------------
    def tallies(self, arms=None) -> Tallies:
        d = self.dataset
        A = d.arms if arms is None else np.asarray(arms)
        t = A == 1
        c = ~t
        W = int(self.Wc[np.ix_(t, c)].sum())
        L = int(self.Wc[np.ix_(c, t)].sum())
        n1 = int(d.sizes[t].sum())
        n0 = int(d.sizes[c].sum())
        return Tallies(W, L, n1 * n0 - W - L, n1, n0)

    def replicate_counts(self, alloc: np.ndarray):
        """Vectorised ``(W, L, n1, n0)`` for a ``B x M`` matrix of 0/1 allocations."""
        A = np.asarray(alloc, dtype=np.float64)
        C = 1.0 - A
        Wc = self.Wc.astype(np.float64)
        # all partial sums are integers below 2**53, so float64 is exact here
        W = np.einsum("bk,bk->b", A @ Wc, C)
        L = np.einsum("bk,bk->b", C @ Wc, A)
        sizes = self.dataset.sizes.astype(np.float64)
        n1 = A @ sizes
        n0 = C @ sizes
        return (np.rint(W).astype(np.int64), np.rint(L).astype(np.int64),
                np.rint(n1).astype(np.int64), np.rint(n0).astype(np.int64))

    def cluster_scores(self) -> ClusterScores:
        d = self.dataset
        S = self.Wc.sum(axis=1) - self.Wc.sum(axis=0)
        S.setflags(write=False)
        return ClusterScores(S, d.arms, d.n1, d.n0)

    def projections(self) -> ProjectionTable:
        d = self.dataset
        if d.n1 == 0 or d.n0 == 0:
            raise EmptyArm("projections need both arms nonempty")
        tl = self.tallies()
        pw = tl.W / tl.pairs
        pl = tl.L / tl.pairs
        t = d.arms == 1
        sub_t = d.subject_arm == 1
        # treated subject vs all control subjects; control subject vs all treated
        win_vs_c = self.wins[:, ~t].sum(axis=1)
        loss_vs_c = self.losses[:, ~t].sum(axis=1)
        win_vs_t = self.wins[:, t].sum(axis=1)
        loss_vs_t = self.losses[:, t].sum(axis=1)
        phi_win = np.where(sub_t, win_vs_c / d.n0, loss_vs_t / d.n1) - pw
        phi_loss = np.where(sub_t, loss_vs_c / d.n0, win_vs_t / d.n1) - pl
        G_win = np.add.reduceat(phi_win, d.offsets[:-1])
        G_loss = np.add.reduceat(phi_loss, d.offsets[:-1])
        return ProjectionTable(phi_win, phi_loss, G_win, G_loss, d.arms, d.sizes, pw, pl)

    def leave_one_cluster(self) -> DeletedTallySet:
        d = self.dataset
        full = self.tallies()
        t = d.arms == 1
        c = ~t
        Wc = self.Wc
        # treated i: its wins over / losses to all controls
        # control k: treated wins over k / treated losses to k
        cW = np.where(t, Wc[:, c].sum(axis=1), Wc[t, :].sum(axis=0))
        cL = np.where(t, Wc[c, :].sum(axis=0), Wc[:, t].sum(axis=1))
        n1 = np.where(t, full.n1 - d.sizes, full.n1)
        n0 = np.where(t, full.n0, full.n0 - d.sizes)
        W = full.W - cW
        L = full.L - cL
        T = n1 * n0 - W - L
        degenerate = (n1 == 0) | (n0 == 0)
        return DeletedTallySet(W, L, T, n1, n0, cW, cL, degenerate, full)


def tally_cross_arm(d: Dataset, rule: ComparisonRule = BOTH_EVENTS) -> Tallies:
    return PairCache(d, rule).tallies()


def cluster_scores(d: Dataset, rule: ComparisonRule = BOTH_EVENTS) -> ClusterScores:
    return PairCache(d, rule).cluster_scores()


def subject_projections(d: Dataset, rule: ComparisonRule = BOTH_EVENTS) -> ProjectionTable:
    return PairCache(d, rule).projections()


def leave_one_cluster(d: Dataset, rule: ComparisonRule = BOTH_EVENTS) -> DeletedTallySet:
    return PairCache(d, rule).leave_one_cluster()
