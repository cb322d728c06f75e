"""Event-log ingestion, hierarchical outcomes and the pairwise comparison kernel."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ComponentMismatch,
    EmptyArm,
    MissingComponent,
    MixedArmCluster,
    NegativeTime,
    ParseError,
    UnknownStatus,
)

CSV_COLUMNS = ("clu", "id", "trt", "t", "st")


class RuleVariant(str, Enum):
    BOTH_EVENTS = "both"
    GEHAN = "gehan"


@dataclass(frozen=True)
class ComparisonRule:
    """Hierarchical comparison rule.

    ``BOTH_EVENTS`` resolves a component only when both subjects have an
    observed event at distinct times. ``GEHAN`` also resolves a component
    when one subject's event precedes the other's censoring time.
    ``V`` optionally pins the number of components.
    """

    variant: RuleVariant = RuleVariant.BOTH_EVENTS
    V: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", RuleVariant(self.variant))


BOTH_EVENTS = ComparisonRule(RuleVariant.BOTH_EVENTS)
GEHAN = ComparisonRule(RuleVariant.GEHAN)


@dataclass(frozen=True)
class EventRecord:
    cluster_id: object
    subject_id: object
    trt: int
    time: float
    status: int


@dataclass(frozen=True)
class SubjectOutcome:
    """Priority-ordered ``(time, event)`` pairs; index 0 is the most important."""

    components: tuple[tuple[float, int], ...]

    def __post_init__(self):
        comps = tuple((float(t), int(d)) for t, d in self.components)
        if not comps:
            raise ComponentMismatch("a subject outcome needs at least one component")
        for t, d in comps:
            if not math.isfinite(t):
                raise NegativeTime(f"non-finite time {t}")
            if d not in (0, 1):
                raise ValueError(f"event indicator must be 0/1, got {d}")
        object.__setattr__(self, "components", comps)

    @property
    def V(self) -> int:
        return len(self.components)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def compare(y: SubjectOutcome, y2: SubjectOutcome, rule: ComparisonRule = BOTH_EVENTS) -> int:
    """Signed score of ``y`` against ``y2``: +1 win, -1 loss, 0 tie.

    Components are visited in priority order and the first resolvable one
    decides. Later times are better on every component.
    """
    if y.V != y2.V:
        raise ComponentMismatch(f"V={y.V} vs V={y2.V}")
    gehan = rule.variant is RuleVariant.GEHAN
    for (t, d), (t2, d2) in zip(y.components, y2.components):
        if d and d2 and t != t2:
            return _sign(t - t2)
        if gehan:
            if d2 and t2 < t:
                return 1
            if d and t < t2:
                return -1
    return 0


def _sort_key(token):
    if isinstance(token, (int, np.integer)):
        return (0, int(token), "")
    s = str(token)
    try:
        return (0, int(s), "")
    except ValueError:
        return (1, 0, s)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Clustered hierarchical outcomes, stored as flat arrays.

    Subjects are contiguous by cluster: cluster ``i`` owns rows
    ``offsets[i]:offsets[i+1]`` of ``times`` / ``events``.
    """

    cluster_ids: tuple
    arms: np.ndarray
    sizes: np.ndarray
    times: np.ndarray
    events: np.ndarray
    subject_ids: tuple = field(default=())

    def __post_init__(self):
        arms = np.asarray(self.arms, dtype=np.int8)
        sizes = np.asarray(self.sizes, dtype=np.int64)
        times = np.asarray(self.times, dtype=np.float64)
        events = np.asarray(self.events, dtype=bool)
        if times.ndim == 1:
            times = times[:, None]
        if events.ndim == 1:
            events = events[:, None]
        if times.shape != events.shape:
            raise ComponentMismatch("times and events must have the same shape")
        if arms.shape != sizes.shape or arms.ndim != 1:
            raise ValueError("arms and sizes must be 1-d of equal length")
        if not np.isin(arms, (0, 1)).all():
            raise ValueError("arms must be 0/1")
        if (sizes < 1).any():
            raise ValueError("every cluster needs at least one subject")
        if sizes.sum() != times.shape[0]:
            raise ValueError("cluster sizes do not add up to the subject count")
        if not np.isfinite(times).all():
            raise NegativeTime("times must be finite")
        if (times < 0).any():
            raise NegativeTime("times must be nonnegative")
        if len(self.cluster_ids) != len(arms):
            raise ValueError("one cluster id per cluster")
        if len(set(self.cluster_ids)) != len(self.cluster_ids):
            raise ValueError("cluster ids must be unique")
        M1 = int(arms.sum())
        if M1 == 0 or M1 == len(arms):
            raise EmptyArm("both arms need at least one cluster")
        subject_ids = self.subject_ids or tuple(range(times.shape[0]))
        object.__setattr__(self, "arms", _readonly(arms))
        object.__setattr__(self, "sizes", _readonly(sizes))
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "events", _readonly(events))
        object.__setattr__(self, "subject_ids", tuple(subject_ids))

    @classmethod
    def from_clusters(cls, clusters: Sequence[tuple[object, int, Sequence[SubjectOutcome]]]) -> "Dataset":
        ids, arms, sizes, t, d = [], [], [], [], []
        V = None
        for cid, a, subjects in clusters:
            ids.append(cid)
            arms.append(int(a))
            sizes.append(len(subjects))
            for s in subjects:
                if V is None:
                    V = s.V
                elif s.V != V:
                    raise ComponentMismatch("all subjects must have the same number of components")
                t.append([c[0] for c in s.components])
                d.append([c[1] for c in s.components])
        return cls(tuple(ids), np.array(arms), np.array(sizes), np.array(t, dtype=float), np.array(d, dtype=bool))

    # derived quantities -------------------------------------------------
    @property
    def M(self) -> int:
        return len(self.arms)

    @property
    def M1(self) -> int:
        return int(self.arms.sum())

    @property
    def M0(self) -> int:
        return self.M - self.M1

    @property
    def q(self) -> float:
        return self.M1 / self.M

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    @property
    def n1(self) -> int:
        return int(self.sizes[self.arms == 1].sum())

    @property
    def n0(self) -> int:
        return int(self.sizes[self.arms == 0].sum())

    @property
    def V(self) -> int:
        return self.times.shape[1]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def subject_cluster(self) -> np.ndarray:
        """Cluster index of every subject row."""
        return np.repeat(np.arange(self.M), self.sizes)

    @property
    def subject_arm(self) -> np.ndarray:
        return np.repeat(self.arms, self.sizes)

    def subject(self, row: int) -> SubjectOutcome:
        return SubjectOutcome(tuple(zip(self.times[row].tolist(), self.events[row].astype(int).tolist())))

    @property
    def clusters(self) -> list[tuple[object, int, list[SubjectOutcome]]]:
        off = self.offsets
        return [
            (cid, int(a), [self.subject(r) for r in range(off[i], off[i + 1])])
            for i, (cid, a) in enumerate(zip(self.cluster_ids, self.arms))
        ]

    # transformations ----------------------------------------------------
    def with_arms(self, arms) -> "Dataset":
        """Same outcomes under a different cluster allocation."""
        return Dataset(self.cluster_ids, np.asarray(arms), self.sizes, self.times, self.events, self.subject_ids)

    def drop_cluster(self, i: int) -> "Dataset":
        keep = np.ones(self.M, dtype=bool)
        keep[i] = False
        rows = np.repeat(keep, self.sizes)
        return Dataset(
            tuple(c for c, k in zip(self.cluster_ids, keep) if k),
            self.arms[keep],
            self.sizes[keep],
            self.times[rows],
            self.events[rows],
            tuple(s for s, k in zip(self.subject_ids, rows) if k),
        )

    def same_as(self, other: "Dataset") -> bool:
        return (
            self.cluster_ids == other.cluster_ids
            and self.subject_ids == other.subject_ids
            and np.array_equal(self.arms, other.arms)
            and np.array_equal(self.sizes, other.sizes)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.events, other.events)
        )

    def to_records(self) -> list[EventRecord]:
        """Event-log rows that parse back to this dataset.

        Assumes components sharing a censored state share one censoring
        time (true for semi-competing data, where the nonterminal component
        is censored by death or follow-up end).
        """
        V = self.V
        out = []
        cl = self.subject_cluster
        for r in range(self.n):
            cid = self.cluster_ids[cl[r]]
            sid = self.subject_ids[r]
            a = int(self.arms[cl[r]])
            cens = None
            for v in range(V):
                status = V - v
                if self.events[r, v]:
                    out.append(EventRecord(cid, sid, a, float(self.times[r, v]), status))
                else:
                    t = float(self.times[r, v])
                    if cens is not None and t != cens:
                        raise ValueError(f"subject {sid}: censored components disagree on censoring time")
                    cens = t
            if cens is not None:
                out.append(EventRecord(cid, sid, a, cens, 0))
        return out


def parse_event_log(rows: Iterable[EventRecord], rule: ComparisonRule | None = None) -> Dataset:
    """Assemble a :class:`Dataset` from long-format event/censoring records.

    Status 0 is censoring; positive statuses are event types, larger being
    more important, so component ``v`` is the ``v``-th largest status.
    A subject missing an event for some status takes its censoring time for
    that component. Repeated events of one type keep the earliest.
    """
    rows = list(rows)
    if not rows:
        raise ParseError("empty event log")
    cluster_arm: dict = {}
    subjects: dict = {}
    statuses = set()
    for k, rec in enumerate(rows, start=1):
        t = float(rec.time)
        st = int(rec.status)
        trt = int(rec.trt)
        if not math.isfinite(t):
            raise NegativeTime(f"row {k}: non-finite time {rec.time}")
        if t < 0:
            raise NegativeTime(f"row {k}: negative time {t}")
        if st < 0:
            raise UnknownStatus(f"row {k}: negative status {st}")
        if trt not in (0, 1):
            raise ParseError(f"trt must be 0 or 1, got {rec.trt}", row=k)
        prev = cluster_arm.setdefault(rec.cluster_id, trt)
        if prev != trt:
            raise MixedArmCluster(f"cluster {rec.cluster_id!r} has both treatment values")
        entry = subjects.setdefault((rec.cluster_id, rec.subject_id), {"cens": None, "ev": {}})
        if st == 0:
            entry["cens"] = t if entry["cens"] is None else max(entry["cens"], t)
        else:
            statuses.add(st)
            ev = entry["ev"]
            ev[st] = min(ev.get(st, t), t)
    if not statuses:
        # no event types at all: a single component, censored everywhere
        order = [None]
    else:
        order = sorted(statuses, reverse=True)
    V = len(order)
    if rule is not None and rule.V is not None and rule.V != V:
        raise ComponentMismatch(f"rule expects V={rule.V}, data has V={V}")

    by_cluster: dict = {}
    for (cid, sid), entry in subjects.items():
        comps = []
        for st in order:
            if st is not None and st in entry["ev"]:
                comps.append((entry["ev"][st], 1))
            elif entry["cens"] is not None:
                comps.append((entry["cens"], 0))
            else:
                raise MissingComponent(f"subject {sid!r} in cluster {cid!r} has no event or censoring for status {st}")
        by_cluster.setdefault(cid, []).append((sid, SubjectOutcome(tuple(comps))))

    cids = sorted(by_cluster, key=_sort_key)
    clusters = []
    sub_ids = []
    for cid in cids:
        members = sorted(by_cluster[cid], key=lambda p: _sort_key(p[0]))
        sub_ids.extend(s for s, _ in members)
        clusters.append((cid, cluster_arm[cid], [o for _, o in members]))
    d = Dataset.from_clusters(clusters)
    return Dataset(d.cluster_ids, d.arms, d.sizes, d.times, d.events, tuple(sub_ids))


def _token(s: str):
    s = s.strip()
    try:
        return int(s)
    except ValueError:
        return s


def read_event_csv(path) -> list[EventRecord]:
    """Read a ``clu,id,trt,t,st`` CSV. Row numbers in errors count the header as row 1."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"missing columns {missing}", row=1)
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                trt_raw = float(row["trt"])
                st_raw = float(row["st"])
                if trt_raw != int(trt_raw) or st_raw != int(st_raw):
                    raise ValueError("integer expected")
                rec = EventRecord(_token(row["clu"]), _token(row["id"]), int(trt_raw), float(row["t"]), int(st_raw))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"unparseable cell ({exc})", row=line) from None
            out.append(rec)
    return out


def write_event_csv(path, records: Iterable[EventRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.cluster_id, r.subject_id, r.trt, repr(float(r.time)), r.status])


def load_dataset(path, rule: ComparisonRule | None = None) -> Dataset:
    return parse_event_log(read_event_csv(path), rule)
