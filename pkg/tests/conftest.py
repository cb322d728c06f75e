import numpy as np
import pytest

from crtwin.data import BOTH_EVENTS, Dataset, SubjectOutcome, compare

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_dataset(rng, M_max=8, N_max=6, V=None, time_levels=6, event_p=0.6, M_min=2):
    """Small dataset with many exact ties in time so every branch is exercised."""
    M = int(rng.integers(M_min, M_max + 1))
    M1 = int(rng.integers(1, M))
    arms = np.zeros(M, dtype=int)
    arms[rng.choice(M, M1, replace=False)] = 1
    sizes = rng.integers(1, N_max + 1, size=M)
    V = V or int(rng.integers(1, 4))
    n = int(sizes.sum())
    times = rng.integers(0, time_levels, size=(n, V)).astype(float)
    events = rng.random((n, V)) < event_p
    return Dataset(tuple(range(M)), arms, sizes, times, events)


# ---------------------------------------------------------------------------
# naive nested-loop oracles, written straight from the definitions

def subjects_by_cluster(d):
    off = d.offsets
    return [[d.subject(r) for r in range(off[i], off[i + 1])] for i in range(d.M)]


def naive_tallies(d, rule=BOTH_EVENTS):
    subs = subjects_by_cluster(d)
    W = L = T = 0
    for i in range(d.M):
        if d.arms[i] != 1:
            continue
        for k in range(d.M):
            if d.arms[k] != 0:
                continue
            for y in subs[i]:
                for y2 in subs[k]:
                    s = compare(y, y2, rule)
                    W += s == 1
                    L += s == -1
                    T += s == 0
    return int(W), int(L), int(T)


def naive_scores(d, rule=BOTH_EVENTS):
    subs = subjects_by_cluster(d)
    flat = [y for c in subs for y in c]
    return np.array([sum(compare(y, y2, rule) for y in c for y2 in flat) for c in subs], dtype=np.int64)


def naive_projections(d, rule=BOTH_EVENTS):
    subs = subjects_by_cluster(d)
    W, L, T = naive_tallies(d, rule)
    N = d.n1 * d.n0
    pw, pl = W / N, L / N
    treated = [y for i, c in enumerate(subs) if d.arms[i] == 1 for y in c]
    control = [y for i, c in enumerate(subs) if d.arms[i] == 0 for y in c]
    phi_w, phi_l = [], []
    for i, c in enumerate(subs):
        for y in c:
            if d.arms[i] == 1:
                s = [compare(y, y2, rule) for y2 in control]
                phi_w.append(sum(v == 1 for v in s) / d.n0 - pw)
                phi_l.append(sum(v == -1 for v in s) / d.n0 - pl)
            else:
                s = [compare(y1, y, rule) for y1 in treated]
                phi_w.append(sum(v == 1 for v in s) / d.n1 - pw)
                phi_l.append(sum(v == -1 for v in s) / d.n1 - pl)
    phi_w, phi_l = np.array(phi_w), np.array(phi_l)
    G_w = np.array([phi_w[d.offsets[i]:d.offsets[i + 1]].sum() for i in range(d.M)])
    G_l = np.array([phi_l[d.offsets[i]:d.offsets[i + 1]].sum() for i in range(d.M)])
    return phi_w, phi_l, G_w, G_l


def outcome(*pairs):
    return SubjectOutcome(tuple(pairs))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
