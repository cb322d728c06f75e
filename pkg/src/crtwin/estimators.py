"""Win difference, win ratio, win odds and DOOR from cross-arm tallies."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedGradient
from .pairwise import Tallies

ESTIMANDS = ("WD", "WR", "WO", "DOOR")

# null value on the inference scale (log scale for WR and WO)
NULL_VALUE = {"WD": 0.0, "WR": 0.0, "WO": 0.0, "DOOR": 0.5}


def check_estimand(name: str) -> str:
    key = name.upper()
    if key not in ESTIMANDS:
        raise ValueError(f"unknown estimand {name!r}; expected one of {ESTIMANDS}")
    return key


def atanh(x: float) -> float:
    # log1p form keeps precision near |x| = 1
    return 0.5 * (math.log1p(x) - math.log1p(-x))


@dataclass(frozen=True)
class WinEstimates:
    """Plug-in estimates. Undefined ratio statistics are ``nan``."""

    tallies: Tallies
    pi_win: float
    pi_loss: float
    pi_tie: float
    WD: float
    WR: float
    WO: float
    DOOR: float
    logWR: float
    logWO: float

    def tau(self, estimand: str) -> float:
        """Estimate on the inference scale."""
        key = check_estimand(estimand)
        return {"WD": self.WD, "WR": self.logWR, "WO": self.logWO, "DOOR": self.DOOR}[key]

    def reported(self, estimand: str) -> float:
        """Estimate on the reporting scale."""
        key = check_estimand(estimand)
        return {"WD": self.WD, "WR": self.WR, "WO": self.WO, "DOOR": self.DOOR}[key]


def estimate_all(t: Tallies) -> WinEstimates:
    N = t.pairs
    W, L, T = t.W, t.L, t.T
    WR = W / L if L > 0 else math.nan
    logWR = (math.log(W) - math.log(L) if W > 0 else -math.inf) if L > 0 else math.nan
    den = L + 0.5 * T
    WO = (W + 0.5 * T) / den if den > 0 else math.nan
    logWO = math.log(W + 0.5 * T) - math.log(den) if den > 0 and W + 0.5 * T > 0 else (
        -math.inf if den > 0 else math.nan)
    return WinEstimates(
        tallies=t,
        pi_win=W / N,
        pi_loss=L / N,
        pi_tie=T / N,
        WD=(W - L) / N,
        WR=WR,
        WO=WO,
        DOOR=(W + 0.5 * T) / N,
        logWR=logWR,
        logWO=logWO,
    )


def tau_from_counts(W, L, n1, n0, estimand: str) -> np.ndarray:
    """Vectorised inference-scale statistic; ``nan``/``inf`` where undefined."""
    key = check_estimand(estimand)
    W = np.asarray(W, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    N = np.asarray(n1, dtype=np.float64) * np.asarray(n0, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        if key == "WD":
            return (W - L) / N
        if key == "DOOR":
            return (W + 0.5 * (N - W - L)) / N
        if key == "WR":
            return np.where(L > 0, np.log(W) - np.log(L), np.nan)
        T = N - W - L
        den = L + 0.5 * T
        return np.where(den > 0, np.log(W + 0.5 * T) - np.log(den), np.nan)


@dataclass(frozen=True)
class Gradients:
    """Delta-method gradients.

    ``wrt_pi[k]`` is the gradient with respect to ``(pi_win, pi_loss)``,
    ``wrt_wd[k]`` the derivative with respect to the win difference at fixed
    tie probability. ``None`` marks a vanished denominator, explained in
    ``reason``.
    """

    wrt_pi: dict
    wrt_wd: dict
    wrt_tie: dict
    reason: dict

    def pi(self, estimand: str) -> np.ndarray:
        key = check_estimand(estimand)
        g = self.wrt_pi[key]
        if g is None:
            raise UndefinedGradient(f"{key}: {self.reason[key]}")
        return g

    def wd(self, estimand: str) -> float:
        key = check_estimand(estimand)
        g = self.wrt_wd[key]
        if g is None:
            raise UndefinedGradient(f"{key}: {self.reason[key]}")
        return g


def gradients(e: WinEstimates) -> Gradients:
    pi = {"WD": np.array([1.0, -1.0]), "DOOR": np.array([0.5, -0.5])}
    wd = {"WD": 1.0, "DOOR": 0.5}
    tie = {"WD": 0.0, "DOOR": 0.0}
    reason = {}
    w, pt = e.WD, e.pi_tie
    if e.pi_win > 0 and e.pi_loss > 0:
        pi["WR"] = np.array([1.0 / e.pi_win, -1.0 / e.pi_loss])
        s = 1.0 - pt
        wd["WR"] = (2.0 / s) / (1.0 - (w / s) ** 2)
        tie["WR"] = 2.0 * w / (s * s - w * w)
    else:
        pi["WR"] = wd["WR"] = tie["WR"] = None
        reason["WR"] = "pi_win = 0" if e.pi_win <= 0 else "pi_loss = 0"
    if abs(w) < 1.0:
        g = 2.0 / (1.0 - w * w)
        pi["WO"] = g * np.array([1.0, -1.0])
        wd["WO"] = g
        tie["WO"] = 0.0
    else:
        pi["WO"] = wd["WO"] = tie["WO"] = None
        reason["WO"] = "|WD| = 1"
    return Gradients(pi, wd, tie, reason)
