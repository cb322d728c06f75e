"""Named simulation experiments: calibrated scenarios plus the procedures to run.

Shared by the experiment scripts and the acceptance tests so both run the
same calibrated designs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .simulation import ALT_THETA, CalibrationResult, Scenario, ScenarioResult, calibrate_censoring, run_scenario

#: 95% Monte Carlo half-width for a 5% level over 2000 replicates
BAND_2000 = 1.96 * (0.05 * 0.95 / 2000) ** 0.5


def coded_run(run: int, eta: float, alt: bool = False, **overrides) -> Scenario:
    """Scenario for coded run 1..8 (M 20/100, cv 0.3/0.5, frailty shape 2/1)."""
    b = run - 1
    a = (2.0, 1.0)[(b >> 2) & 1]
    th = ALT_THETA if alt else (0.0, 0.0)
    s = Scenario(M=(20, 100)[b & 1], cv=(0.3, 0.5)[(b >> 1) & 1], alpha1=a, alpha2=a, eta=float(eta),
                 theta1=th[0], theta2=th[1], name=f"run{run}_eta{eta:g}_{'alt' if alt else 'null'}")
    return s.replace(**overrides) if overrides else s


@dataclass(frozen=True)
class Calibrated:
    scenario: Scenario
    calibration: CalibrationResult


def calibrated(s: Scenario, target: float, reps: int = 200, tol: float = 0.004, seed: int = 11) -> Calibrated:
    c = calibrate_censoring(s, target, reps=reps, tol=tol, seed=seed)
    return Calibrated(s.replace(xi=c.xi), c)


def run_calibrated(s: Scenario, target: float, reps: int, procedures, estimands=("WD",), B_perm: int = 1000,
                   seed: int = 1, use_t=None, workers: int = 1, calib_reps: int = 200):
    cal = calibrated(s, target, reps=calib_reps)
    res = run_scenario(cal.scenario, reps=reps, procedures=procedures, estimands=estimands, B_perm=B_perm,
                       seed=seed, use_t=use_t, workers=workers)
    return cal, res


#: three null M=20 designs, mixing tie levels, frailty shapes, cluster-size cv and dependence
ORDERING_DESIGNS = ((coded_run(1, 1.0), 0.35), (coded_run(5, 2.0), 0.07), (coded_run(7, 4.0), 0.07))


def summarize(res: ScenarioResult) -> dict:
    return {f"{m}/{k}": res.rate(m, k) for m in res.procedures for k in res.estimands}


__all__ = ["BAND_2000", "coded_run", "calibrated", "run_calibrated", "ORDERING_DESIGNS", "summarize", "Calibrated"]
