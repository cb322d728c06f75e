"""Run the named size/power experiments and print rejection rates as JSON.

    python3 scripts/run_experiments.py type1 --reps 2000
    python3 scripts/run_experiments.py ordering large_m power --out results.json
"""

import argparse
import json
import os

from crtwin.analysis import METHODS
from crtwin.estimators import ESTIMANDS
from crtwin.experiments import ORDERING_DESIGNS, coded_run, run_calibrated, summarize

EXPERIMENTS = {
    # name: list of (scenario, tie target, procedures, use_t, seed)
    "type1": [(coded_run(1, 1.0), 0.35, ("perm", "fs"), None, 101)],
    "ordering": [(s, t, ("wald_score", "wald_u", "wald_jk", "jel"), True, 102) for s, t in ORDERING_DESIGNS],
    "large_m": [(coded_run(2, 1.0), 0.35, METHODS, False, 103)],
    "power": [(coded_run(1, 1.0, alt=True), 0.41, ("perm",), None, 104)],
}
DEFAULT_REPS = {"type1": 2000, "ordering": 2000, "large_m": 1000, "power": 1000}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="+", choices=sorted(EXPERIMENTS))
    p.add_argument("--reps", type=int, help="override the replicate count")
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--workers", type=int, default=int(os.environ.get("CRTWIN_WORKERS", os.cpu_count() or 1)))
    p.add_argument("--out")
    a = p.parse_args(argv)
    out = {}
    for name in a.names:
        for s, target, procs, use_t, seed in EXPERIMENTS[name]:
            cal, res = run_calibrated(s, target, a.reps or DEFAULT_REPS[name], procs, ESTIMANDS, B_perm=a.B,
                                      seed=seed, use_t=use_t, workers=a.workers,
                                      calib_reps=100 if s.M >= 100 else 200)
            out[f"{name}/{s.name}"] = {"xi": cal.scenario.xi, "mean_pi_tie": res.mean_pi_tie, "reps": res.reps,
                                       "failures": res.failures, "rates": summarize(res)}
    text = json.dumps(out, indent=2, sort_keys=True)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


if __name__ == "__main__":
    main()
