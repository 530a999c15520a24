"""Random projections near the instanton and its complement: action against charge.

Every sample should sit on or above the line ``action = 2 |charge|``.
Run: python3 demos/bp_bound_survey.py [samples]
"""

import sys

import numpy as np

from ncsigma import ConformalStructure, InstantonConfig, TwistedSeries, build_instanton, geometry_from_theta
from ncsigma.flow import random_projection
from ncsigma.sigma import action_raw, charge_raw


def main(samples=20):
    cs = ConformalStructure(1j)
    p = build_instanton(InstantonConfig(geometry_from_theta(0.37), 1j), with_report=False).projection
    bases = {"p": p, "1-p": TwistedSeries.identity(p.theta, p.half_width) - p}
    rng = np.random.default_rng(1)
    print(f"{'base':>4} {'amp':>6} {'charge':>14} {'action':>12} {'action-2|c|':>12}")
    for i in range(samples):
        name = ("p", "1-p")[i % 2]
        amp = float(rng.uniform(0.05, 0.45))
        x = random_projection(bases[name], rng, amp, support=3)
        c, s = charge_raw(x).real, action_raw(x, cs).real
        print(f"{name:>4} {amp:6.3f} {c:+14.10f} {s:12.8f} {s - 2 * abs(c):12.3e}")


if __name__ == "__main__":
    main(*map(int, sys.argv[1:]))
