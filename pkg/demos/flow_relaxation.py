"""Kick the charge-one instanton off the minimum and let the descent flow bring it back.

Run: python3 demos/flow_relaxation.py [kick] [steps]
"""

import sys

import numpy as np

from ncsigma import ConformalStructure, FlowConfig, InstantonConfig, build_instanton, geometry_from_theta
from ncsigma.flow import perturb, relax


def main(kick=5e-2, steps=120):
    cfg = InstantonConfig(geometry_from_theta(0.37), 1j)
    p = build_instanton(cfg, with_report=False).projection
    p0 = perturb(p, np.random.default_rng(0), kick)
    p1, trace = relax(p0, FlowConfig(ConformalStructure(1j), max_steps=steps))
    print(f"{'step':>5} {'action':>14} {'charge':>14} {'bp_gap':>10} {'|G|':>10} {'h':>9}")
    for r in trace.accepted()[::max(1, len(trace.accepted()) // 15)]:
        print(f"{r.step:5d} {r.action:14.10f} {r.charge_raw:+14.10f} {r.bp_gap:10.2e} "
              f"{r.grad_norm:10.2e} {r.step_size:9.2e}")
    s = trace.summary()
    print(f"status={s['status']} accepted={s['accepted_steps']} "
          f"action {s['initial_action']:.8f} -> {s['final_action']:.8f}, "
          f"max charge drift {s['max_charge_drift']:.1e}")


if __name__ == "__main__":
    main(*(float(a) if i == 0 else int(a) for i, a in enumerate(sys.argv[1:])))
