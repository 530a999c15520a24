"""Build Gaussian instantons in charge 1 and 2 and inspect their invariants.

Run: python3 demos/instanton_tour.py
"""

from ncsigma import (InstantonConfig, build_instanton, geometry_from_theta, norm_estimate,
                     theta_of_alpha)
from ncsigma.instanton import gauge_config


def show(label, build):
    r = build.report
    print(f"{label:28s} trace={r.trace:.6f} action={r.action:.10f} charge={r.charge_raw:+.10f} "
          f"bp_gap={r.bp_gap:.1e} sd={r.sd_residual:.1e} asd={r.asd_residual:.2f}")


def main():
    g1 = geometry_from_theta(0.37)
    print(f"charge-one module: r={g1.r} q={g1.q} alpha={g1.alpha:.6f} eps={g1.epsilon:.6f}")
    b = build_instanton(InstantonConfig(g1, 1j))
    show("tau=i, lambda=0", b)
    show("tau=0.3+0.8i", build_instanton(InstantonConfig(g1, 0.3 + 0.8j, window=18)))

    # moving lambda by a lattice vector is a gauge transformation
    cfg = InstantonConfig(g1, 1j, lam=0.5 - 0.25j)
    p = build_instanton(cfg, with_report=False).projection
    for word in ((1, 0), (0, 1)):
        q = build_instanton(gauge_config(cfg, word), with_report=False).projection
        print(f"lattice shift {word}: lambda -> {gauge_config(cfg, word).lam:.4f}, "
              f"|p - p'| = {norm_estimate(p - q):.1e}")

    g2 = theta_of_alpha(-1, 2, -1.5)
    print(f"\ncharge-two module: r={g2.r} q={g2.q} theta={g2.theta:.6f}")
    cfg2 = InstantonConfig(g2, 1j, amplitudes=[1, 1j], window=18)
    a = build_instanton(cfg2)
    c = build_instanton(cfg2.replace(amplitudes=[1, -1j]))
    show("A = (1, i)", a)
    show("A = (1, -i)", c)
    print(f"distance between the two projections: {norm_estimate(a.projection - c.projection):.3f}")


if __name__ == "__main__":
    main()
