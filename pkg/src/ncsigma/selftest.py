"""Invariant battery across all modules at small window.

Each check yields a :class:`Check`; the battery passes when every check
does.  The hermitian-structure ordering variant is a parameter so that a
wrong ordering is detected by the checks that depend on it.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .algebra import (TwistedSeries, adjoint, derive, exact_product, holo_derive,
                      invert_newton_schulz, laplacian, multiply, purify, trace, trace_product)
from .conformal import ConformalStructure
from .flow import FlowConfig, perturb, random_projection, relax
from .errors import NCSigmaError, ParameterError
from .sigma import action_raw, charge_raw
from .instanton import InstantonConfig, build_instanton, gaussian_section
from .module import (CANONICAL_VARIANT, VARIANTS, GaussPolySection, ModuleGeometry, act_left,
                     act_right, geometry_from_theta, induced_derivation_check, inner_alpha, inner_theta,
                     l2_inner, nabla,
                     nabla_holo, section_battery, section_residual, theta_of_alpha)

SELFTEST_WINDOW = 8
DYADIC_THETA = 0.375


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _check(name: str, value: float, tol: float, detail: str = "") -> Check:
    value = float(value)
    return Check(name, value, tol, bool(math.isfinite(value) and value <= tol), detail)


def _rel(x: float, scale: float) -> float:
    return x / max(scale, 1e-300)


# ---------------------------------------------------------------------------
# algebra


def algebra_checks(theta: float, rng: np.random.Generator, count: int = 20) -> list[Check]:
    ser = [TwistedSeries.random(theta, 3, rng) for _ in range(3 * count)]
    assoc = cyc = adj = tder = 0.0
    for a, b, c in zip(ser[0::3], ser[1::3], ser[2::3]):
        l = exact_product(exact_product(a, b), c)
        r = exact_product(a, exact_product(b, c))
        assoc = max(assoc, _rel((l - r).l1(), a.l1() * b.l1() * c.l1()))
        cyc = max(cyc, _rel(abs(trace_product(a, b) - trace_product(b, a)), a.l1() * b.l1()))
        d = adjoint(exact_product(a, b)) - exact_product(adjoint(b), adjoint(a))
        adj = max(adj, _rel(d.l1(), a.l1() * b.l1()))
        tder = max(tder, abs(trace(derive(a, 1))), abs(trace(derive(a, 2))))
    cs = ConformalStructure(complex(rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5)))
    lap = 0.0
    for m in range(-3, 4):
        for n in range(-3, 4):
            u = TwistedSeries.monomial(theta, m, n, half_width=3)
            dd = holo_derive(holo_derive(u, cs, True), cs)
            lap = max(lap, _rel((dd * 4.0 - laplacian(u, cs)).l1(), laplacian(u, cs).l1() + 1.0))
    return [
        _check("algebra.associativity", assoc, 1e-12),
        _check("algebra.trace_cyclicity", cyc, 1e-12),
        _check("algebra.adjoint_antimultiplicative", adj, 1e-12),
        _check("algebra.trace_of_derivation", tder, 0.0),
        _check("algebra.holo_antiholo_is_quarter_laplacian", lap, 1e-14),
    ]


def theta_shift_check(rng: np.random.Generator) -> Check:
    """Products at ``theta`` and ``theta + 1`` agree byte for byte (dyadic theta)."""
    a = TwistedSeries.random(DYADIC_THETA, 3, rng)
    b = TwistedSeries.random(DYADIC_THETA, 3, rng)
    a1 = TwistedSeries(DYADIC_THETA + 1.0, a.coeffs)
    b1 = TwistedSeries(DYADIC_THETA + 1.0, b.coeffs)
    x = exact_product(a, b).coeffs.tobytes()
    y = exact_product(a1, b1).coeffs.tobytes()
    return _check("algebra.theta_plus_one_bytes", 0.0 if x == y else 1.0, 0.0)


def iteration_checks(theta: float) -> list[Check]:
    u = TwistedSeries.monomial(theta, 1, 0, half_width=SELFTEST_WINDOW)
    one = TwistedSeries.identity(theta, SELFTEST_WINDOW)
    h = one + (u + adjoint(u)) * 0.3
    hi = invert_newton_schulz(h)
    ns = (multiply(h, hi)[0] - one).l1()
    p = purify(one * 0.9)
    return [_check("algebra.newton_schulz_inverse", ns, 1e-10),
            _check("algebra.purify_scalar", (p - one).l1(), 1e-12)]


# ---------------------------------------------------------------------------
# module


def module_checks(g: ModuleGeometry, variant: str, seed: int, morcom: bool) -> list[Check]:
    M = SELFTEST_WINDOW
    tag = f"module[r={g.r},q={g.q}]"
    xi, eta, ze = section_battery(g, 3, seed)
    out: list[Check] = []

    a = act_right(act_right(xi, (0, 1)), (1, 0))
    b = act_right(act_right(xi, (1, 0)), (0, 1)) * np.exp(2j * np.pi * g.alpha)
    u = act_left(act_left(xi, (1, 0)), (0, 1))
    v = act_left(act_left(xi, (0, 1)), (1, 0)) * np.exp(2j * np.pi * g.theta)
    out.append(_check(f"{tag}.right_relation", section_residual(a, b), 1e-12))
    out.append(_check(f"{tag}.left_relation", section_residual(u, v), 1e-12))
    bim = max(section_residual(act_left(act_right(xi, w2), w1), act_right(act_left(xi, w1), w2))
              for w1 in ((1, 0), (0, 1)) for w2 in ((1, 0), (0, 1)))
    out.append(_check(f"{tag}.bimodule", bim, 1e-12))
    curv = nabla(nabla(xi, 2), 1) - nabla(nabla(xi, 1), 2)
    out.append(_check(f"{tag}.curvature", section_residual(curv, xi * (-2j * np.pi / g.epsilon)), 1e-12))
    leib = 0.0
    for mu in (1, 2):
        for w in ((1, 0), (0, 1)):
            lhs = nabla(act_right(xi, w), mu)
            dz = derive(TwistedSeries.monomial(g.alpha, *w), mu)
            rhs = act_right(nabla(xi, mu), w) + act_right(xi, dz)
            leib = max(leib, section_residual(lhs, rhs, scale=lhs))
    out.append(_check(f"{tag}.leibniz", leib, 1e-12))
    out.append(_check(f"{tag}.induced_derivation", induced_derivation_check(g, battery=2, seed=seed), 1e-12))

    # hermitian structure: these depend on the ordering variant
    A = inner_alpha(xi, eta, M, variant=variant, tail_budget=None)
    B = inner_alpha(eta, xi, M, variant=variant, tail_budget=None)
    out.append(_check(f"{tag}.alpha_hermiticity", _rel((adjoint(A) - B).l1(), A.l1()), 1e-10))
    A1 = inner_alpha(xi, eta, M + 1, variant=variant, tail_budget=None)
    lin = 0.0
    for w in ((1, 0), (0, 1)):
        lhs = inner_alpha(xi, act_right(eta, w), M, variant=variant, tail_budget=None)
        rhs = multiply(A1, TwistedSeries.monomial(g.alpha, *w), M)[0]
        lin = max(lin, _rel((lhs - rhs).l1(), A.l1()))
    out.append(_check(f"{tag}.alpha_right_linearity", lin, 1e-10))
    comp = 0.0
    for mu in (1, 2):
        lhs = derive(A, mu)
        rhs = (inner_alpha(nabla(xi, mu), eta, M, variant=variant, tail_budget=None)
               + inner_alpha(xi, nabla(eta, mu), M, variant=variant, tail_budget=None))
        comp = max(comp, _rel((lhs - rhs).l1(), lhs.l1()))
    out.append(_check(f"{tag}.alpha_compatibility", comp, 1e-8))
    out.append(_check(f"{tag}.alpha_trace_is_l2", _rel(abs(trace(inner_alpha(xi, xi, M, variant=variant,
                                                                                tail_budget=None))
                                                             - _l2(xi)), _l2(xi)), 1e-10))
    if morcom:
        # Gaussian sections decay fast enough for window 8
        rng = np.random.default_rng(seed)
        xi, eta, ze = (gaussian_section(InstantonConfig(g, 1j, complex(*rng.normal(size=2))))
                       for _ in range(3))
        T = inner_theta(xi, eta, M, tail_budget=None)
        lhs = act_left(ze, T)
        rhs = act_right(xi, inner_alpha(eta, ze, M, variant=variant, tail_budget=None))
        out.append(_check(f"{tag}.theta_alpha_compatibility", section_residual(lhs, rhs), 1e-8))
    return out


def _l2(xi: GaussPolySection) -> float:
    return l2_inner(xi, xi).real


# ---------------------------------------------------------------------------
# instanton and sigma model


def instanton_checks(theta: float, rng: np.random.Generator) -> list[Check]:
    g = geometry_from_theta(theta)
    hol = 0.0
    for _ in range(4):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.6, 1.6))
        lam = complex(*rng.normal(size=2))
        cfg = InstantonConfig(g, tau, lam)
        psi = gaussian_section(cfg)
        hol = max(hol, section_residual(nabla_holo(psi, cfg.cs, True), psi * lam))
    out = [_check("instanton.gaussian_holomorphicity", hol, 1e-12)]
    # at window 8 the truncation floor is about 1e-5
    cfg = InstantonConfig(g, 1j, window=SELFTEST_WINDOW, tolerances={"tail_budget": 1e-4})
    b = build_instanton(cfg)
    r = b.report
    out += [
        _check("sigma.charge_integrality", abs(r.charge_raw - r.charge_rounded), 1e-6),
        _check("sigma.charge_value", abs(abs(r.charge_rounded) - g.q), 0.0),
        _check("sigma.action_minimum", abs(r.action - 2.0 * g.q), 1e-6),
        _check("sigma.bp_gap_nonnegative", max(0.0, -r.bp_gap), 1e-8),
        _check("sigma.idempotency", r.idempotency_residual, 1e-5),
        _check("sigma.trace_mod_one", abs(((r.trace - g.r - g.q * theta) + 0.5) % 1.0 - 0.5), 1e-4),
    ]
    rp = random_projection(b.projection, rng, amplitude=0.2, support=2)
    c = charge_raw(rp).real
    out += [
        _check("sigma.random_projection_bp_bound", max(0.0, 2.0 * abs(c) - action_raw(rp, cfg.cs).real), 1e-8),
        _check("sigma.random_projection_charge", abs(c - round(c)), 1e-3),
    ]
    kicked = perturb(b.projection, rng, 1e-2)
    fcfg = FlowConfig(cfg.cs, max_steps=3)
    _, tr = relax(kicked, fcfg)
    acc = tr.accepted()
    out += [
        _check("flow.accepts_a_step", 0.0 if len(acc) > 1 else 1.0, 0.0),
        _check("flow.action_decreases", max(0.0, acc[-1].action - acc[0].action), 0.0),
    ]
    return out


# ---------------------------------------------------------------------------


def run_battery(variant: str = CANONICAL_VARIANT, seed: int = 0, theta: float = 0.37,
                progress: Callable[[Check], None] | None = None) -> list[Check]:
    """Run all checks; failures raised by a group become failed checks."""
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    rng = np.random.default_rng(seed)
    groups: list[tuple[str, Callable[[], list[Check]]]] = [
        ("algebra", lambda: algebra_checks(theta, rng)),
        ("algebra.theta_shift", lambda: [theta_shift_check(rng)]),
        ("algebra.iterations", lambda: iteration_checks(theta)),
        ("module.boca", lambda: module_checks(theta_of_alpha(0, 1, -1.0 / theta), variant, seed, True)),
        ("module.q2", lambda: module_checks(theta_of_alpha(-1, 2, -1.5), variant, seed + 1, False)),
        ("instanton", lambda: instanton_checks(theta, rng)),
    ]
    checks: list[Check] = []
    for name, fn in groups:
        t0 = time.perf_counter()
        try:
            res = fn()
        except NCSigmaError as exc:
            res = [Check(name, math.nan, 0.0, False, f"{type(exc).__name__}: {exc}")]
        dt = time.perf_counter() - t0
        for c in res:
            c = Check(c.name, c.value, c.tol, c.passed, c.detail or f"{dt:.2f}s group")
            checks.append(c)
            if progress is not None:
                progress(c)
    return checks
