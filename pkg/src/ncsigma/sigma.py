"""Sigma-model functionals on projections of A_theta.

Action, topological charge, the gap ``S - 2|Q|`` and the residuals of the
first and second order field equations.  Traces of products are formed
without materializing the product whenever only the (0, 0) coefficient is
needed, so these evaluations introduce no truncation of their own.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .algebra import (TwistedSeries, adjoint, check_theta, derive, holo_derive, laplacian,
                      multiply, norm_estimate, trace_product)
from .conformal import ConformalStructure
from .errors import ChargeError, InputError

# Gaussian instantons satisfy dbar(p) p = 0 and carry charge -q.
SELF_DUAL_BRANCH = "sd"
CHARGE_SIGN = -1

CHARGE_TOL = 1e-4
IMAG_TOL = 1e-10
PROJECTION_TOL = 1e-6


def _product(a: TwistedSeries, b: TwistedSeries, window: int | None = None) -> TwistedSeries:
    return multiply(a, b, window)[0]


def cocycle_psi(a0: TwistedSeries, a1: TwistedSeries, a2: TwistedSeries) -> complex:
    """``-(1/2 pi i) trace(a0 (d1 a1 d2 a2 - d2 a1 d1 a2))``."""
    check_theta(a0, a1)
    check_theta(a0, a2)
    # only coefficients inside the window of a0 reach the trace
    W = a0.half_width
    x = _product(derive(a1, 1), derive(a2, 2), W) - _product(derive(a1, 2), derive(a2, 1), W)
    return -trace_product(a0, x) / (2j * math.pi)


def cocycle_phi(a0: TwistedSeries, a1: TwistedSeries, a2: TwistedSeries,
                cs: ConformalStructure) -> complex:
    """``(2/pi) Im(tau) trace(a0 d(a1) dbar(a2))``."""
    check_theta(a0, a1)
    check_theta(a0, a2)
    x = _product(holo_derive(a1, cs), holo_derive(a2, cs, True), a0.half_width)
    return 2.0 / math.pi * cs.sqrt_det * trace_product(a0, x)


def idempotency_residual(p: TwistedSeries) -> float:
    return norm_estimate(_product(p, p, 2 * p.half_width) - p.padded(2 * p.half_width))


def hermiticity_residual(p: TwistedSeries) -> float:
    return norm_estimate(p - adjoint(p))


def _check_projection(p: TwistedSeries, tol: float) -> None:
    r = (_product(p, p, 2 * p.half_width) - p.padded(2 * p.half_width)).l1()
    h = (p - adjoint(p)).l1()
    if r > tol or h > tol:
        raise InputError(f"not a projection: |p^2 - p|_1 = {r:.3e}, |p - p*|_1 = {h:.3e}")


def action_raw(p: TwistedSeries, cs: ConformalStructure) -> complex:
    """``(1/2 pi) Im(tau) g^{mu nu} trace(d_mu p d_nu p)`` for any element."""
    d1, d2 = derive(p, 1), derive(p, 2)
    gi = cs.inverse_metric
    s = (gi[0, 0] * trace_product(d1, d1) + gi[0, 1] * (trace_product(d1, d2) + trace_product(d2, d1))
         + gi[1, 1] * trace_product(d2, d2))
    return cs.sqrt_det * s / (2.0 * math.pi)


def action_holo(p: TwistedSeries, cs: ConformalStructure) -> complex:
    """Same functional through ``(2/pi) Im(tau) trace(d p dbar p)``."""
    return 2.0 / math.pi * cs.sqrt_det * trace_product(holo_derive(p, cs), holo_derive(p, cs, True))


def action(p: TwistedSeries, cs: ConformalStructure, check: bool = True,
           tol: float = PROJECTION_TOL) -> float:
    if check:
        _check_projection(p, tol)
    return float(action_raw(p, cs).real)


def charge_raw(p: TwistedSeries) -> complex:
    """``-(1/2 pi i) trace(p [d1 p, d2 p])``."""
    return cocycle_psi(p, p, p)


def charge(p: TwistedSeries, tol: float = CHARGE_TOL, check: bool = True) -> tuple[float, int]:
    """Raw charge (real part) and nearest integer.

    Raises :class:`ChargeError` if the raw value is not real or not within
    ``tol`` of an integer.
    """
    if check:
        _check_projection(p, PROJECTION_TOL)
    c = charge_raw(p)
    n = int(round(c.real))
    if abs(c.imag) > IMAG_TOL or abs(c.real - n) > tol:
        raise ChargeError(f"charge {c.real:.10g}{c.imag:+.3g}i is not an integer to {tol:.1e}")
    return float(c.real), n


def bp_gap(p: TwistedSeries, cs: ConformalStructure, check: bool = True) -> float:
    """``S(p) - 2 |Q(p)|``; non-negative for projections."""
    if check:
        _check_projection(p, PROJECTION_TOL)
    return float(action_raw(p, cs).real - 2.0 * abs(charge_raw(p).real))


def eom_residual(p: TwistedSeries, cs: ConformalStructure) -> float:
    """``|p Lap(p) - Lap(p) p|`` estimated in the regular representation."""
    lp = laplacian(p, cs)
    W = 2 * p.half_width
    return norm_estimate(_product(p, lp, W) - _product(lp, p, W))


def _pair(p: TwistedSeries, cs: ConformalStructure, conjugated: bool) -> tuple[float, float]:
    d = holo_derive(p, cs, conjugated)
    e = holo_derive(p, cs, not conjugated)
    W = 2 * p.half_width
    return norm_estimate(_product(d, p, W)), norm_estimate(_product(p, e, W))


def sd_residual(p: TwistedSeries, cs: ConformalStructure) -> float:
    """``max(|dbar(p) p|, |p d(p)|)``; the two are adjoint to each other."""
    return max(_pair(p, cs, True))


def asd_residual(p: TwistedSeries, cs: ConformalStructure) -> float:
    """``max(|d(p) p|, |p dbar(p)|)``."""
    return max(_pair(p, cs, False))


@dataclass(frozen=True)
class ProjectionReport:
    trace: float
    action: float
    charge_raw: float
    charge_rounded: int
    bp_gap: float
    eom_residual: float
    sd_residual: float
    asd_residual: float
    idempotency_residual: float
    hermiticity_residual: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def valid(self, charge_tol: float = CHARGE_TOL, gap_tol: float = 1e-8) -> bool:
        return (abs(self.charge_raw - self.charge_rounded) <= charge_tol
                and self.bp_gap >= -gap_tol)


def reports_to_csv(reports: list[ProjectionReport], extra: list[dict] | None = None) -> str:
    """One row per projection; ``extra`` adds leading columns per row."""
    buf = io.StringIO()
    extra = extra or [{} for _ in reports]
    names = (list(extra[0].keys()) if extra else []) + ProjectionReport.field_names()
    w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
    w.writeheader()
    for e, r in zip(extra, reports):
        w.writerow({**{k: repr(v) if isinstance(v, float) else v for k, v in e.items()},
                    **{k: repr(v) if isinstance(v, float) else v for k, v in r.to_dict().items()}})
    return buf.getvalue()


def projection_report(p: TwistedSeries, cs: ConformalStructure) -> ProjectionReport:
    """All functionals of ``p``; no tolerance is enforced here."""
    c = charge_raw(p)
    s = action_raw(p, cs).real
    return ProjectionReport(
        trace=float(p[0, 0].real),
        action=float(s),
        charge_raw=float(c.real),
        charge_rounded=int(round(c.real)),
        bp_gap=float(s - 2.0 * abs(c.real)),
        eom_residual=eom_residual(p, cs),
        sd_residual=sd_residual(p, cs),
        asd_residual=asd_residual(p, cs),
        idempotency_residual=idempotency_residual(p),
        hermiticity_residual=hermiticity_residual(p),
    )


def l1_bounds(p: TwistedSeries, cs: ConformalStructure) -> dict[str, float]:
    """Certified l1 upper bounds for the residuals of the report."""
    W = 2 * p.half_width
    lp = laplacian(p, cs)
    db, d = holo_derive(p, cs, True), holo_derive(p, cs)
    return {
        "eom_residual": (_product(p, lp, W) - _product(lp, p, W)).l1(),
        "sd_residual": max(_product(db, p, W).l1(), _product(p, d, W).l1()),
        "asd_residual": max(_product(d, p, W).l1(), _product(p, db, W).l1()),
        "idempotency_residual": (_product(p, p, W) - p.padded(W)).l1(),
        "hermiticity_residual": (p - adjoint(p)).l1(),
    }
