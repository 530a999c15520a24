"""Gradient-flow relaxation of the action over projections.

Explicit Euler steps along ``-G`` with ``G = [p, [p, -Lap p]]``, retracted to
the projections by purification, with backtracking on the step size.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .algebra import TwistedSeries, adjoint, laplacian, multiply, norm_estimate, purify
from .conformal import ConformalStructure
from .errors import ConvergenceError, ParameterError
from .sigma import action_raw, charge_raw, eom_residual, idempotency_residual


@dataclass(frozen=True)
class FlowConfig:
    cs: ConformalStructure
    step: float = 1e-3
    max_steps: int = 200
    purify_every: int = 1
    stop_grad_tol: float = 1e-6
    min_step: float = 1e-10
    growth: float = 1.25
    purify_tol: float = 1e-10

    def __post_init__(self) -> None:
        if not self.step > 0.0:
            raise ParameterError("step must be positive")
        if self.purify_every < 1:
            raise ParameterError("purify_every must be >= 1")
        if self.max_steps < 0:
            raise ParameterError("max_steps must be >= 0")
        if self.growth < 1.0:
            raise ParameterError("growth must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["cs"] = {"tau_re": self.cs.tau.real, "tau_im": self.cs.tau.imag}
        return d


@dataclass(frozen=True)
class FlowRecord:
    step: int
    action: float
    charge_raw: float
    eom_residual: float
    bp_gap: float
    idempotency_residual: float
    grad_norm: float
    step_size: float
    accepted: bool


@dataclass
class FlowTrace:
    records: list[FlowRecord] = field(default_factory=list)
    status: str = "running"

    def accepted(self) -> list[FlowRecord]:
        return [r for r in self.records if r.accepted]

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(FlowRecord.__dataclass_fields__)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in self.records:
            w.writerow([repr(getattr(r, n)) if isinstance(getattr(r, n), float) else getattr(r, n)
                        for n in names])
        return buf.getvalue()

    def summary(self) -> dict[str, Any]:
        acc = self.accepted()
        first, last = acc[0], acc[-1]
        return {
            "status": self.status,
            "records": len(self.records),
            "accepted_steps": len(acc) - 1,
            "initial_action": first.action,
            "final_action": last.action,
            "initial_charge_raw": first.charge_raw,
            "final_charge_raw": last.charge_raw,
            "max_charge_drift": max(abs(r.charge_raw - first.charge_raw) for r in acc),
            "final_bp_gap": last.bp_gap,
            "final_eom_residual": last.eom_residual,
            "final_grad_norm": last.grad_norm,
            "max_action_increase": max((b.action - a.action for a, b in zip(acc, acc[1:])), default=0.0),
        }


def _mul(a: TwistedSeries, b: TwistedSeries) -> TwistedSeries:
    return multiply(a, b)[0]


def descent_direction(p: TwistedSeries, cs: ConformalStructure, form: str = "tangent") -> TwistedSeries:
    """``G = (1-p) X p + p X (1-p)`` with ``X = -Lap(p)``.

    ``form="bracket"`` evaluates the same element as ``[p, [p, X]]``.  Moving
    to ``p - t G`` lowers the action to first order.
    """
    x = -laplacian(p, cs)
    if form == "bracket":
        c = _mul(p, x) - _mul(x, p)
        return _mul(p, c) - _mul(c, p)
    if form != "tangent":
        raise ParameterError(f"unknown form {form!r}")
    one = TwistedSeries.identity(p.theta, p.half_width)
    q = one - p
    return _mul(_mul(q, x), p) + _mul(_mul(p, x), q)


def _record(i: int, p: TwistedSeries, cs: ConformalStructure, g: TwistedSeries,
            h: float, accepted: bool, s: float | None = None) -> FlowRecord:
    s = action_raw(p, cs).real if s is None else s
    c = charge_raw(p).real
    return FlowRecord(i, float(s), float(c), eom_residual(p, cs), float(s - 2.0 * abs(c)),
                      idempotency_residual(p), norm_estimate(g), h, accepted)


def flow_step(p: TwistedSeries, cfg: FlowConfig, step: float | None = None,
              purify_now: bool = True, G: TwistedSeries | None = None) -> tuple[TwistedSeries, bool]:
    """One trial step ``p - h G``; accepted iff the action decreases.

    A trial whose purification fails counts as rejected.
    """
    h = cfg.step if step is None else step
    G = descent_direction(p, cfg.cs) if G is None else G
    cand = p - G * h
    try:
        cand = purify(cand, tol=cfg.purify_tol) if purify_now else (cand + adjoint(cand)) * 0.5
    except ConvergenceError:
        return p, False
    if action_raw(cand, cfg.cs).real < action_raw(p, cfg.cs).real:
        return cand, True
    return p, False


def relax(p0: TwistedSeries, cfg: FlowConfig) -> tuple[TwistedSeries, FlowTrace]:
    """Backtracking descent until ``|G| <= stop_grad_tol`` or the budget is spent.

    Rejected trials halve the step; accepted ones grow it by ``growth``.
    Statuses: ``converged``, ``budget``, ``step-floor``.
    """
    trace = FlowTrace()
    p, h = p0, cfg.step
    G = descent_direction(p, cfg.cs)
    trace.records.append(_record(0, p, cfg.cs, G, 0.0, True))
    if norm_estimate(G) <= cfg.stop_grad_tol:
        trace.status = "converged"
        return p, trace
    if cfg.max_steps == 0:
        trace.status = "budget"
        return p, trace
    n_acc = 0
    for i in range(1, cfg.max_steps + 1):
        purify_now = (n_acc + 1) % cfg.purify_every == 0
        cand, ok = flow_step(p, cfg, h, purify_now, G)
        if ok:
            p, n_acc = cand, n_acc + 1
            G = descent_direction(p, cfg.cs)
            trace.records.append(_record(i, p, cfg.cs, G, h, True))
            if trace.records[-1].grad_norm <= cfg.stop_grad_tol:
                trace.status = "converged"
                return p, trace
            h *= cfg.growth
        else:
            trace.records.append(FlowRecord(i, math.nan, math.nan, math.nan, math.nan, math.nan,
                                            math.nan, h, False))
            h *= 0.5
            if h < cfg.min_step:
                trace.status = "step-floor"
                return p, trace
    trace.status = "budget"
    return p, trace


# ---------------------------------------------------------------------------
# perturbations


def _random_support(theta: float, rng: np.random.Generator, support: int, window: int) -> TwistedSeries:
    z = TwistedSeries.random(theta, support, rng)
    return z.padded(window)


def tangent_kick(p: TwistedSeries, rng: np.random.Generator, amplitude: float = 1e-2,
                 support: int = 3) -> TwistedSeries:
    """``(1-p) z p + p z^* (1-p)`` with random ``z``, scaled to l1 norm ``amplitude``."""
    z = _random_support(p.theta, rng, support, p.half_width)
    one = TwistedSeries.identity(p.theta, p.half_width)
    q = one - p
    t = _mul(_mul(q, z), p) + _mul(_mul(p, adjoint(z)), q)
    n = t.l1()
    return t * (amplitude / n) if n > 0 else t


def _purify_padded(x: TwistedSeries, pads: tuple[int, ...]) -> TwistedSeries:
    """Purify in the first enlarged window (``half_width + pad``) where it converges."""
    err: ConvergenceError | None = None
    for pad in pads:
        try:
            return purify(x.padded(x.half_width + pad), tol=1e-10)
        except ConvergenceError as exc:
            err = exc
    raise err


def perturb(p: TwistedSeries, rng: np.random.Generator, amplitude: float = 1e-2,
            support: int = 3, pads: tuple[int, ...] = (0, 8, 16)) -> TwistedSeries:
    """Random tangent kick followed by purification."""
    return _purify_padded(p + tangent_kick(p, rng, amplitude, support), pads)


def random_projection(base: TwistedSeries, rng: np.random.Generator, amplitude: float = 0.2,
                      support: int = 4, pads: tuple[int, ...] = (8, 16)) -> TwistedSeries:
    """Purification of ``base`` plus a random hermitian element of l1 norm ``amplitude``.

    For ``amplitude < 1/2`` the spectrum stays clear of ``1/2`` and the result
    lies in the connected component of ``base``.  The window grows by the
    first pad in ``pads`` for which the purified element fits.
    """
    h = TwistedSeries.random(base.theta, support, rng)
    h = (h + adjoint(h)) * 0.5
    h = h * (amplitude / h.l1())
    w = max(base.half_width, support)
    return _purify_padded(base.padded(w) + h.padded(w), pads)
