import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncsigma.algebra import TwistedSeries, adjoint
from ncsigma.conformal import ConformalStructure
from ncsigma.errors import ChargeError, InputError
from ncsigma.sigma import (CHARGE_SIGN, SELF_DUAL_BRANCH, ProjectionReport, action, action_holo,
                          action_raw, asd_residual, bp_gap, charge, charge_raw, cocycle_phi,
                          cocycle_psi, eom_residual, projection_report, reports_to_csv,
                          sd_residual)

taus = st.tuples(st.floats(-1.0, 1.0), st.floats(0.3, 2.0)).map(lambda t: complex(*t))


def test_trivial_projections_have_zero_report():
    cs = ConformalStructure(1j)
    for value in (0.0, 1.0):
        p = TwistedSeries.scalar(0.37, value, 3)
        r = projection_report(p, cs)
        assert r.trace == value
        assert r.action == 0.0 and r.charge_raw == 0.0 and r.charge_rounded == 0
        assert r.bp_gap == 0.0 and r.eom_residual == 0.0
        assert r.idempotency_residual == 0.0 and r.hermiticity_residual == 0.0


def test_report_field_order():
    assert ProjectionReport.field_names() == [
        "trace", "action", "charge_raw", "charge_rounded", "bp_gap", "eom_residual",
        "sd_residual", "asd_residual", "idempotency_residual", "hermiticity_residual"]


def test_conventions_pinned():
    assert SELF_DUAL_BRANCH == "sd"
    assert CHARGE_SIGN == -1


def test_boca_instanton_functionals(boca_build):
    p, cs = boca_build.projection, boca_build.config.cs
    r = boca_build.report
    assert r.trace == pytest.approx(0.37, abs=1e-12)
    assert r.action == pytest.approx(2.0, abs=1e-9)
    assert r.charge_rounded == CHARGE_SIGN
    assert r.bp_gap == pytest.approx(0.0, abs=1e-9)
    assert r.sd_residual < 1e-8 < 1.0 < r.asd_residual
    assert action_holo(p, cs).real == pytest.approx(action(p, cs), rel=1e-12)
    one = TwistedSeries.identity(p.theta, p.half_width)
    assert cocycle_phi(one, p, p, cs).real == pytest.approx(action(p, cs), rel=1e-12)
    c, n = charge(p)
    assert n == -1 and abs(c + 1) < 1e-9


def test_complement_has_opposite_charge(boca_build):
    p, cs = boca_build.projection, boca_build.config.cs
    q = TwistedSeries.identity(p.theta, p.half_width) - p
    assert charge_raw(q).real == pytest.approx(-charge_raw(p).real, abs=1e-12)
    assert action(q, cs) == pytest.approx(action(p, cs), rel=1e-12)
    # the complement of a self-dual projection is anti-self-dual
    assert asd_residual(q, cs) < 1e-8 < 1.0 < sd_residual(q, cs)


def test_charge_is_tau_independent(boca_build):
    p = boca_build.projection
    c = charge_raw(p)
    for tau in (0.3 + 0.8j, -0.5 + 2j):
        cs = ConformalStructure(tau)
        s = action(p, cs)
        assert s >= 2 * abs(c.real) - 1e-8
    assert abs(c.imag) < 1e-12


def test_non_projection_rejected():
    cs = ConformalStructure(1j)
    x = TwistedSeries.scalar(0.37, 0.5, 2)
    with pytest.raises(InputError):
        action(x, cs)
    with pytest.raises(InputError):
        charge(x)
    with pytest.raises(InputError):
        bp_gap(x, cs)


def test_charge_error_on_non_integer(boca_build):
    p = boca_build.projection
    with pytest.raises(ChargeError):
        charge(p * 0.9, check=False)


def test_report_json_and_csv(boca_build):
    r = boca_build.report
    d = json.loads(r.to_json())
    assert list(d) == ProjectionReport.field_names()
    text = reports_to_csv([r, r], extra=[{"index": 0}, {"index": 1}])
    lines = text.strip().split("\n")
    assert lines[0].split(",") == ["index"] + ProjectionReport.field_names()
    assert float(lines[1].split(",")[2]) == r.action


@given(taus, st.integers(0, 2**32 - 1))
def test_action_forms_agree_on_any_element(tau, seed):
    cs = ConformalStructure(tau)
    a = TwistedSeries.random(0.37, 2, np.random.default_rng(seed), hermitian=True)
    assert action_holo(a, cs).real == pytest.approx(action_raw(a, cs).real, rel=1e-10, abs=1e-12)
    assert action_raw(a, cs).real >= -1e-12


@given(st.integers(0, 2**32 - 1))
def test_cocycle_psi_is_cyclic(seed):
    rng = np.random.default_rng(seed)
    a0, a1, a2 = (TwistedSeries.random(0.37, 2, rng) for _ in range(3))
    x = cocycle_psi(a0, a1, a2)
    y = cocycle_psi(a2, a0, a1)
    assert abs(x - y) <= 1e-9 * a0.l1() * a1.l1() * a2.l1()


def test_eom_vanishes_at_instanton(boca_build):
    p, cs = boca_build.projection, boca_build.config.cs
    assert eom_residual(p, cs) < 1e-6
