import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncsigma.algebra import TwistedSeries, adjoint, multiply
from ncsigma.conformal import ConformalStructure
from ncsigma.errors import ParameterError
from ncsigma.flow import (FlowConfig, FlowTrace, descent_direction, flow_step, perturb,
                          random_projection, relax, tangent_kick)
from ncsigma.sigma import action_raw, charge_raw, idempotency_residual


@pytest.fixture(scope="module")
def kicked(boca_build):
    return perturb(boca_build.projection, np.random.default_rng(1), 1e-2)


def test_config_validation():
    cs = ConformalStructure(1j)
    for kw in ({"step": 0.0}, {"purify_every": 0}, {"max_steps": -1}, {"growth": 0.5}):
        with pytest.raises(ParameterError):
            FlowConfig(cs, **kw)


def test_descent_forms_agree(kicked):
    cs = ConformalStructure(1j)
    a = descent_direction(kicked, cs)
    b = descent_direction(kicked, cs, "bracket")
    # the two forms differ only through window truncation of the products
    assert (a - b).l1() <= a.tail + b.tail
    with pytest.raises(ParameterError):
        descent_direction(kicked, cs, "other")


def test_descent_direction_is_tangent_and_hermitian(kicked):
    cs = ConformalStructure(1j)
    G = descent_direction(kicked, cs)
    assert (G - adjoint(G)).l1() <= 2 * G.tail
    # p G p = 0 and (1-p) G (1-p) = 0 for tangent vectors
    W = G.half_width
    pgp = multiply(multiply(kicked, G, W)[0], kicked, W)[0]
    assert pgp.l1() <= 1e-4 * G.l1()


def test_descent_lowers_action(kicked):
    cs = ConformalStructure(1j)
    G = descent_direction(kicked, cs)
    h = 1e-4
    before = action_raw(kicked, cs).real
    after = action_raw(kicked - G * h, cs).real
    assert after < before


def test_instanton_is_stationary(boca_build):
    G = descent_direction(boca_build.projection, ConformalStructure(1j))
    assert G.l1() < 1e-6


def test_flow_step_accepts_or_keeps(kicked):
    cfg = FlowConfig(ConformalStructure(1j))
    p, ok = flow_step(kicked, cfg)
    assert ok and action_raw(p, cfg.cs).real < action_raw(kicked, cfg.cs).real
    q, ok = flow_step(kicked, cfg, step=1e3)
    assert not ok and q is kicked


def test_zero_budget():
    cs = ConformalStructure(1j)
    p = TwistedSeries.identity(0.37, 2)
    _, tr = relax(p, FlowConfig(cs, max_steps=0))
    assert tr.status == "converged"
    u = TwistedSeries.monomial(0.37, 1, 0)
    x = (TwistedSeries.identity(0.37, 1) + (u + adjoint(u)) * 0.3) * 0.5
    _, tr = relax(x, FlowConfig(cs, max_steps=0))
    assert tr.status == "budget" and tr.summary()["accepted_steps"] == 0


def test_short_relaxation_is_monotone_and_deterministic(kicked):
    cfg = FlowConfig(ConformalStructure(1j), max_steps=8)
    p1, t1 = relax(kicked, cfg)
    p2, t2 = relax(kicked, cfg)
    assert t1.to_csv() == t2.to_csv()
    assert np.array_equal(p1.coeffs, p2.coeffs)
    s = t1.summary()
    assert s["accepted_steps"] > 0
    assert s["max_action_increase"] < 0
    assert s["max_charge_drift"] < 1e-8
    assert s["final_action"] < s["initial_action"]
    header = t1.to_csv().split("\n")[0].split(",")
    assert header[:3] == ["step", "action", "charge_raw"]


def test_tangent_kick_size_and_shape(boca_build):
    p = boca_build.projection
    t = tangent_kick(p, np.random.default_rng(0), 1e-2)
    assert t.l1() == pytest.approx(1e-2)
    assert (t - adjoint(t)).l1() <= 2 * t.tail


def test_perturb_keeps_projection_and_charge(boca_build, kicked):
    assert idempotency_residual(kicked) < 1e-9
    assert charge_raw(kicked).real == pytest.approx(-1.0, abs=1e-8)
    assert action_raw(kicked, ConformalStructure(1j)).real > 2.0


@settings(max_examples=6)
@given(st.integers(0, 2**32 - 1))
def test_random_projections_obey_bound(boca_build, seed):
    cs = ConformalStructure(1j)
    p = random_projection(boca_build.projection, np.random.default_rng(seed), 0.3)
    c = charge_raw(p).real
    assert abs(c - round(c)) < 1e-3
    assert action_raw(p, cs).real >= 2 * abs(c) - 1e-8


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.4))
def test_trivial_sector_projections(seed, amplitude):
    cs = ConformalStructure(0.3 + 0.8j)
    base = TwistedSeries.scalar(0.37, float(seed % 2), 0)
    p = random_projection(base, np.random.default_rng(seed), amplitude, support=2)
    c = charge_raw(p).real
    assert abs(c) < 1e-8
    assert action_raw(p, cs).real >= -1e-12


@pytest.mark.parametrize("value", [0.0, 1.0])
def test_trivial_sector_relaxes_immediately(value):
    # charge 0 forces an integer trace, so purification lands on 0 or 1
    cs = ConformalStructure(1j)
    base = TwistedSeries.scalar(0.37, value, 0)
    p = random_projection(base, np.random.default_rng(4), 0.3, support=2)
    q, tr = relax(p, FlowConfig(cs))
    assert tr.status == "converged"
    assert action_raw(q, cs).real < 1e-2
    assert (q - base.padded(q.half_width)).l1() < 1e-10
