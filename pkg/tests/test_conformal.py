import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncsigma.conformal import ConformalStructure
from ncsigma.errors import ParameterError

taus = st.tuples(st.floats(-2.0, 2.0), st.floats(0.1, 3.0)).map(lambda t: complex(*t))


def test_square_torus():
    cs = ConformalStructure(1j)
    assert np.array_equal(cs.metric, np.eye(2))
    assert cs.sqrt_det == 1.0
    # d = (d1 - i d2)/2, dbar = (d1 + i d2)/2
    assert cs.holo_coeffs == pytest.approx((0.5, -0.5j))
    assert cs.antiholo_coeffs == pytest.approx((0.5, 0.5j))


def test_oblique_metric():
    cs = ConformalStructure(0.3 + 0.8j)
    assert cs.metric == pytest.approx(np.array([[1.0, 0.3], [0.3, 0.73]]))
    assert cs.sqrt_det == pytest.approx(0.8)


@pytest.mark.parametrize("tau", [0.5, 1 - 1j, complex("nan+1j")])
def test_rejects_lower_half_plane(tau):
    with pytest.raises(ParameterError):
        ConformalStructure(tau)


@given(taus)
def test_metric_identities(tau):
    cs = ConformalStructure(tau)
    assert np.sqrt(np.linalg.det(cs.metric)) == pytest.approx(cs.sqrt_det, rel=1e-9)
    assert cs.metric @ cs.inverse_metric == pytest.approx(np.eye(2), abs=1e-9)
    (a1, a2), (b1, b2) = cs.holo_coeffs, cs.antiholo_coeffs
    assert a1 + b1 == pytest.approx(1.0) and a2 + b2 == pytest.approx(0.0, abs=1e-12)
    assert b1 == pytest.approx(np.conj(a1)) and b2 == pytest.approx(np.conj(a2))
    # d and dbar annihilate the antiholomorphic and holomorphic coordinate
    # z = x1 + tau x2: d z = 1, dbar z = 0
    assert a1 + a2 * tau == pytest.approx(1.0)
    assert b1 + b2 * tau == pytest.approx(0.0, abs=1e-12)
    # 4 d dbar = g^{mu nu} d_mu d_nu
    sym = 4 * np.real(np.outer([a1, a2], [b1, b2]))
    assert (sym + sym.T) / 2 == pytest.approx(cs.inverse_metric, rel=1e-9, abs=1e-9)
