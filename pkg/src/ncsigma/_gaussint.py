"""Closed-form integrals of polynomial x Gaussian products.

All functions broadcast over numpy arrays.  Polynomials are coefficient
arrays in ascending order along the last axis.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import IntegrabilityError


def shift_poly(p: np.ndarray, sigma: np.ndarray | complex) -> np.ndarray:
    """Coefficients of ``s -> P(s + sigma)`` (broadcast over ``sigma``)."""
    p = np.asarray(p, dtype=np.complex128)
    sigma = np.asarray(sigma, dtype=np.complex128)
    d = p.shape[-1]
    out = np.zeros(np.broadcast_shapes(p.shape[:-1], sigma.shape) + (d,), dtype=np.complex128)
    for j in range(d):
        pj = p[..., j]
        for i in range(j + 1):
            out[..., i] += math.comb(j, i) * pj * sigma ** (j - i)
    return out


def gaussian_moments(mu: np.ndarray, v: np.ndarray, jmax: int) -> list[np.ndarray]:
    """``E[s^j]`` for a (complex) Gaussian with mean ``mu`` and variance ``v``."""
    m = [np.ones_like(mu), mu]
    for j in range(2, jmax + 1):
        m.append(mu * m[j - 1] + (j - 1) * v * m[j - 2])
    return m[: jmax + 1]


def pair_integral(pa: np.ndarray, aa, ba, ga,
                  pb: np.ndarray, ab, bb, gb,
                  sigma=0.0, omega=0.0, phi=0.0) -> np.ndarray:
    """``int conj(ta(s)) tb(s + sigma) exp(i omega s + i phi) ds`` over the real line.

    ``t(s) = P(s) exp(alpha s^2 + beta s + gamma)``.  Raises
    :class:`IntegrabilityError` when the combined quadratic coefficient has a
    non-negative real part.
    """
    aa, ba, ga = np.conj(aa), np.conj(ba), np.conj(ga)
    ab, bb, gb = (np.asarray(x, dtype=np.complex128) for x in (ab, bb, gb))
    sigma = np.asarray(sigma, dtype=np.float64)
    A = aa + ab
    if np.any(np.real(A) >= 0.0):
        raise IntegrabilityError("combined Gaussian exponent is not decaying")
    B = ba + 2.0 * ab * sigma + bb + 1j * np.asarray(omega)
    G = ga + ab * sigma**2 + bb * sigma + gb + 1j * np.asarray(phi)
    pa = np.conj(np.asarray(pa, dtype=np.complex128))
    qb = shift_poly(pb, sigma)
    mu = -B / (2.0 * A)
    v = -1.0 / (2.0 * A)
    da, db = pa.shape[-1], qb.shape[-1]
    mom = gaussian_moments(mu, v, da + db - 2)
    acc = 0.0
    for i in range(da):
        for j in range(db):
            acc = acc + pa[..., i] * qb[..., j] * mom[i + j]
    return np.sqrt(np.pi / (-A)) * np.exp(G - B * B / (4.0 * A)) * acc
