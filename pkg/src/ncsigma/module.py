"""Heisenberg bimodule E_{r,q} over R x Z_q with symbolic Gaussian sections.

A section is stored per discrete index ``k`` as a list of terms
``P(s) exp(alpha s^2 + beta s + gamma)``.  Every operator used here (the
generators of both algebras, the connection) maps this class to itself, so
module identities hold to rounding rather than to a discretization error.

Actions (``eps = r/q - alpha``, ``a r + b q = 1``)::

    (xi Z1)(s, k) = xi(s - eps, k - r)      (xi Z2)(s, k) = e^{2 pi i (s - k/q)} xi(s, k)
    (U1 xi)(s, k) = xi(s - 1/q, k - 1)      (U2 xi)(s, k) = e^{2 pi i (s/eps - a k)/q} xi(s, k)

Connection: ``nabla_1 = (2 pi i / eps) s``, ``nabla_2 = d/ds``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from ._gaussint import pair_integral, shift_poly
from .algebra import DEFAULT_TAIL_BUDGET, THETA_TOL, TwistedSeries
from .conformal import ConformalStructure
from .errors import (BasisError, DegenerateError, IntegrabilityError, ParameterError,
                     WindowError)

SECTION_FORMAT = "gauss-poly-section/1"
EPS_TOL = 1e-12
DEFAULT_WINDOW = 16
# rings beyond the window used to estimate the discarded coefficient mass
TAIL_RINGS = 2

VARIANTS = ("inverse-z1z2", "inverse-z2z1", "direct-z1z2", "direct-z2z1")
CANONICAL_VARIANT = "inverse-z1z2"


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class ModuleGeometry:
    r: int
    q: int
    alpha: float
    epsilon: float
    a: int
    b: int
    theta: float

    def __post_init__(self) -> None:
        if self.q <= 0:
            raise ParameterError(f"q must be positive, got {self.q}")
        if math.gcd(self.r, self.q) != 1:
            raise ParameterError(f"gcd(r, q) = {math.gcd(self.r, self.q)} != 1")
        if self.a * self.r + self.b * self.q != 1:
            raise ParameterError(f"not a Bezout pair: {self.a}*{self.r} + {self.b}*{self.q} != 1")
        if abs(self.epsilon) <= EPS_TOL:
            raise DegenerateError("r - q*alpha vanishes")

    def to_dict(self) -> dict[str, Any]:
        return {"r": self.r, "q": self.q, "alpha": self.alpha, "epsilon": self.epsilon,
                "a": self.a, "b": self.b, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ModuleGeometry:
        g = theta_of_alpha(int(d["r"]), int(d["q"]), float(d["alpha"]),
                           bezout_pair=(int(d["a"]), int(d["b"])))
        for key in ("epsilon", "theta"):
            if key in d and abs(float(d[key]) - getattr(g, key)) > 1e-9 * max(1.0, abs(getattr(g, key))):
                raise ParameterError(f"inconsistent {key} in geometry record")
        return g


def bezout(r: int, q: int) -> tuple[int, int]:
    """Pair ``(a, b)`` with ``a r + b q = 1``, minimal ``|a|``, ties to the smaller ``a``."""
    if q <= 0:
        raise ParameterError(f"q must be positive, got {q}")
    if math.gcd(r, q) != 1:
        raise ParameterError(f"gcd(r, q) = {math.gcd(r, q)} != 1")
    a0 = pow(r, -1, q) if q > 1 else 0
    best = min((a0 - q, a0, a0 + q), key=lambda x: (abs(x), x))
    return best, (1 - best * r) // q


def theta_of_alpha(r: int, q: int, alpha: float,
                   bezout_pair: tuple[int, int] | None = None) -> ModuleGeometry:
    """Module data for ``E_{r,q}`` over ``A_alpha``: ``theta = (a alpha + b)/(r - q alpha)``.

    Another Bezout pair may be forced; it shifts theta by an integer.
    """
    if q <= 0:
        raise ParameterError(f"q must be positive, got {q}")
    if math.gcd(r, q) != 1:
        raise ParameterError(f"gcd(r, q) = {math.gcd(r, q)} != 1")
    a, b = bezout_pair if bezout_pair is not None else bezout(r, q)
    den = r - q * alpha
    if abs(den) <= EPS_TOL * q:
        raise DegenerateError(f"r - q*alpha = {den!r} vanishes")
    return ModuleGeometry(r, q, float(alpha), r / q - alpha, a, b, (a * alpha + b) / den)



def geometry_from_theta(theta: float, r: int = 0, q: int = 1) -> ModuleGeometry:
    """Inverse map: choose ``alpha`` so that ``theta_of_alpha(r, q, alpha).theta == theta``."""
    a, b = bezout(r, q)
    den = q * theta + a
    if abs(den) <= EPS_TOL:
        raise DegenerateError("q*theta + a vanishes")
    return theta_of_alpha(r, q, (r * theta - b) / den)


# ---------------------------------------------------------------------------
# sections


@dataclass(frozen=True, eq=False)
class GaussTerm:
    """``P(s) exp(alpha s^2 + beta s + gamma)``; ``gamma`` is a log scale."""

    poly: np.ndarray
    alpha: complex
    beta: complex
    gamma: complex = 0j

    def __post_init__(self) -> None:
        p = np.atleast_1d(np.asarray(self.poly, dtype=np.complex128)).copy()
        p.setflags(write=False)
        object.__setattr__(self, "poly", p)
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        object.__setattr__(self, "gamma", complex(self.gamma))
        if not self.alpha.real < 0.0:
            raise IntegrabilityError(f"Re(alpha_exp) = {self.alpha.real} is not negative")

    def __call__(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        return np.polynomial.polynomial.polyval(s, self.poly) * np.exp(
            self.alpha * s * s + self.beta * s + self.gamma)

    def scaled(self, c: complex) -> GaussTerm:
        return GaussTerm(self.poly * c, self.alpha, self.beta, self.gamma)

    def center_width(self) -> tuple[float, float]:
        ar = self.alpha.real
        return -self.beta.real / (2.0 * ar), 1.0 / math.sqrt(-2.0 * ar)


@dataclass(frozen=True, eq=False)
class GaussPolySection:
    """Element of ``E_{r,q}``: ``terms[k]`` lists the terms at discrete index ``k``."""

    geometry: ModuleGeometry
    terms: tuple[tuple[GaussTerm, ...], ...]

    def __post_init__(self) -> None:
        t = tuple(tuple(row) for row in self.terms)
        if len(t) != self.geometry.q:
            raise ParameterError(f"expected {self.geometry.q} term lists, got {len(t)}")
        object.__setattr__(self, "terms", t)

    @classmethod
    def zero(cls, geometry: ModuleGeometry) -> GaussPolySection:
        return cls(geometry, ((),) * geometry.q)

    @classmethod
    def single(cls, geometry: ModuleGeometry, k: int, alpha_exp: complex, beta_exp: complex = 0j,
               poly: Sequence[complex] = (1.0,), gamma: complex = 0j) -> GaussPolySection:
        rows: list[tuple[GaussTerm, ...]] = [()] * geometry.q
        rows[k % geometry.q] = (GaussTerm(np.asarray(poly), alpha_exp, beta_exp, gamma),)
        return cls(geometry, tuple(rows))

    @classmethod
    def random(cls, geometry: ModuleGeometry, rng: np.random.Generator, n_terms: int = 2,
               max_degree: int = 2, width: tuple[float, float] = (0.5, 2.0),
               spread: float = 1.0) -> GaussPolySection:
        """Random Gaussian polynomials with random centers, widths, chirps and phases."""
        rows = []
        for _ in range(geometry.q):
            row = []
            for _ in range(n_terms):
                deg = int(rng.integers(0, max_degree + 1))
                poly = rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1)
                al = -rng.uniform(*width) + 1j * rng.uniform(-1.0, 1.0)
                s0 = rng.uniform(-spread, spread)
                kappa = rng.uniform(-3.0, 3.0)
                row.append(GaussTerm(poly, al, -2.0 * al * s0 + 1j * kappa, al * s0 * s0))
            rows.append(tuple(row))
        return cls(geometry, tuple(rows))

    @property
    def num_terms(self) -> int:
        return sum(len(row) for row in self.terms)

    def evaluate(self, s: np.ndarray, k: int) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        row = self.terms[k % self.geometry.q]
        out = np.zeros(s.size, dtype=np.complex128)
        if not row:
            return out.reshape(s.shape)
        P, al, be, ga = _stack(row)
        flat = s.ravel()
        step = max(1, _CHUNK // max(1, flat.size))
        for lo in range(0, len(row), step):
            sl = slice(lo, lo + step)
            x = flat[None, :]
            vals = np.polynomial.polynomial.polyval(x, P[sl].T[:, :, None], tensor=False)
            out += np.sum(vals * np.exp(al[sl, None] * x * x + be[sl, None] * x + ga[sl, None]), axis=0)
        return out.reshape(s.shape)

    def _check(self, other: GaussPolySection) -> None:
        if other.geometry != self.geometry:
            raise ParameterError("sections live on different modules")

    def __add__(self, other: GaussPolySection) -> GaussPolySection:
        self._check(other)
        return GaussPolySection(self.geometry, tuple(x + y for x, y in zip(self.terms, other.terms)))

    def __neg__(self) -> GaussPolySection:
        return self * -1.0

    def __sub__(self, other: GaussPolySection) -> GaussPolySection:
        return self + (-other)

    def __mul__(self, c: complex) -> GaussPolySection:
        return GaussPolySection(self.geometry, tuple(tuple(t.scaled(c) for t in row) for row in self.terms))

    __rmul__ = __mul__

    def grid(self, density: int = 16, span: float = 7.0, max_points: int = 4000) -> np.ndarray:
        """Sample points covering the envelopes of all non-negligible terms."""
        env = []
        for row in self.terms:
            for t in row:
                c, w = t.center_width()
                peak = t.gamma.real + t.alpha.real * c * c + t.beta.real * c
                peak += math.log(max(float(np.max(np.abs(t.poly))), 1e-300))
                env.append((c, w, peak))
        if not env:
            return np.zeros(1)
        top = max(e[2] for e in env)
        env = [e for e in env if e[2] > top - 40.0]
        lo = min(c - span * w for c, w, _ in env)
        hi = max(c + span * w for c, w, _ in env)
        wmin = min(w for _, w, _ in env)
        n = int(min(max_points, max(density * 8, density * (hi - lo) / wmin)))
        return np.linspace(lo, hi, n)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict[str, Any]:
        def cpx(z: complex) -> list[float]:
            return [float(z.real), float(z.imag)]
        return {
            "format": SECTION_FORMAT,
            "geometry": self.geometry.to_dict(),
            "terms": [[[[cpx(c) for c in t.poly], cpx(t.alpha), cpx(t.beta), cpx(t.gamma)]
                       for t in row] for row in self.terms],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1)

    @classmethod
    def from_json_dict(cls, d: dict[str, Any]) -> GaussPolySection:
        if d.get("format") != SECTION_FORMAT:
            raise ParameterError(f"unsupported section format {d.get('format')!r}")
        geom = ModuleGeometry.from_dict(d["geometry"])

        def cpx(x: Sequence[float]) -> complex:
            return complex(float(x[0]), float(x[1]))
        rows = []
        for row in d["terms"]:
            terms = []
            for entry in row:
                poly = np.array([cpx(c) for c in entry[0]])
                gamma = cpx(entry[3]) if len(entry) > 3 else 0j
                terms.append(GaussTerm(poly, cpx(entry[1]), cpx(entry[2]), gamma))
            rows.append(tuple(terms))
        return cls(geom, tuple(rows))

    @classmethod
    def from_json(cls, text: str) -> GaussPolySection:
        return cls.from_json_dict(json.loads(text))


def section_residual(x: GaussPolySection, y: GaussPolySection,
                     scale: GaussPolySection | None = None) -> float:
    """Max of ``|x - y|`` on a covering grid, relative to the max of ``|scale|``.

    ``scale`` defaults to ``y``.  Used to confirm symbolic identities to
    rounding.
    """
    ref = y if scale is None else scale
    s = np.unique(np.concatenate([x.grid(), y.grid(), ref.grid()]))
    num, den = 0.0, 0.0
    for k in range(x.geometry.q):
        num = max(num, float(np.max(np.abs(x.evaluate(s, k) - y.evaluate(s, k)))))
        den = max(den, float(np.max(np.abs(ref.evaluate(s, k)))))
    if den == 0.0:
        return num
    return num / den


# ---------------------------------------------------------------------------
# shift-and-modulate operators


@dataclass(frozen=True)
class WeylOp:
    """``(T xi)(s, k) = exp(2 pi i (omega s + c - d k)) xi(s - sigma, k - kappa)``.

    Fields may be numpy arrays to describe a whole lattice of operators.
    """

    sigma: Any = 0.0
    kappa: Any = 0
    omega: Any = 0.0
    c: Any = 0.0
    d: Any = 0.0

    def then(self, other: WeylOp) -> WeylOp:
        """Apply ``self`` first, then ``other``."""
        return WeylOp(self.sigma + other.sigma, self.kappa + other.kappa, self.omega + other.omega,
                      self.c + other.c - self.omega * other.sigma + self.d * other.kappa,
                      self.d + other.d)


def op_z1(g: ModuleGeometry, m: Any) -> WeylOp:
    m = np.asarray(m)
    return WeylOp(sigma=m * g.epsilon, kappa=m * g.r, omega=0.0 * m, c=0.0 * m, d=0.0 * m)


def op_z2(g: ModuleGeometry, n: Any) -> WeylOp:
    n = np.asarray(n)
    return WeylOp(sigma=0.0 * n, kappa=0 * n, omega=1.0 * n, c=0.0 * n, d=n / g.q)


def op_u1(g: ModuleGeometry, m: Any) -> WeylOp:
    m = np.asarray(m)
    return WeylOp(sigma=m / g.q, kappa=1 * m, omega=0.0 * m, c=0.0 * m, d=0.0 * m)


def op_u2(g: ModuleGeometry, n: Any) -> WeylOp:
    n = np.asarray(n)
    return WeylOp(sigma=0.0 * n, kappa=0 * n, omega=n / (g.q * g.epsilon), c=0.0 * n,
                  d=n * g.a / g.q)


def op_right(g: ModuleGeometry, m: Any, n: Any, variant: str = CANONICAL_VARIANT) -> WeylOp:
    """Operator ``xi -> xi . w`` for the word selected by ``variant``.

    ``z1z2``: ``w = Z1^m Z2^n``; ``z2z1``: ``w = Z2^n Z1^m``.  The
    ``inverse`` variants use ``w^{-1}``.
    """
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}")
    m, n = np.asarray(m), np.asarray(n)
    inverse = variant.startswith("inverse")
    z1_first = variant.endswith("z1z2")
    if inverse:
        # (Z1^m Z2^n)^{-1} = Z2^{-n} Z1^{-m};  (Z2^n Z1^m)^{-1} = Z1^{-m} Z2^{-n}
        return op_z2(g, -n).then(op_z1(g, -m)) if z1_first else op_z1(g, -m).then(op_z2(g, -n))
    return op_z1(g, m).then(op_z2(g, n)) if z1_first else op_z2(g, n).then(op_z1(g, m))


def op_left(g: ModuleGeometry, m: Any, n: Any) -> WeylOp:
    """Operator ``xi -> U1^m U2^n xi``."""
    return op_u2(g, n).then(op_u1(g, m))


def apply_op(xi: GaussPolySection, op: WeylOp, coeff: complex = 1.0) -> GaussPolySection:
    """``coeff * T xi`` for a single (scalar-parameter) operator."""
    g = xi.geometry
    sigma, kappa = float(op.sigma), int(op.kappa)
    omega, c, d = float(op.omega), float(op.c), float(op.d)
    rows: list[list[GaussTerm]] = [[] for _ in range(g.q)]
    for k_in, row in enumerate(xi.terms):
        k = (k_in + kappa) % g.q
        # the output phase uses the output index k
        ph = 2j * math.pi * (np.mod(c - d * (k_in + kappa), 1.0))
        for t in row:
            poly = shift_poly(t.poly, -sigma) * coeff
            beta = t.beta - 2.0 * t.alpha * sigma + 2j * math.pi * omega
            gamma = t.gamma + t.alpha * sigma * sigma - t.beta * sigma + ph
            rows[k].append(GaussTerm(poly, t.alpha, beta, gamma))
    return GaussPolySection(g, tuple(tuple(r) for r in rows))


def _sum_sections(g: ModuleGeometry, parts: Iterable[GaussPolySection]) -> GaussPolySection:
    rows: list[list[GaussTerm]] = [[] for _ in range(g.q)]
    for p in parts:
        for k, row in enumerate(p.terms):
            rows[k].extend(row)
    return GaussPolySection(g, tuple(tuple(r) for r in rows))


def _word(word: tuple[int, int] | TwistedSeries) -> list[tuple[int, int, complex]]:
    if isinstance(word, TwistedSeries):
        M = word.half_width
        return [(int(i) - M, int(j) - M, complex(word.coeffs[i, j]))
                for i, j in np.argwhere(word.coeffs != 0)]
    m, n = word
    return [(int(m), int(n), 1.0)]


def act_right(xi: GaussPolySection, word: tuple[int, int] | TwistedSeries,
              variant: str = "direct-z1z2") -> GaussPolySection:
    """Right action of ``Z1^m Z2^n`` or of a series over ``alpha``."""
    g = xi.geometry
    if isinstance(word, TwistedSeries) and abs(word.theta - g.alpha) > THETA_TOL:
        raise ParameterError(f"series parameter {word.theta!r} != module alpha {g.alpha!r}")
    return _sum_sections(g, (apply_op(xi, op_right(g, m, n, variant), c) for m, n, c in _word(word)))


def act_left(xi: GaussPolySection, word: tuple[int, int] | TwistedSeries) -> GaussPolySection:
    """Left action of ``U1^m U2^n`` or of a series over ``theta`` (mod 1)."""
    g = xi.geometry
    if isinstance(word, TwistedSeries):
        dt = word.theta - g.theta
        if abs(dt - round(dt)) > 1e-9:
            raise ParameterError(f"series parameter {word.theta!r} != module theta {g.theta!r} mod 1")
    return _sum_sections(g, (apply_op(xi, op_left(g, m, n), c) for m, n, c in _word(word)))


# ---------------------------------------------------------------------------
# connection


def _map_terms(xi: GaussPolySection, f) -> GaussPolySection:
    return GaussPolySection(xi.geometry, tuple(tuple(f(t) for t in row) for row in xi.terms))


def nabla(xi: GaussPolySection, mu: int) -> GaussPolySection:
    """``nabla_1 = (2 pi i / eps) s``, ``nabla_2 = d/ds``."""
    if mu == 1:
        f = 2j * math.pi / xi.geometry.epsilon
        return _map_terms(xi, lambda t: GaussTerm(np.concatenate([[0.0], t.poly]) * f,
                                                  t.alpha, t.beta, t.gamma))
    if mu == 2:
        def d(t: GaussTerm) -> GaussTerm:
            p = t.poly
            lin = np.concatenate([[0.0], p]) * (2.0 * t.alpha) + np.concatenate([p * t.beta, [0.0]])
            dp = np.polynomial.polynomial.polyder(p) if len(p) > 1 else np.zeros(1)
            lin[: len(dp)] += dp
            return GaussTerm(lin, t.alpha, t.beta, t.gamma)
        return _map_terms(xi, d)
    raise ParameterError("mu must be 1 or 2")


def nabla_holo(xi: GaussPolySection, cs: ConformalStructure,
               conjugated: bool = False) -> GaussPolySection:
    c1, c2 = cs.coeffs(conjugated)
    return nabla(xi, 1) * c1 + nabla(xi, 2) * c2


# ---------------------------------------------------------------------------
# inner products


def _stack(row: Sequence[GaussTerm]) -> tuple[np.ndarray, ...]:
    deg = max(len(t.poly) for t in row)
    P = np.zeros((len(row), deg), dtype=np.complex128)
    for i, t in enumerate(row):
        P[i, : len(t.poly)] = t.poly
    al = np.array([t.alpha for t in row])
    be = np.array([t.beta for t in row])
    ga = np.array([t.gamma for t in row])
    return P, al, be, ga


_CHUNK = 1 << 20


def matrix_elements(xi: GaussPolySection, eta: GaussPolySection, op: WeylOp) -> np.ndarray:
    """``(xi, T eta)`` in L^2(R x Z_q), broadcast over the operator lattice."""
    xi._check(eta)
    g = xi.geometry
    sigma = np.asarray(op.sigma, dtype=np.float64)
    shape = np.broadcast_shapes(sigma.shape, np.shape(op.kappa), np.shape(op.omega),
                                np.shape(op.c), np.shape(op.d))
    sigma = np.broadcast_to(sigma, shape).ravel()
    kappa = np.broadcast_to(np.asarray(op.kappa), shape).ravel().astype(np.int64)
    omega = np.broadcast_to(np.asarray(op.omega, dtype=np.float64), shape).ravel()
    c = np.broadcast_to(np.asarray(op.c, dtype=np.float64), shape).ravel()
    d = np.broadcast_to(np.asarray(op.d, dtype=np.float64), shape).ravel()
    out = np.zeros(sigma.shape, dtype=np.complex128)
    for k in range(g.q):
        if not xi.terms[k]:
            continue
        Pa, aa, ba, ga = _stack(xi.terms[k])
        phi = 2.0 * math.pi * np.mod(c - d * k, 1.0)
        for k_in in range(g.q):
            if not eta.terms[k_in]:
                continue
            sel = np.nonzero(np.mod(k - k_in - kappa, g.q) == 0)[0]
            if sel.size == 0:
                continue
            Pb, ab, bb, gb = _stack(eta.terms[k_in])
            step = max(1, _CHUNK // max(1, len(Pb) * len(Pa)))
            for lo in range(0, sel.size, step):
                idx = sel[lo: lo + step]
                v = pair_integral(
                    Pa[:, None, None, :], aa[:, None, None], ba[:, None, None], ga[:, None, None],
                    Pb[None, :, None, :], ab[None, :, None], bb[None, :, None], gb[None, :, None],
                    sigma=-sigma[idx], omega=2.0 * math.pi * omega[idx], phi=phi[idx])
                out[idx] += v.sum(axis=(0, 1))
    return out.reshape(shape)


def l2_inner(xi: GaussPolySection, eta: GaussPolySection) -> complex:
    """``sum_k int conj(xi) eta ds``, antilinear in ``xi``."""
    return complex(matrix_elements(xi, eta, WeylOp()))


def _lattice(M: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(-M, M + 1)
    return np.meshgrid(k, k, indexing="ij")


def _finish(theta: float, full: np.ndarray, M: int, tail_budget: float | None,
            label: str) -> TwistedSeries:
    ser = TwistedSeries(theta, full)
    res, rep = ser.truncated(M)
    if tail_budget is not None and rep.discarded_mass > tail_budget:
        raise WindowError(f"{label}: discarded mass {rep.discarded_mass:.3e} at window {M} "
                          f"exceeds budget {tail_budget:.1e}")
    return TwistedSeries(theta, res.coeffs, rep.discarded_mass)


def inner_alpha(xi: GaussPolySection, eta: GaussPolySection, window: int = DEFAULT_WINDOW,
                variant: str = CANONICAL_VARIANT,
                tail_budget: float | None = DEFAULT_TAIL_BUDGET) -> TwistedSeries:
    """``A_alpha``-valued hermitian structure, antilinear in ``xi``.

    Coefficient of ``Z1^m Z2^n`` is ``(xi, eta . (Z1^m Z2^n)^{-1})``; the other
    variants exist for convention-pinning tests.  The discarded mass is
    estimated from two extra rings and stored as the series tail.
    """
    g = xi.geometry
    W = window + TAIL_RINGS
    m, n = _lattice(W)
    c = matrix_elements(xi, eta, op_right(g, m, n, variant))
    return _finish(g.alpha, c, window, tail_budget, "inner_alpha")


def inner_theta(xi: GaussPolySection, eta: GaussPolySection, window: int = DEFAULT_WINDOW,
                method: str = "trace", basis: Sequence[GaussPolySection] | None = None,
                tail_budget: float | None = DEFAULT_TAIL_BUDGET, **lstsq_opts: Any) -> TwistedSeries:
    """``A_theta``-valued hermitian structure, antilinear in ``eta``.

    ``method="trace"`` uses ``t[m, n] = (U1^m U2^n eta, xi) / (q eps)``;
    ``method="lstsq"`` fits ``T zeta = xi <eta, zeta>_alpha`` over a battery
    of test sections (see :func:`inner_theta_lstsq`).
    """
    if method == "lstsq":
        return inner_theta_lstsq(xi, eta, window, basis=basis, **lstsq_opts)
    if method != "trace":
        raise ParameterError(f"unknown method {method!r}")
    g = xi.geometry
    W = window + TAIL_RINGS
    m, n = _lattice(W)
    t = np.conj(matrix_elements(xi, eta, op_left(g, m, n))) / (g.q * g.epsilon)
    return _finish(g.theta, t, window, tail_budget, "inner_theta")


def section_battery(geometry: ModuleGeometry, size: int, seed: int = 0) -> list[GaussPolySection]:
    """Randomized single-term Gaussian-polynomial test sections."""
    rng = np.random.default_rng(seed)
    e = abs(geometry.epsilon)
    out = []
    for _ in range(size):
        out.append(GaussPolySection.random(geometry, rng, n_terms=1, max_degree=1,
                                           width=(0.5 / e, 2.0 / e), spread=1.0 / geometry.q))
    return out


def inner_theta_lstsq(xi: GaussPolySection, eta: GaussPolySection, window: int = 6,
                      basis: Sequence[GaussPolySection] | None = None, *,
                      alpha_window: int = DEFAULT_WINDOW, cond_max: float = 1e10,
                      residual_tol: float = 1e-6, seed: int = 0) -> TwistedSeries:
    """Least-squares solution of ``T zeta_j = xi <eta, zeta_j>_alpha`` on the window.

    Normal equations in the coefficients of ``T``; the Gram matrix of the
    translated battery is assembled from ``(zeta, U1^m U2^n zeta)`` on the
    doubled lattice.  Raises :class:`BasisError` when its condition number
    exceeds ``cond_max`` and :class:`WindowError` when the relative fit
    residual exceeds ``residual_tol``.
    """
    g = xi.geometry
    M = window
    if basis is None:
        basis = section_battery(g, 4 * (2 * M + 1) ** 2, seed)
    t_frac = g.theta
    mm, nn = _lattice(M)
    mm, nn = mm.ravel(), nn.ravel()
    D = 2 * M
    dm, dn = _lattice(D)
    N = mm.size
    G = np.zeros((N, N), dtype=np.complex128)
    rhs = np.zeros(N, dtype=np.complex128)
    xx = 0.0
    # V_{mn}^* V_{m'n'} = exp(2 pi i theta (m n - n m')) V_{m'-m, n'-n}
    phase = np.exp(2j * np.pi * np.mod(t_frac * (mm[:, None] * nn[:, None] - nn[:, None] * mm[None, :]), 1.0))
    ii = (mm[None, :] - mm[:, None]) + D
    jj = (nn[None, :] - nn[:, None]) + D
    for z in basis:
        h = matrix_elements(z, z, op_left(g, dm, dn))
        G += phase * h[ii, jj]
        c = inner_alpha(eta, z, alpha_window, tail_budget=None)
        c, _ = c.trimmed(1e-18 * max(c.l1(), 1e-300))
        X = act_right(xi, c, variant="direct-z1z2")
        # rhs_mn = (V_mn z, X) = conj((X, V_mn z))
        rhs += np.conj(matrix_elements(X, z, op_left(g, mm, nn)))
        xx += l2_inner(X, X).real
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_max:
        raise BasisError(f"test-section Gram matrix condition number {cond:.3e} exceeds {cond_max:.1e}")
    t = np.linalg.solve(G, rhs)
    res2 = max(0.0, (np.vdot(t, G @ t) - 2.0 * np.vdot(t, rhs).real + xx).real)
    rel = math.sqrt(res2 / xx) if xx > 0 else math.sqrt(res2)
    if rel > residual_tol:
        raise WindowError(f"inner_theta fit residual {rel:.3e} exceeds {residual_tol:.1e} at window {M}")
    return TwistedSeries(g.theta, t.reshape(2 * M + 1, 2 * M + 1))


# ---------------------------------------------------------------------------
# induced derivations


def induced_derivation_check(geometry: ModuleGeometry, battery: int = 8, seed: int = 0) -> float:
    """Max relative residual of ``[nabla_mu, U_nu] - (2 pi i/(q eps)) delta U_nu``."""
    f = 2j * math.pi / (geometry.q * geometry.epsilon)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(battery):
        xi = GaussPolySection.random(geometry, rng)
        for nu, word in ((1, (1, 0)), (2, (0, 1))):
            u_xi = act_left(xi, word)
            for mu in (1, 2):
                comm = nabla(u_xi, mu) - act_left(nabla(xi, mu), word)
                expect = u_xi * (f if mu == nu else 0.0)
                worst = max(worst, section_residual(comm, expect, scale=nabla(u_xi, mu)))
    return worst
