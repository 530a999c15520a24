"""Truncated Fourier model of the smooth noncommutative torus.

An element is stored as a dense square table of coefficients ``a[m, n]`` of
the monomials ``U1**m U2**n`` with ``|m|, |n| <= M`` (``M`` = ``half_width``),
together with the deformation parameter ``theta``.  Monomials multiply by

    (U1^m U2^n)(U1^m' U2^n') = exp(2 pi i theta n m') U1^(m+m') U2^(n+n').

Products are re-truncated to the window of the larger operand and the
discarded l1 mass is reported, so truncation error is observable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import fft as sfft

from .conformal import ConformalStructure
from .errors import ConvergenceError, InvertibilityError, ParameterError

FORMAT = "twisted-series/1"
THETA_TOL = 1e-12
DEFAULT_TAIL_BUDGET = 1e-10
# auto windows for spectral estimates: factor x effective support, capped
WINDOW_FACTOR = 4
MAX_AUTO_WINDOW = 64
# mass allowed to be dropped when shrinking an element to its effective support
TRIM_MASS = 1e-15

_SPARSE_NNZ = 48


@dataclass(frozen=True)
class TailReport:
    """l1 mass of coefficients dropped by a truncation."""

    discarded_mass: float
    max_index_touched: tuple[int, int]

    def __post_init__(self) -> None:
        if not self.discarded_mass >= 0.0:
            raise ParameterError("discarded mass must be >= 0")


@dataclass(frozen=True, eq=False)
class TwistedSeries:
    """Finite Fourier series ``sum a[m, n] U1^m U2^n`` in A_theta.

    ``coeffs`` has shape ``(2M+1, 2M+1)`` and is indexed ``[m + M, n + M]``.
    ``tail`` accumulates an l1 bound on the error introduced by all
    truncations that produced this value.
    """

    theta: float
    coeffs: np.ndarray
    tail: float = field(default=0.0)

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 != 1:
            raise ParameterError(f"coefficient table must be square with odd side, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ParameterError("coefficients must be finite")
        theta = float(self.theta)
        if not math.isfinite(theta):
            raise ParameterError("theta must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "tail", float(self.tail))

    # -- constructors -----------------------------------------------------
    @classmethod
    def zeros(cls, theta: float, half_width: int) -> TwistedSeries:
        n = 2 * int(half_width) + 1
        return cls(theta, np.zeros((n, n), dtype=np.complex128))

    @classmethod
    def scalar(cls, theta: float, value: complex, half_width: int = 0) -> TwistedSeries:
        n = 2 * int(half_width) + 1
        c = np.zeros((n, n), dtype=np.complex128)
        c[half_width, half_width] = value
        return cls(theta, c)

    @classmethod
    def identity(cls, theta: float, half_width: int = 0) -> TwistedSeries:
        return cls.scalar(theta, 1.0, half_width)

    @classmethod
    def monomial(cls, theta: float, m: int, n: int, half_width: int | None = None,
                 coeff: complex = 1.0) -> TwistedSeries:
        M = max(abs(m), abs(n)) if half_width is None else int(half_width)
        if max(abs(m), abs(n)) > M:
            raise ParameterError(f"monomial ({m},{n}) outside window {M}")
        c = np.zeros((2 * M + 1, 2 * M + 1), dtype=np.complex128)
        c[m + M, n + M] = coeff
        return cls(theta, c)

    @classmethod
    def from_dict(cls, theta: float, terms: dict[tuple[int, int], complex],
                  half_width: int | None = None) -> TwistedSeries:
        M = max((max(abs(m), abs(n)) for m, n in terms), default=0)
        if half_width is not None:
            if half_width < M:
                raise ParameterError("terms fall outside the requested window")
            M = half_width
        c = np.zeros((2 * M + 1, 2 * M + 1), dtype=np.complex128)
        for (m, n), v in terms.items():
            c[m + M, n + M] += v
        return cls(theta, c)

    @classmethod
    def random(cls, theta: float, half_width: int, rng: np.random.Generator,
               scale: float = 1.0, decay: float = 0.0, hermitian: bool = False) -> TwistedSeries:
        """Gaussian random coefficients, optionally damped by ``exp(-decay*(m^2+n^2))``."""
        N = 2 * half_width + 1
        c = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        if decay:
            k = np.arange(-half_width, half_width + 1)
            c *= np.exp(-decay * (k[:, None] ** 2 + k[None, :] ** 2))
        a = cls(theta, scale * c)
        if hermitian:
            a = (a + adjoint(a)) * 0.5
        return a

    # -- basic accessors --------------------------------------------------
    @property
    def half_width(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    def __getitem__(self, idx: tuple[int, int]) -> complex:
        m, n = idx
        M = self.half_width
        if abs(m) > M or abs(n) > M:
            return 0j
        return complex(self.coeffs[m + M, n + M])

    def l1(self) -> float:
        """Certified upper bound on the C*-norm: sum of |coefficients|."""
        return float(np.abs(self.coeffs).sum())

    def l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def padded(self, half_width: int) -> TwistedSeries:
        M = self.half_width
        if half_width < M:
            raise ParameterError("padding cannot shrink a series; use truncated()")
        if half_width == M:
            return self
        d = half_width - M
        return TwistedSeries(self.theta, np.pad(self.coeffs, d), self.tail)

    def truncated(self, half_width: int) -> tuple[TwistedSeries, TailReport]:
        M = self.half_width
        if half_width >= M:
            return self.padded(half_width), TailReport(0.0, self.support_extent())
        d = M - half_width
        inner = self.coeffs[d:-d, d:-d]
        # sum the dropped frame directly; a difference of totals would cancel
        a = np.abs(self.coeffs)
        lost = float(a[:d].sum() + a[-d:].sum() + a[d:-d, :d].sum() + a[d:-d, -d:].sum())
        return TwistedSeries(self.theta, inner, self.tail + lost), TailReport(lost, self.support_extent())

    def support_extent(self) -> tuple[int, int]:
        nz = np.argwhere(self.coeffs != 0)
        if nz.size == 0:
            return (0, 0)
        M = self.half_width
        return (int(np.abs(nz[:, 0] - M).max()), int(np.abs(nz[:, 1] - M).max()))

    def effective_half_width(self, mass: float = TRIM_MASS) -> int:
        """Smallest window whose complement carries l1 mass <= ``mass``."""
        a = np.abs(self.coeffs)
        M = self.half_width
        # ring[k]: mass on the square frame max(|m|, |n|) = k
        k = np.arange(-M, M + 1)
        radius = np.maximum(np.abs(k)[:, None], np.abs(k)[None, :])
        ring = np.bincount(radius.ravel(), weights=a.ravel(), minlength=M + 1)
        outside = np.concatenate([np.cumsum(ring[::-1])[::-1][1:], [0.0]])
        return int(np.argmax(outside <= mass))

    def trimmed(self, mass: float = TRIM_MASS) -> tuple[TwistedSeries, float]:
        """Shrink to the effective support; returns the series and the dropped mass."""
        R = self.effective_half_width(mass)
        t, rep = self.truncated(R)
        return t, rep.discarded_mass

    def is_scalar(self) -> bool:
        M = self.half_width
        mask = np.ones(self.coeffs.shape, bool)
        mask[M, M] = False
        return not np.any(self.coeffs[mask])

    def with_theta(self, theta: float) -> TwistedSeries:
        return TwistedSeries(theta, self.coeffs, self.tail)

    # -- arithmetic -------------------------------------------------------
    def _align(self, other: TwistedSeries) -> tuple[np.ndarray, np.ndarray]:
        check_theta(self, other)
        M = max(self.half_width, other.half_width)
        return self.padded(M).coeffs, other.padded(M).coeffs

    def __add__(self, other: TwistedSeries | complex) -> TwistedSeries:
        if not isinstance(other, TwistedSeries):
            return self + TwistedSeries.scalar(self.theta, complex(other))
        a, b = self._align(other)
        return TwistedSeries(self.theta, a + b, self.tail + other.tail)

    __radd__ = __add__

    def __sub__(self, other: TwistedSeries | complex) -> TwistedSeries:
        if not isinstance(other, TwistedSeries):
            return self - TwistedSeries.scalar(self.theta, complex(other))
        a, b = self._align(other)
        return TwistedSeries(self.theta, a - b, self.tail + other.tail)

    def __rsub__(self, other: complex) -> TwistedSeries:
        return TwistedSeries.scalar(self.theta, complex(other)) - self

    def __neg__(self) -> TwistedSeries:
        return TwistedSeries(self.theta, -self.coeffs, self.tail)

    def __mul__(self, s: complex) -> TwistedSeries:
        if isinstance(s, TwistedSeries):
            raise TypeError("use @ or multiply() for the algebra product")
        return TwistedSeries(self.theta, self.coeffs * s, self.tail * abs(s))

    __rmul__ = __mul__

    def __matmul__(self, other: TwistedSeries) -> TwistedSeries:
        return multiply(self, other)[0]

    @property
    def H(self) -> TwistedSeries:
        return adjoint(self)

    def __repr__(self) -> str:
        return (f"TwistedSeries(theta={self.theta!r}, half_width={self.half_width}, "
                f"l1={self.l1():.3e}, tail={self.tail:.1e})")

    # -- serialization ----------------------------------------------------
    def to_json_dict(self) -> dict[str, Any]:
        M = self.half_width
        idx = np.argwhere(self.coeffs != 0)
        rows = []
        for i, j in sorted(map(tuple, idx)):
            v = self.coeffs[i, j]
            rows.append([int(i - M), int(j - M), float(v.real), float(v.imag)])
        return {"format": FORMAT, "theta": self.theta, "half_width": M, "coeffs": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d: dict[str, Any]) -> TwistedSeries:
        if not isinstance(d, dict):
            raise ParameterError("a twisted series must be a JSON object")
        if d.get("format") != FORMAT:
            raise ParameterError(f"unsupported format {d.get('format')!r}")
        try:
            M = int(d["half_width"])
            theta = float(d["theta"])
            rows = d["coeffs"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"malformed twisted series: {exc}") from exc
        if M < 0:
            raise ParameterError("half_width must be >= 0")
        c = np.zeros((2 * M + 1, 2 * M + 1), dtype=np.complex128)
        for row in rows:
            try:
                m, n, re, im = row
            except (TypeError, ValueError) as exc:
                raise ParameterError(f"malformed coefficient row {row!r}") from exc
            if abs(int(m)) > M or abs(int(n)) > M:
                raise ParameterError(f"coefficient ({m},{n}) outside declared window {M}")
            c[int(m) + M, int(n) + M] = complex(float(re), float(im))
        return cls(theta, c)

    @classmethod
    def from_json(cls, text: str) -> TwistedSeries:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"invalid JSON: {exc}") from exc
        return cls.from_json_dict(d)


# ---------------------------------------------------------------------------
# phases and products


def check_theta(a: TwistedSeries, b: TwistedSeries) -> None:
    if abs(a.theta - b.theta) > THETA_TOL:
        raise ParameterError(f"theta mismatch: {a.theta!r} vs {b.theta!r}")


def theta_frac(theta: float) -> float:
    return theta - math.floor(theta)


def twist_phase(theta: float, k: np.ndarray | int) -> np.ndarray:
    """``exp(2 pi i theta k)`` for integer ``k``; depends on theta mod 1 only."""
    t = theta_frac(theta)
    return np.exp(2j * np.pi * np.mod(t * np.asarray(k, dtype=np.float64), 1.0))


def _product_direct(a: np.ndarray, b: np.ndarray, theta: float) -> np.ndarray:
    Na, Nb = a.shape[0], b.shape[0]
    Ma, Mb = (Na - 1) // 2, (Nb - 1) // 2
    Nc = Na + Nb - 1
    out = np.zeros((Nc, Nc), dtype=np.complex128)
    if np.count_nonzero(a) <= np.count_nonzero(b):
        m2 = np.arange(-Mb, Mb + 1)
        for i, j in np.argwhere(a != 0):
            n1 = j - Ma
            out[i:i + Nb, j:j + Nb] += a[i, j] * (b * twist_phase(theta, n1 * m2)[:, None])
    else:
        n1 = np.arange(-Ma, Ma + 1)
        for i, j in np.argwhere(b != 0):
            m2 = i - Mb
            out[i:i + Na, j:j + Na] += b[i, j] * (a * twist_phase(theta, n1 * m2)[None, :])
    return out


def _product_fft(a: np.ndarray, b: np.ndarray, theta: float) -> np.ndarray:
    # the n-index convolves plainly; the twist couples n1 with m2, so loop over m2
    Na, Nb = a.shape[0], b.shape[0]
    Ma, Mb = (Na - 1) // 2, (Nb - 1) // 2
    Nc = Na + Nb - 1
    L = sfft.next_fast_len(Nc)
    B = sfft.fft(b, L, axis=1)
    n1 = np.arange(-Ma, Ma + 1)
    m2 = np.arange(-Mb, Mb + 1)
    mod = twist_phase(theta, np.outer(m2, n1))  # (Nb, Na)
    acc = np.zeros((Nc, L), dtype=np.complex128)
    for i2 in range(Nb):
        if not B[i2].any():
            continue
        A = sfft.fft(a * mod[i2][None, :], L, axis=1)
        acc[i2:i2 + Na] += A * B[i2][None, :]
    return sfft.ifft(acc, axis=1)[:, :Nc]


def product_full(a: np.ndarray, b: np.ndarray, theta: float) -> np.ndarray:
    """Untruncated twisted convolution of two coefficient tables."""
    if min(np.count_nonzero(a), np.count_nonzero(b)) <= _SPARSE_NNZ:
        return _product_direct(a, b, theta)
    return _product_fft(a, b, theta)


def multiply(a: TwistedSeries, b: TwistedSeries,
             window: int | None = None) -> tuple[TwistedSeries, TailReport]:
    """Twisted product ``a b`` re-truncated to ``window``.

    ``window`` defaults to the larger operand window; pass
    ``a.half_width + b.half_width`` for an exact product.
    """
    check_theta(a, b)
    full = TwistedSeries(a.theta, product_full(a.coeffs, b.coeffs, a.theta))
    if window is None:
        window = max(a.half_width, b.half_width)
    res, rep = full.truncated(window)
    tail = rep.discarded_mass + a.l1() * b.tail + b.l1() * a.tail + a.tail * b.tail
    return TwistedSeries(a.theta, res.coeffs, tail), rep


def exact_product(a: TwistedSeries, b: TwistedSeries) -> TwistedSeries:
    return multiply(a, b, a.half_width + b.half_width)[0]


def adjoint(a: TwistedSeries) -> TwistedSeries:
    """``(U1^m U2^n)^* = exp(2 pi i theta m n) U1^-m U2^-n``."""
    M = a.half_width
    k = np.arange(-M, M + 1)
    c = np.conj(a.coeffs[::-1, ::-1]) * twist_phase(a.theta, np.outer(k, k))
    return TwistedSeries(a.theta, c, a.tail)


def trace(a: TwistedSeries) -> complex:
    """Normalized trace: the (0, 0) coefficient."""
    return a[0, 0]


def trace_product(a: TwistedSeries, b: TwistedSeries) -> complex:
    """``trace(a b)`` without forming the product."""
    check_theta(a, b)
    M = min(a.half_width, b.half_width)
    A = a.padded(max(M, a.half_width)).coeffs
    B = b.padded(max(M, b.half_width)).coeffs
    da, db = a.half_width - M, b.half_width - M
    A = A[da:A.shape[0] - da, da:A.shape[1] - da]
    B = B[db:B.shape[0] - db, db:B.shape[1] - db]
    k = np.arange(-M, M + 1)
    ph = twist_phase(a.theta, -np.outer(k, k))
    return complex(np.sum(A * B[::-1, ::-1] * ph))


# ---------------------------------------------------------------------------
# derivations


def _multiplier(a: TwistedSeries, fm: complex, fn: complex) -> np.ndarray:
    M = a.half_width
    k = np.arange(-M, M + 1, dtype=np.float64)
    return fm * k[:, None] + fn * k[None, :]


def derive(a: TwistedSeries, mu: int) -> TwistedSeries:
    """Canonical derivation: multiplies ``a[m, n]`` by ``2 pi i m`` (mu=1) or ``2 pi i n``."""
    if mu not in (1, 2):
        raise ParameterError("mu must be 1 or 2")
    f = _multiplier(a, 1.0, 0.0) if mu == 1 else _multiplier(a, 0.0, 1.0)
    return TwistedSeries(a.theta, a.coeffs * (2j * np.pi) * f)


def holo_derive(a: TwistedSeries, cs: ConformalStructure, conjugated: bool = False) -> TwistedSeries:
    c1, c2 = cs.coeffs(conjugated)
    return TwistedSeries(a.theta, a.coeffs * (2j * np.pi) * _multiplier(a, c1, c2))


def laplacian_symbol(M: int, cs: ConformalStructure) -> np.ndarray:
    k = np.arange(-M, M + 1, dtype=np.float64)
    m, n = k[:, None], k[None, :]
    gi = cs.inverse_metric
    return -4.0 * np.pi**2 * (gi[0, 0] * m * m + 2.0 * gi[0, 1] * m * n + gi[1, 1] * n * n)


def laplacian(a: TwistedSeries, cs: ConformalStructure) -> TwistedSeries:
    """``g^{mu nu} d_mu d_nu``; diagonal on monomials."""
    return TwistedSeries(a.theta, a.coeffs * laplacian_symbol(a.half_width, cs))


# ---------------------------------------------------------------------------
# spectral estimates in the truncated left-regular representation
#
# Fourier transforming the U2 index of l2(Z^2) splits left multiplication into
# fibers pi_y(a) on l2(Z): U1 shifts j -> j+1, U2 multiplies by
# exp(2 pi i (y + theta j)).  The window truncates the U1 index j; the U2
# index is handled exactly, fiber by fiber, on a fixed grid of y.

FIBERS = 8


def fiber_matrix(a: TwistedSeries, window: int, y: float, full_codomain: bool = True) -> np.ndarray:
    """Matrix of ``pi_y(a)`` on ``|j| <= window`` (rows: codomain indices)."""
    Ma, W = a.half_width, int(window)
    jin = np.arange(-W, W + 1)
    n = np.arange(-Ma, Ma + 1)
    # entry at row j'+m, column j' is sum_n a[m, n] exp(2 pi i n (y + theta j'))
    t = theta_frac(a.theta)
    x = np.mod(y + t * jin[:, None] * 1.0, 1.0) * n[None, :]  # (Nin, Nn)
    ph = np.exp(2j * np.pi * np.mod(x, 1.0))
    band = a.coeffs @ ph.T  # (Nm, Nin)
    Wout = W + Ma if full_codomain else W
    mat = np.zeros((2 * Wout + 1, 2 * W + 1), dtype=np.complex128)
    cols = np.arange(2 * W + 1)
    for i, m in enumerate(range(-Ma, Ma + 1)):
        rows = cols + m + (Wout - W)
        ok = (rows >= 0) & (rows < mat.shape[0])
        mat[rows[ok], cols[ok]] = band[i, ok]
    return mat


def _fiber_grid(k: int = FIBERS) -> np.ndarray:
    return (np.arange(k) + 0.5) / k


def _auto_window(a: TwistedSeries) -> int:
    # callers pass an already trimmed series
    R = a.half_width
    return max(R, min(WINDOW_FACTOR * max(R, 1), MAX_AUTO_WINDOW))


def norm_estimate(a: TwistedSeries, window: int | None = None) -> float:
    """Largest singular value of left multiplication by ``a`` on the window.

    The domain is spanned by monomials whose U1 degree is at most ``window``;
    the codomain is unrestricted.  Nondecreasing in ``window`` and bounded by
    ``a.l1()``.  An estimate of the operator norm, not a certified bound.
    ``window=None`` picks ``4 x`` the effective support (capped).
    """
    if window is None:
        a, dropped = a.trimmed()
        return norm_estimate(a, _auto_window(a)) + dropped
    if window < a.half_width:
        raise ParameterError(f"window {window} smaller than half width {a.half_width}")
    if not a.coeffs.any():
        return 0.0
    if a.is_scalar():
        return abs(a[0, 0])
    return max(float(np.linalg.norm(fiber_matrix(a, window, y), 2)) for y in _fiber_grid())


def spectral_bounds(a: TwistedSeries, window: int | None = None) -> tuple[float, float]:
    """Extreme eigenvalues of the compressions of the hermitian part of ``a``."""
    h = (a + adjoint(a)) * 0.5
    dropped = 0.0
    if window is None:
        h, dropped = h.trimmed()
        window = _auto_window(h)
    elif window < h.half_width:
        raise ParameterError(f"window {window} smaller than half width {h.half_width}")
    if h.is_scalar():
        v = h[0, 0].real
        return v - dropped, v + dropped
    lo, hi = math.inf, -math.inf
    for y in _fiber_grid():
        mat = fiber_matrix(h, window, y, full_codomain=False)
        ev = np.linalg.eigvalsh((mat + mat.conj().T) * 0.5)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
    return float(lo) - dropped, float(hi) + dropped


# ---------------------------------------------------------------------------
# functional calculus iterations


def hermitian_part(a: TwistedSeries) -> TwistedSeries:
    return (a + adjoint(a)) * 0.5


def purify(a: TwistedSeries, max_iters: int = 60, tol: float = 1e-12,
           window: int | None = None) -> TwistedSeries:
    """Retract a near-projection onto a projection with ``x <- 3x^2 - 2x^3``.

    The residual is the l1 norm of ``x^2 - x`` (an upper bound on the operator
    norm).  Raises :class:`ConvergenceError` when the spectrum is not safely
    inside ``(-1/2, 3/2)`` or the budget runs out.
    """
    x = hermitian_part(a)
    res = (x @ x - x).l1()
    if res <= tol:
        return x
    if res >= 0.25:
        lo, hi = spectral_bounds(x, window)
        if not (-0.5 < lo and hi < 1.5):
            raise ConvergenceError(
                f"spectrum estimate [{lo:.4g}, {hi:.4g}] not inside (-1/2, 3/2)",
                residual=res, bounds=(lo, hi))
    for _ in range(max_iters):
        x2 = x @ x
        res = (x2 - x).l1()
        if res <= tol:
            return x
        if not math.isfinite(res) or res > 1e6:
            break
        x = hermitian_part(3.0 * x2 - 2.0 * (x2 @ x))
    res = (x @ x - x).l1()
    if res <= tol:
        return x
    raise ConvergenceError(f"purification stalled at residual {res:.3e}", residual=res)


def invert_newton_schulz(a: TwistedSeries, max_iters: int = 200, tol: float = 1e-12,
                         window: int | None = None, check: bool = True) -> TwistedSeries:
    """Inverse of a positive element by ``x <- x (2 - a x)``.

    Seeded with ``a^* / |a|_1^2``.  A nonpositive spectral estimate raises
    :class:`InvertibilityError`; the residual is ``|a x - 1|_1``.
    """
    if check:
        lo, hi = spectral_bounds(a, window)
        if lo <= 0.0:
            raise InvertibilityError(
                f"element not positive: spectral estimate [{lo:.4g}, {hi:.4g}]", bounds=(lo, hi))
    one = TwistedSeries.identity(a.theta, a.half_width)
    x = adjoint(a) * (1.0 / a.l1() ** 2)
    res = math.inf
    for _ in range(max_iters):
        r = a @ x
        res = (r - one).l1()
        if res <= tol:
            return x
        if not math.isfinite(res) or res > 1e6:
            raise InvertibilityError(f"Newton-Schulz diverged (residual {res:.3e})", residual=res)
        x = x @ (2.0 * one - r)
    raise ConvergenceError(f"Newton-Schulz budget exhausted at residual {res:.3e}", residual=res)
