"""Gaussian instanton projections and their moduli.

``psi(s, k) = A_k exp(i tau pi s^2 / eps + lam (conj(tau) - tau) s)`` solves
``nabla_bar psi = psi lam``; the projection is ``p = <psi g, psi>_theta`` with
``g`` the inverse of the Gram element ``<psi, psi>_alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .algebra import (TwistedSeries, adjoint, derive, holo_derive, invert_newton_schulz, multiply,
                      norm_estimate, purify, spectral_bounds)
from .conformal import ConformalStructure
from .errors import InvertibilityError, IntegrabilityError, ParameterError
from .module import (GaussPolySection, GaussTerm, ModuleGeometry, act_right, inner_alpha,
                     inner_theta)
from .sigma import ProjectionReport, hermiticity_residual, idempotency_residual, projection_report

DEFAULT_TOLERANCES: dict[str, float] = {
    "tail_budget": 1e-10,
    "ns_tol": 1e-12,
    "purify_tol": 1e-10,
    "purify_iters": 5,
    "trim": 1e-18,
    "snap": 1e-12,
}


def normalize_amplitudes(A: Sequence[complex]) -> np.ndarray:
    """Unit vector with its first nonzero entry real positive."""
    v = np.asarray(A, dtype=np.complex128).ravel()
    nrm = float(np.linalg.norm(v))
    if not nrm > 0.0 or not math.isfinite(nrm):
        raise ParameterError("amplitude vector must be nonzero and finite")
    first = v[np.flatnonzero(v)[0]]
    if abs(nrm - 1.0) <= 1e-15 and first.imag == 0.0 and first.real > 0.0:
        return v.copy()
    return v * (abs(first) / first) / nrm


def default_amplitudes(q: int) -> np.ndarray:
    """Chirp ``A_k = exp(i pi k^2 / q)``: equally spread under index cycling and phase modulation.

    It gives a better conditioned Gram element than a basis vector.
    """
    k = np.arange(q)
    return np.exp(1j * np.pi * np.mod(k * k, 2 * q) / q)


@dataclass(frozen=True, eq=False)
class InstantonConfig:
    geometry: ModuleGeometry
    tau: complex
    lam: complex = 0j
    amplitudes: Any = None
    window: int = 16
    tolerances: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        tau = complex(self.tau)
        if not tau.imag > 0.0:
            raise ParameterError(f"Im(tau) must be positive, got {tau!r}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "lam", complex(self.lam))
        A = self.amplitudes if self.amplitudes is not None else default_amplitudes(self.geometry.q)
        if len(A) != self.geometry.q:
            raise ParameterError(f"expected {self.geometry.q} amplitudes, got {len(A)}")
        object.__setattr__(self, "amplitudes", normalize_amplitudes(A))
        if self.window < 1:
            raise ParameterError("window must be positive")
        object.__setattr__(self, "tolerances", {**DEFAULT_TOLERANCES, **self.tolerances})

    @property
    def cs(self) -> ConformalStructure:
        return ConformalStructure(self.tau)

    def replace(self, **kw: Any) -> InstantonConfig:
        d = dict(geometry=self.geometry, tau=self.tau, lam=self.lam, amplitudes=self.amplitudes,
                 window=self.window, tolerances=self.tolerances)
        d.update(kw)
        return InstantonConfig(**d)


def gaussian_section(cfg: InstantonConfig) -> GaussPolySection:
    g, tau = cfg.geometry, cfg.tau
    al = 1j * tau * math.pi / g.epsilon
    if not al.real < 0.0:
        raise IntegrabilityError(
            f"Gaussian exponent i tau pi / eps = {al:.4g} does not decay (eps = {g.epsilon:.4g}); "
            "flip the orientation of (r, q, alpha) so that eps > 0")
    be = cfg.lam * (tau.conjugate() - tau)
    rows = tuple((GaussTerm([A], al, be),) if A != 0 else () for A in cfg.amplitudes)
    return GaussPolySection(g, rows)


def gram(psi: GaussPolySection, window: int = 16,
         tail_budget: float | None = 1e-10) -> TwistedSeries:
    return inner_alpha(psi, psi, window, tail_budget=tail_budget)


@dataclass(frozen=True)
class Extraction:
    """Diagnostics of the coefficient extraction, before and after purification."""

    gram_bounds: tuple[float, float]
    gram_tail: float
    projection_tail: float
    pre_idempotency: float
    pre_hermiticity: float
    post_idempotency: float
    post_hermiticity: float

    def to_dict(self) -> dict[str, Any]:
        return {"gram_lower": self.gram_bounds[0], "gram_upper": self.gram_bounds[1],
                "gram_tail": self.gram_tail, "projection_tail": self.projection_tail,
                "pre_idempotency": self.pre_idempotency, "pre_hermiticity": self.pre_hermiticity,
                "post_idempotency": self.post_idempotency, "post_hermiticity": self.post_hermiticity}


@dataclass(frozen=True, eq=False)
class InstantonBuild:
    config: InstantonConfig
    projection: TwistedSeries
    report: ProjectionReport
    extraction: Extraction


def build_instanton(cfg: InstantonConfig, gauge: TwistedSeries | None = None,
                    with_report: bool = True) -> InstantonBuild:
    """Full pipeline for ``psi . g`` (``g = gauge``, default 1).

    Uses ``<psi g G^-1, psi g>_theta = <psi (g G^-1 g^*), psi>_theta`` so the
    section handed to the theta-valued product has one term per lattice point.
    """
    tol = cfg.tolerances
    psi = gaussian_section(cfg)
    phi = psi if gauge is None else act_right(psi, gauge)
    G = gram(phi, cfg.window, tol["tail_budget"])
    bounds = spectral_bounds(G)
    if bounds[0] <= 0.0:
        raise InvertibilityError(f"Gram element not positive: spectral estimate {bounds}", bounds=bounds)
    Gi = invert_newton_schulz(G, tol=tol["ns_tol"], check=False)
    if gauge is not None:
        W = cfg.window
        Gi = multiply(multiply(gauge, Gi, W + gauge.half_width)[0], adjoint(gauge),
                      W + 2 * gauge.half_width)[0]
    Gi, _ = Gi.trimmed(tol["trim"] * Gi.l1())
    raw = inner_theta(act_right(psi, Gi), psi, cfg.window, tail_budget=tol["tail_budget"])
    pre_i, pre_h = idempotency_residual(raw), hermiticity_residual(raw)
    # purification cannot go below the truncation floor of the extraction
    ptol = max(tol["purify_tol"], 10.0 * raw.tail)
    p = purify(raw, max_iters=int(tol["purify_iters"]), tol=ptol)
    p = TwistedSeries(p.theta, p.coeffs, raw.tail)
    rep = projection_report(p, cfg.cs) if with_report else None
    ext = Extraction(bounds, G.tail, raw.tail, pre_i, pre_h,
                     rep.idempotency_residual if rep else idempotency_residual(p),
                     rep.hermiticity_residual if rep else hermiticity_residual(p))
    return InstantonBuild(cfg, p, rep, ext)


def build_projection(cfg: InstantonConfig) -> tuple[TwistedSeries, ProjectionReport]:
    b = build_instanton(cfg)
    return b.projection, b.report


# ---------------------------------------------------------------------------
# gauge action and moduli


def lattice_shifts(tau: complex) -> tuple[complex, complex]:
    """Shifts of ``lam`` under ``psi -> psi Z1`` and ``psi -> psi Z2``."""
    d = tau - tau.conjugate()
    return 2j * math.pi * tau / d, -2j * math.pi / d


def gauge_transform_lambda(lam: complex, g_word: tuple[int, int], tau: complex | InstantonConfig) -> complex:
    """``lam + (2 pi i tau/(tau - conj tau)) (m - n/tau)`` for ``g = Z1^m Z2^n``."""
    if isinstance(tau, InstantonConfig):
        tau = tau.tau
    tau = complex(tau)
    m, n = g_word
    return complex(lam) + 2j * math.pi * tau / (tau - tau.conjugate()) * (m - n / tau)


def gauge_transform_general(lam: TwistedSeries, g: TwistedSeries, cs: ConformalStructure,
                            g_inv: TwistedSeries | None = None) -> TwistedSeries:
    """``g^{-1} lam g + g^{-1} dbar(g)`` in the truncated alpha-algebra.

    ``g_inv`` defaults to ``(g^* g)^{-1} g^*`` by Newton-Schulz.
    """
    if g_inv is None:
        gs = adjoint(g)
        g_inv = multiply(invert_newton_schulz(multiply(gs, g)[0]), gs)[0]
    W = max(lam.half_width, g.half_width, g_inv.half_width)
    x = multiply(multiply(g_inv, lam, 2 * W)[0], g, 3 * W)[0]
    y = multiply(g_inv, holo_derive(g, cs, True), 2 * W)[0]
    return x.padded(3 * W) + y.padded(3 * W)


def gauge_amplitudes(A: Sequence[complex], g_word: tuple[int, int], geometry: ModuleGeometry) -> np.ndarray:
    """Amplitudes of ``psi . Z1^m Z2^n`` up to an overall constant."""
    m, n = g_word
    q = geometry.q
    A = np.asarray(A, dtype=np.complex128)
    k = np.arange(q)
    shifted = A[np.mod(k - m * geometry.r, q)]
    return shifted * np.exp(-2j * math.pi * np.mod(n * k / q, 1.0))


def gauge_config(cfg: InstantonConfig, g_word: tuple[int, int]) -> InstantonConfig:
    return cfg.replace(lam=gauge_transform_lambda(cfg.lam, g_word, cfg.tau),
                       amplitudes=gauge_amplitudes(cfg.amplitudes, g_word, cfg.geometry))


@dataclass(frozen=True, eq=False)
class ModuliPoint:
    lambda_class: complex
    amplitudes_class: np.ndarray
    word: tuple[int, int] = (0, 0)

    def same_as(self, other: ModuliPoint, tol: float = 1e-9) -> bool:
        return (abs(self.lambda_class - other.lambda_class) <= tol
                and bool(np.allclose(self.amplitudes_class, other.amplitudes_class, rtol=0, atol=tol)))


def moduli_reduce(lam: complex, A: Sequence[complex], cfg: InstantonConfig,
                  snap: float | None = None) -> ModuliPoint:
    """Representative of ``lam`` in the parallelogram ``{x w1 + y w2 : 0 <= x, y < 1}``.

    The amplitudes follow the same gauge transformation and are then
    normalized projectively.  ``word`` records the applied ``Z1^m Z2^n``.
    """
    snap = cfg.tolerances["snap"] if snap is None else snap
    w1, w2 = lattice_shifts(cfg.tau)
    det = (w1.conjugate() * w2).imag
    if abs(det) <= 1e-12 * abs(w1) * abs(w2):
        raise ParameterError("lattice generators are numerically collinear")
    lam = complex(lam)
    # lam = x w1 + y w2
    x = (lam.conjugate() * w2).imag / (w1.conjugate() * w2).imag
    y = (w1.conjugate() * lam).imag / (w1.conjugate() * w2).imag

    def fl(t: float) -> int:
        r = round(t)
        return int(r) if abs(t - r) <= snap else math.floor(t)
    m, n = -fl(x), -fl(y)
    if m == 0 and n == 0:
        return ModuliPoint(lam, normalize_amplitudes(A), (0, 0))
    lam2 = lam + m * w1 + n * w2
    A2 = gauge_amplitudes(A, (m, n), cfg.geometry)
    return ModuliPoint(lam2, normalize_amplitudes(A2), (m, n))


@dataclass
class ScanRow:
    index: int
    lam: complex
    amplitudes: np.ndarray
    point: ModuliPoint | None
    projection: TwistedSeries | None
    report: ProjectionReport | None
    status: str


@dataclass
class ScanResult:
    rows: list[ScanRow]
    equivalent_pairs: list[tuple[int, int, float]]
    distinct_pairs: list[tuple[int, int, float]]
    equivalence_tol: float

    @property
    def separation_floor(self) -> float | None:
        return min((d for _, _, d in self.distinct_pairs), default=None)

    @property
    def ok(self) -> bool:
        return (all(r.status == "ok" for r in self.rows)
                and all(d <= self.equivalence_tol for _, _, d in self.equivalent_pairs))


def moduli_scan(cfg: InstantonConfig, grid: Sequence[tuple],
                equivalence_tol: float = 1e-5, distances: bool = True) -> ScanResult:
    """Build every sample, then compare pairs.

    Grid entries are ``(lam, A)`` or ``(lam, A, geometry)``.  Pairs over the
    same geometry with the same moduli point are expected to coincide
    (distance at most ``equivalence_tol``); the smallest distance between
    distinct points is reported as the separation floor.  Rows whose Gram
    element is not invertible are kept with status ``"gram-noninvertible"``.
    """
    rows, geoms = [], []
    for i, entry in enumerate(grid):
        lam, A = entry[0], entry[1]
        geom = entry[2] if len(entry) > 2 and entry[2] is not None else cfg.geometry
        c = cfg.replace(lam=lam, amplitudes=A, geometry=geom)
        pt = moduli_reduce(lam, A, c)
        geoms.append(geom)
        try:
            b = build_instanton(c)
            rows.append(ScanRow(i, complex(lam), c.amplitudes, pt, b.projection, b.report, "ok"))
        except InvertibilityError:
            rows.append(ScanRow(i, complex(lam), c.amplitudes, pt, None, None, "gram-noninvertible"))
    eq, dist = [], []
    if distances:
        good = [r for r in rows if r.status == "ok"]
        for i, ra in enumerate(good):
            for rb in good[i + 1:]:
                if geoms[ra.index] != geoms[rb.index]:
                    continue
                d = norm_estimate(ra.projection - rb.projection)
                (eq if ra.point.same_as(rb.point) else dist).append((ra.index, rb.index, d))
    return ScanResult(rows, eq, dist, equivalence_tol)
