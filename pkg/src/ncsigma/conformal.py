"""Constant conformal structures on the two-torus."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class ConformalStructure:
    """Metric data attached to a modulus ``tau`` in the upper half plane.

    ``metric`` is ``[[1, Re tau], [Re tau, |tau|^2]]`` and ``sqrt_det`` equals
    ``Im tau``.  ``holo_coeffs`` are the coefficients of ``(d1, d2)`` in the
    holomorphic derivation, ``antiholo_coeffs`` those of its conjugate; the two
    add up to ``(1, 0)``.
    """

    tau: complex
    metric: np.ndarray = field(init=False, repr=False, compare=False)
    inverse_metric: np.ndarray = field(init=False, repr=False, compare=False)
    sqrt_det: float = field(init=False, repr=False, compare=False)
    holo_coeffs: tuple[complex, complex] = field(init=False, repr=False, compare=False)
    antiholo_coeffs: tuple[complex, complex] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        tau = complex(self.tau)
        if not np.isfinite(tau.real) or not np.isfinite(tau.imag) or tau.imag <= 0:
            raise ParameterError(f"need Im tau > 0, got tau={tau!r}")
        x, y = tau.real, tau.imag
        g = np.array([[1.0, x], [x, abs(tau) ** 2]])
        ginv = np.array([[abs(tau) ** 2, -x], [-x, 1.0]]) / y**2
        g.setflags(write=False)
        ginv.setflags(write=False)
        d = tau - tau.conjugate()
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "metric", g)
        object.__setattr__(self, "inverse_metric", ginv)
        object.__setattr__(self, "sqrt_det", y)
        object.__setattr__(self, "holo_coeffs", (-tau.conjugate() / d, 1.0 / d))
        object.__setattr__(self, "antiholo_coeffs", (tau / d, -1.0 / d))

    def coeffs(self, conjugated: bool) -> tuple[complex, complex]:
        return self.antiholo_coeffs if conjugated else self.holo_coeffs
