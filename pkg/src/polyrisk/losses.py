"""Margins, loss functions and (regularized) empirical risk."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import Dataset

ZERO_ONE = "zero-one"
CUBIC = "cubic"
SIXTH = "sixth"
LOGISTIC = "logistic"
SQUARE = "square"
SMOOTH_HINGE = "smooth-hinge"

POLYNOMIAL_KINDS = (CUBIC, SIXTH)
CONVEX_KINDS = (LOGISTIC, SQUARE, SMOOTH_HINGE)
LOSS_KINDS = (ZERO_ONE,) + POLYNOMIAL_KINDS + CONVEX_KINDS


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class PolyLossCoeffs:
    """Coefficients of a polynomial margin loss.

    For ``degree == 3`` ``coeffs`` is ``(alpha1, alpha3)``; the constant and
    quadratic terms are zero. For ``degree == 6`` it is
    ``(omega, beta1, ..., beta5)``. The fitted constant ``beta0`` is kept for
    reference only and never enters a training objective.
    """

    degree: int
    coeffs: tuple[float, ...]
    beta0: Optional[float] = None
    lambda2: Optional[float] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.degree == 3:
            if len(self.coeffs) != 2:
                raise LossError("cubic loss needs exactly (alpha1, alpha3)")
        elif self.degree == 6:
            if len(self.coeffs) != 6:
                raise LossError("sixth-order loss needs (omega, beta1..beta5)")
            if not self.coeffs[0] > 0:
                raise LossError("omega must be positive")
        else:
            raise LossError(f"unsupported loss degree {self.degree}")
        if not all(math.isfinite(c) for c in self.coeffs):
            raise LossError("non-finite loss coefficient")

    @property
    def omega(self) -> Optional[float]:
        return self.coeffs[0] if self.degree == 6 else None

    @property
    def kind(self) -> str:
        return CUBIC if self.degree == 3 else SIXTH

    def power_coeffs(self) -> np.ndarray:
        """Coefficient of gamma**j at index j (constant term is always 0)."""
        c = np.zeros(self.degree + 1)
        if self.degree == 3:
            c[1], c[3] = self.coeffs
        else:
            c[6] = self.coeffs[0]
            c[1:6] = self.coeffs[1:]
        return c

    def to_json(self) -> dict:
        out = {"degree": self.degree, "coeffs": list(self.coeffs), "lambda2": self.lambda2}
        if self.degree == 6:
            out["omega"] = self.coeffs[0]
            out["beta0"] = self.beta0
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PolyLossCoeffs":
        return cls(
            degree=int(obj["degree"]),
            coeffs=tuple(obj["coeffs"]),
            beta0=obj.get("beta0"),
            lambda2=obj.get("lambda2"),
        )

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PolyLossCoeffs":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def margins(d: Dataset, w: np.ndarray) -> np.ndarray:
    """gamma_i = y_i x_i^T w.

    ``w`` may be a single weight vector (n,) or a stack of states (n, s), in
    which case the result has shape (m, s).
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != d.n:
        raise LossError(f"weight length {w.shape[0]} != feature count {d.n}")
    z = d.X @ w
    if z.ndim == 1:
        return d.y * z
    return d.y[:, None] * z


def loss_eval(kind: str, c: Optional[PolyLossCoeffs], gamma) -> np.ndarray:
    g = np.asarray(gamma, dtype=np.float64)
    if kind == ZERO_ONE:
        return (1.0 - np.sign(g)) / 2.0
    if kind in POLYNOMIAL_KINDS:
        if c is None:
            raise LossError(f"{kind} loss requires coefficients")
        if c.kind != kind:
            raise LossError(f"{kind} loss given degree-{c.degree} coefficients")
        return np.polynomial.polynomial.polyval(g, c.power_coeffs())
    if kind == LOGISTIC:
        return np.logaddexp(0.0, -g)
    if kind == SQUARE:
        return (1.0 - g) ** 2
    if kind == SMOOTH_HINGE:
        return np.where(g >= 1.0, 0.0, np.where(g > 0.0, 0.5 * (1.0 - g) ** 2, 0.5 - g))
    raise LossError(f"unknown loss kind {kind!r}")


def loss_derivative(kind: str, c: Optional[PolyLossCoeffs], gamma) -> np.ndarray:
    """dL/dgamma for the differentiable kinds."""
    g = np.asarray(gamma, dtype=np.float64)
    if kind in POLYNOMIAL_KINDS:
        if c is None:
            raise LossError(f"{kind} loss requires coefficients")
        return np.polynomial.polynomial.polyval(g, np.polynomial.polynomial.polyder(c.power_coeffs()))
    if kind == LOGISTIC:
        return -0.5 * (1.0 - np.tanh(0.5 * g))  # -1/(1+e^g), overflow-free
    if kind == SQUARE:
        return -2.0 * (1.0 - g)
    if kind == SMOOTH_HINGE:
        return np.where(g >= 1.0, 0.0, np.where(g > 0.0, g - 1.0, -1.0))
    raise LossError(f"loss {kind!r} has no usable derivative")


def empirical_risk(kind: str, c: Optional[PolyLossCoeffs], d: Dataset, w) -> np.ndarray | float:
    if d.m == 0:
        raise LossError("empirical risk of an empty dataset")
    risk = loss_eval(kind, c, margins(d, w)).mean(axis=0)
    return float(risk) if np.ndim(risk) == 0 else risk


def regularized_objective(
    kind: str, c: Optional[PolyLossCoeffs], d: Dataset, w, lambda2: float
) -> np.ndarray | float:
    """Empirical risk plus (lambda2 / 2) * ||w||^2."""
    if lambda2 < 0:
        raise LossError("lambda2 must be non-negative")
    w = np.asarray(w, dtype=np.float64)
    return empirical_risk(kind, c, d, w) + 0.5 * lambda2 * np.sum(w * w, axis=0)


def zero_one_error(d: Dataset, w) -> np.ndarray | float:
    """Misclassification rate, counting zero-margin examples as errors."""
    g = margins(d, w)
    err = (g <= 0).mean(axis=0)
    return float(err) if np.ndim(err) == 0 else err
