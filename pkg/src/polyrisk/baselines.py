"""Full-precision convex baselines: logistic, square and smooth-hinge regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .losses import CONVEX_KINDS, loss_derivative, loss_eval


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConvexObjective:
    kind: str
    data: Dataset
    lambda2: float

    def __post_init__(self):
        if self.kind not in CONVEX_KINDS:
            raise ValueError(f"{self.kind!r} is not a convex baseline; choose from {sorted(CONVEX_KINDS)}")
        if self.lambda2 < 0:
            raise ValueError("lambda2 must be non-negative")

    def value(self, w: np.ndarray) -> float:
        g = self.data.signed_rows() @ w
        return float(loss_eval(self.kind, None, g).mean() + 0.5 * self.lambda2 * (w @ w))

    def gradient(self, w: np.ndarray) -> np.ndarray:
        A = self.data.signed_rows()
        g = A @ w
        return A.T @ loss_derivative(self.kind, None, g) / self.data.m + self.lambda2 * w


def train_convex_baseline(
    kind: str,
    d: Dataset,
    lambda2: float,
    tol: float = 1e-6,
    max_iter: int = 100_000,
    w0: np.ndarray | None = None,
) -> np.ndarray:
    """Minimize regularized convex risk to gradient norm below ``tol``.

    Barzilai-Borwein step proposals, accepted through Armijo backtracking on
    a non-monotone reference (max of the last 10 objective values), which keeps
    the long BB steps that make this fast on ill-conditioned problems.
    """
    f = ConvexObjective(kind, d, lambda2)
    w = np.zeros(d.n) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    val = f.value(w)
    grad = f.gradient(w)
    history = [val]
    step = 1.0
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            return w
        ref = max(history[-10:])
        t = step
        while True:
            w_new = w - t * grad
            val_new = f.value(w_new)
            if val_new <= ref - 1e-4 * t * gnorm**2:
                break
            t *= 0.5
            if t < 1e-20:
                raise ConvergenceError(
                    f"{kind}: line search failed at iteration {it} (objective {val:.6g}, |grad| {gnorm:.3g})"
                )
        grad_new = f.gradient(w_new)
        s, yv = w_new - w, grad_new - grad
        sy = float(s @ yv)
        step = float(s @ s) / sy if sy > 0 else 1.0
        w, val, grad = w_new, val_new, grad_new
        history.append(val)
    raise ConvergenceError(
        f"{kind}: no convergence after {max_iter} iterations "
        f"(objective {val:.6g}, |grad| {np.linalg.norm(grad):.3g}, tol {tol:g})"
    )
