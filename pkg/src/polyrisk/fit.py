"""Optimal polynomial loss coefficients.

The cubic loss is fitted either to the whole regularized risk (pairwise
binormal margin statistics, O(m^2)) or directly to the 0-1 loss under a
single Gaussian margin prior. The sixth-order loss uses closed forms in the
gamma function with the sixth-order coefficient ``omega`` as a hyperparameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gamma as gamma_fn

from .dataset import Dataset
from .losses import ZERO_ONE, PolyLossCoeffs, margins, loss_eval

SQRT_2PI = math.sqrt(2.0 * math.pi)

SIGMA_RULES = ("gram", "mean-square")


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class MarginPriorStats:
    sigma: np.ndarray
    lambda2: float
    row_norm: np.ndarray
    sigma_rule: str = "gram"

    def rho(self, d: Dataset, i: int, j: int) -> float:
        """Correlation of margins i and j under the Gaussian weight prior."""
        if self.row_norm[i] == 0 or self.row_norm[j] == 0:
            return 0.0
        dot = d.X[i].multiply(d.X[j]).sum()
        return float(d.y[i] * d.y[j] * dot / (self.row_norm[i] * self.row_norm[j]))


def margin_prior_stats(d: Dataset, lambda2: float, sigma_rule: str = "gram") -> MarginPriorStats:
    """Per-example margin standard deviations induced by w ~ N(0, I / lambda2).

    ``sigma_rule="gram"`` uses the diagonal of (1/lambda2) X X^T, which is the
    covariance the pairwise statistics are derived from. ``"mean-square"``
    uses sigma_i^2 = (1/n) sum_j (x_ij / lambda2)^2 instead, for comparison.
    """
    if not lambda2 > 0:
        raise FitError("lambda2 must be positive")
    sq = np.asarray(d.X.multiply(d.X).sum(axis=1)).ravel()
    if sigma_rule == "gram":
        var = sq / lambda2
    elif sigma_rule == "mean-square":
        var = sq / (d.n * lambda2**2)
    else:
        raise FitError(f"unknown sigma rule {sigma_rule!r}")
    return MarginPriorStats(np.sqrt(var), float(lambda2), np.sqrt(sq), sigma_rule)


@dataclass(frozen=True)
class TStats:
    """Pair sums of the closed-form integral coefficients."""

    t0: float
    t1: float
    t2: float
    t3: float
    t4: float

    def __add__(self, other: "TStats") -> "TStats":
        return TStats(*(a + b for a, b in zip(self.as_array(), other.as_array())))

    def scaled(self, factor: float) -> "TStats":
        return TStats(*(factor * a for a in self.as_array()))

    def as_array(self) -> np.ndarray:
        return np.array([self.t0, self.t1, self.t2, self.t3, self.t4])

    def objective(self, alpha1: float, alpha3: float) -> float:
        return (
            self.t0 * alpha1
            + self.t1 * alpha3
            + self.t2 * alpha1 * alpha3
            + self.t3 * alpha1**2
            + self.t4 * alpha3**2
        )

    def solve(self) -> tuple[float, float]:
        t0, t1, t2, t3, t4 = self.as_array()
        den = t2 * t2 - 4.0 * t3 * t4
        if not np.isfinite(den) or abs(den) < 1e-12 * max(t2 * t2, 4.0 * abs(t3 * t4)) or den == 0:
            raise FitError("degenerate cubic fit: t2^2 - 4 t3 t4 vanishes")
        return (2 * t0 * t4 - t1 * t2) / den, (2 * t1 * t3 - t0 * t2) / den


def pair_terms(si, sj, rho) -> np.ndarray:
    """The five t-contributions of the pairs (i, j); arrays broadcast."""
    return np.stack(
        [
            rho * (si + sj) / SQRT_2PI,
            rho * (3.0 - rho**2) * (si**3 + sj**3) / SQRT_2PI,
            3.0 * rho * si * sj * (si**2 + sj**2),
            rho * si * sj,
            3.0 * rho * (3.0 + 2.0 * rho**2) * si**3 * sj**3,
        ]
    )


def _block_rho(d: Dataset, stats: MarginPriorStats, rows: np.ndarray, cols: np.ndarray | None = None):
    Xa = d.X[rows]
    Xb = d.X if cols is None else d.X[cols]
    G = np.asarray((Xa @ Xb.T).todense())
    na = stats.row_norm[rows]
    nb = stats.row_norm if cols is None else stats.row_norm[cols]
    denom = np.outer(na, nb)
    ya = d.y[rows].astype(np.float64)
    yb = (d.y if cols is None else d.y[cols]).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0, G / np.where(denom > 0, denom, 1.0), 0.0)
    rho *= np.outer(ya, yb)
    # rounding can push |rho| a hair past 1 for parallel rows
    return np.clip(rho, -1.0, 1.0)


def accumulate_t(
    stats: MarginPriorStats,
    d: Dataset,
    max_pairs: Optional[int] = None,
    seed: int = 0,
    block_elems: int = 4_000_000,
) -> TStats:
    """Sum the t-coefficients over all m^2 ordered pairs (diagonal included).

    With ``max_pairs`` set and m^2 larger than it, an unbiased estimate from
    ``max_pairs`` uniformly sampled ordered pairs is returned instead.
    """
    m = d.m
    sigma = stats.sigma
    if max_pairs is not None and m * m > max_pairs:
        rng = np.random.default_rng(seed)
        total = np.zeros(5)
        done = 0
        chunk = max(1, block_elems // 8)
        while done < max_pairs:
            k = min(chunk, max_pairs - done)
            i = rng.integers(0, m, size=k)
            j = rng.integers(0, m, size=k)
            dots = np.asarray(d.X[i].multiply(d.X[j]).sum(axis=1)).ravel()
            den = stats.row_norm[i] * stats.row_norm[j]
            with np.errstate(invalid="ignore", divide="ignore"):
                rho = np.where(den > 0, dots / np.where(den > 0, den, 1.0), 0.0)
            rho = np.clip(rho * d.y[i] * d.y[j], -1.0, 1.0)
            total += pair_terms(sigma[i], sigma[j], rho).sum(axis=1)
            done += k
        return TStats(*(total * (m * m / max_pairs)))

    total = np.zeros(5)
    step = max(1, block_elems // max(m, 1))
    for a in range(0, m, step):
        rows = np.arange(a, min(a + step, m))
        rho = _block_rho(d, stats, rows)
        total += pair_terms(sigma[rows][:, None], sigma[None, :], rho).sum(axis=(1, 2))
    return TStats(*total)


def fit_cubic_risk(
    d: Dataset,
    lambda2: float,
    sigma_rule: str = "gram",
    max_pairs: Optional[int] = None,
    seed: int = 0,
) -> PolyLossCoeffs:
    """Cubic coefficients minimizing the prior-averaged squared risk mismatch."""
    stats = margin_prior_stats(d, lambda2, sigma_rule)
    t = accumulate_t(stats, d, max_pairs=max_pairs, seed=seed)
    a1, a3 = t.solve()
    return PolyLossCoeffs(3, (a1, a3), lambda2=float(lambda2), meta={"t": t.as_array().tolist()})


def direct_sigma(d: Dataset, lambda2: float) -> float:
    if not lambda2 > 0:
        raise FitError("lambda2 must be positive")
    trace = float(d.X.multiply(d.X).sum())
    if not trace > 0:
        raise FitError("all-zero feature matrix: margin prior is degenerate")
    return math.sqrt(trace / (lambda2 * d.m))


def cubic_direct_coeffs(sigma: float) -> tuple[float, float]:
    return -3.0 / (2.0 * SQRT_2PI * sigma), 1.0 / (6.0 * SQRT_2PI * sigma**3)


def fit_cubic_direct(d: Dataset, lambda2: float) -> PolyLossCoeffs:
    """Cubic coefficients fitted to the 0-1 loss under one Gaussian margin prior."""
    sigma = direct_sigma(d, lambda2)
    return PolyLossCoeffs(3, cubic_direct_coeffs(sigma), lambda2=float(lambda2), meta={"sigma": sigma})


def sixth_betas(omega: float) -> PolyLossCoeffs:
    """Closed-form sixth-order coefficients for a fixed leading coefficient omega.

    Each beta_k scales as omega**(k/6); beta0 does not depend on omega.
    """
    if not omega > 0:
        raise FitError("omega must be positive")
    pi = math.pi
    sp = math.sqrt(pi)
    p32 = pi**1.5
    g116, g136 = gamma_fn(11 / 6), gamma_fn(13 / 6)
    g43, g53 = gamma_fn(4 / 3), gamma_fn(5 / 3)
    c23, c13 = 2 ** (2 / 3), 2 ** (1 / 3)
    den_a = 1296 * (343 * g116**3 + 750 * g136**3) - 300125 * p32
    den_b = -222950 * p32 / 9 + 98784 * g116**3 + 43200 * g136**3

    b0 = 1 / 3 + 343 * (125 * p32 - 864 * g116**3) / den_a
    # sign flipped relative to the commonly quoted form, which has beta1 > 0
    b1 = 35 * (245 * (1 + 3 * c23) * pi * g43 + 36 * (49 * g116 * (sp - 3 * g53 * g116) - 60 * g136**2)) / (
        3 * den_b
    )
    b2 = 2940 * sp * (25 * sp * g136 - 42 * g116**2) / (-den_a)
    b3 = (
        3675
        * sp
        * (7 * sp + 63 * (c13 - 1) * g53 * g116 + 18 * (c23 - 3) * g43 * g136)
        / (111475 * p32 - 1296 * (343 * g116**3 + 150 * g136**3))
    )
    b4 = 2100 * sp * (49 * sp * g116 - 60 * g136**2) / (den_a / 3)
    b5 = (
        7
        * (-7056 * g116**2 + 1225 * (3 * c13 - 1) * pi * g53 + 600 * g136 * (7 * sp - 18 * g43 * g136))
        / den_b
    )
    unit = np.array([b1, b2, b3, b4, b5])
    betas = unit * omega ** (np.arange(1, 6) / 6.0)
    return PolyLossCoeffs(6, (omega, *betas), beta0=b0)


def sixth_margin_prior(gamma, omega: float) -> np.ndarray:
    """Density proportional to exp(-omega gamma^6), normalized."""
    g = np.asarray(gamma, dtype=np.float64)
    return omega ** (1 / 6) / (2.0 * gamma_fn(7 / 6)) * np.exp(-omega * g**6)


def _minmax(v: np.ndarray) -> np.ndarray:
    span = v.max() - v.min()
    if not span > 0:
        raise FitError("risk is constant over the sampled states; normalization undefined")
    return (v - v.min()) / span


def normalized_risks(d: Dataset, c: PolyLossCoeffs, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-max normalized 0-1 and polynomial risks of each state (rows of ``states``)."""
    W = np.asarray(states, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] < 2:
        raise FitError("need at least two weight states")
    g = margins(d, W.T)
    r01 = loss_eval(ZERO_ONE, None, g).mean(axis=0)
    rp = loss_eval(c.kind, c, g).mean(axis=0)
    return _minmax(r01), _minmax(rp)


def embedding_error(
    d: Dataset, c: PolyLossCoeffs, states: np.ndarray, lowest: Optional[int] = None
) -> float:
    """Standard deviation of the gap between normalized 0-1 and polynomial risks.

    With ``lowest`` set, the gap is measured only on that many states of
    lowest polynomial risk (normalization still uses every state).
    """
    a, b = normalized_risks(d, c, states)
    diff = a - b
    if lowest is not None:
        diff = diff[np.argsort(b, kind="stable")[:lowest]]
    return float(np.std(diff))
