"""Numerical oracles for the loss fits.

Nothing here reuses the closed forms in ``fit``. Pair expectations come from
2-D Gauss quadrature over the binormal margin density, the direct and
sixth-order fits from adaptive 1-D integration split at the sign
discontinuity, and coefficients from generic numerical minimization or a
least-squares solve. They exist to check the closed forms and are far slower.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize
from scipy.special import gamma as gamma_fn

from .dataset import Dataset
from .fit import margin_prior_stats

_U_MAX = 12.0  # standard deviations; the Gaussian tail beyond is below 1e-30


@lru_cache(maxsize=None)
def _hermite(nodes: int):
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    return x, w / math.sqrt(2.0 * math.pi)


@lru_cache(maxsize=None)
def _half_line(nodes: int):
    # Gauss-Legendre on [0, U_MAX] with the standard normal density folded in
    x, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * _U_MAX * (x + 1.0)
    return u, 0.5 * _U_MAX * w * np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def _signed_moment(power: int, s_a, s_b, rho, nodes: int) -> np.ndarray:
    """E[gamma_a**power * sign(gamma_b)] for centred binormal pairs (arrays broadcast).

    Coordinates put the discontinuity on an axis: gamma_b = s_b*u and
    gamma_a = s_a*(rho*u + sqrt(1 - rho^2)*v), with u, v independent.
    """
    u, wu = _half_line(nodes)
    v, wv = _hermite(nodes)
    s_a, rho = np.asarray(s_a, float)[:, None, None], np.asarray(rho, float)[:, None, None]
    c = np.sqrt(np.maximum(0.0, 1.0 - rho * rho))
    total = 0.0
    for sign in (1.0, -1.0):
        ga = s_a * (rho * sign * u[None, :, None] + c * v[None, None, :])
        total = total + sign * np.einsum("puv,u,v->p", ga**power, wu, wv)
    return total


def _plain_moment(pi: int, pj: int, s_i, s_j, rho, nodes: int) -> np.ndarray:
    """E[gamma_i**pi * gamma_j**pj] by tensor Gauss-Hermite (exact for polynomials)."""
    z, w = _hermite(nodes)
    s_i, s_j = np.asarray(s_i, float)[:, None, None], np.asarray(s_j, float)[:, None, None]
    rho = np.asarray(rho, float)[:, None, None]
    c = np.sqrt(np.maximum(0.0, 1.0 - rho * rho))
    gj = s_j * z[None, :, None]
    gi = s_i * (rho * z[None, :, None] + c * z[None, None, :])
    return np.einsum("puv,u,v->p", gi**pi * gj**pj, w, w)


def pair_t_quadrature(s_i, s_j, rho, nodes: int = 64) -> np.ndarray:
    """The five pair coefficients of the embedding integral by quadrature, shape (5, pairs)."""
    s_i, s_j, rho = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in (s_i, s_j, rho))
    t0 = 0.5 * (_signed_moment(1, s_i, s_j, rho, nodes) + _signed_moment(1, s_j, s_i, rho, nodes))
    t1 = 0.5 * (_signed_moment(3, s_i, s_j, rho, nodes) + _signed_moment(3, s_j, s_i, rho, nodes))
    t2 = _plain_moment(3, 1, s_i, s_j, rho, nodes) + _plain_moment(1, 3, s_i, s_j, rho, nodes)
    t3 = _plain_moment(1, 1, s_i, s_j, rho, nodes)
    t4 = _plain_moment(3, 3, s_i, s_j, rho, nodes)
    return np.stack([t0, t1, t2, t3, t4])


def t_quadrature(d: Dataset, lambda2: float, nodes: int = 64, chunk: int = 512) -> np.ndarray:
    """Sum of the pair coefficients over all ordered pairs, by quadrature."""
    stats = margin_prior_stats(d, lambda2)
    X = d.dense()
    norms = stats.row_norm
    G = X @ X.T
    den = np.outer(norms, norms)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(den > 0, G / np.where(den > 0, den, 1.0), 0.0) * np.outer(d.y, d.y)
    rho = np.clip(rho, -1.0, 1.0).ravel()
    si = np.repeat(stats.sigma, d.m)
    sj = np.tile(stats.sigma, d.m)
    total = np.zeros(5)
    for lo in range(0, len(rho), chunk):
        sl = slice(lo, lo + chunk)
        total += pair_t_quadrature(si[sl], sj[sl], rho[sl], nodes).sum(axis=1)
    return total


def _argmin(objective, scale: np.ndarray) -> np.ndarray:
    """Minimize in rescaled coordinates, then polish with a few Newton steps."""
    f = lambda z: objective(z * scale)
    res = optimize.minimize(f, np.zeros(len(scale)), method="BFGS", options={"gtol": 1e-13, "maxiter": 10_000})
    z = res.x
    # the objectives are quadratic, so a finite-difference Newton polish is exact up to rounding
    h = 1e-3
    for _ in range(3):
        k = len(z)
        g = np.zeros(k)
        H = np.zeros((k, k))
        for a in range(k):
            ea = np.eye(k)[a] * h
            g[a] = (f(z + ea) - f(z - ea)) / (2 * h)
            for b in range(k):
                eb = np.eye(k)[b] * h
                H[a, b] = (f(z + ea + eb) - f(z + ea - eb) - f(z - ea + eb) + f(z - ea - eb)) / (4 * h * h)
        z = z - np.linalg.solve(H, g)
    return z * scale


def cubic_risk_oracle(d: Dataset, lambda2: float, nodes: int = 64) -> tuple[float, float]:
    """(alpha1, alpha3) minimizing the quadrature-evaluated summed pair integral."""
    t = t_quadrature(d, lambda2, nodes)
    s = float(np.mean(margin_prior_stats(d, lambda2).sigma))

    def objective(a):
        a1, a3 = a
        return t[0] * a1 + t[1] * a3 + t[2] * a1 * a3 + t[3] * a1 * a1 + t[4] * a3 * a3

    # normalize so the problem is O(1) in both coordinates
    scale = np.array([1.0 / s, 1.0 / s**3])
    norm = abs(t[3]) / s**2 + 1.0
    a = _argmin(lambda v: objective(v) / norm, scale)
    return float(a[0]), float(a[1])


def _gauss_split(f, lo: float, hi: float) -> float:
    """Adaptive integral of f over [lo, hi], split at zero."""
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=400)
    with warnings.catch_warnings():
        # quad reports roundoff once it reaches machine precision; that is the point
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return _quad_halves(f, lo, hi, opts)


def _quad_halves(f, lo, hi, opts) -> float:
    left = integrate.quad(f, lo, 0.0, **opts)[0] if lo < 0 else 0.0
    right = integrate.quad(f, 0.0, hi, **opts)[0] if hi > 0 else 0.0
    return left + right


def zero_one(g):
    return 0.5 - 0.5 * np.sign(g)


def cubic_direct_oracle(sigma: float) -> tuple[float, float]:
    """Argmin over (alpha1, alpha3) of the integral of N(0, sigma^2) * (L01 - L3)^2."""
    dens = lambda g: math.exp(-0.5 * (g / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    R = _U_MAX * sigma

    def objective(a):
        a1, a3 = a
        return _gauss_split(lambda g: dens(g) * (zero_one(g) - a1 * g - a3 * g**3) ** 2, -R, R)

    a = _argmin(objective, np.array([1.0 / sigma, 1.0 / sigma**3]))
    return float(a[0]), float(a[1])


def sixth_oracle(omega: float) -> np.ndarray:
    """Least-squares (beta0..beta5) for the sixth-order loss with leading coefficient omega.

    Minimizes the integral of P(g) * (L01(g) - omega*g^6 - sum_k beta_k g^k)^2 with
    P(g) proportional to exp(-omega g^6), all integrals by adaptive quadrature.
    """
    norm = omega ** (1 / 6) / (2.0 * gamma_fn(7 / 6))
    dens = lambda g: norm * math.exp(-omega * g**6)
    R = (60.0 / omega) ** (1 / 6)  # the density has fallen below 1e-26 there
    G = np.empty((6, 6))
    b = np.empty(6)
    for k in range(6):
        for l in range(k, 6):
            G[k, l] = G[l, k] = _gauss_split(lambda g: dens(g) * g ** (k + l), -R, R)
        b[k] = _gauss_split(lambda g: dens(g) * g**k * (zero_one(g) - omega * g**6), -R, R)
    return np.linalg.solve(G, b)
