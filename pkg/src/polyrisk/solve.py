"""Minimize PUBO / QUBO objectives over bit strings.

Two solvers share one result type. ``exhaustive_energies`` walks all 2^N
states in Gray-code order so every step is a single flip, and
``anneal`` runs restarted Metropolis single-flip annealing that keeps the K
lowest distinct states seen anywhere in the run.

Besides compiled polynomials, both accept a ``MarginObjective``: regularized
risk of any loss evaluated through the margins directly. That is how the 0-1
and convex losses are enumerated, and how the sixth-order objective is
annealed without compiling it first.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numba import njit

from .dataset import Dataset
from .losses import (
    LOGISTIC,
    POLYNOMIAL_KINDS,
    SMOOTH_HINGE,
    SQUARE,
    ZERO_ONE,
    PolyLossCoeffs,
    regularized_objective,
)
from .pubo import FixedPointEncoding, PuboTensor
from .quadratize import QuboProblem

DEFAULT_ENUM_CAP = 26
STATES_FORMAT = "polyrisk-states/1"

_KIND_CODE = {ZERO_ONE: 0, LOGISTIC: 2, SQUARE: 3, SMOOTH_HINGE: 4}


class SolveError(ValueError):
    pass


# ---------------------------------------------------------------- problems


@dataclass(frozen=True)
class MarginObjective:
    """Regularized empirical risk of fixed-point weights, evaluated through margins."""

    data: Dataset
    kind: str
    coeffs: Optional[PolyLossCoeffs]
    lambda2: float
    encoding: FixedPointEncoding

    def __post_init__(self):
        if self.encoding.n != self.data.n:
            raise SolveError(f"encoding has {self.encoding.n} weights, data has {self.data.n} features")
        if self.kind in POLYNOMIAL_KINDS and self.coeffs is None:
            raise SolveError(f"{self.kind} objective needs coefficients")

    @property
    def num_vars(self) -> int:
        return self.encoding.num_bits

    def energy(self, q) -> np.ndarray | float:
        w = self.encoding.decode(q)
        return regularized_objective(self.kind, self.coeffs, self.data, w.T, self.lambda2)


Problem = Union[PuboTensor, QuboProblem, MarginObjective]


def _as_pubo(problem) -> PuboTensor | MarginObjective:
    if isinstance(problem, QuboProblem):
        return problem.to_pubo()
    if isinstance(problem, (PuboTensor, MarginObjective)):
        return problem
    raise SolveError(f"cannot solve a {type(problem).__name__}")


def evaluate(problem: Problem, states) -> np.ndarray | float:
    return _as_pubo(problem).energy(states)


@dataclass(frozen=True)
class _PuboArrays:
    term_vars: np.ndarray
    term_deg: np.ndarray
    coef: np.ndarray
    const: float
    var_ptr: np.ndarray
    var_terms: np.ndarray


def _pubo_arrays(p: PuboTensor) -> _PuboArrays:
    keys = [k for k in p.terms if k]
    kmax = max((len(k) for k in keys), default=1)
    T = len(keys)
    term_vars = np.full((T, kmax), -1, dtype=np.int64)
    term_deg = np.empty(T, dtype=np.int64)
    coef = np.empty(T, dtype=np.float64)
    for t, k in enumerate(keys):
        term_vars[t, : len(k)] = k
        term_deg[t] = len(k)
        coef[t] = p.terms[k]
    flat_t = np.repeat(np.arange(T), term_deg)
    flat_v = term_vars[term_vars >= 0]
    order = np.argsort(flat_v, kind="stable")
    var_terms = flat_t[order].astype(np.int64)
    var_ptr = np.zeros(p.num_vars + 1, dtype=np.int64)
    np.add.at(var_ptr, flat_v + 1, 1)
    return _PuboArrays(term_vars, term_deg, coef, p.constant, np.cumsum(var_ptr), var_terms)


@dataclass(frozen=True)
class _MarginArrays:
    col_ptr: np.ndarray
    row_idx: np.ndarray
    vals: np.ndarray
    m: int
    d: int
    bit_values: np.ndarray
    lambda2: float
    kind: int
    poly: np.ndarray


def _margin_arrays(obj: MarginObjective) -> _MarginArrays:
    A = obj.data.signed_rows().tocsc()
    A.sort_indices()
    if obj.kind in POLYNOMIAL_KINDS:
        code, poly = 1, np.asarray(obj.coeffs.power_coeffs(), dtype=np.float64)
    elif obj.kind in _KIND_CODE:
        code, poly = _KIND_CODE[obj.kind], np.zeros(1)
    else:
        raise SolveError(f"unknown loss kind {obj.kind!r}")
    return _MarginArrays(
        A.indptr.astype(np.int64),
        A.indices.astype(np.int64),
        A.data.astype(np.float64),
        obj.data.m,
        obj.encoding.d,
        obj.encoding.bit_values(),
        float(obj.lambda2),
        code,
        poly,
    )


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _pubo_delta(v, x, cnt, term_deg, coef, var_ptr, var_terms):
    xv = x[v]
    s = 0.0
    for p in range(var_ptr[v], var_ptr[v + 1]):
        t = var_terms[p]
        if cnt[t] - xv == term_deg[t] - 1:
            s += coef[t]
    return s if xv == 0 else -s


@njit(cache=True)
def _pubo_flip(v, x, cnt, var_ptr, var_terms):
    step = 1 if x[v] == 0 else -1
    for p in range(var_ptr[v], var_ptr[v + 1]):
        cnt[var_terms[p]] += step
    x[v] = 1 - x[v]


@njit(cache=True)
def _pubo_init(x, term_vars, term_deg, coef, const):
    T = term_deg.shape[0]
    cnt = np.zeros(T, dtype=np.int64)
    E = const
    for t in range(T):
        c = 0
        for j in range(term_deg[t]):
            c += x[term_vars[t, j]]
        cnt[t] = c
        if c == term_deg[t]:
            E += coef[t]
    return cnt, E


@njit(cache=True)
def _gray_energies(N, term_vars, term_deg, coef, const, var_ptr, var_terms):
    out = np.empty(1 << N)
    x = np.zeros(N, dtype=np.uint8)
    cnt, E = _pubo_init(x, term_vars, term_deg, coef, const)
    comp = 0.0
    out[0] = E
    g = 0
    for i in range(1, 1 << N):
        v = 0
        while ((i >> v) & 1) == 0:
            v += 1
        dE = _pubo_delta(v, x, cnt, term_deg, coef, var_ptr, var_terms)
        _pubo_flip(v, x, cnt, var_ptr, var_terms)
        y = dE - comp
        t = E + y
        comp = (t - E) - y
        E = t
        g ^= 1 << v
        out[g] = E
    return out


@njit(cache=True)
def _loss1(kind, poly, g):
    if kind == 0:
        if g > 0.0:
            return 0.0
        return 1.0 if g < 0.0 else 0.5
    if kind == 1:
        acc = 0.0
        for k in range(poly.shape[0] - 1, -1, -1):
            acc = acc * g + poly[k]
        return acc
    if kind == 2:
        if g > 0.0:
            return math.log1p(math.exp(-g))
        return -g + math.log1p(math.exp(g))
    if kind == 3:
        return (1.0 - g) ** 2
    if g >= 1.0:
        return 0.0
    if g > 0.0:
        return 0.5 * (1.0 - g) ** 2
    return 0.5 - g


@njit(cache=True)
def _margin_delta(v, x, gam, w, col_ptr, row_idx, vals, m, d, bit_values, lambda2, kind, poly):
    f = v // d
    step = bit_values[v % d] * (1.0 - 2.0 * x[v])
    s = 0.0
    for p in range(col_ptr[f], col_ptr[f + 1]):
        i = row_idx[p]
        g = gam[i]
        s += _loss1(kind, poly, g + step * vals[p]) - _loss1(kind, poly, g)
    wf = w[f]
    return s / m + 0.5 * lambda2 * ((wf + step) ** 2 - wf * wf)


@njit(cache=True)
def _margin_flip(v, x, gam, w, col_ptr, row_idx, vals, d, bit_values):
    f = v // d
    step = bit_values[v % d] * (1.0 - 2.0 * x[v])
    for p in range(col_ptr[f], col_ptr[f + 1]):
        gam[row_idx[p]] += step * vals[p]
    w[f] += step
    x[v] = 1 - x[v]


@njit(cache=True)
def _margin_init(x, col_ptr, row_idx, vals, m, n, d, bit_values, lambda2, kind, poly):
    w = np.zeros(n)
    for f in range(n):
        for b in range(d):
            w[f] += bit_values[b] * x[f * d + b]
    gam = np.zeros(m)
    for f in range(n):
        for p in range(col_ptr[f], col_ptr[f + 1]):
            gam[row_idx[p]] += w[f] * vals[p]
    E = 0.0
    for i in range(m):
        E += _loss1(kind, poly, gam[i])
    E = E / m
    for f in range(n):
        E += 0.5 * lambda2 * w[f] * w[f]
    return w, gam, E


@njit(cache=True)
def _risk_sum(kind, poly, g):
    # one tight loop per kind; the generic _loss1 dispatch is ~5x slower here
    acc = 0.0
    m = g.shape[0]
    if kind == 0:
        for i in range(m):
            if g[i] < 0.0:
                acc += 1.0
            elif g[i] == 0.0:
                acc += 0.5
    elif kind == 1:
        top = poly.shape[0] - 1
        for i in range(m):
            v = poly[top]
            for k in range(top - 1, -1, -1):
                v = v * g[i] + poly[k]
            acc += v
    elif kind == 2:
        for i in range(m):
            x = g[i]
            if x > 0.0:
                acc += math.log1p(math.exp(-x))
            else:
                acc += -x + math.log1p(math.exp(x))
    elif kind == 3:
        for i in range(m):
            acc += (1.0 - g[i]) ** 2
    else:
        for i in range(m):
            x = g[i]
            if x <= 0.0:
                acc += 0.5 - x
            elif x < 1.0:
                acc += 0.5 * (1.0 - x) ** 2
    return acc


@njit(cache=True)
def _enumerate_margins(A, d, bit_values, lambda2, kinds, polys):
    # Odometer over per-weight digits, feature 0 fastest. Margins are partial
    # sums taken in the fixed order f = n-1 .. 0, so every state's margin is
    # the same function of w no matter how it was reached (zero stays zero).
    m, n = A.shape
    base = 1 << d
    wv = np.zeros(base)
    for digit in range(base):
        for b in range(d):
            if (digit >> b) & 1:
                wv[digit] += bit_values[b]
    P = np.zeros((n + 1, m))
    R = np.zeros(n + 1)
    digits = np.zeros(n, dtype=np.int64)
    out = np.empty((kinds.shape[0], 1 << (n * d)))
    top = n - 1
    for leaf in range(1 << (n * d)):
        for k in range(top, -1, -1):
            wk = wv[digits[k]]
            for i in range(m):
                P[k, i] = P[k + 1, i] + wk * A[i, k]
            R[k] = R[k + 1] + wk * wk
        for q in range(kinds.shape[0]):
            out[q, leaf] = _risk_sum(kinds[q], polys[q], P[0]) / m + 0.5 * lambda2 * R[0]
        top = 0
        while top < n:
            digits[top] += 1
            if digits[top] < base:
                break
            digits[top] = 0
            top += 1
        if top == n:
            top = n - 1
    return out


@njit(cache=True)
def _offer(E, h, x, top_e, top_h, top_s, top_seq, state):
    # state = [count, worst slot, next insertion number]
    K = top_e.shape[0]
    count = state[0]
    if count == K and E >= top_e[state[1]]:
        return
    N = x.shape[0]
    for k in range(count):
        if top_h[k] == h:
            same = True
            for j in range(N):
                if top_s[k, j] != x[j]:
                    same = False
                    break
            if same:
                return
    slot = count if count < K else state[1]
    top_e[slot] = E
    top_h[slot] = h
    top_seq[slot] = state[2]
    for j in range(N):
        top_s[slot, j] = x[j]
    state[2] += 1
    if count < K:
        state[0] = count + 1
    worst = 0
    for k in range(1, state[0]):
        if top_e[k] > top_e[worst] or (top_e[k] == top_e[worst] and top_seq[k] > top_seq[worst]):
            worst = k
    state[1] = worst


@njit(cache=True)
def _anneal_pubo_run(
    x, uniforms, betas, zob, term_vars, term_deg, coef, const, var_ptr, var_terms,
    top_e, top_h, top_s, top_seq, state,
):
    N = x.shape[0]
    cnt, E = _pubo_init(x, term_vars, term_deg, coef, const)
    h = np.uint64(0)
    for j in range(N):
        if x[j]:
            h ^= zob[j]
    comp = 0.0
    best = E
    _offer(E, h, x, top_e, top_h, top_s, top_seq, state)
    for s in range(betas.shape[0]):
        beta = betas[s]
        for v in range(N):
            dE = _pubo_delta(v, x, cnt, term_deg, coef, var_ptr, var_terms)
            if dE <= 0.0 or uniforms[s, v] < math.exp(-beta * dE):
                _pubo_flip(v, x, cnt, var_ptr, var_terms)
                y = dE - comp
                t = E + y
                comp = (t - E) - y
                E = t
                h ^= zob[v]
                if E < best:
                    best = E
                _offer(E, h, x, top_e, top_h, top_s, top_seq, state)
    return best


@njit(cache=True)
def _anneal_margin_run(
    x, uniforms, betas, zob, col_ptr, row_idx, vals, m, n, d, bit_values, lambda2, kind, poly,
    top_e, top_h, top_s, top_seq, state,
):
    N = x.shape[0]
    w, gam, E = _margin_init(x, col_ptr, row_idx, vals, m, n, d, bit_values, lambda2, kind, poly)
    h = np.uint64(0)
    for j in range(N):
        if x[j]:
            h ^= zob[j]
    comp = 0.0
    best = E
    _offer(E, h, x, top_e, top_h, top_s, top_seq, state)
    for s in range(betas.shape[0]):
        beta = betas[s]
        for v in range(N):
            dE = _margin_delta(v, x, gam, w, col_ptr, row_idx, vals, m, d, bit_values, lambda2, kind, poly)
            if dE <= 0.0 or uniforms[s, v] < math.exp(-beta * dE):
                _margin_flip(v, x, gam, w, col_ptr, row_idx, vals, d, bit_values)
                y = dE - comp
                t = E + y
                comp = (t - E) - y
                E = t
                h ^= zob[v]
                if E < best:
                    best = E
                _offer(E, h, x, top_e, top_h, top_s, top_seq, state)
    return best


# ---------------------------------------------------------------- results


@dataclass
class SolveResult:
    states: np.ndarray
    energies: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.energies)

    @property
    def best_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def best_energy(self) -> float:
        return float(self.energies[0])

    def to_json(self, include_timing: bool = False) -> dict:
        meta = {k: v for k, v in self.metadata.items() if include_timing or k != "wall_time"}
        return {
            "format": STATES_FORMAT,
            "num_vars": int(self.states.shape[1]),
            "states": [
                {"bits": bits_to_hex(s), "energy": float(e)} for s, e in zip(self.states, self.energies)
            ],
            "metadata": meta,
        }

    def dump(self, path, include_timing: bool = False) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(include_timing), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, obj: dict) -> "SolveResult":
        if obj.get("format") != STATES_FORMAT:
            raise SolveError(f"unsupported states format {obj.get('format')!r}")
        N = int(obj["num_vars"])
        states = np.array([hex_to_bits(s["bits"], N) for s in obj["states"]], dtype=np.uint8).reshape(-1, N)
        energies = np.array([s["energy"] for s in obj["states"]], dtype=np.float64)
        return cls(states, energies, dict(obj.get("metadata", {})))

    @classmethod
    def load(cls, path) -> "SolveResult":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def bits_to_hex(bits) -> str:
    """Bit j of the returned integer is variable j; zero-padded to ceil(N/4) digits."""
    b = np.asarray(bits, dtype=np.uint8)
    value = int("".join("1" if v else "0" for v in b[::-1]) or "0", 2)
    return format(value, f"0{max(1, (len(b) + 3) // 4)}x")


def hex_to_bits(text: str, num_vars: int) -> np.ndarray:
    value = int(text, 16)
    if value >> num_vars:
        raise SolveError(f"state {text} has bits beyond {num_vars} variables")
    return np.array([(value >> j) & 1 for j in range(num_vars)], dtype=np.uint8)


def index_to_bits(idx, num_vars: int) -> np.ndarray:
    """Bit vectors of state integers (bit j is variable j)."""
    idx = np.asarray(idx, dtype=np.int64)
    return ((idx[..., None] >> np.arange(num_vars)) & 1).astype(np.uint8)


def _finish(problem, states: np.ndarray, metadata: dict, order_hint: np.ndarray) -> SolveResult:
    # report freshly evaluated energies, never incremental ones
    if len(states) == 0:
        return SolveResult(states, np.empty(0), metadata)
    energies = np.atleast_1d(np.asarray(evaluate(problem, states), dtype=np.float64))
    order = np.lexsort((order_hint, energies))
    return SolveResult(states[order], energies[order], metadata)


# ---------------------------------------------------------------- exhaustive


def exhaustive_energies(problem: Problem, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """Energy of every state, indexed by the state integer."""
    p = _as_pubo(problem)
    N = p.num_vars
    if N > cap:
        raise SolveError(f"{N} variables exceed the enumeration cap of {cap}")
    if isinstance(p, PuboTensor):
        a = _pubo_arrays(p)
        return _gray_energies(N, a.term_vars, a.term_deg, a.coef, a.const, a.var_ptr, a.var_terms)
    return enumerate_margin_objectives([p], cap=cap)[0]


def enumerate_margin_objectives(objs, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """Energies of every state for several objectives sharing data, encoding and lambda2.

    Returns an array of shape (len(objs), 2^N); the margins are computed once.
    """
    first = objs[0]
    for o in objs[1:]:
        if o.data is not first.data or o.encoding != first.encoding or o.lambda2 != first.lambda2:
            raise SolveError("objectives must share data, encoding and lambda2")
    if first.num_vars > cap:
        raise SolveError(f"{first.num_vars} variables exceed the enumeration cap of {cap}")
    arrs = [_margin_arrays(o) for o in objs]
    kinds = np.array([a.kind for a in arrs], dtype=np.int64)
    width = max(len(a.poly) for a in arrs)
    polys = np.zeros((len(arrs), width))
    for q, a in enumerate(arrs):
        polys[q, : len(a.poly)] = a.poly
    A = np.ascontiguousarray(first.data.signed_rows().toarray())
    return _enumerate_margins(A, first.encoding.d, first.encoding.bit_values(), float(first.lambda2), kinds, polys)


def exhaustive_topk(problem: Problem, K: int = 50, cap: int = DEFAULT_ENUM_CAP) -> SolveResult:
    if K < 1:
        raise SolveError("K must be at least 1")
    t0 = time.perf_counter()
    E = exhaustive_energies(problem, cap=cap)
    N = int(round(math.log2(len(E))))
    K = min(K, len(E))
    thr = np.partition(E, K - 1)[K - 1]
    cand = np.flatnonzero(E <= thr)
    cand = cand[np.lexsort((cand, E[cand]))][:K]
    meta = {"method": "exact", "num_vars": N, "states_visited": len(E), "wall_time": time.perf_counter() - t0}
    return _finish(problem, index_to_bits(cand, N), meta, cand)


def rank_of(energies: np.ndarray, targets) -> int:
    """1-based competition rank of the best target state in the energy spectrum.

    Rank is one plus the number of states strictly below the best target, so a
    loss whose minimizers include a target ranks it first even with ties.
    """
    t = np.asarray(targets, dtype=np.int64)
    best = energies[t].min()
    return int(np.count_nonzero(energies < best)) + 1


# ---------------------------------------------------------------- annealing


@dataclass(frozen=True)
class AnnealSchedule:
    beta_initial: float = 0.1
    beta_final: float = 10.0
    sweeps: int = 1000
    restarts: int = 100
    seed: int = 0
    energy_scale: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.beta_initial <= self.beta_final):
            raise SolveError("need 0 < beta_initial <= beta_final")
        if self.sweeps < 1 or self.restarts < 1:
            raise SolveError("sweeps and restarts must be at least 1")
        if self.energy_scale is not None and not self.energy_scale > 0:
            raise SolveError("energy_scale must be positive")

    def betas(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.beta_final])
        return np.geomspace(self.beta_initial, self.beta_final, self.sweeps)


def energy_scale(problem: Problem, seed: int = 0, samples: int = 64) -> float:
    """Mean |dE| of single flips at random states; the unit the schedule's betas are in."""
    p = _as_pubo(problem)
    N = p.num_vars
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**31 - 1,)))
    x = rng.integers(0, 2, size=(samples, N), dtype=np.uint8)
    v = rng.integers(0, N, size=samples)
    y = x.copy()
    y[np.arange(samples), v] ^= 1
    dE = np.abs(np.asarray(p.energy(y)) - np.asarray(p.energy(x)))
    scale = float(dE.mean())
    return scale if scale > 0 and np.isfinite(scale) else 1.0


def _zobrist(N: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**31 - 2,)))
    return rng.integers(0, np.iinfo(np.uint64).max, size=N, dtype=np.uint64, endpoint=True)


def anneal(problem: Problem, schedule: AnnealSchedule = AnnealSchedule(), K: int = 50) -> SolveResult:
    """Restarted single-flip Metropolis annealing with a geometric beta schedule.

    Betas are divided by the problem's energy scale (``schedule.energy_scale``,
    or the mean single-flip |dE| at random states when unset), so the default
    0.1 -> 10 range means the same thing for risks of any magnitude.
    """
    if K < 1:
        raise SolveError("K must be at least 1")
    t0 = time.perf_counter()
    p = _as_pubo(problem)
    N = p.num_vars
    scale = schedule.energy_scale if schedule.energy_scale is not None else energy_scale(p, schedule.seed)
    betas = schedule.betas() / scale
    zob = _zobrist(N, schedule.seed)
    top_e = np.full(K, np.inf)
    top_h = np.zeros(K, dtype=np.uint64)
    top_s = np.zeros((K, N), dtype=np.uint8)
    top_seq = np.zeros(K, dtype=np.int64)
    state = np.zeros(3, dtype=np.int64)
    restart_best = np.empty(schedule.restarts)
    if isinstance(p, PuboTensor):
        a = _pubo_arrays(p)
    else:
        a = _margin_arrays(p)
    for r in range(schedule.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(schedule.seed, spawn_key=(r,)))
        x = rng.integers(0, 2, size=N, dtype=np.uint8)
        uniforms = rng.random((schedule.sweeps, N))
        if isinstance(p, PuboTensor):
            restart_best[r] = _anneal_pubo_run(
                x, uniforms, betas, zob, a.term_vars, a.term_deg, a.coef, a.const, a.var_ptr, a.var_terms,
                top_e, top_h, top_s, top_seq, state,
            )
        else:
            restart_best[r] = _anneal_margin_run(
                x, uniforms, betas, zob, a.col_ptr, a.row_idx, a.vals, a.m, p.encoding.n, a.d,
                a.bit_values, a.lambda2, a.kind, a.poly, top_e, top_h, top_s, top_seq, state,
            )
    count = int(state[0])
    meta = {
        "method": "sa",
        "num_vars": N,
        "seed": schedule.seed,
        "sweeps": schedule.sweeps,
        "restarts": schedule.restarts,
        "beta_initial": schedule.beta_initial,
        "beta_final": schedule.beta_final,
        "energy_scale": scale,
        "restart_best": restart_best.tolist(),
        "wall_time": time.perf_counter() - t0,
    }
    return _finish(problem, top_s[:count].copy(), meta, top_seq[:count])


def delta_energy(problem: Problem, state, flip_var: int) -> float:
    """E(state with flip_var flipped) - E(state), touching only the affected terms."""
    p = _as_pubo(problem)
    x = np.asarray(state, dtype=np.uint8)
    if x.shape != (p.num_vars,):
        raise SolveError(f"state length {x.shape} != ({p.num_vars},)")
    if not 0 <= flip_var < p.num_vars:
        raise SolveError(f"flip_var {flip_var} out of range")
    if isinstance(p, PuboTensor):
        sign = 1.0 if x[flip_var] == 0 else -1.0
        s = 0.0
        for key, c in p.terms.items():
            if flip_var in key and all(x[j] for j in key if j != flip_var):
                s += c
        return sign * s
    a = _margin_arrays(p)
    w, gam, _ = _margin_init(
        x, a.col_ptr, a.row_idx, a.vals, a.m, p.encoding.n, a.d, a.bit_values, a.lambda2, a.kind, a.poly
    )
    return float(
        _margin_delta(
            flip_var, x, gam, w, a.col_ptr, a.row_idx, a.vals, a.m, a.d, a.bit_values, a.lambda2, a.kind, a.poly
        )
    )
