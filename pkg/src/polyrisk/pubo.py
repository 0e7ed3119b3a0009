"""Compile polynomial regularized risk into a PUBO over fixed-point weight bits.

Each weight is encoded with ``d`` bits as
``w_f = zeta*q[f*d] - zeta * sum_{j>=1} 2**-j * q[f*d + j]``, so the map from
bits to weights is linear (``w = K q``). Expanding the data moment tensors
through ``K`` and collapsing repeated bits (``q**2 == q``) yields a sparse
multilinear polynomial whose value at every bit string equals the
regularized risk of the decoded weights.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from .dataset import Dataset
from .losses import PolyLossCoeffs

MAX_DEGREE = 6
DEFAULT_TERM_CAP = 10_000_000


class PuboError(ValueError):
    pass


class ResourceError(RuntimeError):
    """Compilation would exceed the configured monomial budget."""


# ---------------------------------------------------------------- encoding


@dataclass(frozen=True)
class FixedPointEncoding:
    n: int
    d: int
    zeta: float

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise PuboError("need n >= 1 and d >= 1")
        if not self.zeta > 0:
            raise PuboError("zeta must be positive")

    @property
    def num_bits(self) -> int:
        return self.n * self.d

    def bit_values(self) -> np.ndarray:
        """Weight contribution of each bit within one weight: (zeta, -zeta/2, ...)."""
        v = -self.zeta * 0.5 ** np.arange(self.d)
        v[0] = self.zeta
        return v

    def k_matrix(self) -> np.ndarray:
        return np.kron(np.eye(self.n), self.bit_values()[None, :])

    def decode(self, q) -> np.ndarray:
        """Weights for a bit vector (N,) or a batch of bit vectors (s, N)."""
        q = np.asarray(q)
        if q.shape[-1] != self.num_bits:
            raise PuboError(f"bit vector length {q.shape[-1]} != N = {self.num_bits}")
        blocks = q.reshape(q.shape[:-1] + (self.n, self.d)).astype(np.float64)
        return blocks @ self.bit_values()

    def random_bits(self, count: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.integers(0, 2, size=(count, self.num_bits), dtype=np.uint8)


def decode_weights(e: FixedPointEncoding, q) -> np.ndarray:
    return e.decode(q)


# ---------------------------------------------------------------- PUBO tensor


def _canonical(idx: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(set(int(i) for i in idx)))


@dataclass
class PuboTensor:
    """Sparse multilinear polynomial over binary variables.

    ``terms`` maps strictly increasing index tuples to coefficients; the empty
    tuple holds the constant.
    """

    num_vars: int
    terms: dict[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[tuple[int, ...], float] = {}
        for key, val in self.terms.items():
            k = _canonical(key)
            if k and (k[0] < 0 or k[-1] >= self.num_vars):
                raise PuboError(f"variable index out of range in {key}")
            clean[k] = clean.get(k, 0.0) + float(val)
        self.terms = {k: v for k, v in clean.items() if v != 0.0}
        if self.degree > MAX_DEGREE:
            raise PuboError(f"degree {self.degree} exceeds {MAX_DEGREE}")

    @property
    def degree(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    @property
    def num_terms(self) -> int:
        return len(self.terms)

    @property
    def constant(self) -> float:
        return self.terms.get((), 0.0)

    def add_term(self, idx: Iterable[int], coeff: float) -> None:
        k = _canonical(idx)
        v = self.terms.get(k, 0.0) + coeff
        if v == 0.0:
            self.terms.pop(k, None)
        else:
            self.terms[k] = v

    def copy(self) -> "PuboTensor":
        return PuboTensor(self.num_vars, dict(self.terms))

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(K, max(degree,1)) int64 index matrix padded with -1, and coefficients."""
        keys = sorted(self.terms, key=lambda t: (len(t), t))
        width = max(self.degree, 1)
        idx = np.full((len(keys), width), -1, dtype=np.int64)
        for r, k in enumerate(keys):
            idx[r, : len(k)] = k
        return idx, np.array([self.terms[k] for k in keys], dtype=np.float64)

    def energy(self, q) -> np.ndarray | float:
        """Evaluate at one bit vector (N,) or a batch (s, N)."""
        q = np.asarray(q, dtype=np.uint8)
        single = q.ndim == 1
        Q = q[None, :] if single else q
        if Q.shape[1] != self.num_vars:
            raise PuboError(f"state length {Q.shape[1]} != num_vars {self.num_vars}")
        out = np.zeros(Q.shape[0])
        by_len: dict[int, list[tuple[int, ...]]] = {}
        for k in self.terms:
            by_len.setdefault(len(k), []).append(k)
        for length, keys in by_len.items():
            coeff = np.array([self.terms[k] for k in keys])
            if length == 0:
                out += coeff.sum()
                continue
            idx = np.array(keys, dtype=np.int64)
            step = max(1, 2_000_000 // max(len(keys) * length, 1))
            for a in range(0, Q.shape[0], step):
                prod = Q[a : a + step][:, idx].all(axis=2)
                out[a : a + step] += prod @ coeff
        return float(out[0]) if single else out

    def __eq__(self, other) -> bool:
        if not isinstance(other, PuboTensor):
            return NotImplemented
        return self.num_vars == other.num_vars and self.terms == other.terms

    def allclose(self, other: "PuboTensor", atol: float = 1e-12) -> bool:
        if self.num_vars != other.num_vars:
            return False
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) <= atol for k in keys)

    # text format: "p pubo <num_vars> <num_terms>" then "<coeff> <idx...>"
    def dumps(self) -> str:
        lines = [f"p pubo {self.num_vars} {self.num_terms}"]
        for k in sorted(self.terms, key=lambda t: (len(t), t)):
            lines.append(" ".join([repr(self.terms[k])] + [str(i) for i in k]))
        return "\n".join(lines) + "\n"

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "PuboTensor":
        header = None
        terms: dict[tuple[int, ...], float] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("c "):
                continue
            parts = line.split()
            if parts[0] == "p":
                if len(parts) != 4 or parts[1] != "pubo":
                    raise PuboError(f"line {lineno}: bad header {line!r}")
                header = (int(parts[2]), int(parts[3]))
                continue
            if header is None:
                raise PuboError("missing 'p pubo' header")
            try:
                key = tuple(int(t) for t in parts[1:])
                coeff = float(parts[0])
            except ValueError:
                raise PuboError(f"line {lineno}: malformed term {line!r}") from None
            if len(set(key)) != len(key):
                raise PuboError(f"line {lineno}: repeated index in term")
            key = tuple(sorted(key))
            terms[key] = terms.get(key, 0.0) + coeff
        if header is None:
            raise PuboError("missing 'p pubo' header")
        p = cls(header[0], terms)
        if p.num_terms != header[1]:
            raise PuboError(f"header declares {header[1]} terms, found {p.num_terms}")
        return p

    @classmethod
    def load(cls, path) -> "PuboTensor":
        with open(path) as fh:
            return cls.loads(fh.read())


# ---------------------------------------------------------------- moments


@dataclass
class MomentTensors:
    """phi_j = (alpha_j / m) sum_i (y_i x_i)^{(x) j}, stored by sorted feature multiset.

    Each entry already includes the number of distinct orderings of its
    multiset, so ``sum_j sum_key phi_j[key] * prod(w[key])`` is the risk.
    """

    n: int
    phi: dict[int, dict[tuple[int, ...], float]]

    def risk(self, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        total = 0.0
        for table in self.phi.values():
            for key, c in table.items():
                total += c * float(np.prod(w[list(key)]))
        return total

    def num_entries(self) -> int:
        return sum(len(t) for t in self.phi.values())


@lru_cache(maxsize=None)
def _multiset_template(k: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """All size-j multisets of range(k) (sorted rows) with their ordering counts."""
    combos = np.array(list(itertools.combinations_with_replacement(range(k), j)), dtype=np.int64)
    if combos.size == 0:
        return combos.reshape(0, j), np.zeros(0)
    mult = np.empty(len(combos))
    fj = math.factorial(j)
    for r, row in enumerate(combos):
        _, counts = np.unique(row, return_counts=True)
        mult[r] = fj / np.prod([math.factorial(c) for c in counts])
    return combos, mult


def build_moments(d: Dataset, c: PolyLossCoeffs) -> MomentTensors:
    coeffs = c.power_coeffs()
    active = [j for j in range(1, len(coeffs)) if coeffs[j] != 0.0]
    if any(j > MAX_DEGREE for j in active):
        raise PuboError(f"moment degree above {MAX_DEGREE}")
    Z = d.signed_rows()
    n = d.n
    phi: dict[int, dict[tuple[int, ...], float]] = {}
    row_nnz = np.diff(Z.indptr)
    for j in active:
        keys_parts: list[np.ndarray] = []
        vals_parts: list[np.ndarray] = []
        # rows grouped by nonzero count share one multiset template
        for k in np.unique(row_nnz):
            if k == 0:
                continue
            rows = np.flatnonzero(row_nnz == k)
            combos, mult = _multiset_template(int(k), j)
            starts = Z.indptr[rows]
            pos = starts[:, None, None] + combos[None, :, :]  # rows x combos x j
            feat = np.sort(Z.indices[pos], axis=2)
            vals = Z.data[pos].prod(axis=2) * mult[None, :]
            code = np.zeros(feat.shape[:2], dtype=np.int64)
            for col in range(j):
                code = code * n + feat[:, :, col]
            keys_parts.append(code.ravel())
            vals_parts.append(vals.ravel())
        table: dict[tuple[int, ...], float] = {}
        if keys_parts:
            codes = np.concatenate(keys_parts)
            vals = np.concatenate(vals_parts)
            uniq, inv = np.unique(codes, return_inverse=True)
            sums = np.bincount(inv, weights=vals) * (coeffs[j] / d.m)
            digits = np.empty((uniq.size, j), dtype=np.int64)
            rest = uniq.copy()
            for col in range(j - 1, -1, -1):
                digits[:, col] = rest % n
                rest //= n
            for key, v in zip(map(tuple, digits.tolist()), sums.tolist()):
                if v != 0.0:
                    table[key] = v
        phi[j] = table
    return MomentTensors(n, phi)


# ---------------------------------------------------------------- assembly


def _expand_through_bits(
    feats: np.ndarray, coeff: np.ndarray, e: FixedPointEncoding
) -> tuple[np.ndarray, np.ndarray]:
    """Expand weight monomials (rows of ``feats``) into canonical bit monomials.

    Returns a padded index matrix (rows sorted ascending, -1 padding at the
    end) and matching coefficients, not yet merged.
    """
    K, j = feats.shape
    bitval = e.bit_values()
    out_idx = []
    out_val = []
    sentinel = np.iinfo(np.int64).max
    for choice in itertools.product(range(e.d), repeat=j):
        ch = np.array(choice, dtype=np.int64)
        idx = feats * e.d + ch[None, :]
        val = coeff * np.prod(bitval[ch])
        idx = np.sort(idx, axis=1)
        if j > 1:
            dup = np.zeros_like(idx, dtype=bool)
            dup[:, 1:] = idx[:, 1:] == idx[:, :-1]
            idx = np.where(dup, sentinel, idx)
            idx = np.sort(idx, axis=1)
            idx = np.where(idx == sentinel, -1, idx)
        out_idx.append(idx)
        out_val.append(np.broadcast_to(val, (K,)))
    return np.concatenate(out_idx), np.concatenate(out_val)


def assemble_pubo(
    mt: MomentTensors,
    lambda2: float,
    e: FixedPointEncoding,
    term_cap: int = DEFAULT_TERM_CAP,
) -> PuboTensor:
    """PUBO whose value at q equals risk(K q) + (lambda2/2) ||K q||^2.

    Weight monomials are converted to bits first and only then merged; merging
    in weight space would be wrong because w**2 != w while q**2 == q.
    """
    if mt.n != e.n:
        raise PuboError(f"moments over {mt.n} features, encoding over {e.n}")
    if lambda2 < 0:
        raise PuboError("lambda2 must be non-negative")
    width = MAX_DEGREE
    all_idx: list[np.ndarray] = []
    all_val: list[np.ndarray] = []
    projected = 0

    def push(feats: np.ndarray, coeff: np.ndarray):
        nonlocal projected
        if feats.size == 0:
            return
        projected += feats.shape[0] * e.d ** feats.shape[1]
        if projected > 4 * term_cap:
            raise ResourceError(
                f"compilation needs more than {term_cap} monomials (raise term_cap or reduce n, d)"
            )
        idx, val = _expand_through_bits(feats, coeff, e)
        pad = np.full((idx.shape[0], width), -1, dtype=np.int64)
        pad[:, : idx.shape[1]] = idx
        all_idx.append(pad)
        all_val.append(val)

    for j, table in sorted(mt.phi.items()):
        if not table:
            continue
        feats = np.array(list(table.keys()), dtype=np.int64).reshape(len(table), j)
        coeff = np.array(list(table.values()), dtype=np.float64)
        push(feats, coeff)
    if lambda2 > 0:
        f = np.arange(e.n, dtype=np.int64)[:, None]
        push(np.hstack([f, f]), np.full(e.n, 0.5 * lambda2))

    if not all_idx:
        return PuboTensor(e.num_bits, {})
    idx = np.concatenate(all_idx)
    val = np.concatenate(all_val)
    uniq, inv = np.unique(idx, axis=0, return_inverse=True)
    sums = np.bincount(inv.ravel(), weights=val)
    if uniq.shape[0] > term_cap:
        raise ResourceError(f"{uniq.shape[0]} monomials exceed the cap of {term_cap}")
    terms: dict[tuple[int, ...], float] = {}
    for row, v in zip(uniq.tolist(), sums.tolist()):
        if v != 0.0:
            terms[tuple(i for i in row if i >= 0)] = v
    return PuboTensor(e.num_bits, terms)


def compile_objective(
    d: Dataset,
    c: PolyLossCoeffs,
    lambda2: float,
    e: FixedPointEncoding,
    term_cap: int = DEFAULT_TERM_CAP,
) -> PuboTensor:
    return assemble_pubo(build_moments(d, c), lambda2, e, term_cap=term_cap)


def add_l0_regularizer(p: PuboTensor, e: FixedPointEncoding, lambda0: float, phi: float) -> PuboTensor:
    """Append one indicator ancilla per weight enforcing a lambda0 * ||w||_0 penalty.

    The ancilla for weight j sits at index N + j. It pays lambda0 when set and
    phi per active bit of weight j when clear, so at the minimum it is set
    exactly when the weight is nonzero.
    """
    N = e.num_bits
    if p.num_vars != N:
        raise PuboError(f"expected a PUBO over the {N} logical bits, got {p.num_vars} variables")
    if lambda0 < 0:
        raise PuboError("lambda0 must be non-negative")
    if not phi > lambda0:
        raise PuboError("phi must exceed lambda0 for the indicator ancillae to work")
    out = PuboTensor(N + e.n, dict(p.terms))
    for j in range(e.n):
        anc = N + j
        out.add_term((anc,), lambda0)
        for k in range(e.d):
            bit = j * e.d + k
            out.add_term((bit,), phi)
            out.add_term((bit, anc), -phi)
    return out


# ---------------------------------------------------------------- qubit counts


def qubit_bounds(n: int, d: int) -> dict[str, int]:
    """Logical bits plus two upper bounds on cubic quadratization ancillae."""
    N = n * d
    return {
        "logical": N,
        "ancilla_bound": N * (N - 2) // 4,
        "ancilla_bound_prose": N * N // 4,
        "total": N + N * (N - 2) // 4,
    }


def qubit_estimate(n: int, d: int, loss_degree: int = 3) -> int:
    """Upper bound on qubits for a fully connected cubic objective.

    Only cubic objectives have a tabulated bound; other degrees return the
    logical count and warn.
    """
    if n < 1 or d < 1:
        raise PuboError("need n >= 1 and d >= 1")
    if loss_degree != 3:
        warnings.warn(
            f"no ancilla bound implemented for degree {loss_degree}; returning logical bits only",
            stacklevel=2,
        )
        return n * d
    return qubit_bounds(n, d)["total"]
