"""Degree reduction of PUBOs to QUBOs by pair substitution.

Every substitution replaces a variable pair ``(a, b)`` by a fresh ancilla
``z`` in all monomials containing both, and adds the penalty
``M * (a*b - 2*a*z - 2*b*z + 3*z)``, which is zero iff ``z == a*b`` and at
least ``M`` otherwise. ``M`` exceeds the total weight of the rewritten
monomials, so minimizing over the ancillae recovers the original energy.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .pubo import PuboError, PuboTensor


@dataclass(frozen=True)
class Substitution:
    ancilla: int
    pair: tuple[int, int]
    penalty: float


@dataclass
class QuboProblem:
    num_vars: int
    num_logical: int
    linear: dict[int, float] = field(default_factory=dict)
    quadratic: dict[tuple[int, int], float] = field(default_factory=dict)
    constant: float = 0.0
    substitutions: list[Substitution] = field(default_factory=list)

    @property
    def num_ancillae(self) -> int:
        return self.num_vars - self.num_logical

    @classmethod
    def from_pubo(cls, p: PuboTensor, num_logical: int, substitutions=()) -> "QuboProblem":
        if p.degree > 2:
            raise PuboError("polynomial still has monomials of degree > 2")
        q = cls(p.num_vars, num_logical, substitutions=list(substitutions))
        for key, c in p.terms.items():
            if len(key) == 0:
                q.constant += c
            elif len(key) == 1:
                q.linear[key[0]] = c
            else:
                q.quadratic[key] = c
        return q

    def to_pubo(self) -> PuboTensor:
        terms: dict[tuple[int, ...], float] = {(): self.constant} if self.constant else {}
        terms.update({(i,): c for i, c in self.linear.items()})
        terms.update(self.quadratic)
        return PuboTensor(self.num_vars, terms)

    def energy(self, bits) -> np.ndarray | float:
        return qubo_eval(self, bits)

    def dumps(self) -> str:
        lines = [f"p qubo {self.num_vars} {self.num_logical}"]
        if self.constant:
            lines.append(repr(float(self.constant)))
        for i in sorted(self.linear):
            lines.append(f"{self.linear[i]!r} {i}")
        for i, j in sorted(self.quadratic):
            lines.append(f"{self.quadratic[i, j]!r} {i} {j}")
        for s in self.substitutions:
            lines.append(f"# anc {s.ancilla} = {s.pair[0]}*{s.pair[1]} M={s.penalty!r}")
        return "\n".join(lines) + "\n"

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "QuboProblem":
        q = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "anc":
                    if q is None:
                        raise PuboError("substitution record before header")
                    z = int(parts[1])
                    a, b = (int(t) for t in parts[3].split("*"))
                    M = float(parts[4].split("=", 1)[1])
                    q.substitutions.append(Substitution(z, (a, b), M))
                continue
            parts = line.split()
            if parts[0] == "p":
                if len(parts) != 4 or parts[1] != "qubo":
                    raise PuboError(f"line {lineno}: bad header {line!r}")
                q = cls(int(parts[2]), int(parts[3]))
                continue
            if q is None:
                raise PuboError("missing 'p qubo' header")
            coeff = float(parts[0])
            idx = [int(t) for t in parts[1:]]
            if len(idx) == 0:
                q.constant += coeff
            elif len(idx) == 1:
                q.linear[idx[0]] = q.linear.get(idx[0], 0.0) + coeff
            elif len(idx) == 2 and idx[0] != idx[1]:
                key = (min(idx), max(idx))
                q.quadratic[key] = q.quadratic.get(key, 0.0) + coeff
            else:
                raise PuboError(f"line {lineno}: malformed QUBO term {line!r}")
        if q is None:
            raise PuboError("missing 'p qubo' header")
        return q

    @classmethod
    def load(cls, path) -> "QuboProblem":
        with open(path) as fh:
            return cls.loads(fh.read())


def _pair_counts(terms: dict[tuple[int, ...], float]) -> Counter:
    counts: Counter = Counter()
    for key in terms:
        if len(key) >= 3:
            counts.update(itertools.combinations(key, 2))
    return counts


def reduce_to_qubo(p: PuboTensor) -> QuboProblem:
    """Quadratize by repeatedly substituting the most frequent pair.

    The pair occurring in the most monomials of degree >= 3 is chosen first;
    ties go to the lexicographically smallest pair, so the result is
    deterministic.
    """
    terms = dict(p.terms)
    num_vars = p.num_vars
    subs: list[Substitution] = []
    while True:
        counts = _pair_counts(terms)
        if not counts:
            break
        (a, b), _ = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        z = num_vars
        num_vars += 1
        affected = [k for k in terms if a in k and b in k]
        M = 1.0 + sum(abs(terms[k]) for k in affected)
        for k in affected:
            c = terms.pop(k)
            new = tuple(sorted([v for v in k if v != a and v != b] + [z]))
            terms[new] = terms.get(new, 0.0) + c
        for key, c in (((a, b), M), ((a, z), -2.0 * M), ((b, z), -2.0 * M), ((z,), 3.0 * M)):
            terms[key] = terms.get(key, 0.0) + c
        terms = {k: v for k, v in terms.items() if v != 0.0}
        subs.append(Substitution(z, (a, b), M))
    return QuboProblem.from_pubo(PuboTensor(num_vars, terms), p.num_vars, subs)


def qubo_eval(q: QuboProblem, bits) -> np.ndarray | float:
    """Energy at one state (num_vars,) or a batch of states (s, num_vars)."""
    x = np.asarray(bits, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != q.num_vars:
        raise PuboError(f"state length {X.shape[1]} != num_vars {q.num_vars}")
    e = np.full(X.shape[0], q.constant)
    if q.linear:
        idx = np.fromiter(q.linear.keys(), dtype=np.int64)
        e += X[:, idx] @ np.fromiter(q.linear.values(), dtype=np.float64)
    if q.quadratic:
        pairs = np.array(list(q.quadratic.keys()), dtype=np.int64)
        coef = np.fromiter(q.quadratic.values(), dtype=np.float64)
        e += (X[:, pairs[:, 0]] * X[:, pairs[:, 1]]) @ coef
    return float(e[0]) if single else e


def ancilla_values(q: QuboProblem, logical) -> np.ndarray:
    """Full state with every ancilla set to the product it stands for."""
    x = np.zeros(q.num_vars, dtype=np.uint8)
    x[: q.num_logical] = np.asarray(logical, dtype=np.uint8)
    for s in q.substitutions:
        x[s.ancilla] = x[s.pair[0]] & x[s.pair[1]]
    return x


@dataclass
class LiftResult:
    logical: np.ndarray
    violated: list[int]
    penalty: float

    @property
    def consistent(self) -> bool:
        return not self.violated


def lift_solution(q: QuboProblem, bits) -> LiftResult:
    """Project a QUBO state onto the logical variables and flag broken ancillae."""
    x = np.asarray(bits, dtype=np.uint8)
    if x.shape[0] != q.num_vars:
        raise PuboError(f"state length {x.shape[0]} != num_vars {q.num_vars}")
    violated = []
    penalty = 0.0
    for s in q.substitutions:
        a, b, z = int(x[s.pair[0]]), int(x[s.pair[1]]), int(x[s.ancilla])
        if z != (a & b):
            violated.append(s.ancilla)
        penalty += s.penalty * (a * b - 2 * a * z - 2 * b * z + 3 * z)
    return LiftResult(x[: q.num_logical].copy(), violated, float(penalty))
