"""Binary-classification datasets: loading, synthetic generators, label noise, folds.

Datasets hold a CSR feature matrix and a label vector in {-1, +1}. They are
treated as immutable: every transformation returns a new object.
"""

from __future__ import annotations

import gzip
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp


class DatasetError(ValueError):
    """Raised for malformed dataset files or invalid dataset operations."""


@dataclass(frozen=True, eq=False)
class Dataset:
    X: sp.csr_matrix
    y: np.ndarray
    name: str = ""

    def __post_init__(self):
        X = sp.csr_matrix(self.X, dtype=np.float64)
        X.sum_duplicates()
        X.sort_indices()
        X.eliminate_zeros()
        y = np.asarray(self.y, dtype=np.int8).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        self.validate()

    def validate(self) -> None:
        m = self.X.shape[0]
        if self.y.shape[0] != m:
            raise DatasetError(f"{self.y.shape[0]} labels for {m} rows")
        if not np.all(np.abs(self.y) == 1):
            raise DatasetError("labels must be in {-1, +1}")
        if not np.all(np.isfinite(self.X.data)):
            raise DatasetError("non-finite feature values")

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def density(self) -> float:
        if self.m == 0 or self.n == 0:
            return 0.0
        return self.X.nnz / (self.m * self.n)

    def __len__(self) -> int:
        return self.m

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.X.shape != other.X.shape or not np.array_equal(self.y, other.y):
            return False
        diff = self.X != other.X
        return diff.nnz == 0

    def dense(self) -> np.ndarray:
        return self.X.toarray()

    def signed_rows(self) -> sp.csr_matrix:
        """Rows multiplied by their labels, i.e. the vectors y_i * x_i."""
        Z = sp.csr_matrix(sp.diags(self.y.astype(np.float64)) @ self.X)
        Z.sort_indices()
        return Z

    def subset(self, idx: Sequence[int] | np.ndarray, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.name if name is None else name)

    def with_labels(self, y: np.ndarray) -> "Dataset":
        return Dataset(self.X, y, self.name)

    def baseline_error(self) -> float:
        """Test error of always predicting the majority class."""
        pos = float(np.mean(self.y == 1))
        return min(pos, 1.0 - pos)


@dataclass(frozen=True)
class FoldAssignment:
    fold_of_example: np.ndarray
    k: int
    seed: int

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of_example, minlength=self.k)

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_example == fold)

    def splits(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(train_idx, test_idx)`` for every fold."""
        for f in range(self.k):
            yield np.flatnonzero(self.fold_of_example != f), self.indices(f)


# ---------------------------------------------------------------- libsvm I/O


def _open_text(path: str | os.PathLike) -> io.TextIOBase:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def load_libsvm(
    path: str | os.PathLike, n_features: int | None = None, name: str | None = None
) -> Dataset:
    """Read a libsvm/svmlight text file.

    Indices on disk are 1-based. Labels may use either the {-1, +1} or the
    {0, 1} convention (0 maps to -1); mixing conventions is an error. Lines
    starting with ``#`` and trailing ``# ...`` comments are ignored. Files
    ending in ``.gz`` are decompressed transparently.
    """
    labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_idx = 0
    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                lab = float(parts[0])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: bad label {parts[0]!r}") from None
            if lab not in (-1.0, 0.0, 1.0):
                raise DatasetError(f"{path}:{lineno}: label {parts[0]!r} not in {{-1,0,1,+1}}")
            row: dict[int, float] = {}
            for tok in parts[1:]:
                idx_s, sep, val_s = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DatasetError(f"{path}:{lineno}: malformed feature {tok!r}") from None
                if idx < 1:
                    raise DatasetError(f"{path}:{lineno}: feature index {idx} < 1")
                if idx - 1 in row:
                    raise DatasetError(f"{path}:{lineno}: duplicate feature index {idx}")
                row[idx - 1] = val
            for j in sorted(row):
                if row[j] != 0.0:
                    indices.append(j)
                    values.append(row[j])
            if row:
                max_idx = max(max_idx, max(row) + 1)
            indptr.append(len(indices))
            labels.append(lab)
    if not labels:
        raise DatasetError(f"{path}: no examples")

    labs = np.asarray(labels)
    if np.any(labs == 0.0):
        if np.any(labs == -1.0):
            raise DatasetError(f"{path}: mixed label conventions (0 and -1)")
        labs = np.where(labs == 0.0, -1, 1)
    n = max_idx if n_features is None else int(n_features)
    if n < max_idx:
        raise DatasetError(f"{path}: feature index {max_idx} exceeds declared n={n}")
    X = sp.csr_matrix(
        (np.asarray(values, dtype=np.float64), np.asarray(indices), np.asarray(indptr)),
        shape=(len(labels), n),
    )
    return Dataset(X, labs.astype(np.int8), name or Path(path).name.split(".")[0])


def save_libsvm(d: Dataset, path: str | os.PathLike) -> None:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    X = d.X
    with opener(path, "wt", encoding="utf-8") as fh:
        for i in range(d.m):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(X.indices[lo:hi].tolist(), X.data[lo:hi].tolist()))
            lab = "+1" if d.y[i] > 0 else "-1"
            fh.write(f"{lab} {feats}\n" if feats else f"{lab}\n")


# ---------------------------------------------------------------- generators


def gen_random_classifier_set(m: int, n: int, seed: int) -> tuple[Dataset, np.ndarray]:
    """Features uniform on [-1, 1], labels from a standard-normal hyperplane.

    Rows whose margin under the generating classifier is exactly zero are
    redrawn so every label is well defined.
    """
    if m < 1 or n < 1:
        raise DatasetError("need m >= 1 and n >= 1")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(n)
    while not np.any(w):
        w = rng.standard_normal(n)
    X = rng.uniform(-1.0, 1.0, size=(m, n))
    s = X @ w
    bad = s == 0
    while np.any(bad):
        X[bad] = rng.uniform(-1.0, 1.0, size=(int(bad.sum()), n))
        s = X @ w
        bad = s == 0
    y = np.where(s > 0, 1, -1)
    return Dataset(sp.csr_matrix(X), y, f"random-n{n}"), w


LONG_SERVEDIO_DIM = 21


def long_servedio_target() -> np.ndarray:
    """Weight vector that classifies every noiseless Long-Servedio example correctly."""
    return np.ones(LONG_SERVEDIO_DIM)


def gen_long_servedio(m: int, seed: int) -> Dataset:
    """21-dimensional set built to defeat convex potentials.

    One quarter "large margin" examples (every coordinate equals the label),
    one quarter "pullers" (first 11 coordinates y, last 10 coordinates -y) and
    one half "penalizers" (a random 11 of the 21 coordinates equal y, the rest
    -y). Labels are exactly balanced.
    """
    if m < 4:
        raise DatasetError("Long-Servedio needs m >= 4")
    rng = np.random.default_rng(seed)
    dim = LONG_SERVEDIO_DIM
    y = np.ones(m, dtype=np.int8)
    y[: m // 2] = -1
    rng.shuffle(y)
    kinds = np.full(m, 2)
    kinds[: m // 4] = 0
    kinds[m // 4 : 2 * (m // 4)] = 1
    rng.shuffle(kinds)
    pattern = np.empty((m, dim))
    pattern[kinds == 0] = 1.0
    puller = np.concatenate([np.ones(11), -np.ones(10)])
    pattern[kinds == 1] = puller
    for i in np.flatnonzero(kinds == 2):
        row = -np.ones(dim)
        row[rng.choice(dim, size=11, replace=False)] = 1.0
        pattern[i] = row
    X = pattern * y[:, None]
    return Dataset(sp.csr_matrix(X), y, "long-servedio")


MEASE_WYNER_DIM = 20


def gen_mease_wyner(m: int, seed: int) -> Dataset:
    """Uniform [0,1]^20 features; positive iff the first five sum to at least 2.5."""
    if m < 1:
        raise DatasetError("need m >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(m, MEASE_WYNER_DIM))
    y = np.where(X[:, :5].sum(axis=1) >= 2.5, 1, -1)
    return Dataset(sp.csr_matrix(X), y, "mease-wyner")


# ---------------------------------------------------------------- noise, folds


def inject_label_noise(d: Dataset, rate: float, seed: int) -> Dataset:
    """Flip exactly ``round(rate * m)`` labels chosen uniformly without replacement."""
    if not 0.0 <= rate < 0.5:
        raise DatasetError(f"noise rate {rate} outside [0, 0.5)")
    k = int(np.floor(rate * d.m + 0.5))
    rng = np.random.default_rng(seed)
    flip = rng.choice(d.m, size=k, replace=False)
    y = d.y.copy()
    y[flip] = -y[flip]
    return d.with_labels(y)


def kfold_split(m: int, k: int, seed: int) -> FoldAssignment:
    if k < 2:
        raise DatasetError("k must be at least 2")
    if k > m:
        raise DatasetError(f"k={k} exceeds number of examples m={m}")
    perm = np.random.default_rng(seed).permutation(m)
    folds = np.empty(m, dtype=np.int64)
    for f, chunk in enumerate(np.array_split(perm, k)):
        folds[chunk] = f
    return FoldAssignment(folds, k, seed)


# ---------------------------------------------------------------- UCI Adult


ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country",
)  # fmt: skip

_ADULT_CATEGORIES = {
    "workclass": "Private, Self-emp-not-inc, Self-emp-inc, Federal-gov, Local-gov, State-gov, Without-pay, Never-worked",
    "education": "Bachelors, Some-college, 11th, HS-grad, Prof-school, Assoc-acdm, Assoc-voc, 9th, 7th-8th, 12th, Masters, 1st-4th, 10th, Doctorate, 5th-6th, Preschool",
    "marital-status": "Married-civ-spouse, Divorced, Never-married, Separated, Widowed, Married-spouse-absent, Married-AF-spouse",
    "occupation": "Tech-support, Craft-repair, Other-service, Sales, Exec-managerial, Prof-specialty, Handlers-cleaners, Machine-op-inspct, Adm-clerical, Farming-fishing, Transport-moving, Priv-house-serv, Protective-serv, Armed-Forces",
    "relationship": "Wife, Own-child, Husband, Not-in-family, Other-relative, Unmarried",
    "race": "White, Asian-Pac-Islander, Amer-Indian-Eskimo, Other, Black",
    "sex": "Female, Male",
    "native-country": "United-States, Cambodia, England, Puerto-Rico, Canada, Germany, Outlying-US(Guam-USVI-etc), India, Japan, Greece, South, China, Cuba, Iran, Honduras, Philippines, Italy, Poland, Jamaica, Vietnam, Mexico, Portugal, Ireland, France, Dominican-Republic, Laos, Ecuador, Taiwan, Haiti, Columbia, Hungary, Guatemala, Nicaragua, Scotland, Thailand, Yugoslavia, El-Salvador, Trinadad&Tobago, Peru, Hong, Holand-Netherlands",
}
ADULT_CATEGORIES = {k: tuple(s.strip() for s in v.split(",")) for k, v in _ADULT_CATEGORIES.items()}
# capital-gain / capital-loss are split into zero vs. positive; the rest into quintiles
_ADULT_TWO_BIN = ("capital-gain", "capital-loss")


def load_uci_adult(paths: Sequence[str | os.PathLike], name: str = "adult9") -> Dataset:
    """Binarize raw UCI Adult records into the 123-feature a9a layout.

    Categorical attributes are one-hot encoded in the order of ``adult.names``;
    missing values (``?``) leave the block empty. Continuous attributes become
    quintile indicators (capital gain/loss: zero vs. positive). Labels: ``>50K``
    is +1.
    """
    records: list[list[str]] = []
    for p in paths:
        with _open_text(p) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("|"):
                    continue
                parts = [s.strip() for s in line.split(",")]
                if len(parts) != 15:
                    raise DatasetError(f"{p}: expected 15 fields, got {len(parts)}")
                records.append(parts)
    if not records:
        raise DatasetError("no examples")

    cols = list(zip(*records))
    rows: list[np.ndarray] = []
    cols_idx: list[np.ndarray] = []
    offset = 0
    m = len(records)
    all_rows = np.arange(m)
    for k, col_name in enumerate(ADULT_COLUMNS):
        col = cols[k]
        if col_name in ADULT_CATEGORIES:
            lut = {c: j for j, c in enumerate(ADULT_CATEGORIES[col_name])}
            codes = np.array([lut.get(c, -1) for c in col])
            keep = codes >= 0
            rows.append(all_rows[keep])
            cols_idx.append(offset + codes[keep])
            offset += len(lut)
        else:
            v = np.asarray(col, dtype=np.float64)
            if col_name in _ADULT_TWO_BIN:
                b, nb = (v > 0).astype(np.int64), 2
            else:
                edges = np.quantile(v, [0.2, 0.4, 0.6, 0.8])
                b, nb = np.searchsorted(edges, v, side="right"), 5
            rows.append(all_rows)
            cols_idx.append(offset + b)
            offset += nb
    r = np.concatenate(rows)
    c = np.concatenate(cols_idx)
    X = sp.csr_matrix((np.ones(r.size), (r, c)), shape=(m, offset))
    y = np.array([1 if rec[-1].rstrip(".") == ">50K" else -1 for rec in records], dtype=np.int8)
    return Dataset(X, y, name)
