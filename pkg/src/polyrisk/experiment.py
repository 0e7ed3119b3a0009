"""Desk-scale reproductions of the enumeration, cross-validation, correlation
and convergence studies.

Each ``run_*`` takes an ``ExperimentConfig``, writes versioned CSV tables and
a JSON metadata file (full config plus every derived seed) into an output
directory, and returns the headline numbers. Nothing time- or host-dependent
is written, so reruns with the same config are byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .baselines import train_convex_baseline
from .dataset import (
    Dataset,
    gen_long_servedio,
    gen_mease_wyner,
    gen_random_classifier_set,
    inject_label_noise,
    kfold_split,
    load_libsvm,
)
from .fit import embedding_error, fit_cubic_direct, fit_cubic_risk, sixth_betas
from .losses import (
    CONVEX_KINDS,
    CUBIC,
    LOSS_KINDS,
    SIXTH,
    ZERO_ONE,
    PolyLossCoeffs,
    loss_eval,
    margins,
    zero_one_error,
)
from .pubo import FixedPointEncoding, compile_objective
from .solve import (
    AnnealSchedule,
    MarginObjective,
    anneal,
    enumerate_margin_objectives,
    exhaustive_energies,
    exhaustive_topk,
    index_to_bits,
    rank_of,
)

FORMAT_VERSION = 1

# the ten lambda / omega values offered to cross-validation
PRINTED_GRID = (2.0, 0.398965, 0.079583, 0.015875, 0.003167, 0.000632, 0.000126, 0.000025, 0.000005, 0.000001)
NOISE_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45)

STUDIES = ("fig2", "cv", "correlation", "convergence")
_STUDY_CODE = {name: i + 1 for i, name in enumerate(STUDIES)}

ZETA_RULES = ("sample", "prior")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


@dataclass
class DatasetSpec:
    source: str = "random"
    path: Optional[str] = None
    m: Optional[int] = None
    n: int = 9
    n_features: Optional[int] = None
    seed: int = 0

    SOURCES = ("random", "libsvm", "long-servedio", "mease-wyner")


@dataclass
class SolverSpec:
    method: str = "sa"
    sweeps: int = 1000
    restarts: int = 100
    beta_initial: float = 0.1
    beta_final: float = 10.0
    topk: int = 50

    def schedule(self, seed: int) -> AnnealSchedule:
        return AnnealSchedule(self.beta_initial, self.beta_final, self.sweeps, self.restarts, seed)


@dataclass
class ExperimentConfig:
    study: str = "fig2"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    losses: list = field(default_factory=lambda: [CUBIC, "logistic", "square", "smooth-hinge"])
    lambda2: float = 0.001
    omega: float = 1.0
    lambda_grid: list = field(default_factory=lambda: list(PRINTED_GRID))
    omega_grid: list = field(default_factory=lambda: list(PRINTED_GRID))
    noise_levels: list = field(default_factory=lambda: list(NOISE_GRID))
    bits: int = 2
    r: float = 2.0
    zeta_rule: str = "sample"
    zeta: Optional[float] = None
    regularize: bool = True
    cubic_fit: str = "risk"
    max_pairs: Optional[int] = None
    folds: int = 10
    max_train: int = 5000
    solver: SolverSpec = field(default_factory=SolverSpec)
    repetitions: int = 50
    m: int = 10_000
    m_test: int = 10_000
    m_grid: list = field(default_factory=lambda: [10, 100, 1000, 10_000])
    num_states: int = 10_000
    lowest: int = 50
    seed: int = 0
    workers: int = 1
    base_dir: str = field(default=".", repr=False)

    def validate(self) -> None:
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; choose from {STUDIES}")
        if self.dataset.source not in DatasetSpec.SOURCES:
            raise ConfigError(f"unknown dataset source {self.dataset.source!r}")
        if self.dataset.source == "libsvm":
            if not self.dataset.path:
                raise ConfigError("libsvm dataset needs a path")
            if not self.resolve(self.dataset.path).exists():
                raise ConfigError(f"dataset file {self.dataset.path} not found")
        for name in ("losses", "lambda_grid", "omega_grid", "noise_levels", "m_grid"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        bad = [k for k in self.losses if k not in LOSS_KINDS]
        if bad:
            raise ConfigError(f"unknown loss kinds {bad}")
        if any(not 0.0 <= p < 0.5 for p in self.noise_levels):
            raise ConfigError("noise levels must lie in [0, 0.5)")
        if any(v <= 0 for v in list(self.lambda_grid) + list(self.omega_grid)) or self.lambda2 <= 0:
            raise ConfigError("lambda and omega values must be positive")
        if self.zeta_rule not in ZETA_RULES:
            raise ConfigError(f"zeta_rule must be one of {ZETA_RULES}")
        if self.cubic_fit not in ("risk", "direct"):
            raise ConfigError("cubic_fit must be 'risk' or 'direct'")
        if self.solver.method not in ("sa", "exact"):
            raise ConfigError("solver.method must be 'sa' or 'exact'")
        if list(self.m_grid) != sorted(self.m_grid):
            raise ConfigError("m_grid must be ascending")
        if self.bits < 1 or self.folds < 3 or self.repetitions < 1 or self.workers < 1:
            raise ConfigError("bits, repetitions and workers must be >= 1 and folds >= 3")

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


_STUDY_DEFAULTS: dict[str, dict] = {
    # enumeration scores the empirical risk, with weights cut off at r prior std-devs
    "fig2": {"zeta_rule": "prior", "regularize": False, "m": 10_000, "m_test": 10_000, "n": 9},
    "cv": {"losses": [ZERO_ONE, SIXTH, CUBIC, "logistic", "square", "smooth-hinge"]},
    "correlation": {"losses": [CUBIC, "logistic", "square", "smooth-hinge"]},
    "convergence": {"losses": [CUBIC]},
}


def config_from_dict(obj: dict, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    obj = dict(obj)
    study = obj.get("study", "fig2")
    defaults = dict(_STUDY_DEFAULTS.get(study, {}))
    ds_default_n = defaults.pop("n", None)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"base_dir"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    merged = {**defaults, **obj}
    for key in ("noise_levels", "lambda_grid", "omega_grid"):
        if key in merged:
            merged[key] = [float(v) for v in merged[key]]
    ds =dict(merged.pop("dataset", {}) or {})
    if ds_default_n is not None:
        ds.setdefault("n", ds_default_n)
    sv = dict(merged.pop("solver", {}) or {})
    try:
        dspec = DatasetSpec(**ds)
        sspec = SolverSpec(**sv)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg = ExperimentConfig(dataset=dspec, solver=sspec, base_dir=str(base_dir), **merged)
    cfg.validate()
    return cfg


def load_config(path: str | os.PathLike, study: Optional[str] = None) -> ExperimentConfig:
    with open(path) as fh:
        obj = json.load(fh)
    if study is not None:
        if obj.get("study", study) != study:
            raise ConfigError(f"config is for study {obj['study']!r}, not {study!r}")
        obj["study"] = study
    return config_from_dict(obj, base_dir=Path(path).resolve().parent)


# ---------------------------------------------------------------- helpers


def derive_seed(root: int, *key: int) -> int:
    """Independent 32-bit seed for a job key, stable across runs and platforms."""
    return int(np.random.SeedSequence(root, spawn_key=tuple(int(k) for k in key)).generate_state(1)[0])


def weight_scale(cfg: ExperimentConfig, lambda2: float, m: int) -> float:
    if cfg.zeta is not None:
        return float(cfg.zeta)
    if cfg.zeta_rule == "prior":
        return cfg.r / math.sqrt(lambda2)
    return cfg.r / math.sqrt(lambda2 * m)


def load_dataset(cfg: ExperimentConfig, seed: int) -> Dataset:
    spec = cfg.dataset
    if spec.source == "libsvm":
        d = load_libsvm(cfg.resolve(spec.path), n_features=spec.n_features)
        if spec.m is not None and spec.m < d.m:
            rng = np.random.default_rng(derive_seed(seed, 0))
            d = d.subset(np.sort(rng.choice(d.m, size=spec.m, replace=False)))
        return d
    m = spec.m if spec.m is not None else 2000
    if spec.source == "long-servedio":
        return gen_long_servedio(m, spec.seed)
    if spec.source == "mease-wyner":
        return gen_mease_wyner(m, spec.seed)
    return gen_random_classifier_set(m, spec.n, spec.seed)[0]


def fit_loss(cfg: ExperimentConfig, kind: str, d: Dataset, lambda2: float, omega: float) -> Optional[PolyLossCoeffs]:
    if kind == CUBIC:
        if cfg.cubic_fit == "direct":
            return fit_cubic_direct(d, lambda2)
        return fit_cubic_risk(d, lambda2, max_pairs=cfg.max_pairs)
    if kind == SIXTH:
        return sixth_betas(omega)
    return None


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, schema: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# polyrisk {schema} v{FORMAT_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _metadata(cfg: ExperimentConfig, study: str, results: dict, seeds: dict) -> dict:
    return {
        "study": study,
        "format_version": FORMAT_VERSION,
        "config": cfg.to_dict(),
        "seeds": seeds,
        "results": results,
    }


def _map_jobs(fn: Callable, jobs: list, workers: int) -> list:
    """Run jobs (already sorted by key) and return results in job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())


# ---------------------------------------------------------------- fig 2


@dataclass(frozen=True)
class Fig2Job:
    cfg: ExperimentConfig
    noise_index: int
    rep: int


def _fig2_job(job: Fig2Job) -> list[list]:
    cfg = job.cfg
    noise = cfg.noise_levels[job.noise_index]
    seed = derive_seed(cfg.seed, _STUDY_CODE["fig2"], job.noise_index, job.rep)
    m, n = cfg.m, cfg.dataset.n
    full, _ = gen_random_classifier_set(m + cfg.m_test, n, seed)
    train = inject_label_noise(full.subset(np.arange(m)), noise, derive_seed(seed, 1))
    test = full.subset(np.arange(m, m + cfg.m_test))
    return fig2_metrics(cfg, train, test, noise, job.rep)


def fig2_metrics(cfg: ExperimentConfig, train: Dataset, test: Dataset, noise: float, rep: int) -> list[list]:
    """Rows (noise, rep, loss, lowest-state error, best-of-K error, rank, rank <= K) for one data set."""
    lam = cfg.lambda2
    e = FixedPointEncoding(train.n, cfg.bits, weight_scale(cfg, lam, train.m))
    N = e.num_bits
    reg = lam if cfg.regularize else 0.0
    K = cfg.solver.topk

    # the 0-1 objective is never regularized: its minimizers define "global minimum"
    margin_kinds = [ZERO_ONE] + [k for k in cfg.losses if k not in (ZERO_ONE, CUBIC)]
    objs = [
        MarginObjective(train, k, fit_loss(cfg, k, train, lam, cfg.omega), 0.0 if k == ZERO_ONE else reg, e)
        for k in margin_kinds
    ]
    spectra = dict(zip(margin_kinds, _enumerate_grouped(objs)))
    if CUBIC in cfg.losses:
        c = fit_loss(cfg, CUBIC, train, lam, cfg.omega)
        spectra[CUBIC] = exhaustive_energies(compile_objective(train, c, reg, e))

    E01 = spectra[ZERO_ONE]
    optima = np.flatnonzero(E01 == E01.min())
    rows = []
    for kind in cfg.losses:
        E = spectra[kind]
        k = min(K, len(E))
        thr = np.partition(E, k - 1)[k - 1]
        cand = np.flatnonzero(E <= thr)
        top = cand[np.lexsort((cand, E[cand]))][:k]
        errs = np.atleast_1d(zero_one_error(test, e.decode(index_to_bits(top, N)).T))
        rank = rank_of(E, optima)
        rows.append([noise, rep, kind, float(errs[0]), float(errs.min()), rank, rank <= K])
    return rows


def _enumerate_grouped(objs: list[MarginObjective]) -> list[np.ndarray]:
    # objectives sharing a regularization weight can share one margin pass
    out: list[Optional[np.ndarray]] = [None] * len(objs)
    groups: dict[float, list[int]] = {}
    for i, o in enumerate(objs):
        groups.setdefault(o.lambda2, []).append(i)
    for idx in groups.values():
        E = enumerate_margin_objectives([objs[i] for i in idx])
        for row, i in enumerate(idx):
            out[i] = E[row]
    return out


def run_fig2(cfg: ExperimentConfig, out_dir: str | os.PathLike) -> dict:
    """Exhaustive-enumeration metrics on random-hyperplane data over a label-noise grid."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.dataset.n * cfg.bits > 26:
        raise ConfigError(f"n*d = {cfg.dataset.n * cfg.bits} exceeds the enumeration cap of 26")
    jobs = [Fig2Job(cfg, i, r) for i in range(len(cfg.noise_levels)) for r in range(cfg.repetitions)]
    rows = [row for res in _map_jobs(_fig2_job, jobs, cfg.workers) for row in res]
    write_csv(
        out / "fig2_runs.csv",
        "fig2-runs",
        ["noise", "rep", "loss", "lowest_test_error", "best_of_k_test_error", "rank_of_01_min", "rank_le_k"],
        rows,
    )
    summary = []
    results: dict[str, Any] = {}
    for noise in cfg.noise_levels:
        for kind in cfg.losses:
            sel = [r for r in rows if r[0] == noise and r[2] == kind]
            lo, bk, rk, p = (
                _mean_std([r[3] for r in sel]),
                _mean_std([r[4] for r in sel]),
                _mean_std([r[5] for r in sel]),
                float(np.mean([r[6] for r in sel])),
            )
            summary.append([noise, kind, len(sel), *lo, *bk, *rk, p])
            results.setdefault(kind, []).append(
                {"noise": noise, "lowest_test_error": lo[0], "best_of_k_test_error": bk[0], "rank_mean": rk[0], "p_rank_le_k": p}
            )
    write_csv(
        out / "fig2_summary.csv",
        "fig2-summary",
        [
            "noise", "loss", "reps",
            "lowest_test_error_mean", "lowest_test_error_std",
            "best_of_k_test_error_mean", "best_of_k_test_error_std",
            "rank_mean", "rank_std", "p_rank_le_k",
        ],
        summary,
    )
    seeds = {
        f"{i}/{r}": derive_seed(cfg.seed, _STUDY_CODE["fig2"], i, r)
        for i in range(len(cfg.noise_levels))
        for r in range(cfg.repetitions)
    }
    write_json(out / "fig2.json", _metadata(cfg, "fig2", results, seeds))
    return results


# ---------------------------------------------------------------- cross-validation


def hyper_grid(cfg: ExperimentConfig, kind: str) -> list[tuple[float, Optional[float]]]:
    if kind == SIXTH:
        return [(lam, om) for lam in cfg.lambda_grid for om in cfg.omega_grid]
    return [(lam, None) for lam in cfg.lambda_grid]


def candidate_classifiers(
    cfg: ExperimentConfig, kind: str, train: Dataset, lam: float, omega: Optional[float], seed: int
) -> np.ndarray:
    """Weight vectors (rows) a method offers for validation at one hyperparameter point."""
    if kind in CONVEX_KINDS:
        return train_convex_baseline(kind, train, lam)[None, :]
    e = FixedPointEncoding(train.n, cfg.bits, weight_scale(cfg, lam, train.m))
    coeffs = fit_loss(cfg, kind, train, lam, omega if omega is not None else cfg.omega)
    obj = MarginObjective(train, kind, coeffs, lam if cfg.regularize else 0.0, e)
    if cfg.solver.method == "exact":
        res = exhaustive_topk(obj, cfg.solver.topk)
    else:
        res = anneal(obj, cfg.solver.schedule(seed), cfg.solver.topk)
    return e.decode(res.states)


@dataclass(frozen=True)
class CvJob:
    cfg: ExperimentConfig
    noise_index: int
    fold: int
    kind: str


def _cv_job(job: CvJob) -> list:
    cfg = job.cfg
    noise = cfg.noise_levels[job.noise_index]
    data_seed = derive_seed(cfg.seed, _STUDY_CODE["cv"])
    d = load_dataset(cfg, data_seed)
    folds = kfold_split(d.m, cfg.folds, derive_seed(data_seed, 1))
    noisy = inject_label_noise(d, noise, derive_seed(data_seed, 2, job.noise_index))
    test_idx = folds.indices(job.fold)
    val_idx = folds.indices((job.fold + 1) % cfg.folds)
    train_idx = np.setdiff1d(np.arange(d.m), np.concatenate([test_idx, val_idx]))
    if len(train_idx) > cfg.max_train:
        rng = np.random.default_rng(derive_seed(data_seed, 3, job.noise_index, job.fold))
        train_idx = np.sort(rng.choice(train_idx, size=cfg.max_train, replace=False))
    train, val = noisy.subset(train_idx), noisy.subset(val_idx)
    test = d.subset(test_idx)  # test labels stay clean

    kind_code = LOSS_KINDS.index(job.kind) if job.kind in LOSS_KINDS else len(LOSS_KINDS)
    if job.kind == "majority":
        majority = 1 if np.mean(train.y > 0) >= 0.5 else -1
        err = float(np.mean(test.y != majority))
        return [noise, job.fold, job.kind, "", "", err, err, train.m]
    best = None
    for h, (lam, omega) in enumerate(hyper_grid(cfg, job.kind)):
        seed = derive_seed(cfg.seed, _STUDY_CODE["cv"], job.noise_index, job.fold, kind_code, h)
        try:
            W = candidate_classifiers(cfg, job.kind, train, lam, omega, seed)
        except Exception as exc:
            raise RuntimeError(
                f"cv: {job.kind} failed at noise={noise}, fold={job.fold}, lambda={lam}, omega={omega}: {exc}"
            ) from exc
        verr = np.atleast_1d(zero_one_error(val, W.T))
        j = int(np.argmin(verr))
        if best is None or verr[j] < best[0]:
            best = (float(verr[j]), lam, omega, W[j])
    verr, lam, omega, w = best
    terr = float(zero_one_error(test, w))
    return [noise, job.fold, job.kind, lam, "" if omega is None else omega, verr, terr, train.m]


def run_cv(cfg: ExperimentConfig, out_dir: str | os.PathLike) -> dict:
    """Noisy-label cross-validation: hyperparameters chosen on validation, error reported on clean test folds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kinds = list(cfg.losses) + ["majority"]
    jobs = [CvJob(cfg, i, f, k) for i in range(len(cfg.noise_levels)) for k in kinds for f in range(cfg.folds)]
    rows = _map_jobs(_cv_job, jobs, cfg.workers)
    write_csv(
        out / "cv_folds.csv",
        "cv-folds",
        ["noise", "fold", "loss", "lambda", "omega", "validation_error", "test_error", "train_size"],
        rows,
    )
    summary, results = [], {}
    for noise in cfg.noise_levels:
        for kind in kinds:
            errs = [r[6] for r in rows if r[0] == noise and r[2] == kind]
            mu, sd = _mean_std(errs)
            summary.append([noise, kind, len(errs), mu, sd])
            results.setdefault(kind, []).append({"noise": noise, "test_error_mean": mu, "test_error_std": sd})
    write_csv(out / "cv_summary.csv", "cv-summary", ["noise", "loss", "folds", "test_error_mean", "test_error_std"], summary)
    seeds = {"data": derive_seed(cfg.seed, _STUDY_CODE["cv"])}
    write_json(out / "cv.json", _metadata(cfg, "cv", results, seeds))
    return results


# ---------------------------------------------------------------- correlation


def risk_matrix(d: Dataset, kinds: Sequence[str], coeffs: dict, W: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Empirical risk of each state (rows of W) under each loss kind, shape (len(kinds), states)."""
    out = np.empty((len(kinds), W.shape[0]))
    for lo in range(0, W.shape[0], chunk):
        g = margins(d, W[lo : lo + chunk].T)
        for a, kind in enumerate(kinds):
            out[a, lo : lo + chunk] = loss_eval(kind, coeffs.get(kind), g).mean(axis=0)
    return out


def _minmax_rows(R: np.ndarray) -> np.ndarray:
    lo, hi = R.min(axis=1, keepdims=True), R.max(axis=1, keepdims=True)
    if np.any(hi - lo <= 0):
        raise ValueError("a loss has constant risk over the sampled states; normalization undefined")
    return (R - lo) / (hi - lo)


def run_correlation(cfg: ExperimentConfig, out_dir: str | os.PathLike) -> dict:
    """Pearson correlation between normalized 0-1 risk and each loss's risk over random states."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_seed = derive_seed(cfg.seed, _STUDY_CODE["correlation"])
    d = load_dataset(cfg, data_seed)
    lam = cfg.lambda2
    e = FixedPointEncoding(d.n, cfg.bits, weight_scale(cfg, lam, d.m))
    state_seed = derive_seed(data_seed, 1)
    W = e.decode(e.random_bits(cfg.num_states, state_seed))
    kinds = [ZERO_ONE] + [k for k in cfg.losses if k != ZERO_ONE]
    coeffs = {k: fit_loss(cfg, k, d, lam, cfg.omega) for k in kinds}
    R = _minmax_rows(risk_matrix(d, kinds, coeffs, W))
    pearson = {k: float(np.corrcoef(R[0], R[a])[0, 1]) for a, k in enumerate(kinds)}
    write_csv(
        out / "correlation_points.csv",
        "correlation-points",
        ["state"] + kinds,
        [[s] + R[:, s].tolist() for s in range(R.shape[1])],
    )
    write_csv(out / "correlation.csv", "correlation", ["loss", "pearson_r"], [[k, pearson[k]] for k in kinds])
    results = {"pearson_r": pearson, "m": d.m, "zeta": e.zeta}
    write_json(
        out / "correlation.json",
        _metadata(cfg, "correlation", results, {"data": data_seed, "states": state_seed}),
    )
    return results


# ---------------------------------------------------------------- convergence


def loglog_slope(m_values, errors) -> float:
    return float(np.polyfit(np.log(np.asarray(m_values, float)), np.log(np.asarray(errors, float)), 1)[0])


def run_convergence(cfg: ExperimentConfig, out_dir: str | os.PathLike) -> dict:
    """Embedding error of the fitted cubic loss on nested subsamples of growing size."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_seed = derive_seed(cfg.seed, _STUDY_CODE["convergence"])
    d = load_dataset(cfg, data_seed)
    if cfg.m_grid[-1] > d.m:
        raise ConfigError(f"m_grid reaches {cfg.m_grid[-1]} but the data set has {d.m} examples")
    order = np.random.default_rng(derive_seed(data_seed, 1)).permutation(d.m)
    lam = cfg.lambda2
    # one weight box and one state sample for every m, sized for the largest subsample
    e = FixedPointEncoding(d.n, cfg.bits, weight_scale(cfg, lam, cfg.m_grid[-1]))
    state_seed = derive_seed(data_seed, 2)
    W = e.decode(e.random_bits(cfg.num_states, state_seed))
    kind = cfg.losses[0] if cfg.losses else CUBIC
    rows = []
    for m in cfg.m_grid:
        sub = d.subset(np.sort(order[:m]))
        c = fit_loss(cfg, kind, sub, lam, cfg.omega)
        err_all = embedding_error(sub, c, W)
        err_low = embedding_error(sub, c, W, lowest=cfg.lowest)
        rows.append([m, err_all, err_low, c.coeffs[0], c.coeffs[1]])
    write_csv(
        out / "convergence.csv",
        "convergence",
        ["m", "embedding_error", f"embedding_error_lowest{cfg.lowest}", "coeff1", "coeff3"],
        rows,
    )
    slope = loglog_slope([r[0] for r in rows], [r[1] for r in rows])
    slope_low = loglog_slope([r[0] for r in rows], [r[2] for r in rows])
    results = {
        "m": [r[0] for r in rows],
        "embedding_error": [r[1] for r in rows],
        f"embedding_error_lowest{cfg.lowest}": [r[2] for r in rows],
        "slope": slope,
        f"slope_lowest{cfg.lowest}": slope_low,
        "zeta": e.zeta,
    }
    write_json(out / "convergence.json", _metadata(cfg, "convergence", results, {"data": data_seed, "states": state_seed}))
    return results


RUNNERS = {"fig2": run_fig2, "cv": run_cv, "correlation": run_correlation, "convergence": run_convergence}
