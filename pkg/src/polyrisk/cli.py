"""Command-line entry point: ``polyrisk <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys

from . import experiment
from .dataset import (
    DatasetError,
    gen_long_servedio,
    gen_mease_wyner,
    gen_random_classifier_set,
    inject_label_noise,
    load_libsvm,
    save_libsvm,
)
from .fit import FitError, fit_cubic_direct, fit_cubic_risk, sixth_betas
from .losses import LossError, PolyLossCoeffs
from .pubo import FixedPointEncoding, PuboError, PuboTensor, add_l0_regularizer, compile_objective, qubit_bounds
from .quadratize import QuboProblem, reduce_to_qubo
from .solve import AnnealSchedule, SolveError, anneal, exhaustive_topk


def _cmd_data_gen(args) -> None:
    if args.kind == "random":
        d, _ = gen_random_classifier_set(args.m, args.n, args.seed)
    elif args.kind == "long-servedio":
        d = gen_long_servedio(args.m, args.seed)
    else:
        d = gen_mease_wyner(args.m, args.seed)
    if args.noise:
        # offset keeps the noise stream independent of the generator stream
        d = inject_label_noise(d, args.noise, args.seed + 1)
    save_libsvm(d, args.out)
    print(f"wrote {d.m} examples x {d.n} features to {args.out}")


def _cmd_fit(args) -> None:
    if args.loss == "sixth":
        c = sixth_betas(args.omega)
        if args.lambda2 is not None:
            c = PolyLossCoeffs(6, c.coeffs, beta0=c.beta0, lambda2=args.lambda2)
    else:
        if args.data is None or args.lambda2 is None:
            raise SystemExit(f"fit --loss {args.loss} needs --data and --lambda2")
        d = load_libsvm(args.data)
        fitter = fit_cubic_direct if args.loss == "cubic-direct" else fit_cubic_risk
        c = fitter(d, args.lambda2)
    c.dump(args.out)
    print(" ".join(f"{v:.10g}" for v in c.coeffs))


def _cmd_compile(args) -> None:
    c = PolyLossCoeffs.load(args.coeffs)
    d = load_libsvm(args.data)
    e = FixedPointEncoding(d.n, args.bits, args.zeta)
    lam = args.lambda2 if args.lambda2 is not None else (c.lambda2 or 0.0)
    p = compile_objective(d, c, lam, e)
    if args.l0 is not None:
        if args.phi is None:
            raise SystemExit("--l0 needs --phi")
        p = add_l0_regularizer(p, e, args.l0, args.phi)
    p.dump(args.out)
    print(f"{p.num_vars} variables, {p.num_terms} terms, degree {p.degree}")


def _cmd_quadratize(args) -> None:
    q = reduce_to_qubo(PuboTensor.load(args.model))
    q.dump(args.out)
    print(f"{q.num_logical} logical + {q.num_ancillae} ancilla variables")


def _cmd_qubits(args) -> None:
    print(json.dumps(qubit_bounds(args.n, args.d), sort_keys=True))


def load_model(path) -> PuboTensor | QuboProblem:
    with open(path) as fh:
        text = fh.read()
    for line in text.splitlines():
        if line.startswith("p "):
            return QuboProblem.loads(text) if line.split()[1] == "qubo" else PuboTensor.loads(text)
    raise PuboError(f"{path}: no 'p pubo' or 'p qubo' header")


def _cmd_solve(args) -> None:
    model = load_model(args.model)
    if args.method == "exact":
        res = exhaustive_topk(model, args.topk)
    else:
        sched = AnnealSchedule(args.beta_initial, args.beta_final, args.sweeps, args.restarts, args.seed)
        res = anneal(model, sched, args.topk)
    res.dump(args.out)
    print(f"best energy {res.best_energy!r} over {len(res.energies)} kept states")


def _cmd_exp(args) -> None:
    cfg = experiment.load_config(args.config, study=args.study)
    result = experiment.RUNNERS[args.study](cfg, args.out_dir)
    print(json.dumps(result, sort_keys=True, default=float)[:2000])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polyrisk", description="Polynomial losses compiled to binary optimization.")
    sub = ap.add_subparsers(dest="command", required=True)

    data = sub.add_parser("data", help="data set utilities").add_subparsers(dest="data_command", required=True)
    gen = data.add_parser("gen", help="generate a synthetic data set in libsvm format")
    gen.add_argument("--kind", choices=["random", "long-servedio", "mease-wyner"], default="random")
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--n", type=int, default=9, help="features (random kind only)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_data_gen)

    fit = sub.add_parser("fit", help="fit polynomial loss coefficients")
    fit.add_argument("--loss", choices=["cubic", "cubic-direct", "sixth"], required=True)
    fit.add_argument("--lambda2", type=float)
    fit.add_argument("--omega", type=float, default=1.0)
    fit.add_argument("--data")
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=_cmd_fit)

    comp = sub.add_parser("compile", help="compile the regularized risk to a PUBO")
    comp.add_argument("--coeffs", required=True)
    comp.add_argument("--data", required=True)
    comp.add_argument("--bits", type=int, default=2)
    comp.add_argument("--zeta", type=float, required=True)
    comp.add_argument("--lambda2", type=float, help="defaults to the value stored with the coefficients")
    comp.add_argument("--l0", type=float)
    comp.add_argument("--phi", type=float)
    comp.add_argument("--out", required=True)
    comp.set_defaults(func=_cmd_compile)

    quad = sub.add_parser("quadratize", help="reduce a PUBO to a QUBO with ancillae")
    quad.add_argument("--model", required=True)
    quad.add_argument("--out", required=True)
    quad.set_defaults(func=_cmd_quadratize)

    qb = sub.add_parser("qubits", help="qubit requirements of a fully connected cubic model")
    qb.add_argument("--n", type=int, required=True)
    qb.add_argument("--d", type=int, required=True)
    qb.set_defaults(func=_cmd_qubits)

    sol = sub.add_parser("solve", help="minimize a PUBO or QUBO model")
    sol.add_argument("--model", required=True)
    sol.add_argument("--method", choices=["exact", "sa"], default="sa")
    sol.add_argument("--topk", type=int, default=50)
    sol.add_argument("--sweeps", type=int, default=1000)
    sol.add_argument("--restarts", type=int, default=100)
    sol.add_argument("--beta-initial", type=float, default=0.1)
    sol.add_argument("--beta-final", type=float, default=10.0)
    sol.add_argument("--seed", type=int, default=0)
    sol.add_argument("--out", required=True)
    sol.set_defaults(func=_cmd_solve)

    exp = sub.add_parser("exp", help="run a study from a JSON config")
    exp.add_argument("study", choices=list(experiment.STUDIES))
    exp.add_argument("--config", required=True)
    exp.add_argument("--out-dir", required=True)
    exp.set_defaults(func=_cmd_exp)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (
        DatasetError, FitError, LossError, PuboError, SolveError, experiment.ConfigError, FileNotFoundError
    ) as exc:
        print(f"polyrisk: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
