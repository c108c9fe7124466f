"""Command-line entry point: ``dpstack <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 budget rejection, 4 shape
mismatch, 5 every sweep cell failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import bench, theory
from .data import SynthSpec, load_dataset, load_synth_spec, save_dataset, synth_generate, train_valid_test_split
from .mechanism import BudgetRejected, noise_audit, plr_params, pstf_params
from .models import load_model, model_kind, predict, save_model
from .partition import alpha_importance, feature_partition, load_importance, save_importance
from .plr import train_plr
from .stacking import train_pst_f, train_pst_s
from .transfer import train_pst_h, train_source_models

EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_SHAPE, EXIT_SWEEP = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


class ShapeError(Exception):
    pass


def _positive_float(text):
    v = bench._eps(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _float_list(text):
    return [bench._eps(t) for t in text.split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def _echo(title, doc, stream=None):
    stream = stream or sys.stdout
    print(f"# {title}", file=stream)
    print(json.dumps(_jsonable(doc), indent=2, sort_keys=True), file=stream)
    stream.flush()


def _load(path, fmt, dim):
    try:
        return load_dataset(path, fmt, dim)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


# --------------------------------------------------------------------- train

def _importance(args, ds):
    given = [x is not None for x in (args.importance_file, args.alpha)] + [args.pca_importance]
    if sum(given) != 1:
        raise UsageError("choose exactly one of --importance-file, --alpha, --pca-importance")
    if args.importance_file is not None:
        return load_importance(args.importance_file, ds.d)
    if args.alpha is not None:
        return alpha_importance(ds.d, args.alpha)
    # inputs are taken to be principal-component coordinates already
    return ds.X.var(axis=0, ddof=1)


def _n_low(n, fraction):
    return int(math.floor(fraction * n + 0.5))


def _derived(args, ds, partition, src):
    """Noise parameters the run will use, computed before training."""
    eps, lam = args.epsilon, args.lam
    if args.method == "plr":
        return {"n": ds.n, "plr": plr_params(eps, ds.n, lam).to_dict()}
    n_low = _n_low(ds.n, args.fraction)
    n_high = ds.n - n_low
    lam_high = args.lambda_high if args.lambda_high is not None else lam
    out = {"n_low": n_low, "n_high": n_high,
           "high": plr_params(eps, n_high, lam_high).to_dict()}
    if args.method == "pst-s":
        smallest = n_low // args.k
        out["low_smallest_part"] = {"n": smallest, **plr_params(eps, smallest, lam).to_dict()}
        return out
    out["q"] = partition.weights
    out["group_sizes"] = partition.sizes
    out["low"] = pstf_params(eps, n_low, [lam] * partition.K, partition.weights).to_dict()
    if args.method == "pst-h":
        out["source"] = [plr_params(args.eps_src, src.n, args.lambda_src).to_dict()]
    return out


def _diagnostics(model):
    kind = model_kind(model)
    if kind == "plr":
        return {"iterations": model.iterations, "residual": model.residual}
    target = model.target if kind == "pst-h" else model
    out = {
        "low_iterations": [m.iterations for m in target.low_models],
        "low_residuals": [m.residual for m in target.low_models],
        "high_iterations": target.high_model.iterations,
        "high_residual": target.high_model.residual,
    }
    if kind == "pst-h":
        out["source_iterations"] = [m.iterations for m in model.source_models]
        out["source_residuals"] = [m.residual for m in model.source_models]
    return out


def cmd_train(args):
    ds = _load(args.data, args.format, args.dim)
    root = np.random.SeedSequence(args.seed)
    split_ss, part_ss, train_ss = root.spawn(3)
    test = None
    if args.test_fraction:
        if not 0 < args.test_fraction < 1:
            raise UsageError("--test-fraction must lie in (0, 1)")
        ds, _, test = train_valid_test_split(
            ds, (1 - args.test_fraction, 0, args.test_fraction), np.random.default_rng(split_ss))

    src = None
    partition = None
    if args.method in ("pst-f-u", "pst-f-w", "pst-h"):
        if args.k is None:
            raise UsageError(f"--k is required for {args.method}")
        if args.method == "pst-f-u":
            partition = feature_partition(ds.d, args.k, "uniform", rng=np.random.default_rng(part_ss))
        else:
            partition = feature_partition(ds.d, args.k, "sorted", _importance(args, ds))
    elif args.method == "pst-s" and args.k is None:
        raise UsageError("--k is required for pst-s")
    if args.method == "pst-h":
        if args.source_data is None:
            raise UsageError("--source-data is required for pst-h")
        src = _load(args.source_data, args.format, args.dim or ds.d)
        if src.d != ds.d:
            raise ShapeError(f"source data has {src.d} features, target has {ds.d}")
        if args.eps_src is None:
            args.eps_src = args.epsilon
    elif args.source_data is not None or args.eps_src is not None:
        raise UsageError("--source-data/--eps-src only apply to pst-h")

    config = {k: v for k, v in vars(args).items() if k != "func"}
    derived = _derived(args, ds, partition, src)
    _echo("effective config", {"config": config, "derived": derived})

    rng = np.random.default_rng(train_ss)
    if args.method == "plr":
        model = train_plr(ds, args.epsilon, args.lam, rng=rng)
    elif args.method == "pst-s":
        model = train_pst_s(ds, args.epsilon, args.k, args.lam, args.lambda_high, rng, fraction=args.fraction)
    elif args.method in ("pst-f-u", "pst-f-w"):
        model = train_pst_f(ds, args.epsilon, partition, args.lam, args.lambda_high, rng,
                            fraction=args.fraction)
    else:
        src_rng, tgt_rng = rng.spawn(2)
        source = train_source_models(src, args.eps_src, partition, args.lambda_src, src_rng)
        model = train_pst_h(None, ds, args.eps_src, args.epsilon, partition, args.lambda_src, args.lam,
                            args.lambda_high, tgt_rng, fraction=args.fraction, source_models=source)
    save_model(model, args.out)

    report = {"model": str(args.out), "kind": model_kind(model), "derived": derived,
              "diagnostics": _diagnostics(model)}
    if test is not None:
        report["test_n"] = test.n
        report["test_auc"] = bench.auc(predict(model, test.X), test.y)
        if args.test_out:
            save_dataset(test, args.test_out)
            report["test_data"] = str(args.test_out)
    _echo("training report", report)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(_jsonable(report), fh, indent=2)
    return EXIT_OK


# ------------------------------------------------------------- predict / eval

def _scores(args):
    model = load_model(args.model)
    ds = _load(args.data, args.format, args.dim)
    if ds.d != model.d:
        raise ShapeError(f"model expects {model.d} features, data has {ds.d}")
    if args.combiner != "hl" and model_kind(model) == "plr":
        raise UsageError(f"--combiner {args.combiner} requires a stacked model")
    if args.combiner == "wmv" and model_kind(model) == "pst-s":
        raise UsageError("--combiner wmv requires a feature-partitioned model")
    return model, ds, np.atleast_1d(predict(model, ds.X, args.combiner))


def cmd_predict(args):
    _echo("effective config", {k: v for k, v in vars(args).items() if k != "func"})
    _, _, scores = _scores(args)
    with open(args.out, "w") as fh:
        for s in scores:
            fh.write(f"{float(s)!r}\n")
    return EXIT_OK


def cmd_eval(args):
    _echo("effective config", {k: v for k, v in vars(args).items() if k != "func"})
    _, ds, scores = _scores(args)
    result = {"n": ds.n, "combiner": args.combiner, "auc": bench.auc(scores, ds.y)}
    _echo("evaluation", result)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result, fh, indent=2)
    return EXIT_OK


# ---------------------------------------------------------------------- bench

def packaged_configs():
    return sorted(p.name for p in resources.files("dpstack").joinpath("configs").iterdir()
                  if p.name.endswith(".json"))


def _config_path(name):
    p = Path(name)
    if p.exists():
        return p
    packaged = resources.files("dpstack").joinpath("configs", name if name.endswith(".json") else name + ".json")
    if packaged.is_file():
        return Path(str(packaged))
    raise UsageError(f"no config file {name!r}; packaged configs: {', '.join(packaged_configs())}")


def _bench_config(args):
    if args.config is not None:
        path = _config_path(args.config)
        with open(path) as fh:
            doc = json.load(fh)
        base_dir = path.parent
    else:
        doc, base_dir = {}, Path.cwd()
    overrides = {"methods": args.methods, "epsilons": args.epsilons, "ks": args.ks, "alphas": args.alphas,
                 "lambdas": args.lambdas, "seeds": args.seeds, "master_seed": args.seed}
    for k, v in overrides.items():
        if v is not None:
            doc[k] = v
    if args.dataset is not None:
        doc["dataset"] = {"path": str(Path(args.dataset).resolve()), "format": args.format, "dim": args.dim}
    try:
        return bench.ExperimentConfig.from_dict(doc), base_dir
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment config: {exc}") from exc


def _bench_derived(cfg, prep):
    n_train = int(math.floor(cfg.fractions[0] * prep.data.n + 0.5))
    table = []
    for e in cfg.epsilons:
        for lam in cfg.lambdas:
            try:
                p = plr_params(e, n_train, lam)
                table.append({"epsilon": e, "lambda": lam, "eps_prime": p.eps_prime, "delta": p.delta})
            except BudgetRejected as exc:
                table.append({"epsilon": e, "lambda": lam, "rejected": str(exc)})
    out = {"n": prep.data.n, "d": prep.data.d, "n_train": n_train, "plr_on_train_split": table}
    if prep.importance is not None and any(m in ("PST-F-W", "PST-H") for m in cfg.methods):
        out["q"] = {k: feature_partition(prep.data.d, k, "sorted", prep.importance).weights for k in cfg.ks}
    return out


def _write_bound_report(out_dir, stream=None):
    rep = theory.bound_report([100], [1, 2, 5, 10, 25], ["uniform"], 0.1, 1.0, 0.05)
    (out_dir / "bound_report.csv").write_text(rep.to_csv())
    (out_dir / "bound_report.txt").write_text(rep.to_text())
    print(rep.to_text(), file=stream or sys.stdout)


def cmd_bench(args):
    cfg, base_dir = _bench_config(args)
    prep = bench.prepare_data(cfg, base_dir)
    _echo("effective config", {"config": cfg.to_dict(), "derived": _bench_derived(cfg, prep),
                               "jobs": args.jobs, "out": str(args.out)})
    out_dir = Path(args.out)
    result = bench.run_experiment(cfg, out_dir, jobs=args.jobs, base_dir=base_dir, prep=prep)
    summary = result.summary()
    for c in summary["cells"]:
        print(f"{c['method']:<22} eps={c['epsilon']!s:<6} k={c['k']:<3} alpha={c['alpha']!s:<5} "
              f"auc={c['mean']:.4f} +- {c['std']:.4f} (n={c['n']})")
    if result.failures:
        print(f"{len(result.failures)} cell(s) failed; see {out_dir / 'failures.csv'}", file=sys.stderr)
    if args.plot:
        from .plotting import read_plot_data, render

        fig = render(read_plot_data(out_dir / "plot_data.csv"), out_dir / "plot.png", cfg.x_axis, cfg.name)
        print(f"figure written to {fig}")
    if args.bound_report:
        _write_bound_report(out_dir)
    if not result.rows:
        print("every cell failed", file=sys.stderr)
        return EXIT_SWEEP
    return EXIT_OK


# ----------------------------------------------------------- audit and extras

def cmd_noise_audit(args):
    _echo("effective config", {k: v for k, v in vars(args).items() if k != "func"})
    audit = noise_audit(args.d, args.eps_rate, args.draws, np.random.default_rng(args.seed))
    _echo("noise audit", audit)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(audit, fh, indent=2)
    return EXIT_OK


def cmd_synth(args):
    if args.spec is not None:
        spec = load_synth_spec(args.spec)
    else:
        spec = SynthSpec()
    if args.n is not None or args.d is not None:
        doc = spec.to_dict()
        doc.update({k: v for k, v in (("n", args.n), ("d", args.d)) if v is not None})
        spec = SynthSpec.from_dict(doc)
    _echo("effective config", {"spec": spec.to_dict(), "seed": args.seed, "out": args.out})
    ds, importance = synth_generate(spec, np.random.default_rng(args.seed))
    save_dataset(ds, args.out)
    if args.importance_out:
        save_importance(importance, args.importance_out)
    print(f"wrote {ds.n} x {ds.d} samples to {args.out}")
    return EXIT_OK


def cmd_bound_report(args):
    _echo("effective config", {k: v for k, v in vars(args).items() if k != "func"})
    try:
        rep = theory.bound_report(args.d, args.k, args.q_schemes, args.eps_g, args.epsilon, args.delta,
                                  v_norm=args.v_norm)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(rep.to_text())
    if args.out:
        Path(args.out).write_text(rep.to_csv())
    return EXIT_OK


# --------------------------------------------------------------------- parser

def _data_flags(p, required=True):
    p.add_argument("--data", required=required, help="dataset file (label in the first column)")
    p.add_argument("--format", choices=("csv", "sparse"), default="csv", help="dataset format (default csv)")
    p.add_argument("--dim", type=int, help="feature count for sparse files")


def build_parser():
    parser = argparse.ArgumentParser(prog="dpstack", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a private model and write it as JSON")
    p.add_argument("--method", required=True, choices=("plr", "pst-s", "pst-f-u", "pst-f-w", "pst-h"))
    p.add_argument("--epsilon", required=True, type=_positive_float, help="privacy budget (inf: no noise)")
    p.add_argument("--lambda", dest="lam", type=_positive_float, default=0.01,
                   help="regularization weight (default 0.01)")
    p.add_argument("--lambda-high", type=_positive_float, help="high-level weight (default: --lambda)")
    p.add_argument("--k", type=int, help="number of partitions (stacked methods)")
    p.add_argument("--fraction", type=float, default=0.5, help="share of samples for low-level models")
    p.add_argument("--importance-file", help="CSV feature_index,score (pst-f-w, pst-h)")
    p.add_argument("--alpha", type=_positive_float, help="alpha-power importance (pst-f-w, pst-h)")
    p.add_argument("--pca-importance", action="store_true",
                   help="use per-feature variance of PCA-coordinate inputs as importance")
    p.add_argument("--source-data", help="source-domain dataset (pst-h)")
    p.add_argument("--eps-src", type=_positive_float, help="source budget (pst-h, default --epsilon)")
    p.add_argument("--lambda-src", type=_positive_float, default=1e-3, help="source weight (default 1e-3)")
    _data_flags(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--test-fraction", type=float, help="hold out this share for a test AUC")
    p.add_argument("--test-out", help="write the held-out split here")
    p.add_argument("--report", help="write the training report JSON here")
    p.set_defaults(func=cmd_train)

    for name, fn, helptext in (("predict", cmd_predict, "score a dataset with a saved model"),
                               ("eval", cmd_eval, "AUC of a saved model on a labelled dataset")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True, help="model JSON")
        _data_flags(p)
        p.add_argument("--out", required=(name == "predict"),
                       help="scores file, one per line" if name == "predict" else "result JSON")
        p.add_argument("--combiner", choices=("hl", "mv", "wmv"), default="hl",
                       help="hl: high-level model, mv: majority vote, wmv: importance-weighted vote")
        p.set_defaults(func=fn)

    p = sub.add_parser("bench", help="run a seeded sweep from a JSON config")
    p.add_argument("--config", help="config path or packaged name (%s)" % ", ".join(packaged_configs()))
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--seeds", type=_int_list, help="comma-separated seeds, e.g. 0,1,2")
    p.add_argument("--methods", type=lambda s: s.split(","), help="comma-separated methods")
    p.add_argument("--epsilons", type=_float_list, help="comma-separated budgets (inf allowed)")
    p.add_argument("--ks", type=_int_list, help="comma-separated K values")
    p.add_argument("--alphas", type=_float_list, help="comma-separated alpha values")
    p.add_argument("--lambdas", type=_float_list, help="comma-separated lambda grid")
    p.add_argument("--dataset", help="dataset file replacing the config's dataset")
    p.add_argument("--format", choices=("csv", "sparse"), default="csv")
    p.add_argument("--dim", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plot", action="store_true", help="also render plot.png from the plot data")
    p.add_argument("--bound-report", action="store_true", help="also write the sample-size bound report")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("noise-audit", help="check the noise sampler against its Gamma law")
    p.add_argument("--d", required=True, type=int, help="noise dimension")
    p.add_argument("--eps-rate", required=True, type=_positive_float, help="density rate eps'")
    p.add_argument("--draws", type=int, default=10_000, help="number of draws (default 10000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="audit JSON path")
    p.set_defaults(func=cmd_noise_audit)

    p = sub.add_parser("synth", help="write a synthetic heterogeneous-importance dataset")
    p.add_argument("--spec", help="synthetic spec JSON (default: built-in benchmark spec)")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--importance-out", help="ground-truth importance CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bound-report", help="compare the single-model and partitioned sample-size bounds")
    p.add_argument("--d", type=_int_list, default=[100], help="comma-separated dimensions")
    p.add_argument("--k", type=_int_list, default=[1, 2, 5, 10, 25], help="comma-separated K values")
    p.add_argument("--q-schemes", type=lambda s: s.split(";"), default=["uniform"],
                   help="';'-separated schemes: uniform, alpha=<a>")
    p.add_argument("--eps-g", type=_positive_float, default=0.1)
    p.add_argument("--epsilon", type=_positive_float, default=1.0)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--v-norm", type=_positive_float, default=1.0)
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_bound_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dpstack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetRejected as exc:
        print(f"dpstack: budget rejected: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ShapeError as exc:
        print(f"dpstack: shape mismatch: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except ValueError as exc:
        print(f"dpstack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
