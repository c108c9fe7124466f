"""AUC evaluation, validation tuning and seeded multi-method sweeps.

A sweep is the cross product methods x epsilons x Ks x alphas x seeds. For
each cell the regularization weight is picked on the validation split and
the chosen model is scored on the test split. Seeds fix the data split, so
rows with the same seed are paired across methods.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import math
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .data import LabeledDataset, SynthSpec, load_dataset, pca_reduce, synth_generate, train_valid_test_split
from .mechanism import BudgetRejected
from .partition import alpha_importance, feature_partition, load_importance
from .plr import predict_linear, train_plr
from .stacking import low_level_scores, predict_stacked, train_pst_f, train_pst_s
from .transfer import predict_transfer, train_pst_h, train_source_models

logger = logging.getLogger(__name__)

METHODS = ("PLR", "PST-S", "PST-F-U", "PST-F-W", "PST-H", "PST-H-U")
DEFAULT_LAMBDAS = tuple(float(x) for x in np.logspace(-4, 2, 7))
RESULT_COLUMNS = ("method", "epsilon", "k", "alpha", "seed", "lambda", "auc")


def auc(scores, labels):
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Ties count one half. ``labels`` are +-1 (0/1 also accepted).
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    ranks = stats.rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclasses.dataclass(frozen=True)
class TuneResult:
    lam: float
    model: object
    valid_auc: float
    scores: dict
    rejected: dict


def select_lambda(trainer: Callable, grid: Sequence[float], d_train, d_valid,
                  scorer: Optional[Callable] = None) -> TuneResult:
    """Fit ``trainer(d_train, lam)`` for every grid value, keep the best on ``d_valid``.

    ``scorer(model, X)`` turns a model into scores (default: ``model(X)``).
    Ties go to the smallest lambda. Grid points rejected by the budget
    arithmetic are skipped.
    """
    if len(grid) == 0:
        raise ValueError("lambda grid is empty")
    scorer = scorer or (lambda m, X: m(X))
    best = None
    scores, rejected = {}, {}
    for lam in sorted(float(x) for x in grid):
        try:
            model = trainer(d_train, lam)
        except BudgetRejected as exc:
            rejected[lam] = str(exc)
            continue
        a = auc(scorer(model, d_valid.X), d_valid.y)
        scores[lam] = a
        if best is None or a > best[2]:
            best = (lam, model, a)
    if best is None:
        raise BudgetRejected("every lambda was rejected: " + "; ".join(f"{k}: {v}" for k, v in rejected.items()))
    return TuneResult(best[0], best[1], best[2], scores, rejected)


def tune_lambda(trainer, grid, d_train, d_valid, scorer=None):
    """The grid value with the highest validation AUC."""
    return select_lambda(trainer, grid, d_train, d_valid, scorer).lam


@dataclasses.dataclass(frozen=True)
class PairedComparison:
    mean_diff: float
    p_value: float
    n: int
    degenerate: bool
    test: str = "paired two-sided t-test"


def paired_test(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = a - b
    n = diff.size
    mean = float(diff.mean())
    if n < 2 or np.all(diff == diff[0]):
        # zero variance of the differences: t is undefined
        p = 1.0 if mean == 0 else 0.0
        return PairedComparison(mean, p, n, True)
    res = stats.ttest_rel(a, b)
    return PairedComparison(mean, float(res.pvalue), n, False)


def compare_methods(rows, method_a, method_b, **cell):
    """Paired t-test of per-seed AUCs of two methods.

    ``rows`` are result dicts; keyword filters (``epsilon=1.0``, ``k=5`` ...)
    restrict both methods to one cell of the sweep.
    """
    def pick(m):
        out = {}
        for r in rows:
            if r["method"] == m and all(_same(r[k], v) for k, v in cell.items()):
                if r["seed"] in out:
                    raise ValueError(f"seed {r['seed']} appears twice for {m}; add cell filters")
                out[r["seed"]] = r["auc"]
        return out

    ra, rb = pick(method_a), pick(method_b)
    if set(ra) != set(rb) or not ra:
        raise ValueError(f"seed sets differ between {method_a} and {method_b}")
    seeds = sorted(ra)
    return paired_test([ra[s] for s in seeds], [rb[s] for s in seeds])


def _same(a, b):
    if isinstance(a, float) or isinstance(b, float):
        if a is None or b is None:
            return a is b
        return float(a) == float(b)
    return a == b


def _eps(x):
    if x is None or (isinstance(x, str) and x.lower() in ("inf", "infinity")):
        return math.inf
    return float(x)


@dataclasses.dataclass
class ExperimentConfig:
    """One sweep; see ``configs/*.json`` for complete examples."""

    name: str = "experiment"
    methods: Sequence[str] = ("PLR",)
    epsilons: Sequence[float] = (1.0,)
    ks: Sequence[int] = (5,)
    alphas: Sequence[Optional[float]] = (None,)
    lambdas: Sequence[float] = DEFAULT_LAMBDAS
    lambda_high: Optional[float] = None
    seeds: Sequence[int] = tuple(range(10))
    master_seed: int = 0
    fractions: Sequence[float] = (0.4, 0.2, 0.4)
    stack_fraction: float = 0.5
    dataset: dict = dataclasses.field(default_factory=lambda: {"synthetic": {}, "seed": 0})
    source_dataset: Optional[dict] = None
    eps_src: Optional[float] = None
    lambda_src: float = 1e-3
    pca_dims: Optional[int] = None
    importance: str = "ground_truth"
    importance_file: Optional[str] = None
    combiners: Sequence[str] = ("hl",)
    report_low_models: bool = False
    x_axis: str = "epsilon"

    def __post_init__(self):
        self.epsilons = [_eps(e) for e in self.epsilons]
        self.alphas = [None if a is None else float(a) for a in self.alphas]
        self.ks = [int(k) for k in self.ks]
        self.seeds = [int(s) for s in self.seeds]
        self.lambdas = [float(x) for x in self.lambdas]
        for name in ("methods", "epsilons", "ks", "alphas", "lambdas", "seeds"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"config field {name!r} is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if self.importance not in ("ground_truth", "pca", "variance", "file", "alpha"):
            raise ValueError(f"unknown importance source {self.importance!r}")
        if self.importance == "alpha" and any(a is None for a in self.alphas):
            raise ValueError("importance 'alpha' needs numeric alphas")
        if self.importance == "pca" and not self.pca_dims:
            raise ValueError("importance 'pca' needs pca_dims")
        if self.x_axis not in ("epsilon", "k", "alpha", "method"):
            raise ValueError(f"unknown x_axis {self.x_axis!r}")

    @classmethod
    def from_dict(cls, doc):
        fields = {f.name for f in dataclasses.fields(cls)}
        extra = set(doc) - fields
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        doc = dataclasses.asdict(self)
        doc["epsilons"] = ["inf" if math.isinf(e) else e for e in self.epsilons]
        return doc


def _load_source(spec, base_dir=None):
    """Materialise a dataset entry of a config. Returns (dataset, importance or None)."""
    if "synthetic" in spec:
        synth = SynthSpec.from_dict(spec["synthetic"])
        ds, imp = synth_generate(synth, np.random.default_rng(spec.get("seed", 0)))
        return ds, imp
    path = Path(spec["path"])
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return load_dataset(path, spec.get("format", "csv"), spec.get("dim")), None


@dataclasses.dataclass
class PreparedData:
    data: LabeledDataset
    importance: Optional[np.ndarray]
    source: Optional[LabeledDataset] = None


def prepare_data(cfg: ExperimentConfig, base_dir=None) -> PreparedData:
    ds, gt = _load_source(cfg.dataset, base_dir)
    src = None
    if cfg.source_dataset is not None:
        src, _ = _load_source(cfg.source_dataset, base_dir)
    if cfg.pca_dims:
        if cfg.importance == "ground_truth":
            raise ValueError("ground-truth importance refers to raw features; drop pca_dims")
        pca = pca_reduce(ds, cfg.pca_dims)
        ds = pca.dataset
        if src is not None:
            src = LabeledDataset(pca.transform(src.X), src.y)
        imp = pca.variances
    else:
        imp = None
    if cfg.importance == "ground_truth":
        if gt is None:
            raise ValueError("ground-truth importance is only available for synthetic data")
        imp = gt
    elif cfg.importance == "variance":
        imp = ds.X.var(axis=0, ddof=1)
    elif cfg.importance == "file":
        if cfg.importance_file is None:
            raise ValueError("importance 'file' needs importance_file")
        path = Path(cfg.importance_file)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        imp = load_importance(path, ds.d)
    elif cfg.importance == "alpha":
        imp = None
    return PreparedData(ds, imp, src)


@dataclasses.dataclass(frozen=True)
class Cell:
    method: str
    epsilon: float
    k: int
    alpha: Optional[float]
    seed: int


def cell_seed(master_seed, cell: Cell):
    """Deterministic stream seed for one cell, independent of sweep order."""
    key = f"{cell.method}|{cell.epsilon!r}|{cell.k}|{cell.alpha!r}|{cell.seed}".encode()
    h = int.from_bytes(hashlib.sha256(key).digest()[:8], "little")
    return np.random.SeedSequence([master_seed, h])


def split_seed(master_seed, seed):
    return np.random.SeedSequence([master_seed, seed, 0x5EED])


def _importance_for(cfg, prep, d, alpha):
    if cfg.importance == "alpha":
        return alpha_importance(d, alpha)
    return prep.importance


def _trainer_for(cfg, prep, cell, d_train, ss):
    """(trainer(d, lam), scorer(model, X, combiner)) for one cell."""
    eps = cell.epsilon
    lam_high = cfg.lambda_high
    frac = cfg.stack_fraction
    train_ss, part_ss, src_ss = ss.spawn(3)

    def fresh():
        # same stream for every lambda on the grid
        return np.random.default_rng(train_ss)

    if cell.method == "PLR":
        return (lambda d, lam: train_plr(d, eps, lam, rng=fresh()),
                lambda m, X, c="hl": predict_linear(m, X))
    if cell.method == "PST-S":
        return (lambda d, lam: train_pst_s(d, eps, cell.k, lam, lam_high, fresh(), fraction=frac),
                lambda m, X, c="hl": predict_stacked(m, X, c))
    if cell.method in ("PST-F-U", "PST-H-U"):
        part = feature_partition(d_train.d, cell.k, "uniform", rng=np.random.default_rng(part_ss))
    else:
        v = _importance_for(cfg, prep, d_train.d, cell.alpha)
        if v is None:
            raise ValueError(f"{cell.method} needs an importance source")
        part = feature_partition(d_train.d, cell.k, "sorted", v)
    if cell.method in ("PST-F-U", "PST-F-W"):
        return (lambda d, lam: train_pst_f(d, eps, part, lam, lam_high, fresh(), fraction=frac),
                lambda m, X, c="hl": predict_stacked(m, X, c))
    if prep.source is None:
        raise ValueError("PST-H needs a source_dataset")
    eps_src = cfg.eps_src if cfg.eps_src is not None else eps
    src_models = train_source_models(prep.source, eps_src, part, cfg.lambda_src,
                                     np.random.default_rng(src_ss))
    return (lambda d, lam: train_pst_h(None, d, eps_src, eps, part, cfg.lambda_src, lam, lam_high,
                                       fresh(), fraction=frac, source_models=src_models),
            lambda m, X, c="hl": predict_transfer(m, X, c))


def run_cell(cfg: ExperimentConfig, prep: PreparedData, cell: Cell):
    """Rows for one cell (several when extra combiners or low models are reported)."""
    d_train, d_valid, d_test = train_valid_test_split(
        prep.data, cfg.fractions, np.random.default_rng(split_seed(cfg.master_seed, cell.seed)))
    if d_valid is None or d_test is None:
        raise ValueError("sweeps need non-empty validation and test splits")
    ss = cell_seed(cfg.master_seed, cell)
    trainer, scorer = _trainer_for(cfg, prep, cell, d_train, ss)
    tuned = select_lambda(trainer, cfg.lambdas, d_train, d_valid, lambda m, X: scorer(m, X, "hl"))
    base = {"epsilon": cell.epsilon, "k": cell.k, "alpha": cell.alpha, "seed": cell.seed,
            "lambda": tuned.lam}
    stacked = cell.method != "PLR"
    rows = []
    for comb in cfg.combiners:
        if comb == "wmv" and cell.method == "PST-S":
            continue
        if comb != "hl" and not stacked:
            continue
        label = cell.method if comb == "hl" and len(cfg.combiners) == 1 else f"{cell.method}/C-{comb}"
        rows.append({"method": label, **base, "auc": auc(scorer(tuned.model, d_test.X, comb), d_test.y)})
    if cfg.report_low_models and stacked:
        target = tuned.model.target if hasattr(tuned.model, "target") else tuned.model
        S = low_level_scores(target.low_models, d_test.X, target.partition)
        for k in range(S.shape[1]):
            rows.append({"method": f"{cell.method}/C-{k}", **base, "auc": auc(S[:, k], d_test.y)})
    return rows


def cells_of(cfg):
    for m, e, k, a, s in itertools.product(cfg.methods, cfg.epsilons, cfg.ks, cfg.alphas, cfg.seeds):
        if m == "PLR" and len(cfg.ks) > 1 and k != cfg.ks[0]:
            continue  # K does not affect PLR
        yield Cell(m, e, k, a, s)


_WORKER = {}


def _init_worker(cfg, prep):
    _WORKER["cfg"] = cfg
    _WORKER["prep"] = prep


def _safe_cell(cell, cfg=None, prep=None):
    cfg = cfg or _WORKER["cfg"]
    prep = prep or _WORKER["prep"]
    try:
        return cell, run_cell(cfg, prep, cell), None
    except Exception as exc:  # recorded per cell; the sweep continues
        logger.warning("cell %s failed: %s", cell, exc)
        return cell, [], f"{type(exc).__name__}: {exc}"


@dataclasses.dataclass
class ExperimentResult:
    rows: list
    failures: list
    config: ExperimentConfig

    def summary(self):
        return summarize(self.rows, self.config)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs=1, base_dir=None, prep=None):
    """Execute every cell; stream rows to ``out_dir/results.csv`` as they finish."""
    prep = prep or prepare_data(cfg, base_dir)
    cells = list(cells_of(cfg))
    rows, failures = [], []
    fh = writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        fh = open(out_dir / "results.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
    try:
        if jobs > 1:
            pool = concurrent.futures.ProcessPoolExecutor(jobs, initializer=_init_worker,
                                                          initargs=(cfg, prep))
            results = pool.map(_safe_cell, cells)
        else:
            pool = None
            results = (_safe_cell(c, cfg, prep) for c in cells)
        for cell, cell_rows, err in results:
            if err is not None:
                failures.append({**dataclasses.asdict(cell), "error": err})
            for r in cell_rows:
                rows.append(r)
                if writer is not None:
                    writer.writerow([_fmt(r[c]) for c in RESULT_COLUMNS])
            if fh is not None:
                fh.flush()
        if pool is not None:
            pool.shutdown()
    finally:
        if fh is not None:
            fh.close()
    result = ExperimentResult(rows, failures, cfg)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _cell_key(r):
    return (r["method"], r["epsilon"], r["k"], r["alpha"])


def summarize(rows, cfg=None):
    groups = {}
    for r in rows:
        groups.setdefault(_cell_key(r), []).append(r)
    cells = []
    for (m, e, k, a), rs in groups.items():
        aucs = np.array([r["auc"] for r in rs])
        cells.append({
            "method": m, "epsilon": _fmt(e) if math.isinf(e) else e, "k": k, "alpha": a,
            "n": int(aucs.size), "mean": float(aucs.mean()),
            "std": float(aucs.std(ddof=1)) if aucs.size > 1 else 0.0,
        })
    comparisons = []
    by_setting = {}
    for (m, e, k, a) in groups:
        by_setting.setdefault((e, k, a), []).append(m)
    for (e, k, a), methods in by_setting.items():
        for ma, mb in itertools.combinations(methods, 2):
            sa = {r["seed"]: r["auc"] for r in groups[(ma, e, k, a)]}
            sb = {r["seed"]: r["auc"] for r in groups[(mb, e, k, a)]}
            if set(sa) != set(sb) or len(sa) < 2:
                continue
            seeds = sorted(sa)
            c = paired_test([sa[s] for s in seeds], [sb[s] for s in seeds])
            comparisons.append({
                "epsilon": _fmt(e) if math.isinf(e) else e, "k": k, "alpha": a,
                "method_a": ma, "method_b": mb, "mean_diff": c.mean_diff,
                "p_value": c.p_value, "degenerate": c.degenerate, "n": c.n,
            })
    return {"test": "paired two-sided t-test on per-seed AUC", "cells": cells,
            "comparisons": comparisons}


def plot_data(rows, x_axis):
    """(x, method, mean, std) records for one figure."""
    out = []
    for c in summarize(rows)["cells"]:
        if x_axis == "method":
            x = c["method"]
        else:
            x = c[x_axis]
        out.append({"x": x, "method": c["method"], "mean": c["mean"], "std": c["std"]})
    return out


def write_outputs(result: ExperimentResult, out_dir):
    out_dir = Path(out_dir)
    summary = result.summary()
    summary["config"] = result.config.to_dict()
    summary["failures"] = result.failures
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    with open(out_dir / "plot_data.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "method", "mean", "std"])
        for r in plot_data(result.rows, result.config.x_axis):
            w.writerow([_fmt(r["x"]), r["method"], repr(r["mean"]), repr(r["std"])])
    if result.failures:
        with open(out_dir / "failures.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "epsilon", "k", "alpha", "seed", "error"])
            for f in result.failures:
                w.writerow([f["method"], _fmt(f["epsilon"]), f["k"], _fmt(f["alpha"]), f["seed"], f["error"]])


def read_results(path):
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({
                "method": r["method"], "epsilon": _eps(r["epsilon"]), "k": int(r["k"]),
                "alpha": float(r["alpha"]) if r["alpha"] else None, "seed": int(r["seed"]),
                "lambda": float(r["lambda"]), "auc": float(r["auc"]),
            })
    return rows
