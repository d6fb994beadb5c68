"""``graphnorm`` command line: simulate, train, evaluate, compare.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, plots
from ._validation import InvalidGraphError
from .config import ConfigError, RunConfig
from .evaluation import baseline_template, centeredness_score, classification_protocol, top_k
from .gnn import save_checkpoint
from .netdata import (
    DatasetError,
    FoldAssignment,
    load_dataset,
    read_matrix_csv,
    save_dataset,
    simulate_population,
    split_folds,
    write_matrix_csv,
)
from .topology import MEASURES, ground_truth_profile, profile, topology_divergence
from .trainer import TrainConfig, run_cv, train_fold

logger = logging.getLogger("graphnorm")

LOG_COLUMNS = ("epoch", "train_loss", "test_loss", "train_centeredness", "train_kl", "elapsed_ms")


class UsageError(Exception):
    """Bad flags, configs or inputs; maps to exit code 2."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _load_config(path) -> RunConfig:
    return RunConfig.load(path) if path else RunConfig()


def _load_data(path) -> "Population":
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"dataset directory not found: {p}")
    try:
        return load_dataset(p)
    except (DatasetError, InvalidGraphError) as exc:
        raise UsageError(str(exc)) from None


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> None:
    cfg = _load_config(args.spec).override(seed=args.seed)
    population = simulate_population(cfg.synthetic_spec())
    save_dataset(population, _out_dir(args.out))
    logger.info("wrote %d subjects to %s", len(population), args.out)


# -- train --------------------------------------------------------------------

def _method_name(beta: float) -> str:
    return "DGN" if beta == 0 else "MGN-Net"


def cmd_train(args) -> None:
    cfg = _load_config(args.config).override(beta=args.beta, jobs=args.jobs, seed=args.seed, max_epochs=args.max_epochs, k_folds=args.folds)
    population = _load_data(args.data)
    train_cfg = cfg.train_config(population.n_v)
    if cfg.k_folds > len(population):
        raise UsageError(f"k_folds={cfg.k_folds} exceeds {len(population)} subjects")
    out = _out_dir(args.out)
    folds = split_folds(population, cfg.k_folds, train_cfg.seed)
    report = run_cv(population, cfg.k_folds, train_cfg, jobs=cfg.jobs, folds=folds)
    ids = population.subject_ids
    _write_json(out / "folds.json", {
        "k": folds.k,
        "folds": [{"train": [ids[i] for i in folds.train_indices(f)], "test": [ids[i] for i in folds.test_indices(f)]} for f in range(folds.k)],
    })
    for f, result in enumerate(report.results):
        write_matrix_csv(out / f"template_fold{f}.csv", result.refined_template)
        save_checkpoint(result.model, out / f"checkpoint_fold{f}.json")
        rows = [[r.epoch, _fmt(r.train_loss), _fmt(r.test_loss), _fmt(r.train_centeredness), _fmt(r.train_kl), f"{r.elapsed_ms:.3f}"] for r in result.history]
        _write_csv(out / f"log_fold{f}.csv", LOG_COLUMNS, rows)
    _write_json(out / "run.json", {
        "method": _method_name(train_cfg.beta),
        "version": __version__,
        "config": asdict(train_cfg),
        "folds": [
            {
                "fold": f,
                "best_epoch": r.best_epoch,
                "stopped_epoch": r.stopped_epoch,
                "best_test_loss": _fmt(r.best_test_loss),
                "lambda": [_fmt(x) for x in r.lambdas],
                "test_centeredness": _fmt(c),
            }
            for f, (r, c) in enumerate(zip(report.results, report.centeredness))
        ],
        "mean_test_centeredness": _fmt(report.mean_centeredness),
    })
    logger.info("mean held-out centeredness %.6g", report.mean_centeredness)


# -- evaluate -----------------------------------------------------------------

def _read_templates(tdir: Path, population) -> tuple[str, list[np.ndarray], FoldAssignment | None]:
    if not tdir.is_dir():
        raise UsageError(f"templates directory not found: {tdir}")
    files = sorted(tdir.glob("template_fold*.csv"), key=lambda p: int(p.stem.removeprefix("template_fold")))
    if not files:
        raise UsageError(f"{tdir}: no template_fold*.csv files")
    templates = []
    for f in files:
        try:
            T = read_matrix_csv(f)
        except DatasetError as exc:
            raise UsageError(str(exc)) from None
        if T.shape != (population.n_r, population.n_r):
            raise UsageError(f"{f}: dimension mismatch, template is {T.shape[0]}x{T.shape[1]} but dataset has n_r={population.n_r}")
        templates.append(T)
    method = tdir.name
    run = tdir / "run.json"
    if run.is_file():
        method = json.loads(run.read_text()).get("method", method)
    folds = None
    folds_path = tdir / "folds.json"
    if folds_path.is_file():
        index = {sid: i for i, sid in enumerate(population.subject_ids)}
        spec = json.loads(folds_path.read_text())
        assignment = [-1] * len(population)
        for f, entry in enumerate(spec["folds"]):
            for sid in entry["test"]:
                if sid not in index:
                    raise UsageError(f"{folds_path}: subject {sid!r} not in dataset")
                assignment[index[sid]] = f
        folds = FoldAssignment(int(spec["k"]), tuple(assignment))
        if folds.k != len(templates):
            raise UsageError(f"{tdir}: {len(templates)} templates for {folds.k} folds")
    return method, templates, folds


def cmd_evaluate(args) -> None:
    cfg = RunConfig()
    if args.measures is not None:
        cfg = cfg.override(measures=args.measures)
    cfg.validate_evaluation()
    population = _load_data(args.data)
    methods: dict[str, list[np.ndarray]] = {}
    folds = None
    for tdir in args.templates:
        name, templates, f = _read_templates(Path(tdir), population)
        if name in methods:
            name = f"{name} ({Path(tdir).name})"
        if folds is None:
            folds = f
        elif f is not None and f != folds:
            raise UsageError(f"{tdir}: fold assignment differs from the other template sets")
        methods[name] = templates
    n_folds = len(next(iter(methods.values())))
    if any(len(t) != n_folds for t in methods.values()):
        raise UsageError("template sets have different fold counts")
    X = population.tensor()
    if folds is None:
        # no fold file: every template is scored on the whole population
        test_sets = [np.arange(len(population))] * n_folds
        train_sets = test_sets
    else:
        test_sets = [np.array(folds.test_indices(f)) for f in range(n_folds)]
        train_sets = [np.array(folds.train_indices(f)) for f in range(n_folds)]
    for base in ("mean", "median"):
        methods[base] = [baseline_template(X[tr], base) for tr in train_sets]

    out = _out_dir(args.out)
    names = list(methods)
    view_cols = [f"view_{v}" for v in range(population.n_v)]
    cent_rows, topo_rows = [], []
    overall = {m: [] for m in names}
    kls = {(m, meas): [] for m in names for meas in cfg.measures}
    for f in range(n_folds):
        test = X[test_sets[f]]
        for m in names:
            per_view, total = centeredness_score(methods[m][f], test)
            cent_rows.append([f, m, *[_fmt(x) for x in per_view], _fmt(total)])
            overall[m].append(total)
            for meas in cfg.measures:
                kl = topology_divergence(methods[m][f], test, meas)
                kls[(m, meas)].append(kl)
                topo_rows.append([f, meas, m, _fmt(kl)])
    _write_csv(out / "centeredness.csv", ["fold", "method", *view_cols, "overall"], cent_rows)
    _write_csv(out / "topology.csv", ["fold", "measure", "method", "kl"], topo_rows)

    groups = [f"fold {f}" for f in range(n_folds)] + ["mean"]
    series = {m: vals + [float(np.mean(vals))] for m, vals in overall.items()}
    plots.write(out / "centeredness.svg", plots.bar_chart(groups, series, "Distance to held-out views", "mean Frobenius distance"))
    kl_series = {m: [float(np.mean(kls[(m, meas)])) for meas in cfg.measures] for m in names}
    plots.write(out / "topology.svg", plots.bar_chart(list(cfg.measures), kl_series, "Topology KL to held-out population", "KL (bits)"))
    # node profiles on the first fold, population average against each template
    test0 = X[test_sets[0]]
    for meas in cfg.measures:
        lines = {"population": ground_truth_profile(test0, meas).tolist()}
        lines.update({m: profile(methods[m][0], meas).p.tolist() for m in names})
        plots.write(out / f"profile_{meas}.svg", plots.line_plot(lines, f"{meas} profile, fold 0", "node", "share"))


# -- compare ------------------------------------------------------------------

def _integrator(cfg: RunConfig, train_cfg: TrainConfig):
    if cfg.integrator in ("mean", "median"):
        return lambda X, fold: baseline_template(X, cfg.integrator)

    def mgn(X, fold):
        fold_cfg = TrainConfig(**{**asdict(train_cfg), "seed": train_cfg.seed + fold})
        # no held-out class data inside the protocol: monitor the training set
        return train_fold(X, X, fold_cfg).refined_template

    return mgn


def cmd_compare(args) -> None:
    cfg = _load_config(args.config).override(k_values=args.k, seed=args.seed, integrator=args.integrator, max_epochs=args.max_epochs, k_folds=args.folds)
    cfg.validate_evaluation()
    pop_a, pop_b = _load_data(args.data_a), _load_data(args.data_b)
    if (pop_a.n_r, pop_a.n_v) != (pop_b.n_r, pop_b.n_v):
        raise UsageError(f"incompatible populations: (n_r, n_v) = {(pop_a.n_r, pop_a.n_v)} vs {(pop_b.n_r, pop_b.n_v)}")
    n_edges = pop_a.n_r * (pop_a.n_r - 1) // 2
    if max(cfg.k_values) > n_edges:
        raise UsageError(f"k={max(cfg.k_values)} exceeds the {n_edges} available edges")
    train_cfg = cfg.train_config(pop_a.n_v)
    report = classification_protocol(
        pop_a, pop_b, _integrator(cfg, train_cfg), cfg.k_values, cfg.k_folds, train_cfg.seed, residual=cfg.residual
    )
    out = _out_dir(args.out)
    method = {"mgn": _method_name(train_cfg.beta), "mean": "mean", "median": "median"}[cfg.integrator]
    task = f"{pop_a.samples[0].label or 'A'} vs {pop_b.samples[0].label or 'B'}"
    rows = [[task, method, k, fold, _fmt(acc)] for fold, k, acc in report.rows()]
    _write_csv(out / "classification.csv", ["task", "method", "k", "fold", "accuracy"], rows)

    ranked = top_k(report.mean_scores(), max(cfg.k_values))
    _write_json(out / "selected_edges.json", {
        "method": method,
        "ranking": "mean discriminativeness over folds",
        "edges": [{"rank": r + 1, "i": i, "j": j, "score": _fmt(s)} for r, ((i, j), s) in enumerate(zip(ranked.edges, ranked.scores))],
        "per_fold": [{str(k): [list(e) for e in sel.edges] for k, sel in chosen.items()} for chosen in report.selections],
        "accuracy": {str(k): {"mean": _fmt(report.accuracy[:, c].mean()), "std": _fmt(report.accuracy[:, c].std())} for c, k in enumerate(report.k_values)},
    })
    top5 = min(5, ranked.k)
    plots.write(
        out / "top_edges.svg",
        plots.circular_plot(pop_a.n_r, ranked.edges[:top5], ranked.scores[:top5], f"Top {top5} discriminative edges"),
    )
    logger.info("mean accuracy %.3f", report.mean)


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphnorm", description="Multi-view graph templates: simulate, train, evaluate, compare.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--version", action="version", version=f"graphnorm {__version__}")
        p.add_argument("--seed", type=int, help="overrides the config seed and GRAPHNORM_SEED")
        return p

    p = add("simulate", "write a synthetic multi-view dataset")
    p.add_argument("--spec", help="JSON config with simulation fields")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = add("train", "cross-validated template training")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float, help="topology weight; 0 trains the DGN ablation")
    p.add_argument("--jobs", type=int, help="folds trained concurrently")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_train)

    p = add("evaluate", "score templates against held-out views")
    p.add_argument("--data", required=True)
    p.add_argument("--templates", required=True, action="append", help="output directory of `train`; repeatable")
    p.add_argument("--out", required=True)
    p.add_argument("--measures", type=_str_list, help=f"comma-separated subset of {','.join(MEASURES)}")
    p.set_defaults(func=cmd_evaluate)

    p = add("compare", "discriminative edge selection and classification")
    p.add_argument("--data-a", required=True)
    p.add_argument("--data-b", required=True)
    p.add_argument("--config")
    p.add_argument("--k", type=_int_list, help="comma-separated k values")
    p.add_argument("--out", required=True)
    p.add_argument("--integrator", choices=("mgn", "mean", "median"))
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"graphnorm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"graphnorm {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
