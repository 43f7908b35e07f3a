"""Command-line entry point.

Subcommands: generate, train, sample, intervene, experiment, sweep, bootstrap.
Every stochastic command requires an explicit --seed (there is no wall-clock
default), flags override values from an optional JSON --config file, and each
run writes a manifest (the fully resolved configuration plus the numerical
constants baked into the estimators) next to its outputs, sufficient to replay
the run. Plot emission is data-only CSV.
"""

from __future__ import annotations

import argparse
import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import dgp as dg
from . import effects as fx
from . import evalx as ev
from . import experiments as xp
from . import graph as g
from . import heads as hd
from . import model as md
from .data import load_csv, save_csv, write_table
from .rngutil import child_seed, rng as _rng

CONSTANTS = {
    "sigma_floor": hd.SIGMA_FLOOR,
    "probability_clamp": hd.P_CLAMP,
    "rmsprop_rho": 0.99,
    "rmsprop_eps": 1e-8,
    "init": "uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))",
}


def _write_manifest(target: Path, command: str, config: dict) -> None:
    manifest = {
        "tool": "causal-nade",
        "version": __version__,
        "command": command,
        "config": config,
        "constants": CONSTANTS,
    }
    if target.suffix == "" or target.is_dir():
        target.mkdir(parents=True, exist_ok=True)
        path = target / "run_manifest.json"
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
        path = target.with_name(target.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _merge_config(args: argparse.Namespace, keys: list[str]) -> dict:
    """Resolved config: file values overridden by explicitly passed flags."""
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    resolved = {}
    for key in keys:
        flag = getattr(args, key.replace("-", "_"), None)
        resolved[key] = flag if flag is not None else file_cfg.get(key)
    return resolved


def _parse_hidden(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _train_config(cfg: dict, seed: int) -> md.TrainConfig:
    base = md.TrainConfig(seed=seed)
    return md.TrainConfig(
        seed=seed,
        epochs=cfg.get("epochs") or base.epochs,
        batch_size=cfg.get("batch-size") or base.batch_size,
        optimizer=cfg.get("optimizer") or base.optimizer,
        learning_rate=cfg.get("learning-rate") or base.learning_rate,
        activation=cfg.get("activation") or base.activation,
        hidden=_parse_hidden(cfg["hidden"]) if cfg.get("hidden") else base.hidden,
    )


# -- subcommand handlers -------------------------------------------------------


def _cmd_generate(args) -> int:
    cfg = _merge_config(args, ["experiment", "n", "seed", "out"])
    spec = dg.DgpSpec(cfg["experiment"], int(cfg["n"]), int(cfg["seed"]))
    ds = dg.generate(spec)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, out)
    _write_manifest(out, "generate", cfg)
    print(f"wrote {ds.n} rows to {out}")
    return 0


def _cmd_train(args) -> int:
    keys = ["data", "out", "seed", "experiment", "graph", "epochs", "batch-size",
            "optimizer", "learning-rate", "activation", "hidden",
            "aux-inputs", "aux-target", "aux-head"]
    cfg = _merge_config(args, keys)
    data = load_csv(cfg["data"])
    tc = _train_config(cfg, int(cfg["seed"]))
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    if cfg.get("aux-target"):
        inputs = [s.strip() for s in cfg["aux-inputs"].split(",") if s.strip()]
        head = hd.Head(cfg.get("aux-head") or "gaussian")
        aux, log = md.fit_auxiliary(data, inputs, cfg["aux-target"], head, tc)
        md.save_aux(aux, out)
    else:
        if cfg.get("graph"):
            dag = g.dag_from_dict(json.loads(Path(cfg["graph"]).read_text(encoding="utf-8")))
        elif cfg.get("experiment"):
            dag = dg.observed_dag(cfg["experiment"])
        else:
            raise ValueError("train needs either --graph or --experiment")
        model, log = md.train_model(dag, data, tc)
        md.save_model(model, out)
    cfg["final_nll"] = log[-1]
    _write_manifest(out, "train", cfg)
    print(f"final training NLL {log[-1]:.6f}; wrote {out}")
    return 0


def _parse_do(items) -> g.Intervention:
    assignments = {}
    for item in items or ():
        name, _, value = item.partition("=")
        if not name or not value:
            raise ValueError(f"bad --do assignment {item!r}; expected NAME=VALUE")
        assignments[name] = float(value)
    return g.Intervention(assignments)


def _cmd_sample(args) -> int:
    cfg = _merge_config(args, ["model", "n", "seed", "out", "do"])
    model = md.load_model(cfg["model"])
    iv = _parse_do(cfg.get("do"))
    ds = md.ancestral_sample(model, int(cfg["n"]), _rng(int(cfg["seed"])), iv)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, out)
    cfg["do"] = dict(iv.assignments)
    _write_manifest(out, "sample", cfg)
    print(f"wrote {ds.n} sampled rows to {out}")
    return 0


def _cmd_intervene(args) -> int:
    cfg = _merge_config(args, ["model", "treatment", "outcome", "x1", "x0",
                               "adjustment", "seed", "mc-outer", "mc-inner",
                               "aux", "out", "draws-out"])
    model = md.load_model(cfg["model"])
    aux = md.load_aux(cfg["aux"]) if cfg.get("aux") else None
    query = fx.EffectQuery(
        treatment=cfg["treatment"],
        outcome=cfg["outcome"],
        treatment_values=(float(cfg["x1"]), float(cfg["x0"])),
        adjustment=cfg.get("adjustment") or "backdoor-discrete",
        mc_outer=int(cfg.get("mc-outer") or 1000),
        mc_inner=int(cfg.get("mc-inner") or 64),
        seed=int(cfg["seed"]),
    )
    estimate = fx.ate(model, query, aux)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_table(out, ("treatment", "outcome", "x1", "x0", "adjustment", "ate"),
                [(query.treatment, query.outcome, query.treatment_values[0],
                  query.treatment_values[1], query.adjustment, estimate.point)])
    if cfg.get("draws-out") and estimate.samples is not None:
        write_table(Path(cfg["draws-out"]), ("t_value", "draw"),
                    [(query.treatment_values[0], v) for v in estimate.samples])
    _write_manifest(out, "intervene", cfg)
    print(f"ate = {estimate.point!r}")
    return 0


def _cmd_experiment(args) -> int:
    keys = ["id", "seed", "results-dir", "n", "epochs", "bootstrap-b", "level",
            "mc-outer", "mc-inner", "oracle-n", "workers"]
    cfg = _merge_config(args, keys)
    settings = xp.ExperimentSettings(
        experiment=cfg["id"],
        seed=int(cfg["seed"]),
        n=int(cfg.get("n") or 10_000),
        epochs=int(cfg["epochs"]) if cfg.get("epochs") else None,
        bootstrap_replicates=int(cfg.get("bootstrap-b") or 50),
        level=float(cfg.get("level") or 0.90),
        mc_outer=int(cfg.get("mc-outer") or 1000),
        mc_inner=int(cfg.get("mc-inner") or 64),
        oracle_n=int(cfg.get("oracle-n") or 100_000),
        workers=int(cfg["workers"]) if cfg.get("workers") else None,
    )
    result = xp.run_experiment(settings)
    results_dir = Path(cfg["results-dir"])
    written = xp.write_artifacts(result, results_dir)
    if result.get("grid_result") is not None:
        xp.export_grid_rows(result["grid_result"].rows, results_dir / "grid.csv")
        written.append(results_dir / "grid.csv")
    _write_manifest(results_dir, "experiment", cfg)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    keys = ["experiment", "seed", "out", "n", "epochs", "batch-size",
            "mc-samples", "workers"]
    cfg = _merge_config(args, keys)
    settings = xp.ExperimentSettings(
        experiment=cfg["experiment"],
        seed=int(cfg["seed"]),
        n=int(cfg.get("n") or 10_000),
    )
    data = dg.generate(dg.DgpSpec(settings.experiment, settings.n,
                                  child_seed(settings.seed, 11)))
    result = ev.grid_search(
        settings.experiment, ev.GridSpec(), data, xp.grid_oracle(settings),
        seed=settings.seed,
        epochs=int(cfg.get("epochs") or 100),
        batch_size=int(cfg.get("batch-size") or 128),
        mc_samples=int(cfg.get("mc-samples") or 256),
        workers=int(cfg["workers"]) if cfg.get("workers") else None,
    )
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    xp.export_grid_rows(result.rows, out)
    summary = xp.summarize_grid(result)
    cfg["summary"] = {
        "relu_inferior": summary["relu_inferior"],
        "max_mae_linear_tanh": summary["max_mae_linear_tanh"],
        "min_mae_relu": summary["min_mae_relu"],
        "spearman_nll_mae": summary["spearman_nll_mae"],
    }
    _write_manifest(out, "sweep", cfg)
    print(f"wrote {len(result.rows)} grid rows to {out}")
    print(f"relu inferior to linear/tanh on every config: {summary['relu_inferior']}")
    print(f"spearman(final NLL, MAE) = {summary['spearman_nll_mae']!r}")
    return 0


def _cmd_bootstrap(args) -> int:
    keys = ["experiment", "data", "seed", "b", "level", "out", "epochs", "workers"]
    cfg = _merge_config(args, keys)
    exp = cfg["experiment"]
    data = load_csv(cfg["data"])
    seed = int(cfg["seed"])
    tc = xp.default_train_config(exp, seed,
                                 int(cfg["epochs"]) if cfg.get("epochs") else None)
    bcfg = ev.BootstrapConfig(int(cfg.get("b") or 50), float(cfg.get("level") or 0.90),
                              seed=child_seed(seed, 44))
    workers = int(cfg["workers"]) if cfg.get("workers") else None
    dag = dg.observed_dag(exp)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    if exp in ("nonlinear", "unobs-mild", "unobs-strong", "unobs-nonlinear"):
        grid = fx.support_grid(data.column("KS"), points=100)
        estimator = functools.partial(xp._cate_curve_on, dag=dag, cfg=tc, grid=grid)
        bands = ev.bootstrap_bands(data, estimator, bcfg, workers=workers)
        write_table(out, ("grid_value", "effect_mean", "band_lo", "band_hi"),
                    list(zip(grid, bands.mean, bands.lower, bands.upper)))
    else:
        estimator = functools.partial(_scalar_ate_on, dag=dag, cfg=tc, experiment=exp)
        bands = ev.bootstrap_bands(data, estimator, bcfg, workers=workers)
        write_table(out, ("effect_mean", "band_lo", "band_hi"),
                    [(bands.mean[0], bands.lower[0], bands.upper[0])])
    _write_manifest(out, "bootstrap", cfg)
    print(f"wrote bootstrap bands to {out}")
    return 0


def _scalar_ate_on(data, *, dag, cfg, experiment) -> float:
    model, _ = md.train_model(dag, data, cfg)
    adjustment = ("backdoor-discrete"
                  if experiment in ("binary", "continuous-outcome")
                  else "backdoor-mc")
    query = fx.EffectQuery("T", "R", (1.0, 0.0), adjustment, seed=cfg.seed)
    return fx.ate(model, query).point


# -- parser ----------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="causal-nade",
        description="Causal-graph neural density estimation and do-calculus effects",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--seed", type=int, required=True,
                        help="master seed (required; no wall-clock default)")

    sp = sub.add_parser("generate", help="write a synthetic dataset CSV")
    common(sp)
    sp.add_argument("--experiment", required=True, choices=dg.EXPERIMENTS)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_generate)

    sp = sub.add_parser("train", help="fit a model (or auxiliary estimator) on a CSV")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--experiment", choices=dg.EXPERIMENTS,
                    help="use this experiment's observed graph")
    sp.add_argument("--graph", help="JSON graph literal file")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--optimizer", choices=("sgd", "rmsprop"))
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--activation", choices=("linear", "relu", "tanh"))
    sp.add_argument("--hidden", help="comma-separated hidden widths, e.g. 8 or 8,8")
    sp.add_argument("--aux-inputs", help="train an auxiliary estimator on these columns")
    sp.add_argument("--aux-target")
    sp.add_argument("--aux-head", choices=hd.FAMILIES)
    sp.set_defaults(fn=_cmd_train)

    sp = sub.add_parser("sample", help="ancestral-sample rows from a saved model")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--do", action="append", metavar="NAME=VALUE",
                    help="clamp a variable (repeatable)")
    sp.set_defaults(fn=_cmd_sample)

    sp = sub.add_parser("intervene", help="estimate an interventional effect")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--treatment", required=True)
    sp.add_argument("--outcome", required=True)
    sp.add_argument("--x1", type=float, required=True)
    sp.add_argument("--x0", type=float, required=True)
    sp.add_argument("--adjustment", choices=fx.ADJUSTMENTS)
    sp.add_argument("--mc-outer", type=int)
    sp.add_argument("--mc-inner", type=int)
    sp.add_argument("--aux", help="auxiliary estimator bundle (front-door)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--draws-out")
    sp.set_defaults(fn=_cmd_intervene)

    sp = sub.add_parser("experiment", help="run one bundled experiment end to end")
    common(sp)
    sp.add_argument("--id", required=True, choices=dg.EXPERIMENTS)
    sp.add_argument("--results-dir", required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--bootstrap-b", type=int)
    sp.add_argument("--level", type=float)
    sp.add_argument("--mc-outer", type=int)
    sp.add_argument("--mc-inner", type=int)
    sp.add_argument("--oracle-n", type=int)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(fn=_cmd_experiment)

    sp = sub.add_parser("sweep", help="full hyperparameter grid on one experiment")
    common(sp)
    sp.add_argument("--experiment", required=True, choices=dg.EXPERIMENTS)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--mc-samples", type=int)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(fn=_cmd_sweep)

    sp = sub.add_parser("bootstrap", help="bootstrap confidence bands for an estimand")
    common(sp)
    sp.add_argument("--experiment", required=True, choices=dg.EXPERIMENTS)
    sp.add_argument("--data", required=True)
    sp.add_argument("--b", type=int)
    sp.add_argument("--level", type=float)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_bootstrap)

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single diagnostic line, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
