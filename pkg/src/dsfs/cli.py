"""Command-line entry point: ``dsfs <command> [options]``.

Exit codes: 0 success, 2 bad arguments or configuration, 3 solver failure,
4 training divergence, 5 missing input file.
"""

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import evaluation, serialize
from .active import ActiveConfig, run
from .exceptions import (
    EmptyInterior,
    InfeasibleModel,
    InvalidConfig,
    NonFiniteLoss,
    NumericalFailure,
    SolverFailure,
    UnboundedModel,
)
from .metrics import make_test_set, score
from .mlp import MlpParams, TrainConfig, posterior
from .network import CompactModel, LoadProfileParams, assemble_compact, generate_feeder, load_feeder, save_feeder
from .oracle import label_batch, read_samples_csv, write_samples_csv
from .robust_box import solve_inner_box

log = logging.getLogger("dsfs")

EXIT_OK, EXIT_ARGS, EXIT_SOLVER, EXIT_DIVERGED, EXIT_MISSING = 0, 2, 3, 4, 5

DEFAULT_RUN_CONFIG = {
    "seed": 0,
    "network": {"path": None, "seed": 7, "buses": 12, "ders": 18, "horizon": 2, "start_hour": 8,
                "profile": {}},
    "active": {},
    "train": {},
    "eval": {"test_count": 1000, "grid_resolution": 200,
             "levels": [0.03, 0.10, 0.20, 0.30, 0.40], "windows": [8, 9, 10, 11]},
    "output_dir": ".",
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _merge(base, over):
    out = dict(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_run_config(path):
    """Defaults overlaid with the JSON config at ``path`` (if any)."""
    cfg = json.loads(json.dumps(DEFAULT_RUN_CONFIG))
    if path:
        _require(path)
        with open(path, encoding="utf-8") as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise CliError(f"config {path}: {exc}", EXIT_ARGS) from exc
        cfg = _merge(cfg, user)
    if cfg.get("seed") is None:
        raise CliError("config must set an explicit seed", EXIT_ARGS)
    return cfg


def _require(path):
    if not path or not os.path.exists(path):
        raise CliError(f"missing input file: {path}", EXIT_MISSING)


def _known(cls, d, section):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise CliError(f"unknown {section} keys: {sorted(unknown)}", EXIT_ARGS)
    return d


def _active_config(run_cfg, seed, **over):
    d = dict(_known(ActiveConfig, run_cfg.get("active", {}), "active"))
    d["seed"] = seed
    d.update({k: v for k, v in over.items() if v is not None})
    try:
        return ActiveConfig(**d)
    except (InvalidConfig, TypeError, ValueError) as exc:
        raise CliError(str(exc), EXIT_ARGS) from exc


def _train_config(run_cfg, seed):
    d = dict(_known(TrainConfig, run_cfg.get("train", {}), "train"))
    d.setdefault("seed", seed)
    try:
        return TrainConfig(**d)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc), EXIT_ARGS) from exc


def _network_from_config(net, start_hour=None):
    """Return (feeder, ders, model) for a generation block."""
    profile = LoadProfileParams.from_dict(net.get("profile", {}))
    if start_hour is not None:
        profile.start_hour = start_hour
    elif net.get("start_hour") is not None:
        profile.start_hour = net["start_hour"]
    feeder, ders = generate_feeder(net["seed"], net["buses"], net["ders"], net["horizon"], profile)
    return feeder, ders, assemble_compact(feeder, ders)


def _load_model(path, run_cfg=None):
    if path:
        _require(path)
        return CompactModel.load(path)
    net = (run_cfg or DEFAULT_RUN_CONFIG)["network"]
    if net.get("path"):
        _require(net["path"])
        return CompactModel.load(net["path"])
    return _network_from_config(net)[2]


def _load_params(path):
    _require(path)
    return MlpParams.load(path)


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_history(history, path):
    cols = ["epoch", "f1", "precision", "recall", "oracle_calls", "hull_labels", "mean_loss"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in history:
            w.writerow([row[c] if isinstance(row[c], int) else "%.17g" % row[c] for c in cols])


# --------------------------------------------------------------------------
# commands


def cmd_gen_network(args):
    profile = LoadProfileParams(start_hour=args.start_hour)
    if args.profile:
        _require(args.profile)
        with open(args.profile, encoding="utf-8") as fh:
            profile = LoadProfileParams.from_dict(_merge(profile.to_dict(), json.load(fh)))
    try:
        feeder, ders = generate_feeder(args.seed, args.buses, args.ders, args.horizon, profile)
    except InvalidConfig as exc:
        raise CliError(str(exc), EXIT_ARGS) from exc
    model = assemble_compact(feeder, ders)
    out = _outdir(args.output_dir)
    gen = {"seed": args.seed, "buses": args.buses, "ders": args.ders, "horizon": args.horizon,
           "start_hour": profile.start_hour, "profile": profile.to_dict()}
    save_feeder(feeder, ders, os.path.join(out, "feeder.json"), extra={"generator": gen})
    model.save(os.path.join(out, "network.json"))
    print(f"network: n={feeder.n} m={model.m} T={model.T} K={model.K} "
          f"b={np.array2string(model.b, precision=4)}")
    return EXIT_OK


def cmd_train(args):
    run_cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else run_cfg["seed"]
    over = {
        "strategy": args.strategy,
        "epochs": args.epochs,
        "pool_size": args.pool_size,
        "init_labeled": args.init_labeled,
        "per_epoch": args.per_epoch,
        "label_budget": args.label_budget,
        "freeze_prefix": args.freeze_prefix,
    }
    if args.no_inner_box:
        over["use_inner_box"] = False
    if args.no_hull_labeling:
        over["use_hull_labeling"] = False
    cfg = _active_config(run_cfg, seed, **over)
    tcfg = _train_config(run_cfg, seed)
    model = _load_model(args.network, run_cfg)
    warm = _load_params(args.warm_start) if args.warm_start else None
    out = _outdir(args.output_dir or run_cfg["output_dir"])
    result = run(model, cfg, tcfg, warm, checkpoint_dir=out if args.checkpoints else None,
                 on_epoch=lambda st, row: log.info("epoch %d f1=%.4f oracle=%d hull=%d", row["epoch"],
                                                   row["f1"], row["oracle_calls"], row["hull_labels"]))
    params = result.params
    params.meta.update({
        "seed": seed,
        "epochs": result.state.epoch,
        "strategy": cfg.strategy,
        "source_window": model.meta.get("start_hour"),
        "warm_start": warm is not None,
        "frozen_layers": int(sum(params.frozen)),
    })
    params.save(os.path.join(out, "model.json"))
    _write_history(result.history, os.path.join(out, "history.csv"))
    result.state.inner.save(os.path.join(out, "innerset.json"))
    write_samples_csv(result.state.labeled, os.path.join(out, "samples.csv"), model.T)
    last = result.history[-1] if result.history else None
    if last:
        print(f"trained {result.state.epoch} epochs: f1={last['f1']:.4f} "
              f"oracle_calls={last['oracle_calls']} hull_labels={last['hull_labels']}")
    else:
        print("no epochs run")
    return EXIT_OK


def cmd_classify(args):
    params = _load_params(args.model)
    _require(args.samples)
    samples = read_samples_csv(args.samples)
    X = np.vstack([s.p0 for s in samples]) if samples else np.zeros((0, params.n_inputs))
    P = posterior(params, X) if len(X) else np.zeros(0)
    out = args.output or args.samples
    with open(args.samples, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0] + ["predicted", "posterior"]
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row, p in zip([r for r in rows[1:] if r], P):
            w.writerow(row + [int(p > 0.5), "%.17g" % p])
    print(f"classified {len(P)} samples -> {out}")
    return EXIT_OK


def cmd_evaluate(args):
    params = _load_params(args.model)
    if args.test:
        _require(args.test)
        test = read_samples_csv(args.test)
        if any(int(s.label) < 0 for s in test):
            model = _load_model(args.network)
            test = label_batch(model, [s.p0 for s in test])
    else:
        model = _load_model(args.network)
        test = make_test_set(model, args.count, args.seed)
    rep = score(params, test)
    print(json.dumps(rep.to_dict(), indent=1))
    out = _outdir(args.output_dir)
    serialize.dump(rep.to_dict(), os.path.join(out, "report.json"))
    return EXIT_OK


def cmd_heatmap(args):
    params = _load_params(args.model)
    model = _load_model(args.network)
    if args.resolution < 1:
        raise CliError("resolution must be positive", EXIT_ARGS)
    dims = tuple(args.dims)
    if len(dims) != 2 or max(dims) >= model.T:
        raise CliError(f"dims must be two indices below T={model.T}", EXIT_ARGS)
    rows = evaluation.heatmap_grid(params, model, dims, args.resolution, with_oracle=not args.no_oracle)
    out = _outdir(args.output_dir)
    evaluation.write_grid_csv(rows, os.path.join(out, "grid.csv"))
    print(f"wrote {len(rows)} grid rows")
    return EXIT_OK


def _generator_block(feeder_path, run_cfg):
    if feeder_path:
        _require(feeder_path)
        gen = serialize.load(feeder_path).get("generator")
        if gen is None:
            raise CliError("feeder.json lacks a generator block; regenerate with gen-network", EXIT_ARGS)
        return gen
    return run_cfg["network"]


def cmd_rolling(args):
    run_cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else run_cfg["seed"]
    cfg = _active_config(run_cfg, seed, epochs=args.epochs, freeze_prefix=args.freeze_prefix)
    tcfg = _train_config(run_cfg, seed)
    gen = _generator_block(args.feeder, run_cfg)
    windows = args.windows or run_cfg["eval"]["windows"]
    results = evaluation.rolling_horizon(lambda h: _network_from_config(gen, h)[2], windows, cfg, tcfg)
    out = _outdir(args.output_dir or run_cfg["output_dir"])
    evaluation.write_rolling_csv(results, os.path.join(out, "rolling.csv"))
    for r in results:
        fw, fc = r.f1_curves()
        print(f"window {r.window}: final f1 warm={fw[-1]:.4f} cold={fc[-1]:.4f}")
    return EXIT_OK


def cmd_robustness(args):
    run_cfg = load_run_config(args.config)
    params = _load_params(args.model)
    _require(args.feeder)
    feeder, ders = load_feeder(args.feeder)
    levels = args.levels if args.levels else run_cfg["eval"]["levels"]
    levels = [0.0] + [lv for lv in levels if lv != 0.0]
    rows = evaluation.robustness_sweep(feeder, ders, levels, args.count, params, args.seed)
    out = _outdir(args.output_dir or run_cfg["output_dir"])
    evaluation.write_robustness_csv(rows, os.path.join(out, "robustness.csv"))
    for r in rows:
        print(f"level {r['level']:.2f}: f1={r['f1']:.4f} retried={r['scenarios_retried']}")
    return EXIT_OK


def cmd_innerbox(args):
    model = _load_model(args.network)
    res = solve_inner_box(model)
    out = _outdir(args.output_dir)
    res.save(os.path.join(out, "innerbox.json"))
    print(f"inner box objective={res.objective:.6g} degenerate={res.degenerate}")
    print(f"p0_minus={np.array2string(res.p0_minus, precision=6)} p0_plus={np.array2string(res.p0_plus, precision=6)}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="dsfs", description="Estimate distribution system flexibility sets.")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads (BLAS and labeling)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-network", help="generate a synthetic feeder and its compact model")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--buses", type=int, default=12)
    g.add_argument("--ders", type=int, default=18)
    g.add_argument("--horizon", type=int, default=2)
    g.add_argument("--start-hour", type=int, default=8)
    g.add_argument("--profile", help="JSON file overriding load-profile parameters")
    g.add_argument("--output-dir", default=".")
    g.set_defaults(func=cmd_gen_network)

    t = sub.add_parser("train", help="run the active learning loop")
    t.add_argument("--config", help="run configuration JSON")
    t.add_argument("--network", help="network.json (overrides the config)")
    t.add_argument("--output-dir")
    t.add_argument("--seed", type=int)
    t.add_argument("--strategy", choices=["uncertainty", "random"])
    t.add_argument("--epochs", type=int)
    t.add_argument("--pool-size", type=int)
    t.add_argument("--init-labeled", type=int)
    t.add_argument("--per-epoch", type=int)
    t.add_argument("--label-budget", type=int)
    t.add_argument("--no-inner-box", action="store_true", help="do not seed the inner set with the robust box")
    t.add_argument("--no-hull-labeling", action="store_true", help="label every sample with the oracle")
    t.add_argument("--warm-start", metavar="CHECKPOINT", help="model.json to transfer from")
    t.add_argument("--freeze-prefix", type=int, help="layers frozen on warm start (default 1)")
    t.add_argument("--checkpoints", action="store_true", help="write model_epochN.json every epoch")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("classify", help="append predictions to a samples.csv")
    c.add_argument("--model", required=True)
    c.add_argument("--samples", required=True)
    c.add_argument("--output", help="output CSV (default: rewrite the input)")
    c.set_defaults(func=cmd_classify)

    e = sub.add_parser("evaluate", help="score a model on an oracle-labeled test set")
    e.add_argument("--model", required=True)
    e.add_argument("--test", help="labeled samples.csv; generated when omitted")
    e.add_argument("--network", help="network.json for generating or labeling the test set")
    e.add_argument("--count", type=int, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--output-dir", default=".")
    e.set_defaults(func=cmd_evaluate)

    h = sub.add_parser("heatmap", help="posterior/uncertainty/oracle grid for plotting")
    h.add_argument("--model", required=True)
    h.add_argument("--network", required=True)
    h.add_argument("--resolution", type=int, default=200)
    h.add_argument("--dims", type=int, nargs=2, default=[0, 1])
    h.add_argument("--no-oracle", action="store_true", help="skip the oracle layer")
    h.add_argument("--output-dir", default=".")
    h.set_defaults(func=cmd_heatmap)

    r = sub.add_parser("rolling", help="rolling-horizon warm vs. cold comparison")
    r.add_argument("--config")
    r.add_argument("--feeder", help="feeder.json written by gen-network")
    r.add_argument("--windows", type=int, nargs="+", help="window start hours")
    r.add_argument("--seed", type=int)
    r.add_argument("--epochs", type=int)
    r.add_argument("--freeze-prefix", type=int)
    r.add_argument("--output-dir")
    r.set_defaults(func=cmd_rolling)

    b = sub.add_parser("robustness", help="F1 under perturbed loads and PV")
    b.add_argument("--config")
    b.add_argument("--model", required=True)
    b.add_argument("--feeder", required=True)
    b.add_argument("--levels", type=float, nargs="+")
    b.add_argument("--count", type=int, default=1000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--output-dir")
    b.set_defaults(func=cmd_robustness)

    i = sub.add_parser("innerbox", help="solve the affine-policy robust box")
    i.add_argument("--network", required=True)
    i.add_argument("--output-dir", default=".")
    i.set_defaults(func=cmd_innerbox)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(args.threads)
    try:
        with limiter:
            return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (InvalidConfig, UnboundedModel) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SolverFailure, NumericalFailure, EmptyInterior, InfeasibleModel) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
