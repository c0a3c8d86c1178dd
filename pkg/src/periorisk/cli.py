"""Command-line entry point.

Every subcommand reads an optional JSON run config; ``--seed``, ``--out``,
``--preset`` and ``--paper-faithful`` override its fields. Failures print a
JSON error record on stderr and exit with status 1.
"""

import argparse
import json
import logging
import os
import sys

from . import pipeline, synthgen
from .exceptions import ConfigError, PerioRiskError
from .pipeline import RunConfig


def _config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.preset is not None:
        cfg.preset, cfg.input, cfg.schema = args.preset, None, None
    if args.paper_faithful:
        cfg.paper_faithful = True
    return cfg.validate()


def _dump(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)


def cmd_simulate(args):
    if args.preset is None and args.config:
        name = RunConfig.load(args.config).preset
    else:
        name = args.preset
    if name is None:
        raise ConfigError("simulate needs --preset (or a config with 'preset')")
    spec = synthgen.preset(name)
    if args.n_rows is not None:
        spec = spec.replace(n_rows=args.n_rows, periods=())
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    cohort = synthgen.generate(spec, seed=args.seed or 0)
    cohort.write(os.path.join(out, "cohort.csv"), os.path.join(out, "cohort.truth.json"))
    cohort.dataset.schema.dump(os.path.join(out, "schema.json"))
    return {"rows": cohort.dataset.n_rows, "out": out}


def cmd_impute(args):
    cfg = _config(args)
    prep = pipeline.prepare(cfg)
    pipeline.write_prepared(cfg.out, prep)
    return {"train_rows": prep.train.n_rows, "test_rows": prep.test.n_rows, "out": cfg.out}


def cmd_eda(args):
    cfg = _config(args)
    prep = pipeline.prepare(cfg)
    files = pipeline.write_eda(os.path.join(cfg.out, "eda"), prep.train, prep.outcome)
    return {"files": len(files), "out": cfg.out}


def cmd_select(args):
    cfg = _config(args)
    prep = pipeline.prepare(cfg)
    selections = pipeline.select(cfg, prep)
    os.makedirs(cfg.out, exist_ok=True)
    _dump(os.path.join(cfg.out, "selection.json"), pipeline.selections_to_json(selections))
    pipeline.write_selection_csvs(cfg.out, selections)
    return {k: v["variables"] for k, v in pipeline.selections_to_json(selections).items()}


def cmd_train(args):
    cfg = _config(args)
    prep = pipeline.prepare(cfg)
    report, selections, estimators = pipeline.run_prepared(cfg, prep)
    os.makedirs(cfg.out, exist_ok=True)
    _dump(os.path.join(cfg.out, "models.json"), pipeline.models_to_json(estimators))
    _dump(os.path.join(cfg.out, "selection.json"), pipeline.selections_to_json(selections))
    return {"models": len(estimators), "out": cfg.out}


def cmd_evaluate(args):
    cfg = _config(args)
    path = args.models or os.path.join(cfg.out, "models.json")
    if not os.path.exists(path):
        raise ConfigError(f"no fitted models at {path!r}; run 'train' first")
    with open(path, encoding="utf-8") as fh:
        estimators = pipeline.models_from_json(json.load(fh))
    prep = pipeline.prepare(cfg)
    cells = pipeline.evaluate_models(prep, estimators)
    report = pipeline.RunReport(cfg.to_dict(), prep.outcome,
                                pipeline._counts(prep.train, prep.outcome),
                                pipeline._counts(prep.test, prep.outcome), cells, {})
    pipeline.write_outputs(cfg.out, report)
    return {"cells": len(cells), "out": cfg.out}


def cmd_run(args):
    cfg = _config(args)
    report = pipeline.run(cfg)
    errors = sum(c.error is not None for c in report.cells)
    return {"cells": len(report.cells), "errors": errors, "out": cfg.out}


def cmd_report(args):
    out = args.out or (RunConfig.load(args.config).out if args.config else "out")
    path = os.path.join(out, "report.json")
    if not os.path.exists(path):
        raise ConfigError(f"no report at {path!r}")
    with open(path, encoding="utf-8") as fh:
        report = pipeline.RunReport.from_dict(json.load(fh))
    text = pipeline.render_table(report)
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return None


COMMANDS = {
    "simulate": (cmd_simulate, "generate a synthetic cohort"),
    "impute": (cmd_impute, "split, encode and impute; write the prepared partitions"),
    "eda": (cmd_eda, "empirical-logit tables for the training partition"),
    "select": (cmd_select, "run the configured variable selections"),
    "train": (cmd_train, "select and fit every model/selection cell"),
    "evaluate": (cmd_evaluate, "evaluate fitted models on both partitions"),
    "run": (cmd_run, "full protocol: prepare, select, fit, evaluate, report"),
    "report": (cmd_report, "render report.txt from report.json"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="periorisk", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--seed", type=int, help="seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--preset", help="cohort preset (overrides the config input)")
        p.add_argument("--paper-faithful", action="store_true",
                       help="learn imputation tables on all rows")
        if name == "simulate":
            p.add_argument("--n-rows", type=int)
        if name == "evaluate":
            p.add_argument("--models", help="models.json from 'train'")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be non-negative")
    try:
        result = COMMANDS[args.command][0](args)
    except PerioRiskError as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return 1
    except (OSError, ValueError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    if result is not None:
        sys.stdout.write(json.dumps(result) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
