"""``sentinel`` command line: train, monitor, simulate, evaluate, report.

Exit codes: 0 success, 1 usage error, 2 data/configuration error, 3 internal error.
"""

from __future__ import annotations

import argparse
import glob
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .artifact import load_model, save_model
from .domain import load_farm_config
from .errors import ConfigError, DataError, SchemaMismatchError, SentinelError
from .evaluation import evaluate
from .ingestion import GapPolicy, RawRecordTable, load_scada_csv, read_scada_csv, regularize, regularize_turbine
from .monitor import monitor_stream
from .pipeline import input_columns, train_farm
from .records import read_warning_log, write_kpi_series, write_warning_log
from .report import KPI_SUFFIX, WARNINGS_SUFFIX, render_report
from .settings import SEED_ENV_VAR
from .synth import parse_scenario, read_labels, simulate, write_labels

log = logging.getLogger("wtsentinel")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _expand(patterns) -> list[Path]:
    paths = []
    for pattern in patterns:
        hits = sorted(glob.glob(pattern)) if glob.has_magic(pattern) else [pattern]
        if not hits:
            raise DataError(f"no files match {pattern!r}")
        paths.extend(Path(h) for h in hits)
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise DataError(f"input file(s) not found: {', '.join(missing)}")
    return paths


def _read_document(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML/JSON: {exc}") from None
    return doc if doc is not None else {}


# ------------------------------------------------------------------ commands


def cmd_train(args) -> int:
    config = load_farm_config(args.config)
    table = RawRecordTable.concat([load_scada_csv(p, config) for p in _expand(args.data)])
    needed = {c for t in config.turbines for spec in t.components for c in input_columns(config, spec)}
    lacking = [n for n in table.absent_tags if n in needed]
    if lacking:
        raise SchemaMismatchError(f"SCADA data lacks configured tag column(s) {lacking}")
    matrices = regularize(table, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for artifact, report in train_farm(config, matrices):
        path = save_model(artifact, out / f"{artifact.file_stem}.json")
        s = report.summary()
        print(
            f"{artifact.turbine_id}/{artifact.component}: loaded {s['rows_loaded']}, "
            f"after power-curve filter {s['rows_after_power_curve']}, after MOR {s['rows_after_mor']}; "
            f"epochs {s['epochs_run']}, train loss {s['final_train_loss']:.6g}, "
            f"validation loss {s['final_validation_loss']:.6g} -> {path}"
        )
    return EXIT_OK


def _load_models(models_dir):
    d = Path(models_dir)
    if not d.is_dir():
        raise DataError(f"model directory {d} does not exist")
    paths = sorted(d.glob("*.json"))
    if not paths:
        raise DataError(f"no model files (*.json) in {d}")
    return [load_model(p) for p in paths]


def cmd_monitor(args) -> int:
    artifacts = _load_models(args.models)
    tags = tuple(dict.fromkeys(c for a in artifacts for c in a.input_columns))
    table = RawRecordTable.concat([read_scada_csv(p, tags) for p in _expand(args.data)])
    for artifact in artifacts:
        lacking = [c for c in artifact.input_columns if c in table.absent_tags]
        if lacking:
            raise SchemaMismatchError(
                f"model {artifact.file_stem} needs columns {list(artifact.input_columns)}; SCADA data lacks {lacking}"
            )
    groups = dict(tuple(table.frame.groupby("turbine_id", sort=False)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    all_events = []
    for artifact in artifacts:
        frame = groups.get(artifact.turbine_id)
        if frame is None:
            log.warning("no monitoring data for turbine %s; skipping %s", artifact.turbine_id, artifact.file_stem)
            continue
        matrix = regularize_turbine(frame, tags, artifact.sample_interval,
                                    GapPolicy(artifact.preprocess_settings.max_gap))
        result = monitor_stream(artifact, matrix)
        write_kpi_series(result, out / f"{artifact.file_stem}{KPI_SUFFIX}")
        write_warning_log(result.events, out / f"{artifact.file_stem}{WARNINGS_SUFFIX}")
        all_events.extend(result.events)
        final = int(result.level[-1]) if len(result) else 0
        print(f"{artifact.turbine_id}/{artifact.component}: {int(result.evaluated.sum())} rows scored, "
              f"{len(result.events)} warning events, final level {final}")
    all_events.sort(key=lambda e: (e.timestamp, e.turbine_id, e.component))
    write_warning_log(all_events, out / "warnings.csv")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = load_farm_config(args.config)
    scenario = parse_scenario(_read_document(args.scenario))
    table, labels = simulate(config, scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "scada.csv")
    write_labels(labels, out / "labels.csv")
    print(f"wrote {len(table.frame)} rows to {out / 'scada.csv'} and {len(labels)} label intervals "
          f"to {out / 'labels.csv'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    events = [e for p in _expand(args.warnings) for e in read_warning_log(p)]
    report = evaluate(events, read_labels(args.labels))
    sys.stdout.write(report.to_json() if args.format == "machine" else report.to_text())
    return EXIT_OK


def cmd_report(args) -> int:
    labels = read_labels(args.labels) if args.labels else ()
    for path in render_report(args.monitor, args.out, labels=labels):
        print(path)
    return EXIT_OK


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sentinel", description="Wind-turbine component health monitoring from SCADA data.",
                     epilog=f"Default training seed can be overridden with ${SEED_ENV_VAR}.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit one model per turbine-component on healthy periods")
    p.add_argument("--config", required=True, help="farm config (YAML or JSON)")
    p.add_argument("--data", required=True, nargs="+", help="SCADA CSV path(s) or glob(s)")
    p.add_argument("--out", required=True, help="directory for model files")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("monitor", help="score SCADA data with trained models")
    p.add_argument("--models", required=True, help="directory of model files")
    p.add_argument("--data", required=True, nargs="+", help="SCADA CSV path(s) or glob(s)")
    p.add_argument("--out", required=True, help="directory for KPI series and warning logs")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("simulate", help="generate a synthetic SCADA CSV with optional injected faults")
    p.add_argument("--config", required=True, help="farm config (YAML or JSON)")
    p.add_argument("--scenario", required=True, help="scenario file (YAML or JSON)")
    p.add_argument("--out", required=True, help="output directory (scada.csv, labels.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score warning logs against ground-truth labels")
    p.add_argument("--warnings", required=True, nargs="+", help="warning log CSV(s)")
    p.add_argument("--labels", required=True, help="labels CSV from simulate")
    p.add_argument("--format", choices=("text", "machine"), default="text")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render figures and a summary table from monitor output")
    p.add_argument("--monitor", required=True, help="directory written by 'sentinel monitor'")
    p.add_argument("--out", required=True, help="directory for PNG figures and summary.csv")
    p.add_argument("--labels", help="optional labels CSV to shade degrading/outage intervals")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SentinelError as exc:
        print(f"sentinel {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - reported, not expected
        log.debug("internal error", exc_info=True)
        print(f"sentinel {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
