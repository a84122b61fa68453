"""Command-line entry point: ``rotkit convert | distance | run | plot | bench``."""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from python_rotkit import config, experiments, helpers, metrics, plotting, representations
from python_rotkit.__version__ import __version__
from python_rotkit.const import (
    CSV_SCHEMAS,
    DEFAULT_OUT_DIR,
    MATRIX_METRICS,
    PLOT_SCHEMAS,
    ROTKIT_OUT_ENV,
    SO3_REPRESENTATIONS,
    ExitCode,
    ExperimentType,
    MetricType,
    PlotKind,
    RepresentationType,
)
from python_rotkit.exceptions import ConfigError, DataError, RotkitError
from python_rotkit.model import REPRESENTATION_CLASSES, RunRecord, RunSettings

_LOGGER = logging.getLogger(__name__)

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def resolve_out_dir(flag: str | None, configured: str | None = None) -> Path:
    """--out-dir, then the config's out_dir, then $ROTKIT_OUT, then ./out."""
    for candidate in (flag, configured, os.environ.get(ROTKIT_OUT_ENV)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUT_DIR)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        helpers.write_text(Path(out), text)


def _same_group(a: RepresentationType, b: RepresentationType) -> bool:
    return (a in SO3_REPRESENTATIONS) == (b in SO3_REPRESENTATIONS)


def cmd_convert(args: argparse.Namespace) -> None:
    source = RepresentationType(args.from_rep)
    target = RepresentationType(args.to_rep)
    if not _same_group(source, target):
        raise ConfigError(f"cannot convert between {source.value} and {target.value}")
    rep = helpers.representation_from_csv(helpers.read_text(Path(args.input)))
    if rep.tag is not source:
        raise DataError(f"line 1: file holds {rep.tag.value}, --from says {source.value}")
    target_cls = REPRESENTATION_CLASSES[target]
    if len(rep) == 0 or rep.values.size == 0:
        _emit(helpers.representation_header(target_cls) + "\n", args.out)
        return
    converted = representations.from_matrix(representations.to_matrix(rep), target)
    _LOGGER.debug("converted %d rows %s -> %s", len(rep), source.value, target.value)
    _emit(helpers.representation_to_csv(converted), args.out)


def cmd_distance(args: argparse.Namespace) -> None:
    metric = MetricType(args.metric)
    first, second = helpers.representation_pairs_from_csv(helpers.read_text(Path(args.input)))
    if first.values.size == 0:
        distances = np.zeros(0)
    elif metric in MATRIX_METRICS:
        distances = metrics.distance(
            metric, representations.to_matrix(first), representations.to_matrix(second)
        )
    else:
        distances = metrics.distance(metric, first, second)
    _emit(helpers.column_to_csv("distance", np.atleast_1d(distances)), args.out)


def parse_overrides(experiment: ExperimentType, tokens: Sequence[str]) -> dict[str, str]:
    """``--key value`` / ``--key=value`` pairs after the experiment name."""
    overrides: dict[str, str] = {}
    errors = []
    tokens = list(tokens)
    while tokens:
        token = tokens.pop(0)
        if not token.startswith("--"):
            errors.append(f"unexpected argument {token!r}")
            continue
        flag, sep, value = token.partition("=")
        if not sep:
            if not tokens or tokens[0].startswith("--"):
                errors.append(f"{flag} needs a value")
                continue
            value = tokens.pop(0)
        overrides[config.flag_key(experiment, flag)] = value
    if errors:
        raise ConfigError(errors)
    return overrides


def _settings(args: argparse.Namespace, experiment: ExperimentType) -> RunSettings:
    file_values = config.parse_config_text(helpers.read_text(Path(args.config))) if args.config else {}
    overrides = parse_overrides(experiment, args.overrides)
    for key in ("seed", "workers"):
        if getattr(args, key) is not None:
            overrides[key] = str(getattr(args, key))
    if args.svg:
        overrides["svg"] = "true"
    return config.load_settings(experiment, file_values, overrides)


def _outputs(experiment: ExperimentType, records: list[RunRecord]) -> dict[str, list[RunRecord]]:
    if experiment is not ExperimentType.DISTFIELD:
        return {experiment.value: records}
    per_metric: dict[str, list[RunRecord]] = {}
    for record in records:
        per_metric.setdefault(f"{experiment.value}_{record.loss}", []).append(record)
    return per_metric


def execute(settings: RunSettings, out_dir: Path) -> list[Path]:
    """Run an experiment and write its CSVs, meta sidecar and optional SVGs."""
    experiment = settings.experiment
    records, meta = asyncio.run(
        experiments.run_experiment(experiment, settings.config, settings.seed, settings.workers)
    )
    written = []
    kinds = [kind for kind, source in PLOT_SCHEMAS.items() if source is experiment]
    for name, rows in _outputs(experiment, records).items():
        text = helpers.records_to_csv(rows, CSV_SCHEMAS[experiment])
        written.append(helpers.write_text(out_dir / f"{name}.csv", text))
        if settings.svg:
            for kind in kinds:
                written.append(helpers.write_text(out_dir / f"{name}.svg", plotting.render_svg(kind, text)))
    written.append(helpers.write_text(out_dir / f"{experiment.value}.meta", helpers.meta_to_text(meta)))
    for path in written:
        _LOGGER.info("wrote %s", path)
    return written


def cmd_run(args: argparse.Namespace) -> None:
    experiment = ExperimentType(args.experiment)
    settings = _settings(args, experiment)
    execute(settings, resolve_out_dir(args.out_dir, settings.out_dir))


def cmd_bench(args: argparse.Namespace) -> None:
    args.experiment = ExperimentType.BENCH.value
    cmd_run(args)


def cmd_plot(args: argparse.Namespace) -> None:
    kind = PlotKind(args.kind)
    source = Path(args.input)
    svg = plotting.render_svg(kind, helpers.read_text(source))
    target = Path(args.out) if args.out else resolve_out_dir(args.out_dir) / f"{source.stem}.svg"
    helpers.write_text(target, svg)
    _LOGGER.info("wrote %s", target)


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--workers", type=int, help="concurrent experiment cells")
    parser.add_argument("--out-dir", help=f"output directory (default ${ROTKIT_OUT_ENV} or ./{DEFAULT_OUT_DIR})")
    parser.add_argument("--svg", action="store_true", help="also render the matching SVG")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotkit", description="Rotation representation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    rep_tags = [t.value for t in RepresentationType]
    convert = sub.add_parser("convert", help="convert a representation CSV")
    convert.add_argument("input")
    convert.add_argument("--from", dest="from_rep", required=True, choices=rep_tags)
    convert.add_argument("--to", dest="to_rep", required=True, choices=rep_tags)
    convert.add_argument("--out", help="output file (default stdout)")
    convert.set_defaults(handler=cmd_convert)

    distance = sub.add_parser("distance", help="distances between paired representation rows")
    distance.add_argument("input")
    distance.add_argument("--metric", required=True, choices=[m.value for m in MetricType])
    distance.add_argument("--out", help="output file (default stdout)")
    distance.set_defaults(handler=cmd_distance)

    run = sub.add_parser(
        "run",
        help="run an experiment",
        description="Experiment settings may follow as --<field> <value>, e.g. --pairs 100.",
        allow_abbrev=False,
    )
    run.add_argument("experiment", choices=[e.value for e in ExperimentType])
    _add_run_options(run)
    run.set_defaults(handler=cmd_run)

    bench = sub.add_parser("bench", help="time the gso and svd_plus projections", allow_abbrev=False)
    _add_run_options(bench)
    bench.set_defaults(handler=cmd_bench)

    plot = sub.add_parser("plot", help="render a result CSV as SVG")
    plot.add_argument("input")
    plot.add_argument("--kind", required=True, choices=[k.value for k in PlotKind])
    plot.add_argument("--out", help="output SVG (default <out-dir>/<csv stem>.svg)")
    plot.add_argument("--out-dir")
    plot.set_defaults(handler=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command not in ("run", "bench"):
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    args.overrides = extra

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=_LOG_FORMAT)

    try:
        args.handler(args)
    except ConfigError as ex:
        for problem in ex.errors:
            _LOGGER.error("config: %s", problem)
        return int(ex.exit_code)
    except RotkitError as ex:
        _LOGGER.error("%s: %s", type(ex).__name__, ex)
        return int(ex.exit_code)
    return int(ExitCode.SUCCESS)


if __name__ == "__main__":
    sys.exit(main())
