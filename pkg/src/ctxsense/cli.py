"""``ctxsense`` command line: train, run, eval, simulate.

Exit codes: 0 success, 2 input or format error, 3 model error, 4 alignment error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import MODES, PipelineConfig
from .errors import CtxSenseError, FormatError, ScriptValidationError
from .evaluation import evaluate_run
from .ingest import parse_gnss_log, parse_imu_log
from .modelfile import MODEL_FORMAT, load_models, save_models
from .pipeline import TrainingData, read_records, run_pipeline, train_models, write_records
from .synth import generate_scenario, read_truth, tour_script, training_script

LOG_NAMES = ("imu.csv", "gnss.csv", "truth.csv")


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    return cfg.with_overrides(seed=args.seed, mode=args.mode)


def _load_imu(path, cfg):
    return parse_imu_log(path, nominal_rate=cfg.sample_rate, max_bad_ratio=cfg.max_bad_ratio)


def _load_gnss(path, cfg):
    return parse_gnss_log(path, max_bad_ratio=cfg.max_bad_ratio)


def _log_dir(d: Path) -> list[Path]:
    paths = [d / name for name in LOG_NAMES]
    missing = [p.name for p in paths if not p.is_file()]
    if missing:
        raise FormatError(f"{d}: missing {', '.join(missing)}")
    return paths


def cmd_train(args) -> int:
    cfg = _config(args)
    data = None
    for d in args.data:
        imu, gnss, truth = _log_dir(Path(d))
        part = TrainingData.from_logs(_load_imu(imu, cfg), _load_gnss(gnss, cfg),
                                      read_truth(truth), cfg)
        data = part if data is None else data + part
    bundle = train_models(data, cfg)
    save_models(bundle, args.output)
    for role, acc in bundle.report.items():
        shown = "n/a" if acc is None else f"{acc:.4f}"
        print(f"{role:20s} held-out accuracy {shown}")
    print(f"wrote {MODEL_FORMAT} model to {args.output}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.imu is None and args.gnss is None:
        raise FormatError("run needs --imu and/or --gnss")
    bundle = load_models(args.model)
    imu = _load_imu(args.imu, cfg) if args.imu else None
    gnss = _load_gnss(args.gnss, cfg) if args.gnss else None
    records = run_pipeline(bundle, cfg, imu, gnss)
    if args.output in (None, "-"):
        write_records(records, sys.stdout)
    else:
        write_records(records, args.output)
    return 0


def _fmt(v) -> str:
    return "  n/a " if v is None else f"{v:.4f}"


def cmd_eval(args) -> int:
    reports = evaluate_run(read_records(args.records), read_truth(args.truth))
    if args.json:
        print(json.dumps({k: r.to_dict() for k, r in reports.items()}, sort_keys=True, indent=1))
        return 0
    for name, r in reports.items():
        delay = "n/a" if r.mean_delay is None else f"{r.mean_delay:.2f}"
        print(f"{name:16s} accuracy {r.accuracy:.4f}  mean delay {delay} epochs "
              f"({len(r.delays)} transitions, n={r.n})")
        for c in r.classes:
            p, q = r.precision[c], r.recall[c]
            if q is None and p is None:
                continue
            print(f"    {c:28s} precision {_fmt(p)}  recall {_fmt(q)}")
    return 0


def _script(args):
    if args.script:
        try:
            with open(args.script, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read scenario script {args.script}: {exc}") from None
        if not isinstance(raw, list) or not all(isinstance(s, list) and len(s) == 3 for s in raw):
            raise ScriptValidationError(
                "scenario script must be a JSON list of [behaviour, environment, seconds]")
        return [tuple(s) for s in raw]
    if args.preset == "training":
        return training_script(args.seconds or 410)
    return tour_script(args.seconds or 60)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    scenario = generate_scenario(_script(args), seed=cfg.seed, rate=cfg.sample_rate)
    paths = scenario.write(args.output)
    print(f"{scenario.duration} s scenario, {len(scenario.segments)} segments: "
          + ", ".join(str(p) for p in paths.values()))
    return 0


def _common(default) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="JSON configuration file")
    common.add_argument("--seed", type=int, default=default,
                        help="random seed (overrides the config)")
    common.add_argument("--mode", choices=MODES, default=default,
                        help="environment model selection")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxsense", description=__doc__.splitlines()[0],
                                     parents=[_common(None)])
    # repeated after the subcommand; SUPPRESS keeps values given before it
    common = _common(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model file from labelled logs")
    p.add_argument("data", nargs="+", help="directories holding imu.csv, gnss.csv, truth.csv")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", parents=[common], help="run the pipeline on logs")
    p.add_argument("--model", required=True)
    p.add_argument("--imu")
    p.add_argument("--gnss")
    p.add_argument("-o", "--output", help="JSON-lines output (default stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", parents=[common], help="score run output against truth")
    p.add_argument("--records", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--json", action="store_true", help="print the full report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", parents=[common], help="generate synthetic logs")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--script", help="JSON list of [behaviour, environment, seconds]")
    g.add_argument("--preset", choices=("tour", "training"), default="tour")
    p.add_argument("--seconds", type=int, help="segment length for the presets")
    p.add_argument("-o", "--output", required=True, help="directory for the logs")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CtxSenseError as exc:
        print(f"ctxsense: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
