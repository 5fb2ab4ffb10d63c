"""``advforensics`` command line: run / detect / report.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__, serialize
from .numcore import Rng
from .pipeline import (
    FIGURES,
    QUESTIONS,
    STAGE_CAMPAIGN,
    STAGE_DATASET,
    STAGE_DETECT,
    STAGE_ZOO,
    CampaignConfig,
    ConfigError,
    RecordFormatError,
    build_zoo,
    evaluate_zoo,
    figure_csv,
    generate_dataset,
    q1_attack_accuracy,
    read_records,
    records_to_csv,
    run_campaign,
    run_detector,
    write_records,
)

log = logging.getLogger("advforensics")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


class StageFailed(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


class Manifest:
    """Tracks stage status, timings and artifacts; written after every stage."""

    def __init__(self, out_dir: Path, config: CampaignConfig | None, seed: int, command: str):
        self.path = out_dir / "manifest.json"
        self.out_dir = out_dir
        self.data = {
            "tool": "advforensics",
            "version": __version__,
            "command": command,
            "seed": seed,
            "config": config.to_dict() if config else None,
            "stages": [],
            "artifacts": [],
            "status": "running",
        }

    def artifact(self, path: Path):
        self.data["artifacts"].append(str(path.relative_to(self.out_dir)))

    def stage(self, name, fn, *args):
        entry = {"name": name, "status": "running"}
        self.data["stages"].append(entry)
        start = time.perf_counter()
        try:
            result = fn(*args)
        except Exception as exc:
            entry.update(status="failed", error=str(exc), seconds=time.perf_counter() - start)
            self.data["status"] = "failed"
            self.write()
            raise StageFailed(name, exc) from exc
        entry.update(status="ok", seconds=time.perf_counter() - start)
        self.write()
        return result

    def finish(self):
        self.data["status"] = "ok"
        self.write()

    def write(self):
        self.path.write_text(serialize.dumps(self.data, indent=2) + "\n", encoding="utf-8")


def load_config(path: str | None) -> CampaignConfig:
    if path is None:
        return CampaignConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return CampaignConfig.from_json(text)


def _write(out_dir: Path, name: str, text: str, manifest: Manifest | None = None) -> Path:
    p = out_dir / name
    p.write_text(text, encoding="utf-8", newline="\n")
    if manifest:
        manifest.artifact(p)
    return p


def _write_report(out_dir, report, manifest=None):
    _write(out_dir, f"{report.question}_report.json", report.to_json(), manifest)
    _write(out_dir, f"{report.question}_report.csv", report.to_csv(), manifest)


def cmd_run(config_path: str | None, out_dir: str, seed: int | None = None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if seed is not None:
        cfg = CampaignConfig(cfg.dataset, cfg.zoo, cfg.attacks, cfg.detector, seed, cfg.samples_per_attack)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, cfg, cfg.seed, "run")
    manifest.write()
    rng = Rng(cfg.seed)
    try:
        train_data, test_data = manifest.stage(
            "dataset", generate_dataset, cfg.dataset, rng.child(STAGE_DATASET))
        zoo = manifest.stage("zoo", build_zoo, cfg, train_data, rng.child(STAGE_ZOO))
        models_dir = out / "models"
        models_dir.mkdir(exist_ok=True)
        for m in zoo:
            _write(out, f"models/{m.model_id}.json", m.to_json() + "\n", manifest)
        records = manifest.stage("campaign", run_campaign, cfg, zoo, test_data, rng.child(STAGE_CAMPAIGN))
        write_records(records, out / "records.jsonl")
        manifest.artifact(out / "records.jsonl")
        _write(out, "records.csv", records_to_csv(records), manifest)
        clean_eval = evaluate_zoo(zoo, test_data)
        q1 = manifest.stage("q1", q1_attack_accuracy, records, clean_eval)
        _write_report(out, q1, manifest)
        for q in ("q2", "q3", "q4"):
            rep = manifest.stage(q, run_detector, q, records, cfg.detector, cfg.seed)
            _write_report(out, rep, manifest)
    except StageFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    manifest.finish()
    log.info("run complete: %s", out)
    return EXIT_OK


def cmd_detect(records_path: str, question: str, out_dir: str, seed: int = 0,
               config_path: str | None = None) -> int:
    if question not in ("q2", "q3", "q4"):
        print(f"error: unknown question {question!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        records = read_records(records_path)
    except RecordFormatError as exc:
        print(f"error: malformed record store {records_path}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if not records:
        print(f"error: no records in {records_path}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        report = run_detector(question, records, cfg.detector, seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_report(out, report)
    return EXIT_OK


def cmd_report(out_dir: str) -> int:
    out = Path(out_dir)
    found = False
    for q in QUESTIONS:
        path = out / f"{q}_report.json"
        if not path.exists():
            continue
        found = True
        try:
            report = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read {path}: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        _write(out, f"{FIGURES[q]}.csv", figure_csv(report))
    if not found:
        print(f"error: no question reports in {out}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advforensics", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full experiment: dataset, zoo, campaign, q1-q4")
    run.add_argument("--config", help="JSON config (defaults used when omitted)")
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int)

    det = sub.add_parser("detect", help="re-run one detection question from a record store")
    det.add_argument("--records", required=True)
    det.add_argument("--question", required=True, choices=["q2", "q3", "q4"])
    det.add_argument("--out", required=True)
    det.add_argument("--seed", type=int, default=0)
    det.add_argument("--config", help="JSON config for detector settings")

    rep = sub.add_parser("report", help="plot-ready CSVs from question reports")
    rep.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed)
    if args.command == "detect":
        return cmd_detect(args.records, args.question, args.out, args.seed, args.config)
    return cmd_report(args.out)


if __name__ == "__main__":
    sys.exit(main())
