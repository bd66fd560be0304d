#!/usr/bin/env python3
"""Run ingest -> detect -> cluster -> metrics -> report over the demo fixtures.

Usage: python3 scripts/pipeline_demo.py [OUT_DIR] [--fixtures DIR]
"""

import argparse
import shutil
import sys
from pathlib import Path

from latwar.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run(*argv: str) -> None:
    print("$ latwar", " ".join(argv))
    rc = main(list(argv))
    if rc != 0:
        sys.exit(rc)


def pipeline(fixtures: Path, out: Path) -> Path:
    ing, det, stage = out / "ingest", out / "detect", out / "report_inputs"
    run("ingest", "--fixtures", str(fixtures), "--checkpoint", str(ing / "checkpoint.json"), "--out", str(ing))
    run("detect", "--in", str(ing), "--out", str(det))
    run("cluster", "--arbs", str(det / "arbs.jsonl"), "--failed", str(det / "failed.jsonl"),
        "--out", str(out / "clusters" / "clusters.json"))
    run("metrics", "--arbs", str(det / "arbs.jsonl"), "--failed", str(det / "failed.jsonl"),
        "--clusters", str(out / "clusters" / "clusters.json"), "--blocks", str(ing / "blocks.jsonl"),
        "--out", str(out / "metrics"))
    stage.mkdir(parents=True, exist_ok=True)
    for src in (det / "arbs.jsonl", det / "failed.jsonl", det / "detect_summary.json",
                out / "clusters" / "clusters.json", ing / "blocks.jsonl"):
        shutil.copy2(src, stage / src.name)
    run("report", "--in", str(stage), "--out", str(out / "report"))
    run("report", "verify", "--in", str(out / "report"))
    return out / "report"


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default="out/demo")
    ap.add_argument("--fixtures", default=str(ROOT / "demo" / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    if out.exists():
        shutil.rmtree(out)
    report = pipeline(Path(args.fixtures), out)
    print(f"report written to {report}")
