"""Command line: ``stepseq {plan,tinfo,train,compare}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .harness import (
    ExperimentConfig,
    compare,
    convergence_metrics,
    run_experiment_detailed,
    write_run,
    _atomic_write,
    _slug,
)
from .sampler import SamplerConfig, SamplerConfigError, plan_report
from .seqnet import save_checkpoint
from .temporal import load_annotations, total_temporal_info

log = logging.getLogger("stepseq")

TINFO_FIELDS = ["prev", "next", "t_between", "t_within_overlap", "t_within_disjoint", "t_within", "t_total"]


def cmd_plan(args) -> int:
    cfg = SamplerConfig(args.batch_size, args.step_size, args.step_stride)
    try:
        rep = plan_report(cfg, args.dataset_len)
    except SamplerConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"batch size L={cfg.batch_size}, step size m={cfg.step_size}, step stride n={cfg.step_stride}")
    print(f"window starts: {rep['starts']}")
    print(f"windows per batch: {rep['window_count']} (d = {rep['d_exact']})")
    print(f"dropped tail per batch: {rep['dropped_tail_len']}")
    if args.dataset_len is not None:
        print(f"sub-batches over {args.dataset_len} items: {rep['total_sub_batches']}")
    print(json.dumps(rep))
    return 0


def tinfo_rows(scenes, pair=None) -> list[dict]:
    pairs = [tuple(pair)] if pair else [(k - 1, k) for k in range(1, len(scenes))]
    rows = []
    for i, j in pairs:
        rep = total_temporal_info(scenes[i], scenes[j])
        rows.append({"prev": i, "next": j, **asdict(rep)})
    if len(rows) > 1:
        keys = TINFO_FIELDS[2:]
        total = {k: sum(r[k] for r in rows) for k in keys}
        rows.append({"prev": "all", "next": "sum", **total})
        rows.append({"prev": "all", "next": "mean", **{k: v / (len(rows) - 1) for k, v in total.items()}})
    return rows


def cmd_tinfo(args) -> int:
    scenes = load_annotations(args.annotations)
    if args.pair and not all(0 <= k < len(scenes) for k in args.pair):
        print(f"error: --pair indices must lie in [0, {len(scenes)})", file=sys.stderr)
        return 2
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TINFO_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in tinfo_rows(scenes, args.pair):
        w.writerow({k: (f"{v:.9f}" if isinstance(v, float) else v) for k, v in row.items()})
    if args.out:
        _atomic_write(Path(args.out), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _summary(result, tau, tail) -> dict:
    tail = min(tail, len(result.records))
    if not result.records:
        return {"name": result.config.name, "epochs": 0}
    s = convergence_metrics(result.records, tau, tail)
    return {"name": result.config.name, **asdict(s), "final": asdict(result.records[-1])}


def cmd_train(args) -> int:
    cfg = ExperimentConfig.from_dict(json.loads(Path(args.config).read_text()))
    result = run_experiment_detailed(cfg)
    out = Path(args.out)
    paths = write_run(result, out)
    spec = cfg.model.build(*_dims(result))
    save_checkpoint(out / f"{_slug(cfg.name)}.ckpt", spec, result.params)
    summary = _summary(result, args.tau, args.tail)
    _atomic_write(out / f"{_slug(cfg.name)}.summary.json", json.dumps(summary, indent=2) + "\n")
    print(f"wrote {paths['csv']}")
    return 0


def _dims(result):
    p = result.params
    return p["embed.W"].shape[1], p["out.b"].shape[0]


def load_config_list(path) -> list[ExperimentConfig]:
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict) and "experiments" in doc:
        doc = doc["experiments"]
    if not isinstance(doc, list):
        raise ValueError("compare config must be a list of experiments or {'experiments': [...]}")
    return [ExperimentConfig.from_dict(d) for d in doc]


def cmd_compare(args) -> int:
    configs = load_config_list(args.configs)
    checkpoints = [int(c) for c in args.checkpoints.split(",") if c.strip()]
    comp = compare(configs, checkpoints)
    out = Path(args.out)
    for r in comp.results:
        write_run(r, out)
    _atomic_write(out / "comparison.csv", comp.to_csv())
    summaries = [_summary(r, args.tau, args.tail) for r in comp.results]
    _atomic_write(out / "summary.json", json.dumps(summaries, indent=2) + "\n")
    sys.stdout.write(comp.to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stepseq", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="print the stepped window plan for one batch")
    p.add_argument("--batch-size", type=int, required=True)
    p.add_argument("--step-size", type=int, required=True)
    p.add_argument("--step-stride", type=int, required=True)
    p.add_argument("--dataset-len", type=int)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("tinfo", help="temporal information of annotated frame pairs, as CSV")
    p.add_argument("--annotations", required=True)
    p.add_argument("--pair", type=int, nargs=2, metavar=("I", "J"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_tinfo)

    for name, fn, help_ in (("train", cmd_train, "train one configuration"),
                            ("compare", cmd_compare, "run sampler variants and tabulate accuracy")):
        p = sub.add_parser(name, help=help_)
        if name == "train":
            p.add_argument("--config", required=True)
        else:
            p.add_argument("--configs", required=True)
            p.add_argument("--checkpoints", default="10,50,100,120,150")
        p.add_argument("--out", required=True)
        p.add_argument("--tau", type=float, default=None,
                       help="loss threshold (default: 1.2 x the run's minimum loss)")
        p.add_argument("--tail", type=int, default=20, help="epochs in the jitter window")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
