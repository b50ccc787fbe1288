"""Command-line interface: ``saddle run | validate | report``.

Exit codes: 0 success, 1 config error, 2 at least one run diverged (artifacts
are still written), 3 I/O error. The ``SADDLE_OUT`` environment variable
overrides the config's ``out_dir``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .algorithms import run
from .config import ExperimentSpec, RunLeaf, load_experiment, parse_run_name
from .errors import ConfigError
from .metrics import (
    format_value,
    loss_surface,
    read_rounds_csv,
    write_diagnostics_csv,
    write_rounds_csv,
    write_surface_csv,
)
from .models import Batch
from .rngs import TAG_METRICS, stream

__all__ = ["main", "cmd_run", "cmd_validate", "cmd_report"]

_SUMMARY_COLUMNS = (
    "group",
    "algorithm",
    "compression",
    "runs",
    "diverged",
    "final_acc_mean",
    "final_acc_std",
    "final_loss_mean",
    "final_loss_std",
    "bits_total_mean",
)

# rng sub-stream for the loss-surface slice directions (0..2 are used by the
# metrics module for eval subsets, power iteration and variance minibatches)
_SURFACE_STREAM = 3


class _MeanLoss:
    """Global objective: average of the per-agent losses at shared params."""

    def __init__(self, oracles):
        self.oracles = oracles

    def loss(self, params: np.ndarray, batch=None) -> float:
        return float(np.mean([o.loss(params, batch) for o in self.oracles]))


def _comp_label(leaf: RunLeaf) -> str:
    op = leaf.config.compression
    return "none" if op is None else op.label()


def _write_surface(leaf: RunLeaf, consensus: np.ndarray, path: Path) -> None:
    config = leaf.config
    batch = None
    if config.train is not None:
        batch = Batch.from_arrays(config.train.features, config.train.labels)
    coords, grid = loss_surface(
        _MeanLoss(config.oracles),
        consensus,
        batch,
        extent=leaf.surface.extent,
        grid_points=leaf.surface.grid,
        rng=stream(TAG_METRICS, config.seed, _SURFACE_STREAM),
    )
    write_surface_csv(coords, grid, path)


def _aggregate(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    data = np.asarray(values, dtype=float)
    return float(data.mean()), float(data.std())


def _write_summary(path: Path, leaves, results) -> None:
    """One aggregated row per sweep group, in expansion order.

    Accuracy/loss statistics are over the group's non-diverged runs
    (population std); diverged runs only increment the diverged count.
    """
    groups: list[str] = []
    members: dict[str, list] = {}
    for leaf, result in zip(leaves, results):
        if leaf.group not in members:
            groups.append(leaf.group)
            members[leaf.group] = []
        members[leaf.group].append((leaf, result))
    lines = [",".join(_SUMMARY_COLUMNS)]
    for group in groups:
        rows = members[group]
        first_leaf = rows[0][0]
        finished = [res.log for _, res in rows if not res.log.diverged]
        diverged = sum(1 for _, res in rows if res.log.diverged)
        acc_mean, acc_std = _aggregate([log.final_test_acc for log in finished])
        loss_mean, loss_std = _aggregate(
            [log.final_row.train_loss_mean for log in finished]
        )
        bits_mean, _ = _aggregate(
            [float(log.final_row.bits_transmitted_cumulative) for log in finished]
        )
        lines.append(
            ",".join(
                (
                    group,
                    first_leaf.config.algorithm,
                    _comp_label(first_leaf),
                    str(len(rows)),
                    str(diverged),
                    format_value(acc_mean),
                    format_value(acc_std),
                    format_value(loss_mean),
                    format_value(loss_std),
                    format_value(bits_mean),
                )
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_run(config_path: str) -> int:
    """Execute every sweep leaf and write run CSVs plus summary.csv."""
    spec = load_experiment(config_path)
    out_dir = os.environ.get("SADDLE_OUT") or spec.out_dir
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for leaf in spec.leaves:
        result = run(leaf.config)
        write_rounds_csv(result.log, out / f"{leaf.name}.csv")
        if leaf.diagnostics:
            write_diagnostics_csv(result.log, out / f"{leaf.name}_diag.csv")
        if leaf.surface is not None:
            _write_surface(leaf, result.consensus, out / f"{leaf.name}_surface.csv")
        results.append(result)
        status = "diverged" if result.log.diverged else "ok"
        print(
            f"{leaf.name}: {status} "
            f"acc={format_value(result.log.final_test_acc)} "
            f"loss={format_value(result.log.final_row.train_loss_mean)}"
        )
    _write_summary(out / "summary.csv", spec.leaves, results)
    print(f"wrote {len(spec.leaves)} run(s) to {out}")
    return 2 if any(res.log.diverged for res in results) else 0


def cmd_validate(config_path: str) -> int:
    """Parse + validate without executing anything."""
    spec = load_experiment(config_path)
    print(f"ok: {len(spec.leaves)} run(s), out_dir={spec.out_dir}")
    return 0


def _load_report_rows(directory: Path) -> list[dict]:
    entries = []
    for path in sorted(directory.glob("*.csv")):
        meta = parse_run_name(path.stem)
        if meta is None:
            continue
        rows = read_rounds_csv(path)
        final = rows[-1]
        meta["final_acc"] = final.test_acc_consensus
        meta["final_loss"] = final.train_loss_mean
        meta["bits"] = meta["bits"]
        meta["bits_total"] = final.bits_transmitted_cumulative
        entries.append(meta)
    return entries


def _effective_bits(meta: dict) -> int | None:
    """Payload width for the accuracy-vs-bits table; 32 = full precision."""
    if meta["compression"] == "none":
        return 32
    if meta["compression"] == "quant":
        return meta["bits"]
    return None  # topk / sign have no single bit width


def _print_table(header: tuple[str, ...], rows: list[tuple[str, ...]]) -> None:
    widths = [len(h) for h in header]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    for line in (header, *rows):
        print("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())


def cmd_report(directory: str) -> int:
    """Aggregate a directory of run CSVs into stdout tables."""
    root = Path(directory)
    if not root.is_dir():
        print(f"report: {directory} is not a directory", file=sys.stderr)
        return 3
    entries = _load_report_rows(root)
    if not entries:
        print(f"report: no run CSVs in {directory}", file=sys.stderr)
        return 1

    grouped: dict[str, list[dict]] = {}
    for entry in entries:
        grouped.setdefault(entry["group"], []).append(entry)

    def sort_key(item):
        group, rows = item
        meta = rows[0]
        bits = _effective_bits(meta)
        alpha = meta["alpha"] if meta["alpha"] is not None else -1.0
        # baseline (widest payload) first within each algorithm
        return (meta["algorithm"], alpha, -(bits if bits is not None else 0), group)

    ordered = sorted(grouped.items(), key=sort_key)

    print("accuracy vs payload width")
    acc_rows = []
    for group, rows in ordered:
        meta = rows[0]
        bits = _effective_bits(meta)
        accs = [r["final_acc"] for r in rows]
        mean, std = _aggregate(accs)
        tag = ""
        if bits == 32:
            tag = " *"
        acc_rows.append(
            (
                group,
                meta["algorithm"],
                (str(bits) if bits is not None else "-") + tag,
                str(len(rows)),
                f"{mean:.4f}",
                f"{std:.4f}",
            )
        )
    _print_table(
        ("group", "algorithm", "bits", "runs", "acc_mean", "acc_std"), acc_rows
    )
    if any(row[2].endswith(" *") for row in acc_rows):
        print("* full-precision baseline (b=32)")
    print()

    # communication cost vs the same-algorithm full-precision baseline
    baselines: dict[tuple, float] = {}
    for group, rows in ordered:
        meta = rows[0]
        if _effective_bits(meta) == 32:
            key = (meta["algorithm"], meta["alpha"])
            bits_mean, _ = _aggregate([float(r["bits_total"]) for r in rows])
            baselines.setdefault(key, bits_mean)

    print("communication cost")
    cost_rows = []
    for group, rows in ordered:
        meta = rows[0]
        bits_mean, _ = _aggregate([float(r["bits_total"]) for r in rows])
        base = baselines.get((meta["algorithm"], meta["alpha"]))
        if base is not None and bits_mean > 0:
            ratio = f"{base / bits_mean:.3f}"
        else:
            ratio = "-"
        cost_rows.append(
            (
                group,
                meta["compression"],
                f"{bits_mean:.6g}",
                f"{bits_mean / 8e9:.6g}",
                ratio,
            )
        )
    _print_table(
        ("group", "compression", "bits_total_mean", "gb_total_mean", "ratio_vs_b32"),
        cost_rows,
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="saddle",
        description="Deterministic decentralized-learning experiment runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="execute a config (all sweep leaves)")
    run_parser.add_argument("--config", required=True, help="path to a key=value config file")
    validate_parser = sub.add_parser("validate", help="check a config without running")
    validate_parser.add_argument("--config", required=True, help="path to a key=value config file")
    report_parser = sub.add_parser("report", help="summarize a directory of run CSVs")
    report_parser.add_argument("--dir", required=True, help="directory containing run CSVs")
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "validate":
            return cmd_validate(args.config)
        return cmd_report(args.dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
