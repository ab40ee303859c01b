#!/usr/bin/env python3
"""
Orbit - Spatiotemporal Retrieval Benchmarks

Command-line driver for the benchmark harness: synthetic data generation,
the streaming maintenance ablation, ef_search / temporal scale / weight
sweeps, the method comparison and window snapshots.
"""

import argparse
import logging
import sys
from pathlib import Path

from config.settings import ExperimentConfig, load_experiment_config, settings
from orbit.errors import OrbitError
from orbit.harness import experiments
from orbit.harness.dataset import generate_dataset, records_frame
from orbit.harness.metrics import write_metrics
from orbit.harness.snapshot import restore, snapshot

COMMANDS = ("generate", "stream-ablation", "ef-sweep", "alpha-sweep", "weight-ablation", "compare", "snapshot", "restore")


def print_banner():
    """Prints welcome banner."""
    print("\n" + "=" * 80)
    print("ORBIT - Rotary Spatiotemporal Retrieval")
    print("=" * 80 + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orbit",
        description="Benchmarks for weighted spatiotemporal vector retrieval.",
    )
    parser.add_argument("command", choices=COMMANDS, help="Experiment or tool to run")
    parser.add_argument("--config", type=Path, default=None, help="Experiment YAML (default: ORBIT_CONFIG_PATH)")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--out", type=str, default=None, help="Output directory (default: config output_dir)")
    parser.add_argument("--method", choices=("all",) + experiments.METHODS, default=None,
                        help="Method run by 'compare' (default: config method)")
    parser.add_argument("--path", type=Path, default=None, help="Snapshot file for snapshot / restore")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_experiment_config(args.config)
    return cfg.override(seed=args.seed, output_dir=args.out, method=args.method)


def run(args: argparse.Namespace) -> None:
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    name = f"{cfg.experiment_id}-{args.command}"
    logging.info("Running %s (seed %d)", args.command, cfg.seed)

    if args.command == "generate":
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{cfg.experiment_id}-records.csv"
        records_frame(generate_dataset(cfg)).to_csv(path, index=False, float_format="%.17g")
        print(f"[OK] {cfg.data.record_count} records written to {path}")
        return

    if args.command in ("snapshot", "restore"):
        path = args.path or out / f"{cfg.experiment_id}.snap"
        if args.command == "snapshot":
            window = experiments.build_window(cfg, generate_dataset(cfg))
            snapshot(window, path)
            print(f"[OK] Snapshot with {window.live_count()} live records written to {path}")
        else:
            window = restore(path)
            print(f"[OK] Restored {window.live_count()} live records (shift step {window.state.shift_step})")
        return

    summary = {}
    if args.command == "stream-ablation":
        rows = experiments.run_streaming_ablation(cfg)
        summary["maintenance_ratio"] = {str(k): v for k, v in experiments.maintenance_ratios(rows).items()}
    elif args.command == "ef-sweep":
        rows = experiments.run_ef_sweep(cfg)
    elif args.command == "alpha-sweep":
        rows = experiments.run_alpha_sweep(cfg)
    elif args.command == "weight-ablation":
        rows = experiments.run_weight_ablation(cfg)
    else:
        rows = experiments.run_method_comparison(cfg, experiments.selected_methods(cfg))

    csv_path, json_path = write_metrics(rows, out, name, cfg, summary)
    print(f"[OK] {len(rows)} rows: {csv_path} (summary: {json_path})")


def main():
    """Main entry point."""
    args = build_parser().parse_args()
    try:
        settings.validate()
        logging.basicConfig(level=settings.LOGGING.LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        print_banner()
        run(args)
    except KeyboardInterrupt:
        print("\n\n[EXIT] Cancelled\n")
    except OrbitError as e:
        print(f"\n[ERROR] {e}\n")
        sys.exit(1)


if __name__ == "__main__":
    main()
