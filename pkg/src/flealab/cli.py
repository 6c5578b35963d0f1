"""Command-line runner: one experiment per invocation, CSV/SVG artifacts and a manifest.

    flealab <experiment> [--config FILE] [--seed N] [--out DIR] [--workers N] [key=value ...]
    flealab --replay OUT/manifest.json [--seed N] [--workers N] [--out DIR]
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config, experiments, output
from .errors import ConfigError, FleaLabError, ReplayMismatch

MANIFEST = "manifest.json"
EXIT_CONFIG, EXIT_NUMERIC, EXIT_REPLAY = 2, 3, 4


def run(cfg: config.ExperimentConfig, workers: int = 1, config_text: bytes | None = None) -> dict:
    """Execute ``cfg``, write its artifacts into cfg.output_dir and return the manifest."""
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    t0 = time.perf_counter()
    try:
        result = experiments.RUNNERS[cfg.experiment](cfg.params, cfg.seed, workers)
    except FleaLabError as exc:
        # surface the failing parameter set with the module error
        exc.args = (f"{exc} [experiment={cfg.experiment}, seed={cfg.seed}, "
                    f"params={output.canonical_json(cfg.params)}]",)
        raise
    wall = time.perf_counter() - t0
    files = []
    for table in result.tables:
        data = output.csv_bytes(table.header, table.rows)
        name = f"{table.name}.csv"
        (out / name).write_bytes(data)
        files.append({"file": name, "kind": "csv", "sha256": output.sha256(data),
                      "rows": len(table.rows)})
    for name, draw in result.figures:
        fig = draw(output.new_figure)
        output.save_svg(fig, out / name)
        files.append({"file": name, "kind": "svg", "sha256": output.file_sha256(out / name)})
    resolved = cfg.to_dict()
    inputs = {"resolved_config": output.sha256(output.canonical_json(resolved).encode())}
    if config_text is not None:
        inputs["config_file"] = output.sha256(config_text)
    manifest = {
        "tool": "flealab",
        "version": __version__,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": resolved["params"],
        "given_keys": list(cfg.given),
        "workers": workers,
        "wall_time_s": wall,
        "input_hashes": inputs,
        "outputs": files,
        "summary": result.summary,
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(path) -> dict:
    try:
        m = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    for key in ("version", "experiment", "seed", "config", "outputs"):
        if key not in m:
            raise ConfigError(f"manifest {path} lacks {key!r}")
    return m


def replay(manifest_path, seed: int | None = None, workers: int = 1,
           out_dir: str | None = None) -> dict:
    """Re-run a manifest and byte-compare every CSV; raises ReplayMismatch on difference."""
    old = load_manifest(manifest_path)
    if old["version"] != __version__:
        raise ConfigError(f"manifest was written by flealab {old['version']}, "
                          f"this is {__version__}")
    target = out_dir or str(Path(manifest_path).parent / "replay")
    cfg = config.resolve(dict(old["config"]), old["experiment"],
                         old["seed"] if seed is None else seed, target)
    new = run(cfg, workers)
    before = {f["file"]: f["sha256"] for f in old["outputs"] if f["kind"] == "csv"}
    after = {f["file"]: f["sha256"] for f in new["outputs"] if f["kind"] == "csv"}
    differing = sorted(f for f in before.keys() | after.keys() if before.get(f) != after.get(f))
    if differing:
        raise ReplayMismatch(f"replay diverged in {', '.join(differing)}", differing)
    return new


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flealab", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", nargs="?", help=" | ".join(config.EXPERIMENTS))
    ap.add_argument("overrides", nargs="*", metavar="key=value",
                    help="parameter overrides, applied after the config file")
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None, help="output directory (default: out)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--replay", metavar="MANIFEST", help="re-run a manifest and compare CSVs")
    ap.add_argument("--version", action="version", version=f"flealab {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_intermixed_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if args.replay:
            if args.experiment or args.overrides:
                raise ConfigError("--replay takes no experiment or overrides")
            m = replay(args.replay, args.seed, args.workers, args.out)
            print(f"replay identical: {len(m['outputs'])} files checked")
            return 0
        if not args.experiment:
            raise ConfigError("no experiment given; choose from " + ", ".join(config.EXPERIMENTS))
        text = Path(args.config).read_bytes() if args.config else None
        cfg = config.load(args.config, args.experiment, args.seed, args.out,
                          config.parse_overrides(args.overrides))
        m = run(cfg, args.workers, text)
        for f in m["outputs"]:
            print(Path(cfg.output_dir) / f["file"])
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplayMismatch as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    except FleaLabError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
