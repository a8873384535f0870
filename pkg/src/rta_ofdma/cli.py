"""Command line entry point: single runs, parameter sweeps and traces.

    rta-ofdma run   --algo ngra --f 3 --p 0.2 --lam 6
    rta-ofdma sweep --p 0 0.1 0.2 --f 1 2 3 --algo nuora ngra ncra --out grid.csv
    rta-ofdma trace --algo ncra --slots 200 --out trace.jsonl

Flags win over values from ``--config`` (a flat TOML file whose keys are
``SimConfig`` field names; the sweep axes may be given as lists).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import Algorithm, ConfigError, SimConfig, check_config
from .engine import run_replications, trace_run, write_trace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

OUTPUT_DIR_ENV = "RTA_OFDMA_OUTPUT_DIR"

# repo choice: no published lambda range to copy
DEFAULT_LAMBDAS = tuple(float(x) for x in np.round(np.logspace(np.log10(0.5), np.log10(50), 9), 4))

CSV_COLUMNS = (
    "algorithm", "f", "p", "lambda",
    "plr", "plr_ci_low", "plr_ci_high",
    "nonrta_share", "share_ci_low", "share_ci_high",
    "generated", "slots", "seed",
)

# sweep axis -> SimConfig field
AXES = {"algo": "algorithm", "f": "copies", "p": "noise_prob", "lam": "arrival_rate"}

_FIELD_TYPES = {
    "n_stas": int, "total_rus": int, "max_rta_rus": int, "copies": int, "seed": int, "horizon": int,
    "slot_duration": float, "delay_budget": float, "arrival_rate": float, "noise_prob": float,
    "algorithm": Algorithm.parse, "horizon_unit": str,
}


class CliError(Exception):
    exit_code = 2


class SweepIOError(CliError):
    exit_code = 1


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def load_config_file(path) -> dict:
    """Read a flat TOML file; unknown keys are an error."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise CliError(f"config file {path}: {exc}") from exc
    known = {f.name for f in fields(SimConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise CliError(f"config file {path}: unknown field(s) {', '.join(unknown)}")
    return data


def _coerce(name, value):
    try:
        return _FIELD_TYPES[name](value)
    except (TypeError, ValueError) as exc:
        raise CliError(f"{name}: cannot parse {value!r}") from exc


def parse_config(args: argparse.Namespace) -> tuple[SimConfig, dict]:
    """Build the base config and the sweep axes.

    Returns ``(cfg, axes)`` where ``axes`` maps SimConfig field names of the
    four sweep axes to lists of values. ``cfg`` carries the first value of
    each axis.
    """
    values: dict = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))

    scalar_flags = {
        "n_stas": "n_stas", "total_rus": "total_rus", "k": "max_rta_rus", "slot": "slot_duration",
        "budget": "delay_budget", "seed": "seed", "horizon": "horizon", "horizon_unit": "horizon_unit",
    }
    for flag, name in scalar_flags.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v

    axes = {}
    for flag, name in AXES.items():
        v = getattr(args, flag, None)
        if v is not None:
            axes[name] = list(v)
        elif name in values:
            axes[name] = _as_list(values[name])
        elif name == "arrival_rate" and args.command == "sweep":
            axes[name] = list(DEFAULT_LAMBDAS)
        else:
            axes[name] = [getattr(SimConfig, name)]
        axes[name] = [_coerce(name, x) for x in axes[name]]
        if not axes[name]:
            raise CliError(f"{name}: empty list")
        values[name] = axes[name][0]

    values = {k: _coerce(k, v) for k, v in values.items()}
    cfg = SimConfig(**values)
    for name, vals in axes.items():
        for v in vals:
            check_config(cfg.with_(**{name: v}))
    check_config(cfg)
    return cfg, axes


def grid_cells(cfg: SimConfig, axes: dict) -> list[SimConfig]:
    """Expand the sweep axes in a fixed order: algorithm, f, p, lambda."""
    cells = []
    for alg in axes.get("algorithm", [cfg.algorithm]):
        for f in axes.get("copies", [cfg.copies]):
            for p in axes.get("noise_prob", [cfg.noise_prob]):
                for lam in axes.get("arrival_rate", [cfg.arrival_rate]):
                    cells.append(cfg.with_(algorithm=alg, copies=f, noise_prob=p, arrival_rate=lam))
    return cells


def _cell_key(cfg: SimConfig, seed: int) -> tuple:
    return (cfg.algorithm.value, str(cfg.copies), repr(cfg.noise_prob), repr(cfg.arrival_rate), str(seed))


def result_row(cfg: SimConfig, res) -> list[str]:
    return [
        cfg.algorithm.value, str(cfg.copies), repr(cfg.noise_prob), repr(cfg.arrival_rate),
        *(repr(float(x)) for x in (res.plr, *res.plr_ci95, res.nonrta_share, *res.nonrta_ci95)),
        str(res.generated), str(res.slots), str(res.seed),
    ]


def read_sweep(path) -> list[dict]:
    """Rows of a sweep CSV with numeric columns converted."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    ints = {"f", "generated", "slots", "seed"}
    out = []
    for r in rows:
        out.append({k: (int(v) if k in ints else v if k == "algorithm" else float(v)) for k, v in r.items()})
    return out


def _open_sweep(path: Path, cells: list[SimConfig], seed: int):
    """Open ``path`` for appending rows, validating any rows already there.

    Returns the handle and the number of cells already written.
    """
    if path.exists() and path.stat().st_size > 0:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is not None and tuple(header) != CSV_COLUMNS:
                raise CliError(f"{path}: existing file has a different header")
            existing = [tuple(r[i] for i in (0, 1, 2, 3, 12)) for r in reader if r]
        if len(existing) > len(cells) or any(
            key != _cell_key(c, seed) for key, c in zip(existing, cells)
        ):
            raise CliError(f"{path}: existing rows do not match this grid; use a new output file")
        return open(path, "a", newline="", encoding="utf-8"), len(existing)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="", encoding="utf-8")
    csv.writer(fh, lineterminator="\n").writerow(CSV_COLUMNS)
    fh.flush()
    return fh, 0


def run_sweep(
    cells: list[SimConfig],
    reps: int,
    seed: int,
    path,
    workers: int = 1,
    backend: str = "fast",
    log=None,
) -> int:
    """Simulate every cell and append one CSV row per cell to ``path``.

    Rows already present (a prefix of the same grid with the same seed)
    are kept and their cells skipped, so an interrupted sweep resumes where
    it stopped. Returns the number of completed cells.
    """
    path = Path(path)
    try:
        fh, done = _open_sweep(path, cells, seed)
    except OSError as exc:
        raise SweepIOError(f"I/O failure after 0 completed cells: {exc}") from exc
    writer = csv.writer(fh, lineterminator="\n")
    try:
        for cell in cells[done:]:
            res = run_replications(cell.with_(seed=seed), reps, seed, backend=backend, workers=workers)
            writer.writerow(result_row(cell, res))
            fh.flush()
            done += 1
            if log is not None:
                log(
                    f"[{done}/{len(cells)}] {cell.algorithm.value} f={cell.copies} p={cell.noise_prob} "
                    f"lam={cell.arrival_rate} plr={res.plr:.3g} share={res.nonrta_share:.4f}"
                )
    except OSError as exc:
        raise SweepIOError(f"I/O failure after {done} completed cells: {exc}") from exc
    finally:
        fh.close()
    return done


def load_arrivals(source: Optional[str], slot_duration: float) -> Optional[dict]:
    """Parse forced arrivals given as JSON (inline or a file path) mapping
    StaId to arrival instants in slot units."""
    if not source:
        return None
    text = Path(source).read_text() if os.path.exists(source) else source
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"arrivals: not valid JSON ({exc})") from exc
    return {int(s): [float(t) * slot_duration for t in ts] for s, ts in raw.items()}


def emit_trace(cfg: SimConfig, n_slots: int, out, arrivals: Optional[dict] = None) -> int:
    """Write ``n_slots`` per-slot records as JSON lines; returns the count."""
    if n_slots > 10_000:
        raise CliError("slots: traces are limited to 10000 slots")
    records = trace_run(cfg, n_slots, arrivals=arrivals)
    write_trace(records, out)
    return len(records)


def _output_path(name: Optional[str], default: str) -> Path:
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    p = Path(name or default)
    return p if p.is_absolute() else base / p


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with SimConfig fields")
    common.add_argument("--algo", nargs="+", help="nuora, ngra and/or ncra")
    common.add_argument("--f", nargs="+", type=int, help="copies per frame")
    common.add_argument("--p", nargs="+", type=float, help="per-RU noise probability")
    common.add_argument("--lam", nargs="+", type=float, help="arrival rate, packets/s per STA")
    common.add_argument("--n-stas", dest="n_stas", type=int)
    common.add_argument("--total-rus", dest="total_rus", type=int)
    common.add_argument("--k", type=int, help="max RTA RUs per slot")
    common.add_argument("--slot", type=float, help="slot duration in seconds")
    common.add_argument("--budget", type=float, help="delay budget in seconds")
    common.add_argument("--seed", type=int)
    common.add_argument("--horizon", type=int)
    common.add_argument("--horizon-unit", dest="horizon_unit", choices=("packets", "slots"))
    common.add_argument("--backend", choices=("fast", "reference"), default="fast")

    parser = argparse.ArgumentParser(prog="rta-ofdma", description="Uplink OFDMA RTA scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common], help="simulate one configuration")
    p_run.add_argument("--reps", type=int, default=1)
    p_run.add_argument("--workers", type=int, default=1)

    p_sweep = sub.add_parser("sweep", parents=[common], help="simulate a parameter grid into a CSV")
    p_sweep.add_argument("--reps", type=int, default=1)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--out", help="CSV path (relative paths go under $%s)" % OUTPUT_DIR_ENV)

    p_trace = sub.add_parser("trace", parents=[common], help="write a per-slot JSON-lines trace")
    p_trace.add_argument("--slots", type=int, default=100)
    p_trace.add_argument("--arrivals", help="JSON {sta: [times in slots]} inline or as a file")
    p_trace.add_argument("--out", help="trace path, '-' for stdout")
    return parser


def _note_large_f(axes: dict) -> None:
    if any(f >= 4 for f in axes.get("copies", [])):
        print("note: f >= 4 tends to raise PLR over f = 3 in the reference scenario", file=sys.stderr)


def main(argv: Optional[Iterable[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(None if argv is None else list(argv))
    try:
        cfg, axes = parse_config(args)
        _note_large_f(axes)
        if args.command == "run":
            cells = grid_cells(cfg, axes)
            if len(cells) != 1:
                raise CliError("run takes single values; use sweep for grids")
            res = run_replications(cfg, args.reps, cfg.seed, backend=args.backend, workers=args.workers)
            json.dump(res.summary(), sys.stdout, indent=2)
            sys.stdout.write("\n")
        elif args.command == "sweep":
            cells = grid_cells(cfg, axes)
            out = _output_path(args.out, "sweep.csv")
            done = run_sweep(
                cells, args.reps, cfg.seed, out, workers=args.workers, backend=args.backend,
                log=lambda msg: print(msg, file=sys.stderr, flush=True),
            )
            print(f"{done} cells written to {out}", file=sys.stderr)
        elif args.command == "trace":
            if len(grid_cells(cfg, axes)) != 1:
                raise CliError("trace takes single values")
            arrivals = load_arrivals(args.arrivals, cfg.slot_duration)
            if args.out == "-":
                emit_trace(cfg, args.slots, sys.stdout, arrivals)
            else:
                out = _output_path(args.out, "trace.jsonl")
                out.parent.mkdir(parents=True, exist_ok=True)
                buf = io.StringIO()
                n = emit_trace(cfg, args.slots, buf, arrivals)
                out.write_text(buf.getvalue(), encoding="utf-8")
                print(f"{n} slots written to {out}", file=sys.stderr)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return 2
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
