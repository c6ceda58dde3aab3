"""Command-line sweeps: parse a config, run replications, write CSV results.

Config files are flat ``key = value`` lines with ``#`` comments. Keys are the
fields of :class:`prosim.sim.SimConfig` plus the sweep keys ``sweep``,
``sweep_values``, ``replications`` and ``algorithms``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

from scipy import stats

from prosim.sim import ALGORITHMS, ConfigError, MetricsRecord, SimConfig, Simulator

SWEEPS = {
    "density": ("n_vehicles", (100, 150, 200, 250, 300)),
    "traffic": ("n_cbr_pairs", (20, 40, 60, 80, 100)),
}
SWEEP_KEYS = ("sweep", "sweep_values", "replications", "algorithms")
RESULT_COLUMNS = ("scenario_id", "algorithm", "seed", "n_vehicles", "n_cbr_pairs", "generated",
                  "delivered", "pdr", "avg_delay_s", "throughput", "drop_queue", "drop_sinr",
                  "drop_void", "drop_limit")
SUMMARY_COLUMNS = ("algorithm", "parameter", "value", "runs", "pdr_mean", "pdr_ci95",
                   "avg_delay_s_mean", "avg_delay_s_ci95", "throughput_mean", "throughput_ci95")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str = "n_vehicles"
    values: tuple[int, ...] = (100,)
    replications: int = 3
    algorithms: tuple[str, ...] = ("pro",)

    def __post_init__(self):
        if self.parameter not in ("n_vehicles", "n_cbr_pairs"):
            raise ConfigError(f"sweep: unknown swept parameter {self.parameter!r}")
        if not self.values:
            raise ConfigError("sweep_values: must not be empty")
        if list(self.values) != sorted(self.values) or len(set(self.values)) != len(self.values):
            raise ConfigError(f"sweep_values: must be strictly ascending (got {self.values})")
        if self.replications < 1:
            raise ConfigError(f"replications: must be >= 1 (got {self.replications})")
        if not self.algorithms:
            raise ConfigError("algorithms: must not be empty")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"algorithms: unknown algorithm {a!r}")


# --- config text ----------------------------------------------------------------------


def _field_types() -> dict[str, str]:
    return {f.name: str(f.type) for f in fields(SimConfig)}


def _convert(key: str, raw: str, kind: str):
    text = raw.strip()
    try:
        if "None" in kind and text.lower() in ("none", "auto", ""):
            return None
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw.strip()!r} as {kind.split(' ')[0]}") from None


def parse_config_text(text: str) -> tuple[SimConfig, SweepSpec]:
    """Parse config text; an empty text gives every default."""
    types = _field_types()
    values: dict = {}
    sweep: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in values or key in sweep:
            raise ConfigError(f"{key}: set more than once")
        if key in types:
            values[key] = _convert(key, raw, types[key])
        elif key in SWEEP_KEYS:
            sweep[key] = raw
        else:
            raise ConfigError(f"{key}: unknown key")
    cfg = SimConfig(**values)
    return cfg, _sweep_from(sweep, cfg)


def _sweep_from(raw: dict, cfg: SimConfig) -> SweepSpec:
    name = raw.get("sweep", "").strip()
    if name and name not in SWEEPS:
        raise ConfigError(f"sweep: must be one of {sorted(SWEEPS)} (got {name!r})")
    if name:
        parameter, values = SWEEPS[name]
    else:
        parameter, values = "n_vehicles", (cfg.n_vehicles,)
    if "sweep_values" in raw:
        try:
            values = tuple(int(v) for v in raw["sweep_values"].replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"sweep_values: expected integers (got {raw['sweep_values']!r})") \
                from None
    try:
        reps = int(raw.get("replications", "3"))
    except ValueError:
        raise ConfigError(f"replications: expected an integer (got {raw['replications']!r})") \
            from None
    algos = tuple(raw.get("algorithms", "pro").replace(",", " ").split())
    return SweepSpec(parameter, values, reps, algos)


def parse_config(path: str | os.PathLike) -> tuple[SimConfig, SweepSpec]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def serialize_config(cfg: SimConfig, sweep: SweepSpec | None = None) -> str:
    """Config text that parses back to the same objects."""
    lines = []
    for f in fields(SimConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else repr(v) if isinstance(v, float) else v}")
    if sweep is not None:
        name = next(k for k, (param, _) in SWEEPS.items() if param == sweep.parameter)
        lines.append(f"sweep = {name}")
        lines.append(f"sweep_values = {', '.join(str(v) for v in sweep.values)}")
        lines.append(f"replications = {sweep.replications}")
        lines.append(f"algorithms = {', '.join(sweep.algorithms)}")
    return "\n".join(lines) + "\n"


# --- running ------------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    algorithm: str
    value: int
    replication: int
    cfg: SimConfig

    @property
    def scenario_id(self) -> str:
        return f"{self.cfg.algorithm}-{self.value}-r{self.replication}"


def plan_runs(cfg: SimConfig, sweep: SweepSpec) -> list[RunSpec]:
    """Runs in (algorithm, value, replication) order; seeds are base seed + replication."""
    runs = []
    for algo in sweep.algorithms:
        for value in sweep.values:
            for rep in range(sweep.replications):
                run_cfg = replace(cfg, algorithm=algo, seed=cfg.seed + rep,
                                  **{sweep.parameter: value})
                runs.append(RunSpec(algo, value, rep, run_cfg))
    return runs


def _execute(run: RunSpec, trace: bool = False) -> tuple[MetricsRecord, list[str]]:
    sim = Simulator(run.cfg, trace=trace, scenario_id=run.scenario_id)
    return sim.run(), sim.trace


def _execute_safe(args):
    run, trace = args
    try:
        return _execute(run, trace), None
    except Exception as exc:  # reported as an error row, the sweep stops
        return None, f"{type(exc).__name__}: {exc}"


def worker_count(n_runs: int) -> int:
    cap = os.environ.get("PRO_SIM_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_runs))


def record_row(rec: MetricsRecord) -> dict:
    return {
        "scenario_id": rec.scenario_id,
        "algorithm": rec.algorithm,
        "seed": rec.seed,
        "n_vehicles": rec.n_vehicles,
        "n_cbr_pairs": rec.n_cbr_pairs,
        "generated": rec.generated,
        "delivered": rec.delivered,
        "pdr": _fmt(rec.pdr),
        "avg_delay_s": _fmt(rec.avg_delay),
        "throughput": _fmt(rec.throughput),
        "drop_queue": rec.drops["queue_overflow"],
        "drop_sinr": rec.drops["sinr_fail"],
        "drop_void": rec.drops["void"],
        "drop_limit": rec.drops["hop_limit"] + rec.drops["ttl"],
    }


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def run_sweep(cfg: SimConfig, sweep: SweepSpec, trace: bool = False,
              progress=None) -> tuple[list[dict], list[list[str]], str | None]:
    """Run every planned simulation.

    Returns ``(rows, traces, error)``. Rows come back in plan order whatever
    the completion order. On the first failure the rows before it are kept and
    ``error`` describes the failure.
    """
    runs = plan_runs(cfg, sweep)
    jobs = [(r, trace) for r in runs]
    workers = worker_count(len(runs))
    if workers == 1:
        results = map(_execute_safe, jobs)
        return _collect(runs, results, progress)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return _collect(runs, pool.map(_execute_safe, jobs), progress)


def _collect(runs, results, progress):
    rows, traces = [], []
    for run, (ok, err) in zip(runs, results):
        if err is not None:
            return rows, traces, f"{run.scenario_id}: {err}"
        rec, tr = ok
        rows.append(record_row(rec))
        traces.append(tr)
        if progress is not None:
            progress(run, rec)
    return rows, traces, None


def _mean_ci(xs: Sequence[float]) -> tuple[float, float]:
    xs = [x for x in xs if not math.isnan(x)]
    if not xs:
        return math.nan, math.nan
    mean = sum(xs) / len(xs)
    if len(xs) < 2:
        return mean, math.nan
    var = sum((x - mean) ** 2 for x in xs) / (len(xs) - 1)
    half = stats.t.ppf(0.975, len(xs) - 1) * math.sqrt(var / len(xs))
    return mean, half


def summarize(rows: Sequence[dict], parameter: str) -> list[dict]:
    """Mean and 95% t-interval half-width per (algorithm, swept value), in first-seen order."""
    groups: dict[tuple[str, int], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["algorithm"], int(r[parameter])), []).append(r)
    out = []
    for (algo, value), rs in groups.items():
        row = {"algorithm": algo, "parameter": parameter, "value": value, "runs": len(rs)}
        for col in ("pdr", "avg_delay_s", "throughput"):
            mean, half = _mean_ci([float(r[col]) for r in rs])
            row[f"{col}_mean"] = _fmt(mean)
            row[f"{col}_ci95"] = _fmt(half)
        out.append(row)
    return out


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    path.write_text(buf.getvalue())


def error_row(message: str) -> dict:
    row = {c: "" for c in RESULT_COLUMNS}
    row["scenario_id"] = "ERROR"
    row["algorithm"] = message
    return row


# --- entry point ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prosim", description="Run VANET routing sweeps.")
    p.add_argument("--config", help="flat key = value config file (defaults when omitted)")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--algo", action="append", choices=ALGORITHMS,
                   help="algorithm to run; repeat for several (overrides the config)")
    p.add_argument("--sweep", choices=sorted(SWEEPS), help="swept parameter preset")
    p.add_argument("--trace", action="store_true", help="write per-run event traces")
    p.add_argument("--quiet", action="store_true", help="no progress output")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg, sweep = parse_config(args.config)
        else:
            cfg, sweep = parse_config_text("")
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.sweep:
            parameter, values = SWEEPS[args.sweep]
            sweep = replace(sweep, parameter=parameter, values=values)
        if args.algo:
            sweep = replace(sweep, algorithms=tuple(dict.fromkeys(args.algo)))
    except (ConfigError, OSError) as exc:
        print(f"prosim: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(serialize_config(cfg, sweep))

    def progress(run: RunSpec, rec: MetricsRecord) -> None:
        if not args.quiet:
            print(f"{run.scenario_id}: pdr={rec.pdr:.3f} delivered={rec.delivered}"
                  f"/{rec.generated}", file=sys.stderr)

    rows, traces, error = run_sweep(cfg, sweep, trace=args.trace, progress=progress)
    if error is not None:
        write_csv(out / "results.csv", RESULT_COLUMNS, rows + [error_row(error)])
        print(f"prosim: run failed: {error}", file=sys.stderr)
        return 1
    write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summarize(rows, sweep.parameter))
    if args.trace:
        with open(out / "trace.jsonl", "w") as fh:
            for row, tr in zip(rows, traces):
                for line in tr:
                    t, seq, kind, node, pid = line.split("\t")
                    fh.write(json.dumps({"scenario_id": row["scenario_id"], "time": float(t),
                                         "seq": int(seq), "kind": kind, "node": int(node),
                                         "packet": int(pid)}) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
