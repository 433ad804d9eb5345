"""Evaluation metric, scarcity sweeps, and result export.

The metric is the number of fully accommodated slices per episode, averaged
over independently generated instances. Instance seeds derive from the
config seed only, so two schedulers evaluated under the same config see the
same instances and their means compare pairwise.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import drn, sched
from .core import ConfigError, ScenarioConfig, generate_scenario, stream, STREAM_EVAL

__all__ = [
    "EvalResult",
    "SweepSpec",
    "SWEEP_AXES",
    "evaluate",
    "sweep",
    "sweep_point_config",
    "export_results",
    "threads_limit",
]

# Axis name -> how one swept value rebuilds the scenario config. Demand and
# capacity axes sweep the distribution mean; ranges are rebuilt so the base
# means reproduce the base ranges ([1, 2m-1] keeps a mean of m, [m-10, m+10]
# likewise).
SWEEP_AXES = ("slice_count", "vnfs_per_slice", "mean_demand", "mean_capacity")


def sweep_point_config(base: ScenarioConfig, axis: str, value: int) -> ScenarioConfig:
    if axis == "slice_count":
        return replace(base, l=int(value))
    if axis == "vnfs_per_slice":
        return replace(base, s=int(value))
    if axis == "mean_demand":
        return replace(base, demand_range=(1, 2 * int(value) - 1))
    if axis == "mean_capacity":
        return replace(base, cap_range=(int(value) - 10, int(value) + 10))
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def threads_limit() -> int:
    """Worker cap from SLICEFORGE_THREADS, defaulting to machine parallelism."""
    raw = os.environ.get("SLICEFORGE_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"SLICEFORGE_THREADS must be an integer, got {raw!r}")
        if value < 1:
            raise ConfigError("SLICEFORGE_THREADS must be at least 1")
        return value
    return os.cpu_count() or 1


@dataclass
class EvalResult:
    """Aggregated accommodation counts for one scheduler on one config."""

    scheduler: str
    config: ScenarioConfig
    episodes: int
    mean_accommodated: float
    std: float
    per_episode: np.ndarray  # (episodes,) int64


def _episode_count(
    kind: sched.SchedulerKind,
    config: ScenarioConfig,
    episode_seed: int,
    drn_params,
) -> int:
    scenario = generate_scenario(replace(config, seed=episode_seed))
    if kind is sched.SchedulerKind.ALL:
        return sched.run_baseline_all(scenario).count
    if kind is sched.SchedulerKind.DRN:
        trace = sched.run_episode(scenario, kind, drn_params=drn_params)
    else:
        trace = sched.run_episode(scenario, kind)
    return trace.n_accommodated


def evaluate(
    scheduler: sched.SchedulerKind | str,
    config: ScenarioConfig,
    episodes: int,
    *,
    drn_params: drn.DrnParams | None = None,
) -> EvalResult:
    """Mean accommodated slices over freshly generated paired instances."""
    if episodes < 1:
        raise ConfigError("episodes must be at least 1")
    kind = (
        scheduler
        if isinstance(scheduler, sched.SchedulerKind)
        else sched.SchedulerKind.parse(scheduler)
    )
    if kind is sched.SchedulerKind.DRN and drn_params is None:
        raise ConfigError("evaluating drn requires trained parameters")
    config.validate()

    seeds = stream(config.seed, STREAM_EVAL).integers(0, 2**63, size=episodes)
    workers = min(threads_limit(), episodes)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(
                pool.map(
                    lambda seed: _episode_count(kind, config, int(seed), drn_params),
                    seeds,
                )
            )
    else:
        counts = [_episode_count(kind, config, int(seed), drn_params) for seed in seeds]

    arr = np.array(counts, dtype=np.int64)
    return EvalResult(
        scheduler=kind.value,
        config=config,
        episodes=episodes,
        mean_accommodated=float(arr.mean()),
        std=float(arr.std()),
        per_episode=arr,
    )


@dataclass(frozen=True)
class SweepSpec:
    """One scarcity axis, the values to visit, and the base config."""

    axis: str
    values: tuple[int, ...]
    base: ScenarioConfig

    def validate(self) -> None:
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one axis value")
        self.base.validate()


def sweep(
    spec: SweepSpec,
    schedulers: Sequence[sched.SchedulerKind | str],
    *,
    episodes: int = 100,
    drn_provider: Callable[[ScenarioConfig], drn.DrnParams] | None = None,
) -> list[dict]:
    """Evaluate every scheduler at every axis point; one row per pair.

    ``drn_provider`` maps a point's config to trained parameters whose
    dimensions match that point.
    """
    spec.validate()
    kinds = [
        k if isinstance(k, sched.SchedulerKind) else sched.SchedulerKind.parse(k)
        for k in schedulers
    ]
    rows = []
    for value in spec.values:
        point = sweep_point_config(spec.base, spec.axis, value)
        for kind in kinds:
            params = None
            if kind is sched.SchedulerKind.DRN:
                if drn_provider is None:
                    raise ConfigError("sweeping drn requires a checkpoint provider")
                params = drn_provider(point)
            result = evaluate(kind, point, episodes, drn_params=params)
            rows.append(
                {
                    "axis": spec.axis,
                    "value": int(value),
                    "scheduler": kind.value,
                    "episodes": episodes,
                    "mean_accommodated": result.mean_accommodated,
                    "std": result.std,
                    "seed": spec.base.seed,
                }
            )
    return rows


CSV_COLUMNS = ["axis", "value", "scheduler", "episodes", "mean_accommodated", "std", "seed"]


def export_results(
    table: Sequence[dict],
    path: str | Path,
    fmt: str = "csv",
    header_comment: str | None = None,
) -> None:
    """Write sweep rows as CSV (fixed column order) or JSON."""
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                if header_comment is not None:
                    fh.write(f"# {header_comment}\n")
                writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
                writer.writeheader()
                for row in table:
                    writer.writerow({col: row[col] for col in CSV_COLUMNS})
        elif fmt == "json":
            doc: dict = {"rows": list(table)}
            if header_comment is not None:
                doc["config"] = header_comment
            path.write_text(json.dumps(doc, sort_keys=True) + "\n")
        else:
            raise ConfigError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def load_results(path: str | Path) -> list[dict]:
    """Read back a table written by export_results (either format)."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())["rows"]
    rows = []
    with path.open() as fh:
        lines = [line for line in fh if not line.startswith("#")]
    for row in csv.DictReader(lines):
        rows.append(
            {
                "axis": row["axis"],
                "value": int(row["value"]),
                "scheduler": row["scheduler"],
                "episodes": int(row["episodes"]),
                "mean_accommodated": float(row["mean_accommodated"]),
                "std": float(row["std"]),
                "seed": int(row["seed"]),
            }
        )
    return rows
