"""Monte Carlo experiment runner and result emission.

One channel realization per trial is shared by every configuration point
so comparisons are paired.  Stage 1 runs once per (point, trial); the
power sweep only repeats the water-filling stage.  Rows are gathered and
sorted deterministically, so the CSV is a pure function of the config.
Per-row wall times are kept out of the CSV (they would break rerun
byte-identity) and go to a sidecar log instead.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

from .channel import build_channel_set
from .config import ArchitecturePoint, ScenarioConfig, dbm_to_watt
from .optimize import (
    GreedyConfig,
    SumGainProblem,
    average_rate,
    solve_continuous,
    solve_discrete_greedy,
    solve_frequency_independent,
    water_filling,
)

CSV_COLUMNS = (
    "architecture",
    "group_size",
    "mode",
    "power_dbm",
    "trial",
    "seed",
    "channel_hash",
    "rate_bps_hz",
    "sum_gain",
    "status",
    "error",
)

MAX_WORKERS = 8


@dataclass(frozen=True)
class ResultRow:
    architecture: str
    group_size: int
    mode: str
    power_dbm: float
    trial: int
    seed: int
    channel_hash: str
    rate: float | None
    sum_gain: float | None
    status: str
    error: str
    wall_time: float


@dataclass(frozen=True)
class ResultTable:
    name: str
    rows: tuple[ResultRow, ...]

    @property
    def failed(self) -> int:
        return sum(1 for row in self.rows if row.status != "ok")


def _greedy_config(config: ScenarioConfig) -> GreedyConfig:
    return GreedyConfig(
        block_size=config.block_size,
        quantization=config.quantization(),
        max_sweeps=config.max_sweeps,
    )


def _stage1(config: ScenarioConfig, problem: SumGainProblem, seed: int):
    """Surface tuning for one (point, trial); returns (values, objective)."""
    if config.mode == "discrete":
        values, objective, _ = solve_discrete_greedy(problem, _greedy_config(config), seed)
    else:
        values, objective, _ = solve_continuous(problem, config.solver, seed)
    return values, objective


def _point_rows(config: ScenarioConfig, point: ArchitecturePoint, trial: int, cs):
    """All rows of one configuration point at one trial (every power level).

    Stage 1 runs once per design; only water-filling repeats per power.
    The sum_gain column always reports the true-model sum gain of the
    deployed susceptances, so wideband-aware and flat designs compare
    directly.
    """
    seed = config.base_seed + trial
    rows = []
    problem = SumGainProblem(
        adm=cs.adm,
        topology=config.topology(point),
        model=config.model,
        omegas=config.grid.omegas,
    )

    designs = []
    t0 = time.perf_counter()
    try:
        values, objective = _stage1(config, problem, seed)
        designs.append((config.mode, problem.channels(values), objective, "", time.perf_counter() - t0))
    except Exception as exc:  # noqa: BLE001 - failed rows must not stop the run
        designs.append((config.mode, None, None, str(exc), time.perf_counter() - t0))
    if config.frequency_independent:
        t0 = time.perf_counter()
        try:
            fi = solve_frequency_independent(
                problem,
                power=1.0,
                sigma2=config.sigma2_watt,
                seed=seed,
                mode=config.mode,
                solver_config=config.solver,
                greedy_config=_greedy_config(config) if config.mode == "discrete" else None,
            )
            true_objective = problem.objective(fi.values)
            designs.append(("flat", fi.channels, true_objective, "", time.perf_counter() - t0))
        except Exception as exc:  # noqa: BLE001
            designs.append(("flat", None, None, str(exc), time.perf_counter() - t0))

    for mode, channels, objective, error, stage1_time in designs:
        for power_dbm in config.power_sweep_dbm:
            t0 = time.perf_counter()
            rate = None
            status = "ok"
            message = error
            if channels is None:
                status = "failed"
            else:
                try:
                    alloc = water_filling(
                        channels, dbm_to_watt(power_dbm), config.sigma2_watt
                    )
                    rate = average_rate(channels, alloc)
                except Exception as exc:  # noqa: BLE001
                    status = "failed"
                    message = str(exc)
            rows.append(
                ResultRow(
                    architecture=point.architecture,
                    group_size=point.group_size,
                    mode=mode,
                    power_dbm=power_dbm,
                    trial=trial,
                    seed=seed,
                    channel_hash=cs.channel_hash,
                    rate=rate,
                    sum_gain=objective,
                    status=status,
                    error=message,
                    wall_time=stage1_time + time.perf_counter() - t0,
                )
            )
    return rows


def _trial_rows(config: ScenarioConfig, trial: int):
    seed = config.base_seed + trial
    cs = build_channel_set(
        seed,
        config.elements,
        config.tap_counts,
        config.pathloss,
        config.grid.subcarriers,
        config.y0,
    )
    rows = []
    for point in config.points:
        rows.extend(_point_rows(config, point, trial, cs))
    return rows


def run_experiment(config: ScenarioConfig) -> ResultTable:
    """Run every (point, power, trial) cell; never raises on solver failures."""
    workers = min(MAX_WORKERS, config.trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(lambda t: _trial_rows(config, t), range(config.trials)))
    else:
        per_trial = [_trial_rows(config, t) for t in range(config.trials)]
    rows = [row for batch in per_trial for row in batch]
    rows.sort(
        key=lambda r: (r.architecture, r.group_size, r.mode, r.power_dbm, r.trial)
    )
    return ResultTable(name=config.name, rows=tuple(rows))


def table_to_frame(table: ResultTable) -> pd.DataFrame:
    records = []
    for row in table.rows:
        records.append(
            {
                "architecture": row.architecture,
                "group_size": row.group_size,
                "mode": row.mode,
                "power_dbm": row.power_dbm,
                "trial": row.trial,
                "seed": row.seed,
                "channel_hash": row.channel_hash,
                "rate_bps_hz": row.rate,
                "sum_gain": row.sum_gain,
                "status": row.status,
                "error": row.error,
            }
        )
    return pd.DataFrame.from_records(records, columns=list(CSV_COLUMNS))


def plot_rate_vs_power(table: ResultTable):
    """Mean rate against transmit power, one line per configuration."""
    frame = table_to_frame(table)
    frame = frame[frame["status"] == "ok"]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    grouped = frame.groupby(["architecture", "group_size", "mode"], sort=True)
    for (arch, size, mode), sub in grouped:
        mean = sub.groupby("power_dbm", sort=True)["rate_bps_hz"].mean()
        ax.plot(mean.index, mean.values, marker="o", label=f"{arch}:{size} {mode}")
    ax.set_xlabel("transmit power (dBm)")
    ax.set_ylabel("average rate (bit/s/Hz)")
    ax.set_title(table.name)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig, ax


def emit_results(table: ResultTable, directory, plots: bool = True) -> list[Path]:
    """Write results.csv (+ rate_vs_power.svg, timings.log); returns paths."""
    if not table.rows:
        raise ValueError("refusing to emit an empty result table")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = directory / "results.csv"
    frame = table_to_frame(table)
    frame.to_csv(csv_path, index=False, lineterminator="\n")
    written.append(csv_path)

    log_path = directory / "timings.log"
    with open(log_path, "w", encoding="utf-8") as fh:
        for row in table.rows:
            fh.write(
                f"{row.architecture}:{row.group_size} mode={row.mode} "
                f"power_dbm={row.power_dbm} trial={row.trial} "
                f"wall_time={row.wall_time:.6f}\n"
            )
    written.append(log_path)

    if plots:
        fig, _ = plot_rate_vs_power(table)
        svg_path = directory / "rate_vs_power.svg"
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(svg_path)
    return written
