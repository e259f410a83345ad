"""Experiment runner: train every (mode, seed) cell, evaluate, and emit figure data.

Layout of an output directory::

    scenario.json
    runs/<mode>/seed<s>/episodes.csv        per-episode training metrics
    runs/<mode>/seed<s>/eval.csv            per-device communications of the final policy
    runs/<mode>/seed<s>/eval_cumulative.csv within-episode cumulative communications
    runs/<mode>/seed<s>/metrics/ppo_<u>.csv PPO diagnostics per agent
    runs/<mode>/seed<s>/checkpoints/        actor and critic per agent
    runs/<mode>/seed<s>/traj/eval_<e>.json  evaluation trajectories
    figures/fig*.csv, figures/fig6_<mode>.svg
    summary.csv, comparison.json

Nothing written depends on wall-clock time, so identical configurations give
byte-identical directories.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EnvConfig, desk_config
from .errors import UsageError
from .marl import (
    TRAIN_MODES,
    ObservationSpec,
    TrainResult,
    canonical_mode,
    evaluate,
    read_metrics_csv,
    save_bundles,
    train,
    write_metrics_csv,
)
from .ppo import PpoConfig
from .problem import TrajectoryRecord

FIGURE_NAMES = (
    "fig2_aoi_over_episodes",
    "fig3_communications",
    "fig4_distinct_served",
    "fig5_comms_vs_gen_period",
    "fig6_trajectories",
)
FIGURE_FIELDS = ("series", "x", "y", "std", "n")

# training settings used for the desk-scale scenario
DESK_EPISODES = 2000
DESK_SEEDS = (0, 1, 2)


def desk_ppo() -> PpoConfig:
    return PpoConfig()


def desk_observation() -> ObservationSpec:
    return ObservationSpec("augmented")


# rewards of every scheme are divided by the running std of the discounted return
DESK_REWARD_SCALE = 1.0
DESK_NORMALIZE = True


def tiny_ppo() -> PpoConfig:
    """Settings for the five-interval oracle instance: undiscounted, five episodes per update."""
    return PpoConfig(discount=1.0, rollout_length=25, learning_rate=1e-3)


@dataclass
class ExperimentConfig:
    scenario: str | Path | None = None
    modes: tuple = TRAIN_MODES
    episodes: int = DESK_EPISODES
    seeds: tuple = DESK_SEEDS
    out_dir: str | Path = "out"
    desk_scale: bool = False
    ppo: PpoConfig = field(default_factory=desk_ppo)
    observation: ObservationSpec = field(default_factory=desk_observation)
    reward_scale: float = DESK_REWARD_SCALE
    normalize_rewards: bool = DESK_NORMALIZE
    eval_episodes: int = 1
    hidden: tuple = (64, 64)

    def __post_init__(self):
        self.modes = tuple(canonical_mode(m) for m in self.modes)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.modes or not self.seeds:
            raise UsageError("an experiment needs at least one mode and one seed")
        if self.episodes < 1:
            raise UsageError("episodes must be positive")
        if self.scenario is None and not self.desk_scale:
            raise UsageError("give a scenario file or desk_scale")

    def env_config(self) -> EnvConfig:
        if self.desk_scale:
            return desk_config()
        return EnvConfig.from_json(self.scenario)


@dataclass
class FigureData:
    """Rows of (series, x, y, std, n): y is the mean over n seeds, std the population std."""

    name: str
    rows: list = field(default_factory=list)

    def add_series(self, label: str, x, samples) -> None:
        """``samples`` has one row per seed, aligned with ``x``."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        x = list(x)
        if samples.shape[1] != len(x):
            raise ValueError(f"{self.name}/{label}: {len(x)} x values for {samples.shape[1]} y values")
        if not np.all(np.isfinite(samples)):
            raise ValueError(f"{self.name}/{label}: non-finite values")
        mean, std = samples.mean(axis=0), samples.std(axis=0)
        for xi, m, s in zip(x, mean, std):
            self.rows.append((label, xi, float(m), float(s), samples.shape[0]))

    def series(self, label: str):
        rows = [r for r in self.rows if r[0] == label]
        return [r[1] for r in rows], [r[2] for r in rows]

    def write(self, directory: str | Path) -> Path:
        path = Path(directory) / f"{self.name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FIGURE_FIELDS)
            for label, x, y, s, n in self.rows:
                w.writerow([label, x, repr(y), repr(s), n])
        return path


def read_figure(path: str | Path) -> FigureData:
    fd = FigureData(Path(path).stem)
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            x = float(r["x"]) if "." in r["x"] else int(r["x"])
            fd.rows.append((r["series"], x, float(r["y"]), float(r["std"]), int(r["n"])))
    return fd


@dataclass
class RunOutcome:
    mode: str
    seed: int
    directory: Path
    train: TrainResult
    evaluations: list


def run_dir(out_dir, mode, seed) -> Path:
    return Path(out_dir) / "runs" / mode / f"seed{seed}"


def _write_eval(directory: Path, evaluations, cfg: EnvConfig) -> None:
    with (directory / "eval.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "device", "gen_period", "communications", "objective1", "objective2"])
        for e in evaluations:
            m = e.metrics
            for i, dev in enumerate(cfg.devices):
                w.writerow([m.episode, i, dev.gen_period_k, int(m.per_device_comms[i]), repr(m.objective1), repr(m.objective2)])
    with (directory / "eval_cumulative.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "t", "cumulative_communications"])
        for e in evaluations:
            for t, c in enumerate(e.metrics.cumulative_comms, start=1):
                w.writerow([e.metrics.episode, t, int(c)])
    (directory / "traj").mkdir(exist_ok=True)
    for e in evaluations:
        e.trajectory.save(directory / "traj" / f"eval_{e.metrics.episode}.json")


def run_cell(exp: ExperimentConfig, cfg: EnvConfig, mode: str, seed: int) -> RunOutcome:
    directory = run_dir(exp.out_dir, mode, seed)
    directory.mkdir(parents=True, exist_ok=True)
    res = train(
        mode,
        cfg,
        exp.ppo,
        exp.episodes,
        seed,
        exp.observation,
        hidden=exp.hidden,
        reward_scale=exp.reward_scale,
        metrics_dir=directory / "metrics",
        normalize_rewards=exp.normalize_rewards,
    )
    write_metrics_csv(directory / "episodes.csv", res.metrics)
    save_bundles(directory / "checkpoints", res)
    evals = evaluate(res.bundles, cfg, exp.eval_episodes, seed, exp.observation, mode)
    _write_eval(directory, evals, cfg)
    return RunOutcome(mode, seed, directory, res, evals)


def figure_data(exp: ExperimentConfig, cfg: EnvConfig) -> list[FigureData]:
    """Aggregate the per-run CSV files across seeds."""
    figs = {name: FigureData(name) for name in FIGURE_NAMES}
    for mode in exp.modes:
        episodes = [read_metrics_csv(run_dir(exp.out_dir, mode, s) / "episodes.csv") for s in exp.seeds]
        x = [r["episode"] for r in episodes[0]]
        figs["fig2_aoi_over_episodes"].add_series(mode, x, [[r["objective1"] for r in rows] for rows in episodes])
        figs["fig3_communications"].add_series(
            f"{mode}/per_episode", x, [[r["communications"] for r in rows] for rows in episodes]
        )
        figs["fig4_distinct_served"].add_series(mode, x, [[r["distinct_devices"] for r in rows] for rows in episodes])

        cumulative, per_device = [], []
        for s in exp.seeds:
            d = run_dir(exp.out_dir, mode, s)
            with (d / "eval_cumulative.csv").open(newline="") as fh:
                rows = [r for r in csv.DictReader(fh) if r["episode"] == "0"]
            cumulative.append([int(r["cumulative_communications"]) for r in rows])
            with (d / "eval.csv").open(newline="") as fh:
                counts = np.zeros(cfg.num_devices)
                for r in csv.DictReader(fh):
                    counts[int(r["device"])] += int(r["communications"])
            per_device.append(counts)
        figs["fig3_communications"].add_series(f"{mode}/within_episode", range(1, cfg.horizon + 1), cumulative)
        order = sorted(range(cfg.num_devices), key=lambda i: (cfg.devices[i].gen_period_k, i))
        per_device = np.array(per_device)[:, order]
        for col, i in enumerate(order):
            figs["fig5_comms_vs_gen_period"].add_series(
                f"{mode}/device{i}", [cfg.devices[i].gen_period_k], per_device[:, [col]]
            )

        traj = TrajectoryRecord.load(run_dir(exp.out_dir, mode, exp.seeds[0]) / "traj" / "eval_0.json")
        cells = traj.cells().astype(float) * cfg.grid_step
        for u in range(cfg.num_uavs):
            figs["fig6_trajectories"].add_series(f"{mode}/uav{u}/x", range(cells.shape[0]), cells[None, :, u, 0])
            figs["fig6_trajectories"].add_series(f"{mode}/uav{u}/y", range(cells.shape[0]), cells[None, :, u, 1])
    return [figs[n] for n in FIGURE_NAMES]


@dataclass
class SchemeRow:
    mode: str
    n_seeds: int
    episodes: int
    window: int
    objective1: float
    objective1_std: float
    objective2: float
    objective2_std: float
    communications: float
    communications_std: float
    distinct_devices: float
    distinct_devices_std: float
    scalars_exchanged: float


@dataclass
class Comparison:
    rows: list
    ordering_holds: bool | None

    def row(self, mode: str) -> SchemeRow:
        for r in self.rows:
            if r.mode == mode:
                return r
        raise KeyError(mode)

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        names = list(SchemeRow.__dataclass_fields__)
        with (directory / "summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for r in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, n) for n in names)])
        doc = {"ordering_centr_obj1_le_centr_obj2_le_dec": self.ordering_holds}
        (directory / "comparison.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def final_window(n_episodes: int) -> int:
    return max(1, int(np.ceil(0.1 * n_episodes)))


def compare_schemes(metric_files: dict) -> Comparison:
    """Final-window (last 10% of episodes) means per mode, with the std across seeds.

    ``metric_files`` maps a mode to its per-seed episode CSV paths.
    ``scalars_exchanged`` is the total over all episodes (mean across seeds).
    """
    rows = []
    lengths = set()
    for mode, paths in metric_files.items():
        per_seed = [read_metrics_csv(p) for p in paths]
        if not per_seed:
            raise UsageError(f"no metric files for mode {mode}")
        lengths.update(len(r) for r in per_seed)
        if len(lengths) != 1:
            raise UsageError(f"mismatched episode counts across metric files: {sorted(lengths)}")
        n = lengths.copy().pop()
        win = final_window(n)

        def stat(key):
            vals = np.array([np.mean([r[key] for r in rows_[-win:]]) for rows_ in per_seed])
            return float(vals.mean()), float(vals.std())

        o1, o2, cm, dd = stat("objective1"), stat("objective2"), stat("communications"), stat("distinct_devices")
        scalars = float(np.mean([sum(r["scalars_exchanged"] for r in rows_) for rows_ in per_seed]))
        rows.append(SchemeRow(canonical_mode(mode), len(per_seed), n, win, *o1, *o2, *cm, *dd, scalars))
    ordering = None
    modes = {r.mode: r.objective1 for r in rows}
    if all(m in modes for m in TRAIN_MODES):
        ordering = bool(modes["centr_obj1"] <= modes["centr_obj2"] <= modes["dec"])
    return Comparison(rows, ordering)


@dataclass
class ExperimentResult:
    out_dir: Path
    runs: list
    figures: list
    comparison: Comparison


def run_experiment(exp: ExperimentConfig, progress=None) -> ExperimentResult:
    cfg = exp.env_config()
    out = Path(exp.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "scenario.json").write_text(cfg.to_json())
    except OSError as err:
        raise UsageError(f"cannot write to output directory {out}: {err}") from err
    runs = []
    for mode in exp.modes:
        for seed in exp.seeds:
            runs.append(run_cell(exp, cfg, mode, seed))
            if progress is not None:
                progress(runs[-1])
    figs_dir = out / "figures"
    figs_dir.mkdir(exist_ok=True)
    figures = figure_data(exp, cfg)
    for f in figures:
        f.write(figs_dir)
    for mode in exp.modes:
        traj = TrajectoryRecord.load(run_dir(out, mode, exp.seeds[0]) / "traj" / "eval_0.json")
        render_trajectories(traj, cfg, figs_dir / f"fig6_{mode}.svg")
    comparison = compare_schemes(
        {m: [run_dir(out, m, s) / "episodes.csv" for s in exp.seeds] for m in exp.modes}
    )
    comparison.write(out)
    return ExperimentResult(out, runs, figures, comparison)


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_DASHES = ("none", "12 6", "4 4", "16 4 4 4", "2 6", "8 2")


def render_trajectories(traj: TrajectoryRecord, cfg: EnvConfig, path: str | Path) -> Path:
    """Overhead SVG: devices, one polyline per UAV (K+1 vertices), start markers.

    Coordinates are written in metres inside [0, area_x] x [0, area_y]; a
    group transform flips the y axis for display.
    """
    traj.require_complete(cfg)
    cells = traj.cells().astype(float) * cfg.grid_step
    W, H = cfg.area_x, cfg.area_y
    pad = 0.05 * max(W, H)
    r = 0.01 * max(W, H)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{-pad:g} {-pad:g} {W + 2 * pad:g} {H + 2 * pad:g}">',
        f'<g transform="translate(0 {H:g}) scale(1 -1)">',
        f'<rect class="area" x="0" y="0" width="{W:g}" height="{H:g}" fill="none" stroke="#999" stroke-width="{r / 4:g}"/>',
    ]
    for dev in cfg.devices:
        parts.append(
            f'<circle class="device" data-id="{dev.id}" data-k="{dev.gen_period_k}" cx="{dev.pos_x:g}" cy="{dev.pos_y:g}" r="{r:g}" fill="#333"/>'
        )
    for u in range(cfg.num_uavs):
        color, dash = _COLORS[u % len(_COLORS)], _DASHES[u % len(_DASHES)]
        pts = " ".join(f"{x:g},{y:g}" for x, y in cells[:, u])
        parts.append(
            f'<polyline class="uav" data-uav="{u}" points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{r / 2:g}" stroke-dasharray="{dash}"/>'
        )
        x0, y0 = cells[0, u]
        parts.append(
            f'<rect class="start" data-uav="{u}" x="{max(x0 - r, 0):g}" y="{max(y0 - r, 0):g}" '
            f'width="{min(2 * r, W - max(x0 - r, 0)):g}" height="{min(2 * r, H - max(y0 - r, 0)):g}" fill="{color}"/>'
        )
    parts += ["</g>", "</svg>", ""]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts))
    return path
