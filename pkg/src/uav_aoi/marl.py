"""Multi-agent PPO over the AoI environment: observations, agents, training and evaluation.

Three schemes share one rollout loop:

* ``dec``: each critic sees only its own observation and each agent is paid
  its own r_u[t];
* ``centr_obj2``: same rewards, critics see the concatenated global state;
* ``centr_obj1``: every agent is paid the shared -S[t] (the weighted-AoI
  snapshot), so an episode return is exactly -objective1, and critics see the
  global state.

No parameters are ever shared between agents.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, EnvConfig
from .env import AoIEnv, move_mask
from .errors import UsageError
from .nn import Mlp, OptimizerState, load_checkpoint, save_checkpoint
from .policy import FactorizedHead
from .ppo import DiagnosticsLog, PpoConfig, RolloutBuffer, Transition, finalize, ppo_update
from .problem import TrajectoryRecord, report
from .state import NUM_MOVES, STAY, EnvState, JointAction

TRAIN_MODES = ("dec", "centr_obj1", "centr_obj2")
OBS_MODES = ("paper_literal", "augmented")
OBS_ENCODINGS = ("one_hot_cell", "normalized_xy")
METRIC_FIELDS = (
    "episode",
    "mode",
    "objective1",
    "objective2",
    "communications",
    "distinct_devices",
    "violations",
    "scalars_exchanged",
)


def canonical_mode(mode: str) -> str:
    """Accept ``centr-obj1`` style spellings as well."""
    m = mode.replace("-", "_")
    if m not in TRAIN_MODES:
        raise UsageError(f"unknown mode {mode!r}; expected one of {', '.join(TRAIN_MODES)}")
    return m


@dataclass(frozen=True)
class ObservationSpec:
    mode: str = "paper_literal"
    encoding: str = "one_hot_cell"

    def __post_init__(self):
        if self.mode not in OBS_MODES:
            raise ConfigError(f"observation mode must be one of {OBS_MODES}")
        if self.encoding not in OBS_ENCODINGS:
            raise ConfigError(f"observation encoding must be one of {OBS_ENCODINGS}")

    def length(self, cfg: EnvConfig) -> int:
        base = cfg.num_cells if self.encoding == "one_hot_cell" else 2
        return base + (2 if self.mode == "augmented" else 0)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "encoding": self.encoding}


def build_observation(state: EnvState, u: int, cfg: EnvConfig, spec: ObservationSpec) -> np.ndarray:
    """Local observation of UAV ``u``: its own cell, optionally time and remaining budget."""
    if not 0 <= u < cfg.num_uavs:
        raise UsageError(f"no UAV {u}")
    nx, ny = cfg.grid_shape
    x, y = (int(c) for c in state.uav_cells[u])
    if spec.encoding == "one_hot_cell":
        cell = np.zeros(nx * ny)
        cell[x * ny + y] = 1.0
    else:
        cell = np.array([x / max(nx - 1, 1), y / max(ny - 1, 1)])
    if spec.mode == "paper_literal":
        return cell
    uav = cfg.uavs[u]
    remaining = max(uav.max_flight_time - float(state.spent_flight[u]), 0.0) / uav.max_flight_time
    return np.concatenate([cell, [state.t / cfg.horizon, remaining]])


def global_state(observations) -> np.ndarray:
    return np.concatenate(observations)


def state_dim(cfg: EnvConfig, spec: ObservationSpec) -> int:
    """Length of the global state vector s[t] = (s_1, ..., s_U)."""
    return cfg.num_uavs * spec.length(cfg)


def scalars_per_episode(mode: str, cfg: EnvConfig, spec: ObservationSpec) -> int:
    """Closed form of the inter-agent exchange: 0 for dec, U*K*state_dim otherwise."""
    if canonical_mode(mode) == "dec":
        return 0
    return cfg.num_uavs * cfg.horizon * state_dim(cfg, spec)


class ReturnScaler:
    """Divides rewards by the running std of the discounted return.

    Fed only with the owning agent's rewards.
    """

    def __init__(self, discount: float, eps: float = 1e-8):
        self.discount = discount
        self.eps = eps
        self.running = 0.0
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def __call__(self, reward: float, done: bool) -> float:
        self.running = self.running * self.discount + reward
        # Welford update of the return variance
        self.count += 1
        delta = self.running - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (self.running - self.mean)
        if done:
            self.running = 0.0
        std = np.sqrt(self.m2 / self.count) if self.count > 1 else 0.0
        return reward / (std + self.eps) if std > 0 else reward


@dataclass
class AgentBundle:
    """Everything one UAV learns with. Nothing here points at another agent."""

    uav: int
    actor: Mlp
    critic: Mlp
    actor_opt: OptimizerState
    critic_opt: OptimizerState
    buffer: RolloutBuffer
    rng: np.random.Generator
    head: FactorizedHead
    diagnostics: DiagnosticsLog | None = None
    scaler: ReturnScaler | None = None

    def act(self, obs, mask, greedy: bool = False):
        logits = self.actor(obs)
        if greedy:
            move, bits = self.head.greedy(logits, mask)
            return move, bits, 0.0
        return self.head.sample(logits, mask, self.rng)

    def value(self, critic_in) -> float:
        return float(self.critic(critic_in)[0])

    def update(self, cfg: PpoConfig) -> dict:
        finalize(self.buffer, 0.0, cfg)
        diag = ppo_update(self.actor, self.critic, self.buffer, cfg, self.actor_opt, self.critic_opt, self.head, self.rng)
        if self.diagnostics is not None:
            self.diagnostics.append(diag)
        self.buffer.clear()
        return diag

    def save(self, directory: str | Path, **meta) -> None:
        directory = Path(directory)
        save_checkpoint(directory / f"agent{self.uav}_actor.json", self.actor, self.actor_opt, uav=self.uav, **meta)
        save_checkpoint(directory / f"agent{self.uav}_critic.json", self.critic, self.critic_opt, uav=self.uav, **meta)


def make_bundles(mode: str, cfg: EnvConfig, spec: ObservationSpec, ppo_cfg: PpoConfig, seed: int, hidden=(64, 64)):
    mode = canonical_mode(mode)
    obs_len = spec.length(cfg)
    critic_len = obs_len if mode == "dec" else state_dim(cfg, spec)
    head = FactorizedHead(NUM_MOVES, cfg.num_devices)
    bundles = []
    for u, ss in enumerate(np.random.SeedSequence(seed).spawn(cfg.num_uavs)):
        init_rng = np.random.default_rng(ss.spawn(1)[0])
        actor = Mlp([obs_len, *hidden, head.width], rng=init_rng)
        critic = Mlp([critic_len, *hidden, 1], rng=init_rng)
        bundles.append(
            AgentBundle(
                uav=u,
                actor=actor,
                critic=critic,
                actor_opt=OptimizerState.for_net(actor, lr=ppo_cfg.learning_rate),
                critic_opt=OptimizerState.for_net(critic, lr=ppo_cfg.learning_rate),
                buffer=RolloutBuffer(),
                rng=np.random.default_rng(ss),
                head=head,
            )
        )
    return bundles


def check_bundles(bundles, mode: str, cfg: EnvConfig, spec: ObservationSpec) -> None:
    """Startup validation of network widths against the scenario."""
    if len(bundles) != cfg.num_uavs:
        raise ConfigError(f"{len(bundles)} agents for {cfg.num_uavs} UAVs")
    critic_len = spec.length(cfg) if canonical_mode(mode) == "dec" else state_dim(cfg, spec)
    for b in bundles:
        if b.actor.input_size != spec.length(cfg):
            raise ConfigError(f"agent {b.uav}: actor input {b.actor.input_size} != observation length {spec.length(cfg)}")
        if b.actor.output_size != NUM_MOVES + cfg.num_devices:
            raise ConfigError(f"agent {b.uav}: actor output {b.actor.output_size} != {NUM_MOVES + cfg.num_devices}")
        if b.critic.input_size != critic_len:
            raise ConfigError(f"agent {b.uav}: critic input {b.critic.input_size} != {critic_len}")


@dataclass
class MetricsRecord:
    episode: int
    mode: str
    objective1: float
    objective2: float
    communications: int
    distinct_devices: int
    violations: int
    scalars_exchanged: int
    per_device_comms: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    # unscaled per-agent episode returns
    returns: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # communications accumulated over t = 1..K
    cumulative_comms: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    move_violations: int = 0

    def row(self) -> list:
        return [
            self.episode,
            self.mode,
            repr(self.objective1),
            repr(self.objective2),
            self.communications,
            self.distinct_devices,
            self.violations,
            self.scalars_exchanged,
        ]


def write_metrics_csv(path: str | Path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_FIELDS)
        for r in records:
            w.writerow(r.row())


def read_metrics_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and list(rows[0].keys()) != list(METRIC_FIELDS):
        raise UsageError(f"{path}: unexpected header {list(rows[0].keys())}")
    out = []
    for r in rows:
        out.append(
            {
                "episode": int(r["episode"]),
                "mode": r["mode"],
                "objective1": float(r["objective1"]),
                "objective2": float(r["objective2"]),
                "communications": int(r["communications"]),
                "distinct_devices": int(r["distinct_devices"]),
                "violations": int(r["violations"]),
                "scalars_exchanged": int(r["scalars_exchanged"]),
            }
        )
    return out


class _EpisodeTally:
    def __init__(self, cfg: EnvConfig):
        self.obj1 = 0.0
        self.obj2 = 0.0
        self.violations = 0
        self.move_violations = 0
        self.scalars = 0
        self.per_device = np.zeros(cfg.num_devices, dtype=np.int64)
        self.returns = np.zeros(cfg.num_uavs)
        self.cumulative = []

    def add(self, outcome, rewards):
        self.obj1 += outcome.aoi_snapshot
        self.obj2 += float(outcome.per_uav_reward.sum())
        self.violations += outcome.violations
        self.move_violations += outcome.move_violations
        self.per_device += outcome.delivered
        self.returns += rewards
        self.cumulative.append(int(self.per_device.sum()))

    def record(self, episode: int, mode: str) -> MetricsRecord:
        return MetricsRecord(
            episode=episode,
            mode=mode,
            objective1=self.obj1,
            objective2=self.obj2,
            communications=int(self.per_device.sum()),
            distinct_devices=int((self.per_device > 0).sum()),
            violations=self.violations,
            scalars_exchanged=self.scalars,
            per_device_comms=self.per_device.copy(),
            returns=self.returns.copy(),
            cumulative_comms=np.array(self.cumulative, dtype=np.int64),
            move_violations=self.move_violations,
        )


def _rewards(mode: str, outcome) -> np.ndarray:
    if mode == "centr_obj1":
        return np.full(len(outcome.per_uav_reward), -outcome.aoi_snapshot)
    return np.asarray(outcome.per_uav_reward, dtype=float)


def run_episode(
    env: AoIEnv,
    bundles,
    mode: str,
    spec: ObservationSpec,
    episode: int = 0,
    learn: bool = True,
    greedy: bool = False,
    reward_scale: float = 1.0,
    hook=None,
) -> MetricsRecord:
    """Play one full-horizon episode; with ``learn`` the transitions go to each agent's buffer.

    ``hook(t, bundles)`` is called before every step, which lets tests
    tamper with agents mid-episode.
    """
    cfg = env.cfg
    state = env.reset()
    tally = _EpisodeTally(cfg)
    centralized = mode != "dec"
    for t in range(cfg.horizon):
        if hook is not None:
            hook(t, bundles)
        observations = [build_observation(state, u, cfg, spec) for u in range(cfg.num_uavs)]
        gs = global_state(observations) if centralized else None
        moves = np.zeros(cfg.num_uavs, dtype=np.int64)
        assoc = np.zeros((cfg.num_uavs, cfg.num_devices), dtype=bool)
        pending = []
        for b in bundles:
            u = b.uav
            mask = move_mask(state, u, cfg)
            move, bits, logp = b.act(observations[u], mask, greedy=greedy)
            moves[u], assoc[u] = move, bits
            if learn:
                critic_in = gs if centralized else observations[u]
                if centralized:
                    # the global state is shipped to this agent's critic
                    tally.scalars += len(gs)
                pending.append((b, observations[u], move, bits, logp, b.value(critic_in), mask, critic_in))
        outcome = env.step(JointAction.build(moves, assoc))
        rewards = _rewards(mode, outcome)
        tally.add(outcome, rewards)
        done = t == cfg.horizon - 1
        for b, obs, move, bits, logp, value, mask, critic_in in pending:
            r = float(rewards[b.uav]) * reward_scale
            if b.scaler is not None:
                r = b.scaler(r, done)
            b.buffer.add(Transition(obs, move, bits, logp, r, value, done, mask, critic_in if centralized else None))
        state = env.state
    return tally.record(episode, mode)


@dataclass
class TrainResult:
    bundles: list
    metrics: list
    mode: str
    spec: ObservationSpec


def train(
    mode: str,
    env_cfg: EnvConfig,
    ppo_cfg: PpoConfig | None = None,
    episodes: int = 100,
    seed: int = 0,
    spec: ObservationSpec | None = None,
    hidden=(64, 64),
    reward_scale: float = 1.0,
    bundles=None,
    metrics_dir: str | Path | None = None,
    callback=None,
    normalize_rewards: bool = False,
) -> TrainResult:
    """Train one agent per UAV with PPO for ``episodes`` full episodes.

    Each agent updates once its buffer holds ``ppo_cfg.rollout_length``
    transitions (checked at episode ends; None means every episode).
    ``normalize_rewards`` divides each agent's rewards by the running std of
    its own discounted return; metrics always report raw values.
    ``callback(record, bundles)`` runs after each episode.
    """
    mode = canonical_mode(mode)
    ppo_cfg = ppo_cfg or PpoConfig()
    spec = spec or ObservationSpec()
    if episodes < 0:
        raise UsageError("episodes must be non-negative")
    if bundles is None:
        bundles = make_bundles(mode, env_cfg, spec, ppo_cfg, seed, hidden)
    check_bundles(bundles, mode, env_cfg, spec)
    if normalize_rewards:
        for b in bundles:
            b.scaler = ReturnScaler(ppo_cfg.discount)
    if metrics_dir is not None:
        for b in bundles:
            b.diagnostics = DiagnosticsLog(Path(metrics_dir) / f"ppo_{b.uav}.csv")
    env = AoIEnv(env_cfg, seed=int(np.random.SeedSequence([seed, 7]).generate_state(1)[0]))
    threshold = ppo_cfg.rollout_length or env_cfg.horizon
    records = []
    for ep in range(episodes):
        rec = run_episode(env, bundles, mode, spec, episode=ep, reward_scale=reward_scale)
        records.append(rec)
        if len(bundles[0].buffer) >= threshold:
            for b in bundles:
                b.update(ppo_cfg)
        if callback is not None:
            callback(rec, bundles)
    return TrainResult(bundles, records, mode, spec)


@dataclass
class Evaluation:
    report: object
    trajectory: TrajectoryRecord
    metrics: MetricsRecord


def evaluate(bundles, env_cfg: EnvConfig, episodes: int = 1, seed: int = 0, spec=None, mode: str = "dec") -> list[Evaluation]:
    """Greedy roll-outs (argmax move, claim when the logit is positive); no learning."""
    spec = spec or ObservationSpec()
    check_bundles(bundles, mode, env_cfg, spec)
    env = AoIEnv(env_cfg, seed=seed)
    out = []
    for ep in range(episodes):
        rec = run_episode(env, bundles, canonical_mode(mode), spec, episode=ep, learn=False, greedy=True)
        out.append(Evaluation(report(env.trajectory, env_cfg), env.trajectory, rec))
    return out


class RandomPolicy:
    """Uniform over feasible moves, each claim bit a fair coin."""

    def __init__(self, uav: int, num_devices: int, rng: np.random.Generator):
        self.uav = uav
        self.num_devices = num_devices
        self.rng = rng

    def act(self, obs, mask, greedy=False):
        move = int(self.rng.choice(np.nonzero(mask)[0]))
        return move, self.rng.random(self.num_devices) < 0.5, 0.0


def random_baseline(env_cfg: EnvConfig, episodes: int, seed: int = 0) -> list[MetricsRecord]:
    rngs = [np.random.default_rng(ss) for ss in np.random.SeedSequence([seed, 11]).spawn(env_cfg.num_uavs)]
    agents = [RandomPolicy(u, env_cfg.num_devices, r) for u, r in enumerate(rngs)]
    env = AoIEnv(env_cfg, seed=seed)
    return [run_episode(env, agents, "dec", ObservationSpec(), episode=ep, learn=False) for ep in range(episodes)]


def stay_policy_bundles(env_cfg: EnvConfig):
    """Agents that never move and never claim; handy as a null baseline."""

    class _Stay:
        def __init__(self, u):
            self.uav = u

        def act(self, obs, mask, greedy=False):
            return STAY, np.zeros(env_cfg.num_devices, dtype=bool), 0.0

    return [_Stay(u) for u in range(env_cfg.num_uavs)]


def save_bundles(directory: str | Path, result: TrainResult) -> None:
    for b in result.bundles:
        b.save(directory, mode=result.mode, observation=result.spec.to_dict())


def load_bundles(directory: str | Path, env_cfg: EnvConfig, ppo_cfg: PpoConfig | None = None, seed: int = 0):
    """Rebuild agents from ``agent<u>_actor.json`` / ``agent<u>_critic.json``; returns (bundles, mode, spec)."""
    directory = Path(directory)
    ppo_cfg = ppo_cfg or PpoConfig()
    head = FactorizedHead(NUM_MOVES, env_cfg.num_devices)
    bundles, mode, spec = [], None, None
    for u, ss in enumerate(np.random.SeedSequence(seed).spawn(env_cfg.num_uavs)):
        actor_path = directory / f"agent{u}_actor.json"
        if not actor_path.exists():
            raise UsageError(f"missing checkpoint {actor_path}")
        actor, aopt, doc = load_checkpoint(actor_path)
        critic, copt, _ = load_checkpoint(directory / f"agent{u}_critic.json")
        mode = doc.get("mode", "dec")
        spec = ObservationSpec(**doc.get("observation", {}))
        bundles.append(
            AgentBundle(
                uav=u,
                actor=actor,
                critic=critic,
                actor_opt=aopt or OptimizerState.for_net(actor, lr=ppo_cfg.learning_rate),
                critic_opt=copt or OptimizerState.for_net(critic, lr=ppo_cfg.learning_rate),
                buffer=RolloutBuffer(),
                rng=np.random.default_rng(ss),
                head=head,
            )
        )
    check_bundles(bundles, mode, env_cfg, spec)
    return bundles, mode, spec
