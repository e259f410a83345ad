"""Single-agent PPO: rollout storage, GAE, clipped surrogate and the update loop."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UsageError
from .nn import Gradients, Mlp, OptimizerState, adam_step
from .policy import FactorizedHead

DIAGNOSTIC_FIELDS = ("update", "policy_loss", "value_loss", "entropy", "clip_fraction", "mean_ratio")


@dataclass
class PpoConfig:
    clip_epsilon: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    epochs_per_update: int = 4
    minibatch_size: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    learning_rate: float = 3e-4
    # transitions collected before an update; None means one full episode
    rollout_length: int | None = None
    max_grad_norm: float | None = 0.5
    normalize_advantages: bool = True

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if not (0 <= self.discount <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("discount and gae_lambda must lie in [0, 1]")
        if self.epochs_per_update < 1 or self.minibatch_size < 1:
            raise ValueError("epochs_per_update and minibatch_size must be positive")


@dataclass
class Transition:
    observation: np.ndarray
    move: int
    bits: np.ndarray
    log_prob: float
    reward: float
    value: float
    done: bool
    mask: np.ndarray | None = None
    # critic input when it differs from the actor observation (global state)
    critic_input: np.ndarray | None = None


@dataclass
class RolloutBuffer:
    transitions: list = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def add(self, tr: Transition) -> None:
        self.transitions.append(tr)
        self.advantages = self.returns = None

    def __len__(self):
        return len(self.transitions)

    def clear(self) -> None:
        self.transitions.clear()
        self.advantages = self.returns = None

    @property
    def finalized(self) -> bool:
        return self.advantages is not None

    def column(self, name, dtype=float):
        return np.array([getattr(t, name) for t in self.transitions], dtype=dtype)

    def critic_inputs(self) -> np.ndarray:
        return np.stack(
            [t.critic_input if t.critic_input is not None else t.observation for t in self.transitions]
        )


def gae(rewards, values, dones, bootstrap_value, discount, lam):
    """Advantages and return targets via generalized advantage estimation.

    ``dones[t]`` marks that the episode ended after step t, which cuts both
    the bootstrap and the advantage recursion.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    n = len(rewards)
    if n == 0:
        raise UsageError("cannot compute advantages of an empty buffer")
    adv = np.zeros(n)
    last = 0.0
    for t in reversed(range(n)):
        next_value = bootstrap_value if t == n - 1 else values[t + 1]
        live = 1.0 - dones[t]
        delta = rewards[t] + discount * next_value * live - values[t]
        last = delta + discount * lam * live * last
        adv[t] = last
    return adv, adv + values


def compute_gae(buffer: RolloutBuffer, bootstrap_value: float, cfg: PpoConfig):
    return gae(
        buffer.column("reward"),
        buffer.column("value"),
        buffer.column("done"),
        bootstrap_value,
        cfg.discount,
        cfg.gae_lambda,
    )


def finalize(buffer: RolloutBuffer, bootstrap_value: float, cfg: PpoConfig) -> None:
    """Fill in advantages (normalized per batch) and return targets."""
    adv, ret = compute_gae(buffer, bootstrap_value, cfg)
    if cfg.normalize_advantages and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        # second pass removes the residual rounding in the mean
        adv = adv - adv.mean()
    buffer.advantages = adv
    buffer.returns = ret


def clipped_policy_loss(new_log_probs, old_log_probs, advantages, cfg: PpoConfig) -> float:
    ratio = np.exp(np.asarray(new_log_probs) - np.asarray(old_log_probs))
    adv = np.asarray(advantages, dtype=float)
    eps = cfg.clip_epsilon
    return float(-np.mean(np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)))


def value_loss(predicted, targets) -> float:
    diff = np.asarray(predicted, dtype=float) - np.asarray(targets, dtype=float)
    return float(np.mean(diff * diff))


def _clip_by_norm(g: Gradients, max_norm):
    if max_norm is None:
        return g
    norm = g.global_norm()
    return g.scaled(max_norm / norm) if norm > max_norm else g


def ppo_update(
    actor: Mlp,
    critic: Mlp,
    buffer: RolloutBuffer,
    cfg: PpoConfig,
    actor_opt: OptimizerState,
    critic_opt: OptimizerState,
    head: FactorizedHead,
    rng: np.random.Generator,
) -> dict:
    """Run ``epochs_per_update`` passes of shuffled minibatch updates; returns diagnostics."""
    if not buffer.finalized:
        raise UsageError("buffer must be finalized before an update")
    obs = np.stack([t.observation for t in buffer.transitions])
    critic_in = buffer.critic_inputs()
    moves = buffer.column("move", dtype=np.int64)
    bits = np.stack([np.asarray(t.bits, dtype=float) for t in buffer.transitions])
    masks = np.stack(
        [t.mask if t.mask is not None else np.ones(head.n_moves, bool) for t in buffer.transitions]
    )
    old_logp = buffer.column("log_prob")
    adv = buffer.advantages
    targets = buffer.returns
    n = len(buffer)
    eps = cfg.clip_epsilon
    stats = {"policy_loss": [], "value_loss": [], "entropy": [], "clip_fraction": [], "mean_ratio": []}

    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            b = len(idx)
            logits, tape = actor.forward(obs[idx])
            logp = head.log_prob(logits, masks[idx], moves[idx], bits[idx])
            ent = head.entropy(logits, masks[idx])
            ratio = np.exp(logp - old_logp[idx])
            a = adv[idx]
            surr1 = ratio * a
            surr2 = np.clip(ratio, 1 - eps, 1 + eps) * a
            pl = -float(np.mean(np.minimum(surr1, surr2)))
            # the unclipped branch carries the gradient when it is the minimum
            active = surr1 <= surr2
            dlogp = np.where(active, -a * ratio, 0.0) / b
            dent = np.full(b, -cfg.entropy_coef / b)
            g_logits = head.logits_grad(logits, masks[idx], moves[idx], bits[idx], dlogp, dent)
            g_actor = _clip_by_norm(actor.backward(tape, g_logits), cfg.max_grad_norm)

            values, ctape = critic.forward(critic_in[idx])
            values = values[:, 0]
            vl = value_loss(values, targets[idx])
            dv = (cfg.value_coef * 2.0 * (values - targets[idx]) / b)[:, None]
            g_critic = _clip_by_norm(critic.backward(ctape, dv), cfg.max_grad_norm)

            total = pl + cfg.value_coef * vl - cfg.entropy_coef * float(ent.mean())
            if not np.isfinite(total):
                raise FloatingPointError(f"non-finite PPO loss {total}")
            adam_step(actor, g_actor, actor_opt)
            adam_step(critic, g_critic, critic_opt)

            stats["policy_loss"].append(pl)
            stats["value_loss"].append(vl)
            stats["entropy"].append(float(ent.mean()))
            stats["clip_fraction"].append(float(np.mean(np.abs(ratio - 1.0) > eps)))
            stats["mean_ratio"].append(float(ratio.mean()))
    return {k: float(np.mean(v)) for k, v in stats.items()}


class DiagnosticsLog:
    """Appends per-update diagnostics to ``metrics/ppo_<agent>.csv``."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("w", newline="") as fh:
            csv.writer(fh).writerow(DIAGNOSTIC_FIELDS)
        self.count = 0

    def append(self, diag: dict) -> None:
        with self.path.open("a", newline="") as fh:
            csv.writer(fh).writerow([self.count] + [repr(float(diag[k])) for k in DIAGNOSTIC_FIELDS[1:]])
        self.count += 1
