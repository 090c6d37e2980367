"""Proximal policy optimisation over a masked discrete action space.

Numpy only: two tanh MLPs (policy logits and state value) with hand-written
backpropagation, a clipped-ratio surrogate with an adaptive KL penalty, GAE
advantages and plain minibatch SGD. Trajectory collection consults the
environment's reward-replay memory, if it has one, before every evaluation.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .replay import ReplayMemory

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    def __init__(self, message: str, minibatch: dict | None = None):
        super().__init__(message)
        self.minibatch = minibatch


@dataclass
class TrainConfig:
    iterations: int = 50
    batch_size: int = 512
    minibatch_size: int = 64
    epochs: int = 8
    lr: float = 0.01
    momentum: float = 0.0
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    kl_coef: float = 0.2
    kl_target: float = 0.01
    vf_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float | None = 1.0
    hidden: tuple[int, ...] = (64, 64)
    replay_threshold: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("iterations", "batch_size", "minibatch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr <= 0 or not 0 < self.gamma <= 1 or not 0 <= self.gae_lambda <= 1:
            raise ValueError("lr must be positive, gamma in (0, 1], gae_lambda in [0, 1]")
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must be in (0, 1)")
        if self.replay_threshold < 0:
            raise ValueError("replay_threshold must be >= 0 (0 disables replay)")

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        """Full-scale hyper-parameters: 256x256 networks, 4000/128 batches, SGD at 5e-5."""
        base = dict(hidden=(256, 256), batch_size=4000, minibatch_size=128, lr=5e-5, gamma=0.99)
        base.update(overrides)
        return cls(**base)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# Networks
# --------------------------------------------------------------------------


def _orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class MLP:
    """Fully connected net, tanh on hidden layers, linear output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, out_gain: float = 1.0):
        self.sizes = tuple(sizes)
        self.params: list[np.ndarray] = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if k == len(sizes) - 2 else math.sqrt(2.0)
            self.params += [_orthogonal(fan_in, fan_out, gain, rng), np.zeros(fan_out)]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        nl = len(self.params) // 2
        for k in range(nl):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < nl - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, acts: list[np.ndarray], dout: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = [np.empty(0)] * len(self.params)
        nl = len(self.params) // 2
        delta = dout
        for k in reversed(range(nl)):
            grads[2 * k] = acts[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.params[2 * k].T) * (1.0 - acts[k] ** 2)
        return grads

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        off = 0
        for p in self.params:
            p[...] = flat[off : off + p.size].reshape(p.shape)
            off += p.size

    def copy(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.sizes = self.sizes
        other.params = [p.copy() for p in self.params]
        return other

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params)


# --------------------------------------------------------------------------
# Policy maths
# --------------------------------------------------------------------------


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities of the softmax restricted to ``mask``; ``-inf`` elsewhere."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("every row needs at least one legal action")
    z = np.where(mask, logits, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        return z - (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))


def masked_policy(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over legal actions; illegal actions get probability exactly 0."""
    return np.exp(masked_log_softmax(logits, mask))


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if k >= probs.size or probs[k] == 0.0:
        k = int(np.flatnonzero(probs)[-1])
    return k


def advantages(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    last_value: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """GAE advantages and discounted rewards-to-go over concatenated episodes.

    ``dones[t]`` marks the last step of an episode; nothing is bootstrapped
    across it. ``last_value`` bootstraps an unfinished final episode.
    """
    T = len(rewards)
    adv = np.zeros(T)
    rtg = np.zeros(T)
    gae = 0.0
    ret = last_value
    next_value = last_value
    for t in reversed(range(T)):
        if dones[t]:
            gae, ret, next_value = 0.0, 0.0, 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        gae = delta + gamma * lam * gae
        ret = rewards[t] + gamma * ret
        adv[t] = gae
        rtg[t] = ret
        next_value = values[t]
    return adv, rtg


@dataclass
class LossStats:
    loss: float
    policy_loss: float
    value_loss: float
    kl: float
    entropy: float
    clip_frac: float
    mean_ratio: float


def ppo_loss(
    batch: dict,
    policy: MLP,
    value: MLP,
    cfg: TrainConfig,
    kl_coef: float,
) -> tuple[LossStats, list[np.ndarray], list[np.ndarray]]:
    """Clipped surrogate + KL(pi_old || pi) penalty + value MSE (minus entropy bonus).

    ``batch`` holds ``obs``, ``actions``, ``masks``, ``old_logp`` (log-prob of
    the taken action under the behaviour policy), ``old_logp_all`` (its full
    masked log-distribution), ``adv`` and ``returns``. Returns the loss summary and
    the gradients for the policy and value parameters.
    """
    obs, act, mask = batch["obs"], batch["actions"], batch["masks"]
    adv, ret = batch["adv"], batch["returns"]
    old_logp, old_logp_all = batch["old_logp"], batch["old_logp_all"]
    old_probs = np.exp(old_logp_all)
    B = len(act)
    rows = np.arange(B)

    logits, pacts = policy.forward(obs)
    logp = masked_log_softmax(logits, mask)
    probs = np.exp(logp)
    ratio = np.exp(logp[rows, act] - old_logp)
    clipped_ratio = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    unclipped = ratio * adv
    clipped = clipped_ratio * adv
    surr = np.minimum(unclipped, clipped)
    policy_loss = -surr.mean()

    safe_logp = np.where(mask, logp, 0.0)
    safe_old = np.where(mask, old_logp_all, 0.0)
    kl_rows = (old_probs * (safe_old - safe_logp)).sum(axis=1)
    kl = kl_rows.mean()
    ent_rows = -(probs * safe_logp).sum(axis=1)
    entropy = ent_rows.mean()

    v, vacts = value.forward(obs)
    v = v[:, 0]
    value_loss = ((v - ret) ** 2).mean()
    loss = policy_loss + kl_coef * kl + cfg.vf_coef * value_loss - cfg.entropy_coef * entropy

    # d loss / d logits
    g_logp_a = np.where(unclipped <= clipped, -adv * ratio / B, 0.0)
    dlogits = -g_logp_a[:, None] * probs
    dlogits[rows, act] += g_logp_a
    dlogits += (kl_coef / B) * (probs * old_probs.sum(axis=1, keepdims=True) - old_probs)
    if cfg.entropy_coef:
        dlogits += (cfg.entropy_coef / B) * probs * (safe_logp + ent_rows[:, None])
    dlogits = np.where(mask, dlogits, 0.0)
    pgrads = policy.backward(pacts, dlogits)
    dv = (cfg.vf_coef * 2.0 / B) * (v - ret)
    vgrads = value.backward(vacts, dv[:, None])

    stats = LossStats(
        loss=float(loss),
        policy_loss=float(policy_loss),
        value_loss=float(value_loss),
        kl=float(kl),
        entropy=float(entropy),
        clip_frac=float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
        mean_ratio=float(ratio.mean()),
    )
    return stats, pgrads, vgrads


class SGD:
    """Plain stochastic gradient descent with optional momentum."""

    def __init__(self, params: list[np.ndarray], lr: float, momentum: float = 0.0,
                 max_grad_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.max_grad_norm = max_grad_norm
        self.velocity = [np.zeros_like(p) for p in params] if momentum else None

    def step(self, grads: list[np.ndarray]) -> None:
        scale = 1.0
        if self.max_grad_norm is not None:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > self.max_grad_norm:
                scale = self.max_grad_norm / norm
        for k, (p, g) in enumerate(zip(self.params, grads)):
            if self.velocity is not None:
                self.velocity[k] = self.momentum * self.velocity[k] + scale * g
                p -= self.lr * self.velocity[k]
            else:
                p -= self.lr * scale * g


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------

METRIC_FIELDS = (
    "iteration", "mean_reward", "mean_return", "best_depth", "best_objective", "total_loss",
    "kl", "kl_coef", "entropy", "env_steps", "router_evals", "replay_hits",
    "sample_time", "wall_time",
)
TIMING_FIELDS = ("sample_time", "wall_time")


@dataclass
class TrainResult:
    policy: MLP
    value: MLP
    config: TrainConfig
    metrics: list[dict] = field(default_factory=list)
    env: object = None
    memory: ReplayMemory | None = None

    @property
    def best_graph(self):
        return getattr(self.env, "best_graph", None)

    @property
    def best_objective(self) -> float:
        return getattr(self.env, "best_objective", math.nan)

    @property
    def best_depth(self) -> float:
        return getattr(self.env, "best_depth", math.nan)

    @property
    def best_trace(self) -> list[dict]:
        return getattr(self.env, "best_trace", [])

    @property
    def total_router_evals(self) -> int:
        return sum(m["router_evals"] for m in self.metrics)


def _collect(env, policy: MLP, cfg: TrainConfig, rng: np.random.Generator) -> dict:
    obs_l, act_l, mask_l, rew_l, done_l = [], [], [], [], []
    returns = []
    steps = 0
    while steps < cfg.batch_size:
        obs = env.reset()
        ep_ret = 0.0
        done = False
        ep_start = steps
        while not done:
            mask = np.asarray(env.legal_actions(), dtype=bool)
            if not mask.any():
                break
            x = obs.astype(np.float64)[None, :]
            probs = masked_policy(policy(x), mask[None, :])[0]
            a = sample_action(probs, rng)
            out = env.step(a)
            obs_l.append(x[0])
            act_l.append(a)
            mask_l.append(mask)
            rew_l.append(out.reward)
            done_l.append(out.done)
            ep_ret += out.reward
            obs = out.observation
            done = out.done
            steps += 1
        if steps == ep_start:
            raise TrainingError("episode ended before any action was taken; no legal actions at reset")
        done_l[-1] = True
        returns.append(ep_ret)
    return {
        "obs": np.array(obs_l),
        "actions": np.array(act_l, dtype=np.intp),
        "masks": np.array(mask_l, dtype=bool),
        "rewards": np.array(rew_l, dtype=float),
        "dones": np.array(done_l, dtype=bool),
        "episode_returns": returns,
    }


def train(
    env_factory: Callable[[], object],
    cfg: TrainConfig,
    memory: ReplayMemory | None = None,
    on_iteration: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Run reward-replay PPO and return the trained nets plus per-iteration metrics.

    A replay memory with ``cfg.replay_threshold`` uses is attached to the
    environment unless the threshold is 0 (replay off) or ``memory`` is given.
    """
    rng = np.random.default_rng(cfg.seed)
    env = env_factory()
    if memory is None and cfg.replay_threshold > 0:
        memory = ReplayMemory(cfg.replay_threshold)
    if hasattr(env, "memory"):
        env.memory = memory
    obs_dim, n_actions = env.obs_dim, env.n_actions
    policy = MLP([obs_dim, *cfg.hidden, n_actions], rng, out_gain=0.01)
    value = MLP([obs_dim, *cfg.hidden, 1], rng, out_gain=1.0)
    popt = SGD(policy.params, cfg.lr, cfg.momentum, cfg.max_grad_norm)
    vopt = SGD(value.params, cfg.lr, cfg.momentum, cfg.max_grad_norm)
    kl_coef = cfg.kl_coef
    result = TrainResult(policy, value, cfg, env=env, memory=memory)

    for it in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        evals0 = getattr(env, "router_evals", 0)
        hits0 = memory.stats.hits if memory is not None else 0
        data = _collect(env, policy, cfg, rng)
        t_sample = time.perf_counter() - t0

        obs, act, masks = data["obs"], data["actions"], data["masks"]
        old_logp_all = masked_log_softmax(policy(obs), masks)
        old_probs = np.exp(old_logp_all)
        old_logp = old_logp_all[np.arange(len(act)), act]
        values = value(obs)[:, 0]
        adv, rtg = advantages(data["rewards"], values, data["dones"], cfg.gamma, cfg.gae_lambda)
        adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)

        losses = []
        N = len(act)
        for _ in range(cfg.epochs):
            order = rng.permutation(N)
            for start in range(0, N, cfg.minibatch_size):
                idx = order[start : start + cfg.minibatch_size]
                mb = {"obs": obs[idx], "actions": act[idx], "masks": masks[idx],
                      "old_logp": old_logp[idx], "old_logp_all": old_logp_all[idx],
                      "adv": adv_n[idx], "returns": rtg[idx]}
                stats, pg, vg = ppo_loss(mb, policy, value, cfg, kl_coef)
                if not math.isfinite(stats.loss) or not all(
                    np.isfinite(g).all() for g in pg + vg
                ):
                    raise TrainingError(
                        f"non-finite loss or gradient at iteration {it}", minibatch=mb
                    )
                popt.step(pg)
                vopt.step(vg)
                losses.append(stats.loss)
        if not all(np.isfinite(p).all() for p in policy.params + value.params):
            raise TrainingError(f"non-finite parameters after iteration {it}")

        new_logp = masked_log_softmax(policy(obs), masks)
        safe_new = np.where(masks, new_logp, 0.0)
        safe_old = np.where(masks, old_logp_all, 0.0)
        kl = float((old_probs * (safe_old - safe_new)).sum(axis=1).mean())
        entropy = float(-(np.exp(new_logp) * safe_new).sum(axis=1).mean())
        coef_used = kl_coef
        if kl > 1.5 * cfg.kl_target:
            kl_coef *= 2.0
        elif kl < cfg.kl_target / 1.5:
            kl_coef *= 0.5

        row = {
            "iteration": it,
            "mean_reward": float(data["rewards"].mean()),
            "mean_return": float(np.mean(data["episode_returns"])),
            "best_depth": float(getattr(env, "best_depth", math.nan)),
            "best_objective": float(getattr(env, "best_objective", math.nan)),
            "total_loss": float(np.mean(losses)),
            "kl": kl,
            "kl_coef": coef_used,
            "entropy": entropy,
            "env_steps": N,
            "router_evals": getattr(env, "router_evals", 0) - evals0,
            "replay_hits": (memory.stats.hits - hits0) if memory is not None else 0,
            "sample_time": t_sample,
            "wall_time": time.perf_counter() - t0,
        }
        result.metrics.append(row)
        if on_iteration is not None:
            on_iteration(row)
    return result


def write_metrics_csv(metrics: list[dict], path: str | Path, include_timing: bool = True) -> None:
    fields = [f for f in METRIC_FIELDS if include_timing or f not in TIMING_FIELDS]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in metrics:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def save_checkpoint(path: str | Path, result: TrainResult) -> None:
    arrays = {f"policy_{k}": p for k, p in enumerate(result.policy.params)}
    arrays.update({f"value_{k}": p for k, p in enumerate(result.value.params)})
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(result.config),
        "config_hash": result.config.config_hash(),
        "policy_sizes": list(result.policy.sizes),
        "value_sizes": list(result.value.sizes),
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path: str | Path) -> tuple[MLP, MLP, TrainConfig]:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        cfg = TrainConfig(**meta["config"])
        rng = np.random.default_rng(0)
        policy = MLP(meta["policy_sizes"], rng)
        value = MLP(meta["value_sizes"], rng)
        for k in range(len(policy.params)):
            policy.params[k] = data[f"policy_{k}"].copy()
        for k in range(len(value.params)):
            value.params[k] = data[f"value_{k}"].copy()
    if cfg.config_hash() != meta["config_hash"]:
        raise ValueError("checkpoint config hash mismatch")
    return policy, value, cfg
