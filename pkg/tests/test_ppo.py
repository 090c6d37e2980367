from __future__ import annotations

import time

import numpy as np
import pytest

from qtopo.ppo import (
    MLP, SGD, TrainConfig, TrainingError, advantages, load_checkpoint, masked_log_softmax,
    masked_policy, ppo_loss, sample_action, save_checkpoint, train, write_metrics_csv,
)
from qtopo.toys import BanditEnv

from oracles import finite_difference, gae_oracle, make_ppo_batch, rel_err


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    obs_dim, n_actions = int(rng.integers(2, 5)), int(rng.integers(2, 6))
    hidden = tuple(int(h) for h in rng.integers(2, 5, size=int(rng.integers(1, 3))))
    policy = MLP([obs_dim, *hidden, n_actions], rng, out_gain=1.0)
    value = MLP([obs_dim, *hidden, 1], rng)
    cfg = TrainConfig(entropy_coef=0.05, clip_eps=0.2)
    batch = make_ppo_batch(rng, policy, obs_dim, n_actions)
    kl_coef = 0.3
    _, pg, vg = ppo_loss(batch, policy, value, cfg, kl_coef)

    def loss():
        return ppo_loss(batch, policy, value, cfg, kl_coef)[0].loss

    for net, analytic in ((policy, pg), (value, vg)):
        numeric = finite_difference(net, loss)
        for a, n in zip(analytic, numeric):
            assert rel_err(a, n) <= 1e-4


def test_ratio_one_and_kl_zero_at_old_params():
    rng = np.random.default_rng(0)
    policy = MLP([4, 8, 5], rng, out_gain=1.0)
    value = MLP([4, 8, 1], rng)
    batch = make_ppo_batch(rng, policy, 4, 5, drift=0.0)
    stats, _, _ = ppo_loss(batch, policy, value, TrainConfig(), 0.2)
    assert stats.mean_ratio == 1.0
    assert stats.kl == 0.0
    assert stats.clip_frac == 0.0


def test_clip_rule():
    rng = np.random.default_rng(1)
    policy = MLP([1, 3], rng, out_gain=1.0)
    value = MLP([1, 1], rng)
    obs = np.ones((1, 1))
    mask = np.ones((1, 3), dtype=bool)
    logp = masked_log_softmax(policy(obs), mask)
    batch = {"obs": obs, "actions": np.array([0]), "masks": mask,
             "old_logp": logp[:, 0] - np.log(1.5), "old_logp_all": logp,
             "adv": np.array([1.0]), "returns": np.zeros(1)}
    stats, _, _ = ppo_loss(batch, policy, value, TrainConfig(clip_eps=0.2), 0.0)
    assert stats.mean_ratio == pytest.approx(1.5)
    assert stats.policy_loss == pytest.approx(-1.2)


def test_masked_policy_examples():
    p = masked_policy(np.zeros(6), np.ones(6, dtype=bool))
    assert np.allclose(p, 1 / 6)
    mask = np.array([1, 0, 1, 0, 1, 0], dtype=bool)
    p = masked_policy(np.zeros(6), mask)
    assert np.allclose(p[mask], 1 / 3) and (p[~mask] == 0).all()
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((500, 9)) * 5
    masks = rng.random((500, 9)) < 0.5
    masks[:, 0] = True
    assert np.allclose(masked_policy(logits, masks).sum(axis=1), 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        masked_policy(np.zeros(3), np.zeros(3, dtype=bool))


def test_sampling_never_picks_masked_actions():
    rng = np.random.default_rng(0)
    for _ in range(100_000 // 50):
        mask = rng.random(10) < 0.3
        mask[rng.integers(10)] = True
        probs = masked_policy(rng.standard_normal(10) * 4, mask)
        for _ in range(50):
            assert mask[sample_action(probs, rng)]


def test_gae_hand_trace():
    r = np.array([1.0, 0.0, -0.5, 2.0, 0.25])
    v = np.array([0.5, 0.1, 0.3, -0.2, 0.4])
    dones = np.array([0, 0, 0, 0, 1], dtype=bool)
    adv, rtg = advantages(r, v, dones, 0.9, 0.8)
    ea, er = gae_oracle(r, v, 0.9, 0.8)
    assert np.allclose(adv, ea, atol=1e-12) and np.allclose(rtg, er, atol=1e-12)
    # gamma = lambda = 1 degenerates to returns minus values
    adv1, rtg1 = advantages(r, v, dones, 1.0, 1.0)
    assert np.allclose(adv1, rtg1 - v)
    a, _ = advantages(np.array([0.7]), np.array([0.2]), np.array([True]), 0.99, 0.95)
    assert a[0] == pytest.approx(0.5)


def test_gae_does_not_cross_episode_boundary():
    r = np.array([1.0, 1.0, 5.0])
    v = np.zeros(3)
    adv, rtg = advantages(r, v, np.array([0, 1, 1], dtype=bool), 1.0, 1.0)
    assert rtg.tolist() == [2.0, 1.0, 5.0]


def test_value_loss_non_increasing_on_fixed_batch():
    rng = np.random.default_rng(3)
    value = MLP([4, 16, 1], rng)
    x = rng.standard_normal((64, 4))
    y = np.sin(x).sum(axis=1)
    opt = SGD(value.params, lr=0.01)
    losses = []
    for _ in range(10):
        out, acts = value.forward(x)
        err = out[:, 0] - y
        losses.append(float((err ** 2).mean()))
        opt.step(value.backward(acts, (2.0 / len(y) * err)[:, None]))
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_bandit_reaches_optimum():
    t0 = time.perf_counter()
    env = BanditEnv()
    res = train(BanditEnv, TrainConfig(iterations=200, replay_threshold=0, seed=0))
    assert res.metrics[-1]["mean_reward"] >= 0.95 * env.optimum
    assert time.perf_counter() - t0 <= 30


def test_training_is_deterministic(tmp_path):
    cfg = TrainConfig(iterations=5, batch_size=64, replay_threshold=0, seed=4)
    paths = []
    for k in range(2):
        res = train(BanditEnv, cfg)
        p = tmp_path / f"m{k}.csv"
        write_metrics_csv(res.metrics, p, include_timing=False)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_checkpoint_roundtrip(tmp_path):
    res = train(BanditEnv, TrainConfig(iterations=2, batch_size=32, hidden=(8,), replay_threshold=0))
    save_checkpoint(tmp_path / "ck.npz", res)
    policy, value, cfg = load_checkpoint(tmp_path / "ck.npz")
    assert cfg == res.config
    x = np.ones((1, 1))
    assert np.array_equal(policy(x), res.policy(x)) and np.array_equal(value(x), res.value(x))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_minibatch():
    class Exploding(BanditEnv):
        def step(self, action):
            out = super().step(action)
            out.reward = float("inf")
            return out

    with pytest.raises(TrainingError) as exc:
        train(Exploding, TrainConfig(iterations=1, batch_size=16, replay_threshold=0))
    assert exc.value.minibatch is not None and "obs" in exc.value.minibatch


def test_env_without_actions_raises():
    class Stuck(BanditEnv):
        def legal_actions(self):
            return np.zeros(self.n_actions, dtype=bool)

    with pytest.raises(TrainingError):
        train(Stuck, TrainConfig(iterations=1, batch_size=4, replay_threshold=0))
