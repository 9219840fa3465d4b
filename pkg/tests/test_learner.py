"""Tests for the numpy PPO agent: networks, estimators, training loop."""

import ast
import inspect

import numpy as np
import pytest

import mcsgame.learner as learner_mod
from conftest import make_scenario
from mcsgame.dynamics import EnvConfig, env_reset
from mcsgame.learner import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    MlpParams,
    PolicyParams,
    TrainConfig,
    TrainingDiverged,
    TrajectoryBuffer,
    advantage_estimates,
    clip_ratio,
    critic_loss_and_gradient,
    gaussian_log_prob,
    load_policy,
    mlp_backward,
    mlp_forward,
    mlp_init,
    observe,
    policy_mean_action,
    policy_sample,
    ppo_actor_gradient,
    ppo_surrogate,
    save_policy,
    train,
)
from oracles import discounted_targets_oracle


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _zero_mlp(sizes, bounded_output=False, output_scale=1.0):
    weights = [np.zeros((sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1)]
    biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
    return MlpParams(weights, biases, bounded_output, output_scale)


# ---------------------------------------------------------------------------
# MLP forward / backward


def test_zero_weights_linear_head_outputs_zero():
    params = _zero_mlp((4, 8, 3))
    out = mlp_forward(params, np.ones(4))
    assert out.shape == (3,)
    assert np.array_equal(out, np.zeros(3))


def test_zero_weights_bounded_head_outputs_half_scale():
    # sigmoid(0) = 1/2, scaled by the price cap
    params = _zero_mlp((4, 8, 2), bounded_output=True, output_scale=3.0)
    out = mlp_forward(params, _rng(0).uniform(-1, 1, 4))
    assert np.allclose(out, 1.5, rtol=0, atol=1e-15)


def test_random_init_finite_and_bounded():
    rng = _rng(5)
    params = mlp_init((6, 16, 16, 3), rng, bounded_output=True, output_scale=2.0)
    xs = rng.uniform(-2, 2, size=(50, 6))
    out = mlp_forward(params, xs)
    assert out.shape == (50, 3)
    assert np.all(np.isfinite(out))
    assert np.all(out > 0.0) and np.all(out < 2.0)


def test_mlp_init_shapes_and_zero_biases():
    params = mlp_init((5, 7, 2), _rng(1))
    assert [W.shape for W in params.weights] == [(7, 5), (2, 7)]
    assert all(np.array_equal(b, np.zeros(b.size)) for b in params.biases)


def test_mlp_init_rejects_single_size():
    with pytest.raises(ValueError):
        mlp_init((4,), _rng(0))


def test_batch_forward_matches_single():
    rng = _rng(7)
    params = mlp_init((3, 8, 2), rng, bounded_output=True, output_scale=1.0)
    xs = rng.uniform(-1, 1, size=(4, 3))
    batch = mlp_forward(params, xs)
    for i in range(4):
        assert np.allclose(batch[i], mlp_forward(params, xs[i]), rtol=1e-14)


def _fd_sum_loss(params, x, upstream, arrays, idx_pairs, h=1e-6):
    """Central differences of sum(upstream * forward(x)) per coordinate."""
    grads = []
    for arr, idx in zip(arrays, idx_pairs):
        orig = arr[idx]
        arr[idx] = orig + h
        up = float(np.sum(upstream * mlp_forward(params, x)))
        arr[idx] = orig - h
        dn = float(np.sum(upstream * mlp_forward(params, x)))
        arr[idx] = orig
        grads.append((up - dn) / (2.0 * h))
    return grads


@pytest.mark.parametrize("bounded", [False, True])
def test_mlp_backward_matches_finite_differences(bounded):
    rng = _rng(11)
    params = mlp_init((5, 9, 3), rng, bounded_output=bounded, output_scale=1.7)
    x = rng.uniform(-1, 1, size=(4, 5))
    upstream = rng.uniform(-1, 1, size=(4, 3))
    grads = mlp_backward(params, x, upstream)

    probes = []
    for li in range(len(params.weights)):
        w = params.weights[li]
        for _ in range(3):
            idx = (int(rng.integers(w.shape[0])), int(rng.integers(w.shape[1])))
            probes.append((params.weights[li], idx, grads.weights[li][idx]))
        bi = int(rng.integers(params.biases[li].size))
        probes.append((params.biases[li], (bi,), grads.biases[li][bi]))

    arrays = [p[0] for p in probes]
    idxs = [p[1] for p in probes]
    fd = _fd_sum_loss(params, x, upstream, arrays, idxs)
    for (arr, idx, analytic), numeric in zip(probes, fd):
        denom = max(abs(numeric), abs(analytic), 1e-8)
        assert abs(numeric - analytic) / denom < 1e-4


def test_mlp_backward_zero_upstream_gives_zero_grads():
    rng = _rng(2)
    params = mlp_init((4, 6, 2), rng)
    x = rng.uniform(-1, 1, size=(3, 4))
    grads = mlp_backward(params, x, np.zeros((3, 2)))
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads.weights)
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads.biases)


def test_mlp_backward_linear_in_upstream():
    rng = _rng(3)
    params = mlp_init((4, 6, 2), rng, bounded_output=True, output_scale=1.0)
    x = rng.uniform(-1, 1, size=(3, 4))
    upstream = rng.uniform(-1, 1, size=(3, 2))
    g1 = mlp_backward(params, x, upstream)
    g3 = mlp_backward(params, x, 3.0 * upstream)
    for a, b in zip(g1.weights + g1.biases, g3.weights + g3.biases):
        assert np.allclose(3.0 * a, b, rtol=1e-12, atol=1e-15)


def test_mlp_backward_rejects_bad_upstream_shape():
    params = mlp_init((4, 6, 2), _rng(0))
    with pytest.raises(ValueError):
        mlp_backward(params, np.zeros((3, 4)), np.zeros((3, 5)))


# ---------------------------------------------------------------------------
# Gaussian policy


def test_log_prob_of_mean_standard_normal():
    # -log(sqrt(2 pi))
    lp = gaussian_log_prob(np.zeros(1), np.zeros(1), np.zeros(1))
    assert lp == pytest.approx(-0.9189385332046727, abs=1e-15)


def test_log_prob_sums_over_dimensions():
    lp = gaussian_log_prob(np.zeros(3), np.zeros(3), np.zeros(3))
    assert lp == pytest.approx(3 * -0.9189385332046727, abs=1e-14)


def test_log_prob_matches_closed_form_off_mean():
    mean = np.array([0.5, -0.2])
    log_std = np.array([-0.4, 0.3])
    action = np.array([0.7, 0.1])
    z = (action - mean) / np.exp(log_std)
    expect = float(np.sum(-0.5 * np.log(2 * np.pi) - log_std - 0.5 * z**2))
    assert gaussian_log_prob(mean, log_std, action) == pytest.approx(expect, abs=1e-14)


def _fresh_state(seed=0, n=3):
    scenario = make_scenario(seed, n=n)
    cfg = EnvConfig()
    return scenario, cfg, env_reset(scenario, cfg, _rng(seed))


def test_policy_sample_deterministic_in_rng():
    scenario, cfg, state = _fresh_state(4)
    policy = learner_mod._init_policy(state, cfg, TrainConfig(), _rng(9))
    a1, lp1 = policy_sample(policy, state, _rng(33))
    a2, lp2 = policy_sample(policy, state, _rng(33))
    assert np.array_equal(a1, a2) and lp1 == lp2


def test_policy_sample_log_prob_is_of_raw_action():
    scenario, cfg, state = _fresh_state(4)
    policy = learner_mod._init_policy(state, cfg, TrainConfig(), _rng(9))
    action, lp = policy_sample(policy, state, _rng(12))
    mean = policy_mean_action(policy, state)
    assert lp == pytest.approx(gaussian_log_prob(mean, policy.log_std, action), abs=1e-12)


def test_tiny_log_std_concentrates_samples():
    # sigma = e^-5: a thousand draws all hug the mean.  Seeded, so exact.
    scenario, cfg, state = _fresh_state(4)
    policy = learner_mod._init_policy(state, cfg, TrainConfig(), _rng(9))
    policy.log_std = np.full(state.n_mus, -5.0)
    mean = policy_mean_action(policy, state)
    rng = _rng(77)
    sigma = np.exp(-5.0)
    for _ in range(1000):
        action, _ = policy_sample(policy, state, rng)
        assert np.all(np.abs(action - mean) < 5.0 * sigma)


def test_mean_action_strictly_inside_price_box():
    scenario, cfg, state = _fresh_state(8)
    policy = learner_mod._init_policy(state, cfg, TrainConfig(), _rng(1))
    mean = policy_mean_action(policy, state)
    assert np.all(mean > 0.0) and np.all(mean < cfg.p_max)


def test_observe_layout_and_scaling():
    scenario, cfg, state = _fresh_state(2)
    feats = observe(state, cfg.p_max)
    L, n = state.prices.shape
    assert feats.shape == (2 * L * n,)
    manual = []
    for r in range(L):
        manual.extend(state.prices[r] / cfg.p_max)
        manual.extend(np.log1p(state.allocations[r]))
    assert np.array_equal(feats, np.array(manual))


# ---------------------------------------------------------------------------
# buffer, targets, advantages


def _filled_buffer(rewards, values, bootstrap, feat_dim=4):
    buf = TrajectoryBuffer(len(rewards))
    for r, v in zip(rewards, values):
        buf.add(np.zeros(feat_dim), np.zeros(2), 0.0, r, v)
    buf.bootstrap_value = bootstrap
    return buf


def test_buffer_rejects_overfill():
    buf = _filled_buffer([1.0], [0.0], 0.0)
    with pytest.raises(ValueError):
        buf.add(np.zeros(4), np.zeros(2), 0.0, 0.0, 0.0)


def test_buffer_requires_bootstrap_before_stacking():
    buf = TrajectoryBuffer(2)
    buf.add(np.zeros(4), np.zeros(2), 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        buf.stacked()


def test_buffer_clear_empties_everything():
    buf = _filled_buffer([1.0, 2.0], [0.0, 0.0], 0.5)
    buf.clear()
    assert buf.size == 0
    assert buf.bootstrap_value is None
    with pytest.raises(ValueError):
        buf.stacked()


def test_advantage_two_step_example():
    # gamma=1: targets (1.5, 0.5), sampled values (0.2, 0.1)
    buf = _filled_buffer([1.0, 0.5], [0.2, 0.1], 0.0)
    adv = advantage_estimates(buf, 1.0)
    assert np.allclose(adv, [1.3, 0.4], rtol=0, atol=1e-15)


def test_advantage_zero_rewards_zero_values():
    buf = _filled_buffer([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], 0.0)
    assert np.array_equal(advantage_estimates(buf, 0.9), np.zeros(3))


def test_advantage_gamma_zero_is_td_residual():
    buf = _filled_buffer([1.0, 0.5], [0.2, 0.1], 7.0)
    adv = advantage_estimates(buf, 0.0)
    assert np.allclose(adv, [0.8, 0.4], rtol=0, atol=1e-15)


def test_advantage_bootstrap_discounting():
    # t2 = 0.5 + 0.5*2 = 1.5, t1 = 1 + 0.5*1.5 = 1.75
    buf = _filled_buffer([1.0, 0.5], [0.0, 0.0], 2.0)
    adv = advantage_estimates(buf, 0.5)
    assert np.allclose(adv, [1.75, 1.5], rtol=0, atol=1e-15)


def test_targets_match_double_loop_oracle():
    rng = _rng(21)
    rewards = rng.uniform(-1, 1, 7)
    bootstrap = float(rng.uniform(-1, 1))
    buf = _filled_buffer(rewards, np.zeros(7), bootstrap)
    adv = advantage_estimates(buf, 0.9)
    assert np.allclose(adv, discounted_targets_oracle(rewards, bootstrap, 0.9), rtol=1e-12)


def test_advantage_rejects_bad_gamma():
    buf = _filled_buffer([1.0], [0.0], 0.0)
    with pytest.raises(ValueError):
        advantage_estimates(buf, 1.5)


def test_clip_ratio_examples():
    assert clip_ratio(1.5, 0.2) == 1.2
    assert clip_ratio(0.7, 0.2) == 0.8
    assert clip_ratio(1.0, 0.2) == 1.0
    assert np.array_equal(clip_ratio(np.array([0.0, 2.0]), 0.1), np.array([0.9, 1.1]))


# ---------------------------------------------------------------------------
# PPO surrogate and gradients


def _toy_policy_and_buffer(seed=0, d_steps=6, ratio_offsets=None):
    """Policy plus a buffer whose stored log-probs came from that policy.

    ratio_offsets shifts the stored old log-probs so the current ratios
    move off 1 in a controlled way: ratio(k) = exp(-offset(k)).
    """
    rng = _rng(seed)
    in_dim, n_act = 6, 2
    actor = mlp_init((in_dim, 8, n_act), rng, bounded_output=True, output_scale=1.5)
    critic = mlp_init((in_dim, 8, 1), rng, out_weight_std=0.5)
    policy = PolicyParams(actor, np.array([-0.4, -0.1]), critic, obs_price_scale=1.0)
    buf = TrajectoryBuffer(d_steps)
    for k in range(d_steps):
        feats = rng.uniform(-1.0, 1.0, in_dim)
        mean = mlp_forward(actor, feats)
        action = mean + np.exp(policy.log_std) * rng.standard_normal(n_act)
        lp = gaussian_log_prob(mean, policy.log_std, action)
        if ratio_offsets is not None:
            lp += ratio_offsets[k]
        buf.add(feats, action, lp, rng.uniform(-1, 1), rng.uniform(-1, 1))
    buf.bootstrap_value = float(rng.uniform(-1, 1))
    return policy, buf


def test_fresh_buffer_ratios_are_one():
    policy, buf = _toy_policy_and_buffer(seed=4)
    adv = advantage_estimates(buf, 0.9)
    surr = ppo_surrogate(policy, buf, 0.2, 0.9)
    # ratio == 1 everywhere, so the surrogate is just the advantage sum
    assert surr == pytest.approx(float(np.sum(adv)), rel=1e-12)


def test_surrogate_clipping_is_pessimistic():
    # offset -0.5 => ratio e^0.5 ~ 1.65, outside the band
    policy, buf = _toy_policy_and_buffer(seed=4, ratio_offsets=[-0.5] * 6)
    adv = advantage_estimates(buf, 0.9)
    f = np.exp(0.5)
    expect = float(np.sum(np.minimum(f * adv, np.clip(f, 0.8, 1.2) * adv)))
    assert ppo_surrogate(policy, buf, 0.2, 0.9) == pytest.approx(expect, rel=1e-10)


def test_clipped_positive_advantage_contributes_zero_gradient():
    # Single step, ratio 2 with positive advantage: min saturates at the
    # clipped constant, so the policy gradient vanishes exactly.
    policy, buf = _toy_policy_and_buffer(seed=9, d_steps=1, ratio_offsets=[-np.log(2.0)])
    buf.rewards[0] = 1.0
    buf.values[0] = 0.0
    buf.bootstrap_value = 0.0
    grads = ppo_actor_gradient(policy, buf, 0.2, 1.0)
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads.mlp.weights)
    assert np.array_equal(grads.log_std, np.zeros(2))


def test_unclipped_negative_advantage_keeps_gradient():
    # Same ratio but advantage -1: the unclipped branch is the minimum,
    # so the step still pushes the policy.
    policy, buf = _toy_policy_and_buffer(seed=9, d_steps=1, ratio_offsets=[-np.log(2.0)])
    buf.rewards[0] = -1.0
    buf.values[0] = 0.0
    buf.bootstrap_value = 0.0
    grads = ppo_actor_gradient(policy, buf, 0.2, 1.0)
    total = sum(float(np.sum(np.abs(g))) for g in grads.mlp.weights)
    assert total > 0.0


def _fd_probe(fn, arr, idx, h=1e-6):
    orig = arr[idx]
    arr[idx] = orig + h
    up = fn()
    arr[idx] = orig - h
    dn = fn()
    arr[idx] = orig
    return (up - dn) / (2.0 * h)


@pytest.mark.parametrize("offsets", [None, [0.5, -0.5, 0.05, -0.05, 0.3, -0.3]])
def test_actor_gradient_matches_finite_differences(offsets):
    policy, buf = _toy_policy_and_buffer(seed=13, ratio_offsets=offsets)
    grads = ppo_actor_gradient(policy, buf, 0.2, 0.9)
    surr = lambda: ppo_surrogate(policy, buf, 0.2, 0.9)
    rng = _rng(1)
    for li in range(len(policy.actor.weights)):
        w = policy.actor.weights[li]
        for _ in range(4):
            idx = (int(rng.integers(w.shape[0])), int(rng.integers(w.shape[1])))
            numeric = _fd_probe(surr, w, idx)
            analytic = grads.mlp.weights[li][idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < 1e-4
        bi = int(rng.integers(policy.actor.biases[li].size))
        numeric = _fd_probe(surr, policy.actor.biases[li], (bi,))
        analytic = grads.mlp.biases[li][bi]
        assert abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8) < 1e-4
    for j in range(policy.log_std.size):
        numeric = _fd_probe(surr, policy.log_std, (j,))
        analytic = grads.log_std[j]
        assert abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8) < 1e-4


def test_actor_ascent_step_raises_surrogate():
    policy, buf = _toy_policy_and_buffer(seed=17)
    before = ppo_surrogate(policy, buf, 0.2, 0.9)
    grads = ppo_actor_gradient(policy, buf, 0.2, 0.9)
    lr = 1e-4
    for i in range(len(policy.actor.weights)):
        policy.actor.weights[i] += lr * grads.mlp.weights[i]
        policy.actor.biases[i] += lr * grads.mlp.biases[i]
    policy.log_std = policy.log_std + lr * grads.log_std
    assert ppo_surrogate(policy, buf, 0.2, 0.9) > before


def test_critic_loss_zero_when_predictions_match():
    policy, buf = _toy_policy_and_buffer(seed=3, d_steps=2)
    buf.rewards[0], buf.rewards[1] = 0.0, 0.0
    buf.bootstrap_value = 0.0
    policy.critic = _zero_mlp((6, 8, 1))
    loss, grads = critic_loss_and_gradient(policy, buf, 1.0)
    assert loss == 0.0
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads.weights)


def test_critic_loss_single_step_example():
    # zero critic, target 1 => summed squared error 1
    policy, buf = _toy_policy_and_buffer(seed=3, d_steps=1)
    buf.rewards[0] = 1.0
    buf.bootstrap_value = 0.0
    policy.critic = _zero_mlp((6, 8, 1))
    loss, _ = critic_loss_and_gradient(policy, buf, 1.0)
    assert loss == pytest.approx(1.0, abs=1e-15)


def test_critic_gradient_matches_finite_differences():
    policy, buf = _toy_policy_and_buffer(seed=19)
    _, grads = critic_loss_and_gradient(policy, buf, 0.9)
    loss = lambda: critic_loss_and_gradient(policy, buf, 0.9)[0]
    rng = _rng(2)
    for li in range(len(policy.critic.weights)):
        w = policy.critic.weights[li]
        for _ in range(4):
            idx = (int(rng.integers(w.shape[0])), int(rng.integers(w.shape[1])))
            numeric = _fd_probe(loss, w, idx)
            analytic = grads.weights[li][idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < 1e-4
        bi = int(rng.integers(policy.critic.biases[li].size))
        numeric = _fd_probe(loss, policy.critic.biases[li], (bi,))
        analytic = grads.biases[li][bi]
        assert abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8) < 1e-4


def test_critic_descent_monotone_on_frozen_buffer():
    policy, buf = _toy_policy_and_buffer(seed=23)
    losses = []
    for _ in range(25):
        loss, grads = critic_loss_and_gradient(policy, buf, 0.9)
        losses.append(loss)
        for i in range(len(policy.critic.weights)):
            policy.critic.weights[i] -= 2e-6 * grads.weights[i]
            policy.critic.biases[i] -= 2e-6 * grads.biases[i]
    diffs = np.diff(losses)
    assert np.all(diffs <= 0.0)
    assert losses[-1] < losses[0]


# ---------------------------------------------------------------------------
# training loop


_SMALL = dict(episodes=4, steps_per_batch=16, update_epochs=3, hidden=(8,), seed=5)


def test_train_is_deterministic():
    scenario = make_scenario(3, n=3)
    env_cfg = EnvConfig()
    cfg = TrainConfig(**_SMALL)
    p1, t1 = train(scenario, env_cfg, cfg)
    p2, t2 = train(scenario, env_cfg, cfg)
    assert len(t1) == len(t2) == cfg.episodes
    for a, b in zip(t1, t2):
        assert a.mean_reward == b.mean_reward
        assert a.mean_sp_payoff == b.mean_sp_payoff
        assert a.actor_objective == b.actor_objective
        assert a.critic_loss == b.critic_loss
        assert np.array_equal(a.mean_prices, b.mean_prices)
        assert np.array_equal(a.mean_allocations, b.mean_allocations)
        assert np.array_equal(a.mean_mu_payoffs, b.mean_mu_payoffs)
    for w1, w2 in zip(p1.actor.weights, p2.actor.weights):
        assert np.array_equal(w1, w2)
    assert np.array_equal(p1.log_std, p2.log_std)


def test_train_seed_changes_trace():
    scenario = make_scenario(3, n=3)
    cfg_a = TrainConfig(**_SMALL)
    cfg_b = TrainConfig(**{**_SMALL, "seed": 6})
    _, ta = train(scenario, EnvConfig(), cfg_a)
    _, tb = train(scenario, EnvConfig(), cfg_b)
    assert ta[0].mean_reward != tb[0].mean_reward


def test_train_on_step_sees_every_transition_in_order():
    scenario = make_scenario(3, n=3)
    cfg = TrainConfig(**_SMALL)
    seen = []
    rewards = []

    def hook(ep, k, tr):
        seen.append((ep, k))
        rewards.append(tr.reward)

    _, trace = train(scenario, EnvConfig(), cfg, on_step=hook)
    d = cfg.steps_per_batch
    assert seen == [(ep, k) for ep in range(1, 5) for k in range(1, d + 1)]
    for ep_stats in trace:
        lo = (ep_stats.episode - 1) * d
        assert ep_stats.mean_reward == pytest.approx(
            float(np.mean(rewards[lo : lo + d])), rel=1e-12
        )


def test_train_log_std_respects_clamp():
    scenario = make_scenario(3, n=3)
    policy, _ = train(scenario, EnvConfig(), TrainConfig(**_SMALL))
    assert np.all(policy.log_std >= LOG_STD_MIN - 1e-15)
    assert np.all(policy.log_std <= LOG_STD_MAX + 1e-15)


def test_train_diverges_loudly_on_absurd_critic_rate():
    scenario = make_scenario(3, n=3)
    cfg = TrainConfig(**{**_SMALL, "critic_lr": 1e9, "episodes": 50})
    with pytest.raises(TrainingDiverged) as exc_info:
        with np.errstate(all="ignore"):
            train(scenario, EnvConfig(), cfg)
    err = exc_info.value
    assert err.episode >= 1 and err.inner_epoch >= 1
    assert set(err.snapshot) == {
        "actor_weights",
        "actor_biases",
        "critic_weights",
        "critic_biases",
        "log_std",
    }


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(gamma=1.5)
    with pytest.raises(ValueError):
        TrainConfig(clip_epsilon=0.0)
    with pytest.raises(ValueError):
        TrainConfig(episodes=0)
    with pytest.raises(ValueError):
        TrainConfig(actor_lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(hidden=())


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip_exact(tmp_path):
    scenario = make_scenario(3, n=3)
    env_cfg = EnvConfig()
    cfg = TrainConfig(**_SMALL)
    policy, _ = train(scenario, env_cfg, cfg)
    path = tmp_path / "ckpt.json"
    save_policy(path, policy, env_cfg, cfg)
    loaded, record = load_policy(path)
    for a, b in zip(policy.actor.weights, loaded.actor.weights):
        assert np.array_equal(a, b)
    for a, b in zip(policy.critic.weights, loaded.critic.weights):
        assert np.array_equal(a, b)
    assert np.array_equal(policy.log_std, loaded.log_std)
    assert loaded.obs_price_scale == policy.obs_price_scale
    assert record["train"]["seed"] == cfg.seed
    assert record["env"]["p_max"] == env_cfg.p_max
    # loaded policy plays identically
    state = env_reset(scenario, env_cfg, _rng(0))
    assert np.array_equal(
        policy_mean_action(policy, state), policy_mean_action(loaded, state)
    )


def test_load_rejects_foreign_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(ValueError):
        load_policy(path)


# ---------------------------------------------------------------------------
# architectural isolation


def test_learner_never_touches_market_internals():
    """The agent must learn from the public stream only.

    Statically verify the module imports nothing from the market model
    or solvers and never reads private profile fields.
    """
    src = inspect.getsource(learner_mod)
    tree = ast.parse(src)
    banned_modules = {"model", "follower", "leader", "experiments", "cli"}
    banned_attrs = {
        "own_value",
        "unit_cost",
        "capacity",
        "demand",
        "mus",
        "utility_scale",
        "quantile",
        "cdf",
        "pdf",
    }
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            mod = (node.module or "").split(".")[-1]
            assert mod not in banned_modules, f"forbidden import: {node.module}"
        elif isinstance(node, ast.Import):
            for alias in node.names:
                assert alias.name.split(".")[0] not in banned_modules
        elif isinstance(node, ast.Attribute):
            # self.capacity is the buffer's own field, not a user profile
            if isinstance(node.value, ast.Name) and node.value.id == "self":
                continue
            assert node.attr not in banned_attrs, f"forbidden attribute: {node.attr}"
