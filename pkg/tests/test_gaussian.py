import math

import numpy as np
import pytest

from eanet import tensor as T
from eanet.errors import ContractError, DimensionError
from eanet.gaussian import (GaussianField, ade_fde, best_of_k, decode_gaussian,
                            mu_trajectory, nll_loss, restore_ratio,
                            sample_trajectories)


def field_from_raw(raw):
    return decode_gaussian(T.Tensor(raw))


def random_field(n=1, t=4, p=3, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return field_from_raw(rng.normal(size=(n, t, p, 5)) * scale), rng


def test_decode_trivial():
    field = field_from_raw(np.zeros((1, 2, 3, 5)))
    assert np.array_equal(field.mu.data, np.zeros((1, 2, 3, 2)))
    assert np.array_equal(field.sigma.data, np.ones((1, 2, 3, 2)))
    assert np.array_equal(field.rho.data, np.zeros((1, 2, 3, 1)))


def test_decode_log_two_sigma():
    raw = np.zeros((1, 1, 1, 5))
    raw[..., 2] = math.log(2.0)
    field = field_from_raw(raw)
    assert field.sigma.data[0, 0, 0, 0] == pytest.approx(2.0, abs=1e-12)


def test_decode_always_valid_covariance():
    rng = np.random.default_rng(1)
    field = field_from_raw(rng.normal(size=(1, 5, 4, 5)) * 3)
    assert np.all(field.sigma.data > 0)
    assert np.all(np.abs(field.rho.data) < 1.0)
    det = (field.sigma.data[..., 0] ** 2 * field.sigma.data[..., 1] ** 2
           * (1 - field.rho.data[..., 0] ** 2))
    assert np.all(det > 0)
    # tanh saturates to exactly 1.0 in f64 for very large inputs; the NLL
    # clamp on 1 - rho^2 is what keeps that case finite.
    extreme = field_from_raw(np.full((1, 1, 1, 5), 100.0))
    assert abs(extreme.rho.data[0, 0, 0, 0]) <= 1.0


def test_decode_shape_check():
    with pytest.raises(DimensionError):
        decode_gaussian(T.Tensor(np.zeros((1, 2, 3, 4))))


def test_nll_standard_normal_anchor():
    field = field_from_raw(np.zeros((1, 12, 3, 5)))
    loss = nll_loss(field, np.zeros((3, 12, 2)))
    assert abs(loss.item() - 12.0 * math.log(2.0 * math.pi)) < 1e-9
    assert loss.item() == pytest.approx(22.0545, abs=1e-4)


def test_nll_doubling_sigma_adds_log4_per_frame():
    raw = np.zeros((1, 12, 2, 5))
    base = nll_loss(field_from_raw(raw), np.zeros((2, 12, 2))).item()
    raw2 = raw.copy()
    raw2[..., 2] = math.log(2.0)
    raw2[..., 3] = math.log(2.0)
    doubled = nll_loss(field_from_raw(raw2), np.zeros((2, 12, 2))).item()
    assert doubled - base == pytest.approx(12.0 * math.log(4.0), abs=1e-9)


def test_nll_gradient_zero_at_target():
    raw = T.Tensor(np.zeros((1, 4, 2, 5)), requires_grad=True)
    field = decode_gaussian(raw)
    loss = nll_loss(field, np.zeros((2, 4, 2)))
    T.backward(loss)
    assert np.allclose(raw.grad[..., 0:2], 0.0, atol=1e-12)


def test_nll_matches_direct_density_evaluation():
    field, rng = random_field(seed=2)
    target = rng.normal(size=(3, 4, 2))
    got = nll_loss(field, target).item()

    mu = field.mu.data[0]
    sigma = field.sigma.data[0]
    rho = field.rho.data[0][..., 0]
    total = 0.0
    for a in range(3):
        agent_sum = 0.0
        for f in range(4):
            sx, sy = sigma[f, a]
            r = rho[f, a]
            dx = target[a, f, 0] - mu[f, a, 0]
            dy = target[a, f, 1] - mu[f, a, 1]
            z = (dx / sx) ** 2 + (dy / sy) ** 2 - 2 * r * dx * dy / (sx * sy)
            density = math.exp(-z / (2 * (1 - r * r))) / (
                2 * math.pi * sx * sy * math.sqrt(1 - r * r))
            agent_sum += -math.log(density)
        total += agent_sum
    assert abs(got - total / 3.0) < 1e-9


def test_nll_target_shape_check():
    field = field_from_raw(np.zeros((1, 4, 2, 5)))
    with pytest.raises(DimensionError):
        nll_loss(field, np.zeros((2, 5, 2)))


def test_nll_finite_at_extreme_rho():
    raw = np.zeros((1, 2, 1, 5))
    raw[..., 4] = 50.0
    field = field_from_raw(raw)
    loss = nll_loss(field, np.ones((1, 2, 2)))
    assert np.isfinite(loss.item())


def test_mu_trajectory_cumsum():
    raw = np.zeros((1, 3, 2, 5))
    raw[0, :, 0, 0] = 1.0
    raw[0, :, 1, 1] = -2.0
    field = field_from_raw(raw)
    origin = np.array([[10.0, 0.0], [0.0, 5.0]])
    pred = mu_trajectory(field, origin)
    assert np.allclose(pred[0], [[11, 0], [12, 0], [13, 0]])
    assert np.allclose(pred[1], [[0, 3], [0, 1], [0, -1]])


def test_sampling_degenerate_sigma_hits_mu():
    raw = np.random.default_rng(3).normal(size=(1, 4, 2, 5)) * 0.3
    raw[..., 2:4] = math.log(1e-9)
    raw[..., 4] = 0.0
    field = field_from_raw(raw)
    origin = np.zeros((2, 2))
    samples = sample_trajectories(field, 5, seed=1, origin_abs=origin)
    want = mu_trajectory(field, origin)
    assert samples.shape == (5, 2, 4, 2)
    for s in range(5):
        assert np.allclose(samples[s], want, atol=1e-6)


def test_sampling_same_seed_identical():
    field, _ = random_field(seed=4)
    origin = np.zeros((3, 2))
    a = sample_trajectories(field, 7, seed=9, origin_abs=origin)
    b = sample_trajectories(field, 7, seed=9, origin_abs=origin)
    assert np.array_equal(a, b)
    c = sample_trajectories(field, 7, seed=10, origin_abs=origin)
    assert not np.array_equal(a, c)


def test_sampling_nested_streams():
    field, _ = random_field(seed=5)
    origin = np.zeros((3, 2))
    k = sample_trajectories(field, 6, seed=2, origin_abs=origin)
    k_plus = sample_trajectories(field, 7, seed=2, origin_abs=origin)
    assert np.array_equal(k, k_plus[:6])


def test_sampling_monte_carlo_mean():
    raw = np.zeros((1, 1, 1, 5))
    raw[0, 0, 0, 0] = 0.7
    raw[0, 0, 0, 1] = -0.4
    raw[..., 4] = 0.5
    field = field_from_raw(raw)
    k = 100_000
    samples = sample_trajectories(field, k, seed=3, origin_abs=np.zeros((1, 2)))
    mean = samples[:, 0, 0, :].mean(axis=0)
    bound = 3.0 / math.sqrt(k)
    assert abs(mean[0] - 0.7) < bound
    assert abs(mean[1] + 0.4) < bound


def test_sampling_correlation_structure():
    raw = np.zeros((1, 1, 1, 5))
    raw[..., 4] = 2.0
    want_rho = math.tanh(2.0)
    field = field_from_raw(raw)
    samples = sample_trajectories(field, 50_000, seed=4, origin_abs=np.zeros((1, 2)))
    xy = samples[:, 0, 0, :]
    got = np.corrcoef(xy[:, 0], xy[:, 1])[0, 1]
    assert abs(got - want_rho) < 0.02


def test_ade_fde_zero_and_offset():
    rng = np.random.default_rng(6)
    truth = rng.normal(size=(4, 12, 2))
    assert ade_fde(truth, truth) == (0.0, 0.0)
    pred = truth + np.array([3.0, 4.0])
    ade, fde = ade_fde(pred, truth)
    assert ade == 5.0 and fde == 5.0


def test_ade_fde_matches_double_loop_exactly():
    rng = np.random.default_rng(7)
    for _ in range(50):
        p, t = rng.integers(1, 6), rng.integers(1, 14)
        pred = rng.normal(size=(p, t, 2))
        truth = rng.normal(size=(p, t, 2))
        got_ade, got_fde = ade_fde(pred, truth)
        total = 0.0
        last = 0.0
        for a in range(p):
            for f in range(t):
                d = math.hypot(pred[a, f, 0] - truth[a, f, 0],
                               pred[a, f, 1] - truth[a, f, 1])
                total += d
                if f == t - 1:
                    last += d
        assert got_ade == total / (p * t)
        assert got_fde == last / p


def test_ade_fde_translation_invariant():
    rng = np.random.default_rng(8)
    pred = rng.normal(size=(3, 5, 2))
    truth = rng.normal(size=(3, 5, 2))
    base = ade_fde(pred, truth)
    moved = ade_fde(pred + [17.0, -6.0], truth + [17.0, -6.0])
    assert base[0] == pytest.approx(moved[0], abs=1e-9)
    assert base[1] == pytest.approx(moved[1], abs=1e-9)


def test_ade_fde_shape_check():
    with pytest.raises(DimensionError):
        ade_fde(np.zeros((2, 3, 2)), np.zeros((2, 4, 2)))


def test_best_of_k_single_sample():
    field, rng = random_field(seed=9)
    origin = np.zeros((3, 2))
    truth = rng.normal(size=(3, 4, 2))
    report = best_of_k(field, truth, 1, seed=5, origin_abs=origin)
    sample = sample_trajectories(field, 1, seed=5, origin_abs=origin)[0]
    ade, fde = ade_fde(sample, truth)
    assert report.ade == ade and report.fde == fde
    assert report.sample_count == 1
    assert report.n_agents == 3 and report.n_frames == 4


def test_best_of_k_min_property_and_monotonicity():
    field, rng = random_field(seed=10)
    origin = np.zeros((3, 2))
    truth = rng.normal(size=(3, 4, 2))
    samples = sample_trajectories(field, 8, seed=6, origin_abs=origin)
    report = best_of_k(field, truth, 8, seed=6, origin_abs=origin)
    for s in range(8):
        assert report.ade <= ade_fde(samples[s], truth)[0]
    previous = math.inf
    for k in (1, 2, 4, 8):
        r = best_of_k(field, truth, k, seed=6, origin_abs=origin)
        assert r.ade <= previous + 1e-15
        previous = r.ade


def test_restore_ratio_hand_cases():
    assert restore_ratio(0.4, 0.8, 0.4, 0.8) == 0.0
    want = 0.5 * ((0.5 - 0.4) / 0.4 + (1.0 - 0.8) / 0.8)
    assert restore_ratio(0.5, 1.0, 0.4, 0.8) == want
    assert want == pytest.approx(0.25, abs=1e-12)
    assert restore_ratio(0.2, 0.4, 0.4, 0.8) < 0
    with pytest.raises(ContractError):
        restore_ratio(0.5, 1.0, 0.0, 0.8)
    with pytest.raises(ContractError):
        restore_ratio(0.5, 1.0, 0.4, -1.0)


def test_sampling_contract_errors():
    field, _ = random_field(seed=11)
    with pytest.raises(ContractError):
        sample_trajectories(field, 0, seed=1, origin_abs=np.zeros((3, 2)))
