import math

import numpy as np
import pytest

from eanet import tensor as T
from eanet.data import SyntheticScenarioSpec, synthetic_instances
from eanet.errors import ConfigError, DimensionError
from eanet.gradcheck import check_gradients
from eanet.graph import (KERNEL_KINDS, build_adjacency, build_frame_graph,
                         gcn_forward, instance_graphs, kernel_weight,
                         normalize_adjacency)


def test_kernel_coincident_positions_zero_for_every_kind():
    for kind in KERNEL_KINDS:
        assert kernel_weight(kind, (1.0, 2.0), (1.0, 2.0), (0.3, 0.1), (-0.2, 0.5)) == 0.0


def test_motion_trend_hand_values():
    assert kernel_weight("motion_trend", (0, 0), (3, 4), (0.1, 0.2), (0.1, 0.2)) == \
        pytest.approx(0.2, abs=1e-15)
    got = kernel_weight("motion_trend", (0, 0), (3, 4), (1, 0), (0, 1))
    assert got == pytest.approx(1.0 / (math.sqrt(2) + 5.0), abs=1e-12)
    assert got == pytest.approx(0.1559, abs=1e-4)


def test_ablation_kernel_values():
    assert kernel_weight("inv_dist", (0, 0), (3, 4), (9, 9), (0, 0)) == pytest.approx(0.2)
    assert kernel_weight("l2", (0, 0), (3, 4), (9, 9), (0, 0)) == pytest.approx(5.0)
    assert kernel_weight("rbf", (0, 0), (3, 4), (9, 9), (0, 0)) == pytest.approx(math.exp(-5.0))
    assert kernel_weight("rbf", (0, 0), (3, 4), (9, 9), (0, 0), rbf_sigma=2.0) == \
        pytest.approx(math.exp(-5.0) / 2.0)
    with pytest.raises(ConfigError):
        kernel_weight("rbf", (0, 0), (1, 0), (0, 0), (0, 0), rbf_sigma=0.0)
    with pytest.raises(ConfigError):
        kernel_weight("cosine", (0, 0), (1, 0), (0, 0), (0, 0))


def test_adjacency_trivial_cases():
    assert np.array_equal(build_adjacency("motion_trend", np.zeros((1, 2)), np.zeros((1, 2))),
                          np.zeros((1, 1)))
    coincident = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert np.array_equal(build_adjacency("motion_trend", coincident, np.zeros((2, 2))),
                          np.zeros((2, 2)))


def test_adjacency_three_agent_hand_case():
    positions = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    adjacency = build_adjacency("motion_trend", positions, np.zeros((3, 2)))
    assert adjacency[0, 1] == pytest.approx(1.0)
    assert adjacency[0, 2] == pytest.approx(0.5)
    assert adjacency[1, 2] == pytest.approx(1.0 / math.sqrt(5.0))
    assert np.array_equal(adjacency, adjacency.T)
    assert np.array_equal(np.diag(adjacency), np.zeros(3))


def test_kernel_symmetry_and_nonnegativity_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        v_i, v_j = rng.normal(size=2), rng.normal(size=2)
        r_i, r_j = rng.normal(size=2), rng.normal(size=2)
        for kind in KERNEL_KINDS:
            w_ij = kernel_weight(kind, v_i, v_j, r_i, r_j)
            w_ji = kernel_weight(kind, v_j, v_i, r_j, r_i)
            assert w_ij == w_ji
            assert w_ij >= 0.0


def test_motion_trend_monotone_in_motion_difference():
    rng = np.random.default_rng(1)
    for _ in range(200):
        v_i, v_j = rng.normal(size=2), rng.normal(size=2) + 3.0
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        small, big = sorted(rng.uniform(0.01, 5.0, size=2))
        if small == big:
            continue
        w_small = kernel_weight("motion_trend", v_i, v_j, small * direction, np.zeros(2))
        w_big = kernel_weight("motion_trend", v_i, v_j, big * direction, np.zeros(2))
        assert w_big < w_small


def test_normalize_trivial_and_hand_cases():
    assert np.allclose(normalize_adjacency(np.zeros((4, 4))), np.eye(4), atol=1e-15)
    got = normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.max(np.abs(got - 0.5)) < 1e-12


def test_normalize_preserves_symmetry():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p = rng.integers(2, 7)
        raw = rng.uniform(0, 2, size=(p, p))
        adjacency = (raw + raw.T) / 2
        np.fill_diagonal(adjacency, 0.0)
        ahat = normalize_adjacency(adjacency)
        assert np.max(np.abs(ahat - ahat.T)) < 1e-12
        assert np.all(np.isfinite(ahat)) and np.all(ahat >= 0)
    with pytest.raises(DimensionError):
        normalize_adjacency(np.zeros((2, 3)))


def test_frame_graph_invariants():
    rng = np.random.default_rng(3)
    graph = build_frame_graph(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)))
    assert np.array_equal(graph.adjacency, graph.adjacency.T)
    assert np.all(graph.adjacency >= 0)
    assert np.max(np.abs(graph.normalized - graph.normalized.T)) < 1e-12


def test_gcn_zero_weight_gives_half():
    ahat = np.stack([np.eye(3)] * 4)
    x = np.random.default_rng(4).normal(size=(4, 3, 2))
    w = T.Tensor(np.zeros((2, 5)), requires_grad=True)
    out = gcn_forward(ahat, x, w)
    assert out.shape == (4, 3, 5)
    assert np.allclose(out.data, 0.5)


def test_gcn_single_agent_is_dense_layer():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 1, 2))
    w = T.Tensor(rng.normal(size=(2, 5)))
    ahat = np.ones((2, 1, 1))
    out = gcn_forward(ahat, x, w)
    want = 1.0 / (1.0 + np.exp(-(x @ w.data)))
    assert np.allclose(out.data, want, atol=1e-12)


def test_gcn_hand_matrix_chain():
    ahat = np.array([[[0.5, 0.5], [0.5, 0.5]]])
    x = np.array([[[1.0, 0.0], [0.0, 2.0]]])
    w = T.Tensor(np.array([[1.0, -1.0], [0.5, 0.25]]))
    out = gcn_forward(ahat, x, w)
    pre = ahat[0] @ x[0] @ w.data
    assert np.allclose(out.data[0], 1.0 / (1.0 + np.exp(-pre)), atol=1e-12)


def test_gcn_shape_errors():
    w = T.Tensor(np.zeros((2, 5)))
    with pytest.raises(DimensionError):
        gcn_forward(np.zeros((4, 3, 2)), np.zeros((4, 3, 2)), w)
    with pytest.raises(DimensionError):
        gcn_forward(np.zeros((4, 3, 3)), np.zeros((4, 2, 2)), w)


def test_gcn_gradient_wrt_weight_and_features():
    rng = np.random.default_rng(6)
    ahat = instance_graphs(synthetic_instances(
        SyntheticScenarioSpec(kind="stagger", agents=4, seed=3), 1)[0])
    x = T.Tensor(rng.normal(size=(8, 4, 2)), requires_grad=True)
    w = T.Tensor(rng.normal(size=(2, 5)), requires_grad=True)
    errors = check_gradients(lambda: T.tensor_sum(T.mul(gcn_forward(ahat, x, w),
                                                        gcn_forward(ahat, x, w))),
                             {"x": x, "w": w})
    assert max(errors.values()) < 1e-6


def test_translation_invariance():
    # Exact bit equality is out of reach: (x+c)-(y+c) rounds differently
    # than x-y, so the check is at 1e-12 on the weights themselves.
    rng = np.random.default_rng(7)
    positions = rng.normal(size=(5, 2))
    motions = rng.normal(size=(5, 2))
    offset = np.array([123.0, -45.0])
    for kind in KERNEL_KINDS:
        a0 = build_adjacency(kind, positions, motions)
        a1 = build_adjacency(kind, positions + offset, motions)
        assert np.max(np.abs(a0 - a1)) < 1e-12
        assert np.max(np.abs(normalize_adjacency(a0) - normalize_adjacency(a1))) < 1e-12


def test_permutation_equivariance():
    rng = np.random.default_rng(8)
    positions = rng.normal(size=(6, 2))
    motions = rng.normal(size=(6, 2))
    perm = rng.permutation(6)
    for kind in KERNEL_KINDS:
        a = build_adjacency(kind, positions, motions)
        a_perm = build_adjacency(kind, positions[perm], motions[perm])
        assert np.max(np.abs(a_perm - a[np.ix_(perm, perm)])) < 1e-12
        ahat = normalize_adjacency(a)
        ahat_perm = normalize_adjacency(a_perm)
        assert np.max(np.abs(ahat_perm - ahat[np.ix_(perm, perm)])) < 1e-12


def test_instance_graphs_first_frame_has_zero_motion():
    inst = synthetic_instances(SyntheticScenarioSpec(kind="stagger", agents=5, seed=4), 1)[0]
    trend = instance_graphs(inst, "motion_trend")
    inv = instance_graphs(inst, "inv_dist")
    assert trend.shape == (8, 5, 5)
    # With zero motions the trend kernel reduces to inverse distance.
    assert np.allclose(trend[0], inv[0], atol=1e-15)
    assert not np.allclose(trend[1], inv[1])
