"""Frame-level interaction graphs and the graph convolution.

Each observed frame becomes a weighted P x P adjacency over the agents
present. The default kernel weighs a pair by the inverse of the sum of
their motion difference and position difference, so agents that are close
AND moving alike couple strongly; three ablation kernels (plain inverse
distance, raw L2 distance, exponential radial basis) share the same
coincident-position guard. The adjacency is symmetrically normalised with
self-loops before the convolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import TrajectoryInstance
from .errors import ConfigError, DimensionError

KERNEL_KINDS = ("motion_trend", "inv_dist", "l2", "rbf")


def kernel_weight(kind: str, v_i, v_j, r_i, r_j, rbf_sigma: float = 1.0) -> float:
    """Edge weight between two agents.

    ``v`` are absolute positions, ``r`` per-frame motions (displacements).
    Coincident positions always give weight zero, which keeps every kernel
    finite without special-casing downstream.
    """
    v_i, v_j = np.asarray(v_i, dtype=float), np.asarray(v_j, dtype=float)
    r_i, r_j = np.asarray(r_i, dtype=float), np.asarray(r_j, dtype=float)
    dv = float(np.linalg.norm(v_i - v_j))
    if dv == 0.0:
        return 0.0
    if kind == "motion_trend":
        dr = float(np.linalg.norm(r_i - r_j))
        return 1.0 / (dr + dv)
    if kind == "inv_dist":
        return 1.0 / dv
    if kind == "l2":
        return dv
    if kind == "rbf":
        if rbf_sigma <= 0:
            raise ConfigError("rbf kernel needs sigma > 0")
        return float(np.exp(-dv)) / rbf_sigma
    raise ConfigError(f"unknown kernel kind {kind!r}")


def build_adjacency(kind: str, positions: np.ndarray, motions: np.ndarray,
                    rbf_sigma: float = 1.0) -> np.ndarray:
    """Dense symmetric adjacency for one frame. Diagonal is zero."""
    positions = np.asarray(positions, dtype=np.float64)
    motions = np.asarray(motions, dtype=np.float64)
    if positions.shape != motions.shape or positions.ndim != 2 or positions.shape[1] != 2:
        raise DimensionError(
            f"positions {positions.shape} and motions {motions.shape} must both be (P, 2)"
        )
    if kind not in KERNEL_KINDS:
        raise ConfigError(f"unknown kernel kind {kind!r}")
    if kind == "rbf" and rbf_sigma <= 0:
        raise ConfigError("rbf kernel needs sigma > 0")
    dv = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    apart = dv > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "motion_trend":
            dr = np.linalg.norm(motions[:, None, :] - motions[None, :, :], axis=-1)
            weights = 1.0 / (dr + dv)
        elif kind == "inv_dist":
            weights = 1.0 / dv
        elif kind == "l2":
            weights = dv.copy()
        else:
            weights = np.exp(-dv) / rbf_sigma
    adjacency = np.where(apart, weights, 0.0)
    np.fill_diagonal(adjacency, 0.0)
    return adjacency


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric normalisation with self-loops.

    With A' = A + I and D the diagonal of A' row sums, returns
    D^(-1/2) A' D^(-1/2). Row sums of A' are strictly positive because of
    the self-loops, so the inverse square root always exists.
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise DimensionError(f"adjacency must be square, got {adjacency.shape}")
    with_loops = adjacency + np.eye(adjacency.shape[0])
    inv_sqrt = 1.0 / np.sqrt(with_loops.sum(axis=1))
    return inv_sqrt[:, None] * with_loops * inv_sqrt[None, :]


@dataclass
class FrameGraph:
    positions: np.ndarray
    motions: np.ndarray
    adjacency: np.ndarray
    normalized: np.ndarray


def build_frame_graph(positions, motions, kind: str = "motion_trend",
                      rbf_sigma: float = 1.0) -> FrameGraph:
    adjacency = build_adjacency(kind, positions, motions, rbf_sigma)
    return FrameGraph(np.asarray(positions, dtype=np.float64),
                      np.asarray(motions, dtype=np.float64),
                      adjacency, normalize_adjacency(adjacency))


def instance_graphs(instance: TrajectoryInstance, kind: str = "motion_trend",
                    rbf_sigma: float = 1.0) -> np.ndarray:
    """Stacked normalised adjacencies (T_obs, P, P) for one instance.

    The motion at the first observed frame is zero by the relative-array
    convention, so the default kernel degrades to inverse distance there.
    """
    frames = []
    for t in range(instance.t_obs):
        adjacency = build_adjacency(kind, instance.obs_abs[:, t], instance.obs_rel[:, t],
                                    rbf_sigma)
        frames.append(normalize_adjacency(adjacency))
    return np.stack(frames, axis=0)


def gcn_forward(ahat_seq: np.ndarray, features, weight: T.Tensor) -> T.Tensor:
    """Per-frame graph convolution: sigmoid(A_hat X W).

    ``ahat_seq`` is (T, P, P), or (N, T, P, P) for a batch of instances,
    and constant w.r.t. the parameters; ``features`` matches it as
    (..., T, P, D_in); ``weight`` is (D_in, D_out). Returns a
    (..., T, P, D_out) tensor on the tape.
    """
    ahat_seq = np.asarray(ahat_seq, dtype=np.float64)
    features = T.as_tensor(features)
    if ahat_seq.ndim not in (3, 4) or ahat_seq.shape[-1] != ahat_seq.shape[-2]:
        raise DimensionError(f"ahat_seq must be (..., T, P, P), got {ahat_seq.shape}")
    if features.ndim != ahat_seq.ndim or features.shape[:-1] != ahat_seq.shape[:-1]:
        raise DimensionError(
            f"features {features.shape} inconsistent with graphs {ahat_seq.shape}"
        )
    mixed = T.matmul(T.Tensor(ahat_seq), features)
    return T.sigmoid(T.matmul(mixed, weight))
