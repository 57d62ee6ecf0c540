"""Bivariate-Gaussian output heads, the NLL loss, and displacement metrics.

The network emits five channels per agent per predicted frame:
(mu_x, mu_y, raw_sigma_x, raw_sigma_y, raw_rho). Exponentiating the sigma
channels and squashing rho through tanh guarantees a valid covariance for
any finite input. Everything predicted is a relative displacement; metrics
rebuild absolute positions by cumulative sum from the last observed
position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .rng import Xorshift64Star

LOG_TWO_PI = math.log(2.0 * math.pi)
RHO_GUARD = 1e-12


@dataclass
class GaussianField:
    """Decoded distribution parameters, each a tensor on the tape.

    mu and sigma are (N, T, P, 2); rho is (N, T, P, 1).
    """

    mu: T.Tensor
    sigma: T.Tensor
    rho: T.Tensor

    @property
    def n_frames(self) -> int:
        return self.mu.shape[1]

    @property
    def n_agents(self) -> int:
        return self.mu.shape[2]


@dataclass
class MetricReport:
    ade: float
    fde: float
    n_agents: int
    n_frames: int
    sample_count: int


def decode_gaussian(raw: T.Tensor) -> GaussianField:
    """Split the 5-channel output into (mu, sigma, rho) tensors."""
    raw = T.as_tensor(raw)
    if raw.ndim != 4 or raw.shape[-1] != 5:
        raise DimensionError(f"decode_gaussian wants (N, T, P, 5), got {raw.shape}")
    return GaussianField(
        mu=raw[..., 0:2],
        sigma=T.exp(raw[..., 2:4]),
        rho=T.tanh(raw[..., 4:5]),
    )


def nll_loss(field: GaussianField, target_rel: np.ndarray) -> T.Tensor:
    """Mean over agents of the summed per-frame negative log density.

    ``target_rel`` holds ground-truth displacements, (P, T, 2) for one
    instance or (N, P, T, 2) for a batch; a batch averages agents across
    all of its instances. Computed in the log domain; 1 - rho^2 is clamped
    at 1e-12 so the loss stays finite as |rho| approaches 1.
    """
    target_rel = np.asarray(target_rel, dtype=np.float64)
    n, t, p = field.mu.shape[0], field.mu.shape[1], field.mu.shape[2]
    if target_rel.shape == (p, t, 2):
        target_rel = np.broadcast_to(target_rel[None], (n, p, t, 2))
    elif target_rel.shape != (n, p, t, 2):
        raise DimensionError(
            f"target {target_rel.shape} does not match field ({p}, {t}, 2)"
        )
    target = T.Tensor(np.ascontiguousarray(target_rel.transpose(0, 2, 1, 3)))

    dx = T.sub(target[..., 0:1], field.mu[..., 0:1])
    dy = T.sub(target[..., 1:2], field.mu[..., 1:2])
    sx = field.sigma[..., 0:1]
    sy = field.sigma[..., 1:2]
    rho = field.rho

    zx = T.div(dx, sx)
    zy = T.div(dy, sy)
    z = T.sub(T.add(T.mul(zx, zx), T.mul(zy, zy)),
              T.mul(T.mul(rho, 2.0), T.mul(zx, zy)))
    one_minus = T.clamp(T.sub(1.0, T.mul(rho, rho)), RHO_GUARD, None)
    log_norm = T.add(T.add(T.log(sx), T.log(sy)),
                     T.add(T.mul(T.log(one_minus), 0.5), LOG_TWO_PI))
    per_frame = T.add(log_norm, T.div(z, T.mul(one_minus, 2.0)))
    per_agent = T.tensor_sum(per_frame, axis=1)
    return T.tensor_mean(per_agent)


def mu_trajectory(field: GaussianField, origin_abs: np.ndarray) -> np.ndarray:
    """Deterministic prediction: cumulative sum of mu from the last
    observed absolute position. Returns (P, T, 2)."""
    mu = field.mu.data[0].transpose(1, 0, 2)
    origin = np.asarray(origin_abs, dtype=np.float64).reshape(-1, 1, 2)
    if origin.shape[0] != mu.shape[0]:
        raise DimensionError(f"origin has {origin.shape[0]} agents, field {mu.shape[0]}")
    return origin + np.cumsum(mu, axis=1)


def sample_trajectories(field: GaussianField, k: int, seed: int,
                        origin_abs: np.ndarray) -> np.ndarray:
    """Draw K absolute trajectories, (K, P, T, 2), deterministically.

    Each frame's displacement is mu + L z with L the Cholesky factor of
    the 2x2 covariance and z a standard normal pair. Draws are ordered
    sample-major, then agent, then frame, so the first K samples of a
    K+1 run coincide with the K run (nested seed streams).
    """
    if k < 1:
        raise ContractError("need at least one sample")
    if field.mu.shape[0] != 1:
        raise ContractError("sampling expects a single-sequence field (N == 1)")
    mu = field.mu.data[0].transpose(1, 0, 2)
    sigma = field.sigma.data[0].transpose(1, 0, 2)
    rho = field.rho.data[0].transpose(1, 0, 2)[..., 0]
    p, t = mu.shape[0], mu.shape[1]
    origin = np.asarray(origin_abs, dtype=np.float64).reshape(p, 1, 2)
    rng = Xorshift64Star(seed)
    out = np.empty((k, p, t, 2))
    for s in range(k):
        rel = np.empty((p, t, 2))
        for a in range(p):
            for f in range(t):
                z0, z1 = rng.normal_pair()
                sx, sy = sigma[a, f]
                r = rho[a, f]
                tail = sy * math.sqrt(max(1.0 - r * r, RHO_GUARD))
                rel[a, f, 0] = mu[a, f, 0] + sx * z0
                rel[a, f, 1] = mu[a, f, 1] + r * sy * z0 + tail * z1
        out[s] = origin + np.cumsum(rel, axis=1)
    return out


def ade_fde(pred_abs: np.ndarray, truth_abs: np.ndarray) -> tuple[float, float]:
    """Average and final displacement errors over (P, T, 2) trajectories.

    Accumulation is a plain sequential loop so an independent double-loop
    oracle reproduces the result bit for bit.
    """
    pred_abs = np.asarray(pred_abs, dtype=np.float64)
    truth_abs = np.asarray(truth_abs, dtype=np.float64)
    if pred_abs.shape != truth_abs.shape or pred_abs.ndim != 3 or pred_abs.shape[-1] != 2:
        raise DimensionError(
            f"ade_fde wants matching (P, T, 2) arrays, got {pred_abs.shape} and {truth_abs.shape}"
        )
    p, t = pred_abs.shape[0], pred_abs.shape[1]
    total = 0.0
    final_total = 0.0
    for a in range(p):
        for f in range(t):
            err = math.hypot(pred_abs[a, f, 0] - truth_abs[a, f, 0],
                             pred_abs[a, f, 1] - truth_abs[a, f, 1])
            total += err
            if f == t - 1:
                final_total += err
    return total / (p * t), final_total / p


def best_of_k(field: GaussianField, truth_abs: np.ndarray, k: int, seed: int,
              origin_abs: np.ndarray) -> MetricReport:
    """Metrics of the sample whose ADE is smallest (its FDE reported jointly)."""
    samples = sample_trajectories(field, k, seed, origin_abs)
    best = None
    for s in range(k):
        ade, fde = ade_fde(samples[s], truth_abs)
        if best is None or ade < best[0]:
            best = (ade, fde)
    return MetricReport(ade=best[0], fde=best[1], n_agents=samples.shape[1],
                        n_frames=samples.shape[2], sample_count=k)


def restore_ratio(ade_n: float, fde_n: float, ade_base: float, fde_base: float) -> float:
    """Mean relative excess error over the scene-trained baseline.

    Zero means the online model matches the baseline; negative means it
    beats it.
    """
    if ade_base <= 0 or fde_base <= 0:
        raise ContractError("restore_ratio needs positive base metrics")
    return 0.5 * ((ade_n - ade_base) / ade_base + (fde_n - fde_base) / fde_base)
