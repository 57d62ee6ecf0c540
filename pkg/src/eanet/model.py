"""The assembled predictor: graphs, convolution stack, and output heads.

Parameter registry layout (names are the checkpoint tensor names):

    gcn/w        (2, D)            graph convolution weight
    expand/k     (T_pred, T_obs, 3, 3)   time-expansion kernel
    stack/<l>/k  (T_pred, T_pred, 3, 3)  stacked conv kernels
    stack/<l>/s  ()                per-layer prelu slope
    ea/theta     (D, 1)            gate read-out
    ea/bias      ()                gate bias
    ea/alpha     (L,)              layer mix

Convolutions are bias-free, initialised uniformly in +-1/sqrt(fan_in).
The attention head starts with a near-constant gate of one half and the
mix one-hot on the deepest layer scaled by two, so the gated output
matches the plain deepest-layer output that offline training optimised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import ea_output, hedge_output, plain_output
from .data import SyntheticScenarioSpec, TrajectoryInstance, synthetic_instances
from .errors import ConfigError
from .gaussian import GaussianField, decode_gaussian, mu_trajectory
from .graph import KERNEL_KINDS, instance_graphs, gcn_forward
from .rng import Xorshift64Star

GAUSS_CHANNELS = 5


@dataclass
class ModelConfig:
    t_obs: int = 8
    t_pred: int = 12
    feat_dim: int = GAUSS_CHANNELS
    stack_layers: int = 5
    kernel: str = "motion_trend"
    rbf_sigma: float = 1.0
    prelu_init: float = 0.25

    def validate(self) -> None:
        if self.t_obs < 1 or self.t_pred < 1:
            raise ConfigError("t_obs and t_pred must be positive")
        if self.feat_dim != GAUSS_CHANNELS:
            raise ConfigError(f"feature dimension is fixed at {GAUSS_CHANNELS}")
        if self.stack_layers < 1:
            raise ConfigError("stack_layers must be >= 1")
        if self.kernel not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kernel!r}")
        if self.rbf_sigma <= 0:
            raise ConfigError("rbf_sigma must be positive")


def _uniform_tensor(rng: Xorshift64Star, shape: tuple[int, ...], bound: float) -> T.Tensor:
    flat = np.array([rng.uniform_in(-bound, bound) for _ in range(int(np.prod(shape)))])
    return T.Tensor(flat.reshape(shape), requires_grad=True)


class TrajectoryModel:
    """Holds the parameter registry and runs the forward passes."""

    def __init__(self, config: ModelConfig | None = None, seed: int = 0,
                 rng: Xorshift64Star | None = None):
        self.config = config or ModelConfig()
        self.config.validate()
        rng = rng or Xorshift64Star(seed)
        cfg = self.config
        self.params: dict[str, T.Tensor] = {}
        self.params["gcn/w"] = _uniform_tensor(rng, (2, cfg.feat_dim), 1.0 / math.sqrt(2.0))
        self.params["expand/k"] = _uniform_tensor(
            rng, (cfg.t_pred, cfg.t_obs, 3, 3), 1.0 / math.sqrt(cfg.t_obs * 9.0))
        for layer in range(cfg.stack_layers):
            self.params[f"stack/{layer}/k"] = _uniform_tensor(
                rng, (cfg.t_pred, cfg.t_pred, 3, 3), 1.0 / math.sqrt(cfg.t_pred * 9.0))
            self.params[f"stack/{layer}/s"] = T.Tensor(cfg.prelu_init, requires_grad=True)
        self.init_expert_head(rng)

    def init_expert_head(self, rng: Xorshift64Star) -> None:
        """(Re)initialise the attention head; called again when an online
        run starts so the gate begins at one half and the mix at the
        deepest layer."""
        cfg = self.config
        theta = _uniform_tensor(rng, (cfg.feat_dim, 1), 0.01)
        self.params["ea/theta"] = theta
        self.params["ea/bias"] = T.Tensor(math.atanh(0.5), requires_grad=True)
        alpha = np.zeros(cfg.stack_layers)
        alpha[-1] = 2.0
        self.params["ea/alpha"] = T.Tensor(alpha, requires_grad=True)

    def parameters(self) -> list[T.Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    # ----------------------------------------------------------------- forward

    def forward_batch(self, x_seq: np.ndarray, ahat_seq: np.ndarray) -> list[T.Tensor]:
        """Stacked-layer outputs for a batch of same-sized instances.

        ``x_seq`` holds relative displacements as (N, T_obs, P, 2) and
        ``ahat_seq`` the normalized graphs as (N, T_obs, P, P); returns L
        tensors of shape (N, T_pred, P, D). Offline training pushes whole
        minibatches through here in one call.
        """
        from .temporal import stack_forward, time_expand

        cfg = self.config
        x0 = time_expand(gcn_forward(ahat_seq, x_seq, self.params["gcn/w"]),
                         self.params["expand/k"])
        kernels = [self.params[f"stack/{l}/k"] for l in range(cfg.stack_layers)]
        slopes = [self.params[f"stack/{l}/s"] for l in range(cfg.stack_layers)]
        return stack_forward(x0, kernels, slopes)

    def intermediate_outputs(self, instance: TrajectoryInstance) -> list[T.Tensor]:
        """All L stacked-layer outputs, each (1, T_pred, P, D)."""
        cfg = self.config
        if instance.t_obs != cfg.t_obs or instance.t_pred != cfg.t_pred:
            raise ConfigError(
                f"instance spans ({instance.t_obs}, {instance.t_pred}), "
                f"model expects ({cfg.t_obs}, {cfg.t_pred})"
            )
        ahat_seq = instance_graphs(instance, cfg.kernel, cfg.rbf_sigma)
        x_seq = np.ascontiguousarray(instance.obs_rel.transpose(1, 0, 2))
        return self.forward_batch(x_seq[None], ahat_seq[None])

    def strategy_output(self, layers: list[T.Tensor], strategy: str,
                        hedge_state=None):
        """Combine the intermediate outputs; returns (raw, trace-or-None)."""
        if strategy == "ea":
            return ea_output(layers, self.params["ea/theta"], self.params["ea/bias"],
                             self.params["ea/alpha"])
        if strategy == "plain":
            return plain_output(layers), None
        if strategy == "hedge":
            if hedge_state is None:
                raise ConfigError("hedge strategy needs a HedgeState")
            return hedge_output(layers, hedge_state), None
        raise ConfigError(f"unknown strategy {strategy!r}")

    def predict_field(self, instance: TrajectoryInstance, strategy: str = "plain",
                      hedge_state=None) -> GaussianField:
        layers = self.intermediate_outputs(instance)
        raw, _ = self.strategy_output(layers, strategy, hedge_state)
        return decode_gaussian(raw)

    def predict(self, instance: TrajectoryInstance, strategy: str = "plain",
                hedge_state=None) -> np.ndarray:
        """Deterministic (P, T_pred, 2) absolute prediction, off the tape."""
        with T.no_grad():
            field = self.predict_field(instance, strategy, hedge_state)
        return mu_trajectory(field, instance.obs_abs[:, -1])


def toy_instance(agents: int = 3, config: ModelConfig | None = None,
                 seed: int = 0) -> TrajectoryInstance:
    """A small synthetic instance for gradient checks and smoke tests."""
    cfg = config or ModelConfig()
    spec = SyntheticScenarioSpec(kind="stagger", agents=agents, seed=seed)
    return synthetic_instances(spec, 1, t_obs=cfg.t_obs, t_pred=cfg.t_pred)[0]
