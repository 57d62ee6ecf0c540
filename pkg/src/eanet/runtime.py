"""Offline batch training, the prequential online loop, and run health.

The offline loop accumulates gradients over a shuffled minibatch and
takes one averaged SGD step; instances that share an agent count are
stacked and pushed through the network in a single batched forward, which
is arithmetically the same as summing per-instance losses but an order of
magnitude faster. The online loop is prequential: every instance is
predicted and scored with the parameters as they stood *before* that
instance contributed a single gradient.

Health bookkeeping follows the gradient history. A run is `exploded` when
any loss or pre-clip gradient norm is non-finite or the pre-clip norm
exceeds 1e3, `vanished` when the pre-clip norm stays below 1e-8 for 50
consecutive updates, and `normal` otherwise; whichever condition triggers
first in time wins. Clipping is applied after the explosion probe, so a
clipped run can be flagged exploded while still training on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .attention import HedgeState, hedge_update
from .data import TrajectoryInstance
from .errors import ConfigError, ContractError, DataError, TrainingDiverged
from .gaussian import ade_fde, best_of_k, decode_gaussian, mu_trajectory, nll_loss, restore_ratio
from .graph import instance_graphs
from .model import ModelConfig, TrajectoryModel
from .rng import Xorshift64Star

EXPLODE_NORM = 1e3
VANISH_NORM = 1e-8
VANISH_RUN = 50

ALIGNMENTS = ("none", "recentre")
STRATEGIES = ("ea", "plain", "hedge")

# Keeps the shuffle stream distinct from the parameter-init stream even
# though both configs carry one seed field.
_SHUFFLE_SALT = 0x9E3779B97F4A7C15


@dataclass
class TrainConfig:
    epochs: int = 250
    batch_size: int = 128
    lr: float = 0.01
    lr_after: float = 0.002
    lr_drop_epoch: int = 150
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0 or self.lr_after <= 0:
            raise ConfigError("learning rates must be positive")
        if self.lr_drop_epoch < 0:
            raise ConfigError("lr_drop_epoch must be >= 0")


@dataclass
class OnlineConfig:
    lr: float = 0.002
    clip_norm: float | None = 1.0
    updates_per_instance: int = 1
    max_instances: int = 1000
    alignment: str = "none"
    strategy: str = "ea"
    rr_checkpoints: tuple[int, ...] = (0, 100, 1000)
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive (or None to disable)")
        if self.updates_per_instance < 1:
            raise ConfigError("updates_per_instance must be >= 1")
        if self.max_instances < 1:
            raise ConfigError("max_instances must be >= 1")
        if self.alignment not in ALIGNMENTS:
            raise ConfigError(f"alignment must be one of {ALIGNMENTS}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if any(c < 0 for c in self.rr_checkpoints):
            raise ConfigError("rr checkpoints must be non-negative")


@dataclass
class HealthStatus:
    status: str = "normal"
    first_trigger_instance: int | None = None


@dataclass
class StreamRecord:
    """One prequential step: metrics of the pre-update prediction plus the
    update's bookkeeping. ``grad_norm`` is the post-clip norm actually
    applied; ``expert`` and ``alpha`` are per-layer gate means and mix
    weights for the strategies that have them."""

    instance_idx: int
    ade: float
    fde: float
    rr: float | None
    loss: float
    grad_norm: float | None
    health: str
    expert: tuple[float, ...] | None
    alpha: tuple[float, ...] | None


@dataclass
class TrainResult:
    model: TrajectoryModel
    loss_log: list[float]
    config: TrainConfig


@dataclass
class OnlineResult:
    records: list[StreamRecord]
    health: HealthStatus
    rr_at: dict[int, float | None] = field(default_factory=dict)


@dataclass
class BaseMetrics:
    ade: float
    fde: float
    n_train: int
    n_test: int


def sgd_step(params: dict[str, T.Tensor], lr: float) -> None:
    """In-place plain SGD on every parameter that received a gradient."""
    for p in params.values():
        if p.grad is not None:
            p.data -= lr * p.grad


def _instance_arrays(instance: TrajectoryInstance, config: ModelConfig):
    if instance.t_obs != config.t_obs or instance.t_pred != config.t_pred:
        raise ConfigError(
            f"instance spans ({instance.t_obs}, {instance.t_pred}), "
            f"model expects ({config.t_obs}, {config.t_pred})"
        )
    ahat = instance_graphs(instance, config.kernel, config.rbf_sigma)
    x_seq = np.ascontiguousarray(instance.obs_rel.transpose(1, 0, 2))
    return x_seq, ahat, instance.fut_rel


def train_offline(dataset: list[TrajectoryInstance], config: TrainConfig,
                  model_config: ModelConfig | None = None,
                  model: TrajectoryModel | None = None,
                  progress=None) -> TrainResult:
    """Minimise the plain-output NLL with minibatch SGD.

    A batch is one averaged gradient step over ``batch_size`` shuffled
    instances; same-sized instances inside the batch share one stacked
    forward pass and the group losses are combined weighted by group size,
    so the result equals per-instance accumulation. The learning rate
    drops from ``lr`` to ``lr_after`` at ``lr_drop_epoch``. A non-finite
    batch loss aborts with the epoch and step recorded.
    """
    config.validate()
    if not dataset:
        raise DataError("training needs at least one instance")
    if model is None:
        model = TrajectoryModel(model_config or ModelConfig(), seed=config.seed)

    prepared = [_instance_arrays(inst, model.config) for inst in dataset]
    rng = Xorshift64Star(config.seed ^ _SHUFFLE_SALT)
    order = list(range(len(dataset)))
    loss_log: list[float] = []

    for epoch in range(config.epochs):
        lr = config.lr if epoch < config.lr_drop_epoch else config.lr_after
        rng.shuffle(order)
        epoch_sum = 0.0
        for step, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start:start + config.batch_size]
            groups: dict[int, list[int]] = {}
            for idx in batch:
                groups.setdefault(prepared[idx][0].shape[1], []).append(idx)
            model.zero_grad()
            batch_loss = None
            for members in groups.values():
                x_seq = np.stack([prepared[i][0] for i in members])
                ahat = np.stack([prepared[i][1] for i in members])
                fut = np.stack([prepared[i][2] for i in members])
                layers = model.forward_batch(x_seq, ahat)
                group_loss = nll_loss(decode_gaussian(layers[-1]), fut)
                weighted = T.mul(group_loss, len(members) / len(batch))
                batch_loss = weighted if batch_loss is None else T.add(batch_loss, weighted)
            value = batch_loss.item()
            if not np.isfinite(value):
                T.tape().clear()
                raise TrainingDiverged(
                    f"non-finite loss {value}", epoch=epoch, step=step)
            T.backward(batch_loss)
            sgd_step(model.params, lr)
            epoch_sum += value * len(batch)
        loss_log.append(epoch_sum / len(order))
        if progress is not None:
            progress(epoch, loss_log[-1])
    return TrainResult(model=model, loss_log=loss_log, config=config)


def classify_health(grad_norms, losses,
                    explode_norm: float = EXPLODE_NORM,
                    vanish_norm: float = VANISH_NORM,
                    vanish_run: int = VANISH_RUN) -> HealthStatus:
    """Scan parallel gradient/loss histories and report the first trigger.

    ``grad_norms`` are pre-clip norms. Non-finite entries on either side
    count as explosion. The vanish counter resets whenever a norm clears
    the threshold, so only ``vanish_run`` *consecutive* tiny updates
    qualify.
    """
    grad_norms = list(grad_norms)
    losses = list(losses)
    if not grad_norms or len(grad_norms) != len(losses):
        raise ContractError("need nonempty histories of equal length")
    run = 0
    for i, (g, l) in enumerate(zip(grad_norms, losses)):
        if not np.isfinite(l) or not np.isfinite(g) or g > explode_norm:
            return HealthStatus(status="exploded", first_trigger_instance=i)
        if g < vanish_norm:
            run += 1
            if run >= vanish_run:
                return HealthStatus(status="vanished", first_trigger_instance=i)
        else:
            run = 0
    return HealthStatus()


def run_online(model: TrajectoryModel, stream: list[TrajectoryInstance],
               config: OnlineConfig, base: BaseMetrics | None = None,
               progress=None) -> OnlineResult:
    """Prequential predict-then-update over an ordered instance stream.

    Every step reuses one taped forward: the mu-trajectory metrics are read
    off before the backward pass, so the recorded errors always describe a
    model that has not yet seen the instance. The EA head is re-initialised
    from ``config.seed`` when the run starts, matching a deployment that
    attaches a fresh gate to a pretrained network. With ``strategy=hedge``
    the simplex weights move by multiplicative update on the per-layer
    losses while the network itself trains on the mixed output's NLL.

    A non-finite forward skips the update for that instance, flags the row,
    and keeps going; the final health classification still counts it.
    """
    config.validate()
    head_rng = Xorshift64Star(config.seed)
    if config.strategy == "ea":
        model.init_expert_head(head_rng)
    hedge = HedgeState.uniform(model.config.stack_layers) if config.strategy == "hedge" else None

    records: list[StreamRecord] = []
    pre_norms: list[float] = []
    losses: list[float] = []
    vanish_streak = 0

    for idx, raw_inst in enumerate(stream[:config.max_instances]):
        inst = raw_inst.recentred() if config.alignment == "recentre" else raw_inst
        layers = model.intermediate_outputs(inst)
        raw, trace = model.strategy_output(layers, config.strategy, hedge)
        gfield = decode_gaussian(raw)
        pred_abs = mu_trajectory(gfield, inst.obs_abs[:, -1])
        ade, fde = ade_fde(pred_abs, inst.fut_abs)
        rr = restore_ratio(ade, fde, base.ade, base.fde) if base is not None else None
        expert = tuple(float(v) for v in trace.gate) if trace is not None else (
            tuple(float(v) for v in hedge.w) if hedge is not None else None)
        alpha = tuple(float(v) for v in trace.alpha) if trace is not None else None

        if hedge is not None:
            with T.no_grad():
                layer_losses = [nll_loss(decode_gaussian(m), inst.fut_rel).item()
                                for m in layers]

        loss_value = nll_loss(gfield, inst.fut_rel)
        loss = loss_value.item()
        losses.append(loss)
        row_health = "normal"
        grad_norm = None

        if not np.isfinite(loss):
            T.tape().clear()
            model.zero_grad()
            pre_norms.append(float("nan"))
            row_health = "exploded"
        else:
            T.backward(loss_value)
            pre = T.global_grad_norm(model.parameters())
            pre_norms.append(pre)
            if not np.isfinite(pre) or pre > EXPLODE_NORM:
                row_health = "exploded"
            elif pre < VANISH_NORM:
                vanish_streak += 1
                if vanish_streak >= VANISH_RUN:
                    row_health = "vanished"
            else:
                vanish_streak = 0
            if np.isfinite(pre):
                if config.clip_norm is not None and pre > config.clip_norm:
                    T.scale_grads(model.parameters(), config.clip_norm / pre)
                    grad_norm = config.clip_norm
                else:
                    grad_norm = pre
                sgd_step(model.params, config.lr)
            model.zero_grad()

            for _ in range(config.updates_per_instance - 1):
                extra = nll_loss(decode_gaussian(
                    model.strategy_output(model.intermediate_outputs(inst),
                                          config.strategy, hedge)[0]), inst.fut_rel)
                if not np.isfinite(extra.item()):
                    T.tape().clear()
                    model.zero_grad()
                    break
                T.backward(extra)
                pre_extra = T.global_grad_norm(model.parameters())
                if np.isfinite(pre_extra):
                    if config.clip_norm is not None and pre_extra > config.clip_norm:
                        T.scale_grads(model.parameters(), config.clip_norm / pre_extra)
                    sgd_step(model.params, config.lr)
                model.zero_grad()

        if hedge is not None:
            hedge = hedge_update(hedge, layer_losses)

        records.append(StreamRecord(
            instance_idx=idx, ade=ade, fde=fde, rr=rr, loss=loss,
            grad_norm=grad_norm, health=row_health, expert=expert, alpha=alpha))
        if progress is not None:
            progress(idx, records[-1])

    health = classify_health(pre_norms, losses) if records else HealthStatus()
    rr_at = {c: records[c].rr for c in config.rr_checkpoints if c < len(records)}
    return OnlineResult(records=records, health=health, rr_at=rr_at)


def compute_base(dataset: list[TrajectoryInstance], config: TrainConfig,
                 model_config: ModelConfig | None = None,
                 samples: int = 20) -> BaseMetrics:
    """Scene-native baseline: train on the first 80% of windows, report
    mean best-of-K metrics on the held-out 20%.

    A single-instance dataset degenerates to training and evaluating on
    that instance. The returned numbers anchor every restore-ratio column.
    """
    if not dataset:
        raise DataError("base computation needs at least one instance")
    if len(dataset) == 1:
        train, test = dataset, dataset
    else:
        cut = min(max(1, int(len(dataset) * 0.8)), len(dataset) - 1)
        train, test = dataset[:cut], dataset[cut:]
    result = train_offline(train, config, model_config)
    ades, fdes = [], []
    with T.no_grad():
        for i, inst in enumerate(test):
            gfield = result.model.predict_field(inst, strategy="plain")
            report = best_of_k(gfield, inst.fut_abs, samples,
                               seed=config.seed + i, origin_abs=inst.obs_abs[:, -1])
            ades.append(report.ade)
            fdes.append(report.fde)
    return BaseMetrics(ade=float(np.mean(ades)), fde=float(np.mean(fdes)),
                       n_train=len(train), n_test=len(test))
