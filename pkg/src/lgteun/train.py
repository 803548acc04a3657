"""Supervised end-to-end training: MAE loss, Adam, step-decay learning rate."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from lgteun.errors import ContractError, TrainingDivergedError
from lgteun.tensor import ops
from lgteun.tensor.autodiff import Graph, Var, value
from lgteun.unfold import UnfoldConfig, lgteun_forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1.5e-3
    decay: float = 0.85
    decay_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch: int = 4
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ContractError(f"decay must be in (0, 1], got {self.decay}")
        if self.batch < 1:
            raise ContractError(f"batch must be >= 1, got {self.batch}")
        if self.decay_every < 1:
            raise ContractError(f"decay_every must be >= 1, got {self.decay_every}")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def mae_loss(pred, gt):
    if value(pred).shape != value(gt).shape:
        raise ContractError(f"MAE operands differ in shape: {value(pred).shape} vs {value(gt).shape}")
    return ops.mean_all(ops.absolute(ops.sub(pred, gt)))


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * cfg.decay ** (epoch // cfg.decay_every)


def adam_step(params: Mapping, grads: Mapping, state: AdamState, lr: float, cfg: TrainConfig):
    """One bias-corrected Adam update.  Returns ``(new_params, state)``."""
    missing = [k for k in params if k not in grads]
    if missing:
        raise ContractError(f"no gradient for parameter(s): {', '.join(missing[:5])}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=p.dtype)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.m[name] = m.astype(p.dtype, copy=False)
        state.v[name] = v.astype(p.dtype, copy=False)
        upd = lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        out[name] = (p - upd).astype(p.dtype, copy=False)
    return out, state


# ------------------------------------------------------------ gradient check

@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def failures(self) -> list[str]:
        return [k for k, e in self.errors.items() if not e <= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        if self.passed:
            return f"grad check passed: max rel err {self.max_error:.2e} <= {self.tolerance:g}"
        worst = max(self.failures, key=self.errors.get)
        return (f"grad check FAILED for {len(self.failures)} parameter(s); worst {worst!r} "
                f"rel err {self.errors[worst]:.2e} > {self.tolerance:g}")


def grad_check(loss_fn: Callable, params: Mapping[str, np.ndarray], tolerance: float = 1e-4,
               step: float = 1e-5, max_coords: int = 32, seed: int = 0) -> GradCheckReport:
    """Compare tape gradients with central differences.

    ``loss_fn(store)`` must return a scalar for both plain-array and ``Var``
    stores.  For each parameter up to ``max_coords`` coordinates are sampled;
    the block error is ``||g_tape - g_fd|| / max(||g_tape||, ||g_fd||)`` over
    those coordinates.
    """
    graph = Graph()
    loss = loss_fn(graph.params(params))
    if not isinstance(loss, Var):
        raise ContractError("loss_fn does not depend on the parameters")
    tape = graph.backward(loss)

    rng = np.random.default_rng(seed)
    errors = {}
    for name, arr in params.items():
        flat_n = arr.size
        picks = rng.choice(flat_n, size=min(max_coords, flat_n), replace=False)
        analytic = tape[name].reshape(-1)[picks].astype(np.float64)
        numeric = np.empty(len(picks))
        for j, idx in enumerate(picks):
            trial = dict(params)
            pert = arr.copy().reshape(-1)
            base = pert[idx]
            pert[idx] = base + step
            trial[name] = pert.reshape(arr.shape)
            fp = float(value(loss_fn(trial)))
            pert[idx] = base - step
            fm = float(value(loss_fn(trial)))
            numeric[j] = (fp - fm) / (2 * step)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        errors[name] = 0.0 if scale == 0 else float(np.linalg.norm(analytic - numeric) / scale)
    return GradCheckReport(errors, tolerance)


# ------------------------------------------------------------ training loop

def stack_batch(samples):
    return (np.stack([s.lrms for s in samples]), np.stack([s.pan for s in samples]),
            np.stack([s.gt for s in samples]))


def loss_and_grads(params, lrms, pan, gt, model_cfg: UnfoldConfig):
    graph = Graph()
    pv = graph.params(params)
    loss = mae_loss(lgteun_forward(lrms, pan, pv, model_cfg), gt)
    return float(loss.value), graph.backward(loss)


def train_epoch(params, dataset, state: AdamState, cfg: TrainConfig, model_cfg: UnfoldConfig,
                epoch: int = 0):
    """One pass over ``dataset`` in seeded random order; the last partial batch is dropped.

    Returns ``(params, state, mean_batch_loss)``.
    """
    if not dataset:
        raise ContractError("empty dataset")
    n_batches = len(dataset) // cfg.batch
    if n_batches == 0:
        raise ContractError(f"dataset of {len(dataset)} samples yields no full batch of {cfg.batch}")
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset))
    lr = lr_schedule(epoch, cfg)
    losses = []
    for b in range(n_batches):
        idx = order[b * cfg.batch:(b + 1) * cfg.batch]
        lrms, pan, gt = stack_batch([dataset[i] for i in idx])
        loss, grads = loss_and_grads(params, lrms, pan, gt, model_cfg)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch {b}")
        params, state = adam_step(params, grads, state, lr, cfg)
        losses.append(loss)
    return params, state, float(np.mean(losses))


def fit(params, dataset, cfg: TrainConfig, model_cfg: UnfoldConfig, state: AdamState | None = None,
        start_epoch: int = 0, on_epoch: Callable | None = None):
    """Run ``cfg.epochs`` epochs; ``on_epoch(epoch, lr, loss, params)`` after each."""
    state = state or AdamState()
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        params, state, loss = train_epoch(params, dataset, state, cfg, model_cfg, epoch)
        log.debug("epoch %d lr %.3g loss %.6f", epoch, lr_schedule(epoch, cfg), loss)
        if on_epoch is not None:
            on_epoch(epoch, lr_schedule(epoch, cfg), loss, params)
    return params, state
