"""Meta-training: per-sample inner-loop codeword descent, batched outer-loop
base-network updates, validation-driven early stopping.

The inner loop runs a few plain gradient steps on the codeword, always from
zero, with the base network frozen. The outer loop holds the adapted
codewords fixed (first order, no differentiation through the inner
trajectory) and applies one Adam update to the base network from the sum of
per-sample gradients. Inner and outer updates therefore never touch each
other's variables.

Everything is deterministic given the seed: initialization, epoch shuffles,
and Adam state evolve from fixed streams with no hidden global RNG.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .model import DEFAULT_MOD_SCALE, ArchConfig, CoordinateGrid, ModelParams, init_params
from .siren import backward_batch, forward_batch, fourier_features


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient goes non-finite; names the step."""


@dataclass(frozen=True)
class TrainConfig:
    inner_steps: int = 3
    inner_lr: float = 1e-2
    outer_lr: float = 1e-6
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 8
    seed: int = 0
    grad_clip: float | None = None       # optional global-norm clip, off by default
    mod_scale: float = DEFAULT_MOD_SCALE  # init scale of the codeword-to-modulation maps

    def __post_init__(self):
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be >= 0")
        if self.inner_lr <= 0 or self.outer_lr < 0:
            raise ValueError("learning rates must be positive (outer may be 0)")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("batch_size, patience must be >= 1; max_epochs >= 0")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when set")


@dataclass
class AdamState:
    """First/second moment accumulators for every trainable block."""

    moment1: dict
    moment2: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        zeros = {k: np.zeros_like(v) for k, v in params.trainable_blocks().items()}
        return cls(moment1=zeros,
                   moment2={k: np.zeros_like(v) for k, v in zeros.items()})


@dataclass
class TrainLog:
    """Per-outer-step losses and per-epoch validation NMSE.

    Epoch 0 is the untrained model, recorded before the first update so runs
    can report improvement against their own starting point. wall_seconds is
    kept in memory only and never written to CSV.
    """

    steps: list = field(default_factory=list)    # (step, loss)
    epochs: list = field(default_factory=list)   # (epoch, val_nmse_db)
    wall_seconds: float = 0.0
    best_epoch: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("step,loss,epoch,val_nmse_db\n")
            for step, loss in self.steps:
                fh.write(f"{step},{loss!r},,\n")
            for epoch, val in self.epochs:
                fh.write(f",,{epoch},{val!r}\n")


def read_train_log(path) -> TrainLog:
    log = TrainLog()
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "step,loss,epoch,val_nmse_db":
            raise ValueError(f"{path}: unexpected train log header")
        for line in fh:
            step, loss, epoch, val = line.rstrip("\n").split(",")
            if step:
                log.steps.append((int(step), float(loss)))
            else:
                log.epochs.append((int(epoch), float(val)))
    return log


def _as_planes(target: np.ndarray) -> np.ndarray:
    t = np.asarray(target)
    if np.iscomplexobj(t):
        return np.stack([t.real.ravel(), t.imag.ravel()], axis=-1)
    if t.ndim != 2 or t.shape[-1] != 2:
        raise ValueError("target must be complex (rows, cols) or planes (count, 2)")
    return t


def inner_adapt_batch(params: ModelParams, feats: np.ndarray,
                      targets: np.ndarray, steps: int, lr: float) -> np.ndarray:
    """Adapt one codeword per target by plain gradient descent from zero.

    targets: (B, C, 2). Returns the adapted codewords (B, n). The params are
    read only; steps = 0 returns all-zero codewords without any evaluation.
    """
    dt = params.fourier.dtype
    cw = np.zeros((targets.shape[0], params.arch.codeword_dim), dtype=dt)
    for j in range(1, steps + 1):
        _, tape = forward_batch(params, cw, feats=feats)
        per_sample, grad_cw, _ = backward_batch(tape, params, targets,
                                                need_params=False)
        if not (np.all(np.isfinite(per_sample)) and np.all(np.isfinite(grad_cw))):
            raise TrainingDiverged(f"inner step {j}: non-finite loss or gradient")
        cw = cw - lr * grad_cw
    return cw


def inner_adapt(params: ModelParams, grid: CoordinateGrid, target: np.ndarray,
                steps: int, lr: float) -> np.ndarray:
    """Single-sample wrapper around inner_adapt_batch.

    target is either a complex (rows, cols) matrix matching the grid or its
    flattened (count, 2) real planes, in the training-normalized domain.
    """
    planes = _as_planes(target).astype(params.fourier.dtype)
    if planes.shape[0] != len(grid):
        raise ValueError("target does not match the grid")
    feats = fourier_features(params, grid.flat_coords())
    return inner_adapt_batch(params, feats, planes[None, :, :], steps, lr)[0]


def outer_step(params: ModelParams, adam: AdamState, feats: np.ndarray,
               targets: np.ndarray, codewords: np.ndarray, lr: float,
               grad_clip: float | None = None):
    """One Adam update of the base network with codewords held fixed.

    The gradient is the sum over the batch of per-sample loss gradients.
    Mutates `adam` in place, returns (new_params, batch_mean_loss); the input
    params are never modified.
    """
    _, tape = forward_batch(params, codewords, feats=feats)
    per_sample, _, grads = backward_batch(tape, params, targets, need_params=True)
    loss = float(per_sample.mean())
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"outer step: non-finite gradient in {name}")
    if grad_clip is not None:
        norm = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2))
                           for g in grads.values()))
        if norm > grad_clip:
            factor = grad_clip / norm
            grads = {k: g * factor for k, g in grads.items()}

    adam.step += 1
    bc1 = 1.0 - adam.beta1 ** adam.step
    bc2 = 1.0 - adam.beta2 ** adam.step
    new_blocks = {}
    for name, w in params.trainable_blocks().items():
        g = grads[name]
        m = adam.moment1[name]
        v = adam.moment2[name]
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        v *= adam.beta2
        v += (1.0 - adam.beta2) * (g * g)
        denom = np.sqrt(v / bc2) + adam.eps
        new_blocks[name] = w - lr * ((m / bc1) / denom)
    return params.with_blocks(new_blocks), loss


def _mean_nmse_db(params: ModelParams, feats: np.ndarray, planes: np.ndarray,
                  cfg: TrainConfig) -> float:
    """Mean of per-sample error ratios, in dB, after inner adaptation.

    Same mean-of-ratios definition as the evaluation module's nmse();
    duplicated here in four lines to keep training free of that dependency.
    """
    ratios = []
    for start in range(0, planes.shape[0], cfg.batch_size):
        t = planes[start:start + cfg.batch_size]
        cw = inner_adapt_batch(params, feats, t, cfg.inner_steps, cfg.inner_lr)
        out, _ = forward_batch(params, cw, feats=feats)
        diff = out.astype(np.float64) - t.astype(np.float64)
        num = np.sum(diff ** 2, axis=(1, 2))
        den = np.sum(t.astype(np.float64) ** 2, axis=(1, 2))
        if np.any(den == 0):
            raise ValueError("zero-power validation sample")
        ratios.append(num / den)
    return float(10.0 * np.log10(np.mean(np.concatenate(ratios))))


def train(train_ds: Dataset, val_ds: Dataset, arch: ArchConfig,
          cfg: TrainConfig):
    """Meta-train on the train split, select by validation NMSE.

    The two splits must be disjoint (the caller guarantees it; split_dataset
    produces such splits). Validation runs every epoch with the training
    inner-step count, plus once at epoch 0 on the untrained model. Returns
    (best ModelParams, TrainLog); the best checkpoint is the one with the
    lowest recorded validation NMSE, never a later one. Raises
    TrainingDiverged naming the epoch and step if anything goes non-finite.
    """
    if (train_ds.num_antennas, train_ds.num_subcarriers) != \
            (val_ds.num_antennas, val_ds.num_subcarriers):
        raise ValueError("train and validation grids differ")
    started = time.perf_counter()
    params = replace(init_params(cfg.seed, arch, cfg.mod_scale),
                     norm_scale=train_ds.norm_scale)
    log = TrainLog()
    if cfg.max_epochs == 0:
        return params, log

    grid = CoordinateGrid(train_ds.num_antennas, train_ds.num_subcarriers)
    feats = fourier_features(params, grid.flat_coords())
    count = len(train_ds)
    train_planes = train_ds.planes.reshape(count, len(grid), 2)
    val_planes = val_ds.planes.reshape(len(val_ds), len(grid), 2)

    adam = AdamState.for_params(params)
    val0 = _mean_nmse_db(params, feats, val_planes, cfg)
    log.epochs.append((0, val0))
    best_val, best_params, best_epoch = val0, params, 0
    since_best = 0
    step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, epoch])).permutation(count)
        for start in range(0, count, cfg.batch_size):
            batch = train_planes[order[start:start + cfg.batch_size]]
            try:
                cw = inner_adapt_batch(params, feats, batch,
                                       cfg.inner_steps, cfg.inner_lr)
                params, loss = outer_step(params, adam, feats, batch, cw,
                                          cfg.outer_lr, cfg.grad_clip)
            except TrainingDiverged as err:
                raise TrainingDiverged(
                    f"epoch {epoch}, outer step {step + 1}: {err}") from err
            step += 1
            log.steps.append((step, loss))
        val = _mean_nmse_db(params, feats, val_planes, cfg)
        log.epochs.append((epoch, val))
        if val < best_val:
            best_val, best_params, best_epoch = val, params, epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    log.best_epoch = best_epoch
    log.wall_seconds = time.perf_counter() - started
    return best_params, log
