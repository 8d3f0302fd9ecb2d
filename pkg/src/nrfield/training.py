"""Batched Adam training of field models with loss tracing.

The loop draws uniform-with-replacement batches from a seeded stream (derived
from the run seed so weight initialization and batch order are independent),
computes mean squared error over the *normalized* output components selected
by the component mask, backpropagates through the tape, and applies one Adam
step per iteration.  The per-iteration loss trace is recorded unsmoothed; a
trailing moving average is available separately.

A non-finite loss aborts the run immediately: the most recently logged
parameter snapshot is restored and (when a checkpoint path is configured)
written out, and the error reports the failing iteration.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .autodiff import Adam, Tape, Tensor
from .fielddata import FieldDataset
from .models import Model, checkpoint_save

__all__ = [
    "TrainConfig",
    "LossTrace",
    "TrainingDiverged",
    "sample_batch",
    "expected_visits",
    "train",
    "smooth_trace",
    "write_trace",
]


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the iteration and rescue checkpoint."""

    def __init__(self, iteration: int, checkpoint_path=None):
        self.iteration = iteration
        self.checkpoint_path = checkpoint_path
        msg = f"training diverged: non-finite loss at iteration {iteration}"
        if checkpoint_path is not None:
            msg += f" (last good checkpoint written to {checkpoint_path})"
        super().__init__(msg)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; defaults match the standard recipe."""

    iterations: int = 10_000
    batch_size: int = 1024
    lr: float = 1e-4
    seed: int = 0
    log_every: int = 100
    smooth_window: int = 1000
    component_mask: tuple | None = None  # bools (len C) or component indices
    checkpoint_path: str | None = None  # final / abort checkpoint target

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")
        if self.smooth_window < 1:
            raise ValueError(f"smooth_window must be >= 1, got {self.smooth_window}")


@dataclasses.dataclass
class LossTrace:
    """Per-iteration training MSE (normalized units, masked components)."""

    losses: np.ndarray

    def smoothed(self, window: int | None = None) -> np.ndarray:
        return smooth_trace(self.losses, 1000 if window is None else window)

    def write(self, path) -> None:
        write_trace(self, path)


def write_trace(trace: LossTrace, path) -> None:
    """Two-column text table: iteration index and unsmoothed MSE."""
    lines = ["# iteration mse"]
    for i, v in enumerate(trace.losses):
        lines.append(f"{i} {v:.17g}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def smooth_trace(values, window: int) -> np.ndarray:
    """Trailing moving mean; the first window-1 entries average their prefix."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    v = np.asarray(values, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(0, idx - window)
    return (csum[idx] - csum[lo]) / (idx - lo)


def sample_batch(dataset: FieldDataset, batch_size: int, rng: np.random.Generator):
    """Uniform-with-replacement batch of (coords, values) rows."""
    idx = rng.integers(0, dataset.n, batch_size)
    return dataset.coords[idx], dataset.values[idx]


def expected_visits(iterations: int, batch_size: int, n: int) -> float:
    """Mean number of times each dataset row is drawn during a run."""
    return iterations * batch_size / n


def _resolve_mask(mask, c: int) -> np.ndarray:
    """Component mask (bools or indices) -> sorted unique index array."""
    if mask is None:
        return np.arange(c)
    arr = np.asarray(mask)
    if arr.dtype == bool:
        if arr.size != c:
            raise ValueError(f"boolean component_mask needs {c} entries, got {arr.size}")
        idx = np.nonzero(arr)[0]
    else:
        idx = np.unique(arr.astype(np.int64))
        if idx.size and (idx.min() < 0 or idx.max() >= c):
            raise ValueError(f"component_mask indices out of range for {c} components")
    if idx.size == 0:
        raise ValueError("component_mask selects no components")
    return idx


def train(model: Model, dataset: FieldDataset, cfg: TrainConfig, progress=None):
    """Fit the model to the dataset; returns (model, LossTrace).

    The dataset holds raw (physical) coordinates and values; the model's
    stored normalization maps them into training space.  ``progress``, when
    given, is called as ``progress(iteration, loss)`` every ``log_every``
    iterations and on the final one.
    """
    if dataset.din != model.config.in_dim:
        raise ValueError(f"dataset has {dataset.din} input dims, model expects {model.config.in_dim}")
    if dataset.c != model.config.out_dim:
        raise ValueError(f"dataset has {dataset.c} components, model expects {model.config.out_dim}")
    mask_idx = _resolve_mask(cfg.component_mask, dataset.c)
    use_mask = mask_idx.size != dataset.c
    if use_mask:
        sel = np.zeros((dataset.c, mask_idx.size))
        sel[mask_idx, np.arange(mask_idx.size)] = 1.0
        sel_w = Tensor(sel, requires_grad=False, name="component_mask")
        sel_b = Tensor(np.zeros((1, mask_idx.size)), requires_grad=False, name="component_mask_bias")

    xn = model.normalize_in(dataset.coords)
    yn = (dataset.values - model.norm.out_shift) / model.norm.out_scale
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))
    params = model.parameters()
    adam = Adam(lr=cfg.lr)
    losses = np.empty(cfg.iterations)

    snapshot = [p.data.copy() for p in params]
    for it in range(cfg.iterations):
        idx = rng.integers(0, dataset.n, cfg.batch_size)
        tape = Tape()
        pred = model.forward_normalized(tape, xn[idx])
        target = Tensor(yn[idx], requires_grad=False)
        diff = tape.sub(pred, target)
        if use_mask:
            diff = tape.affine(diff, sel_w, sel_b)
        loss = tape.mean(tape.square(diff))
        loss_val = float(loss.data[0, 0])
        losses[it] = loss_val
        if not np.isfinite(loss_val):
            for p, saved in zip(params, snapshot):
                p.data[...] = saved
            if cfg.checkpoint_path is not None:
                checkpoint_save(model, cfg.checkpoint_path)
            raise TrainingDiverged(it, cfg.checkpoint_path)
        if it % cfg.log_every == 0 or it == cfg.iterations - 1:
            # snapshot the parameters that just produced a finite loss, before
            # this iteration's update can ruin them
            for p, saved in zip(params, snapshot):
                saved[...] = p.data
            if progress is not None:
                progress(it, loss_val)
        tape.backward(loss)
        adam.step(params, [tape.grad(p) for p in params])
    if cfg.checkpoint_path is not None:
        checkpoint_save(model, cfg.checkpoint_path)
    return model, LossTrace(losses=losses)
