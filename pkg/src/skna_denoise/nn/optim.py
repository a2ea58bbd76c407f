"""Loss, optimiser and the class-balanced batch sampler."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InsufficientClassError, NonFiniteError, ShapeError


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    d = pred.astype(np.float64) - target
    return float(np.mean(d * d))


def mse_grad(pred, target) -> np.ndarray:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    return (2.0 / pred.size) * (pred - target)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


def adam_step(state: AdamState, params: list, grads: list) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in count")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)


@dataclass
class BalancedBatchSampler:
    labels: np.ndarray
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        self.classes = np.unique(self.labels)
        if self.classes.size == 0:
            raise InsufficientClassError("no samples")
        if self.batch_size % self.classes.size:
            raise ValueError(f"batch size {self.batch_size} not divisible by {self.classes.size} classes")
        self.quota = self.batch_size // self.classes.size
        for c in self.classes:
            n = int((self.labels == c).sum())
            if n < self.quota:
                raise InsufficientClassError(f"class {c} has {n} samples, needs {self.quota}")
        self.rng = np.random.default_rng(self.seed)

    def __len__(self):
        return min(int((self.labels == c).sum()) for c in self.classes) // self.quota

    def epoch(self) -> list:
        """One epoch of index batches; each call reshuffles."""
        perms = [self.rng.permutation(np.flatnonzero(self.labels == c)) for c in self.classes]
        n = len(self)
        return [np.concatenate([p[b * self.quota : (b + 1) * self.quota] for p in perms]) for b in range(n)]


def balanced_batches(sampler: BalancedBatchSampler) -> list:
    return sampler.epoch()
