"""Pseudo-masks from per-pixel class-probability spread, range suppression,
and the restricted-activation training objective.

Background pixels spread their probability mass evenly over classes, so a
low channel standard deviation marks background and a high one marks
object. The restricted-activation loss pushes the sigmoid-squashed target
channel toward 0 on background pixels and toward 1 on object pixels; the
indicator masks are treated as constants in the gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np
from scipy.special import expit, logsumexp

from .errors import InvalidShapeError, NonFiniteError, UsageError
from .tensor import BinaryMask, DenseTensor, Map2D


@dataclass(frozen=True)
class ScoreMap:
    """H x W x C per-class score tensor (held in float64 for loss math)."""

    scores: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.scores, dtype=np.float64))
        if arr.ndim != 3:
            raise InvalidShapeError(f"score map must be (H, W, C), got shape {arr.shape}")
        if arr.shape[2] < 2:
            raise InvalidShapeError(f"score map needs C >= 2 channels, got {arr.shape[2]}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("score map contains non-finite values")
        object.__setattr__(self, "scores", arr)

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def channels(self) -> int:
        return self.scores.shape[2]

    @classmethod
    def from_tensor(cls, t: DenseTensor) -> "ScoreMap":
        if len(t.dims) != 3:
            raise InvalidShapeError(f"expected (H, W, C) tensor, got dims {t.dims}")
        return cls(t.array)


@dataclass(frozen=True)
class RamConfig:
    tau: float = 0.1
    sigma: float = 0.1
    alpha: float = 1.0

    def __post_init__(self):
        if self.tau <= 0.0:
            raise UsageError(f"tau must be > 0, got {self.tau}")
        if self.sigma <= 0.0:
            raise UsageError(f"sigma must be > 0, got {self.sigma}")
        if self.alpha < 0.0:
            raise UsageError(f"alpha must be >= 0, got {self.alpha}")

    def check_channels(self, channels: int) -> None:
        # largest possible channel std-dev of a probability vector is sqrt(C-1)/C
        bound = sqrt(channels - 1) / channels
        if self.tau + self.sigma >= bound:
            raise UsageError(
                f"tau + sigma = {self.tau + self.sigma} must stay below "
                f"sqrt(C-1)/C = {bound:.6f} for C = {channels}; no pixel could qualify as object"
            )


@dataclass(frozen=True)
class LossReport:
    l_ce: float
    l_ra: float
    total: float


def _check_target(s: ScoreMap, t: int) -> None:
    if not 0 <= t < s.channels:
        raise UsageError(f"class index {t} out of range for C = {s.channels}")


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _channel_std(probs: np.ndarray) -> np.ndarray:
    # population standard deviation over the fixed set of C channels
    return probs.std(axis=-1)


def channel_softmax(s: ScoreMap) -> ScoreMap:
    """Per-pixel softmax over channels (max-subtraction stabilized)."""
    return ScoreMap(_softmax(s.scores))


def channel_stddev(p: ScoreMap) -> Map2D:
    """Population standard deviation across channels at each pixel."""
    return Map2D(_channel_std(p.scores))


def _masks(s: ScoreMap, cfg: RamConfig) -> tuple[np.ndarray, np.ndarray]:
    std = _channel_std(_softmax(s.scores))
    return std < cfg.tau, std > cfg.tau + cfg.sigma


def pseudo_masks(s: ScoreMap, cfg: RamConfig) -> tuple[BinaryMask, BinaryMask]:
    """Coarse (background, object) masks; the band [tau, tau+sigma] joins neither."""
    cfg.check_channels(s.channels)
    bg, obj = _masks(s, cfg)
    return BinaryMask(bg.astype(np.uint8)), BinaryMask(obj.astype(np.uint8))


def sigmoid_suppress(s: ScoreMap, t: int) -> Map2D:
    """Sigmoid-squash the target channel into (0, 1)."""
    _check_target(s, t)
    return Map2D(expit(s.scores[:, :, t]))


def restricted_activation_loss(s: ScoreMap, t: int, cfg: RamConfig) -> float:
    """Mean of suppressed activation on background plus its complement on object."""
    _check_target(s, t)
    cfg.check_channels(s.channels)
    bg, obj = _masks(s, cfg)
    act = expit(s.scores[:, :, t])
    total = np.sum(bg * act + obj * (1.0 - act), dtype=np.float64)
    return float(total / (s.height * s.width))


def classification_loss(s: ScoreMap, t: int) -> float:
    """Cross entropy of the spatially-pooled class scores against class t."""
    _check_target(s, t)
    gap = s.scores.mean(axis=(0, 1), dtype=np.float64)
    return float(logsumexp(gap) - gap[t])


def total_loss(s: ScoreMap, t: int, cfg: RamConfig) -> LossReport:
    l_ce = classification_loss(s, t)
    l_ra = restricted_activation_loss(s, t, cfg)
    return LossReport(l_ce=l_ce, l_ra=l_ra, total=l_ce + cfg.alpha * l_ra)


def loss_gradient(s: ScoreMap, t: int, cfg: RamConfig) -> DenseTensor:
    """Analytic d(total loss)/d(scores), masks held constant.

    The pooled cross entropy contributes (softmax - onehot)/(HW) on every
    channel at every pixel; the restricted-activation term contributes
    (bg - obj) * sigmoid'(F_t)/(HW) on the target channel only.
    """
    _check_target(s, t)
    cfg.check_channels(s.channels)
    hw = s.height * s.width
    gap = s.scores.mean(axis=(0, 1), dtype=np.float64)
    p = _softmax(gap)
    p[t] -= 1.0
    grad = np.broadcast_to(p / hw, s.scores.shape).copy()
    if cfg.alpha != 0.0:
        bg, obj = _masks(s, cfg)
        act = expit(s.scores[:, :, t])
        grad[:, :, t] += cfg.alpha * (bg.astype(np.float64) - obj) * act * (1.0 - act) / hw
    return DenseTensor(grad.astype(np.float32))
