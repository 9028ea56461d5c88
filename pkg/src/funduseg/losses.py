"""Class-weighted focal loss and its analytic gradient.

Per element, with target y in {0,1}, prediction p clamped away from {0,1},
channel weight a and focusing exponent g:

    loss = -a * [ y * (1-p)^g * log(p) + (1-y) * p^g * log(1-p) ]

The weight a is chosen per channel role; cup edge carries the most weight
and background the least, since the cup is the hardest structure and the
background dominates the pixel count. The reported value is the mean over
all pixels and channels, which keeps the loss and its gradient scale
independent of image resolution. With g=0 and uniform a=0.5 the loss is
exactly half the mean binary cross-entropy.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingAlpha, ShapeMismatch
from .raster import ChannelRole, ChannelStack

PRED_CLAMP = 1e-7

DEFAULT_ALPHA = {
    ChannelRole.CUP_EDGE: 0.9,
    ChannelRole.DISC_EDGE: 0.8,
    ChannelRole.CUP_REGION: 0.7,
    ChannelRole.DISC_REGION: 0.5,
    ChannelRole.BACKGROUND: 0.1,
}


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0
    alpha_per_role: dict = field(default_factory=lambda: dict(DEFAULT_ALPHA))

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")

    def alphas_for(self, roles) -> np.ndarray:
        """Per-channel weights in role order; MissingAlpha if a role lacks one."""
        out = []
        for role in roles:
            role = ChannelRole(role)
            if role not in self.alpha_per_role:
                raise MissingAlpha(role.value)
            out.append(float(self.alpha_per_role[role]))
        return np.array(out)


def _check_pair(pred, target):
    if isinstance(pred, ChannelStack) and isinstance(target, ChannelStack):
        if pred.roles != target.roles:
            raise ShapeMismatch(f"role lists differ: {pred.roles} vs {target.roles}")
        if pred.data.shape != target.data.shape:
            raise ShapeMismatch(f"shapes differ: {pred.data.shape} vs {target.data.shape}")
        return pred.data, target.data, pred.roles
    raise TypeError("pred and target must both be ChannelStack")


def focal_loss(pred: ChannelStack, target: ChannelStack, cfg: FocalConfig) -> float:
    """Mean focal loss of a prediction stack against a one-hot target stack."""
    p, y, roles = _check_pair(pred, target)
    alphas = cfg.alphas_for(roles)
    return float(focal_loss_elements(p, y, alphas, cfg.gamma).mean())


def focal_loss_grad(pred: ChannelStack, target: ChannelStack, cfg: FocalConfig) -> ChannelStack:
    """Elementwise d(mean loss)/d(prediction), same shape and roles as pred."""
    p, y, roles = _check_pair(pred, target)
    alphas = cfg.alphas_for(roles)
    g = focal_grad_elements(p, y, alphas, cfg.gamma) / p.size
    # gradients are signed; carry them as a raw array wrapped at the call site
    return ChannelStackGrad(roles, g)


@dataclass(frozen=True)
class ChannelStackGrad:
    """Gradient planes per channel role (values are signed, unlike ChannelStack)."""

    roles: tuple
    data: np.ndarray


def focal_loss_elements(p: np.ndarray, y: np.ndarray, alphas: np.ndarray, gamma: float) -> np.ndarray:
    """Per-element focal loss; channel axis is the last one."""
    p = np.clip(p, PRED_CLAMP, 1.0 - PRED_CLAMP)
    pos = y * (1.0 - p) ** gamma * np.log(p)
    neg = (1.0 - y) * p ** gamma * np.log(1.0 - p)
    return -alphas * (pos + neg)


def focal_grad_elements(p: np.ndarray, y: np.ndarray, alphas: np.ndarray, gamma: float) -> np.ndarray:
    """d/dp of the per-element focal loss (no mean normalization applied)."""
    p = np.clip(p, PRED_CLAMP, 1.0 - PRED_CLAMP)
    q = 1.0 - p
    if gamma == 0.0:
        dpos = 1.0 / p
        dneg = -1.0 / q
    else:
        dpos = q ** gamma / p - gamma * q ** (gamma - 1.0) * np.log(p)
        dneg = gamma * p ** (gamma - 1.0) * np.log(q) - p ** gamma / q
    return -alphas * (y * dpos + (1.0 - y) * dneg)


def focal_loss_tensor(probs: np.ndarray, target: np.ndarray, alphas: np.ndarray, gamma: float):
    """Loss and gradient for NHWC training tensors. Returns (loss, dL/dprobs).

    alphas is per-channel (last axis); the mean runs over every element.
    """
    if probs.shape != target.shape:
        raise ShapeMismatch(f"shapes differ: {probs.shape} vs {target.shape}")
    elems = focal_loss_elements(probs, target, alphas, gamma)
    loss = float(elems.mean())
    grad = (focal_grad_elements(probs, target, alphas, gamma) / probs.size).astype(probs.dtype)
    return loss, grad
