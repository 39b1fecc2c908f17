"""Central finite-difference verification of the trainer gradients."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .losses import BPRBatch, InfoNCEBatch, bpr_loss, infonce_loss


def _loss_fn(loss_kind: str, batch):
    if loss_kind == "infonce":
        if not isinstance(batch, InfoNCEBatch):
            raise ConfigError("infonce check needs an InfoNCEBatch")
        return lambda p: infonce_loss(batch, p)
    if loss_kind == "bpr":
        if not isinstance(batch, BPRBatch):
            raise ConfigError("bpr check needs a BPRBatch")
        return lambda p: bpr_loss(batch, p)
    raise ConfigError(f"unknown loss kind {loss_kind!r}")


def gradient_check(loss_kind: str, params, batch, epsilon: float = 1e-5) -> float:
    """Max over parameters of |analytic - central difference| / max(1, |central difference|)."""
    if not 1e-7 <= epsilon <= 1e-3:
        raise ConfigError("epsilon must lie in [1e-7, 1e-3]")
    fn = _loss_fn(loss_kind, batch)
    params = np.array(params, dtype=np.float64)
    _, analytic = fn(params)
    worst = 0.0
    for k in range(params.size):
        orig = params[k]
        params[k] = orig + epsilon
        up, _ = fn(params)
        params[k] = orig - epsilon
        down, _ = fn(params)
        params[k] = orig
        fd = (up - down) / (2.0 * epsilon)
        worst = max(worst, abs(analytic[k] - fd) / max(1.0, abs(fd)))
    return worst
