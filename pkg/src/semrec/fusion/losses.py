"""InfoNCE and BPR objectives with hand-derived gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoding import NORM_EPS
from .models import FusionModel, backward_batch, forward_batch


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _rownorm(X):
    n = np.linalg.norm(X, axis=1)
    safe = np.where(n > NORM_EPS, n, 1.0)
    Y = np.where((n > NORM_EPS)[:, None], X / safe[:, None], 0.0)
    return Y, safe, n > NORM_EPS


def _rownorm_backward(Y, n, ok, dY):
    dX = (dY - Y * (Y * dY).sum(axis=1, keepdims=True)) / n[:, None]
    return np.where(ok[:, None], dX, 0.0)


def infonce_from_logits(S):
    """Mean softmax cross-entropy of each row of ``S`` against its diagonal entry.

    Returns ``(loss, dS)``.
    """
    S = np.asarray(S, dtype=np.float64)
    B = S.shape[0]
    m = S.max(axis=1, keepdims=True)
    E = np.exp(S - m)
    Z = E.sum(axis=1, keepdims=True)
    loss = float(np.mean(np.log(Z[:, 0]) + m[:, 0] - np.diag(S)))
    dS = (E / Z - np.eye(B)) / B
    return loss, dS


@dataclass
class InfoNCEBatch:
    """Anchor/positive pairs given as raw modality rows; other rows act as negatives."""

    model: FusionModel
    T_a: np.ndarray
    V_a: np.ndarray
    T_p: np.ndarray
    V_p: np.ndarray
    temperature: float = 0.07


def infonce_loss(batch: InfoNCEBatch, params=None):
    """Loss and flat parameter gradient for one contrastive batch."""
    model = batch.model
    params = model.params if params is None else params
    tau = batch.temperature
    Fa, ca = forward_batch(model, batch.T_a, batch.V_a, params)
    Fp, cp = forward_batch(model, batch.T_p, batch.V_p, params)
    Ya, na, oka = _rownorm(Fa)
    Yp, np_, okp = _rownorm(Fp)
    loss, dS = infonce_from_logits(Ya @ Yp.T / tau)
    dYa = dS @ Yp / tau
    dYp = dS.T @ Ya / tau
    grad = backward_batch(model, ca, _rownorm_backward(Ya, na, oka, dYa))
    grad += backward_batch(model, cp, _rownorm_backward(Yp, np_, okp, dYp))
    return loss, grad


@dataclass
class BPRBatch:
    """(user, positive, negative) triples over item rows ``base + deltas``.

    A user vector is the mean of its history rows, stored CSR-style in
    ``hist_indptr``/``hist_indices`` with one segment per triple.
    """

    base: np.ndarray
    hist_indptr: np.ndarray
    hist_indices: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    l2: float = 0.0

    @property
    def size(self) -> int:
        return len(self.pos)


def bpr_loss(batch: BPRBatch, params):
    """Mean of ``-log sigmoid(s(u,i+) - s(u,i-))`` plus optional L2 on touched deltas.

    ``params`` is the flattened delta matrix (same shape as ``batch.base``).
    Returns ``(loss, grad)`` with ``grad`` flattened like ``params``.
    """
    base = batch.base
    D = np.asarray(params, dtype=np.float64).reshape(base.shape)
    E = base + D
    B = batch.size
    lengths = np.diff(batch.hist_indptr)
    owner = np.repeat(np.arange(B), lengths)
    U = np.zeros((B, base.shape[1]))
    np.add.at(U, owner, E[batch.hist_indices])
    U /= lengths[:, None]
    diff = E[batch.pos] - E[batch.neg]
    x = (U * diff).sum(axis=1)
    reg = 0.5 * batch.l2 * ((D[batch.pos] ** 2).sum(axis=1) + (D[batch.neg] ** 2).sum(axis=1))
    loss = float(np.mean(np.logaddexp(0.0, -x) + reg))

    c = (_sigmoid(x) - 1.0) / B
    G = np.zeros_like(E)
    np.add.at(G, batch.pos, c[:, None] * U + (batch.l2 / B) * D[batch.pos])
    np.add.at(G, batch.neg, -c[:, None] * U + (batch.l2 / B) * D[batch.neg])
    dU = c[:, None] * diff / lengths[:, None]
    np.add.at(G, batch.hist_indices, dU[owner])
    return loss, G.ravel()


def bpr_triple_loss(score_pos: float, score_neg: float) -> float:
    return float(np.logaddexp(0.0, -(score_pos - score_neg)))
