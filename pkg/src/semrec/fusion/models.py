"""Fusion operators combining a text vector ``t`` and a vision vector ``v``.

All kinds share one forward/backward pair working on row batches so the
contrastive trainer and the gradient checker use exactly the same code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..encoding import EmbeddingTable, ModalityBundle
from ..errors import ConfigError, DimMismatch

KINDS = ("concat", "average", "gating", "attention", "graph")
TRAINABLE = ("gating", "attention")


def _sigmoid(x):
    # split by sign so large |x| never overflows exp
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def average_projection(text_dim: int, vision_dim: int, seed: int) -> np.ndarray:
    """Fixed Gaussian map from vision space to text space, scaled by 1/sqrt(d_v)."""
    rng = np.random.default_rng([seed, 0x5EED])
    return rng.standard_normal((text_dim, vision_dim)) / np.sqrt(vision_dim)


def param_layout(kind: str, text_dim: int, vision_dim: int) -> dict[str, tuple[int, ...]]:
    d = text_dim
    if kind == "gating":
        return {"W_t": (d, text_dim), "W_v": (d, vision_dim), "W_g": (d, 2 * d), "b_g": (d,)}
    if kind == "attention":
        return {"W_t": (d, text_dim), "W_v": (d, vision_dim), "w": (d,)}
    return {}


@dataclass(frozen=True)
class FusionModel:
    kind: str
    text_dim: int
    vision_dim: int
    params: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown fusion kind {self.kind!r}")
        params = np.array(self.params, dtype=np.float64).ravel()
        expected = sum(int(np.prod(s)) for s in param_layout(self.kind, self.text_dim,
                                                              self.vision_dim).values())
        if params.size != expected:
            raise DimMismatch(f"{self.kind} expects {expected} params, got {params.size}")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @property
    def output_dim(self) -> int:
        if self.kind == "concat":
            return self.text_dim + self.vision_dim
        return self.text_dim

    @property
    def n_trainable(self) -> int:
        return self.params.size

    @cached_property
    def slices(self) -> dict[str, tuple[slice, tuple[int, ...]]]:
        out, start = {}, 0
        for name, shape in param_layout(self.kind, self.text_dim, self.vision_dim).items():
            size = int(np.prod(shape))
            out[name] = (slice(start, start + size), shape)
            start += size
        return out

    def unpack(self, flat=None) -> dict[str, np.ndarray]:
        flat = self.params if flat is None else flat
        return {n: flat[s].reshape(shape) for n, (s, shape) in self.slices.items()}

    def with_params(self, flat) -> "FusionModel":
        return FusionModel(self.kind, self.text_dim, self.vision_dim, flat, self.seed)

    @cached_property
    def projection(self) -> np.ndarray:
        return average_projection(self.text_dim, self.vision_dim, self.seed)


def init_model(kind: str, text_dim: int, vision_dim: int, seed: int = 0) -> FusionModel:
    """Seeded initial parameters; the text projection starts at the identity."""
    layout = param_layout(kind, text_dim, vision_dim)
    rng = np.random.default_rng(seed)
    parts = []
    for name, shape in layout.items():
        if name == "W_t":
            p = np.eye(*shape)
        elif name == "W_v":
            p = rng.standard_normal(shape) / np.sqrt(vision_dim)
        elif name == "W_g":
            p = rng.standard_normal(shape) * (0.01 / np.sqrt(shape[1]))
        elif name == "w":
            p = rng.standard_normal(shape) / np.sqrt(shape[0])
        else:
            p = np.zeros(shape)
        parts.append(p.ravel())
    flat = np.concatenate(parts) if parts else np.zeros(0)
    return FusionModel(kind, text_dim, vision_dim, flat, seed)


# -- batched forward / backward ---------------------------------------------

def forward_batch(model: FusionModel, T, V, params=None):
    """Fuse rows of ``T`` (n x d_t) with rows of ``V`` (n x d_v).

    Returns ``(F, cache)``; ``cache`` feeds ``backward_batch``.
    """
    T = np.asarray(T, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if T.shape[1] != model.text_dim or V.shape[1] != model.vision_dim:
        raise DimMismatch(
            f"{model.kind} expects dims ({model.text_dim}, {model.vision_dim}), "
            f"got ({T.shape[1]}, {V.shape[1]})"
        )
    kind = model.kind
    if kind == "concat":
        return np.concatenate([T, V], axis=1), None
    if kind == "average":
        return 0.5 * (T + V @ model.projection.T), None
    if kind == "graph":
        raise ConfigError("graph fusion is built by smore_lite(), not a per-item forward")
    p = model.unpack(params)
    Tp = T @ p["W_t"].T
    Vp = V @ p["W_v"].T
    if kind == "gating":
        H = np.concatenate([Tp, Vp], axis=1)
        G = _sigmoid(H @ p["W_g"].T + p["b_g"])
        F = G * Tp + (1.0 - G) * Vp
        return F, (T, V, Tp, Vp, H, G, p)
    # attention
    At, Av = np.tanh(Tp), np.tanh(Vp)
    logits = np.stack([At @ p["w"], Av @ p["w"]], axis=1)
    logits -= logits.max(axis=1, keepdims=True)
    alpha = np.exp(logits)
    alpha /= alpha.sum(axis=1, keepdims=True)
    F = alpha[:, :1] * Tp + alpha[:, 1:] * Vp
    return F, (T, V, Tp, Vp, At, Av, alpha, p)


def backward_batch(model: FusionModel, cache, dF) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the flat trainable parameters."""
    grad = np.zeros(model.n_trainable)
    if model.kind not in TRAINABLE:
        return grad
    sl = model.slices
    if model.kind == "gating":
        T, V, Tp, Vp, H, G, p = cache
        d = Tp.shape[1]
        dZ = dF * (Tp - Vp) * G * (1.0 - G)
        dH = dZ @ p["W_g"]
        dTp = dF * G + dH[:, :d]
        dVp = dF * (1.0 - G) + dH[:, d:]
        grad[sl["W_g"][0]] = (dZ.T @ H).ravel()
        grad[sl["b_g"][0]] = dZ.sum(axis=0)
    else:
        T, V, Tp, Vp, At, Av, alpha, p = cache
        a_t, a_v = alpha[:, 0], alpha[:, 1]
        d_at = (dF * Tp).sum(axis=1)
        d_av = (dF * Vp).sum(axis=1)
        mean = a_t * d_at + a_v * d_av
        dl_t = a_t * (d_at - mean)
        dl_v = a_v * (d_av - mean)
        w = p["w"]
        dTp = dF * a_t[:, None] + dl_t[:, None] * (1.0 - At ** 2) * w
        dVp = dF * a_v[:, None] + dl_v[:, None] * (1.0 - Av ** 2) * w
        grad[sl["w"][0]] = dl_t @ At + dl_v @ Av
    grad[sl["W_t"][0]] = (dTp.T @ T).ravel()
    grad[sl["W_v"][0]] = (dVp.T @ V).ravel()
    return grad


def fuse_forward(model: FusionModel, t=None, v=None) -> np.ndarray:
    """Fuse one item. A missing modality (``None``) falls back to the other's projection."""
    if t is None and v is None:
        raise ConfigError("at least one modality is required")
    if t is not None and v is not None:
        F, _ = forward_batch(model, np.atleast_2d(t), np.atleast_2d(v))
        return F[0]
    return _single_modality(model, t, v)


def _single_modality(model: FusionModel, t, v) -> np.ndarray:
    if model.kind == "concat":
        t = np.zeros(model.text_dim) if t is None else np.asarray(t, dtype=np.float64)
        v = np.zeros(model.vision_dim) if v is None else np.asarray(v, dtype=np.float64)
        return np.concatenate([t, v])
    if t is not None:
        t = np.asarray(t, dtype=np.float64)
        if t.shape != (model.text_dim,):
            raise DimMismatch(f"text vector has dim {t.shape}, expected {model.text_dim}")
        if model.kind == "average":
            return t.copy()
        return model.unpack()["W_t"] @ t
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.vision_dim,):
        raise DimMismatch(f"vision vector has dim {v.shape}, expected {model.vision_dim}")
    if model.kind == "average":
        return model.projection @ v
    return model.unpack()["W_v"] @ v


@dataclass
class FusedTable:
    table: EmbeddingTable
    missing_modality: dict[str, str]  # item id -> "text" | "vision"


def fuse_table(model: FusionModel, bundle: ModalityBundle, include_partial: bool = False,
               normalized_inputs: bool = True) -> FusedTable:
    """Apply ``model`` to every item of ``bundle``.

    By default only items present in both tables are fused. With
    ``include_partial`` the union is used and single-modality items are
    flagged in ``missing_modality``.
    """
    tt, vt = bundle.text_table, bundle.vision_table
    tm = tt.norm_matrix if normalized_inputs else tt.matrix
    vm = vt.norm_matrix if normalized_inputs else vt.matrix
    shared = bundle.shared_ids
    rows = {}
    if shared:
        F, _ = forward_batch(model, tm[tt.rows_of(shared)], vm[vt.rows_of(shared)])
        rows.update(zip(shared, F))
    missing = {}
    if include_partial:
        for item in bundle.all_ids:
            if item in rows:
                continue
            if item in tt.index:
                rows[item] = _single_modality(model, tm[tt.index[item]], None)
                missing[item] = "vision"
            else:
                rows[item] = _single_modality(model, None, vm[vt.index[item]])
                missing[item] = "text"
        ids = bundle.all_ids
    else:
        ids = shared
    matrix = np.array([rows[i] for i in ids]) if ids else np.zeros((0, model.output_dim))
    return FusedTable(EmbeddingTable(ids, matrix), missing)
