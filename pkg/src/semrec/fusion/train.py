"""Trainers: InfoNCE for learned fusion, BPR for the graph baseline."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..corpus import InteractionLog, user_history
from ..encoding import EmbeddingTable, ModalityBundle
from ..errors import ConfigError, DataError, NonFiniteLoss
from .graph import DEFAULT_K, DEFAULT_LAYERS, build_knn_graph, propagate
from .losses import BPRBatch, InfoNCEBatch, bpr_loss, infonce_loss
from .models import TRAINABLE, FusionModel, fuse_table, init_model
from .optim import Adam

logger = logging.getLogger(__name__)

CONTRASTIVE_EPOCHS = 15
BPR_EPOCHS = 20


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = CONTRASTIVE_EPOCHS
    learning_rate: float = 1e-3
    batch_size: int = 256
    temperature: float = 0.07
    negatives_per_positive: int = 1
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.batch_size < 1 or self.negatives_per_positive < 1:
            raise ConfigError("batch_size and negatives_per_positive must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")

    @classmethod
    def for_bpr(cls, **kw) -> "TrainConfig":
        kw.setdefault("epochs", BPR_EPOCHS)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ContrastiveResult:
    model: FusionModel
    losses: list[float] = field(default_factory=list)


@dataclass
class BPRResult:
    table: EmbeddingTable
    losses: list[float] = field(default_factory=list)


def _check_finite(loss, grad, epoch, batch_no, params):
    # NaN fused rows normalize to zero, so a finite loss alone does not prove health
    if not (np.isfinite(loss) and np.isfinite(grad).all() and np.isfinite(params).all()):
        raise NonFiniteLoss(
            f"non-finite loss at epoch {epoch}, batch {batch_no}",
            {"epoch": epoch, "batch": batch_no, "loss": float(loss),
             "param_norm": float(np.linalg.norm(params)),
             "nonfinite_params": int((~np.isfinite(params)).sum())},
        )


def contrastive_pairs(log: InteractionLog, items: set[str], strict: bool = True) -> list[tuple[str, str]]:
    """Consecutive co-interacted train items per user, oldest first.

    Users are visited in id order, so the pair list is deterministic.
    """
    pairs = []
    missing = 0
    for user in log.users_in("train"):
        hist = user_history(log, user, L_max=len(log.user_interactions(user, "train"))).items
        kept = [i for i in hist if i in items]
        missing += len(hist) - len(kept)
        pairs.extend(zip(kept[:-1], kept[1:]))
    if missing and strict:
        raise DataError(f"{missing} train interactions reference items absent from a modality table")
    return pairs


def train_contrastive(model: FusionModel, bundle: ModalityBundle, log: InteractionLog,
                      cfg: TrainConfig | None = None, strict: bool = True) -> ContrastiveResult:
    """Fit gating/attention parameters with in-batch InfoNCE over co-interaction pairs."""
    cfg = TrainConfig() if cfg is None else cfg
    if model.kind not in TRAINABLE:
        raise ConfigError(f"{model.kind} fusion has no trainable parameters")
    tt, vt = bundle.text_table, bundle.vision_table
    pairs = contrastive_pairs(log, set(bundle.shared_ids), strict=strict)
    if len(pairs) < 2:
        raise DataError("need at least two co-interaction pairs to train")
    a_ids, p_ids = zip(*pairs)
    T_a, V_a = tt.norm_matrix[tt.rows_of(a_ids)], vt.norm_matrix[vt.rows_of(a_ids)]
    T_p, V_p = tt.norm_matrix[tt.rows_of(p_ids)], vt.norm_matrix[vt.rows_of(p_ids)]

    rng = np.random.default_rng(cfg.seed)
    params = model.params.copy()
    opt = Adam(params.size, lr=cfg.learning_rate)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        total, count = 0.0, 0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            if idx.size < 2:
                continue
            batch = InfoNCEBatch(model, T_a[idx], V_a[idx], T_p[idx], V_p[idx], cfg.temperature)
            loss, grad = infonce_loss(batch, params)
            _check_finite(loss, grad, epoch, b, params)
            params = opt.step(params, grad)
            total += loss * idx.size
            count += idx.size
        losses.append(total / count)
        logger.debug("contrastive epoch %d loss %.6f", epoch, losses[-1])
    return ContrastiveResult(model.with_params(params), losses)


def _user_histories(log: InteractionLog, table: EmbeddingTable, L_max: int):
    out = {}
    for user in log.users_in("train"):
        hist = [table.index[i] for i in user_history(log, user, L_max).items if i in table.index]
        if hist:
            out[user] = np.array(hist, dtype=np.int64)
    return out


def train_bpr(item_embeddings: EmbeddingTable, log: InteractionLog, cfg: TrainConfig | None = None,
              L_max: int = 10) -> BPRResult:
    """Learn additive item deltas on top of ``item_embeddings`` with pairwise BPR.

    A user is the mean of their last ``L_max`` train rows; each train
    interaction yields ``negatives_per_positive`` triples with negatives drawn
    uniformly from items the user never trained on.
    """
    cfg = TrainConfig.for_bpr() if cfg is None else cfg
    table = item_embeddings
    n = len(table)
    base = np.asarray(table.matrix, dtype=np.float64)
    hists = _user_histories(log, table, L_max)
    users, positives = [], []
    for u_no, user in enumerate(sorted(hists)):
        for rec in log.user_interactions(user, "train"):
            row = table.index.get(rec.item_id)
            if row is not None:
                users.append(u_no)
                positives.append(row)
    if not positives:
        raise DataError("no train interactions fall inside the embedding table")
    user_list = sorted(hists)
    seen = [set(table.index[i] for i in log.items_of(u) if i in table.index) for u in user_list]
    if any(len(s) >= n for s in seen):
        raise DataError("a user has interacted with every item; no negatives to sample")
    users = np.array(users, dtype=np.int64)
    positives = np.array(positives, dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    deltas = np.zeros(base.size)
    opt = Adam(deltas.size, lr=cfg.learning_rate)
    losses = []
    reps = cfg.negatives_per_positive
    for epoch in range(cfg.epochs):
        tri_u = np.repeat(users, reps)
        tri_p = np.repeat(positives, reps)
        tri_n = rng.integers(0, n, size=tri_u.size)
        for t in range(tri_u.size):
            s = seen[tri_u[t]]
            while tri_n[t] in s:
                tri_n[t] = rng.integers(0, n)
        order = rng.permutation(tri_u.size)
        total = 0.0
        for b, start in enumerate(range(0, order.size, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            segs = [hists[user_list[u]] for u in tri_u[idx]]
            indptr = np.concatenate([[0], np.cumsum([len(s) for s in segs])])
            batch = BPRBatch(base, indptr, np.concatenate(segs), tri_p[idx], tri_n[idx], cfg.l2)
            loss, grad = bpr_loss(batch, deltas)
            _check_finite(loss, grad, epoch, b, deltas)
            deltas = opt.step(deltas, grad)
            total += loss * idx.size
        losses.append(total / order.size)
        logger.debug("bpr epoch %d loss %.6f", epoch, losses[-1])
    return BPRResult(EmbeddingTable(table.ids, base + deltas.reshape(base.shape)), losses)


def smore_lite(bundle: ModalityBundle, log: InteractionLog, cfg: TrainConfig | None = None,
               k: int = DEFAULT_K, layers: int = DEFAULT_LAYERS, L_max: int = 10) -> BPRResult:
    """Graph baseline: concat features, cosine kNN graph, linear propagation, BPR deltas.

    This is a simplified stand-in for spectral multimodal fusion, not a
    reproduction of it.
    """
    features = fuse_table(init_model("concat", bundle.text_table.dim, bundle.vision_table.dim),
                          bundle).table
    graph = build_knn_graph(features, k)
    return train_bpr(propagate(features, graph, layers), log, cfg, L_max=L_max)
