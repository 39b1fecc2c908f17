"""Controlled damage to an embedding table, for representation-quality sweeps."""

from __future__ import annotations

import numpy as np

from ..encoding import EmbeddingTable
from ..errors import ConfigError

MODES = ("truncate_dims", "add_noise")


def degrade_representation(table: EmbeddingTable, mode: str, level, seed: int = 0) -> EmbeddingTable:
    """``truncate_dims`` keeps the first ``level`` coordinates; ``add_noise`` adds N(0, level^2)."""
    if mode == "truncate_dims":
        level = int(level)
        if not 1 <= level <= table.dim:
            raise ConfigError(f"cannot truncate {table.dim} dims to {level}")
        if level == table.dim:
            return table
        return EmbeddingTable(table.ids, table.matrix[:, :level])
    if mode == "add_noise":
        level = float(level)
        if level < 0:
            raise ConfigError("noise level must be >= 0")
        if level == 0:
            return table
        rng = np.random.default_rng(seed)
        return EmbeddingTable(table.ids, table.matrix + level * rng.standard_normal(table.matrix.shape))
    raise ConfigError(f"unknown degradation mode {mode!r}")
