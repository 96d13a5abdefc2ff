"""Room-grouped attention masking and a dense reference attention kernel.

The mask is defined over nodes and expanded blockwise to tokens: attention
between two nodes' tokens is allowed when they share a room, or when their
rooms are doorway-connected and at least one node is a boundary node.
Masked logits are excluded from the softmax (exp(-inf) = 0), so a masked
key/value can never influence an output, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panocam import CPRoPETable


@dataclass
class GroupMask:
    tokens_per_node: int
    node_rooms: list
    allowed: np.ndarray  # (nodes, nodes) bool, symmetric, True diagonal

    @property
    def n_tokens(self) -> int:
        return self.tokens_per_node * len(self.node_rooms)

    @property
    def token_allowed(self) -> np.ndarray:
        block = np.ones((self.tokens_per_node, self.tokens_per_node), dtype=bool)
        return np.kron(self.allowed, block)

    @property
    def logit_bias(self) -> np.ndarray:
        """Additive token-pair bias: 0 where allowed, -inf where masked."""
        bias = np.zeros((self.n_tokens, self.n_tokens))
        bias[~self.token_allowed] = -np.inf
        return bias


def build_group_mask(context_nodes: list, doorway_pairs, tokens_per_node: int) -> GroupMask:
    """context_nodes: (node_id, room_id, boundary_flag) triples in token order."""
    if not context_nodes:
        raise ValueError("empty context")
    pairs = {frozenset(p) for p in doorway_pairs}
    rooms = [r for _, r, _ in context_nodes]
    bnd = [b for _, _, b in context_nodes]
    n = len(context_nodes)
    allowed = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if rooms[i] == rooms[j]:
                allowed[i, j] = True
            elif frozenset((rooms[i], rooms[j])) in pairs and (bnd[i] or bnd[j]):
                allowed[i, j] = True
    return GroupMask(tokens_per_node, rooms, allowed)


def attention_weights(q: np.ndarray, k: np.ndarray, mask: GroupMask,
                      scale: float | None = None) -> np.ndarray:
    """Row-stochastic masked softmax weights; masked entries are exactly 0."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"q/k feature dims differ: {q.shape[1]} vs {k.shape[1]}")
    if q.shape[0] != mask.n_tokens or k.shape[0] != mask.n_tokens:
        raise ValueError("token count does not match the mask")
    if scale is None:
        scale = 1.0 / np.sqrt(q.shape[1])
    scores = (q @ k.T) * scale
    scores = np.where(mask.token_allowed, scores, -np.inf)
    scores -= scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    return w / w.sum(axis=1, keepdims=True)


def masked_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: GroupMask,
                     scale: float | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != np.asarray(k).shape[0]:
        raise ValueError("k/v token counts differ")
    return attention_weights(q, k, mask, scale) @ v


def apply_cprope(features: np.ndarray, table: CPRoPETable, token_xy: list) -> np.ndarray:
    """Rotate feature pairs by the tabulated phases for each token's (x, y).

    Layout: the first 2 * pairs dims are horizontal lanes, the next
    2 * v_pairs vertical lanes, any remainder passes through unrotated.
    """
    f = np.array(features, dtype=np.float64)
    n, dim = f.shape
    mx, my = table.pairs, table.v_pairs
    need = 2 * (mx + my)
    if dim < need:
        raise ValueError(f"feature dim {dim} < {need} required by the tables")
    if len(token_xy) != n:
        raise ValueError("one (x, y) per token required")
    xs = np.array([int(x) % table.width_tokens for x, _ in token_xy])
    ys = np.array([int(y) for _, y in token_xy])
    if np.any(ys < 0) or np.any(ys >= table.height_tokens):
        raise ValueError("token y outside the vertical table")

    def rotate(lo, cos_nm, sin_nm):
        m = cos_nm.shape[1]
        a = f[:, lo:lo + 2 * m:2].copy()
        b = f[:, lo + 1:lo + 2 * m:2].copy()
        f[:, lo:lo + 2 * m:2] = a * cos_nm - b * sin_nm
        f[:, lo + 1:lo + 2 * m:2] = a * sin_nm + b * cos_nm

    rotate(0, table.h_cos[:, xs].T, table.h_sin[:, xs].T)
    rotate(2 * mx, table.v_cos[:, ys].T, table.v_sin[:, ys].T)
    return f


def default_lane_split(dim: int) -> tuple:
    """Default frequency-pair allocation: dim/8 pairs per branch."""
    pairs = max(1, dim // 8)
    return pairs, pairs
