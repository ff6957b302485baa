"""Per-time-step graph representation consumed by the policy network.

Users are nodes, the edge set is the full set of directed pairs including
self-edges, node features are the current dual variables, and the weight of
edge (i, j) is the log channel strength from transmitter i to receiver j,
normalized so the weight matrix has unit Frobenius norm:

    w(i, j) = log(P_max |h_ij|^2 / N) / Z,   Z = || log(P_max |H|^2 / N) ||_F

with the natural logarithm.  Weights may be negative for weak links; nothing
is clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RrmProblemConfig
from .errors import DegenerateNorm, DimensionMismatch, NegativeDual, ZeroChannel


@dataclass
class RrmGraph:
    m: int
    node_features: np.ndarray  # (m, 1)
    edge_weights: np.ndarray  # (m, m), entry (i, j) on directed edge i -> j
    z_norm: float


def _log_strengths(abs_h2: np.ndarray, cfg: RrmProblemConfig) -> np.ndarray:
    if np.any(abs_h2 == 0.0):
        raise ZeroChannel("channel magnitude is zero on at least one link")
    return np.log(cfg.p_max * abs_h2 / cfg.noise)


def edge_normalizer(h: np.ndarray, cfg: RrmProblemConfig) -> float:
    """Frobenius norm of the elementwise log channel strengths.

    Accumulated with fsum, so the value is independent of user ordering.
    """
    logs = _log_strengths(np.abs(h) ** 2, cfg)
    z = math.sqrt(math.fsum((logs**2).ravel().tolist()))
    if z == 0.0:
        raise DegenerateNorm("all log channel strengths are zero")
    return z


def edge_weights_from_gain2(
    abs_h2: np.ndarray, cfg: RrmProblemConfig
) -> tuple[np.ndarray, float]:
    """Normalized edge-weight matrix and its normalizer from |h|^2."""
    logs = _log_strengths(abs_h2, cfg)
    z = math.sqrt(math.fsum((logs**2).ravel().tolist()))
    if z == 0.0:
        raise DegenerateNorm("all log channel strengths are zero")
    return logs / z, z


def build_graph(h: np.ndarray, mu: np.ndarray, cfg: RrmProblemConfig) -> RrmGraph:
    """Graph for one time step: dual node features, normalized log-gain edges."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise NegativeDual("dual variables must be nonnegative")
    if h.shape != (cfg.m, cfg.m) or mu.shape != (cfg.m,):
        raise DimensionMismatch(
            f"channel {h.shape} / duals {mu.shape} inconsistent with m={cfg.m}"
        )
    weights, z = edge_weights_from_gain2(np.abs(h) ** 2, cfg)
    return RrmGraph(
        m=cfg.m, node_features=mu.reshape(-1, 1), edge_weights=weights, z_norm=z
    )


def episode_edge_tensors(
    abs_h2: np.ndarray, cfg: RrmProblemConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Edge weights and in-weight sums for a whole episode.

    Returns (E, s) with E of shape (T, m, m) and s[t, v] = sum_u E[t, u, v].
    """
    n_steps = abs_h2.shape[0]
    weights = np.empty_like(abs_h2)
    for t in range(n_steps):
        weights[t], _ = edge_weights_from_gain2(abs_h2[t], cfg)
    return weights, weights.sum(axis=-2)
