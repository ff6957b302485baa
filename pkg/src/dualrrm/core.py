"""Problem arithmetic: per-user rates, utility, constraints, Lagrangian, metrics.

Everything works in linear power units (milliwatts, matching the dBm config
boundary) and double precision.  Interference denominators are accumulated
with ``math.fsum`` so rates are exactly reproducible under any relabeling of
the users.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, NegativeDual

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class RrmProblemConfig:
    m: int
    p_max_dbm: float = 10.0
    noise_dbm: float = -104.0
    f_min_bps_hz: float = 0.6

    @property
    def p_max(self) -> float:
        """Maximum transmit power, linear mW."""
        return 10.0 ** (self.p_max_dbm / 10.0)

    @property
    def noise(self) -> float:
        """Noise power, linear mW."""
        return 10.0 ** (self.noise_dbm / 10.0)


@dataclass(frozen=True)
class MetricsSummary:
    mean_rate: float
    min_rate_trimmed: float
    p5_rate: float
    feasibility_fraction: float
    n_users: int


def _check_shapes(abs_h2: np.ndarray, p: np.ndarray, m: int) -> None:
    if abs_h2.shape[-2:] != (m, m) or p.shape[-1] != m:
        raise DimensionMismatch(
            f"channel {abs_h2.shape} / power {p.shape} inconsistent with m={m}"
        )


def interference_denominators(abs_h2: np.ndarray, p: np.ndarray, noise: float) -> np.ndarray:
    """Noise-plus-interference at each receiver, correctly rounded.

    D_i = noise + sum_{j != i} p_j * abs_h2[j, i].  The sum is evaluated with
    fsum, so the result does not depend on user ordering.
    """
    m = p.shape[0]
    received = p[:, None] * abs_h2  # (j, i): power of tx j at rx i
    out = np.empty(m)
    for i in range(m):
        terms = received[:, i].tolist()
        del terms[i]
        terms.append(noise)
        out[i] = math.fsum(terms)
    return out


def rates_from_gain2(abs_h2: np.ndarray, p: np.ndarray, cfg: RrmProblemConfig) -> np.ndarray:
    """Per-user rates from squared channel magnitudes (see ``rates``)."""
    _check_shapes(abs_h2, p, cfg.m)
    signal = p * np.diagonal(abs_h2)
    denom = interference_denominators(abs_h2, p, cfg.noise)
    return np.log2(1.0 + signal / denom)


def rates(h: np.ndarray, p: np.ndarray, cfg: RrmProblemConfig) -> np.ndarray:
    """Rates when every receiver decodes treating interference as noise.

    f_i = log2(1 + p_i |h_ii|^2 / (N + sum_{j != i} p_j |h_ji|^2))
    """
    return rates_from_gain2(np.abs(h) ** 2, p, cfg)


def rate_jacobian_p(h: np.ndarray, p: np.ndarray, cfg: RrmProblemConfig) -> np.ndarray:
    """J[i, j] = d f_i / d p_j at the given operating point."""
    abs_h2 = np.abs(h) ** 2
    _check_shapes(abs_h2, p, cfg.m)
    a = np.diagonal(abs_h2)
    s = p * a
    d = interference_denominators(abs_h2, p, cfg.noise)
    # Off-diagonal: -a_cross[j, i] * s_i / (d_i (d_i + s_i)), cross gain j->i.
    jac = -(abs_h2 * (s / (d * (d + s)))[None, :]).T / _LN2
    np.fill_diagonal(jac, a / (d + s) / _LN2)
    return jac


def constraints_g(avg_f: np.ndarray, cfg: RrmProblemConfig) -> np.ndarray:
    """Constraint slacks g_i = avg_f_i - f_min (feasible when >= 0)."""
    return np.asarray(avg_f, dtype=float) - cfg.f_min_bps_hz


def utility_sum(avg_f: np.ndarray) -> float:
    """Network utility: the sum of the per-user ergodic rates."""
    return float(np.sum(avg_f))


def lagrangian(
    avg_f: np.ndarray,
    mu: np.ndarray,
    cfg: RrmProblemConfig,
    utility_scale: float = 1.0,
) -> float:
    """utility_scale * U(avg_f) + mu . g(avg_f).

    ``utility_scale`` rescales the utility term only; it exists so linearity
    of the objective in the rate weights can be exercised end to end.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise NegativeDual("dual variables must be nonnegative")
    if mu.shape[-1] != cfg.m:
        raise DimensionMismatch(f"mu shape {mu.shape} inconsistent with m={cfg.m}")
    return utility_scale * utility_sum(avg_f) + float(mu @ constraints_g(avg_f, cfg))


def lagrangian_rate_weights(
    mu: np.ndarray, cfg: RrmProblemConfig, utility_scale: float = 1.0
) -> np.ndarray:
    """Gradient of the Lagrangian in the ergodic rates: utility_scale + mu."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise NegativeDual("dual variables must be nonnegative")
    return utility_scale + mu


def metrics(
    pooled_rates: np.ndarray,
    cfg: RrmProblemConfig,
    feasibility_tolerance: float = 0.0,
) -> MetricsSummary:
    """Summary statistics over user ergodic rates pooled across a test set.

    The trimmed minimum discards the lowest ceil(0.01 * n) values as
    outliers; the 5th percentile interpolates linearly between order
    statistics; feasibility counts rates >= f_min - feasibility_tolerance.
    """
    values = np.asarray(pooled_rates, dtype=float).ravel()
    n = values.size
    if n == 0:
        raise EmptyInput("metrics need at least one rate")
    ordered = np.sort(values)
    n_trim = math.ceil(0.01 * n)
    trimmed = ordered[n_trim:] if n_trim < n else ordered[-1:]
    threshold = cfg.f_min_bps_hz - feasibility_tolerance
    return MetricsSummary(
        mean_rate=float(np.mean(values)),
        min_rate_trimmed=float(trimmed[0]),
        p5_rate=float(np.percentile(values, 5)),
        feasibility_fraction=float(np.mean(values >= threshold)),
        n_users=n,
    )
