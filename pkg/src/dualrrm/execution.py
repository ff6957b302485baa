"""Online execution: frozen policy plus projected dual descent.

At every time step the policy maps (H_t, current duals) to powers.  After
each block of T0 steps the duals move against the constraint slack of that
block's average rates and are projected back onto the nonnegative orthant:

    mu <- max(0, mu - eta_mu * (mean_rates_block - f_min)).

A violated constraint therefore raises its user's dual, which the trained
policy answers with more transmit power; satisfied constraints bleed the
dual back toward zero.  An optional freeze step stops the dual updates early
and is how the plain primal-dual baseline is realized.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import Realization
from .core import MetricsSummary, RrmProblemConfig, constraints_g, metrics
from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyInput,
    NegativeDual,
    WindowLengthMismatch,
)
from .graph import build_graph
from .policy import GnnParams, forward

DEFAULT_ETA_MU = 20.0


@dataclass(frozen=True)
class ExecConfig:
    T: int = 100
    T0: int = 5
    eta_mu: float = DEFAULT_ETA_MU
    mu_init: tuple[float, ...] | None = None  # zeros when None
    t_stop: int | None = None  # duals frozen from this step on; None = never

    def validate(self) -> None:
        if self.T0 < 1 or self.T < self.T0:
            raise ConfigError("need T >= T0 >= 1")
        if self.eta_mu <= 0:
            raise ConfigError("eta_mu must be positive")
        if self.t_stop is not None and self.t_stop < 0:
            raise ConfigError("t_stop must be >= 0")


@dataclass
class EpisodeTrace:
    """Everything one execution run produced, in step order."""

    powers: np.ndarray  # (T, m)
    rates: np.ndarray  # (T, m)
    duals: np.ndarray  # (K, m): multiplier in force during window k
    ergodic_rates: np.ndarray  # (T, m): running average of rates up to t
    final_dual: np.ndarray  # (m,): multiplier after the last boundary update

    @property
    def final_ergodic(self) -> np.ndarray:
        return self.ergodic_rates[-1]


@dataclass
class GnnPolicy:
    """Trained network wrapped as an executable power policy."""

    params: GnnParams

    def powers(self, h: np.ndarray, mu: np.ndarray, cfg: RrmProblemConfig) -> np.ndarray:
        return forward(build_graph(h, mu, cfg), self.params, cfg.p_max).powers


def dual_update(
    mu_k: np.ndarray,
    window_rates: np.ndarray,
    exec_cfg: ExecConfig,
    problem: RrmProblemConfig,
) -> np.ndarray:
    """One projected dual-descent step on the window-average rates."""
    mu_k = np.asarray(mu_k, dtype=float)
    if np.any(mu_k < 0):
        raise NegativeDual("dual variables must be nonnegative")
    window_rates = np.asarray(window_rates, dtype=float)
    if window_rates.ndim != 2 or window_rates.shape[0] != exec_cfg.T0:
        raise WindowLengthMismatch(
            f"window has shape {window_rates.shape}, expected ({exec_cfg.T0}, m)"
        )
    slack = constraints_g(window_rates.mean(axis=0), problem)
    return np.maximum(0.0, mu_k - exec_cfg.eta_mu * slack)


def _as_policy(policy):
    return GnnPolicy(policy) if isinstance(policy, GnnParams) else policy


def execute(
    policy,
    episode: np.ndarray,
    exec_cfg: ExecConfig,
    problem: RrmProblemConfig,
) -> EpisodeTrace:
    """Run the policy over one channel episode with dual descent.

    ``policy`` is either trained GnnParams or any object with a
    ``powers(h, mu, problem)`` method.  The dual update fires after step
    t = (k+1)*T0 - 1 unless that step has reached ``t_stop``; a trailing
    partial window never triggers an update.
    """
    exec_cfg.validate()
    from .core import rates as rates_fn

    policy = _as_policy(policy)
    episode = np.asarray(episode)
    n_steps = exec_cfg.T
    if episode.ndim != 3 or episode.shape[0] < n_steps or episode.shape[1:] != (
        problem.m,
        problem.m,
    ):
        raise DimensionMismatch(
            f"episode shape {episode.shape} cannot cover T={n_steps}, m={problem.m}"
        )
    n_windows = n_steps // exec_cfg.T0
    mu = (
        np.zeros(problem.m)
        if exec_cfg.mu_init is None
        else np.asarray(exec_cfg.mu_init, dtype=float)
    )
    if mu.shape != (problem.m,):
        raise DimensionMismatch(f"mu_init shape {mu.shape} inconsistent with m")
    if np.any(mu < 0):
        raise NegativeDual("mu_init must be nonnegative")

    powers = np.empty((n_steps, problem.m))
    rates_t = np.empty((n_steps, problem.m))
    duals = np.empty((n_windows, problem.m))
    k = 0
    for t in range(n_steps):
        if k < n_windows and t == k * exec_cfg.T0:
            duals[k] = mu
        powers[t] = policy.powers(episode[t], mu, problem)
        rates_t[t] = rates_fn(episode[t], powers[t], problem)
        if (t + 1) % exec_cfg.T0 == 0:
            frozen = exec_cfg.t_stop is not None and t >= exec_cfg.t_stop
            if not frozen:
                window = rates_t[t + 1 - exec_cfg.T0 : t + 1]
                mu = dual_update(mu, window, exec_cfg, problem)
            k += 1
    ergodic = np.cumsum(rates_t, axis=0) / np.arange(1, n_steps + 1)[:, None]
    return EpisodeTrace(
        powers=powers, rates=rates_t, duals=duals, ergodic_rates=ergodic,
        final_dual=mu,
    )


def replay_duals(trace: EpisodeTrace, exec_cfg: ExecConfig, problem: RrmProblemConfig) -> np.ndarray:
    """Recompute the dual trajectory from the recorded rates alone."""
    n_windows = trace.duals.shape[0]
    mu = trace.duals[0].copy()
    out = np.empty_like(trace.duals)
    for k in range(n_windows):
        out[k] = mu
        t_last = (k + 1) * exec_cfg.T0 - 1
        frozen = exec_cfg.t_stop is not None and t_last >= exec_cfg.t_stop
        if not frozen:
            window = trace.rates[k * exec_cfg.T0 : (k + 1) * exec_cfg.T0]
            mu = dual_update(mu, window, exec_cfg, problem)
    return out


def _suite_task(payload) -> EpisodeTrace:
    policy, realization, exec_cfg, problem = payload
    return execute(policy, realization.episode(exec_cfg.T), exec_cfg, problem)


def evaluate_suite(
    policy,
    dataset: Sequence[Realization],
    exec_cfg: ExecConfig,
    problem: RrmProblemConfig,
    workers: int = 1,
    feasibility_tolerance: float = 0.0,
) -> tuple[MetricsSummary, list[EpisodeTrace]]:
    """Execute every test realization and pool the final ergodic rates."""
    if len(dataset) == 0:
        raise EmptyInput("evaluation dataset is empty")
    policy = _as_policy(policy)
    payloads = [(policy, r, exec_cfg, problem) for r in dataset]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_suite_task, payloads))
    else:
        traces = [_suite_task(p) for p in payloads]
    pooled = np.concatenate([tr.final_ergodic for tr in traces])
    return metrics(pooled, problem, feasibility_tolerance), traces
