"""Comparison policies: full reuse, greedy link scheduling, early-stopped duals."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .channel import Realization
from .core import MetricsSummary, RrmProblemConfig
from .errors import ConfigError
from .execution import EpisodeTrace, ExecConfig, evaluate_suite
from .policy import GnnParams


@dataclass(frozen=True)
class ItlinqConfig:
    """Greedy scheduling thresholds: link pairs may coexist only when their
    mutual interference-to-noise ratios stay under margin * SNR**eta."""

    eta_exponent: float = 0.7
    m_margin_db: float = 25.0
    ordering: str = "by-SNR-desc"  # or "by-index"

    def validate(self) -> None:
        if not (0.0 < self.eta_exponent <= 1.0):
            raise ConfigError("eta_exponent must lie in (0, 1]")
        if not np.isfinite(self.m_margin_db):
            raise ConfigError("m_margin_db must be finite")
        if self.ordering not in ("by-SNR-desc", "by-index"):
            raise ConfigError(f"unknown ordering {self.ordering!r}")


def full_reuse(h: np.ndarray, cfg: RrmProblemConfig) -> np.ndarray:
    """Every transmitter at maximum power, whatever the channel."""
    return np.full(cfg.m, cfg.p_max)


def itlinq_schedule(
    h: np.ndarray, problem: RrmProblemConfig, cfg: ItlinqConfig
) -> np.ndarray:
    """Greedy on/off scheduling; selected links transmit at p_max.

    Links are visited in the configured order (default: descending direct
    SNR, ties broken by lower index).  Candidate j joins the scheduled set S
    when for every i in S both INR(i -> j) <= M * SNR_i**eta and
    INR(j -> i) <= M * SNR_j**eta, with SNRs and INRs measured against the
    noise floor at maximum power.
    """
    cfg.validate()
    inr = problem.p_max * np.abs(h) ** 2 / problem.noise  # (i, j): tx i at rx j
    snr = np.diagonal(inr)
    margin = 10.0 ** (cfg.m_margin_db / 10.0)
    cap = margin * snr**cfg.eta_exponent
    if cfg.ordering == "by-SNR-desc":
        order = sorted(range(problem.m), key=lambda i: (-snr[i], i))
    else:
        order = list(range(problem.m))
    scheduled: list[int] = []
    for j in order:
        if all(inr[i, j] <= cap[i] and inr[j, i] <= cap[j] for i in scheduled):
            scheduled.append(j)
    powers = np.zeros(problem.m)
    powers[scheduled] = problem.p_max
    return powers


@dataclass
class FullReusePolicy:
    def powers(self, h: np.ndarray, mu: np.ndarray, cfg: RrmProblemConfig) -> np.ndarray:
        return full_reuse(h, cfg)


@dataclass
class ItlinqPolicy:
    cfg: ItlinqConfig

    def powers(self, h: np.ndarray, mu: np.ndarray, problem: RrmProblemConfig) -> np.ndarray:
        return itlinq_schedule(h, problem, self.cfg)


def early_stopped_baseline(
    params: GnnParams,
    dataset: Sequence[Realization],
    exec_cfg: ExecConfig,
    problem: RrmProblemConfig,
    t_stop: int,
    workers: int = 1,
    feasibility_tolerance: float = 0.0,
) -> tuple[MetricsSummary, list[EpisodeTrace]]:
    """Trained policy run with dual updates frozen from ``t_stop`` on.

    t_stop = 0 keeps the duals at their initial value for the whole run,
    which is how the plain primal-dual variant is realized; t_stop = T is
    the unablated run.
    """
    cfg = replace(exec_cfg, t_stop=t_stop)
    return evaluate_suite(
        params, dataset, cfg, problem, workers=workers,
        feasibility_tolerance=feasibility_tolerance,
    )
