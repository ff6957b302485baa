"""Numerical verification batteries: gradient checks and dual-dynamics laws.

These run both from the CLI and from the test suite.  The gradient check
compares the hand-derived episode gradient against central finite
differences on randomly selected coordinates spanning every parameter
tensor.  The dual battery replays recorded execution traces and asserts the
arithmetic consequences of the projected update rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import TopologyConfig, init_fading, episode_channel, sample_topology
from .core import RrmProblemConfig, constraints_g
from .errors import ConfigError
from .execution import EpisodeTrace, ExecConfig, replay_duals
from .policy import (
    GnnConfig,
    episode_eval,
    episode_tensors,
    init_params,
)
from .seeding import generator
from .training import sample_duals

DEFAULT_FD_STEP = 1e-6


@dataclass
class CoordinateCheck:
    tensor: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_err: float
    abs_err: float
    noise_floor: float  # rounding bound of the central difference itself

    def within(self, rtol: float) -> bool:
        # Central differences cannot resolve better than ~ulp(objective)/step,
        # so the relative tolerance carries that floor as an additive term.
        return self.abs_err <= rtol * max(abs(self.analytic), abs(self.numeric)) + self.noise_floor


@dataclass
class GradCheckReport:
    checks: list[CoordinateCheck] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((c.rel_err for c in self.checks), default=0.0)

    @property
    def max_measurable_rel_err(self) -> float:
        return max(
            (c.rel_err for c in self.checks
             if max(abs(c.analytic), abs(c.numeric)) > c.noise_floor / 1e-4),
            default=0.0,
        )

    def passed(self, tol: float = 1e-4) -> bool:
        return all(c.within(tol) for c in self.checks)


def finite_difference_check(
    problem: RrmProblemConfig,
    dims: GnnConfig,
    *,
    topology: TopologyConfig | None = None,
    n_steps: int = 10,
    n_coords: int = 50,
    step: float = DEFAULT_FD_STEP,
    seed: int = 0,
) -> GradCheckReport:
    """Analytic episode gradient vs central differences on random coordinates."""
    topology = topology or TopologyConfig(m=problem.m, area_side_m=500.0)
    if topology.m != problem.m:
        raise ConfigError("topology and problem disagree on m")
    large = sample_topology(topology, seed)
    episode = episode_channel(large, init_fading(problem.m, 0.956, seed + 1), n_steps)
    tensors = episode_tensors(episode, problem)
    mu = sample_duals(problem.m, 1, ("uniform", 0.0, 1.0), seed + 2)[0]
    params = init_params(dims, seed + 3)
    _, grads, _ = episode_eval(tensors, mu, params, problem)

    named = params.named_arrays()
    grad_named = dict(grads.named_arrays())
    rng = generator(seed + 4)
    # Cycle through the tensors so every one is represented, then fill the
    # remaining picks uniformly at random.
    coords: list[tuple[str, tuple[int, ...]]] = []
    live = [(name, a) for name, a in named if a.size > 0]
    for i in range(n_coords):
        name, a = live[i % len(live)]
        flat = int(rng.integers(a.size))
        coords.append((name, np.unravel_index(flat, a.shape)))

    report = GradCheckReport()
    eps = np.finfo(float).eps
    for name, index in coords:
        shifted = params.copy()
        target = dict(shifted.named_arrays())[name]
        original = target[index]
        target[index] = original + step
        up, _, _ = episode_eval(tensors, mu, shifted, problem)
        target[index] = original - step
        down, _, _ = episode_eval(tensors, mu, shifted, problem)
        target[index] = original
        numeric = (up - down) / (2.0 * step)
        analytic = float(grad_named[name][index])
        abs_err = abs(analytic - numeric)
        rel = abs_err / max(abs(analytic), abs(numeric), 1e-300)
        # a handful of ulps of the objective, divided through by the step
        noise = 8.0 * eps * max(abs(up), abs(down), 1.0) / (2.0 * step)
        report.checks.append(
            CoordinateCheck(
                tensor=name, index=tuple(int(i) for i in index),
                analytic=analytic, numeric=numeric, rel_err=rel,
                abs_err=abs_err, noise_floor=noise,
            )
        )
    return report


@dataclass
class BatteryResult:
    name: str
    passed: bool
    detail: str


def dual_trace_battery(
    trace: EpisodeTrace, exec_cfg: ExecConfig, problem: RrmProblemConfig
) -> list[BatteryResult]:
    """Arithmetic laws of the projected dual dynamics on a recorded trace."""
    results = []
    n_windows = trace.duals.shape[0]
    t0 = exec_cfg.T0
    eta = exec_cfg.eta_mu

    # Nonnegativity of every recorded multiplier.
    results.append(
        BatteryResult(
            "dual_nonnegative",
            bool(np.all(trace.duals >= 0.0)),
            f"min dual {trace.duals.min():.3g}",
        )
    )

    # Replaying the update rule from the rates reproduces the trajectory.
    replayed = replay_duals(trace, exec_cfg, problem)
    results.append(
        BatteryResult(
            "replay_bit_exact",
            bool(np.array_equal(replayed, trace.duals)),
            "recomputed duals match recorded duals",
        )
    )

    # A violated window with an applied update strictly raises the dual.
    violations_ok = True
    n_checked = 0
    for k in range(n_windows - 1):
        t_last = (k + 1) * t0 - 1
        if exec_cfg.t_stop is not None and t_last >= exec_cfg.t_stop:
            continue
        window_mean = trace.rates[k * t0 : (k + 1) * t0].mean(axis=0)
        for i in range(problem.m):
            if window_mean[i] < problem.f_min_bps_hz:
                n_checked += 1
                if not trace.duals[k + 1, i] > trace.duals[k, i]:
                    violations_ok = False
    results.append(
        BatteryResult(
            "violation_raises_dual",
            violations_ok,
            f"{n_checked} violated (user, window) pairs checked",
        )
    )

    # Telescoped lower bound for users whose trajectory never got projected.
    slack_sums = np.zeros(problem.m)
    projected = np.zeros(problem.m, dtype=bool)
    mu = trace.duals[0].copy()
    for k in range(n_windows - 1):
        t_last = (k + 1) * t0 - 1
        if exec_cfg.t_stop is not None and t_last >= exec_cfg.t_stop:
            continue
        g = constraints_g(trace.rates[k * t0 : (k + 1) * t0].mean(axis=0), problem)
        raw = mu - eta * g
        projected |= raw < 0.0
        slack_sums += g
        mu = np.maximum(0.0, raw)
    bound = trace.duals[0] - eta * slack_sums
    free = ~projected
    tol = 1e-9 * max(1.0, float(np.abs(bound).max()))
    telescoping_ok = bool(np.all(mu[free] >= bound[free] - tol))
    results.append(
        BatteryResult(
            "telescoping_bound",
            telescoping_ok,
            f"{int(free.sum())} users without projection",
        )
    )

    # Per-window step size bound: |mu_{k+1} - mu_k| <= eta sqrt(m) max|g|.
    step_ok = True
    for k in range(n_windows - 1):
        t_last = (k + 1) * t0 - 1
        if exec_cfg.t_stop is not None and t_last >= exec_cfg.t_stop:
            continue
        g = constraints_g(trace.rates[k * t0 : (k + 1) * t0].mean(axis=0), problem)
        delta = np.linalg.norm(trace.duals[k + 1] - trace.duals[k])
        cap = eta * math.sqrt(problem.m) * float(np.abs(g).max())
        if delta > cap * (1.0 + 1e-12) + 1e-12:
            step_ok = False
    results.append(
        BatteryResult("bounded_dual_step", step_ok, "norm of each update within bound")
    )
    return results
