"""Offline policy training by stochastic ascent on the expected Lagrangian.

Each iteration samples a batch of dual vectors and channel realizations,
rolls one episode per batch element with the duals held fixed, and applies
the batch-averaged gradient step.  No dual update ever runs during training;
the duals only condition the policy input and weight the objective.

All randomness is derived statelessly from (seed, purpose, index), so a run
can be resumed from any checkpoint and continues bit-for-bit identically to
the uninterrupted run, and results do not depend on the worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channel import Realization
from .core import RrmProblemConfig, constraints_g, utility_sum
from .errors import (
    ConfigError,
    EmptyInput,
    NonFiniteActivation,
    NonFiniteLoss,
    SizeLimitExceeded,
    UnsupportedDistribution,
)
from .policy import (
    EpisodeTensors,
    GnnConfig,
    GnnParams,
    apply_update,
    episode_eval,
    episode_tensors,
    init_params,
)
from .seeding import DATA_ORDER, DUAL_SAMPLING, ORACLE, PARAM_INIT, derive_seed, generator

ORACLE_MAX_USERS = 8


@dataclass(frozen=True)
class TrainConfig:
    """Training schedule and hyperparameters.

    ``n_iters`` overrides the epoch-derived schedule when set; otherwise the
    iteration count is epochs * dataset_size / batch_size.  ``eta_phi``
    defaults to 0.1 / m at use.  The learning-rate decay multiplies eta_phi
    by ``lr_decay_factor`` once per ``lr_decay_every_epochs`` epochs and is
    off at the default factor of 1.
    """

    n_iters: int | None = None
    epochs: int = 100
    batch_size: int = 128
    episode_len: int = 100
    eta_phi: float | None = None
    mu_dist: tuple = ("uniform", 0.0, 1.0)
    lr_decay_factor: float = 1.0
    lr_decay_every_epochs: int = 100
    checkpoint_every: int | None = None
    workers: int = 1
    seed: int | None = None  # inherits the experiment master seed when None

    def validate(self) -> None:
        if self.batch_size < 1 or self.episode_len < 1:
            raise ConfigError("batch_size and episode_len must be >= 1")
        if self.eta_phi is not None and self.eta_phi <= 0:
            raise ConfigError("eta_phi must be positive")
        if self.n_iters is not None and self.n_iters < 0:
            raise ConfigError("n_iters must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def resolved_n_iters(self, dataset_size: int) -> int:
        if self.n_iters is not None:
            return self.n_iters
        return (self.epochs * dataset_size) // self.batch_size

    def resolved_eta_phi(self, m: int) -> float:
        return self.eta_phi if self.eta_phi is not None else 0.1 / m


@dataclass
class TrainingLog:
    iterations: list[int] = field(default_factory=list)
    mean_lagrangian: list[float] = field(default_factory=list)
    mean_sum_rate: list[float] = field(default_factory=list)
    mean_constraint_slack: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)

    def append(self, n: int, lag: float, sum_rate: float, slack: float, ms: float) -> None:
        self.iterations.append(n)
        self.mean_lagrangian.append(lag)
        self.mean_sum_rate.append(sum_rate)
        self.mean_constraint_slack.append(slack)
        self.wall_ms.append(ms)


def sample_duals(m: int, batch: int, dist: Sequence, seed: int) -> np.ndarray:
    """(batch, m) i.i.d. dual draws; only uniform(a, b), 0 <= a < b, is shipped."""
    if len(dist) != 3 or dist[0] != "uniform":
        raise UnsupportedDistribution(f"unsupported dual distribution {dist!r}")
    low, high = float(dist[1]), float(dist[2])
    if not (0.0 <= low < high):
        raise UnsupportedDistribution("uniform bounds need 0 <= a < b")
    return generator(seed).uniform(low, high, size=(batch, m))


def _sample_index(global_sample: int, dataset_size: int, seed: int, perm_cache: dict) -> int:
    """Dataset index for a global sample counter, with per-epoch shuffling."""
    epoch, pos = divmod(global_sample, dataset_size)
    if epoch not in perm_cache:
        perm_cache[epoch] = generator(derive_seed(seed, DATA_ORDER, epoch)).permutation(
            dataset_size
        )
    return int(perm_cache[epoch][pos])


def _episode_task(payload) -> tuple[float, GnnParams, np.ndarray]:
    tensors, mu, params, cfg, utility_scale, node_features = payload
    return episode_eval(
        tensors, mu, params, cfg, utility_scale=utility_scale, node_features=node_features
    )


class _TensorCache:
    """Lazily materialized per-realization episode tensors."""

    def __init__(self, dataset: Sequence[Realization], n_steps: int, cfg: RrmProblemConfig):
        self._dataset = dataset
        self._n_steps = n_steps
        self._cfg = cfg
        self._cache: dict[int, EpisodeTensors] = {}

    def get(self, idx: int) -> EpisodeTensors:
        if idx not in self._cache:
            self._cache[idx] = episode_tensors(
                self._dataset[idx].episode(self._n_steps), self._cfg
            )
        return self._cache[idx]


def _run_ascent(
    cfg: TrainConfig,
    problem: RrmProblemConfig,
    dims: GnnConfig,
    dataset: Sequence[Realization],
    init: GnnParams | None,
    start_iter: int,
    *,
    seed_path: tuple[int, ...] = (),
    fixed_mu: np.ndarray | None = None,
    node_features: np.ndarray | None = None,
    utility_scale: float = 1.0,
    log: TrainingLog | None = None,
    checkpoint_cb: Callable[[int, GnnParams], None] | None = None,
) -> GnnParams:
    cfg.validate()
    if cfg.seed is None:
        raise ConfigError("train seed is unresolved; set TrainConfig.seed")
    if len(dataset) == 0:
        raise EmptyInput("training dataset is empty")
    n_iters = cfg.resolved_n_iters(len(dataset))
    eta_base = cfg.resolved_eta_phi(problem.m)
    params = (
        init
        if init is not None
        else init_params(dims, derive_seed(cfg.seed, *seed_path, PARAM_INIT))
    )
    cache = _TensorCache(dataset, cfg.episode_len, problem)
    perm_cache: dict[int, np.ndarray] = {}
    pool = (
        ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    )
    try:
        for n in range(start_iter, n_iters):
            t0 = time.perf_counter()
            if fixed_mu is None:
                mu_batch = sample_duals(
                    problem.m,
                    cfg.batch_size,
                    cfg.mu_dist,
                    derive_seed(cfg.seed, *seed_path, DUAL_SAMPLING, n),
                )
            else:
                mu_batch = np.broadcast_to(fixed_mu, (cfg.batch_size, problem.m))
            payloads = []
            for b in range(cfg.batch_size):
                idx = _sample_index(
                    n * cfg.batch_size + b, len(dataset), cfg.seed, perm_cache
                )
                payloads.append(
                    (cache.get(idx), mu_batch[b], params, problem, utility_scale,
                     node_features)
                )
            try:
                if pool is None:
                    results = [_episode_task(p) for p in payloads]
                else:
                    results = list(pool.map(_episode_task, payloads))
            except NonFiniteActivation as exc:
                raise NonFiniteLoss(n, f"iteration {n}: {exc}") from exc
            # Fixed reduction order (batch index) keeps training bit-reproducible
            # regardless of the worker count.
            grad_mean = params.zeros_like()
            values, sum_rates, slacks = [], [], []
            for value, grad, avg_f in results:
                grad_mean.add_scaled(grad, 1.0 / cfg.batch_size)
                values.append(value)
                sum_rates.append(utility_sum(avg_f))
                slacks.append(float(np.mean(constraints_g(avg_f, problem))))
            mean_value = float(np.sum(values) / cfg.batch_size)
            if not np.isfinite(mean_value) or not grad_mean.is_finite():
                raise NonFiniteLoss(n)
            epoch = (n * cfg.batch_size) // len(dataset)
            eta = eta_base * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every_epochs)
            params = apply_update(params, grad_mean, eta)
            if log is not None:
                log.append(
                    n,
                    mean_value,
                    float(np.sum(sum_rates) / cfg.batch_size),
                    float(np.sum(slacks) / cfg.batch_size),
                    (time.perf_counter() - t0) * 1e3,
                )
            if checkpoint_cb is not None and cfg.checkpoint_every:
                if (n + 1) % cfg.checkpoint_every == 0:
                    checkpoint_cb(n + 1, params)
    finally:
        if pool is not None:
            pool.shutdown()
    return params


def train(
    cfg: TrainConfig,
    problem: RrmProblemConfig,
    dims: GnnConfig,
    dataset: Sequence[Realization],
    init: GnnParams | None = None,
    start_iter: int = 0,
    checkpoint_cb: Callable[[int, GnnParams], None] | None = None,
) -> tuple[GnnParams, TrainingLog]:
    """Train the dual-conditioned policy; returns final params and the log."""
    log = TrainingLog()
    params = _run_ascent(
        cfg,
        problem,
        dims,
        dataset,
        init,
        start_iter,
        log=log,
        checkpoint_cb=checkpoint_cb,
    )
    return params, log


def train_per_mu_oracle(
    mu: np.ndarray,
    cfg: TrainConfig,
    problem: RrmProblemConfig,
    dims: GnnConfig,
    dataset: Sequence[Realization],
) -> GnnParams:
    """Channel-only policy trained for one fixed dual vector.

    Node features are constant ones, so the network cannot condition on the
    duals; the fixed mu enters only through the objective weights.  Intended
    as a small-scale comparison target, hence the hard size cap.
    """
    if problem.m > ORACLE_MAX_USERS:
        raise SizeLimitExceeded(
            f"per-mu oracle is restricted to m <= {ORACLE_MAX_USERS}"
        )
    mu = np.asarray(mu, dtype=float)
    return _run_ascent(
        cfg,
        problem,
        dims,
        dataset,
        None,
        0,
        seed_path=(ORACLE,),
        fixed_mu=mu,
        node_features=np.ones(problem.m),
    )
