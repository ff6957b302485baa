"""Interference-channel simulation: topologies, large-scale gains, fading.

A network realization drops m transmitter-receiver pairs in a square area.
Large-scale link gains combine a dual-slope path loss with log-normal
shadowing and stay fixed for the lifetime of the realization.  Small-scale
Rayleigh fading evolves across time steps as a first-order Gauss-Markov
process.  The channel matrix at time t is

    h[i, j] = sqrt(G[i, j]) * c[i, j],

where G holds the large-scale power gains (transmitter i to receiver j,
linear scale) and c the unit-power complex fading coefficients at t.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch, PlacementInfeasible
from .seeding import generator, generator_at

_MAX_PLACEMENT_ROUNDS = 10_000

# Lag-1 correlation of the fading process.  Matches a Jakes-spectrum Doppler
# of about 6.67 Hz (1 m/s pedestrian at 2 GHz) sampled every 10 ms.
DEFAULT_FADING_RHO = 0.956


@dataclass(frozen=True)
class PathlossConfig:
    """Dual-slope path loss: exponent breaks at ``break_distance_m``.

    PL(d) = ref + 10 * a1 * log10(d)                     for d <= d_b
    PL(d) = PL(d_b) + 10 * a2 * log10(d / d_b)           for d >  d_b

    which is continuous at d_b by construction.
    """

    ref_loss_db_at_1m: float = 40.0
    exponent_near: float = 2.0
    exponent_far: float = 4.0
    break_distance_m: float = 100.0

    def validate(self) -> None:
        if not (self.exponent_far >= self.exponent_near > 0):
            raise ConfigError("need exponent_far >= exponent_near > 0")
        if self.break_distance_m <= 0:
            raise ConfigError("break_distance_m must be positive")


@dataclass(frozen=True)
class TopologyConfig:
    m: int = 50
    density_mode: str = "variable"  # "fixed" | "variable"
    area_side_m: float | None = None  # derived from density_mode when None
    min_tx_separation_m: float = 75.0
    rx_annulus_inner_m: float = 10.0
    rx_annulus_outer_m: float = 50.0
    shadowing_sigma_db: float = 7.0
    pathloss: PathlossConfig = field(default_factory=PathlossConfig)

    def validate(self) -> None:
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.density_mode not in ("fixed", "variable"):
            raise ConfigError(f"unknown density_mode {self.density_mode!r}")
        if not (0 < self.rx_annulus_inner_m < self.rx_annulus_outer_m):
            raise ConfigError("need 0 < rx_annulus_inner_m < rx_annulus_outer_m")
        if self.min_tx_separation_m < 0 or self.shadowing_sigma_db < 0:
            raise ConfigError("separations and sigmas must be nonnegative")
        if self.area_side_m is not None and self.area_side_m <= 0:
            raise ConfigError("area_side_m must be positive when given")
        self.pathloss.validate()

    def resolved_area_side_m(self) -> float:
        """Area side in meters; fixed density keeps m per km^2 constant."""
        if self.area_side_m is not None:
            return self.area_side_m
        if self.density_mode == "fixed":
            return math.sqrt(self.m / 20.0) * 2000.0
        return 2000.0

    @property
    def nonstandard_area(self) -> bool:
        """True when an explicit area overrides the density-mode rule."""
        if self.area_side_m is None:
            return False
        standard = (
            math.sqrt(self.m / 20.0) * 2000.0
            if self.density_mode == "fixed"
            else 2000.0
        )
        return self.area_side_m != standard


@dataclass
class LinkGainMatrix:
    """Large-scale power gains and the node positions that produced them."""

    gains_linear: np.ndarray  # (m, m), entry (i, j): tx i -> rx j
    tx_positions: np.ndarray  # (m, 2) meters
    rx_positions: np.ndarray  # (m, 2) meters

    @property
    def m(self) -> int:
        return self.gains_linear.shape[0]


@dataclass
class FadingState:
    """Unit-power complex fading coefficients plus their stream handle.

    The stream handle is the (seed, step) pair: innovations for step t are
    read from counter slot t of the Philox stream keyed by ``seed``, so any
    trajectory can be replayed from scratch without shared mutable state.
    """

    coeffs: np.ndarray  # (m, m) complex, E|c|^2 = 1
    rho: float
    seed: int
    step: int = 0


def pathloss_db(distance_m: np.ndarray | float, cfg: PathlossConfig) -> np.ndarray:
    """Dual-slope path loss in dB at the given distances (meters)."""
    d = np.asarray(distance_m, dtype=float)
    near = cfg.ref_loss_db_at_1m + 10.0 * cfg.exponent_near * np.log10(d)
    at_break = cfg.ref_loss_db_at_1m + 10.0 * cfg.exponent_near * np.log10(
        cfg.break_distance_m
    )
    far = at_break + 10.0 * cfg.exponent_far * np.log10(d / cfg.break_distance_m)
    return np.where(d <= cfg.break_distance_m, near, far)


def _place_transmitters(cfg: TopologyConfig, rng: np.random.Generator) -> np.ndarray:
    side = cfg.resolved_area_side_m()
    sep2 = cfg.min_tx_separation_m**2
    positions = np.empty((cfg.m, 2))
    rounds = 0
    for i in range(cfg.m):
        while True:
            cand = rng.uniform(0.0, side, size=2)
            d2 = np.sum((positions[:i] - cand) ** 2, axis=1)
            if i == 0 or np.all(d2 >= sep2):
                positions[i] = cand
                break
            rounds += 1
            if rounds >= _MAX_PLACEMENT_ROUNDS:
                raise PlacementInfeasible(
                    f"could not place {cfg.m} transmitters with "
                    f"{cfg.min_tx_separation_m} m separation in a "
                    f"{side:.0f} m square after {rounds} rejections"
                )
    return positions


def _place_receivers(cfg: TopologyConfig, tx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # Uniform over the annulus area: radius from the sqrt of a uniform r^2.
    r = np.sqrt(
        rng.uniform(cfg.rx_annulus_inner_m**2, cfg.rx_annulus_outer_m**2, size=cfg.m)
    )
    theta = rng.uniform(0.0, 2.0 * math.pi, size=cfg.m)
    return tx + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def sample_topology(cfg: TopologyConfig, seed: int) -> LinkGainMatrix:
    """Draw node positions and large-scale gains for one realization.

    Gain (i, j) is 10**(-(PL(d_ij) + S_ij) / 10) with d_ij the distance from
    transmitter i to receiver j and S_ij per-link Gaussian shadowing in dB.
    Deterministic given (cfg, seed).
    """
    cfg.validate()
    rng = generator(seed)
    tx = _place_transmitters(cfg, rng)
    rx = _place_receivers(cfg, tx, rng)
    dist = np.linalg.norm(tx[:, None, :] - rx[None, :, :], axis=-1)
    shadowing = cfg.shadowing_sigma_db * rng.standard_normal((cfg.m, cfg.m))
    loss_db = pathloss_db(dist, cfg.pathloss) + shadowing
    return LinkGainMatrix(
        gains_linear=10.0 ** (-loss_db / 10.0), tx_positions=tx, rx_positions=rx
    )


def _complex_normal(rng: np.random.Generator, m: int) -> np.ndarray:
    re = rng.standard_normal((m, m))
    im = rng.standard_normal((m, m))
    return (re + 1j * im) / math.sqrt(2.0)


def init_fading(m: int, rho: float, seed: int) -> FadingState:
    """Fading state at step 0, drawn from the stationary CN(0, 1) law."""
    if not 0.0 <= rho <= 1.0:
        raise ConfigError("rho must lie in [0, 1]")
    coeffs = _complex_normal(generator_at(seed, 0), m)
    return FadingState(coeffs=coeffs, rho=rho, seed=seed, step=0)


def fading_step(state: FadingState) -> FadingState:
    """Advance the Gauss-Markov process one step.

    c' = rho * c + sqrt(1 - rho^2) * w with w ~ CN(0, 1) i.i.d., which keeps
    the stationary unit-power law intact.
    """
    nxt = state.step + 1
    w = _complex_normal(generator_at(state.seed, nxt), state.coeffs.shape[0])
    coeffs = state.rho * state.coeffs + math.sqrt(1.0 - state.rho**2) * w
    return FadingState(coeffs=coeffs, rho=state.rho, seed=state.seed, step=nxt)


def channel_at(large: LinkGainMatrix, fading: FadingState) -> np.ndarray:
    """Channel matrix h = sqrt(large-scale gain) * fading coefficient."""
    if large.gains_linear.shape != fading.coeffs.shape:
        raise DimensionMismatch(
            f"gains {large.gains_linear.shape} vs fading {fading.coeffs.shape}"
        )
    return np.sqrt(large.gains_linear) * fading.coeffs


def episode_channel(large: LinkGainMatrix, fading0: FadingState, n_steps: int) -> np.ndarray:
    """Channel matrices for steps 0..n_steps-1 as a (T, m, m) complex array."""
    out = np.empty((n_steps, large.m, large.m), dtype=complex)
    state = fading0
    for t in range(n_steps):
        out[t] = channel_at(large, state)
        state = fading_step(state)
    return out


@dataclass
class Realization:
    """One cached network sample: large-scale part plus fading stream seed."""

    large: LinkGainMatrix
    fading_seed: int
    rho: float
    topology_seed: int

    @property
    def m(self) -> int:
        return self.large.m

    def episode(self, n_steps: int) -> np.ndarray:
        fading0 = init_fading(self.m, self.rho, self.fading_seed)
        return episode_channel(self.large, fading0, n_steps)


def realization_to_dict(r: Realization, config_echo: dict | None = None) -> dict:
    d = {
        "m": r.m,
        "topology_seed": r.topology_seed,
        "fading_seed": r.fading_seed,
        "rho": r.rho,
        "tx_positions": r.large.tx_positions.tolist(),
        "rx_positions": r.large.rx_positions.tolist(),
        "gains_linear": r.large.gains_linear.tolist(),
    }
    if config_echo is not None:
        d["config_echo"] = config_echo
    return d


def realization_from_dict(d: dict) -> Realization:
    m = int(d["m"])
    gains = np.asarray(d["gains_linear"], dtype=float)
    if gains.shape != (m, m):
        raise DimensionMismatch(f"gains shape {gains.shape} does not match m={m}")
    large = LinkGainMatrix(
        gains_linear=gains,
        tx_positions=np.asarray(d["tx_positions"], dtype=float),
        rx_positions=np.asarray(d["rx_positions"], dtype=float),
    )
    return Realization(
        large=large,
        fading_seed=int(d["fading_seed"]),
        rho=float(d["rho"]),
        topology_seed=int(d["topology_seed"]),
    )


def save_realization(path, r: Realization, config_echo: dict | None = None) -> None:
    with open(path, "w") as f:
        json.dump(realization_to_dict(r, config_echo), f, sort_keys=True)


def load_realization(path) -> Realization:
    with open(path) as f:
        return realization_from_dict(json.load(f))
