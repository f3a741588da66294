"""ABC sequential Monte Carlo with quantile-adapted tolerances.

Generation 0 draws from a uniform prior and keeps every feasible sample.
Each later generation resamples the previous one by weight, perturbs with an
independent Gaussian kernel (variance twice the weighted empirical variance),
discards proposals outside the prior support, and accepts when the distance
is within the tolerance.  The tolerance is a quantile (default: median) of
the previous generation's distances.  Importance weights are
``prior(theta) / sum_j w_j K(theta | theta_j)``.

Every particle slot draws from its own random substream keyed by
``(seed, generation, slot)``, so the accepted set does not depend on the
number of worker processes.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .channel import (ORIGINAL, PARAM_NAMES, ChannelInfeasible, SodiumChannelParams,
                      SummaryCurve, run_protocol_suite)
from .io import write_csv
from .rng import substream

logger = logging.getLogger(__name__)

# prior bounds for the sodium-channel fit
SODIUM_PRIOR_BOUNDS = {
    "p1": (0.0, 100.0), "p2": (-50.0, 0.0), "p3": (0.0, 1.0),
    "p4": (0.0, 100.0), "p5": (-50.0, 0.0), "p6": (0.0, 1.0),
    "p7": (0.0, 1000.0), "q1": (0.0, 100.0), "q2": (0.0, 50.0),
}


@dataclass(frozen=True)
class PriorSpec:
    """Independent uniform priors on ``[lo, hi]`` per named parameter.

    ``lo == hi`` pins a parameter (a point-mass prior); it is never perturbed.
    """

    names: tuple[str, ...]
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (len(self.names),) or hi.shape != lo.shape:
            raise ValueError("bounds must match the parameter names")
        if np.any(lo > hi) or not np.all(np.isfinite(lo) & np.isfinite(hi)):
            raise ValueError("each prior needs finite lo <= hi")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_bounds(cls, bounds: dict[str, tuple[float, float]]) -> "PriorSpec":
        names = tuple(bounds)
        return cls(names, [bounds[n][0] for n in names], [bounds[n][1] for n in names])

    @classmethod
    def sodium_channel(cls) -> "PriorSpec":
        return cls.from_bounds(SODIUM_PRIOR_BOUNDS)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def free(self) -> np.ndarray:
        return self.hi > self.lo

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.lo + self.width * rng.random(self.dim)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lo) and np.all(theta <= self.hi))

    def log_density(self) -> float:
        return -float(np.sum(np.log(self.width[self.free])))


@dataclass(frozen=True)
class Particle:
    params: np.ndarray
    weight: float
    distance: float


@dataclass
class Population:
    generation: int
    params: np.ndarray
    weights: np.ndarray
    distances: np.ndarray
    epsilon: float
    acceptance_rate: float
    n_simulations: int
    complete: bool = True

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def particles(self) -> list[Particle]:
        return [Particle(p, float(w), float(d))
                for p, w, d in zip(self.params, self.weights, self.distances)]

    def effective_size(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))


@dataclass(frozen=True)
class ABCConfig:
    n_particles: int = 200
    max_generations: int = 12
    epsilon_quantile: float = 0.5
    min_acceptance: float = 0.002
    seed: int = 0
    max_attempts_per_slot: int = 5000
    workers: int = 1

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        if not 0 < self.epsilon_quantile <= 1:
            raise ValueError("epsilon_quantile must be in (0, 1]")


@dataclass(frozen=True)
class PosteriorStats:
    names: tuple[str, ...]
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray


def distance(simulated: Sequence[SummaryCurve], observed: Sequence[SummaryCurve]) -> float:
    """Mean over protocols of the RMS residual, each scaled by the observed curve's range."""
    if len(simulated) != len(observed):
        raise ValueError("simulated and observed protocol counts differ")
    total = 0.0
    for sim, obs in zip(simulated, observed):
        if sim.kind != obs.kind:
            raise ValueError(f"protocol mismatch: {sim.kind} vs {obs.kind}")
        if sim.abscissa.shape != obs.abscissa.shape or not np.allclose(sim.abscissa, obs.abscissa):
            raise ValueError(f"abscissa mismatch in {obs.kind}")
        span = np.ptp(obs.values) or 1.0
        total += math.sqrt(np.mean(((sim.values - obs.values) / span) ** 2))
    return total / len(observed)


def _evaluate(simulate, dist, observed, theta, rng) -> float:
    try:
        d = float(dist(simulate(theta, rng), observed))
    except (ArithmeticError, FloatingPointError, ChannelInfeasible):
        return math.inf
    return d if np.isfinite(d) else math.inf


def _fill_slot(slot, *, generation, seed, prior, simulate, dist, observed, epsilon,
               prev_params, prev_weights, sd, max_attempts):
    """Propose until one particle is accepted; returns (theta, distance, n_sims) or None theta."""
    rng = substream(seed, generation, slot)
    n_sims = 0
    for _ in range(max_attempts):
        if prev_params is None:
            theta = prior.sample(rng)
        else:
            idx = rng.choice(len(prev_weights), p=prev_weights)
            theta = prev_params[idx] + sd * rng.standard_normal(prior.dim)
            if not prior.contains(theta):
                continue
        n_sims += 1
        d = _evaluate(simulate, dist, observed, theta, rng)
        if d <= epsilon:
            return theta, d, n_sims
    return None, math.inf, n_sims


def _kernel_weights(theta, prev_params, prev_weights, sd, prior) -> np.ndarray:
    free = prior.free
    z = (theta[:, None, free] - prev_params[None, :, free]) / sd[free]
    log_k = -0.5 * np.sum(z ** 2, axis=-1)
    log_w = prior.log_density() - logsumexp(log_k, b=prev_weights[None, :], axis=1)
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


def weighted_variance(params: np.ndarray, weights: np.ndarray) -> np.ndarray:
    mean = weights @ params
    return weights @ (params - mean) ** 2


def run_abcsmc(prior: PriorSpec, observed, simulate: Callable, dist: Callable = distance,
               config: ABCConfig = ABCConfig()) -> list[Population]:
    """Run ABC-SMC and return every population, generation 0 first.

    ``simulate(theta, rng)`` maps a parameter vector to summaries comparable
    with ``observed`` through ``dist``.  Arithmetic failures count as
    rejections.  Stops after ``max_generations`` populations, when the
    acceptance rate falls below ``min_acceptance``, or when a slot runs out of
    attempts (that population is returned with ``complete=False``).
    """
    if not prior.free.any():
        # nothing to infer: the posterior is the prior's single point
        theta = prior.lo.copy()
        d = _evaluate(simulate, dist, observed, theta, substream(config.seed, 0, 0))
        return [Population(0, theta[None, :], np.ones(1), np.array([d]), math.inf, 1.0, 1)]
    n = config.n_particles
    pops: list[Population] = []
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for g in range(config.max_generations):
            if g == 0:
                epsilon, prev_p, prev_w, sd = math.inf, None, None, None
            else:
                last = pops[-1]
                epsilon = float(np.quantile(last.distances, config.epsilon_quantile))
                prev_p, prev_w = last.params, last.weights
                sd = np.sqrt(2.0 * weighted_variance(prev_p, prev_w))
                sd = np.where(prior.free, np.maximum(sd, 1e-12 * prior.width), 0.0)
            job = partial(_fill_slot, generation=g, seed=config.seed, prior=prior,
                          simulate=simulate, dist=dist, observed=observed, epsilon=epsilon,
                          prev_params=prev_p, prev_weights=prev_w, sd=sd,
                          max_attempts=config.max_attempts_per_slot)
            if pool is None:
                results = [job(s) for s in range(n)]
            else:
                results = list(pool.map(job, range(n), chunksize=max(1, n // (4 * config.workers))))
            accepted = [(t, d) for t, d, _ in results if t is not None]
            n_sims = sum(r[2] for r in results)
            complete = len(accepted) == n
            if not accepted:
                logger.warning("generation %d accepted nothing; stopping", g)
                break
            theta = np.array([t for t, _ in accepted])
            dists = np.array([d for _, d in accepted])
            if g == 0:
                weights = np.full(len(theta), 1.0 / len(theta))
            else:
                weights = _kernel_weights(theta, prev_p, prev_w, sd, prior)
            rate = len(accepted) / max(n_sims, 1)
            pops.append(Population(g, theta, weights, dists, epsilon, rate, n_sims, complete))
            logger.info("generation %d: eps=%.4g acceptance=%.3f sims=%d", g, epsilon, rate, n_sims)
            if not complete:
                logger.warning("generation %d exhausted its proposal budget", g)
                break
            if g > 0 and rate < config.min_acceptance:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return pops


def posterior_stats(pop: Population, names: Sequence[str] | None = None) -> PosteriorStats:
    if len(pop) == 0:
        raise ValueError("empty population")
    names = tuple(names) if names is not None else tuple(f"theta{i}" for i in range(pop.params.shape[1]))
    w = pop.weights / pop.weights.sum()
    return PosteriorStats(names, w @ pop.params, pop.params.min(axis=0), pop.params.max(axis=0))


@dataclass(frozen=True)
class KernelDensity:
    """Weighted Gaussian KDE of one parameter.  ``is_delta`` flags a zero-spread population."""

    samples: np.ndarray
    weights: np.ndarray
    bandwidth: float
    grid: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    is_delta: bool = False

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_delta:
            return np.where(np.isclose(x, self.samples[0]), np.inf, 0.0)
        z = (x[..., None] - self.samples) / self.bandwidth
        return (np.exp(-0.5 * z ** 2) @ self.weights) / (self.bandwidth * math.sqrt(2 * math.pi))


def kernel_density_1d(pop: Population, index: int, n_grid: int = 512) -> KernelDensity:
    """Gaussian KDE with Silverman's rule ``1.06 sigma n_eff^(-1/5)`` on weighted samples."""
    if len(pop) < 2:
        raise ValueError("need at least 2 particles for a density estimate")
    x = pop.params[:, index]
    w = pop.weights / pop.weights.sum()
    mean = w @ x
    sigma = math.sqrt(max(w @ (x - mean) ** 2, 0.0))
    if sigma == 0.0:
        return KernelDensity(x, w, 0.0, np.array([mean]), np.array([np.inf]), is_delta=True)
    n_eff = 1.0 / np.sum(w ** 2)
    bw = 1.06 * sigma * n_eff ** -0.2
    grid = np.linspace(x.min() - 5 * bw, x.max() + 5 * bw, n_grid)
    kde = KernelDensity(x, w, bw, grid, np.empty(0))
    return KernelDensity(x, w, bw, grid, kde.evaluate(grid))


# ---------------------------------------------------------------- sodium channel


def channel_simulator(theta, rng=None, base: SodiumChannelParams = ORIGINAL):
    """Summary curves of the default protocol suite at parameter vector ``theta``."""
    return run_protocol_suite(base.with_vector(theta))


def synthetic_observations(params: SodiumChannelParams = ORIGINAL, noise: float = 0.01,
                           seed: int = 0) -> list[SummaryCurve]:
    """Protocol-suite curves plus Gaussian noise of ``noise`` times each curve's range."""
    rng = substream(seed, 99)
    curves = run_protocol_suite(params)
    return [SummaryCurve(c.kind, c.abscissa,
                         c.values + noise * (np.ptp(c.values) or 1.0) * rng.standard_normal(c.values.size))
            for c in curves]


def fit_sodium_channel(observed: Sequence[SummaryCurve], config: ABCConfig = ABCConfig(),
                       prior: PriorSpec | None = None) -> list[Population]:
    prior = prior or PriorSpec.sodium_channel()
    if prior.names != PARAM_NAMES:
        raise ValueError(f"sodium-channel prior must list {PARAM_NAMES}")
    return run_abcsmc(prior, list(observed), channel_simulator, distance, config)


# ---------------------------------------------------------------- conjugate toy


def gaussian_toy_simulate(theta, rng, n_obs: int = 10) -> float:
    """Mean of ``n_obs`` unit-variance normal draws centred on ``theta[0]``."""
    return float(np.mean(theta[0] + rng.standard_normal(n_obs)))


def abs_distance(sim, obs) -> float:
    return abs(sim - obs)


# ---------------------------------------------------------------- output


def write_population_csv(path, pop: Population, names: Sequence[str]):
    rows = [(*map(float, p), float(w), float(d))
            for p, w, d in zip(pop.params, pop.weights, pop.distances)]
    return write_csv(path, (*names, "weight", "distance"), rows)


def write_posterior_csv(path, stats: PosteriorStats, prior: PriorSpec):
    rows = [(n, float(lo), float(hi), float(m), float(a), float(b))
            for n, lo, hi, m, a, b in zip(stats.names, prior.lo, prior.hi,
                                           stats.mean, stats.min, stats.max)]
    return write_csv(path, ("param", "prior_lo", "prior_hi", "mean", "min", "max"), rows)


def write_kde_csv(path, pops: Sequence[Population], index: int, prior: PriorSpec, n_grid: int = 256):
    """Per-generation densities of one parameter on a shared grid over its prior range."""
    x = np.linspace(prior.lo[index], prior.hi[index], n_grid)
    cols = []
    for pop in pops:
        kde = kernel_density_1d(pop, index)
        cols.append(np.zeros_like(x) if kde.is_delta else kde.evaluate(x))
    rows = [(float(xi), *(float(c[i]) for c in cols)) for i, xi in enumerate(x)]
    return write_csv(path, ("x", *(f"gen{p.generation}" for p in pops)), rows)
