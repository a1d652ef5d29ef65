"""Synthetic twin-beam sources and their click statistics.

Two independent routes produce the same physics: :func:`simulate_clicks_exact`
multiplies the model matrices, :func:`simulate_clicks_mc` samples photons
pulse by pulse.  Their agreement is the reference check for the estimators.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import poisson

from .background import BackgroundModel, add_background
from .detector_model import DEFAULT_TRUNCATION, MultiplexConfig, build_convolution_matrix
from .forward_model import ClickHistogram, predict_joint

SOURCE_KINDS = ("tmsv", "poisson", "custom")
RNG_ALGORITHM = "numpy.random.Generator(PCG64) via SeedSequence.spawn"
DEFAULT_CHUNK = 1 << 16


@dataclass(frozen=True)
class SourceConfig:
    """A number-correlated twin-beam source.

    ``kind`` selects the pair-number family:

    * ``"tmsv"``: two-mode squeezed vacuum, ``c_n = (1 - x) x**n`` with
      ``x = squeezing**2``;
    * ``"poisson"``: many-mode limit, ``c_n`` Poisson with mean ``mean_pairs``;
    * ``"custom"``: explicit ``diagonal``.

    When ``pump_power`` is set it overrides the strength:
    ``squeezing**2 = pump_gain * pump_power`` (TMSV) or
    ``mean_pairs = pump_gain * pump_power`` (Poisson).
    """

    kind: str = "tmsv"
    squeezing: float = 0.0
    mean_pairs: float = 0.0
    diagonal: tuple[float, ...] | None = None
    truncation: int = DEFAULT_TRUNCATION
    pump_power: float | None = None
    pump_gain: float = 1.0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"source kind must be one of {SOURCE_KINDS}, got {self.kind!r}")
        if int(self.truncation) != self.truncation or self.truncation < 1:
            raise ValueError("truncation must be a positive integer")
        if self.pump_power is not None and (self.pump_power < 0 or self.pump_gain < 0):
            raise ValueError("pump power and gain must be non-negative")
        if self.kind == "tmsv" and not abs(self.lam) < 1:
            raise ValueError(f"squeezing parameter must satisfy |lambda| < 1, got {self.lam}")
        if self.kind == "poisson" and not self.mu >= 0:
            raise ValueError("mean pair number must be >= 0")
        if self.kind == "custom":
            if self.diagonal is None:
                raise ValueError("custom source needs an explicit diagonal")
            object.__setattr__(self, "diagonal", tuple(float(v) for v in self.diagonal))
            if any(v < 0 for v in self.diagonal) or sum(self.diagonal) <= 0:
                raise ValueError("custom diagonal must be non-negative with positive sum")
            if len(self.diagonal) > self.truncation:
                raise ValueError("custom diagonal is longer than the truncation")

    @property
    def lam(self) -> float:
        if self.pump_power is not None:
            return math.sqrt(self.pump_gain * self.pump_power)
        return float(self.squeezing)

    @property
    def mu(self) -> float:
        if self.pump_power is not None:
            return self.pump_gain * self.pump_power
        return float(self.mean_pairs)


def make_source_state(config: SourceConfig) -> np.ndarray:
    """Normalized pair-number distribution ``{c_n}``, truncated at ``config.truncation``."""
    n = np.arange(config.truncation)
    if config.kind == "tmsv":
        x = config.lam**2
        c = (1 - x) * np.power(x, n)
    elif config.kind == "poisson":
        c = poisson.pmf(n, config.mu)
    else:
        c = np.zeros(config.truncation)
        c[: len(config.diagonal)] = config.diagonal
    return c / c.sum()


@dataclass(frozen=True)
class DetectorConfig:
    multiplex: MultiplexConfig = field(default_factory=MultiplexConfig.time_multiplexed)
    efficiency: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    detector1: DetectorConfig = field(default_factory=DetectorConfig)
    detector2: DetectorConfig = field(default_factory=DetectorConfig)
    background1: BackgroundModel = field(default_factory=BackgroundModel)
    background2: BackgroundModel = field(default_factory=BackgroundModel)
    trials: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")

    @property
    def truncation(self) -> int:
        return self.source.truncation

    def response_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        N = self.truncation
        return (
            build_convolution_matrix(self.detector1.multiplex.with_truncation(N)),
            build_convolution_matrix(self.detector2.multiplex.with_truncation(N)),
        )

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def simulate_clicks_exact(config: ExperimentConfig) -> np.ndarray:
    """Exact joint click probabilities of the configured experiment."""
    c = make_source_state(config.source)
    sigma = add_background(np.diag(c), config.background1.mean_photons, config.background2.mean_photons)
    c1, c2 = config.response_matrices()
    P = predict_joint(c1, config.detector1.efficiency, sigma, config.detector2.efficiency, c2)
    return np.clip(P, 0.0, None)


def _sample_pairs(source: SourceConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    # closed-form families are sampled untruncated
    if source.kind == "tmsv":
        x = source.lam**2
        if x == 0:
            return np.zeros(size, dtype=np.int64)
        return rng.geometric(1.0 - x, size) - 1
    if source.kind == "poisson":
        return rng.poisson(source.mu, size)
    c = np.asarray(source.diagonal, dtype=float)
    return rng.choice(c.size, size=size, p=c / c.sum())


def _occupied_bins(rng: np.random.Generator, photons: np.ndarray, probs) -> np.ndarray:
    if len(probs) == 1:
        return (photons > 0).astype(np.int64)
    routed = rng.multinomial(photons, probs)
    return np.count_nonzero(routed, axis=1)


def _simulate_chunk(args) -> tuple[np.ndarray, int]:
    config, seed_seq, size = args
    rng = np.random.default_rng(seed_seq)
    pairs = _sample_pairs(config.source, rng, size)
    arm1 = pairs + rng.poisson(config.background1.mean_photons, size)
    arm2 = pairs + rng.poisson(config.background2.mean_photons, size)
    overflow = int(np.count_nonzero((arm1 >= config.truncation) | (arm2 >= config.truncation)))
    det1 = rng.binomial(arm1, config.detector1.efficiency)
    det2 = rng.binomial(arm2, config.detector2.efficiency)
    k1 = _occupied_bins(rng, det1, config.detector1.multiplex.bin_probabilities)
    k2 = _occupied_bins(rng, det2, config.detector2.multiplex.bin_probabilities)
    B1 = config.detector1.multiplex.bins
    B2 = config.detector2.multiplex.bins
    hist = np.bincount(k1 * (B2 + 1) + k2, minlength=(B1 + 1) * (B2 + 1))
    return hist.reshape(B1 + 1, B2 + 1), overflow


def simulate_clicks_mc(
    config: ExperimentConfig, workers: int = 1, chunk_size: int = DEFAULT_CHUNK
) -> ClickHistogram:
    """Sample ``config.trials`` pulses and histogram the joint click counts.

    Per pulse: draw the pair number, add independent Poisson background to
    each arm, thin each arm binomially, route the surviving photons to bins
    and count the occupied bins.  Trials are split into fixed-size chunks,
    each with its own child seed, so the histogram depends only on
    ``rng_seed`` and ``chunk_size``, never on ``workers``.
    """
    n_chunks = -(-config.trials // chunk_size)
    seeds = np.random.SeedSequence(config.rng_seed).spawn(n_chunks)
    sizes = [chunk_size] * (n_chunks - 1) + [config.trials - chunk_size * (n_chunks - 1)]
    tasks = [(config, s, n) for s, n in zip(seeds, sizes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, tasks))
    else:
        parts = [_simulate_chunk(t) for t in tasks]
    counts = sum(p[0] for p in parts)
    overflow = sum(p[1] for p in parts)
    metadata = {
        "rng": RNG_ALGORITHM,
        "rng_seed": int(config.rng_seed),
        "chunk_size": int(chunk_size),
        "overflow_pulses": int(overflow),
    }
    return ClickHistogram(counts, config.trials, metadata)
