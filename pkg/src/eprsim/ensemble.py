"""Seeded Monte Carlo generation of pair events for both models.

Randomness is counter based: every uniform draw is a SplitMix64 hash of
(seed, pair_id, stream, draw index). A pair's event therefore depends only
on the seed and its own id, so any slice of ids can be generated in any
order or in another process and still reproduce the same stream.

Streams used per pair:

    SOURCE  axis (draws 0, 1) and branch (draw 2), disentangled model only
    WING_A  outcome of spin 1, consumes only (axis, branch, a)
    WING_B  outcome of spin 2, consumes only (axis, branch, b)
    JOINT   joint outcome pair, entangled model only
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .correlations import CoincidenceTable, MeasurementSetting, TableNorm
from .qlinalg import Direction

MASK64 = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class Stream(enum.IntEnum):
    SOURCE = 1
    WING_A = 2
    WING_B = 3
    JOINT = 4


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Stateless uniform generator keyed by (seed, pair_id, stream, draw)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        with np.errstate(over="ignore"):
            self._key = _splitmix64(np.array([self.seed], dtype=np.uint64))[0]

    def uniforms(self, pair_ids, stream: int, draw: int = 0) -> np.ndarray:
        ids = np.asarray(pair_ids, dtype=np.uint64)
        tag = np.uint64((int(stream) << 16) | int(draw))
        with np.errstate(over="ignore"):
            h = _splitmix64(ids ^ self._key)
            h = _splitmix64(h ^ tag)
        return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def uniform(self, pair_id: int, stream: int, draw: int = 0) -> float:
        return float(self.uniforms(np.array([pair_id]), stream, draw)[0])


# -- axis samplers -------------------------------------------------------------

def _isotropic(u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    z = 2.0 * u0 - 1.0
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = 2.0 * math.pi * u1
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _planar(u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    phi = 2.0 * math.pi * u0
    return np.column_stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)])


# Extension point: name -> f(u0, u1) -> (n, 3) unit vectors.
AXIS_SAMPLERS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "isotropic": _isotropic,
    "planar": _planar,
}


@dataclass(frozen=True)
class Sampler:
    kind: str
    axis: Optional[Direction] = None

    def __post_init__(self) -> None:
        if self.kind == "fixed":
            if self.axis is None:
                raise ValueError("fixed sampler needs an axis")
        elif self.kind not in AXIS_SAMPLERS:
            raise ValueError(f"unknown sampler {self.kind!r}")

    @classmethod
    def isotropic(cls) -> "Sampler":
        return cls("isotropic")

    @classmethod
    def planar(cls) -> "Sampler":
        return cls("planar")

    @classmethod
    def fixed(cls, axis: Direction) -> "Sampler":
        return cls("fixed", axis)

    @classmethod
    def parse(cls, text: str) -> "Sampler":
        """``isotropic``, ``planar`` or ``fixed:THETA,PHI`` (degrees)."""
        if text.startswith("fixed:"):
            theta, phi = (math.radians(float(v)) for v in text[len("fixed:"):].split(","))
            return cls.fixed(Direction.from_polar(theta, phi))
        return cls(text)

    def label(self) -> str:
        if self.kind == "fixed":
            return f"fixed:{math.degrees(self.axis.theta)!r},{math.degrees(self.axis.phi)!r}"
        return self.kind

    def axes(self, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
        if self.kind == "fixed":
            return np.tile(self.axis.as_array(), (len(u0), 1))
        return AXIS_SAMPLERS[self.kind](u0, u1)


def sample_axis(sampler: Sampler, rng: CounterRng, pair_ids) -> np.ndarray:
    ids = np.atleast_1d(np.asarray(pair_ids, dtype=np.uint64))
    return sampler.axes(rng.uniforms(ids, Stream.SOURCE, 0), rng.uniforms(ids, Stream.SOURCE, 1))


# -- events --------------------------------------------------------------------

class Model(enum.Enum):
    ENTANGLED = "entangled"
    DISENTANGLED = "disentangled"


@dataclass(frozen=True)
class RunConfig:
    n_pairs: int
    seed: int
    model: Model
    sampler: Sampler
    settings: MeasurementSetting

    def __post_init__(self) -> None:
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be at least 1")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class PairEvent:
    pair_id: int
    axis: tuple  # hidden; NaN for the entangled model
    branch: int  # hidden; sign carried by spin 1, 0 for the entangled model
    setting_a: Direction
    setting_b: Direction
    outcome_a: int
    outcome_b: int


@dataclass(frozen=True, eq=False)
class EventBatch:
    """Column-oriented block of events sharing one measurement setting."""

    pair_id: np.ndarray
    axis: np.ndarray
    branch: np.ndarray
    outcome_a: np.ndarray
    outcome_b: np.ndarray
    settings: MeasurementSetting

    def __len__(self) -> int:
        return len(self.pair_id)

    def __iter__(self) -> Iterator[PairEvent]:
        for i in range(len(self)):
            yield self.event(i)

    def event(self, i: int) -> PairEvent:
        return PairEvent(
            int(self.pair_id[i]),
            tuple(float(c) for c in self.axis[i]),
            int(self.branch[i]),
            self.settings.a,
            self.settings.b,
            int(self.outcome_a[i]),
            int(self.outcome_b[i]),
        )

    def replace(self, **cols) -> "EventBatch":
        d = dict(pair_id=self.pair_id, axis=self.axis, branch=self.branch,
                 outcome_a=self.outcome_a, outcome_b=self.outcome_b, settings=self.settings)
        d.update(cols)
        return EventBatch(**d)

    def take(self, mask) -> "EventBatch":
        return self.replace(pair_id=self.pair_id[mask], axis=self.axis[mask], branch=self.branch[mask],
                            outcome_a=self.outcome_a[mask], outcome_b=self.outcome_b[mask])


def local_outcomes(axis: np.ndarray, spin_sign: np.ndarray, setting: Direction, u: np.ndarray) -> np.ndarray:
    """Outcome of a spin with definite sign along ``axis`` measured along ``setting``.

    P(+1) = (1 + sign * setting.axis)/2. This is the whole measurement law of
    a detector; it is shared verbatim by the network detector.
    """
    proj = setting.x * axis[:, 0] + setting.y * axis[:, 1] + setting.z * axis[:, 2]
    p_up = 0.5 * (1.0 + spin_sign * proj)
    return np.where(u < p_up, 1, -1).astype(np.int8)


def source_draws(sampler: Sampler, rng: CounterRng, pair_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hidden (axis, branch) fixed at the source; branch is the sign of spin 1."""
    axis = sample_axis(sampler, rng, pair_ids)
    branch = np.where(rng.uniforms(pair_ids, Stream.SOURCE, 2) < 0.5, 1, -1).astype(np.int8)
    return axis, branch


def generate_events(config: RunConfig, start: int = 0, stop: Optional[int] = None) -> EventBatch:
    """Events for pair ids in [start, stop)."""
    stop = config.n_pairs if stop is None else stop
    ids = np.arange(start, stop, dtype=np.uint64)
    rng = CounterRng(config.seed)
    s = config.settings
    if config.model is Model.DISENTANGLED:
        axis, branch = source_draws(config.sampler, rng, ids)
        out_a = local_outcomes(axis, branch, s.a, rng.uniforms(ids, Stream.WING_A))
        out_b = local_outcomes(axis, -branch, s.b, rng.uniforms(ids, Stream.WING_B))
    else:
        c = s.cos_ab
        same, opp = 0.25 * (1 - c), 0.25 * (1 + c)
        u = rng.uniforms(ids, Stream.JOINT)
        # cumulative over (++, +-, -+, --)
        k = np.searchsorted(np.cumsum([same, opp, opp]), u, side="right")
        out_a = np.where(k < 2, 1, -1).astype(np.int8)
        out_b = np.where(k % 2 == 0, 1, -1).astype(np.int8)
        axis = np.full((len(ids), 3), np.nan)
        branch = np.zeros(len(ids), dtype=np.int8)
    return EventBatch(ids.astype(np.int64), axis, branch, out_a, out_b, s)


def generate_event(config: RunConfig, pair_id: int) -> PairEvent:
    return generate_events(config, pair_id, pair_id + 1).event(0)


# -- estimators ----------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n: int

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "Estimate":
        x = np.asarray(x, dtype=float)
        if len(x) < 2:
            raise ValueError(f"need at least two samples, got {len(x)}")
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))), len(x))

    @property
    def m2(self) -> float:
        return (self.std_error * math.sqrt(self.n)) ** 2 * (self.n - 1)

    def merge(self, other: "Estimate") -> "Estimate":
        """Combine two partial estimates (Chan et al. pairwise update)."""
        n = self.n + other.n
        delta = other.value - self.value
        mean = self.value + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Estimate(mean, math.sqrt(m2 / (n - 1)) / math.sqrt(n), n)

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.value - target) < k * self.std_error


def estimate_correlation(events: EventBatch) -> Estimate:
    if len(events) == 0:
        raise ValueError("cannot estimate a correlation from an empty event stream")
    prod = events.outcome_a.astype(np.int64) * events.outcome_b.astype(np.int64)
    return Estimate.from_samples(prod)


def empirical_table(outcome_a: np.ndarray, outcome_b: np.ndarray) -> CoincidenceTable:
    n = len(outcome_a)
    if n == 0:
        raise ValueError("no events")
    a, b = np.asarray(outcome_a) > 0, np.asarray(outcome_b) > 0
    counts = (np.sum(a & b), np.sum(a & ~b), np.sum(~a & b), np.sum(~a & ~b))
    return CoincidenceTable(*(float(c) / n for c in counts), normalization=TableNorm.PER_PAIRS)


def shuffle_pairs(events: EventBatch, rng: np.random.Generator) -> EventBatch:
    """Permute wing-B outcomes across pair ids, breaking the pairing."""
    if len(events) < 2:
        raise ValueError("need at least two events to shuffle")
    return events.replace(outcome_b=events.outcome_b[rng.permutation(len(events))])


def thin(events: EventBatch, keep: float, rng: np.random.Generator) -> EventBatch:
    """Keep each event independently with probability ``keep``.

    With ``keep`` = 1/4 the surviving count emulates the raw disentangled
    coincidence normalization for detection-rate studies.
    """
    return events.take(rng.random(len(events)) < keep)


def expected_correlation(config: RunConfig) -> float:
    """Outcome-level correlation the generator converges to."""
    s = config.settings
    if config.model is Model.ENTANGLED:
        return -s.cos_ab
    a, b = s.a.as_array(), s.b.as_array()
    if config.sampler.kind == "isotropic":
        return -float(a @ b) / 3
    if config.sampler.kind == "planar":
        return -float(a[0] * b[0] + a[1] * b[1]) / 2
    if config.sampler.kind == "fixed":
        p = config.sampler.axis.as_array()
        return -float(a @ p) * float(b @ p)
    raise ValueError(f"no closed form for sampler {config.sampler.kind!r}")


def run(config: RunConfig, chunk: int = 1 << 20) -> tuple[list[EventBatch], Estimate]:
    """Generate all events chunk-wise and merge the per-chunk estimates."""
    batches, est = [], None
    for start in range(0, config.n_pairs, chunk):
        batch = generate_events(config, start, min(config.n_pairs, start + chunk))
        batches.append(batch)
        if len(batch) >= 2:
            part = estimate_correlation(batch)
        else:
            part = Estimate(float(batch.outcome_a[0]) * float(batch.outcome_b[0]), 0.0, 1)
        est = part if est is None else est.merge(part)
    if est.n < 2:
        raise ValueError("need at least two pairs for an estimate")
    return batches, est
