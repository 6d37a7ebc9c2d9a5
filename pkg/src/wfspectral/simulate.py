"""Discrete Wright-Fisher chain (multinomial resampling) Monte Carlo.

Replicates are simulated in fixed-size blocks.  Block ``b`` draws from a
PCG64 generator seeded with ``SeedSequence((base_seed, b))``; since the block
partition depends only on the configuration, results do not depend on how
many workers run the blocks or in which order.  Each generation is drawn as
a sequence of conditional binomials, vectorised across the replicates of a
block.  Times are reported in diffusion units ``t = generation / 2N``.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class SimConfig:
    initial_counts: tuple[int, ...]
    max_generations: int
    replicates: int
    base_seed: int = 0
    het_times: tuple[float, ...] = ()
    block_size: int = 4096

    def __post_init__(self):
        counts = tuple(int(c) for c in self.initial_counts)
        object.__setattr__(self, "initial_counts", counts)
        object.__setattr__(self, "het_times", tuple(float(t) for t in self.het_times))
        if len(counts) < 2:
            raise ValueError("at least two alleles are required")
        if any(c < 0 for c in counts) or sum(counts) < 1:
            raise ValueError("counts must be non-negative with a positive total")
        if self.replicates < 1 or self.max_generations < 1 or self.block_size < 1:
            raise ValueError("replicates, max_generations and block_size must be positive")
        if any(t < 0 for t in self.het_times):
            raise ValueError("heterozygosity sample times must be non-negative")

    @classmethod
    def from_frequencies(cls, p: Sequence, pop_size: int, **kwargs) -> "SimConfig":
        """Counts ``p * 2N`` rounded by largest remainder (ties to the lower allele index)."""
        exact = [Fraction(str(v)) * pop_size for v in p]
        if sum(exact) != pop_size:
            raise ValueError("frequencies must sum to 1")
        counts = [math.floor(c) for c in exact]
        short = pop_size - sum(counts)
        order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - counts[i]), i))
        for i in order[:short]:
            counts[i] += 1
        return cls(tuple(counts), **kwargs)

    @property
    def pop_size(self) -> int:
        """Number of genes 2N."""
        return sum(self.initial_counts)

    @property
    def allele_count(self) -> int:
        return len(self.initial_counts)

    @property
    def het_generations(self) -> tuple[int, ...]:
        return tuple(int(round(t * self.pop_size)) for t in self.het_times)

    def block_count(self) -> int:
        return -(-self.replicates // self.block_size)


@dataclass
class ChainState:
    counts: tuple[int, ...]
    generation: int = 0

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.counts) if c > 0)


def block_rng(base_seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(base_seed), int(block)))))


def resample(counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One multinomial generation for each row of ``counts`` via conditional binomials."""
    counts = np.asarray(counts, dtype=np.int64)
    total = counts.sum(axis=1)
    out = np.empty_like(counts)
    remaining = total.copy()
    mass = total.copy()
    for j in range(counts.shape[1] - 1):
        c = counts[:, j]
        prob = np.divide(c, mass, out=np.zeros(len(c), dtype=float), where=mass > 0)
        np.clip(prob, 0.0, 1.0, out=prob)
        draw = rng.binomial(remaining, prob)
        out[:, j] = draw
        remaining -= draw
        mass -= c
    out[:, -1] = remaining
    return out


def step(state: ChainState, rng: np.random.Generator) -> ChainState:
    """Next generation of a single chain; a fixed population is absorbing."""
    if len(state.support) <= 1:
        return ChainState(state.counts, state.generation + 1)
    nxt = resample(np.array([state.counts], dtype=np.int64), rng)[0]
    return ChainState(tuple(int(c) for c in nxt), state.generation + 1)


@dataclass
class ReplicateSummary:
    index: int
    allele_count: int
    loss_times: dict[int, float] = field(default_factory=dict)
    hitting_faces: dict[int, tuple[int, ...]] = field(default_factory=dict)
    fixed_allele: int | None = None
    heterozygosity: tuple[float, ...] = ()
    censored: bool = False

    def to_row(self) -> dict[str, str]:
        allele_count = self.allele_count
        row = {"replicate": str(self.index), "censored": str(int(self.censored))}
        row["fixed_allele"] = "" if self.fixed_allele is None else str(self.fixed_allele)
        for level in range(allele_count - 1, 0, -1):
            t = self.loss_times.get(level)
            row[f"t_le_{level}"] = "" if t is None else repr(t)
            face = self.hitting_faces.get(level)
            row[f"face_le_{level}"] = "" if face is None else "[" + ",".join(map(str, face)) + "]"
        for i, h in enumerate(self.heterozygosity):
            row[f"het_{i}"] = repr(h)
        return row


def _mask_to_alleles(mask: int, allele_count: int) -> tuple[int, ...]:
    return tuple(i for i in range(allele_count) if mask >> i & 1)


def simulate_block(config: SimConfig, block: int) -> list[ReplicateSummary]:
    start = block * config.block_size
    size = min(config.block_size, config.replicates - start)
    if size <= 0:
        raise IndexError(f"block {block} is empty")
    rng = block_rng(config.base_seed, block)
    A = config.allele_count
    two_n = config.pop_size
    counts = np.tile(np.array(config.initial_counts, dtype=np.int64), (size, 1))
    bits = (1 << np.arange(A, dtype=np.int64))
    loss_gen = np.full((size, A), -1, dtype=np.int64)
    loss_mask = np.zeros((size, A), dtype=np.int64)
    het_gens = config.het_generations
    het = np.zeros((size, len(het_gens)), dtype=float)
    het_scale = math.factorial(A) / float(two_n) ** A

    def record(rows: np.ndarray, sub: np.ndarray, gen: int) -> None:
        present = sub > 0
        support = present.sum(axis=1)
        mask = (present * bits).sum(axis=1)
        for level in range(1, A):
            new = (support <= level) & (loss_gen[rows, level] < 0)
            if new.any():
                loss_gen[rows[new], level] = gen
                loss_mask[rows[new], level] = mask[new]

    def sample_het(gen: int) -> None:
        for s, g in enumerate(het_gens):
            if g == gen:
                het[:, s] = het_scale * np.prod(counts.astype(float), axis=1)

    all_rows = np.arange(size)
    record(all_rows, counts, 0)
    sample_het(0)
    last_het = max(het_gens, default=0)
    gen = 0
    alive = all_rows[(counts > 0).sum(axis=1) > 1]
    while gen < config.max_generations and (alive.size or gen < last_het):
        gen += 1
        if alive.size:
            counts[alive] = resample(counts[alive], rng)
            record(alive, counts[alive], gen)
            alive = alive[(counts[alive] > 0).sum(axis=1) > 1]
        sample_het(gen)

    out = []
    for r in range(size):
        s = ReplicateSummary(start + r, A)
        for level in range(1, A):
            g = int(loss_gen[r, level])
            if g >= 0:
                s.loss_times[level] = g / two_n
                s.hitting_faces[level] = _mask_to_alleles(int(loss_mask[r, level]), A)
        support = np.flatnonzero(counts[r])
        s.fixed_allele = int(support[0]) if support.size == 1 else None
        s.censored = support.size > 1
        s.heterozygosity = tuple(float(v) for v in het[r])
        out.append(s)
    return out


def run_replicate(config: SimConfig, replicate_index: int) -> ReplicateSummary:
    """The summary of one replicate (simulates the block containing it)."""
    if not 0 <= replicate_index < config.replicates:
        raise IndexError("replicate index out of range")
    block, offset = divmod(replicate_index, config.block_size)
    return simulate_block(config, block)[offset]


def run_replicates(config: SimConfig, workers: int = 1) -> list[ReplicateSummary]:
    """All replicates, ordered by index; independent of ``workers``."""
    blocks = range(config.block_count())
    if workers <= 1:
        parts = [simulate_block(config, b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: simulate_block(config, b), blocks))
    return [s for part in parts for s in part]


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass
class Proportion:
    count: int
    trials: int

    @property
    def estimate(self) -> float:
        return self.count / self.trials if self.trials else float("nan")

    @property
    def stderr(self) -> float:
        if self.trials < 2:
            return float("inf")
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.trials)

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.count, self.trials)

    def zscore(self, expected: float) -> float:
        # binomial standard error under the expected value avoids 0/0 at p-hat = 0 or 1
        if self.trials == 0:
            return float("nan")
        se = math.sqrt(expected * (1 - expected) / self.trials)
        return (self.estimate - expected) / se if se > 0 else float("inf")


@dataclass
class MeanEstimate:
    mean: float
    stderr: float
    variance: float
    second_moment: float
    samples: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "MeanEstimate":
        x = np.asarray(values, dtype=float)
        n = x.size
        if n == 0:
            nan = float("nan")
            return cls(nan, nan, nan, nan, 0)
        mean = float(x.mean())
        if n < 2:
            var = float("nan")
        elif x.min() == x.max():
            var = 0.0
        else:
            var = float(x.var(ddof=1))
        se = math.sqrt(var / n) if n > 1 else float("inf")
        return cls(mean, se, var, float(np.mean(x * x)), n)

    @property
    def interval(self) -> tuple[float, float]:
        h = 1.959963984540054 * self.stderr
        return (self.mean - h, self.mean + h)


@dataclass
class StatReport:
    allele_count: int
    replicates: int
    censored: int
    fixation: dict[int, Proportion]
    hitting: dict[int, dict[tuple[int, ...], Proportion]]
    loss_times: dict[int, MeanEstimate]
    het_times: tuple[float, ...]
    het_curve: list[MeanEstimate]
    het_slope: float | None = None
    het_slope_stderr: float | None = None

    @property
    def single_replicate(self) -> bool:
        return self.replicates == 1

    def rows(self) -> list[tuple[str, str, str, float, float, float, float, int]]:
        """Flat table: (quantity, key, level/time, estimate, stderr, ci_low, ci_high, n)."""
        out = []
        for i, prop in sorted(self.fixation.items()):
            lo, hi = prop.interval
            out.append(("fixation", str(i), "", prop.estimate, prop.stderr, lo, hi, prop.trials))
        for level, faces in sorted(self.hitting.items()):
            for face, prop in sorted(faces.items()):
                lo, hi = prop.interval
                key = "[" + ",".join(map(str, face)) + "]"
                out.append(("hitting_face", key, str(level), prop.estimate, prop.stderr, lo, hi, prop.trials))
        for level, est in sorted(self.loss_times.items()):
            lo, hi = est.interval
            out.append(("loss_time_mean", "", str(level), est.mean, est.stderr, lo, hi, est.samples))
            out.append(("loss_time_variance", "", str(level), est.variance, float("nan"),
                        float("nan"), float("nan"), est.samples))
        for t, est in zip(self.het_times, self.het_curve):
            lo, hi = est.interval
            out.append(("heterozygosity", "", repr(t), est.mean, est.stderr, lo, hi, est.samples))
        if self.het_slope is not None:
            h = 1.959963984540054 * self.het_slope_stderr
            out.append(("het_log_slope", "", "", self.het_slope, self.het_slope_stderr,
                        self.het_slope - h, self.het_slope + h, self.replicates))
        return out


def _log_slope(times: Sequence[float], samples: np.ndarray) -> tuple[float, float] | None:
    """OLS slope of ``log mean H(t)`` with a delta-method SE that keeps time correlations."""
    means = samples.mean(axis=0)
    keep = [i for i, m in enumerate(means) if m > 0]
    if len(keep) < 2 or samples.shape[0] < 2:
        return None
    t = np.asarray(times, dtype=float)[keep]
    m = means[keep]
    tc = t - t.mean()
    c = tc / np.dot(tc, tc)
    slope = float(np.dot(c, np.log(m)))
    influence = ((samples[:, keep] - m) / m) @ c
    se = float(influence.std(ddof=1) / math.sqrt(samples.shape[0]))
    return slope, se


def aggregate(summaries: Sequence[ReplicateSummary], het_times: Sequence[float] = ()) -> StatReport:
    """Reduce replicate summaries (in index order) to estimates with intervals."""
    if not summaries:
        raise ValueError("no replicates to aggregate")
    summaries = sorted(summaries, key=lambda s: s.index)
    finished = [s for s in summaries if not s.censored]
    if not finished:
        raise ValueError("every replicate is censored")
    allele_count = summaries[0].allele_count
    fixed = Counter(s.fixed_allele for s in finished)
    fixation = {i: Proportion(fixed.get(i, 0), len(finished)) for i in range(allele_count)}
    hitting = {}
    loss_times = {}
    for level in range(1, allele_count):
        reached = [s for s in summaries if level in s.hitting_faces]
        tally = Counter(s.hitting_faces[level] for s in reached)
        hitting[level] = {face: Proportion(c, len(reached)) for face, c in tally.items()}
        loss_times[level] = MeanEstimate.of([s.loss_times[level] for s in reached])
    het_times = tuple(het_times)
    curve = []
    slope = se = None
    if het_times:
        samples = np.array([s.heterozygosity for s in summaries], dtype=float)
        curve = [MeanEstimate.of(samples[:, i]) for i in range(len(het_times))]
        fit = _log_slope(het_times, samples)
        if fit is not None:
            slope, se = fit
    return StatReport(
        allele_count=allele_count,
        replicates=len(summaries),
        censored=len(summaries) - len(finished),
        fixation=fixation,
        hitting=hitting,
        loss_times=loss_times,
        het_times=het_times,
        het_curve=curve,
        het_slope=slope,
        het_slope_stderr=se,
    )


def simulate(config: SimConfig, workers: int = 1) -> tuple[list[ReplicateSummary], StatReport]:
    summaries = run_replicates(config, workers)
    return summaries, aggregate(summaries, config.het_times)
