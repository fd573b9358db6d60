"""Simulated on-line measurement.

Measurements are the ground truth disturbed by a slow sinusoidal phase
component plus white noise whose std shrinks with sample duration
(sigma_eff = sigma0 / sqrt(duration_ms)). Every measurement is addressed by
(seed, quantum, app, allocation, channel), so two managers profiling the
same thing observe the same value regardless of what else they measure.
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config_space import CoreConfig
from .workload import AppProfile, ground_truth

SAMPLE_COLUMNS = "app_id,config_index,duration_ms,bips,watts,latency_ms"


@dataclass
class Sample:
    """One measurement of one app at one allocation."""

    app_id: str
    config_index: int
    duration_ms: float
    bips: float
    watts: float
    latency_ms: float | None = None


@dataclass
class NoiseModel:
    sigma0: float = 0.04          # white std at 1 ms
    phase_amp: float = 0.08       # amplitude of the slow disturbance
    phase_period_ms: float = 8.0


@dataclass
class MeasureContext:
    """Addresses the randomness of one quantum's measurements."""

    seed: int
    quantum: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)

    def rng(self, app_id: str, config_index: int, channel: int) -> np.random.Generator:
        key = (self.seed, self.quantum, zlib.crc32(app_id.encode()), config_index, channel)
        return np.random.default_rng(np.random.SeedSequence(key))


def _phase_mean(t0: float, dur: float, phi: float, amp: float, period: float) -> float:
    """Average of 1 + amp*sin(2*pi*t/period + phi) over [t0, t0 + dur]."""
    if amp == 0.0:
        return 1.0
    w = 2 * math.pi / period
    return 1.0 + amp / (w * dur) * (math.cos(w * t0 + phi) - math.cos(w * (t0 + dur) + phi))


def _measure_channel(truth: float, rng: np.random.Generator, noise: NoiseModel,
                     t0: float, total_ms: float, replicates: int) -> float:
    """Mean of `replicates` sub-samples, one per period/replicates slot."""
    phi = rng.uniform(0.0, 2 * math.pi)
    sub = total_ms / replicates
    sigma = noise.sigma0 / math.sqrt(sub)
    spacing = noise.phase_period_ms / replicates
    acc = 0.0
    for r in range(replicates):
        phase = _phase_mean(t0 + r * spacing, sub, phi, noise.phase_amp,
                            noise.phase_period_ms)
        white = math.exp(sigma * rng.standard_normal() - 0.5 * sigma * sigma)
        acc += phase * white
    return truth * acc / replicates


def measure(profile: AppProfile, index: int, duration_ms: float,
            ctx: MeasureContext, *, load: float | None = None,
            t0_ms: float = 0.0, replicates: int = 1) -> Sample:
    """Measure one app at one allocation for duration_ms total."""
    if duration_ms <= 0:
        raise ValueError("duration must be positive")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    gt = ground_truth(profile, index, load)
    bips = _measure_channel(gt.bips, ctx.rng(profile.app_id, index, 0), ctx.noise,
                            t0_ms, duration_ms, replicates)
    watts = _measure_channel(gt.watts, ctx.rng(profile.app_id, index, 1), ctx.noise,
                             t0_ms, duration_ms, replicates)
    lat = None
    if gt.latency_ms is not None:
        lat = _measure_channel(gt.latency_ms, ctx.rng(profile.app_id, index, 2),
                               ctx.noise, t0_ms, duration_ms, replicates)
    return Sample(profile.app_id, index, duration_ms, bips, watts, lat)


def replicated_sample(profile: AppProfile, index: int, total_ms: float,
                      replicates: int, ctx: MeasureContext, *,
                      load: float | None = None, t0_ms: float = 0.0) -> Sample:
    """Split total_ms into `replicates` interleaved sub-samples and average.

    Interleaving spreads the sub-samples across one disturbance period, so
    the slow component integrates out while the white-noise variance of the
    mean matches a contiguous sample of the same total duration.
    """
    return measure(profile, index, total_ms, ctx, load=load, t0_ms=t0_ms,
                   replicates=replicates)


def profile_pair(apps: Sequence[AppProfile], space, ctx: MeasureContext, *,
                 load: float | None = None, sample_ms: float = 1.0,
                 t0_ms: float = 0.0) -> list[Sample]:
    """Two-point profiling: widest and narrowest core config at 1 LLC way.

    Half the apps sample the widest config during the first slot while the
    other half samples the narrowest, then the halves swap, so the machine
    never runs every core at the widest config at once. Returns two samples
    per app, in time order per app.
    """
    if len(apps) < 2:
        raise ValueError("paired profiling needs at least 2 apps")
    one_way = space.cache_index_of(1.0)
    hi = space.encode(space.widest, one_way)
    lo = space.encode(space.narrowest, one_way)
    split = (len(apps) + 1) // 2
    out = []
    for i, app in enumerate(apps):
        first, second = (hi, lo) if i < split else (lo, hi)
        out.append(measure(app, first, sample_ms, ctx, load=load, t0_ms=t0_ms))
        out.append(measure(app, second, sample_ms, ctx, load=load,
                           t0_ms=t0_ms + sample_ms))
    return out


@dataclass
class SamplingDesign:
    """A small set of core configs to measure, with their level codes."""

    levels: tuple[int, ...]
    coded: list[tuple[int, int, int]]
    runs: list[CoreConfig]


def three_mm3_design(levels: Sequence[int] = (2, 4, 6)) -> SamplingDesign:
    """Balanced 9-run design: level triples whose sum is divisible by 3.

    Covers all 9 level pairs for every factor pair once, uses each level
    exactly 3 times per factor, and includes the all-top triple.
    """
    if len(levels) != 3:
        raise ValueError("design needs exactly 3 width levels")
    lv = tuple(sorted(levels))
    coded = [t for t in itertools.product(range(3), repeat=3) if sum(t) % 3 == 0]
    runs = [CoreConfig(lv[a], lv[b], lv[c]) for a, b, c in coded]
    return SamplingDesign(levels=lv, coded=coded, runs=runs)


def samples_to_csv(samples: Sequence[Sample], path: str | Path,
                   header_comment: str | None = None) -> None:
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append(SAMPLE_COLUMNS)
    for s in samples:
        lat = "" if s.latency_ms is None else repr(float(s.latency_ms))
        lines.append(",".join([
            s.app_id, str(s.config_index), repr(float(s.duration_ms)),
            repr(float(s.bips)), repr(float(s.watts)), lat,
        ]))
    Path(path).write_text("\n".join(lines) + "\n")
