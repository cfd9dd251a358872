"""Stochastic localization dynamics on discrete configurations.

Hits arrive as a Poisson process and softly localize one subsystem at a
time: the localization operator keeps amplitudes whose subsystem sits at
the selected value and scales every other amplitude by the tail factor t,
so no branch is ever removed outright (t > 0).  For a two-valued
subsystem the operators are L_in = diag(1, t) and L_out = diag(t, 1);
since L_in^2 + L_out^2 = (1 + t^2) I, selecting value s with probability
||L_s psi||^2 / (1 + t^2) preserves every configuration probability in
expectation, exactly.  A pointer subsystem with m possible values uses
the same construction with normalizer 1 + (m - 1) t^2.

Subsystem indexing on a coupled state: 0..n-1 are marbles, n..2n-1 the
per-marble registers, 2n the pointer.  Uncoupled states expose only the
n marbles.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .state import (
    Configuration,
    MarbleCoeffs,
    Site,
    WaveFunction,
    make_wavefunction,
    unpack_configuration,
)

DEFAULT_LAMBDA_PARTICLE = 1e-16
DEFAULT_CONSTITUENTS = 1e21
DEFAULT_MAX_COLLAPSE_DURATION = 1e-3


@dataclass(frozen=True)
class HitParams:
    """Tail factor plus the rate bookkeeping for one macroscopic system."""

    t: float
    lambda_particle: float = DEFAULT_LAMBDA_PARTICLE
    constituents_per_system: float = DEFAULT_CONSTITUENTS

    def __post_init__(self) -> None:
        if not 0.0 <= self.t < 1.0:
            raise ValueError(f"tail factor t = {self.t} outside [0, 1)")
        if self.lambda_particle < 0.0 or self.constituents_per_system < 0.0:
            raise ValueError("rates must be non-negative")

    @property
    def effective_rate(self) -> float:
        """Hits per second per macroscopic subsystem."""
        return self.lambda_particle * self.constituents_per_system


@dataclass(frozen=True)
class HitEvent:
    time: float
    subsystem: int
    selected_site: int


@dataclass(frozen=True)
class Trajectory:
    """One stochastic realization: ordered events plus the final state."""

    events: tuple[HitEvent, ...]
    final_state: WaveFunction
    states: tuple[WaveFunction, ...] | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        times = [e.time for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")
        if self.states is not None and len(self.states) != len(self.events):
            raise ValueError("one snapshot per event when recording states")


def subsystem_count(wf: WaveFunction) -> int:
    """Marbles, plus registers and pointer on a coupled state."""
    return 2 * wf.n + 1 if wf.coupled else wf.n


def _pointer_index(wf: WaveFunction) -> int:
    return 2 * wf.n


def _outcome_count(wf: WaveFunction, subsystem: int) -> int:
    if wf.coupled and subsystem == _pointer_index(wf):
        return wf.n + 1
    return 2


def _subsystem_value(key: int, subsystem: int, wf: WaveFunction) -> int:
    if wf.coupled and subsystem == _pointer_index(wf):
        return key >> (2 * wf.n)
    return (key >> subsystem) & 1


def _check_subsystem(wf: WaveFunction, subsystem: int) -> None:
    count = subsystem_count(wf)
    if not 0 <= subsystem < count:
        raise ValueError(
            f"subsystem {subsystem} out of range for {count} localizable subsystems"
        )


def _outcome_weights(wf: WaveFunction, subsystem: int, t: float) -> list[float]:
    """||L_v psi||^2 for each value v of the subsystem."""
    m = _outcome_count(wf, subsystem)
    masses = [0.0] * m
    for key, amp in wf.amplitudes.items():
        masses[_subsystem_value(key, subsystem, wf)] += (
            amp.real * amp.real + amp.imag * amp.imag
        )
    t2 = t * t
    return [mass + t2 * (1.0 - mass) for mass in masses]


def hit_probabilities(wf: WaveFunction, subsystem: int, params: HitParams) -> list[float]:
    """Selection probability of each subsystem value under one hit."""
    _check_subsystem(wf, subsystem)
    weights = _outcome_weights(wf, subsystem, params.t)
    normalizer = 1.0 + (len(weights) - 1) * params.t * params.t
    return [w / normalizer for w in weights]


def _apply_selected(
    wf: WaveFunction, subsystem: int, value: int, t: float
) -> WaveFunction:
    amps = {}
    for key, amp in wf.amplitudes.items():
        scaled = amp if _subsystem_value(key, subsystem, wf) == value else amp * t
        if scaled != 0:
            amps[key] = scaled
    return make_wavefunction(wf.n, amps, coupled=wf.coupled, renormalize=True)


def hit_outcomes(
    wf: WaveFunction, subsystem: int, params: HitParams
) -> tuple[tuple[int, float, WaveFunction], ...]:
    """Every possible (value, probability, post-state) of one hit.

    Zero-probability outcomes are omitted; the probabilities of the
    returned outcomes sum to 1.
    """
    probs = hit_probabilities(wf, subsystem, params)
    return tuple(
        (value, p, _apply_selected(wf, subsystem, value, params.t))
        for value, p in enumerate(probs)
        if p > 0.0
    )


def _select(probs: list[float], u: float) -> int:
    acc = 0.0
    chosen = 0
    for value, p in enumerate(probs):
        if p <= 0.0:
            continue
        acc += p
        chosen = value
        if u < acc:
            break
    return chosen


def hit(
    wf: WaveFunction, subsystem: int, params: HitParams, rng: np.random.Generator
) -> tuple[WaveFunction, int]:
    """Apply one stochastic localization to the given subsystem."""
    probs = hit_probabilities(wf, subsystem, params)
    value = _select(probs, float(rng.random()))
    return _apply_selected(wf, subsystem, value, params.t), value


def event_schedule(
    rng: np.random.Generator, n_subsystems: int, rate: float, duration: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merged-process hit schedule: times, subsystems, outcome uniforms.

    One Poisson process at rate*n_subsystems with uniform subsystem
    assignment, statistically identical to independent per-subsystem
    streams.  Sorted uniform arrival times are nudged by one ulp in the
    measure-zero case of an exact tie so times are strictly increasing.
    """
    if duration < 0.0:
        raise ValueError("duration must be non-negative")
    total = rate * n_subsystems * duration
    count = int(rng.poisson(total)) if total > 0.0 else 0
    times = np.sort(rng.random(count) * duration)
    if count > 1 and (np.diff(times) <= 0.0).any():
        for j in range(1, count):
            if times[j] <= times[j - 1]:
                times[j] = np.nextafter(times[j - 1], np.inf)
    subsystems = rng.integers(0, n_subsystems, size=count)
    outcome_uniforms = rng.random(count)
    return times, subsystems, outcome_uniforms


def evolve(
    wf: WaveFunction,
    duration: float,
    params: HitParams,
    rng: np.random.Generator,
    *,
    record_states: bool = False,
    seed: int | None = None,
) -> Trajectory:
    """Run the hit process for the given duration (seconds).

    Snapshots, when recorded, are the post-hit states, one per event.
    """
    n_sub = subsystem_count(wf)
    times, subsystems, uniforms = event_schedule(
        rng, n_sub, params.effective_rate, duration
    )
    events = []
    snapshots = [] if record_states else None
    state = wf
    for time, subsystem, u in zip(times, subsystems, uniforms):
        probs = hit_probabilities(state, int(subsystem), params)
        value = _select(probs, float(u))
        state = _apply_selected(state, int(subsystem), value, params.t)
        events.append(HitEvent(float(time), int(subsystem), value))
        if snapshots is not None:
            snapshots.append(state)
    return Trajectory(
        tuple(events),
        state,
        tuple(snapshots) if snapshots is not None else None,
        seed,
    )


def dominant_config(wf: WaveFunction) -> tuple[Configuration, float]:
    """Configuration of maximal probability; ties go to the lowest key."""
    best_key = -1
    best_prob = -1.0
    for key, amp in wf.amplitudes.items():
        prob = amp.real * amp.real + amp.imag * amp.imag
        if prob > best_prob or (prob == best_prob and key < best_key):
            best_key, best_prob = key, prob
    return unpack_configuration(best_key, wf.n, coupled=wf.coupled), best_prob


def collapsed(wf: WaveFunction, delta: float) -> bool:
    """True when a single configuration carries at least 1 - delta."""
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta = {delta} outside [0, 1)")
    return dominant_config(wf)[1] >= 1.0 - delta


def collapse_time(
    wf: WaveFunction,
    params: HitParams,
    delta: float,
    rng: np.random.Generator,
    *,
    max_duration: float = DEFAULT_MAX_COLLAPSE_DURATION,
) -> float | None:
    """First event time at which a fresh trajectory satisfies collapsed().

    Returns 0.0 for an already-collapsed input and None when the state
    has not collapsed after max_duration (the non-termination guard).
    """
    if params.effective_rate <= 0.0:
        raise ValueError("effective rate must be positive")
    if collapsed(wf, delta):
        return 0.0
    n_sub = subsystem_count(wf)
    times, subsystems, uniforms = event_schedule(
        rng, n_sub, params.effective_rate, max_duration
    )
    state = wf
    for time, subsystem, u in zip(times, subsystems, uniforms):
        probs = hit_probabilities(state, int(subsystem), params)
        value = _select(probs, float(u))
        state = _apply_selected(state, int(subsystem), value, params.t)
        if collapsed(state, delta):
            return float(time)
    return None


SEED_SCHEME = "numpy SeedSequence(master_seed, spawn_key=(trial_index,))"


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent per-trial generator; order-independent by construction."""
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(trial_index,))
    )


@dataclass(frozen=True)
class EnsembleReport:
    """Aggregate collapse statistics over independent trajectories."""

    n: int
    t: float
    duration_s: float
    delta: float
    trials: int
    collapsed_trials: int
    uncollapsed_trials: int
    collapse_time_median: float | None
    collapse_time_p90: float | None
    mean_events_per_trial: float
    final_dominant_counts: tuple[tuple[int, int], ...]
    master_seed: int
    seed_scheme: str = field(default=SEED_SCHEME)
    trial_digest: str = ""

    def __post_init__(self) -> None:
        if self.collapsed_trials + self.uncollapsed_trials != self.trials:
            raise ValueError("collapse buckets must partition the trials")

    def dominant_fraction(self, key: int) -> float:
        """Fraction of trajectories whose final dominant configuration is key."""
        for k, count in self.final_dominant_counts:
            if k == key:
                return count / self.trials
        return 0.0


def _digest(records: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(records).tobytes()).hexdigest()


def _quantiles(times: list[float]) -> tuple[float | None, float | None]:
    if not times:
        return None, None
    arr = np.sort(np.asarray(times))
    return (
        float(np.quantile(arr, 0.5)),
        float(np.quantile(arr, 0.9)),
    )


def run_ensemble(
    coeffs: MarbleCoeffs,
    n: int,
    duration: float,
    params: HitParams,
    delta: float,
    trials: int,
    master_seed: int,
    *,
    threads: int | None = None,
) -> EnsembleReport:
    """Evolve `trials` independent trajectories of the n-marble product state.

    Each trial draws its own RNG from the master seed, so the report is
    reproducible bit for bit and independent of thread scheduling.  The
    product form is preserved by every hit, which is what makes large n
    and large ensembles affordable.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 1 <= n <= 62:
        raise ValueError("n must be in 1..62 (site patterns are packed into int64)")
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta = {delta} outside [0, 1)")
    rate = params.effective_rate
    w_in0 = coeffs.in_probability
    w_out0 = coeffs.out_probability

    def run_one(trial: int) -> tuple[int, float, int, float, int]:
        rng = trial_rng(master_seed, trial)
        times, subsystems, uniforms = event_schedule(rng, n, rate, duration)
        w_in = np.full(n, w_in0)
        w_out = np.full(n, w_out0)
        selections = np.empty(len(times), dtype=np.int64)
        idx, mask, dom_prob = _kernel.product_trial(
            w_in, w_out, params.t, delta, subsystems, uniforms, selections
        )
        if idx == -2:
            time = 0.0
        elif idx >= 0:
            time = float(times[idx])
        else:
            time = math.nan
        return int(idx), time, int(mask), float(dom_prob), len(times)

    workers = threads if threads and threads > 0 else 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, range(trials)))
    else:
        results = [run_one(trial) for trial in range(trials)]

    collapse_times = [time for _, time, _, _, _ in results if not math.isnan(time)]
    counts: dict[int, int] = {}
    for _, _, mask, _, _ in results:
        counts[mask] = counts.get(mask, 0) + 1
    median, p90 = _quantiles(collapse_times)
    records = np.array(
        [(idx, time, mask, dom_prob) for idx, time, mask, dom_prob, _ in results],
        dtype=np.float64,
    )
    return EnsembleReport(
        n=n,
        t=params.t,
        duration_s=duration,
        delta=delta,
        trials=trials,
        collapsed_trials=len(collapse_times),
        uncollapsed_trials=trials - len(collapse_times),
        collapse_time_median=median,
        collapse_time_p90=p90,
        mean_events_per_trial=float(
            np.mean([events for *_, events in results])
        ),
        final_dominant_counts=tuple(sorted(counts.items())),
        master_seed=master_seed,
        trial_digest=_digest(records),
    )
