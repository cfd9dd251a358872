"""Register-coupled counting experiment and its anomaly bookkeeping.

Coupling attaches one two-valued register per marble (always mirroring
the marble on the support) and one pointer apparatus recording the total
number of IN marbles.  A perfect coupling maps each marble branch to a
single consistent record; an imperfect one leaks amplitude weight eta to
pointer readings displaced by one, which is the minimal model of a
counting measurement error.

The experiment drives the coupled state through stochastic localization
and asks, per trajectory: do the individual registers agree with the
pointer, and does the collapsed state still exhibit the conjunction
anomaly?  Registers, pointer, and marbles are all hit at the same
effective rate; nothing is exempt from the dynamics.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .fuzzylink import (
    AnomalyReport,
    FuzzyParams,
    product_enumeration_report,
    report_from_masses,
)
from .grw import SEED_SCHEME, HitParams, event_schedule, trial_rng
from .state import (
    Configuration,
    MarbleCoeffs,
    Site,
    WaveFunction,
    make_wavefunction,
)


@dataclass(frozen=True)
class CouplingSpec:
    """Perfect record-keeping, or a pointer that misfires with weight eta."""

    perfect: bool = True
    eta: float = 0.0

    def __post_init__(self) -> None:
        if self.perfect and self.eta != 0.0:
            raise ValueError("perfect coupling has no pointer error weight")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError(f"eta = {self.eta} outside [0, 1)")

    @classmethod
    def imperfect(cls, eta: float) -> "CouplingSpec":
        return cls(perfect=False, eta=eta)


def pointer_row(n: int, c: int, spec: CouplingSpec) -> tuple[tuple[int, float], ...]:
    """Squared pointer weights for a branch with c marbles out.

    The branch has n - c marbles in, so the faithful pointer value is
    n - c.  Imperfect coupling moves weight eta, split evenly, onto the
    two neighboring values; displacements that fall outside 0..n are
    clipped (the lost weight is restored by the global renormalization
    in couple()).  Rows are intentionally not normalized so dense and
    factorized evolutions share one kernel.
    """
    faithful = n - c
    if spec.perfect or spec.eta == 0.0:
        return ((faithful, 1.0),)
    entries = [(faithful, 1.0 - spec.eta)]
    for displaced in (faithful - 1, faithful + 1):
        if 0 <= displaced <= n:
            entries.append((displaced, spec.eta / 2.0))
    return tuple(entries)


def pointer_weight_matrix(n: int, spec: CouplingSpec) -> np.ndarray:
    """Dense pointer kernel, indexed [marble out-count, pointer value]."""
    if n < 1:
        raise ValueError("need at least one marble")
    weights = np.zeros((n + 1, n + 1))
    for c in range(n + 1):
        for pointer, w in pointer_row(n, c, spec):
            weights[c, pointer] = w
    return weights


def couple(wf: WaveFunction, spec: CouplingSpec) -> WaveFunction:
    """Attach registers and pointer to a marbles-only state.

    Each marble configuration maps to the branch whose registers repeat
    its sites and whose pointer records the IN count, weighted by the
    coupling kernel; amplitudes are otherwise unchanged (positive square
    roots of the pointer weights, then one global renormalization).
    """
    if wf.coupled:
        raise ValueError("state already carries registers and pointer")
    n = wf.n
    amps: dict[int, complex] = {}
    for key, amp in wf.amplitudes.items():
        base = key | key << n
        for pointer, w in pointer_row(n, key.bit_count(), spec):
            amps[base | pointer << 2 * n] = amp * math.sqrt(w)
    return make_wavefunction(n, amps, coupled=True, renormalize=True)


def consistent(config: Configuration) -> bool:
    """True when registers repeat the marble sites and the pointer counts them."""
    if config.register_readings is None or config.pointer is None:
        raise ValueError("configuration has no registers to check")
    if config.register_readings != config.marble_sites:
        return False
    in_count = sum(1 for s in config.marble_sites if s == Site.IN)
    return config.pointer == in_count


def _out_class_weight(n: int, c: int, in_sq: float, out_sq: float) -> float:
    """C(n, c) * in_sq^(n-c) * out_sq^c, safe against underflow at any n.

    Classes whose weight falls below the double range come back as 0.0
    and are treated as absent from the support.
    """
    if (c > 0 and out_sq == 0.0) or (c < n and in_sq == 0.0):
        return 0.0
    log_w = (
        math.lgamma(n + 1)
        - math.lgamma(c + 1)
        - math.lgamma(n - c + 1)
        + (n - c) * (math.log(in_sq) if c < n else 0.0)
        + c * (math.log(out_sq) if c > 0 else 0.0)
    )
    return math.exp(log_w) if log_w >= -745.0 else 0.0


def coupled_branch_weights(
    coeffs: MarbleCoeffs, n: int, spec: CouplingSpec
) -> dict[tuple[int, int], float]:
    """Squared branch weights {(out-count, pointer): weight} of the coupled state.

    Works for any n by summing the weight of each out-count class
    against the pointer kernel, so consistency and miscount statements
    can be checked far beyond the dense regime.
    """
    branch: dict[tuple[int, int], float] = {}
    for c in range(n + 1):
        class_weight = _out_class_weight(
            n, c, coeffs.in_probability, coeffs.out_probability
        )
        if class_weight <= 0.0:
            continue
        for pointer, w in pointer_row(n, c, spec):
            branch[(c, pointer)] = class_weight * w
    total = math.fsum(branch.values())
    if total <= 0.0:
        raise ValueError("coupled state has no weight")
    return {key: w / total for key, w in branch.items()}


def branch_miscount_probability(
    coeffs: MarbleCoeffs, n: int, spec: CouplingSpec
) -> float:
    """Total weight of branches whose pointer disagrees with the count.

    With t = 0 every hit is projective and the final record is one
    branch drawn with exactly these weights, so this is the predicted
    miscount rate of the readout.
    """
    return math.fsum(
        w
        for (c, pointer), w in coupled_branch_weights(coeffs, n, spec).items()
        if pointer != n - c
    )


def register_fuzzy_readout(wf: WaveFunction, fuzzy: FuzzyParams) -> tuple[Site, ...]:
    """Per-register reading under the fuzzy threshold rule.

    Register i reads IN when at least 1 - p of the squared amplitude has
    it IN, and OUT otherwise.  On any state collapsed at delta = p this
    agrees with the dominant-configuration readout.
    """
    if not wf.coupled:
        raise ValueError("state has no registers to read")
    n = wf.n
    masses = [0.0] * n
    for key, amp in wf.amplitudes.items():
        prob = amp.real * amp.real + amp.imag * amp.imag
        for i in range(n):
            if not key >> (n + i) & 1:
                masses[i] += prob
    return tuple(
        Site.IN if mass >= fuzzy.threshold else Site.OUT for mass in masses
    )


@dataclass(frozen=True)
class ExperimentReport:
    """Aggregate outcome of the register-coupled counting experiment."""

    pre_report: AnomalyReport
    n: int
    p: float
    delta: float
    t: float
    perfect: bool
    eta: float
    duration_s: float
    trials: int
    collapsed_trials: int
    uncollapsed_trials: int
    agreement_rate: float | None
    post_anomaly_rate: float | None
    collapse_time_median: float | None
    collapse_time_p90: float | None
    counterexample_trials: tuple[int, ...]
    master_seed: int
    seed_scheme: str = field(default=SEED_SCHEME)
    trial_digest: str = ""

    def __post_init__(self) -> None:
        if self.collapsed_trials + self.uncollapsed_trials != self.trials:
            raise ValueError("collapse buckets must partition the trials")
        for rate in (self.agreement_rate, self.post_anomaly_rate):
            if rate is not None and not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")


def run_experiment(
    n: int,
    coeffs: MarbleCoeffs,
    fuzzy: FuzzyParams,
    hits: HitParams,
    spec: CouplingSpec,
    duration: float,
    trials: int,
    master_seed: int,
    *,
    delta: float | None = None,
    threads: int | None = None,
) -> ExperimentReport:
    """Couple, evolve, and read out `trials` independent trajectories.

    Readout happens on each trajectory's final state: the dominant
    configuration supplies the register readings and pointer value, the
    marble marginals feed the post-collapse anomaly report.  Agreement
    and anomaly rates are taken over trajectories whose final state is
    collapsed at the given delta (default: the fuzzy p); the rest are
    counted in a separate bucket, never dropped.  A counterexample trial
    is a collapsed trajectory that still flags an anomaly, or, under
    perfect coupling, one whose pointer disagrees with its registers.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 1 <= n <= 62:
        raise ValueError("n must be in 1..62 (site patterns are packed into int64)")
    if delta is None:
        delta = fuzzy.p
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta = {delta} outside [0, 1)")
    pre = product_enumeration_report(coeffs.in_probability, n, fuzzy)
    weights = pointer_weight_matrix(n, spec)
    rate = hits.effective_rate
    n_sub = 2 * n + 1
    w_in0 = coeffs.in_probability
    w_out0 = coeffs.out_probability

    def run_one(trial: int):
        rng = trial_rng(master_seed, trial)
        times, subsystems, uniforms = event_schedule(rng, n_sub, rate, duration)
        w_in = np.full(n, w_in0)
        w_out = np.full(n, w_out0)
        h2 = np.ones(n + 1)
        selections = np.empty(len(times), dtype=np.int64)
        in_masses = np.empty(n)
        first, mask, pointer, dom_prob, conj = _kernel.coupled_trial(
            w_in,
            w_out,
            weights,
            h2,
            hits.t,
            delta,
            subsystems,
            uniforms,
            selections,
            in_masses,
        )
        if first == -2:
            crossing = 0.0
        elif first >= 0:
            crossing = float(times[first])
        else:
            crossing = math.nan
        return int(first), crossing, int(mask), int(pointer), float(dom_prob), float(
            conj
        ), in_masses

    workers = threads if threads and threads > 0 else 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, range(trials)))
    else:
        results = [run_one(trial) for trial in range(trials)]

    collapse_times = []
    agree_count = 0
    anomaly_count = 0
    collapsed_count = 0
    counterexamples = []
    records = np.empty((trials, 5))
    for trial, (first, crossing, mask, pointer, dom_prob, conj, in_masses) in enumerate(
        results
    ):
        records[trial] = (first, mask, pointer, dom_prob, conj)
        if not math.isnan(crossing):
            collapse_times.append(crossing)
        if dom_prob < 1.0 - delta:
            continue
        collapsed_count += 1
        agrees = pointer == n - mask.bit_count()
        post = report_from_masses(list(in_masses), conj, fuzzy)
        if agrees:
            agree_count += 1
        if post.anomaly:
            anomaly_count += 1
        if post.anomaly or (spec.perfect and not agrees):
            counterexamples.append(trial)

    if collapse_times:
        arr = np.sort(np.asarray(collapse_times))
        median = float(np.quantile(arr, 0.5))
        p90 = float(np.quantile(arr, 0.9))
    else:
        median = p90 = None

    return ExperimentReport(
        pre_report=pre,
        n=n,
        p=fuzzy.p,
        delta=delta,
        t=hits.t,
        perfect=spec.perfect,
        eta=spec.eta,
        duration_s=duration,
        trials=trials,
        collapsed_trials=collapsed_count,
        uncollapsed_trials=trials - collapsed_count,
        agreement_rate=agree_count / collapsed_count if collapsed_count else None,
        post_anomaly_rate=anomaly_count / collapsed_count if collapsed_count else None,
        collapse_time_median=median,
        collapse_time_p90=p90,
        counterexample_trials=tuple(counterexamples),
        master_seed=master_seed,
        trial_digest=hashlib.sha256(records.tobytes()).hexdigest(),
    )


@dataclass(frozen=True)
class PointerErrorReport:
    """Measurement error (miscounts) separated from the anomaly itself."""

    miscount_rate: float
    anomaly_manifest_rate: float
    predicted_miscount: float
    report: ExperimentReport


def imperfect_pointer_analysis(
    n: int,
    coeffs: MarbleCoeffs,
    fuzzy: FuzzyParams,
    hits: HitParams,
    spec: CouplingSpec,
    duration: float,
    trials: int,
    master_seed: int,
    *,
    delta: float | None = None,
    threads: int | None = None,
) -> PointerErrorReport:
    """Quantify how often the pointer misreports the register count.

    The miscount rate tracks ordinary measurement error from the
    imperfect coupling; the anomaly-manifest rate counts collapsed
    trajectories that still satisfy every singleton claim while failing
    the conjunction, which stays at zero regardless of eta.  A perfect
    coupling (eta = 0) is allowed and trivially reports zero miscounts.
    """
    report = run_experiment(
        n,
        coeffs,
        fuzzy,
        hits,
        spec,
        duration,
        trials,
        master_seed,
        delta=delta,
        threads=threads,
    )
    if report.agreement_rate is None:
        raise RuntimeError("no trajectory collapsed; extend the duration")
    return PointerErrorReport(
        miscount_rate=1.0 - report.agreement_rate,
        anomaly_manifest_rate=report.post_anomaly_rate,
        predicted_miscount=branch_miscount_probability(coeffs, n, spec),
        report=report,
    )
