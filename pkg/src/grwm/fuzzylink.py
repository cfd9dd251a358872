"""Fuzzy location claims and the counting anomaly.

Under a fuzzy reading of location talk, the claim "these marbles sit at
these sites" counts as true when the wavefunction puts probability mass at
least 1 - p on the claimed sites, for a vagueness threshold 0 < p < 0.5.
Singleton claims can then all hold while their conjunction fails, because
joint mass decays with the number of conjuncts.  That combination is the
counting anomaly; ``enumeration_report`` detects it and ``critical_n``
locates the smallest system size at which it sets in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .state import Site, SymmetricWaveFunction, WaveFunction, joint_probability

DEFAULT_VAGUENESS = 0.1


@dataclass(frozen=True)
class FuzzyParams:
    """Vagueness threshold for the fuzzy link; a claim holds at mass >= 1 - p."""

    p: float = DEFAULT_VAGUENESS

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 0.5:
            raise ValueError(f"p = {self.p} outside (0, 0.5)")

    @property
    def threshold(self) -> float:
        return 1.0 - self.p


@dataclass(frozen=True)
class LocationClaim:
    """An assignment of sites to distinct marbles, e.g. 'marbles 0 and 2 are IN'."""

    items: tuple[tuple[int, Site], ...]

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("claim must mention at least one marble")
        normalized = tuple(
            sorted((int(i), Site(s)) for i, s in self.items)
        )
        indices = [i for i, _ in normalized]
        if len(set(indices)) != len(indices):
            raise ValueError("claim assigns one marble twice")
        if indices[0] < 0:
            raise ValueError("marble indices must be non-negative")
        object.__setattr__(self, "items", normalized)

    @classmethod
    def of(cls, assignment: Mapping[int, Site]) -> "LocationClaim":
        return cls(tuple(assignment.items()))

    @classmethod
    def single(cls, marble: int, site: Site = Site.IN) -> "LocationClaim":
        return cls(((marble, site),))

    @classmethod
    def all_in(cls, n: int) -> "LocationClaim":
        return cls(tuple((i, Site.IN) for i in range(n)))

    @property
    def assignment(self) -> dict[int, Site]:
        return dict(self.items)

    def conjoin(self, other: "LocationClaim") -> "LocationClaim":
        return LocationClaim(self.items + other.items)

    def negated(self) -> "LocationClaim":
        """Marble-wise negation: every mentioned marble at the other site."""
        return LocationClaim(tuple((i, s.other()) for i, s in self.items))


@dataclass(frozen=True)
class AnomalyReport:
    """Singleton-claim verdicts next to the conjunction verdict."""

    per_marble_holds: tuple[bool, ...]
    conjunction_holds: bool
    conjunction_mass: float
    anomaly: bool

    def __post_init__(self) -> None:
        expected = all(self.per_marble_holds) and not self.conjunction_holds
        if self.anomaly != expected:
            raise ValueError(
                "anomaly flag must equal: all singletons hold and conjunction fails"
            )


def claim_mass(
    wf: WaveFunction | SymmetricWaveFunction, claim: LocationClaim
) -> float:
    """Probability mass the state puts on the claimed sites."""
    return joint_probability(wf, claim.assignment)


def holds(
    wf: WaveFunction | SymmetricWaveFunction,
    claim: LocationClaim,
    params: FuzzyParams,
) -> bool:
    """Fuzzy-link truth: claim mass >= 1 - p, with ties counting as true."""
    return claim_mass(wf, claim) >= params.threshold


def report_from_masses(
    per_marble_masses: Sequence[float],
    conjunction_mass: float,
    params: FuzzyParams,
) -> AnomalyReport:
    """Assemble an anomaly report from already-computed claim masses."""
    per_marble = tuple(m >= params.threshold for m in per_marble_masses)
    conj = conjunction_mass >= params.threshold
    return AnomalyReport(
        per_marble_holds=per_marble,
        conjunction_holds=conj,
        conjunction_mass=conjunction_mass,
        anomaly=all(per_marble) and not conj,
    )


def enumeration_report(
    wf: WaveFunction | SymmetricWaveFunction, params: FuzzyParams
) -> AnomalyReport:
    """Evaluate every singleton IN-claim and their conjunction on one state.

    For coupled states the claims concern the marble sub-configuration;
    register and pointer degrees of freedom are traced over.
    """
    singles = [
        claim_mass(wf, LocationClaim.single(i)) for i in range(wf.n)
    ]
    conjunction = claim_mass(wf, LocationClaim.all_in(wf.n))
    return report_from_masses(singles, conjunction, params)


def product_enumeration_report(
    a_sq: float, n: int, params: FuzzyParams
) -> AnomalyReport:
    """Anomaly report for a product state of n identical marbles, analytically.

    Each singleton IN-claim has mass a_sq and the conjunction has mass
    a_sq**n, so no state needs to be materialized; n is unbounded.
    """
    if not 0.0 < a_sq <= 1.0:
        raise ValueError(f"a_sq = {a_sq} outside (0, 1]")
    if n < 1:
        raise ValueError("need at least one marble")
    return report_from_masses([a_sq] * n, a_sq**n, params)


def critical_n(a_sq: float, params: FuzzyParams) -> int | None:
    """Smallest n at which the counting anomaly sets in for a product state.

    Requires every singleton claim to hold (a_sq >= 1 - p) while the
    conjunction a_sq**n falls below 1 - p.  Returns None when the singleton
    claims already fail, since then no anomaly is possible at any n.
    """
    if not 0.0 < a_sq < 1.0:
        raise ValueError(f"a_sq = {a_sq} outside (0, 1)")
    threshold = params.threshold
    if a_sq < threshold:
        return None
    # Logarithmic estimate, then exact integer search on the same float
    # power used by the fuzzy-link comparison.
    estimate = int(math.log(threshold) / math.log(a_sq)) + 1
    n = max(2, estimate)
    while n > 2 and a_sq ** (n - 1) < threshold:
        n -= 1
    while a_sq**n >= threshold:
        n += 1
    return n
