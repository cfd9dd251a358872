"""Wavefunctions over discrete marble configurations.

A system of n marbles has each marble at one of two sites, IN the box or OUT
of it.  A configuration may additionally carry one register reading per
marble and a pointer value for a counting apparatus.  Configurations are
keyed by bit-packed integers: marble bits 0..n-1 (set bit means OUT),
register bits n..2n-1 when present, and the pointer value in the bits above
the register block.

Two state representations are provided.  ``WaveFunction`` is a sparse map
from packed configuration key to complex amplitude and is capped at
``DENSE_MAX_MARBLES`` marbles.  ``SymmetricWaveFunction`` stores one
coefficient per out-count for permutation-symmetric states and has no such
cap, so product states of identical marbles stay tractable at large n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

NORM_TOL = 1e-12
SYMMETRY_TOL = 1e-10
PRUNE_THRESHOLD = 1e-300
DENSE_MAX_MARBLES = 24
# Above this size the symmetric normalization check switches from exact
# integer binomials to log-space weights, which cannot hold a 1e-12 bound.
SYMMETRIC_EXACT_CHECK_MAX = 2000
LOG_SPACE_NORM_TOL = 1e-9


class Site(IntEnum):
    """Location of a single marble: inside the box or outside it."""

    IN = 0
    OUT = 1

    def other(self) -> "Site":
        return Site.OUT if self is Site.IN else Site.IN


def _abs2(z: complex) -> float:
    return z.real * z.real + z.imag * z.imag


def pointer_bits(n: int) -> int:
    """Number of key bits reserved for a pointer value in 0..n."""
    return max(1, n.bit_length())


@dataclass(frozen=True)
class Configuration:
    """One classical configuration: marble sites, optional registers/pointer."""

    marble_sites: tuple[Site, ...]
    register_readings: tuple[Site, ...] | None = None
    pointer: int | None = None

    def __post_init__(self) -> None:
        if not self.marble_sites:
            raise ValueError("configuration needs at least one marble")
        object.__setattr__(
            self, "marble_sites", tuple(Site(s) for s in self.marble_sites)
        )
        if self.register_readings is not None:
            object.__setattr__(
                self,
                "register_readings",
                tuple(Site(s) for s in self.register_readings),
            )
            if len(self.register_readings) != len(self.marble_sites):
                raise ValueError("need exactly one register reading per marble")
        if self.pointer is not None:
            if self.register_readings is None:
                raise ValueError("pointer requires register readings")
            if not 0 <= self.pointer <= len(self.marble_sites):
                raise ValueError(
                    f"pointer {self.pointer} outside 0..{len(self.marble_sites)}"
                )
        elif self.register_readings is not None:
            raise ValueError("register readings require a pointer")

    @property
    def n(self) -> int:
        return len(self.marble_sites)

    @property
    def coupled(self) -> bool:
        return self.register_readings is not None

    @property
    def out_count(self) -> int:
        return sum(1 for s in self.marble_sites if s is Site.OUT)

    @property
    def in_count(self) -> int:
        return self.n - self.out_count


def pack_configuration(config: Configuration) -> int:
    """Encode a configuration as its integer key."""
    n = config.n
    key = 0
    for i, s in enumerate(config.marble_sites):
        if s is Site.OUT:
            key |= 1 << i
    if config.register_readings is not None:
        for i, s in enumerate(config.register_readings):
            if s is Site.OUT:
                key |= 1 << (n + i)
        key |= config.pointer << (2 * n)
    return key


def unpack_configuration(key: int, n: int, coupled: bool = False) -> Configuration:
    """Decode an integer key back into a configuration."""
    if key < 0:
        raise ValueError("configuration key must be non-negative")
    marbles = tuple(Site((key >> i) & 1) for i in range(n))
    if not coupled:
        if key >> n:
            raise ValueError(f"key {key} has bits beyond marble {n - 1}")
        return Configuration(marbles)
    registers = tuple(Site((key >> (n + i)) & 1) for i in range(n))
    pointer = key >> (2 * n)
    return Configuration(marbles, registers, pointer)


def _key_limit(n: int, coupled: bool) -> int:
    if coupled:
        return (n + 1) << (2 * n)
    return 1 << n


@dataclass(frozen=True)
class WaveFunction:
    """Sparse dense-path state: packed configuration key -> amplitude.

    Invariants enforced at construction: amplitudes sum to unit norm within
    ``NORM_TOL``, no stored amplitude is exactly zero, and every key decodes
    to a valid configuration for the layout.
    """

    n: int
    amplitudes: Mapping[int, complex] = field(repr=False)
    coupled: bool = False

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one marble")
        if not self.amplitudes:
            raise ValueError("state has no support")
        limit = _key_limit(self.n, self.coupled)
        norm_sq = math.fsum(_abs2(a) for a in self.amplitudes.values())
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise ValueError(f"state norm^2 = {norm_sq!r}, expected 1")
        for key, amp in self.amplitudes.items():
            if not 0 <= key < limit:
                raise ValueError(f"key {key} out of range for layout")
            if amp == 0:
                raise ValueError("zero amplitude stored; prune instead")
            if self.coupled and (key >> (2 * self.n)) > self.n:
                raise ValueError(f"key {key} encodes pointer > {self.n}")

    def __repr__(self) -> str:  # full amplitude maps are unreadable
        kind = "coupled" if self.coupled else "marbles"
        return (
            f"WaveFunction(n={self.n}, {kind}, support={len(self.amplitudes)})"
        )

    def norm_sq(self) -> float:
        return math.fsum(_abs2(a) for a in self.amplitudes.values())

    def amplitude(self, config: Configuration | int) -> complex:
        key = config if isinstance(config, int) else pack_configuration(config)
        return self.amplitudes.get(key, 0j)

    def probability(self, config: Configuration | int) -> float:
        return _abs2(self.amplitude(config))

    def configurations(self) -> Iterator[Configuration]:
        for key in self.amplitudes:
            yield unpack_configuration(key, self.n, self.coupled)

    def marble_key(self, key: int) -> int:
        """Marble bits of a packed key (identity for uncoupled states)."""
        return key & ((1 << self.n) - 1)


def make_wavefunction(
    n: int,
    amplitudes: Mapping[int, complex],
    coupled: bool = False,
    *,
    renormalize: bool = False,
) -> WaveFunction:
    """Build a ``WaveFunction``, pruning sub-threshold amplitudes first."""
    kept = {
        key: complex(amp)
        for key, amp in amplitudes.items()
        if abs(amp) >= PRUNE_THRESHOLD
    }
    if not kept:
        raise ValueError("state has no support after pruning")
    if renormalize:
        norm = math.sqrt(math.fsum(_abs2(a) for a in kept.values()))
        if norm == 0.0:
            raise ValueError("cannot renormalize a zero-norm state")
        kept = {key: amp / norm for key, amp in kept.items()}
    return WaveFunction(n, MappingProxyType(kept), coupled)


@dataclass(frozen=True)
class MarbleCoeffs:
    """Single-marble amplitudes (a for IN, b for OUT), |a|^2 + |b|^2 = 1."""

    a: complex
    b: complex

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", complex(self.b))
        total = _abs2(self.a) + _abs2(self.b)
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"|a|^2 + |b|^2 = {total!r}, expected 1")

    @classmethod
    def from_in_probability(cls, a_sq: float) -> "MarbleCoeffs":
        if not 0.0 <= a_sq <= 1.0:
            raise ValueError(f"in-probability {a_sq} outside [0, 1]")
        return cls(math.sqrt(a_sq), math.sqrt(1.0 - a_sq))

    @property
    def in_probability(self) -> float:
        return _abs2(self.a)

    @property
    def out_probability(self) -> float:
        return _abs2(self.b)


@dataclass(frozen=True)
class SymmetricWaveFunction:
    """Permutation-symmetric state: one coefficient per out-count.

    Every configuration with k marbles OUT shares the amplitude
    ``coeff_by_out_count[k]``, so the normalization condition is
    sum_k C(n, k) |c_k|^2 = 1.
    """

    n: int
    coeff_by_out_count: tuple[complex, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one marble")
        coeffs = tuple(complex(c) for c in self.coeff_by_out_count)
        object.__setattr__(self, "coeff_by_out_count", coeffs)
        if len(coeffs) != self.n + 1:
            raise ValueError(
                f"need {self.n + 1} coefficients, got {len(coeffs)}"
            )
        norm_sq = math.fsum(self.out_count_weights())
        tol = NORM_TOL if self.n <= SYMMETRIC_EXACT_CHECK_MAX else LOG_SPACE_NORM_TOL
        if abs(norm_sq - 1.0) > tol:
            raise ValueError(f"state norm^2 = {norm_sq!r}, expected 1")

    def out_count_weights(self) -> list[float]:
        """Probability of finding exactly k marbles OUT, for k = 0..n."""
        return [
            _binomial_weight(self.n, k, _abs2(c))
            for k, c in enumerate(self.coeff_by_out_count)
        ]


def _binomial_weight(n: int, k: int, mag_sq: float) -> float:
    """C(n, k) * mag_sq without overflow, exactly rounded when feasible."""
    if mag_sq == 0.0:
        return 0.0
    if n <= SYMMETRIC_EXACT_CHECK_MAX:
        return float(math.comb(n, k) * Fraction(mag_sq))
    log_w = (
        math.lgamma(n + 1)
        - math.lgamma(k + 1)
        - math.lgamma(n - k + 1)
        + math.log(mag_sq)
    )
    if log_w < -745.0:
        return 0.0
    return math.exp(log_w)


def product_state(coeffs: Sequence[MarbleCoeffs]) -> WaveFunction:
    """Tensor product of per-marble (a, b) amplitude pairs.

    Parameters
    ----------
    coeffs : sequence of MarbleCoeffs
        One pair per marble; the result has ``len(coeffs)`` marbles and one
        amplitude for each of the 2^n configurations.

    Returns
    -------
    WaveFunction
        Normalized product state on the dense path (n <= DENSE_MAX_MARBLES).
    """
    n = len(coeffs)
    if n == 0:
        raise ValueError("need at least one marble")
    if n > DENSE_MAX_MARBLES:
        raise ValueError(
            f"dense path capped at {DENSE_MAX_MARBLES} marbles; "
            "use symmetric_product_state for identical marbles"
        )
    amps = [1.0 + 0j]
    for c in coeffs:
        amps = [x * c.a for x in amps] + [x * c.b for x in amps]
    # The doubling loop above appends the OUT branch of marble i as the
    # high half, which is exactly the bit-packed key order.
    return make_wavefunction(
        n, dict(enumerate(amps)), coupled=False, renormalize=True
    )


def symmetric_product_state(coeffs: MarbleCoeffs, n: int) -> SymmetricWaveFunction:
    """Product state of n identical marbles in compressed symmetric form."""
    if n < 1:
        raise ValueError("need at least one marble")
    return SymmetricWaveFunction(
        n, tuple(coeffs.a ** (n - k) * coeffs.b**k for k in range(n + 1))
    )


def expansion_amplitude(
    coeffs: MarbleCoeffs, n: int, out_set: Iterable[int]
) -> complex:
    """Amplitude a^(n-|out|) b^|out| of the branch with ``out_set`` marbles OUT."""
    out = set(out_set)
    for i in out:
        if not 0 <= i < n:
            raise IndexError(f"marble index {i} out of range for n={n}")
    k = len(out)
    return coeffs.a ** (n - k) * coeffs.b**k


def marginal_probability(
    wf: WaveFunction | SymmetricWaveFunction, marble: int, site: Site
) -> float:
    """Probability that one marble is found at ``site``."""
    site = Site(site)
    if not 0 <= marble < wf.n:
        raise IndexError(f"marble index {marble} out of range for n={wf.n}")
    if isinstance(wf, SymmetricWaveFunction):
        weights = wf.out_count_weights()
        n = wf.n
        # A fraction (n-k)/n of the C(n,k) configurations with k marbles OUT
        # put any given marble IN.
        total = math.fsum(
            w * ((n - k) / n if site is Site.IN else k / n)
            for k, w in enumerate(weights)
        )
        return total
    return math.fsum(
        _abs2(amp)
        for key, amp in wf.amplitudes.items()
        if (key >> marble) & 1 == site
    )


def joint_probability(
    wf: WaveFunction | SymmetricWaveFunction, assignment: Mapping[int, Site]
) -> float:
    """Probability that every marble in ``assignment`` sits at its given site.

    An empty assignment imposes no constraint, so the result is the total
    probability mass.
    """
    for i in assignment:
        if not 0 <= i < wf.n:
            raise IndexError(f"marble index {i} out of range for n={wf.n}")
    if isinstance(wf, SymmetricWaveFunction):
        fixed_out = sum(1 for s in assignment.values() if Site(s) is Site.OUT)
        free = wf.n - len(assignment)
        return math.fsum(
            _binomial_weight(free, k, _abs2(wf.coeff_by_out_count[k + fixed_out]))
            for k in range(free + 1)
        )
    mask = 0
    want = 0
    for i, s in assignment.items():
        mask |= 1 << i
        if Site(s) is Site.OUT:
            want |= 1 << i
    return math.fsum(
        _abs2(amp)
        for key, amp in wf.amplitudes.items()
        if key & mask == want
    )


def compress(wf: WaveFunction) -> SymmetricWaveFunction:
    """Collapse a permutation-symmetric dense state to per-out-count form."""
    if wf.coupled:
        raise ValueError("compress is defined for marble-only states")
    reference: list[complex | None] = [None] * (wf.n + 1)
    seen = [0] * (wf.n + 1)
    for key, amp in wf.amplitudes.items():
        k = key.bit_count()
        seen[k] += 1
        ref = reference[k]
        if ref is None:
            reference[k] = amp
        elif abs(amp - ref) > SYMMETRY_TOL:
            raise ValueError(
                f"state is not permutation symmetric at out-count {k}"
            )
    for k, count in enumerate(seen):
        # Absent keys carry amplitude zero, so a class must be stored in
        # full or not at all.
        if count not in (0, math.comb(wf.n, k)):
            raise ValueError(
                f"state is not permutation symmetric at out-count {k}"
            )
    coeffs = tuple(ref if ref is not None else 0j for ref in reference)
    return SymmetricWaveFunction(wf.n, coeffs)


def decompress(swf: SymmetricWaveFunction) -> WaveFunction:
    """Expand a symmetric state back onto the dense path."""
    if swf.n > DENSE_MAX_MARBLES:
        raise ValueError(
            f"dense path capped at {DENSE_MAX_MARBLES} marbles; n={swf.n}"
        )
    amps = {
        key: swf.coeff_by_out_count[key.bit_count()]
        for key in range(1 << swf.n)
    }
    return make_wavefunction(swf.n, amps)


def renormalize(wf: WaveFunction) -> WaveFunction:
    """Rescale to unit norm; identity for already-normalized states."""
    return make_wavefunction(
        wf.n, dict(wf.amplitudes), wf.coupled, renormalize=True
    )
