"""Mass-density observables and their accessibility.

The mass operator on a cell is diagonal in the configuration basis: each
configuration contributes the particle mass m for every marble it places in
the cell.  A cell's density value is taken to be accessible (macroscopically
meaningful) when the relative spread R = variance / expected^2 is small,
R < epsilon.  Two states can agree on every expected value while only one of
them has accessible densities, which is what the two standard box states
below demonstrate: an even superposition of "all N particles in region A"
and "all N in region B" carries R = 1, while the product state with N/2
particles on each side carries R = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping

from .state import Configuration, Site, WaveFunction, make_wavefunction

DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class AccessibilityParams:
    """Relative-spread threshold: a cell is accessible when R < epsilon."""

    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon = {self.epsilon} outside (0, 1)")


@dataclass(frozen=True)
class CellGrid:
    """Finite cells plus the map telling where each marble's sites lie."""

    cells: tuple[str, ...]
    site_to_cell: Mapping[tuple[int, Site], str]
    mass_per_particle: float = 1.0

    def __post_init__(self) -> None:
        if self.mass_per_particle <= 0.0:
            raise ValueError("particle mass must be positive")
        if len(set(self.cells)) != len(self.cells):
            raise ValueError("duplicate cell names")
        normalized = {
            (int(i), Site(s)): cell for (i, s), cell in self.site_to_cell.items()
        }
        known = set(self.cells)
        for key, cell in normalized.items():
            if cell not in known:
                raise ValueError(f"site {key} mapped to unknown cell {cell!r}")
        object.__setattr__(self, "site_to_cell", MappingProxyType(normalized))

    def cell_of(self, marble: int, site: Site) -> str:
        try:
            return self.site_to_cell[(marble, Site(site))]
        except KeyError:
            raise ValueError(f"no cell mapped for marble {marble} at {site!r}")


def region_grid(
    n: int, m: float = 1.0, names: tuple[str, str] = ("box", "outside")
) -> CellGrid:
    """Two cells shared by all marbles: one per site."""
    mapping = {}
    for i in range(n):
        mapping[(i, Site.IN)] = names[0]
        mapping[(i, Site.OUT)] = names[1]
    return CellGrid(names, mapping, m)


def box_grid(n: int, m: float = 1.0) -> CellGrid:
    return region_grid(n, m)


def per_marble_grid(n: int, m: float = 1.0) -> CellGrid:
    """One IN-cell and one OUT-cell per marble."""
    cells = []
    mapping = {}
    for i in range(n):
        cells += [f"in_{i}", f"out_{i}"]
        mapping[(i, Site.IN)] = f"in_{i}"
        mapping[(i, Site.OUT)] = f"out_{i}"
    return CellGrid(tuple(cells), mapping, m)


def mass_in_cell(config: Configuration, grid: CellGrid, cell: str) -> float:
    """Mass one configuration places in a cell: m times the particle count."""
    if cell not in grid.cells:
        raise ValueError(f"unknown cell {cell!r}")
    count = sum(
        1
        for i, s in enumerate(config.marble_sites)
        if grid.cell_of(i, s) == cell
    )
    return grid.mass_per_particle * count


def expected_mass(wf: WaveFunction, grid: CellGrid, cell: str) -> float:
    """Expectation of the diagonal mass operator on the cell."""
    return math.fsum(
        wf.probability(key) * mass_in_cell(config, grid, cell)
        for key, config in zip(wf.amplitudes, wf.configurations())
    )


def variance_mass(wf: WaveFunction, grid: CellGrid, cell: str) -> float:
    """Variance of the cell mass in the given state."""
    mean = expected_mass(wf, grid, cell)
    return math.fsum(
        wf.probability(key) * (mass_in_cell(config, grid, cell) - mean) ** 2
        for key, config in zip(wf.amplitudes, wf.configurations())
    )


def accessibility_ratio(wf: WaveFunction, grid: CellGrid, cell: str) -> float:
    """Relative spread R = variance / expected^2.

    A cell with no expected mass and no variance is vacuously sharp and
    reports 0; positive variance on zero expected mass reports inf so the
    cell can never pass the accessibility cut.
    """
    mean = expected_mass(wf, grid, cell)
    var = variance_mass(wf, grid, cell)
    if mean > 0.0:
        return var / (mean * mean)
    return 0.0 if var == 0.0 else math.inf


def accessible(
    wf: WaveFunction, grid: CellGrid, cell: str, params: AccessibilityParams
) -> bool:
    return accessibility_ratio(wf, grid, cell) < params.epsilon


@dataclass(frozen=True)
class CellMassStats:
    expected: float
    variance: float
    ratio: float
    accessible: bool


@dataclass(frozen=True)
class MassReport:
    """Per-cell mass statistics for one state on one grid."""

    epsilon: float
    cells: Mapping[str, CellMassStats]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", MappingProxyType(dict(self.cells)))


def mass_report(
    wf: WaveFunction, grid: CellGrid, params: AccessibilityParams
) -> MassReport:
    stats = {}
    for cell in grid.cells:
        mean = expected_mass(wf, grid, cell)
        var = variance_mass(wf, grid, cell)
        if mean > 0.0:
            ratio = var / (mean * mean)
        else:
            ratio = 0.0 if var == 0.0 else math.inf
        stats[cell] = CellMassStats(mean, var, ratio, ratio < params.epsilon)
    return MassReport(params.epsilon, stats)


def ggb_states(
    n_particles: int, m: float = 1.0
) -> tuple[WaveFunction, WaveFunction, CellGrid]:
    """The two equal-expectation box states on regions A and B.

    Returns (superposed, split, grid): ``superposed`` puts all particles in
    region A and all in region B with amplitude magnitude 1/sqrt(2) each;
    ``split`` is the single configuration with the first half of the
    particles in A and the second half in B, which requires even
    ``n_particles``.  Amplitudes are chosen with exactly representable
    squared magnitude (0.5 + 0.5j) so the branch probabilities are exact.
    """
    if n_particles < 2:
        raise ValueError("need at least two particles")
    if n_particles % 2:
        raise ValueError("n_particles must be even to split half and half")
    grid = region_grid(n_particles, m, names=("A", "B"))
    amp = complex(0.5, 0.5)
    superposed = make_wavefunction(
        n_particles, {0: amp, (1 << n_particles) - 1: amp}
    )
    split_key = sum(1 << i for i in range(n_particles // 2, n_particles))
    split = make_wavefunction(n_particles, {split_key: 1.0 + 0j})
    return superposed, split, grid


def _as_fraction(x: float | int | str | Fraction) -> Fraction:
    """Exact rational value, reading floats as the decimal they print as."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, str)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"cannot convert {x} to an exact fraction")
        return Fraction(str(x))
    raise TypeError(f"unsupported numeric type {type(x).__name__}")


def min_n_for_deficit(
    a_sq: float | str | Fraction,
    deficit_target: float | str | Fraction,
    m: float | str | Fraction = 1,
) -> int | None:
    """Smallest n whose expected missing box mass n(1-a_sq)m reaches the target.

    Computed in exact rational arithmetic so threshold cases land on exact
    integers.  Returns None when a_sq = 1, since then nothing is ever
    missing.
    """
    a = _as_fraction(a_sq)
    target = _as_fraction(deficit_target)
    unit = _as_fraction(m)
    if not 0 < a <= 1:
        raise ValueError(f"a_sq = {a_sq} outside (0, 1]")
    if unit <= 0:
        raise ValueError("particle mass must be positive")
    if target <= 0:
        return 1
    missing = (1 - a) * unit
    if missing == 0:
        return None
    return max(1, math.ceil(target / missing))


@dataclass(frozen=True)
class BoxMassReport:
    """Expected box mass and its shortfall for n identical marbles."""

    n: int
    a_sq: float
    mass_per_particle: float
    in_box_expected: float
    deficit: float
    deficit_target: float | None
    min_n_for_deficit: int | None


def box_mass_report(
    a_sq: float | str | Fraction,
    n: int,
    m: float | str | Fraction = 1,
    deficit_target: float | str | Fraction | None = None,
) -> BoxMassReport:
    """Box-mass bookkeeping for a product state of n identical marbles.

    Uses exact rational arithmetic internally (floats are read as their
    decimal values), so quantities like n(1-a_sq)m come out as exact
    integers when they are mathematically integral.
    """
    if n < 1:
        raise ValueError("need at least one marble")
    a = _as_fraction(a_sq)
    unit = _as_fraction(m)
    if not 0 < a <= 1:
        raise ValueError(f"a_sq = {a_sq} outside (0, 1]")
    if unit <= 0:
        raise ValueError("particle mass must be positive")
    deficit = n * (1 - a) * unit
    in_box = n * unit - deficit
    min_n = (
        min_n_for_deficit(a, deficit_target, unit)
        if deficit_target is not None
        else None
    )
    return BoxMassReport(
        n=n,
        a_sq=float(a),
        mass_per_particle=float(unit),
        in_box_expected=float(in_box),
        deficit=float(deficit),
        deficit_target=None if deficit_target is None else float(_as_fraction(deficit_target)),
        min_n_for_deficit=min_n,
    )


def product_box_stats(
    a_sq: float, n: int, m: float, params: AccessibilityParams
) -> CellMassStats:
    """Box-cell statistics of a product state, via the binomial count law."""
    if not 0.0 < a_sq <= 1.0:
        raise ValueError(f"a_sq = {a_sq} outside (0, 1]")
    mean = n * a_sq * m
    var = n * a_sq * (1.0 - a_sq) * m * m
    ratio = (1.0 - a_sq) / (n * a_sq)
    return CellMassStats(mean, var, ratio, ratio < params.epsilon)


def product_marble_cell_stats(
    a_sq: float, m: float, params: AccessibilityParams
) -> CellMassStats:
    """One marble's IN-cell statistics, via the Bernoulli count law."""
    if not 0.0 < a_sq <= 1.0:
        raise ValueError(f"a_sq = {a_sq} outside (0, 1]")
    mean = a_sq * m
    var = a_sq * (1.0 - a_sq) * m * m
    ratio = (1.0 - a_sq) / a_sq
    return CellMassStats(mean, var, ratio, ratio < params.epsilon)
