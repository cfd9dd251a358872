"""Cell-mass statistics, accessibility, and the expected-deficit report."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grwm.massdensity import (
    AccessibilityParams,
    CellGrid,
    accessibility_ratio,
    accessible,
    box_grid,
    box_mass_report,
    expected_mass,
    ggb_states,
    mass_in_cell,
    mass_report,
    min_n_for_deficit,
    per_marble_grid,
    product_box_stats,
    product_marble_cell_stats,
    region_grid,
    variance_mass,
)
from grwm.state import (
    Configuration,
    MarbleCoeffs,
    Site,
    make_wavefunction,
    product_state,
)

from conftest import dense_from_site_amplitudes, random_site_amplitudes

PARAMS = AccessibilityParams(1e-3)


def mass_moments_oracle(by_sites, site_to_cell, cell, m):
    """First two moments of the cell mass from a tuple-keyed state."""
    mean = math.fsum(
        abs(amp) ** 2 * m * sum(site_to_cell[(i, s)] == cell for i, s in enumerate(sites))
        for sites, amp in by_sites.items()
    )
    var = math.fsum(
        abs(amp) ** 2
        * (m * sum(site_to_cell[(i, s)] == cell for i, s in enumerate(sites)) - mean) ** 2
        for sites, amp in by_sites.items()
    )
    return mean, var


class TestGrids:
    def test_region_grid_maps_all_sites(self):
        grid = region_grid(3)
        assert grid.cells == ("box", "outside")
        for i in range(3):
            assert grid.cell_of(i, Site.IN) == "box"
            assert grid.cell_of(i, Site.OUT) == "outside"

    def test_per_marble_grid_is_disjoint(self):
        grid = per_marble_grid(2)
        assert grid.cells == ("in_0", "out_0", "in_1", "out_1")
        assert grid.cell_of(1, Site.OUT) == "out_1"

    def test_rejects_duplicate_cells(self):
        with pytest.raises(ValueError, match="duplicate"):
            CellGrid(("a", "a"), {(0, Site.IN): "a", (0, Site.OUT): "a"})

    def test_rejects_unknown_target_cell(self):
        with pytest.raises(ValueError):
            CellGrid(("a",), {(0, Site.IN): "a", (0, Site.OUT): "b"})

    def test_rejects_nonpositive_mass(self):
        with pytest.raises(ValueError, match="positive"):
            region_grid(2, m=0.0)

    def test_unknown_cell_queries_fail(self):
        grid = region_grid(2)
        config = Configuration((Site.IN, Site.IN))
        with pytest.raises(ValueError, match="unknown cell"):
            mass_in_cell(config, grid, "attic")


class TestMassInCell:
    def test_counts_particles(self):
        grid = region_grid(4, m=2.0)
        config = Configuration((Site.IN, Site.OUT, Site.IN, Site.IN))
        assert mass_in_cell(config, grid, "box") == 6.0
        assert mass_in_cell(config, grid, "outside") == 2.0

    def test_per_marble_cells(self):
        grid = per_marble_grid(3)
        config = Configuration((Site.OUT, Site.IN, Site.OUT))
        assert mass_in_cell(config, grid, "out_0") == 1.0
        assert mass_in_cell(config, grid, "in_0") == 0.0


class TestMoments:
    @pytest.mark.parametrize("seed", [11, 12, 13])
    @pytest.mark.parametrize("m", [1.0, 0.25])
    def test_matches_enumeration_oracle(self, seed, m):
        rng = np.random.default_rng(seed)
        n = 4
        by_sites = random_site_amplitudes(rng, n)
        wf = dense_from_site_amplitudes(n, by_sites)
        grid = region_grid(n, m=m)
        for cell in grid.cells:
            mean, var = mass_moments_oracle(by_sites, grid.site_to_cell, cell, m)
            assert expected_mass(wf, grid, cell) == pytest.approx(mean, abs=1e-12)
            assert variance_mass(wf, grid, cell) == pytest.approx(var, abs=1e-12)

    @pytest.mark.parametrize("seed", [14, 15])
    def test_total_mass_is_conserved(self, seed):
        rng = np.random.default_rng(seed)
        n = 5
        wf = dense_from_site_amplitudes(n, random_site_amplitudes(rng, n))
        for grid in (region_grid(n, m=0.5), per_marble_grid(n, m=0.5)):
            total = math.fsum(expected_mass(wf, grid, c) for c in grid.cells)
            assert total == pytest.approx(n * 0.5, abs=1e-12)

    def test_scale_covariance(self):
        wf = product_state([MarbleCoeffs.from_in_probability(0.7)] * 4)
        small, big = region_grid(4, m=1.0), region_grid(4, m=3.0)
        assert expected_mass(wf, big, "box") == pytest.approx(
            3.0 * expected_mass(wf, small, "box"), abs=1e-12
        )
        assert variance_mass(wf, big, "box") == pytest.approx(
            9.0 * variance_mass(wf, small, "box"), abs=1e-12
        )
        assert accessibility_ratio(wf, big, "box") == pytest.approx(
            accessibility_ratio(wf, small, "box"), abs=1e-12
        )

    def test_eigenstate_has_zero_variance(self):
        wf = make_wavefunction(3, {0b101: 1.0 + 0j})
        grid = region_grid(3)
        assert expected_mass(wf, grid, "box") == 1.0
        assert variance_mass(wf, grid, "box") == 0.0
        assert accessibility_ratio(wf, grid, "box") == 0.0

    def test_empty_cell_is_vacuously_sharp(self):
        wf = make_wavefunction(2, {0: 1.0 + 0j})
        grid = region_grid(2)
        assert expected_mass(wf, grid, "outside") == 0.0
        assert accessibility_ratio(wf, grid, "outside") == 0.0
        assert accessible(wf, grid, "outside", PARAMS)


class TestGGB:
    def test_superposed_box_mass_is_not_accessible(self):
        superposed, split, grid = ggb_states(10)
        for cell in ("A", "B"):
            assert expected_mass(superposed, grid, cell) == 5.0
            assert variance_mass(superposed, grid, cell) == 25.0
            assert accessibility_ratio(superposed, grid, cell) == 1.0
            assert not accessible(superposed, grid, cell, PARAMS)

    def test_split_box_mass_is_accessible(self):
        superposed, split, grid = ggb_states(10)
        for cell in ("A", "B"):
            assert expected_mass(split, grid, cell) == 5.0
            assert variance_mass(split, grid, cell) == 0.0
            assert accessibility_ratio(split, grid, cell) == 0.0
            assert accessible(split, grid, cell, PARAMS)

    def test_expectations_agree_but_verdicts_differ(self):
        superposed, split, grid = ggb_states(6, m=2.0)
        report_sup = mass_report(superposed, grid, PARAMS)
        report_spl = mass_report(split, grid, PARAMS)
        for cell in ("A", "B"):
            assert report_sup.cells[cell].expected == report_spl.cells[cell].expected
            assert report_sup.cells[cell].accessible != report_spl.cells[cell].accessible

    def test_rejects_odd_or_tiny_counts(self):
        with pytest.raises(ValueError, match="even"):
            ggb_states(5)
        with pytest.raises(ValueError, match="two"):
            ggb_states(1)


class TestMarbleGrids:
    def test_box_cell_sharpens_with_n_but_marble_cells_do_not(self):
        a_sq = 0.99
        for n in (4, 8, 12):
            wf = product_state([MarbleCoeffs.from_in_probability(a_sq)] * n)
            box = box_grid(n)
            per = per_marble_grid(n)
            box_ratio = accessibility_ratio(wf, box, "box")
            marble_ratio = accessibility_ratio(wf, per, "in_0")
            assert box_ratio == pytest.approx((1 - a_sq) / (n * a_sq), abs=1e-12)
            assert marble_ratio == pytest.approx((1 - a_sq) / a_sq, abs=1e-12)
            assert marble_ratio > box_ratio

    def test_analytic_stats_match_dense(self):
        a_sq, n, m = 0.93, 6, 1.5
        wf = product_state([MarbleCoeffs.from_in_probability(a_sq)] * n)
        box = product_box_stats(a_sq, n, m, PARAMS)
        grid = box_grid(n, m=m)
        assert box.expected == pytest.approx(expected_mass(wf, grid, "box"), abs=1e-9)
        assert box.variance == pytest.approx(variance_mass(wf, grid, "box"), abs=1e-9)
        marble = product_marble_cell_stats(a_sq, m, PARAMS)
        per = per_marble_grid(n, m=m)
        assert marble.expected == pytest.approx(expected_mass(wf, per, "in_2"), abs=1e-12)
        assert marble.variance == pytest.approx(variance_mass(wf, per, "in_2"), abs=1e-12)

    def test_large_n_box_cell_becomes_accessible(self):
        # (1 - a)/(n a) < 1e-3 once n > ~10.2 at a = 0.99
        assert not product_box_stats(0.99, 10, 1.0, PARAMS).accessible
        assert product_box_stats(0.99, 11, 1.0, PARAMS).accessible
        assert product_box_stats(0.99, 10**9, 1.0, PARAMS).accessible
        assert not product_marble_cell_stats(0.99, 1.0, PARAMS).accessible


class TestDeficitReport:
    def test_headline_numbers_are_exact(self):
        report = box_mass_report(0.99, 100000, 1, deficit_target=1000)
        assert report.in_box_expected == 99000.0
        assert report.deficit == 1000.0
        assert report.min_n_for_deficit == 100000

    def test_min_n_exact_rational_ceiling(self):
        assert min_n_for_deficit(0.99, 1000) == 100000
        assert min_n_for_deficit(0.99, "999.99") == 99999
        assert min_n_for_deficit(0.99, Fraction(1, 100)) == 1
        assert min_n_for_deficit(0.75, 10, m=2) == 20

    def test_min_n_boundaries(self):
        assert min_n_for_deficit(1, 5) is None
        assert min_n_for_deficit(0.5, 0) == 1
        assert min_n_for_deficit(0.5, -3) == 1

    def test_deficit_scales_with_mass(self):
        report = box_mass_report(0.99, 1000, m=7)
        assert report.deficit == pytest.approx(1000 * 0.01 * 7, abs=1e-9)
        assert report.in_box_expected + report.deficit == pytest.approx(
            7000.0, abs=1e-9
        )

    @given(
        st.integers(1, 10**6),
        st.fractions(Fraction(1, 100), Fraction(99, 100), max_denominator=10**6),
    )
    @settings(max_examples=50, deadline=None)
    def test_expected_plus_deficit_is_total(self, n, a_sq):
        report = box_mass_report(a_sq, n)
        assert report.in_box_expected + report.deficit == pytest.approx(
            float(n), rel=1e-12
        )
        assert report.deficit >= 0.0
