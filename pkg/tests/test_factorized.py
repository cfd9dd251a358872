"""Factorized trial kernels against dense-state replays of the same events.

The fast ensemble paths never materialize a state: product trials track
per-marble squared weights and coupled trials add a count/pointer table.
Because both consume the same event schedule as the dense operators, a
dense replay with identical (subsystem, uniform) draws must make the
identical selection at every single event, land on the same dominant
record, and report the same claim masses.  These tests run that replay
over many seeds, including adversarial exact ties.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from grwm import _kernel
from grwm.counting import CouplingSpec, couple, pointer_weight_matrix
from grwm.fuzzylink import LocationClaim, claim_mass
from grwm.grw import (
    HitParams,
    collapsed,
    dominant_config,
    event_schedule,
    hit_outcomes,
    hit_probabilities,
    subsystem_count,
    trial_rng,
)
from grwm.state import MarbleCoeffs, make_wavefunction, product_state

from conftest import random_coeffs


def select_from(probs: list[float], u: float) -> int:
    """The published selection rule: cumulative scan over positive outcomes."""
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


def dense_replay(wf, params, delta, subsystems, uniforms):
    """Evolve the dense state through a fixed schedule, tracking the
    selection at each event and the first collapse crossing."""
    state = wf
    first = -2 if collapsed(state, delta) else -1
    selections = []
    for index, (subsystem, u) in enumerate(zip(subsystems, uniforms)):
        probs = hit_probabilities(state, int(subsystem), params)
        value = select_from(probs, float(u))
        state = {
            v: post for v, _, post in hit_outcomes(state, int(subsystem), params)
        }[value]
        selections.append(value)
        if first == -1 and collapsed(state, delta):
            first = index
    return state, selections, first


def marble_mask(config) -> int:
    return sum(1 << i for i, s in enumerate(config.marble_sites) if s == 1)


class TestCoupledKernel:
    @pytest.mark.parametrize("seed", range(20))
    def test_reproduces_dense_trajectory_event_by_event(self, seed):
        n = 4
        coeffs = MarbleCoeffs.from_in_probability(0.9)
        spec = CouplingSpec.imperfect(0.08)
        params = HitParams(t=0.1)
        delta = 0.1
        duration = 3e-5

        wf = couple(product_state([coeffs] * n), spec)
        rng = trial_rng(555, seed)
        times, subsystems, uniforms = event_schedule(
            rng, subsystem_count(wf), params.effective_rate, duration
        )

        weights = pointer_weight_matrix(n, spec)
        selections = np.empty(len(times), dtype=np.int64)
        in_masses = np.empty(n)
        first, mask, pointer, dom_prob, conj = _kernel.coupled_trial(
            np.full(n, coeffs.in_probability),
            np.full(n, coeffs.out_probability),
            weights,
            np.ones(n + 1),
            params.t,
            delta,
            subsystems,
            uniforms,
            selections,
            in_masses,
        )

        final, dense_selections, dense_first = dense_replay(
            wf, params, delta, subsystems, uniforms
        )
        assert list(selections) == dense_selections
        assert first == dense_first

        config, dense_dom = dominant_config(final)
        assert mask == marble_mask(config)
        assert pointer == config.pointer
        assert dom_prob == pytest.approx(dense_dom, abs=1e-9)
        assert conj == pytest.approx(
            claim_mass(final, LocationClaim.all_in(n)), abs=1e-9
        )
        for i in range(n):
            assert in_masses[i] == pytest.approx(
                claim_mass(final, LocationClaim.single(i)), abs=1e-9
            )

    def test_detects_collapse_of_the_initial_state(self):
        n = 5
        coeffs = MarbleCoeffs.from_in_probability(0.99)
        weights = pointer_weight_matrix(n, CouplingSpec())
        first, _, pointer, dom_prob, _ = _kernel.coupled_trial(
            np.full(n, 0.99),
            np.full(n, 0.01),
            weights,
            np.ones(n + 1),
            0.0,
            0.1,
            np.empty(0, dtype=np.int64),
            np.empty(0),
            np.empty(0, dtype=np.int64),
            np.empty(n),
        )
        assert first == -2
        assert pointer == n
        assert dom_prob == pytest.approx(0.99**n, rel=1e-12)
        assert collapsed(couple(product_state([coeffs] * n), CouplingSpec()), 0.1)

    def test_initial_dominant_branch_far_beyond_the_dense_regime(self):
        n = 60
        first, mask, pointer, dom_prob, conj = _kernel.coupled_trial(
            np.full(n, 0.99),
            np.full(n, 0.01),
            pointer_weight_matrix(n, CouplingSpec()),
            np.ones(n + 1),
            0.0,
            0.1,
            np.empty(0, dtype=np.int64),
            np.empty(0),
            np.empty(0, dtype=np.int64),
            np.empty(n),
        )
        assert first == -1  # 0.99^60 is about 0.547, far from collapsed
        assert mask == 0 and pointer == n
        assert dom_prob == pytest.approx(0.99**n, rel=1e-12)
        assert conj == pytest.approx(0.99**n, rel=1e-12)

    def test_exact_tie_matches_the_dense_lowest_key_rule(self):
        # Every branch weight equal: the dense rule takes the lowest
        # packed key, which is all marbles OUT with pointer 0 because
        # the pointer occupies the high bits.
        n = 3
        coeffs = MarbleCoeffs.from_in_probability(0.5)
        wf = couple(product_state([coeffs] * n), CouplingSpec())
        config, _ = dominant_config(wf)
        _, mask, pointer, _, _ = _kernel.coupled_trial(
            np.full(n, 0.5),
            np.full(n, 0.5),
            pointer_weight_matrix(n, CouplingSpec()),
            np.ones(n + 1),
            0.0,
            0.999,
            np.empty(0, dtype=np.int64),
            np.empty(0),
            np.empty(0, dtype=np.int64),
            np.empty(n),
        )
        assert mask == marble_mask(config) == 7
        assert pointer == config.pointer == 0


class TestProductKernel:
    @pytest.mark.parametrize("seed", range(15))
    def test_reproduces_dense_trajectory_event_by_event(self, seed):
        n = 6
        params = HitParams(t=0.3)
        delta = 0.05
        duration = 4e-5

        mix_rng = np.random.default_rng(9000 + seed)
        coeffs = [random_coeffs(mix_rng) for _ in range(n)]
        wf = product_state(coeffs)
        rng = trial_rng(777, seed)
        times, subsystems, uniforms = event_schedule(
            rng, n, params.effective_rate, duration
        )

        selections = np.empty(len(times), dtype=np.int64)
        first, mask, dom_prob = _kernel.product_trial(
            np.array([c.in_probability for c in coeffs]),
            np.array([c.out_probability for c in coeffs]),
            params.t,
            delta,
            subsystems,
            uniforms,
            selections,
        )

        final, dense_selections, dense_first = dense_replay(
            wf, params, delta, subsystems, uniforms
        )
        assert list(selections) == dense_selections
        assert first == dense_first
        config, dense_dom = dominant_config(final)
        assert mask == marble_mask(config)
        assert dom_prob == pytest.approx(dense_dom, abs=1e-12)

    def test_exact_tie_prefers_in_like_the_lowest_key(self):
        n = 2
        wf = product_state([MarbleCoeffs.from_in_probability(0.5)] * n)
        config, _ = dominant_config(wf)
        _, mask, dom_prob = _kernel.product_trial(
            np.full(n, 0.5),
            np.full(n, 0.5),
            0.0,
            0.01,
            np.empty(0, dtype=np.int64),
            np.empty(0),
            np.empty(0, dtype=np.int64),
        )
        assert mask == marble_mask(config) == 0
        assert dom_prob == pytest.approx(0.25, abs=1e-15)

    def test_initial_dominant_weight_far_beyond_the_dense_regime(self):
        n = 25
        first, mask, dom_prob = _kernel.product_trial(
            np.full(n, 0.99),
            np.full(n, 0.01),
            0.0,
            0.01,
            np.empty(0, dtype=np.int64),
            np.empty(0),
            np.empty(0, dtype=np.int64),
        )
        assert first == -1
        assert mask == 0
        assert dom_prob == pytest.approx(0.99**n, rel=1e-12)


def test_kernel_exposes_numba_availability_flag():
    assert isinstance(_kernel.NUMBA_AVAILABLE, bool)
