"""Shared helpers for building random states in tests."""

from __future__ import annotations

import math

import numpy as np
import pytest

from grwm.state import (
    Configuration,
    MarbleCoeffs,
    Site,
    make_wavefunction,
    pack_configuration,
)


def random_coeffs(rng: np.random.Generator) -> MarbleCoeffs:
    """Random single-marble amplitudes with arbitrary phases."""
    a_sq = rng.uniform(0.05, 0.95)
    phase_a, phase_b = rng.uniform(0.0, 2.0 * math.pi, size=2)
    a = math.sqrt(a_sq) * np.exp(1j * phase_a)
    b = math.sqrt(1.0 - a_sq) * np.exp(1j * phase_b)
    return MarbleCoeffs(complex(a), complex(b))


def random_site_amplitudes(
    rng: np.random.Generator, n: int, support: int | None = None
) -> dict[tuple[Site, ...], complex]:
    """Random normalized state keyed by site tuples (oracle-side encoding)."""
    keys = list(range(1 << n))
    if support is not None:
        keys = list(rng.choice(len(keys), size=support, replace=False))
    raw = rng.normal(size=len(keys)) + 1j * rng.normal(size=len(keys))
    norm = math.sqrt(float(np.sum(np.abs(raw) ** 2)))
    out = {}
    for key, amp in zip(keys, raw):
        sites = tuple(Site((int(key) >> i) & 1) for i in range(n))
        out[sites] = complex(amp / norm)
    return out


def dense_from_site_amplitudes(n, by_sites):
    """Bridge an oracle-side tuple-keyed state into a WaveFunction."""
    amps = {
        pack_configuration(Configuration(sites)): amp
        for sites, amp in by_sites.items()
    }
    return make_wavefunction(n, amps, renormalize=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
