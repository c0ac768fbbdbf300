"""Deterministic counter-based random inputs for suites and tests.

The generator is SplitMix64 evaluated at seed-derived counters, so any
implementation, in any language, reproduces identical streams:

    state_i = seed + (i + 1) * 0x9E3779B97F4A7C15   (mod 2^64)
    z = state_i
    z = (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9      (mod 2^64)
    z = (z XOR (z >> 27)) * 0x94D049BB133111EB      (mod 2^64)
    out_i = z XOR (z >> 31)

Uniform doubles are out_i >> 11 scaled by 2^-53.  Independent streams are
derived by hashing a stream label into the seed with the same mixer.
"""

from __future__ import annotations

import numpy as np

from .grid import KForm, ScalarField, SymTensor2, VectorField, index_sets

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class CounterRng:
    """Counter-based SplitMix64 stream."""

    def __init__(self, seed, stream=""):
        s = int(seed) & _MASK
        for ch in str(stream):
            s = _mix(s + ord(ch) * _GAMMA)
        self.seed = s
        self.counter = 0

    def next_u64(self):
        self.counter += 1
        return _mix(self.seed + self.counter * _GAMMA)

    def uniform(self, lo=0.0, hi=1.0):
        u = (self.next_u64() >> 11) * (2.0 ** -53)
        return lo + (hi - lo) * u

    def randint(self, lo, hi):
        """Uniform integer in [lo, hi] inclusive."""
        span = hi - lo + 1
        return lo + int(self.next_u64() % span)

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def spawn(self, label):
        return CounterRng(self.seed, stream=label)


# ---------------------------------------------------------------------------
# band-limited random fields
# ---------------------------------------------------------------------------

def _random_scalar_values(grid, rng, kmax, n_modes):
    vals = np.zeros(grid.shape)
    for _ in range(n_modes):
        kv = [rng.randint(-kmax, kmax) for _ in range(grid.n)]
        amp = rng.uniform(-1.0, 1.0)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        phase = sum(c * x for c, x in zip(kv, grid.coords)) + ph
        vals += amp * np.cos(phase)
    return vals


def random_scalar(grid, rng, kmax=2, n_modes=4):
    return ScalarField(grid, _random_scalar_values(grid, rng, kmax, n_modes))


def random_kform(grid, degree, rng, kmax=2, n_modes=4):
    sets = index_sets(grid.n, degree)
    comps = np.stack([_random_scalar_values(grid, rng, kmax, n_modes)
                      for _ in sets]) if sets else np.zeros((0,) + grid.shape)
    return KForm(grid, degree, comps)


def random_vector(grid, rng, kmax=2, n_modes=4):
    comps = np.stack([_random_scalar_values(grid, rng, kmax, n_modes)
                      for _ in range(grid.n)])
    return VectorField(grid, comps)


def random_metric(grid, rng, amplitude=0.25, kmax=1, n_modes=2):
    """Flat metric plus a small band-limited symmetric perturbation."""
    n = grid.n
    comps = []
    for (i, j) in SymTensor2.flat(grid).index_pairs:
        base = 1.0 if i == j else 0.0
        pert = amplitude * _random_scalar_values(grid, rng, kmax, n_modes) / max(n_modes, 1)
        comps.append(base + pert)
    g = SymTensor2(grid, np.stack(comps))
    if not g.is_positive_definite():
        return random_metric(grid, rng, amplitude * 0.5, kmax, n_modes)
    return g
