"""Counter-based uniform streams keyed by (seed, sample index, draw index).

Every uniform is a pure function of its three coordinates, so a batch can be
split across workers in any way and still reproduce the same samples.  The
mixing function is the splitmix64 finalizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, indices: np.ndarray) -> np.ndarray:
    base = _mix(np.array([seed & _MASK64], dtype=np.uint64))
    idx = np.asarray(indices, dtype=np.uint64)
    return _mix(base + idx * _GOLDEN)


def uniforms(seed: int, indices: np.ndarray, n_draws: int) -> np.ndarray:
    """Array (len(indices), n_draws) of uniforms in [0, 1)."""
    keys = stream_keys(seed, indices)[:, None]
    draws = (np.arange(1, n_draws + 1, dtype=np.uint64) * _GOLDEN)[None, :]
    bits = _mix(keys + draws) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class SampleStream:
    """The stream of a single sample: master seed plus sample index."""

    seed: int
    index: int = 0

    def uniforms(self, n_draws: int) -> np.ndarray:
        return uniforms(self.seed, np.array([self.index]), n_draws)[0]
