"""Seeded, counter-based random numbers.

Uniforms come from numpy's Philox counter generator keyed by (seed, stream);
Gaussians are produced from them with Box-Muller so the whole chain is
defined by integer arithmetic on the counter and reproducible everywhere.
"""
import math

import numpy as np

_MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)


class SeededRng:
    def __init__(self, seed=0, stream=0):
        seed = int(seed)
        stream = int(stream)
        if not (0 <= seed <= _MASK64 and 0 <= stream <= _MASK64):
            raise ValueError("seed and stream must be 64-bit unsigned integers")
        self.seed = seed
        self.stream = stream
        self._bits = np.random.Philox(key=seed | (stream << 64))

    def spawn(self, stream):
        """Independent generator sharing this seed, on another stream."""
        return SeededRng(self.seed, stream)

    def raw(self, n):
        return self._bits.random_raw(n)

    def uniform(self, size=None):
        """Doubles in [0, 1) with 53 random bits."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        half = (n + 1) // 2
        u1 = self.uniform(half)
        u2 = self.uniform(half)
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        angle = 2.0 * math.pi * u2
        z = np.empty(2 * half)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return float(z[0]) if size is None else z[:n].reshape(size)

    def integers(self, high, size=None):
        """Uniform integers in [0, high)."""
        if high < 1:
            raise ValueError("high must be >= 1")
        u = self.uniform(1 if size is None else size)
        out = np.minimum((np.asarray(u) * high).astype(np.int64), high - 1)
        return int(out.reshape(-1)[0]) if size is None else out

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")

    def get_state(self):
        st = self._bits.state
        return {
            "seed": self.seed,
            "stream": self.stream,
            "counter": [int(v) for v in st["state"]["counter"]],
            "key": [int(v) for v in st["state"]["key"]],
            "buffer": [int(v) for v in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    def set_state(self, state):
        self.seed = int(state["seed"])
        self.stream = int(state["stream"])
        self._bits.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array(state["counter"], dtype=np.uint64),
                "key": np.array(state["key"], dtype=np.uint64),
            },
            "buffer": np.array(state["buffer"], dtype=np.uint64),
            "buffer_pos": int(state["buffer_pos"]),
            "has_uint32": int(state["has_uint32"]),
            "uinteger": int(state["uinteger"]),
        }

    @classmethod
    def from_state(cls, state):
        rng = cls(state["seed"], state["stream"])
        rng.set_state(state)
        return rng


def gaussian_vector(rng, dim):
    """i.i.d. standard normal vector of length ``dim``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return rng.normal((dim,))
