"""Injectable randomness sources.

Every randomized operation in the package takes an explicit rng so that
seeded runs are bit-reproducible.  ``SystemRng`` wraps the OS entropy pool;
``DeterministicRng`` is a SHA-256 counter stream for simulations and tests
(reproducibility, not a hardened DRBG — the simulator is the only consumer
of seeded streams).
"""

import hashlib
import os


class SystemRng:
    """Operating-system entropy; the default for real key material."""

    def random_bytes(self, n):
        return os.urandom(n)


class DeterministicRng:
    """Reproducible byte stream: SHA-256 over (seed, block counter)."""

    def __init__(self, seed):
        if isinstance(seed, int):
            seed = seed.to_bytes(max(1, (seed.bit_length() + 8) // 8), "big", signed=True)
        elif isinstance(seed, str):
            seed = seed.encode("utf-8")
        elif not isinstance(seed, (bytes, bytearray)):
            raise TypeError(f"unsupported seed type {type(seed).__name__}")
        self._seed = bytes(seed)
        self._counter = 0
        self._buffer = b""

    def random_bytes(self, n):
        out = bytearray()
        while len(out) < n:
            if not self._buffer:
                self._buffer = hashlib.sha256(
                    self._seed + self._counter.to_bytes(8, "big")
                ).digest()
                self._counter += 1
            take = min(n - len(out), len(self._buffer))
            out += self._buffer[:take]
            self._buffer = self._buffer[take:]
        return bytes(out)

    def fork(self, label):
        """Independent stream for a named sub-purpose of this seed."""
        return DeterministicRng(hashlib.sha256(self._seed + b"/" + label.encode("utf-8")).digest())


def rand_scalar(rng, order, nonzero=False):
    """Uniform-enough scalar mod `order` (oversampled 384-bit reduction)."""
    while True:
        value = int.from_bytes(rng.random_bytes(48), "big") % order
        if value or not nonzero:
            return value
