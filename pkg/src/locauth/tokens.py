"""Keyed time-period token derivations and the injectable clock.

Two token families drive the protocol: the per-beacon *session token*
(proof of location, derived from the authority's master secret, a beacon
identity, and the current period index) and the per-user *c-token*
(derived from a seed shared at registration).  Both are the first 16 bytes
of an HMAC-SHA-256; key-grade width rather than human-readable digits,
because the session token doubles as an encryption key downstream.

A period is ``floor(now_ms / period_ms)``; the boundary instant belongs to
the new period.  Clocks are injected objects exposing ``now_ms`` (and, for
exact integer arithmetic in simulations, optionally ``now_us``).
"""

import hmac
import hashlib

DEFAULT_PERIOD_MS = 30_000
TOKEN_LEN = 16


class SimClock:
    """Single-writer simulation clock carried in integer microseconds."""

    def __init__(self, now_us=0):
        self.now_us = int(now_us)

    @property
    def now_ms(self):
        return self.now_us / 1000

    def advance_to_us(self, t_us):
        if t_us < self.now_us:
            raise ValueError("clock may not move backwards")
        self.now_us = int(t_us)


def period_us(period_ms):
    """Period length in integer microseconds."""
    if period_ms <= 0:
        raise ValueError("period_ms must be positive")
    value = int(round(period_ms * 1000))
    if value <= 0:
        raise ValueError("period_ms too small")
    return value


def current_period(clock, period_ms=DEFAULT_PERIOD_MS):
    """Period index at the clock's current time (boundary starts new period)."""
    now_us = getattr(clock, "now_us", None)
    if now_us is not None:
        return now_us // period_us(period_ms)
    if period_ms <= 0:
        raise ValueError("period_ms must be positive")
    return int(clock.now_ms // period_ms)


def _period_bytes(period):
    period = int(period)
    if not 0 <= period < 1 << 64:
        raise ValueError(f"period {period} outside unsigned 64-bit range")
    return period.to_bytes(8, "big")


def derive_session_token(master_secret, beacon_id, period):
    """Session token t_k for (beacon, period): HMAC(master, id || period)[:16]."""
    if len(master_secret) != 32:
        raise ValueError("master secret must be 32 bytes")
    if len(beacon_id) != 16:
        raise ValueError("beacon id must be 16 bytes")
    msg = beacon_id + _period_bytes(period)
    return hmac.new(master_secret, msg, hashlib.sha256).digest()[:TOKEN_LEN]


def derive_c_token(user_seed, period):
    """Per-user c-token for a period: HMAC(seed, period)[:16]."""
    if len(user_seed) != 32:
        raise ValueError("user seed must be 32 bytes")
    return hmac.new(user_seed, _period_bytes(period), hashlib.sha256).digest()[:TOKEN_LEN]
