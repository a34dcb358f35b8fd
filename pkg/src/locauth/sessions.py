"""Session lifecycle and mobility across adjacent beacon zones.

A successful password-bearing login establishes a session bound to one
beacon.  While the session is active, a login at a physically adjacent
beacon *travels* the session there (sliding-window expiry refresh, no
password re-entry); a login at the session's own beacon is a keepalive
refresh.  Travel to a non-adjacent beacon is rejected — crossing a
non-edge always requires a fresh full login.

Times are integer microseconds internally (exact arithmetic under a
simulated clock); millisecond views are exposed as properties.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

from .tokens import period_us

DEFAULT_TTL_MS = 300_000


class SessionOrigin(Enum):
    """How the session reached its current beacon."""

    FULL_LOGIN = "full_login"
    TRAVELED = "traveled"


class TravelRejected(Exception):
    """A travel attempt was refused; the session is left unchanged."""

    def __init__(self, reason, username=None):
        super().__init__(f"travel rejected ({reason})")
        self.reason = reason
        self.username = username


REASON_NON_ADJACENT = "non_adjacent"
REASON_EXPIRED = "expired"


@dataclass(frozen=True)
class Session:
    """One user's active session at one beacon."""

    username: str
    beacon_id: bytes
    established_at_us: int
    expires_at_us: int
    origin: SessionOrigin
    traveled_from: Optional[bytes] = None

    @property
    def established_at_ms(self):
        return self.established_at_us / 1000

    @property
    def expires_at_ms(self):
        return self.expires_at_us / 1000

    def active_at_us(self, t_us):
        return t_us < self.expires_at_us


class AdjacencyGraph:
    """Undirected beacon adjacency; symmetric, no self-loops."""

    def __init__(self, edges=()):
        self._edges: FrozenSet[Tuple[bytes, bytes]] = frozenset()
        pairs = set()
        for a, b in edges:
            if a == b:
                raise ValueError("adjacency self-loops are not allowed")
            pairs.add((min(a, b), max(a, b)))
        self._edges = frozenset(pairs)

    def adjacent(self, a, b):
        if a == b:
            return False
        return (min(a, b), max(a, b)) in self._edges

    def __len__(self):
        return len(self._edges)

    def edges(self):
        return sorted(self._edges)


class SessionStore:
    """Mutable map of username -> active session (single-writer)."""

    def __init__(self, ttl_ms=DEFAULT_TTL_MS):
        if ttl_ms <= 0:
            raise ValueError("ttl_ms must be positive")
        self.ttl_us = period_us(ttl_ms)
        self._sessions: Dict[str, Session] = {}

    def get(self, username, clock=None):
        """Current session for a user, or None if absent or already expired."""
        session = self._sessions.get(username)
        if session is None:
            return None
        if clock is not None and not session.active_at_us(_now_us(clock)):
            return None
        return session

    def establish(self, username, beacon_id, clock):
        """Record a fresh full login, replacing any existing session."""
        now = _now_us(clock)
        session = Session(
            username=username,
            beacon_id=beacon_id,
            established_at_us=now,
            expires_at_us=now + self.ttl_us,
            origin=SessionOrigin.FULL_LOGIN,
        )
        self._sessions[username] = session
        return session

    def travel(self, username, new_beacon_id, graph, clock):
        """Move a session after a location-factor login at ``new_beacon_id``.

        A login at the current beacon refreshes expiry in place; a login at
        an adjacent beacon relocates the session (also refreshing expiry).
        Raises TravelRejected("expired") when no active session exists and
        TravelRejected("non_adjacent") when the new beacon shares no edge
        with the current one.
        """
        now = _now_us(clock)
        session = self._sessions.get(username)
        if session is None or not session.active_at_us(now):
            raise TravelRejected(REASON_EXPIRED, username)
        if new_beacon_id == session.beacon_id:
            refreshed = replace(session, expires_at_us=now + self.ttl_us)
            self._sessions[username] = refreshed
            return refreshed
        if not graph.adjacent(session.beacon_id, new_beacon_id):
            raise TravelRejected(REASON_NON_ADJACENT, username)
        moved = Session(
            username=username,
            beacon_id=new_beacon_id,
            established_at_us=session.established_at_us,
            expires_at_us=now + self.ttl_us,
            origin=SessionOrigin.TRAVELED,
            traveled_from=session.beacon_id,
        )
        self._sessions[username] = moved
        return moved

    def sweep_expired(self, clock) -> List[Session]:
        """Drop and return sessions whose expiry is at or before now."""
        now = _now_us(clock)
        expired = [s for s in self._sessions.values() if not s.active_at_us(now)]
        for session in expired:
            del self._sessions[session.username]
        return sorted(expired, key=lambda s: (s.expires_at_us, s.username))

    def active_sessions(self, clock):
        now = _now_us(clock)
        return sorted(
            (s for s in self._sessions.values() if s.active_at_us(now)),
            key=lambda s: s.username,
        )


def _now_us(clock):
    now_us = getattr(clock, "now_us", None)
    if now_us is not None:
        return now_us
    return int(round(clock.now_ms * 1000))
