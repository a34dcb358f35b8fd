"""Deterministic discrete-event simulation of beacon zones and clients.

A world is built from a declarative scenario (JSON): beacons at fixed
positions broadcasting on a fixed cadence, users moving along
piecewise-linear traces, an adjacency graph for session travel, and
optional attacker scripts (replay, wormhole, jamming).  Time is integer
microseconds; the canonical broadcast cadence is 102400 µs.  The same
scenario and seed always produce a byte-identical event log.

Radio model: zero propagation delay; a broadcast reaches every user
inside the beacon's range circle (inclusive), and a login reply reaches
every beacon whose range covers the sender.  There are three logical
channels; jamming a strict subset of them is survivable (frequency
hopping), while jamming all three denies every receiver inside the
jammed area.

Every in-flight message carries ground-truth provenance — which beacon
and period produced it and whether an attacker's equipment transmitted
it — so the event log supports judging attack games after the fact.
The protocol handlers themselves never see these fields.
"""

import hashlib
import heapq
import json
import uuid as uuidlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .abe import scheme as abe
from .abe.policy import PolicyError, parse_policy
from .protocol import AuthService, LoginMessage, client_handle_broadcast, password_verifier
from .rng import DeterministicRng
from .sessions import AdjacencyGraph, SessionStore, TravelRejected
from .tokens import DEFAULT_PERIOD_MS, SimClock, current_period, period_us

TIME_UNIT_US = 1024
DEFAULT_INTERVAL_MS = 102.4  # 100 time units
CHANNELS = (0, 1, 2)
FALLBACK_MISSED_INTERVALS = 3

_BEACON_NAMESPACE = uuidlib.uuid5(uuidlib.NAMESPACE_URL, "loc-auth:beacon")


class ScenarioError(ValueError):
    """The scenario document is malformed or internally inconsistent."""


# ---------------------------------------------------------------------------
# Scenario model and validation
# ---------------------------------------------------------------------------

def _ms_to_us(value):
    return int(round(float(value) * 1000))


def beacon_uuid(label):
    """Stable 16-byte beacon identity for a scenario label."""
    try:
        return uuidlib.UUID(label).bytes
    except ValueError:
        return uuidlib.uuid5(_BEACON_NAMESPACE, label).bytes


@dataclass(frozen=True)
class BeaconSpec:
    label: str
    uuid: bytes
    x_m: float
    y_m: float
    range_m: float
    interval_us: int
    policy: str


@dataclass(frozen=True)
class UserSpec:
    username: str
    password: str
    attrs: Tuple[str, ...]
    trace: Tuple[Tuple[int, float, float], ...]  # (t_us, x_m, y_m)


@dataclass(frozen=True)
class ReplayAttack:
    record_at: str
    replay_at_us: int
    replay_target: str  # "broadcast" | "login"
    arm_from_us: int = 0


@dataclass(frozen=True)
class WormholeAttack:
    src: str
    dst: str
    tunnel_delay_us: int
    arm_from_us: int = 0


@dataclass(frozen=True)
class DosJamAttack:
    area: str
    channels: Tuple[int, ...]
    from_us: int
    to_us: int


@dataclass(frozen=True)
class Scenario:
    name: str
    until_us: int
    period_ms: float
    ttl_ms: float
    beacons: Dict[str, BeaconSpec]
    adjacency: Tuple[Tuple[str, str], ...]
    users: Tuple[UserSpec, ...]
    attacks: Tuple[object, ...]


def _require_keys(obj, path, required, optional=()):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{path}: expected an object")
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise ScenarioError(f"{path}: unknown key {key!r}")
    for key in required:
        if key not in obj:
            raise ScenarioError(f"{path}: missing required key {key!r}")


def _require_number(obj, path, key, minimum=None, strict=False):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}.{key}: expected a number")
    if minimum is not None:
        if strict and value <= minimum:
            raise ScenarioError(f"{path}.{key}: must be > {minimum}")
        if not strict and value < minimum:
            raise ScenarioError(f"{path}.{key}: must be >= {minimum}")
    return value


def load_scenario(source) -> Scenario:
    """Parse and validate a scenario from a dict, JSON string, or file path."""
    if isinstance(source, (str, bytes)):
        text = source
        if isinstance(source, str) and not source.lstrip().startswith("{"):
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON: {exc}") from exc
    else:
        raw = source

    _require_keys(raw, "scenario", ("schema", "beacons", "run"),
                  ("name", "token", "session", "adjacency", "users", "attacks"))
    if raw["schema"] != 1:
        raise ScenarioError(f"unsupported schema {raw['schema']!r} (expected 1)")

    run_cfg = raw["run"]
    _require_keys(run_cfg, "run", ("until_ms",))
    until_us = _ms_to_us(_require_number(run_cfg, "run", "until_ms", 0, strict=True))

    period_ms = DEFAULT_PERIOD_MS
    if "token" in raw:
        _require_keys(raw["token"], "token", (), ("period_ms",))
        if "period_ms" in raw["token"]:
            period_ms = _require_number(raw["token"], "token", "period_ms", 0, strict=True)

    ttl_ms = 300_000
    if "session" in raw:
        _require_keys(raw["session"], "session", (), ("ttl_ms",))
        if "ttl_ms" in raw["session"]:
            ttl_ms = _require_number(raw["session"], "session", "ttl_ms", 0, strict=True)

    beacons_raw = raw["beacons"]
    if not isinstance(beacons_raw, list) or not beacons_raw:
        raise ScenarioError("beacons: expected a non-empty list")
    beacons: Dict[str, BeaconSpec] = {}
    for i, b in enumerate(beacons_raw):
        path = f"beacons[{i}]"
        _require_keys(b, path, ("id", "x_m", "y_m", "range_m", "policy"), ("interval_ms",))
        label = b["id"]
        if not isinstance(label, str) or not label:
            raise ScenarioError(f"{path}.id: expected a non-empty string")
        if label in beacons:
            raise ScenarioError(f"{path}.id: duplicate beacon id {label!r}")
        x = _require_number(b, path, "x_m")
        y = _require_number(b, path, "y_m")
        rng_m = _require_number(b, path, "range_m", 0, strict=True)
        interval_ms = DEFAULT_INTERVAL_MS
        if "interval_ms" in b:
            interval_ms = _require_number(b, path, "interval_ms", 0, strict=True)
        policy = b["policy"]
        if not isinstance(policy, str):
            raise ScenarioError(f"{path}.policy: expected a string")
        try:
            parse_policy(policy)
        except PolicyError as exc:
            raise ScenarioError(f"{path}.policy: {exc}") from exc
        beacons[label] = BeaconSpec(
            label=label, uuid=beacon_uuid(label), x_m=float(x), y_m=float(y),
            range_m=float(rng_m), interval_us=_ms_to_us(interval_ms), policy=policy,
        )

    adjacency: List[Tuple[str, str]] = []
    for i, edge in enumerate(raw.get("adjacency", [])):
        path = f"adjacency[{i}]"
        if not isinstance(edge, list) or len(edge) != 2:
            raise ScenarioError(f"{path}: expected a two-element list")
        a, b = edge
        for end in (a, b):
            if end not in beacons:
                raise ScenarioError(f"{path}: unknown beacon {end!r}")
        if a == b:
            raise ScenarioError(f"{path}: self-loop on {a!r}")
        adjacency.append((a, b))

    users: List[UserSpec] = []
    seen_users = set()
    for i, u in enumerate(raw.get("users", [])):
        path = f"users[{i}]"
        _require_keys(u, path, ("username", "password", "attrs", "trace"))
        name = u["username"]
        if not isinstance(name, str) or not name:
            raise ScenarioError(f"{path}.username: expected a non-empty string")
        if name in seen_users:
            raise ScenarioError(f"{path}.username: duplicate user {name!r}")
        seen_users.add(name)
        if not isinstance(u["password"], str):
            raise ScenarioError(f"{path}.password: expected a string")
        attrs = u["attrs"]
        if not isinstance(attrs, list) or not attrs or not all(isinstance(a, str) for a in attrs):
            raise ScenarioError(f"{path}.attrs: expected a non-empty list of strings")
        trace_raw = u["trace"]
        if not isinstance(trace_raw, list) or not trace_raw:
            raise ScenarioError(f"{path}.trace: expected a non-empty list")
        trace: List[Tuple[int, float, float]] = []
        last_t = -1
        for j, wp in enumerate(trace_raw):
            wp_path = f"{path}.trace[{j}]"
            _require_keys(wp, wp_path, ("t_ms", "x_m", "y_m"))
            t_us = _ms_to_us(_require_number(wp, wp_path, "t_ms", 0))
            if t_us < last_t:
                raise ScenarioError(f"{wp_path}.t_ms: waypoints must be time-ordered")
            last_t = t_us
            trace.append((t_us, float(_require_number(wp, wp_path, "x_m")),
                          float(_require_number(wp, wp_path, "y_m"))))
        users.append(UserSpec(username=name, password=u["password"],
                              attrs=tuple(attrs), trace=tuple(trace)))

    attacks: List[object] = []
    for i, a in enumerate(raw.get("attacks", [])):
        path = f"attacks[{i}]"
        if not isinstance(a, dict) or "kind" not in a:
            raise ScenarioError(f"{path}: expected an object with a 'kind'")
        kind = a["kind"]
        if kind == "replay":
            _require_keys(a, path, ("kind", "record_at", "replay_at_ms", "replay_target"),
                          ("arm_from_ms",))
            if a["record_at"] not in beacons:
                raise ScenarioError(f"{path}.record_at: unknown beacon {a['record_at']!r}")
            target = a["replay_target"]
            if target not in ("broadcast", "login"):
                raise ScenarioError(f"{path}.replay_target: expected 'broadcast' or 'login'")
            attacks.append(ReplayAttack(
                record_at=a["record_at"],
                replay_at_us=_ms_to_us(_require_number(a, path, "replay_at_ms", 0)),
                replay_target=target,
                arm_from_us=_ms_to_us(a.get("arm_from_ms", 0)),
            ))
        elif kind == "wormhole":
            _require_keys(a, path, ("kind", "from", "to", "tunnel_delay_ms"), ("arm_from_ms",))
            for end in (a["from"], a["to"]):
                if end not in beacons:
                    raise ScenarioError(f"{path}: unknown beacon {end!r}")
            attacks.append(WormholeAttack(
                src=a["from"], dst=a["to"],
                tunnel_delay_us=_ms_to_us(_require_number(a, path, "tunnel_delay_ms", 0)),
                arm_from_us=_ms_to_us(a.get("arm_from_ms", 0)),
            ))
        elif kind == "dos_jam":
            _require_keys(a, path, ("kind", "area", "channels_jammed", "from_ms", "to_ms"))
            if a["area"] not in beacons:
                raise ScenarioError(f"{path}.area: unknown beacon {a['area']!r}")
            channels = a["channels_jammed"]
            if (not isinstance(channels, list) or not channels
                    or len(set(channels)) != len(channels)
                    or not all(c in CHANNELS for c in channels)):
                raise ScenarioError(f"{path}.channels_jammed: expected unique channels from 0..2")
            from_us = _ms_to_us(_require_number(a, path, "from_ms", 0))
            to_us = _ms_to_us(_require_number(a, path, "to_ms", 0))
            if to_us <= from_us:
                raise ScenarioError(f"{path}: to_ms must be after from_ms")
            attacks.append(DosJamAttack(area=a["area"], channels=tuple(sorted(channels)),
                                        from_us=from_us, to_us=to_us))
        else:
            raise ScenarioError(f"{path}.kind: unknown attack kind {kind!r}")

    return Scenario(
        name=raw.get("name", ""),
        until_us=until_us,
        period_ms=period_ms,
        ttl_ms=ttl_ms,
        beacons=beacons,
        adjacency=tuple(adjacency),
        users=tuple(users),
        attacks=tuple(attacks),
    )


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def position_at(trace, t_us):
    """Piecewise-linear position along a waypoint trace, clamped at the ends."""
    if t_us <= trace[0][0]:
        return trace[0][1], trace[0][2]
    if t_us >= trace[-1][0]:
        return trace[-1][1], trace[-1][2]
    for (t0, x0, y0), (t1, x1, y1) in zip(trace, trace[1:]):
        if t0 <= t_us <= t1:
            if t1 == t0:
                return x1, y1
            f = (t_us - t0) / (t1 - t0)
            return x0 + f * (x1 - x0), y0 + f * (y1 - y0)
    return trace[-1][1], trace[-1][2]


def in_range(pos, beacon: BeaconSpec):
    """True when ``pos`` is inside the beacon's circle (boundary inclusive)."""
    dx = pos[0] - beacon.x_m
    dy = pos[1] - beacon.y_m
    return dx * dx + dy * dy <= beacon.range_m * beacon.range_m


# ---------------------------------------------------------------------------
# World state
# ---------------------------------------------------------------------------

@dataclass
class AirMessage:
    """A message in flight, with simulation-level ground-truth provenance."""

    kind: str  # "broadcast" | "login"
    msg: object
    raw: bytes
    sender: str
    tainted: bool
    origin_beacon: str
    origin_period: int
    password_entered: Optional[bool] = None
    responding_user: Optional[str] = None
    source_broadcast: Optional[object] = None


class ClientAgent:
    """Simulated client device: bundle, cached verifier, and local beliefs."""

    def __init__(self, spec: UserSpec, bundle, verifier):
        self.spec = spec
        self.bundle = bundle
        self.verifier = verifier
        self.handled: set = set()       # (beacon uuid, period) already examined
        self.retried: set = set()       # (beacon label, period) recovery retries spent
        self.last_heard: Dict[str, int] = {}
        self.fallback_active: Dict[str, bool] = {}
        self.session_belief: Optional[Tuple[str, int]] = None  # (beacon label, expires_at_us)

    def believes_active_session(self, now_us):
        return self.session_belief is not None and now_us < self.session_belief[1]

    def position(self, t_us):
        return position_at(self.spec.trace, t_us)


class World:
    """Mutable simulation state; drive it with :func:`run`.

    By default a fresh authority is derived from the seed and scenario
    users are registered on the fly.  Pass ``authority=(params, msk,
    master_secret)`` and ``prebuilt={username: (UserRecord, ClientBundle)}``
    to reuse externally persisted keys instead.
    """

    def __init__(self, scenario: Scenario, seed, authority=None, prebuilt=None):
        self.scenario = scenario
        root = DeterministicRng(seed)
        if authority is None:
            params, msk = abe.setup(128, root.fork("authority"))
            master_secret = root.fork("master-secret").random_bytes(32)
        else:
            params, msk, master_secret = authority
        self.service = AuthService(params, msk, master_secret,
                                   period_ms=scenario.period_ms)
        self.rng = root.fork("events")
        self.clock = SimClock(0)
        self.store = SessionStore(ttl_ms=scenario.ttl_ms)
        self.graph = AdjacencyGraph(
            [(scenario.beacons[a].uuid, scenario.beacons[b].uuid)
             for a, b in scenario.adjacency]
        )
        self.label_of: Dict[bytes, str] = {}
        for label, spec in scenario.beacons.items():
            self.service.register_backend(spec.uuid, spec.policy)
            self.label_of[spec.uuid] = label

        self.agents: Dict[str, ClientAgent] = {}
        prebuilt = prebuilt or {}
        for user in scenario.users:
            if user.username in prebuilt:
                record, bundle = prebuilt[user.username]
                self.service.registry[user.username] = record
            else:
                user_rng = root.fork(f"user/{user.username}")
                _, bundle = self.service.register_user(
                    user.username, user.password, list(user.attrs), user_rng
                )
            verifier = password_verifier(user.password, bundle.salt)
            self.agents[user.username] = ClientAgent(user, bundle, verifier)

        self.log: List[dict] = []
        self._heap: List[tuple] = []
        self._seq = 0
        self.active_jams: List[DosJamAttack] = []
        self.replay_recordings: Dict[int, Optional[AirMessage]] = {}
        self.wormhole_recordings: Dict[int, Dict[str, bool]] = {}

        for label, spec in scenario.beacons.items():
            self.schedule(0, "beacon_tick", label)
        for idx, attack in enumerate(scenario.attacks):
            if isinstance(attack, ReplayAttack):
                self.replay_recordings[idx] = None
                self.schedule(attack.replay_at_us, "replay_fire", idx)
            elif isinstance(attack, WormholeAttack):
                self.wormhole_recordings[idx] = {"broadcast": False, "login": False}
            elif isinstance(attack, DosJamAttack):
                self.schedule(attack.from_us, "jam_on", idx)
                self.schedule(attack.to_us, "jam_off", idx)

    # -- plumbing ------------------------------------------------------------

    def schedule(self, t_us, kind, data):
        heapq.heappush(self._heap, (t_us, self._seq, kind, data))
        self._seq += 1

    def emit(self, kind, **fields):
        row = {"t_us": self.clock.now_us, "kind": kind}
        row.update(fields)
        self.log.append(row)
        return row

    def fully_jammed(self, pos):
        """True when all three channels are denied at ``pos`` right now."""
        now = self.clock.now_us
        for jam in self.active_jams:
            if len(jam.channels) != len(CHANNELS):
                continue
            area = self.scenario.beacons[jam.area]
            if jam.from_us <= now < jam.to_us and in_range(pos, area):
                return True
        return False

    def beacon_pos(self, label):
        spec = self.scenario.beacons[label]
        return spec.x_m, spec.y_m


# ---------------------------------------------------------------------------
# Event handlers
# ---------------------------------------------------------------------------

def _digest(raw):
    """Short content digest so logs witness the exact bytes on the air."""
    return hashlib.sha256(raw).hexdigest()[:16]


def _agents_in_area(world, label):
    spec = world.scenario.beacons[label]
    now = world.clock.now_us
    hits = []
    for name in sorted(world.agents):
        agent = world.agents[name]
        if in_range(agent.position(now), spec):
            hits.append(agent)
    return hits


def _record_hooks(world, air: AirMessage, area_label):
    """Offer a transmission to any attacker recorder armed in this area."""
    now = world.clock.now_us
    for idx, attack in enumerate(world.scenario.attacks):
        if isinstance(attack, ReplayAttack):
            if (attack.record_at == area_label and attack.replay_target == air.kind
                    and world.replay_recordings[idx] is None and now >= attack.arm_from_us):
                world.replay_recordings[idx] = air
                world.emit("attack_recorded", attack="replay", target=air.kind,
                           at_beacon=area_label, origin_period=air.origin_period)
        elif isinstance(attack, WormholeAttack):
            state = world.wormhole_recordings[idx]
            if (attack.src == area_label and not state[air.kind]
                    and now >= attack.arm_from_us):
                state[air.kind] = True
                world.emit("attack_recorded", attack="wormhole", target=air.kind,
                           at_beacon=area_label, origin_period=air.origin_period)
                world.schedule(now + attack.tunnel_delay_us, "tunnel_deliver",
                               (idx, air))


def _on_beacon_tick(world, label):
    spec = world.scenario.beacons[label]
    period = current_period(world.clock, world.scenario.period_ms)
    bc = world.service.broadcast_step(spec.uuid, world.clock, world.rng)
    raw = bc.to_bytes()
    world.emit("beacon_tick", beacon=label, period=period, n_bytes=len(raw),
               digest=_digest(raw))
    air = AirMessage(kind="broadcast", msg=bc, raw=raw, sender=f"beacon:{label}",
                     tainted=False, origin_beacon=label, origin_period=period)
    if world.fully_jammed(world.beacon_pos(label)):
        world.emit("broadcast_jammed", beacon=label, period=period)
    else:
        _record_hooks(world, air, label)
        _deliver_broadcast(world, air, label)
    world.schedule(world.clock.now_us + spec.interval_us, "beacon_tick", label)


def _deliver_broadcast(world, air: AirMessage, area_label):
    for agent in _agents_in_area(world, area_label):
        if world.fully_jammed(agent.position(world.clock.now_us)):
            continue
        _agent_hear_broadcast(world, agent, area_label, air)


def _agent_hear_broadcast(world, agent: ClientAgent, heard_at_label, air: AirMessage):
    now = world.clock.now_us
    interval = world.scenario.beacons[heard_at_label].interval_us
    agent.last_heard[heard_at_label] = now
    agent.fallback_active.pop(heard_at_label, None)
    world.schedule(now + FALLBACK_MISSED_INTERVALS * interval + 1, "fallback_check",
                   (agent.spec.username, heard_at_label, now))

    key = (air.msg.beacon_id, air.msg.period)
    if key in agent.handled:
        return
    agent.handled.add(key)
    _send_login(world, agent, air, forced_password=False)


def _send_login(world, agent: ClientAgent, broadcast_air: AirMessage, forced_password):
    now = world.clock.now_us
    msg = broadcast_air.msg
    login = client_handle_broadcast(
        world.service.params, agent.bundle, None, msg, world.clock, world.rng,
        period_ms=world.scenario.period_ms, pwd_verifier=agent.verifier,
    )
    if login is None:
        return
    password_entered = forced_password or not agent.believes_active_session(now)
    raw = login.to_bytes()
    air = AirMessage(
        kind="login", msg=login, raw=raw, sender=f"user:{agent.spec.username}",
        tainted=broadcast_air.tainted, origin_beacon=broadcast_air.origin_beacon,
        origin_period=broadcast_air.origin_period, password_entered=password_entered,
        responding_user=agent.spec.username, source_broadcast=broadcast_air,
    )
    world.emit("login_sent", user=agent.spec.username,
               claimed_beacon=world.label_of.get(msg.beacon_id, msg.beacon_id.hex()),
               claimed_period=msg.period, password_entered=password_entered,
               tainted=air.tainted, origin_beacon=air.origin_beacon,
               origin_period=air.origin_period, n_bytes=len(raw),
               digest=_digest(raw))
    pos = agent.position(now)
    for label in sorted(world.scenario.beacons):
        spec = world.scenario.beacons[label]
        if not in_range(pos, spec):
            continue
        _record_hooks(world, air, label)
        if world.fully_jammed((spec.x_m, spec.y_m)):
            world.emit("login_jammed", user=agent.spec.username, beacon=label)
            continue
        _verify_at_beacon(world, air, label)


def _verify_at_beacon(world, air: AirMessage, receiving_label):
    spec = world.scenario.beacons[receiving_label]
    result = world.service.verify_login(air.raw, world.clock,
                                        receiving_beacon_id=spec.uuid)
    now_period = current_period(world.clock, world.scenario.period_ms)
    claimed_label = world.label_of.get(air.msg.beacon_id, air.msg.beacon_id.hex())
    row = dict(
        user=result.username if result.authenticated else air.responding_user,
        sender=air.sender,
        beacon=receiving_label,
        claimed_beacon=claimed_label,
        claimed_period=air.msg.period,
        period=now_period,
        outcome="authenticated" if result.authenticated else "rejected",
        reason=None if result.authenticated else result.reason.value,
        tainted=air.tainted,
        origin_beacon=air.origin_beacon,
        origin_period=air.origin_period,
        password_entered=air.password_entered,
    )
    world.emit("auth_outcome", **row)
    if result.authenticated and air.responding_user is not None:
        _apply_session(world, air, receiving_label, result)


def _apply_session(world, air: AirMessage, receiving_label, result):
    agent = world.agents[air.responding_user]
    spec = world.scenario.beacons[receiving_label]
    username = result.username
    if air.password_entered:
        session = world.store.establish(username, spec.uuid, world.clock)
        world.emit("session_established", user=username, beacon=receiving_label,
                   expires_at_us=session.expires_at_us)
        agent.session_belief = (receiving_label, session.expires_at_us)
        world.schedule(session.expires_at_us, "session_sweep", None)
        return
    prior = world.store.get(username)
    from_label = world.label_of.get(prior.beacon_id) if prior is not None else None
    try:
        session = world.store.travel(username, spec.uuid, world.graph, world.clock)
    except TravelRejected as exc:
        world.emit("travel_rejected", user=username, at_beacon=receiving_label,
                   from_beacon=from_label, reason=exc.reason)
        retry_key = (receiving_label, air.msg.period)
        if retry_key not in agent.retried:
            agent.retried.add(retry_key)
            _send_login(world, agent, air.source_broadcast, forced_password=True)
        return
    world.emit("session_traveled", user=username,
               from_beacon=from_label, to_beacon=receiving_label,
               expires_at_us=session.expires_at_us)
    agent.session_belief = (receiving_label, session.expires_at_us)
    world.schedule(session.expires_at_us, "session_sweep", None)


def _on_fallback_check(world, data):
    username, label, heard_at = data
    agent = world.agents[username]
    if agent.last_heard.get(label) != heard_at:
        return  # a newer broadcast arrived; this check is stale
    if agent.fallback_active.get(label):
        return
    spec = world.scenario.beacons[label]
    if not in_range(agent.position(world.clock.now_us), spec):
        return
    agent.fallback_active[label] = True
    world.emit("fallback_required", user=username, beacon=label,
               last_heard_us=heard_at, missed_intervals=FALLBACK_MISSED_INTERVALS)


def _on_session_sweep(world, _data):
    for session in world.store.sweep_expired(world.clock):
        world.emit("session_expired", user=session.username,
                   beacon=world.label_of.get(session.beacon_id),
                   expired_at_us=session.expires_at_us)


def _on_replay_fire(world, idx):
    attack: ReplayAttack = world.scenario.attacks[idx]
    recorded = world.replay_recordings[idx]
    if recorded is None:
        world.emit("attack_noop", attack="replay", at_beacon=attack.record_at,
                   target=attack.replay_target)
        return
    world.emit("attack_replayed", target=recorded.kind, at_beacon=attack.record_at,
               origin_beacon=recorded.origin_beacon, origin_period=recorded.origin_period)
    replayed = AirMessage(
        kind=recorded.kind, msg=recorded.msg, raw=recorded.raw, sender="attacker",
        tainted=True, origin_beacon=recorded.origin_beacon,
        origin_period=recorded.origin_period,
        responding_user=None, source_broadcast=recorded.source_broadcast,
    )
    if recorded.kind == "broadcast":
        _deliver_broadcast(world, replayed, attack.record_at)
    else:
        if not world.fully_jammed(world.beacon_pos(attack.record_at)):
            _verify_at_beacon(world, replayed, attack.record_at)


def _on_tunnel_deliver(world, data):
    idx, recorded = data
    attack: WormholeAttack = world.scenario.attacks[idx]
    world.emit("attack_tunneled", target=recorded.kind, from_beacon=attack.src,
               to_beacon=attack.dst, origin_period=recorded.origin_period)
    tunneled = AirMessage(
        kind=recorded.kind, msg=recorded.msg, raw=recorded.raw, sender="attacker",
        tainted=True, origin_beacon=recorded.origin_beacon,
        origin_period=recorded.origin_period,
        responding_user=None, source_broadcast=recorded.source_broadcast,
    )
    if recorded.kind == "broadcast":
        _deliver_broadcast(world, tunneled, attack.dst)
    else:
        if not world.fully_jammed(world.beacon_pos(attack.dst)):
            _verify_at_beacon(world, tunneled, attack.dst)


def _on_jam(world, idx, active):
    attack: DosJamAttack = world.scenario.attacks[idx]
    if active:
        world.active_jams.append(attack)
        world.emit("jam_started", area=attack.area, channels=list(attack.channels))
    else:
        world.active_jams = [j for j in world.active_jams if j is not attack]
        world.emit("jam_ended", area=attack.area, channels=list(attack.channels))


_HANDLERS = {
    "beacon_tick": _on_beacon_tick,
    "fallback_check": _on_fallback_check,
    "session_sweep": _on_session_sweep,
    "replay_fire": _on_replay_fire,
    "tunnel_deliver": _on_tunnel_deliver,
}


# ---------------------------------------------------------------------------
# Driving the world
# ---------------------------------------------------------------------------

def run(world: World, until_ms=None) -> List[dict]:
    """Process events strictly before the horizon; returns the event log."""
    until_us = world.scenario.until_us if until_ms is None else _ms_to_us(until_ms)
    heap = world._heap
    while heap and heap[0][0] < until_us:
        t_us, _seq, kind, data = heapq.heappop(heap)
        world.clock.advance_to_us(t_us)
        if kind == "jam_on":
            _on_jam(world, data, True)
        elif kind == "jam_off":
            _on_jam(world, data, False)
        else:
            _HANDLERS[kind](world, data)
    world.clock.advance_to_us(max(world.clock.now_us, until_us))
    return world.log


def run_scenario(source, seed, until_ms=None) -> List[dict]:
    """Load a scenario, build a world from the seed, run it, return the log."""
    scenario = source if isinstance(source, Scenario) else load_scenario(source)
    world = World(scenario, seed)
    return run(world, until_ms)


def log_to_jsonl(log) -> str:
    """Canonical JSONL rendering: sorted keys, compact separators, one row/line."""
    return "".join(
        json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n" for row in log
    )


# ---------------------------------------------------------------------------
# Log-level invariants
# ---------------------------------------------------------------------------

def attacker_attributable(row):
    """An authentication the attacker can claim credit for.

    Honest traffic an attacker merely relayed to the right beacon within
    the right period does not count; anything accepted at another beacon
    or in another period off attacker-transmitted bytes does.
    """
    return (
        row.get("kind") == "auth_outcome"
        and row.get("outcome") == "authenticated"
        and row.get("tainted")
        and not (row.get("beacon") == row.get("origin_beacon")
                 and row.get("period") == row.get("origin_period"))
    )


def check_invariants(scenario: Scenario, log) -> List[dict]:
    """Scan a finished log for safety violations; returns violation rows."""
    violations = []
    for row in log:
        if attacker_attributable(row):
            violations.append({"invariant": "no_attacker_attributable_auth", "row": row})
    edges = {frozenset(e) for e in scenario.adjacency}
    for row in log:
        if row.get("kind") != "session_traveled":
            continue
        src, dst = row.get("from_beacon"), row.get("to_beacon")
        if src is not None and src != dst and frozenset((src, dst)) not in edges:
            violations.append({"invariant": "travel_respects_adjacency", "row": row})
    ticks: Dict[str, List[int]] = {}
    for row in log:
        if row.get("kind") == "beacon_tick":
            ticks.setdefault(row["beacon"], []).append(row["t_us"])
    for label, times in ticks.items():
        interval = scenario.beacons[label].interval_us
        for i, t in enumerate(times):
            if t != i * interval:
                violations.append({
                    "invariant": "broadcast_cadence",
                    "row": {"beacon": label, "index": i, "t_us": t,
                            "expected_us": i * interval},
                })
                break
    return violations
