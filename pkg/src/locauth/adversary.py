"""Attack games: scripted adversaries and log-judged verdicts.

Each game builds a small scripted world containing honest participants
and one attacker capability (message replay, a wormhole tunnel, or an
area jammer), runs it deterministically, and then judges the outcome
*from the event log alone* — the verdict logic never inspects live
protocol state, so a passing game is evidence about observable behavior.

The attacker is deliberately weak in the cryptographic sense: it records
ciphertext bytes it could physically overhear and re-transmits them; it
never holds user keys or the master secret.
"""

from dataclasses import dataclass, field
from typing import List, Optional

from .simworld import (
    DosJamAttack,
    ReplayAttack,
    Scenario,
    WormholeAttack,
    World,
    attacker_attributable,
    load_scenario,
    run,
)

GAME_PASS = "Pass"
GAME_FAIL = "Fail"


class GameSetupError(ValueError):
    """The scenario cannot host the requested game (mis-specified script)."""


@dataclass(frozen=True)
class GameCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class GameOutcome:
    game: str
    variant: str
    passed: bool
    checks: List[GameCheck] = field(default_factory=list)
    log: List[dict] = field(default_factory=list)

    @property
    def verdict(self):
        return GAME_PASS if self.passed else GAME_FAIL


def _finish(world, game, variant, checks):
    passed = all(c.passed for c in checks)
    world.emit(
        "game_verdict", game=game, variant=variant,
        verdict=GAME_PASS if passed else GAME_FAIL,
        checks=[{"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in checks],
    )
    return GameOutcome(game=game, variant=variant, passed=passed,
                       checks=checks, log=world.log)


def _rows(log, kind, **match):
    out = []
    for row in log:
        if row.get("kind") != kind:
            continue
        if all(row.get(k) == v for k, v in match.items()):
            out.append(row)
    return out


def _check(name, passed, detail):
    return GameCheck(name=name, passed=bool(passed), detail=detail)


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def build_replay_scenario(delta_ms):
    """One beacon, a resident responder, a late-arriving responder, and an
    attacker that replays both the recorded broadcast and the recorded
    login ``delta_ms`` after the recording's period ends (within the same
    period when ``delta_ms`` <= 0, the control variant)."""
    period_ms = 1000
    if delta_ms > 0:
        fire_ms = period_ms + delta_ms
    else:
        fire_ms = 500
    until_ms = fire_ms + 302
    return {
        "schema": 1,
        "name": "replay-game",
        "run": {"until_ms": until_ms},
        "token": {"period_ms": period_ms},
        "session": {"ttl_ms": 300_000},
        "beacons": [
            {"id": "B1", "x_m": 0, "y_m": 0, "range_m": 10,
             "interval_ms": 10_000, "policy": "zone:secure"},
        ],
        "adjacency": [],
        "users": [
            {"username": "alice", "password": "orbit-petal-9",
             "attrs": ["zone:secure"],
             "trace": [{"t_ms": 0, "x_m": 0, "y_m": 0}]},
            {"username": "carol", "password": "maple-quartz-7",
             "attrs": ["zone:secure"],
             "trace": [{"t_ms": 0, "x_m": 30, "y_m": 0},
                       {"t_ms": 400, "x_m": 0, "y_m": 2}]},
        ],
        "attacks": [
            {"kind": "replay", "record_at": "B1", "replay_at_ms": fire_ms,
             "replay_target": "broadcast"},
            {"kind": "replay", "record_at": "B1", "replay_at_ms": fire_ms + 1,
             "replay_target": "login"},
        ],
    }


def _require_recordings(log, expected):
    recorded = {row["target"] for row in _rows(log, "attack_recorded")}
    missing = expected - recorded
    if missing:
        raise GameSetupError(
            f"attacker recorded nothing for {sorted(missing)} — no qualified "
            "honest traffic passed through the recording area in time"
        )


def run_replay_game(delta_ms=1000, seed=0, scenario=None) -> GameOutcome:
    """Replay recorded messages after (or, for the control, within) the
    validity window and judge the responses from the log."""
    if scenario is None:
        scenario = load_scenario(build_replay_scenario(delta_ms))
    elif not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    replays = [a for a in scenario.attacks if isinstance(a, ReplayAttack)]
    if not replays:
        raise GameSetupError("scenario contains no replay attack")
    if not scenario.users:
        raise GameSetupError("scenario has no honest users to respond")

    world = World(scenario, seed)
    log = run(world)
    _require_recordings(log, {"broadcast", "login"})

    honest_tainted = [
        r for r in _rows(log, "auth_outcome", tainted=True)
        if r["sender"].startswith("user:")
    ]
    attacker_logins = _rows(log, "auth_outcome", sender="attacker")
    attributable = [r for r in log if attacker_attributable(r)]

    if delta_ms > 0:
        checks = [
            _check(
                "replayed_broadcast_reply_rejected",
                honest_tainted
                and all(r["outcome"] == "rejected" and r["reason"] == "token_mismatch"
                        for r in honest_tainted),
                f"{len(honest_tainted)} honest replies to the replayed broadcast; "
                "all must be rejected with token_mismatch",
            ),
            _check(
                "replayed_login_rejected",
                attacker_logins
                and all(r["outcome"] == "rejected" and r["reason"] == "token_mismatch"
                        for r in attacker_logins),
                f"{len(attacker_logins)} replayed logins; all must be rejected "
                "with token_mismatch",
            ),
            _check(
                "no_attacker_attributable_auth",
                not attributable,
                f"{len(attributable)} attacker-attributable authentications",
            ),
        ]
        return _finish(world, "replay", f"delta_ms={delta_ms}", checks)

    accepted = [r for r in honest_tainted if r["outcome"] == "authenticated"]
    checks = [
        _check(
            "within_window_reply_accepted",
            accepted
            and all(r["beacon"] == r["origin_beacon"]
                    and r["period"] == r["origin_period"] for r in accepted),
            f"{len(accepted)} honest replies to the within-window replay "
            "accepted at the original beacon and period",
        ),
        _check(
            "within_window_login_replay_hits_nonce_cache",
            attacker_logins
            and all(r["outcome"] == "rejected" and r["reason"] == "replayed_nonce"
                    for r in attacker_logins),
            f"{len(attacker_logins)} replayed logins; all must be rejected "
            "with replayed_nonce",
        ),
        _check(
            "no_attacker_attributable_auth",
            not attributable,
            f"{len(attributable)} attacker-attributable authentications",
        ),
    ]
    return _finish(world, "replay", "control", checks)


# ---------------------------------------------------------------------------
# Wormhole
# ---------------------------------------------------------------------------

def build_wormhole_scenario(same_location=False):
    """Two widely separated beacons; the attacker tunnels the first
    broadcast and the first login from the source zone to the target.
    The control variant tunnels back into the source zone itself."""
    users = [
        {"username": "alice", "password": "orbit-petal-9",
         "attrs": ["zone:secure"],
         "trace": [{"t_ms": 0, "x_m": 0, "y_m": 0}]},
        {"username": "dave", "password": "cedar-lamp-42",
         "attrs": ["zone:secure"],
         "trace": [{"t_ms": 0, "x_m": 100, "y_m": 0}]},
    ]
    if same_location:
        users.append(
            {"username": "carol", "password": "maple-quartz-7",
             "attrs": ["zone:secure"],
             "trace": [{"t_ms": 0, "x_m": 30, "y_m": 0},
                       {"t_ms": 400, "x_m": 0, "y_m": 2}]}
        )
    return {
        "schema": 1,
        "name": "wormhole-game",
        "run": {"until_ms": 1000},
        "token": {"period_ms": 1000},
        "session": {"ttl_ms": 300_000},
        "beacons": [
            {"id": "B1", "x_m": 0, "y_m": 0, "range_m": 10,
             "interval_ms": 10_000, "policy": "zone:secure"},
            {"id": "B2", "x_m": 100, "y_m": 0, "range_m": 10,
             "interval_ms": 10_000, "policy": "zone:secure"},
        ],
        "adjacency": [],
        "users": users,
        "attacks": [
            {"kind": "wormhole", "from": "B1",
             "to": "B1" if same_location else "B2",
             "tunnel_delay_ms": 500},
        ],
    }


def run_wormhole_game(same_location=False, seed=0, scenario=None) -> GameOutcome:
    """Tunnel fresh messages between beacon zones within the token window.

    The distant variant must die on the token's beacon binding; the
    same-location control shows the tunnel itself is not what the
    defense rejects.
    """
    if scenario is None:
        scenario = load_scenario(build_wormhole_scenario(same_location))
    elif not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    tunnels = [a for a in scenario.attacks if isinstance(a, WormholeAttack)]
    if not tunnels:
        raise GameSetupError("scenario contains no wormhole attack")
    for attack in tunnels:
        src = scenario.beacons[attack.src]
        dst = scenario.beacons[attack.dst]
        if attack.src == attack.dst:
            continue
        dx, dy = src.x_m - dst.x_m, src.y_m - dst.y_m
        if (dx * dx + dy * dy) ** 0.5 <= src.range_m + dst.range_m:
            raise GameSetupError(
                f"beacon ranges of {attack.src!r} and {attack.dst!r} overlap; "
                "the wormhole game needs physically disjoint zones"
            )

    world = World(scenario, seed)
    log = run(world)
    _require_recordings(log, {"broadcast", "login"})

    honest_tainted = [
        r for r in _rows(log, "auth_outcome", tainted=True)
        if r["sender"].startswith("user:")
    ]
    attacker_logins = _rows(log, "auth_outcome", sender="attacker")
    attributable = [r for r in log if attacker_attributable(r)]

    if not same_location:
        cross_zone = [r for r in honest_tainted if r["beacon"] != r["origin_beacon"]]
        checks = [
            _check(
                "tunneled_broadcast_reply_rejected",
                cross_zone
                and all(r["outcome"] == "rejected" and r["reason"] == "token_mismatch"
                        for r in cross_zone),
                f"{len(cross_zone)} honest replies to the tunneled broadcast at "
                "the distant beacon; all must be rejected with token_mismatch",
            ),
            _check(
                "tunneled_login_rejected",
                attacker_logins
                and all(r["outcome"] == "rejected" and r["reason"] == "token_mismatch"
                        for r in attacker_logins),
                f"{len(attacker_logins)} tunneled logins; all must be rejected "
                "with token_mismatch",
            ),
            _check(
                "no_attacker_attributable_auth",
                not attributable,
                f"{len(attributable)} attacker-attributable authentications",
            ),
        ]
        return _finish(world, "wormhole", "distant", checks)

    accepted = [r for r in honest_tainted if r["outcome"] == "authenticated"]
    checks = [
        _check(
            "same_location_reply_accepted",
            accepted
            and all(r["beacon"] == r["origin_beacon"]
                    and r["period"] == r["origin_period"] for r in accepted),
            f"{len(accepted)} honest replies to the same-zone tunnel accepted",
        ),
        _check(
            "same_location_login_replay_hits_nonce_cache",
            attacker_logins
            and all(r["outcome"] == "rejected" and r["reason"] == "replayed_nonce"
                    for r in attacker_logins),
            f"{len(attacker_logins)} tunneled duplicate logins; all must be "
            "rejected with replayed_nonce",
        ),
        _check(
            "no_attacker_attributable_auth",
            not attributable,
            f"{len(attributable)} attacker-attributable authentications",
        ),
    ]
    return _finish(world, "wormhole", "same_location", checks)


# ---------------------------------------------------------------------------
# Denial of service
# ---------------------------------------------------------------------------

def build_dos_scenario():
    """One beacon zone jammed twice: first on two of three channels
    (survivable), then on all three (denial with client fallback)."""
    return {
        "schema": 1,
        "name": "dos-game",
        "run": {"until_ms": 12_000},
        "token": {"period_ms": 2000},
        "session": {"ttl_ms": 300_000},
        "beacons": [
            {"id": "B1", "x_m": 0, "y_m": 0, "range_m": 10,
             "interval_ms": 102.4, "policy": "zone:lab"},
        ],
        "adjacency": [],
        "users": [
            {"username": "alice", "password": "orbit-petal-9",
             "attrs": ["zone:lab"],
             "trace": [{"t_ms": 0, "x_m": 0, "y_m": 0}]},
        ],
        "attacks": [
            {"kind": "dos_jam", "area": "B1", "channels_jammed": [0, 1],
             "from_ms": 500, "to_ms": 4500},
            {"kind": "dos_jam", "area": "B1", "channels_jammed": [0, 1, 2],
             "from_ms": 6500, "to_ms": 10_500},
        ],
    }


def run_dos_game(seed=0, scenario=None) -> GameOutcome:
    """Jam a zone partially, then fully, in one run; judge availability,
    fallback signalling, and recovery from the log."""
    if scenario is None:
        scenario = load_scenario(build_dos_scenario())
    elif not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    jams = [a for a in scenario.attacks if isinstance(a, DosJamAttack)]
    partial = [j for j in jams if len(j.channels) < 3]
    full = [j for j in jams if len(j.channels) == 3]
    if not partial or not full:
        raise GameSetupError(
            "the denial game needs both a partial jam and a full jam"
        )
    partial_jam, full_jam = partial[0], full[0]
    area = scenario.beacons[full_jam.area]

    world = World(scenario, seed)
    log = run(world)

    auths = _rows(log, "auth_outcome", outcome="authenticated")
    in_partial = [r for r in auths
                  if partial_jam.from_us <= r["t_us"] < partial_jam.to_us]
    in_full = [r for r in auths
               if full_jam.from_us <= r["t_us"] < full_jam.to_us]
    after_full = [r for r in auths if r["t_us"] >= full_jam.to_us]
    fallbacks = _rows(log, "fallback_required")
    fallback_bound_us = 3 * area.interval_us + 1000
    timely = [
        r for r in fallbacks
        if full_jam.from_us <= r["t_us"] < full_jam.to_us
        and r["t_us"] - r["last_heard_us"] <= fallback_bound_us
    ]
    spurious = [r for r in fallbacks
                if not (full_jam.from_us <= r["t_us"] < full_jam.to_us)]

    checks = [
        _check(
            "partial_jam_service_continues",
            bool(in_partial),
            f"{len(in_partial)} authentications during the partial jam",
        ),
        _check(
            "full_jam_denies_authentication",
            not in_full,
            f"{len(in_full)} authentications during the full jam (must be 0)",
        ),
        _check(
            "fallback_signalled_within_three_intervals",
            bool(timely),
            f"{len(timely)} timely fallback signals during the full jam",
        ),
        _check(
            "no_spurious_fallback",
            not spurious,
            f"{len(spurious)} fallback signals outside the full jam window",
        ),
        _check(
            "service_recovers_after_jam",
            bool(after_full),
            f"{len(after_full)} authentications after the full jam lifted",
        ),
    ]
    return _finish(world, "dos", "partial_then_full", checks)


# ---------------------------------------------------------------------------
# Generic judgment for scenarios with embedded attacks
# ---------------------------------------------------------------------------

def judge_embedded_attacks(scenario: Scenario, log) -> List[GameCheck]:
    """Variant-agnostic safety checks for whatever attacks a scenario embeds.

    Unlike the scripted games above, these impose no liveness demands
    (an empty log cannot fail them); they assert the defense held
    wherever attacker-influenced traffic actually appeared.
    """
    checks: List[GameCheck] = []
    has_record_replay = any(
        isinstance(a, (ReplayAttack, WormholeAttack)) for a in scenario.attacks
    )
    if has_record_replay:
        tainted = _rows(log, "auth_outcome", tainted=True)
        displaced = [
            r for r in tainted
            if not (r["beacon"] == r["origin_beacon"]
                    and r["period"] == r["origin_period"])
        ]
        checks.append(_check(
            "displaced_traffic_rejected",
            all(r["outcome"] == "rejected" and r["reason"] == "token_mismatch"
                for r in displaced),
            f"{len(displaced)} attacker-displaced login outcomes; all must be "
            "rejected with token_mismatch",
        ))
        duplicates = [
            r for r in _rows(log, "auth_outcome", sender="attacker")
            if r["beacon"] == r["origin_beacon"] and r["period"] == r["origin_period"]
        ]
        checks.append(_check(
            "duplicate_bytes_rejected",
            all(r["outcome"] == "rejected" and r["reason"] == "replayed_nonce"
                for r in duplicates),
            f"{len(duplicates)} attacker-duplicated logins in their original "
            "context; all must be rejected with replayed_nonce",
        ))
    full_jams = [a for a in scenario.attacks
                 if isinstance(a, DosJamAttack) and len(a.channels) == 3]
    for jam in full_jams:
        auths = _rows(log, "auth_outcome", outcome="authenticated")
        in_full = [r for r in auths if jam.from_us <= r["t_us"] < jam.to_us]
        checks.append(_check(
            "full_jam_denies_authentication",
            not in_full,
            f"{len(in_full)} authentications inside the full jam on "
            f"{jam.area!r} (must be 0)",
        ))
    return checks
