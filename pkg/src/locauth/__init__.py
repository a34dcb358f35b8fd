"""Location-bound authentication toolkit.

Beacons broadcast short-lived session tokens under attribute-based
encryption; clients that hold satisfying attribute keys decrypt them and
prove possession through a two-layer encrypted login. A deterministic
discrete-event simulator exercises the protocol across beacon zones,
roaming users, and scripted replay / wormhole / jamming adversaries.
"""

from . import abe
from .adversary import (
    GameCheck,
    GameOutcome,
    GameSetupError,
    judge_embedded_attacks,
    run_dos_game,
    run_replay_game,
    run_wormhole_game,
)
from .protocol import (
    AuthResult,
    AuthService,
    BroadcastMessage,
    ClientBundle,
    LoginMessage,
    ProtocolError,
    RejectReason,
    UserRecord,
    auth_hash,
    client_handle_broadcast,
    password_verifier,
)
from .rng import DeterministicRng, SystemRng
from .sessions import (
    AdjacencyGraph,
    Session,
    SessionOrigin,
    SessionStore,
    TravelRejected,
)
from .simworld import (
    Scenario,
    ScenarioError,
    World,
    attacker_attributable,
    check_invariants,
    load_scenario,
    log_to_jsonl,
    run_scenario,
)
from .tokens import (
    DEFAULT_PERIOD_MS,
    SimClock,
    current_period,
    derive_c_token,
    derive_session_token,
)

__version__ = "0.1.0"

__all__ = [
    "abe",
    "AdjacencyGraph",
    "AuthResult",
    "AuthService",
    "BroadcastMessage",
    "ClientBundle",
    "DEFAULT_PERIOD_MS",
    "DeterministicRng",
    "GameCheck",
    "GameOutcome",
    "GameSetupError",
    "LoginMessage",
    "ProtocolError",
    "RejectReason",
    "Scenario",
    "ScenarioError",
    "Session",
    "SessionOrigin",
    "SessionStore",
    "SimClock",
    "SystemRng",
    "TravelRejected",
    "UserRecord",
    "World",
    "attacker_attributable",
    "auth_hash",
    "check_invariants",
    "client_handle_broadcast",
    "current_period",
    "derive_c_token",
    "derive_session_token",
    "judge_embedded_attacks",
    "load_scenario",
    "log_to_jsonl",
    "password_verifier",
    "run_dos_game",
    "run_replay_game",
    "run_scenario",
    "run_wormhole_game",
]
