"""Command-line interface: keystores, registration, simulation, attacks.

Exit codes follow the usual convention: 0 for success (and for attack
games, a Pass verdict), 1 for a failed verdict or a logged safety
violation, 2 for usage and validation errors (malformed scenario JSON,
unknown references, refused overwrites, locked keystores).
"""

import argparse
import dataclasses
import fcntl
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

from .abe import scheme as abe
from .abe.policy import (
    PolicyError,
    expand_attributes,
    parse_policy,
    render_tree,
    satisfies,
)
from .adversary import (
    GameSetupError,
    judge_embedded_attacks,
    run_dos_game,
    run_replay_game,
    run_wormhole_game,
)
from .protocol import (
    HKDF_INFO_INNER,
    HKDF_INFO_OUTER,
    ClientBundle,
    UserRecord,
    auth_hash,
    hkdf_sha256,
    password_verifier,
)
from .rng import DeterministicRng, SystemRng
from .simworld import ScenarioError, World, check_invariants, load_scenario, log_to_jsonl, run
from .tokens import derive_c_token, derive_session_token

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class CliError(Exception):
    """User-facing failure mapped to exit code 2."""


# ---------------------------------------------------------------------------
# Keystore and registry persistence
# ---------------------------------------------------------------------------

_PARAMS_FILE = "params.bin"
_MSK_FILE = "msk.bin"
_MASTER_SECRET_FILE = "master_secret.bin"
_LOCK_FILE = ".lock"


@contextmanager
def keystore_lock(keystore: Path):
    """Advisory exclusive lock over a keystore directory."""
    keystore.mkdir(parents=True, exist_ok=True)
    lock_path = keystore / _LOCK_FILE
    fh = open(lock_path, "a")
    try:
        try:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            raise CliError(
                f"keystore {keystore} is locked by another process"
            ) from None
        yield
    finally:
        fcntl.flock(fh.fileno(), fcntl.LOCK_UN)
        fh.close()


def _write_artifact(path: Path, data: bytes, secret=False, force=False):
    """Write binary content plus a .hex sidecar; 0600 when secret."""
    sidecar = path.with_suffix(".hex")
    for target in (path, sidecar):
        if target.exists() and not force:
            raise CliError(f"refusing to overwrite {target} (pass --force)")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    sidecar.write_text(data.hex() + "\n", encoding="ascii")
    if secret:
        os.chmod(path, 0o600)
        os.chmod(sidecar, 0o600)


def _read_bytes(path: Path, what):
    if not path.exists():
        raise CliError(f"{what} not found at {path} (run `locauth setup` first?)")
    return path.read_bytes()


def load_authority(keystore: Path):
    """(params, msk, master_secret) from a keystore directory."""
    try:
        params = abe.PublicParams.from_bytes(
            _read_bytes(keystore / _PARAMS_FILE, "public parameters"))
        msk = abe.MasterKey.from_bytes(
            _read_bytes(keystore / _MSK_FILE, "master key"))
    except abe.SerializationError as exc:
        raise CliError(f"corrupt keystore: {exc}") from exc
    master_secret = _read_bytes(keystore / _MASTER_SECRET_FILE, "master secret")
    if len(master_secret) != 32:
        raise CliError("corrupt keystore: master secret must be 32 bytes")
    return params, msk, master_secret


def load_registry(path: Path):
    """Registry file -> {username: UserRecord}; missing file is empty."""
    if not path.exists():
        return {}
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed registry JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != 1:
        raise CliError("malformed registry: expected {'schema': 1, 'users': ...}")
    registry = {}
    try:
        for name, rec in sorted(doc.get("users", {}).items()):
            registry[name] = UserRecord(
                username=name,
                user_seed=bytes.fromhex(rec["user_seed"]),
                salt=bytes.fromhex(rec["salt"]),
                pwd_verifier=bytes.fromhex(rec["pwd_verifier"]),
                attrs=frozenset(rec["attrs"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"malformed registry entry: {exc}") from exc
    return registry


def save_registry(path: Path, registry):
    doc = {
        "schema": 1,
        "users": {
            name: {
                "user_seed": rec.user_seed.hex(),
                "salt": rec.salt.hex(),
                "pwd_verifier": rec.pwd_verifier.hex(),
                "attrs": sorted(rec.attrs),
            }
            for name, rec in sorted(registry.items())
        },
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _bundle_path(keystore: Path, username: str) -> Path:
    return keystore / "users" / f"{username}.bundle.bin"


def _make_rng(seed):
    return SystemRng() if seed is None else DeterministicRng(seed)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_setup(args):
    keystore = Path(args.keystore)
    rng = _make_rng(args.seed)
    with keystore_lock(keystore):
        params, msk = abe.setup(args.security_level, rng)
        master_secret = rng.random_bytes(32)
        _write_artifact(keystore / _PARAMS_FILE, params.to_bytes(),
                        secret=False, force=args.force)
        _write_artifact(keystore / _MSK_FILE, msk.to_bytes(),
                        secret=True, force=args.force)
        _write_artifact(keystore / _MASTER_SECRET_FILE, master_secret,
                        secret=True, force=args.force)
    print(f"keystore initialized at {keystore}")
    print(f"  {_PARAMS_FILE}: {len(params.to_bytes())} bytes (public)")
    print(f"  {_MSK_FILE}, {_MASTER_SECRET_FILE}: secret, mode 0600")
    return EXIT_OK


def cmd_register(args):
    keystore = Path(args.keystore)
    registry_path = Path(args.registry)
    attrs = [a for a in (s.strip() for s in args.attrs.split(",")) if a]
    if not attrs:
        raise CliError("--attrs must name at least one attribute")
    rng = _make_rng(args.seed)
    with keystore_lock(keystore):
        params, msk, _master_secret = load_authority(keystore)
        registry = load_registry(registry_path)
        if args.username in registry and not args.force:
            raise CliError(
                f"user {args.username!r} already registered (pass --force to replace)"
            )
        try:
            expanded = expand_attributes(attrs)
            usk = abe.keygen(msk, params, attrs, rng)
        except PolicyError as exc:
            raise CliError(f"bad attribute: {exc}") from exc
        user_seed = rng.random_bytes(32)
        salt = rng.random_bytes(16)
        record = UserRecord(
            username=args.username,
            user_seed=user_seed,
            salt=salt,
            pwd_verifier=password_verifier(args.password, salt),
            attrs=expanded,
        )
        registry[args.username] = record
        save_registry(registry_path, registry)
        bundle = ClientBundle(username=args.username, usk=usk,
                              user_seed=user_seed, salt=salt)
        _write_artifact(_bundle_path(keystore, args.username), bundle.to_bytes(),
                        secret=True, force=args.force)
    print(f"registered {args.username!r} with {len(expanded)} attributes")
    print(f"  registry: {registry_path}")
    print(f"  bundle:   {_bundle_path(keystore, args.username)}")
    return EXIT_OK


def _load_prebuilt(keystore: Path, registry_path: Path, scenario):
    """Resolve scenario users against a persisted registry and keystore."""
    registry = load_registry(registry_path)
    prebuilt = {}
    for user in scenario.users:
        record = registry.get(user.username)
        if record is None:
            raise CliError(
                f"scenario user {user.username!r} is not in the registry"
            )
        if password_verifier(user.password, record.salt) != record.pwd_verifier:
            raise CliError(
                f"scenario password for {user.username!r} does not match the registry"
            )
        if expand_attributes(user.attrs) != record.attrs:
            raise CliError(
                f"scenario attributes for {user.username!r} do not match the registry"
            )
        bundle_file = _bundle_path(keystore, user.username)
        try:
            bundle = ClientBundle.from_bytes(
                _read_bytes(bundle_file, f"bundle for {user.username!r}"))
        except Exception as exc:
            if isinstance(exc, CliError):
                raise
            raise CliError(f"corrupt bundle {bundle_file}: {exc}") from exc
        prebuilt[user.username] = (record, bundle)
    return prebuilt


def _summarize(log):
    counts = {}
    for row in log:
        counts[row["kind"]] = counts.get(row["kind"], 0) + 1
    attempted = counts.get("login_sent", 0)
    outcomes = [r for r in log if r["kind"] == "auth_outcome"]
    succeeded = sum(1 for r in outcomes if r["outcome"] == "authenticated")
    reasons = {}
    for r in outcomes:
        if r["outcome"] == "rejected":
            reasons[r["reason"]] = reasons.get(r["reason"], 0) + 1
    traveled = [r for r in log if r["kind"] == "session_traveled"]
    moves = sum(1 for r in traveled if r["from_beacon"] != r["to_beacon"])
    keepalives = len(traveled) - moves

    print(f"events: {len(log)} rows")
    print(f"beacon ticks: {counts.get('beacon_tick', 0)}")
    print(f"logins attempted: {attempted}, authenticated: {succeeded}")
    if reasons:
        pretty = ", ".join(f"{k}={v}" for k, v in sorted(reasons.items()))
        print(f"rejections by reason: {pretty}")
    else:
        print("rejections by reason: (none)")
    print(f"sessions established: {counts.get('session_established', 0)}, "
          f"traveled: {moves}, keepalives: {keepalives}, "
          f"travel rejections: {counts.get('travel_rejected', 0)}, "
          f"expired: {counts.get('session_expired', 0)}")
    print(f"fallbacks signalled: {counts.get('fallback_required', 0)}")


def cmd_run(args):
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        raise CliError(f"bad scenario: {exc}") from exc
    if args.period_ms is not None or args.ttl_ms is not None:
        scenario = dataclasses.replace(
            scenario,
            period_ms=args.period_ms if args.period_ms is not None else scenario.period_ms,
            ttl_ms=args.ttl_ms if args.ttl_ms is not None else scenario.ttl_ms,
        )

    authority = None
    prebuilt = None
    if args.keystore is not None:
        keystore = Path(args.keystore)
        if args.registry is None:
            raise CliError("--keystore requires --registry")
        with keystore_lock(keystore):
            authority = load_authority(keystore)
            prebuilt = _load_prebuilt(keystore, Path(args.registry), scenario)
    elif args.registry is not None:
        raise CliError("--registry requires --keystore")

    world = World(scenario, args.seed, authority=authority, prebuilt=prebuilt)
    log = run(world)

    violations = check_invariants(scenario, log)
    checks = judge_embedded_attacks(scenario, log)

    if args.out is not None:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(log_to_jsonl(log), encoding="utf-8")

    print(f"scenario: {scenario.name or args.scenario}  seed: {args.seed}  "
          f"until: {scenario.until_us / 1000:g} ms")
    _summarize(log)
    if checks:
        print("embedded attack checks:")
        for c in checks:
            print(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    print(f"invariant violations: {len(violations)}")
    for v in violations:
        print(f"  [FAIL] {v['invariant']}")
    if args.out is not None:
        print(f"log written to {args.out}")

    ok = not violations and all(c.passed for c in checks)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_attack(args):
    try:
        if args.game == "replay":
            delta = 0 if args.control else args.delta_ms
            outcome = run_replay_game(delta_ms=delta, seed=args.seed)
        elif args.game == "wormhole":
            outcome = run_wormhole_game(same_location=args.control, seed=args.seed)
        else:
            outcome = run_dos_game(seed=args.seed)
    except GameSetupError as exc:
        raise CliError(f"cannot run game: {exc}") from exc

    print(f"game: {outcome.game} ({outcome.variant})")
    for c in outcome.checks:
        print(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    print(f"verdict: {outcome.verdict}")
    if args.out is not None:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(log_to_jsonl(outcome.log), encoding="utf-8")
        print(f"log written to {args.out}")
    return EXIT_OK if outcome.passed else EXIT_FAIL


def vectors_text():
    """Deterministic derivation vectors for cross-implementation checks."""
    master_secret = bytes(range(32))
    beacon_id = bytes(range(16))
    user_seed = bytes(range(32, 64))
    salt = bytes(range(64, 80))
    password = "correct-horse-battery"

    lines = ["loc-auth derivation vectors", ""]
    lines.append(f"master_secret = {master_secret.hex()}")
    lines.append(f"beacon_id     = {beacon_id.hex()}")
    lines.append(f"user_seed     = {user_seed.hex()}")
    lines.append(f"salt          = {salt.hex()}")
    lines.append(f'password      = "{password}"')
    lines.append("")
    for period in (0, 1, 7, 30000):
        token = derive_session_token(master_secret, beacon_id, period)
        lines.append(f"session_token(period={period}) = {token.hex()}")
    lines.append("")
    for period in (0, 42):
        c_token = derive_c_token(user_seed, period)
        lines.append(f"c_token(period={period}) = {c_token.hex()}")
    lines.append("")
    verifier = password_verifier(password, salt)
    lines.append(f"pbkdf2_verifier = {verifier.hex()}")
    token0 = derive_session_token(master_secret, beacon_id, 0)
    c0 = derive_c_token(user_seed, 0)
    lines.append(f"hkdf_outer(session_token(period=0)) = "
                 f"{hkdf_sha256(token0, HKDF_INFO_OUTER).hex()}")
    lines.append(f"hkdf_inner(c_token(period=0)) = "
                 f"{hkdf_sha256(c0, HKDF_INFO_INNER).hex()}")
    lines.append(f"auth_hash(session_token(period=0), pbkdf2_verifier) = "
                 f"{auth_hash(token0, verifier).hex()}")
    return "\n".join(lines) + "\n"


def cmd_vectors(_args):
    sys.stdout.write(vectors_text())
    return EXIT_OK


def cmd_policy_check(args):
    try:
        tree = parse_policy(args.policy)
    except PolicyError as exc:
        raise CliError(f"bad policy: {exc}") from exc
    print(f"tree: {render_tree(tree)}")
    if args.attrs is None:
        return EXIT_OK
    try:
        attrs = expand_attributes(
            [a for a in (s.strip() for s in args.attrs.split(",")) if a]
        )
    except PolicyError as exc:
        raise CliError(f"bad attribute: {exc}") from exc
    ok = satisfies(attrs, tree)
    print(f"attributes: {', '.join(sorted(attrs))}")
    print(f"satisfied: {str(ok).lower()}")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="locauth",
        description="Location-bound authentication: keys, simulation, attack games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("setup", help="create an authority keystore")
    p.add_argument("--keystore", required=True, help="keystore directory")
    p.add_argument("--seed", type=int, default=None,
                   help="deterministic seed (default: system randomness)")
    p.add_argument("--security-level", type=int, default=128)
    p.add_argument("--force", action="store_true",
                   help="overwrite existing keystore files")
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("register", help="register a user and issue a bundle")
    p.add_argument("--keystore", required=True)
    p.add_argument("--registry", required=True, help="registry JSON file")
    p.add_argument("--username", required=True)
    p.add_argument("--password", required=True)
    p.add_argument("--attrs", required=True,
                   help="comma-separated attributes, e.g. firm:xyz,clearance=4")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("run", help="run a scenario simulation")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the JSONL event log here")
    p.add_argument("--keystore", default=None,
                   help="use persisted authority keys (requires --registry)")
    p.add_argument("--registry", default=None)
    p.add_argument("--period-ms", type=float, default=None,
                   help="override the scenario's token period")
    p.add_argument("--ttl-ms", type=float, default=None,
                   help="override the scenario's session ttl")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("attack", help="run a scripted attack game")
    p.add_argument("game", choices=("replay", "wormhole", "dos"))
    p.add_argument("--delta-ms", type=int, default=1000,
                   help="replay delay past the period end (replay game)")
    p.add_argument("--control", action="store_true",
                   help="run the control variant (within-window / same-location)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("vectors", help="print deterministic derivation vectors")
    p.set_defaults(func=cmd_vectors)

    p = sub.add_parser("policy-check", help="parse a policy and test attributes")
    p.add_argument("policy")
    p.add_argument("--attrs", default=None, help="comma-separated attribute set")
    p.set_defaults(func=cmd_policy_check)

    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
