"""Wire messages and the two-party login protocol.

A beacon periodically broadcasts its current session token inside an
attribute-policy ciphertext; only clients whose attribute keys satisfy the
beacon's policy can open it.  A qualified client answers with a login
message protected by two nested AEAD layers:

* the **outer** layer is keyed from the session token itself (proof the
  sender could open a fresh broadcast at this beacon in this period), and
* the **inner** layer is keyed from the user's per-period c-token (proof
  of registered identity), carrying a hash that binds the session token to
  the user's password verifier.

The verification service re-derives both tokens from its own clock and
secrets, so a login only opens when presented at the right beacon within
the right period.  All multi-byte integers are big-endian.

Byte layouts::

    broadcast = 0x01 | 0x01 | beacon_id(16) | period(8) | abe_ct
    abe payload = session_token(16) | beacon_id(16) | period(8)
    login     = 0x01 | 0x02 | beacon_id(16) | period(8) | outer_nonce(12) | outer_ct
    outer pt  = username_len(2) | username(utf-8) | inner_nonce(12) | inner_ct
    inner pt  = auth_hash(32)
    auth_hash = SHA-256(session_token | 0x1F | pwd_verifier)
"""

import hashlib
import hmac
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Optional, Set, Tuple, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .abe import scheme as abe
from .abe.policy import AccessTree, expand_attributes, parse_policy
from .rng import SystemRng
from .tokens import (
    DEFAULT_PERIOD_MS,
    TOKEN_LEN,
    current_period,
    derive_c_token,
    derive_session_token,
)

logger = logging.getLogger(__name__)

VERSION = 0x01
TYPE_BROADCAST = 0x01
TYPE_LOGIN = 0x02

_HEADER_LEN = 1 + 1 + 16 + 8
_NONCE_LEN = 12
_ABE_PAYLOAD_LEN = TOKEN_LEN + 16 + 8
_HASH_SEP = b"\x1f"
_INNER_PT_LEN = 32
_INNER_CT_LEN = _INNER_PT_LEN + 16  # AES-GCM tag

HKDF_INFO_OUTER = b"loc-auth/outer"
HKDF_INFO_INNER = b"loc-auth/inner"
PBKDF2_ITERATIONS = 100_000
SALT_LEN = 16
SEED_LEN = 32
MIN_PASSWORD_LEN = 8


class ProtocolError(ValueError):
    """Raised for malformed wire bytes or invalid protocol inputs."""


def hkdf_sha256(key_material, info, length=32):
    """Single-purpose HKDF-SHA-256 (empty salt) used to key both AEAD layers."""
    salt = b"\x00" * hashlib.sha256().digest_size
    prk = hmac.new(salt, key_material, hashlib.sha256).digest()
    out = b""
    block = b""
    counter = 1
    while len(out) < length:
        block = hmac.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        out += block
        counter += 1
    return out[:length]


def password_verifier(password, salt):
    """PBKDF2-HMAC-SHA-256 password verifier (100000 iterations, 32 bytes)."""
    if len(salt) != SALT_LEN:
        raise ValueError("salt must be 16 bytes")
    return hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), salt, PBKDF2_ITERATIONS, dklen=32
    )


def auth_hash(session_token, pwd_verifier):
    """Bind a session token to a password verifier: SHA-256(token | 0x1F | verifier)."""
    return hashlib.sha256(session_token + _HASH_SEP + pwd_verifier).digest()


def _pack_header(msg_type, beacon_id, period):
    if len(beacon_id) != 16:
        raise ProtocolError("beacon id must be 16 bytes")
    if period < 0:
        raise ProtocolError("period must be non-negative")
    return bytes([VERSION, msg_type]) + beacon_id + int(period).to_bytes(8, "big")


def _parse_header(raw, expected_type):
    if len(raw) < _HEADER_LEN:
        raise ProtocolError("message truncated")
    if raw[0] != VERSION:
        raise ProtocolError(f"unsupported version {raw[0]:#x}")
    if raw[1] != expected_type:
        raise ProtocolError(f"unexpected message type {raw[1]:#x}")
    beacon_id = raw[2:18]
    period = int.from_bytes(raw[18:26], "big")
    return beacon_id, period


@dataclass(frozen=True)
class BroadcastMessage:
    """Beacon broadcast: header plus a policy ciphertext hiding the token."""

    beacon_id: bytes
    period: int
    abe_ct: abe.AbeCiphertext

    def to_bytes(self):
        return _pack_header(TYPE_BROADCAST, self.beacon_id, self.period) + self.abe_ct.to_bytes()

    @classmethod
    def from_bytes(cls, raw):
        beacon_id, period = _parse_header(raw, TYPE_BROADCAST)
        try:
            abe_ct = abe.AbeCiphertext.from_bytes(raw[_HEADER_LEN:])
        except abe.SerializationError as exc:
            raise ProtocolError(f"bad broadcast ciphertext: {exc}") from exc
        return cls(beacon_id=beacon_id, period=period, abe_ct=abe_ct)


@dataclass(frozen=True)
class LoginMessage:
    """Client login reply: header plus the nested two-layer AEAD envelope."""

    beacon_id: bytes
    period: int
    outer_nonce: bytes
    outer_ct: bytes

    def to_bytes(self):
        if len(self.outer_nonce) != _NONCE_LEN:
            raise ProtocolError("outer nonce must be 12 bytes")
        return (
            _pack_header(TYPE_LOGIN, self.beacon_id, self.period)
            + self.outer_nonce
            + self.outer_ct
        )

    @classmethod
    def from_bytes(cls, raw):
        beacon_id, period = _parse_header(raw, TYPE_LOGIN)
        body = raw[_HEADER_LEN:]
        if len(body) < _NONCE_LEN + 16:
            raise ProtocolError("login body truncated")
        return cls(
            beacon_id=beacon_id,
            period=period,
            outer_nonce=body[:_NONCE_LEN],
            outer_ct=body[_NONCE_LEN:],
        )


class RejectReason(Enum):
    """Why a login was refused; coarse on the wire, precise in logs."""

    MALFORMED_MESSAGE = "malformed_message"
    TOKEN_MISMATCH = "token_mismatch"
    REPLAYED_NONCE = "replayed_nonce"
    UNKNOWN_USER = "unknown_user"
    C_TOKEN_MISMATCH = "c_token_mismatch"
    HASH_MISMATCH = "hash_mismatch"


@dataclass(frozen=True)
class AuthResult:
    """Outcome of verifying one login message."""

    authenticated: bool
    reason: Optional[RejectReason] = None
    username: Optional[str] = None
    beacon_id: Optional[bytes] = None
    period: Optional[int] = None

    @classmethod
    def accept(cls, username, beacon_id, period):
        return cls(True, None, username, beacon_id, period)

    @classmethod
    def reject(cls, reason):
        return cls(False, reason)


@dataclass(frozen=True)
class UserRecord:
    """Server-side registration state for one user (no password stored)."""

    username: str
    user_seed: bytes
    salt: bytes
    pwd_verifier: bytes
    attrs: FrozenSet[str]


@dataclass
class ClientBundle:
    """Client-side registration output: attribute key plus login secrets."""

    username: str
    usk: abe.UserSecretKey
    user_seed: bytes
    salt: bytes

    def to_bytes(self):
        name = self.username.encode("utf-8")
        usk_raw = self.usk.to_bytes()
        return (
            bytes([VERSION])
            + len(name).to_bytes(2, "big")
            + name
            + self.user_seed
            + self.salt
            + len(usk_raw).to_bytes(4, "big")
            + usk_raw
        )

    @classmethod
    def from_bytes(cls, raw):
        if len(raw) < 3:
            raise ProtocolError("bundle truncated")
        if raw[0] != VERSION:
            raise ProtocolError("unsupported bundle version")
        name_len = int.from_bytes(raw[1:3], "big")
        off = 3
        if len(raw) < off + name_len + SEED_LEN + SALT_LEN + 4:
            raise ProtocolError("bundle truncated")
        username = raw[off : off + name_len].decode("utf-8")
        off += name_len
        user_seed = raw[off : off + SEED_LEN]
        off += SEED_LEN
        salt = raw[off : off + SALT_LEN]
        off += SALT_LEN
        usk_len = int.from_bytes(raw[off : off + 4], "big")
        off += 4
        if len(raw) != off + usk_len:
            raise ProtocolError("bundle length mismatch")
        try:
            usk = abe.UserSecretKey.from_bytes(raw[off:])
        except abe.SerializationError as exc:
            raise ProtocolError(f"bad bundle key: {exc}") from exc
        return cls(username=username, usk=usk, user_seed=user_seed, salt=salt)


@dataclass(frozen=True)
class BeaconPolicyConfig:
    """A beacon's currently-active access policy (replaceable at runtime)."""

    policy_text: str
    tree: AccessTree


def broadcast_step(params, beacon_id, policy, master_secret, clock, rng,
                   period_ms=DEFAULT_PERIOD_MS):
    """Produce the broadcast for this beacon at the clock's current period."""
    period = current_period(clock, period_ms)
    token = derive_session_token(master_secret, beacon_id, period)
    payload = token + beacon_id + int(period).to_bytes(8, "big")
    tree = policy.tree if isinstance(policy, BeaconPolicyConfig) else policy
    abe_ct = abe.encrypt(params, tree, payload, rng)
    return BroadcastMessage(beacon_id=beacon_id, period=period, abe_ct=abe_ct)


def client_handle_broadcast(params, bundle, password, msg, clock, rng=None,
                            period_ms=DEFAULT_PERIOD_MS, pwd_verifier=None):
    """Attempt to answer a broadcast; returns a LoginMessage or None.

    Returns None (silently, as an unqualified bystander would) when the
    policy ciphertext does not open under the bundle's key or the opened
    payload does not match the broadcast header.  ``pwd_verifier`` may be
    supplied to skip the per-call PBKDF2 derivation.
    """
    rng = rng if rng is not None else SystemRng()
    try:
        payload = abe.decrypt(params, bundle.usk, msg.abe_ct)
    except (abe.PolicyNotSatisfied, abe.IntegrityFailure):
        return None
    if len(payload) != _ABE_PAYLOAD_LEN:
        return None
    token = payload[:TOKEN_LEN]
    bound_beacon = payload[TOKEN_LEN : TOKEN_LEN + 16]
    bound_period = int.from_bytes(payload[TOKEN_LEN + 16 :], "big")
    if bound_beacon != msg.beacon_id or bound_period != msg.period:
        return None

    if pwd_verifier is None:
        pwd_verifier = password_verifier(password, bundle.salt)
    digest = auth_hash(token, pwd_verifier)

    c_token = derive_c_token(bundle.user_seed, current_period(clock, period_ms))
    inner_key = hkdf_sha256(c_token, HKDF_INFO_INNER)
    inner_nonce = rng.random_bytes(_NONCE_LEN)
    inner_ct = AESGCM(inner_key).encrypt(inner_nonce, digest, None)

    name = bundle.username.encode("utf-8")
    outer_pt = len(name).to_bytes(2, "big") + name + inner_nonce + inner_ct
    outer_key = hkdf_sha256(token, HKDF_INFO_OUTER)
    outer_nonce = rng.random_bytes(_NONCE_LEN)
    outer_ct = AESGCM(outer_key).encrypt(outer_nonce, outer_pt, None)

    return LoginMessage(
        beacon_id=msg.beacon_id,
        period=msg.period,
        outer_nonce=outer_nonce,
        outer_ct=outer_ct,
    )


class AuthService:
    """Authority-side state: registry, beacon policies, and login verification.

    Owns the attribute-authority keys, the shared token master secret, the
    user registry, and the per-period replay cache.  Instances are not
    thread-safe; callers must serialize access.
    """

    def __init__(self, params, msk, master_secret, period_ms=DEFAULT_PERIOD_MS,
                 skew_periods=0):
        if len(master_secret) != 32:
            raise ValueError("master secret must be 32 bytes")
        if skew_periods not in (0, 1):
            raise ValueError("skew_periods must be 0 or 1")
        self.params = params
        self.msk = msk
        self.master_secret = master_secret
        self.period_ms = period_ms
        self.skew_periods = skew_periods
        self.registry: Dict[str, UserRecord] = {}
        self.beacon_policies: Dict[bytes, BeaconPolicyConfig] = {}
        self._replay_cache: Set[Tuple[bytes, int, bytes]] = set()
        self._replay_period = -1

    # -- registration -------------------------------------------------------

    def register_user(self, username, password, attrs, rng=None):
        """Register a user; returns (stored UserRecord, ClientBundle)."""
        rng = rng if rng is not None else SystemRng()
        if not username:
            raise ValueError("username must be non-empty")
        if username in self.registry:
            raise ValueError(f"user {username!r} already registered")
        if len(password) < MIN_PASSWORD_LEN:
            logger.warning(
                "weak password for %r: %d chars (minimum recommended %d)",
                username, len(password), MIN_PASSWORD_LEN,
            )
        expanded = expand_attributes(attrs)
        user_seed = rng.random_bytes(SEED_LEN)
        salt = rng.random_bytes(SALT_LEN)
        verifier = password_verifier(password, salt)
        usk = abe.keygen(self.msk, self.params, attrs, rng)
        record = UserRecord(
            username=username,
            user_seed=user_seed,
            salt=salt,
            pwd_verifier=verifier,
            attrs=expanded,
        )
        self.registry[username] = record
        return record, ClientBundle(username=username, usk=usk,
                                    user_seed=user_seed, salt=salt)

    def register_backend(self, beacon_id, policy_text):
        """Bind (or replace) the access policy broadcast by a beacon."""
        if len(beacon_id) != 16:
            raise ValueError("beacon id must be 16 bytes")
        if not policy_text or not policy_text.strip():
            raise ValueError("policy text must be non-empty")
        config = BeaconPolicyConfig(policy_text=policy_text, tree=parse_policy(policy_text))
        self.beacon_policies[beacon_id] = config
        return config

    # -- broadcast ----------------------------------------------------------

    def broadcast_step(self, beacon_id, clock, rng=None):
        """Broadcast for a registered beacon at the clock's current period."""
        rng = rng if rng is not None else SystemRng()
        try:
            policy = self.beacon_policies[beacon_id]
        except KeyError:
            raise ValueError("beacon has no registered policy") from None
        return broadcast_step(self.params, beacon_id, policy, self.master_secret,
                              clock, rng, self.period_ms)

    # -- verification -------------------------------------------------------

    def _advance_replay_cache(self, period):
        if period != self._replay_period:
            keep_from = period - self.skew_periods
            self._replay_cache = {
                entry for entry in self._replay_cache if entry[1] >= keep_from
            }
            self._replay_period = period

    def verify_login(self, msg: Union[bytes, LoginMessage], clock,
                     receiving_beacon_id=None) -> AuthResult:
        """Verify one login at the beacon that physically received it.

        ``receiving_beacon_id`` is the identity of the radio that heard the
        message; it defaults to the message's claimed beacon so that a
        directly-connected deployment still works, but callers that know
        the receiving radio must pass it (the token check is what stops a
        login tunneled from another beacon's zone).
        """
        if isinstance(msg, (bytes, bytearray)):
            try:
                msg = LoginMessage.from_bytes(bytes(msg))
            except ProtocolError:
                return AuthResult.reject(RejectReason.MALFORMED_MESSAGE)
        beacon_id = receiving_beacon_id if receiving_beacon_id is not None else msg.beacon_id
        now_period = current_period(clock, self.period_ms)
        self._advance_replay_cache(now_period)

        candidates = [now_period]
        for delta in range(1, self.skew_periods + 1):
            if now_period - delta >= 0:
                candidates.append(now_period - delta)
            candidates.append(now_period + delta)

        outer_pt = None
        period = None
        for cand in candidates:
            token = derive_session_token(self.master_secret, beacon_id, cand)
            outer_key = hkdf_sha256(token, HKDF_INFO_OUTER)
            try:
                outer_pt = AESGCM(outer_key).decrypt(msg.outer_nonce, msg.outer_ct, None)
            except InvalidTag:
                continue
            period = cand
            break
        if outer_pt is None:
            return AuthResult.reject(RejectReason.TOKEN_MISMATCH)
        token = derive_session_token(self.master_secret, beacon_id, period)

        cache_key = (beacon_id, period, msg.outer_nonce)
        if cache_key in self._replay_cache:
            return AuthResult.reject(RejectReason.REPLAYED_NONCE)
        self._replay_cache.add(cache_key)

        if len(outer_pt) < 2:
            return AuthResult.reject(RejectReason.MALFORMED_MESSAGE)
        name_len = int.from_bytes(outer_pt[:2], "big")
        if len(outer_pt) != 2 + name_len + _NONCE_LEN + _INNER_CT_LEN:
            return AuthResult.reject(RejectReason.MALFORMED_MESSAGE)
        try:
            username = outer_pt[2 : 2 + name_len].decode("utf-8")
        except UnicodeDecodeError:
            return AuthResult.reject(RejectReason.MALFORMED_MESSAGE)
        inner_nonce = outer_pt[2 + name_len : 2 + name_len + _NONCE_LEN]
        inner_ct = outer_pt[2 + name_len + _NONCE_LEN :]

        record = self.registry.get(username)
        if record is None:
            return AuthResult.reject(RejectReason.UNKNOWN_USER)

        c_token = derive_c_token(record.user_seed, period)
        inner_key = hkdf_sha256(c_token, HKDF_INFO_INNER)
        try:
            inner_pt = AESGCM(inner_key).decrypt(inner_nonce, inner_ct, None)
        except InvalidTag:
            return AuthResult.reject(RejectReason.C_TOKEN_MISMATCH)
        if len(inner_pt) != _INNER_PT_LEN:
            return AuthResult.reject(RejectReason.MALFORMED_MESSAGE)

        expected = auth_hash(token, record.pwd_verifier)
        if not hmac.compare_digest(inner_pt, expected):
            return AuthResult.reject(RejectReason.HASH_MISMATCH)

        return AuthResult.accept(username, beacon_id, period)
