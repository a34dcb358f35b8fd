"""Ciphertext-policy ABE with hybrid payload encryption.

The construction is the classic access-tree scheme in its asymmetric
(type-III) form.  Secrets share down the policy tree by per-gate
polynomials; each leaf binds its share to the hash of its attribute.
Key-side blinding r ties a user's components together so components from
different keys cannot be pooled (collusion resistance at the algebra
level).

Group placement: the hash-to-group map and the ciphertext element C live
in G1; the key element D and per-leaf elements C_y live in G2; each
per-attribute key pair is split across both groups (D_j in G1, D'_j in G2)
so that every pairing in decryption has one argument from each group.

Payloads ride in an AEAD envelope (AES-256-GCM): encryption encapsulates a
fresh GT element K blinded into C~ = K * e(g,g)^{alpha*s}, and the DEM key
is SHA-256 over K's canonical bytes plus a domain tag.  Decryption
recovers e(g,g)^{r*s} from the tree, unblinds C~, and opens the envelope.
"""

import hashlib
from dataclasses import dataclass, field

from ..rng import rand_scalar
from .curve import (
    G1_GEN,
    G1_INF,
    G2_GEN,
    G2_INF,
    FixedBaseMul,
    PointError,
    g1_add,
    g1_dbl,
    g1_from_bytes,
    g1_is_inf,
    g1_mul,
    g1_neg,
    g1_to_bytes,
    g2_add,
    g2_dbl,
    g2_from_bytes,
    g2_is_inf,
    g2_mul,
    g2_to_bytes,
)
from .fields import R
from .hash_to_curve import hash_attribute
from .pairing import (
    GT_ONE,
    GtError,
    gt_from_bytes,
    gt_mul,
    gt_sq,
    gt_to_bytes,
    multi_pairing,
    pairing,
)
from .policy import (
    Leaf,
    PolicyError,
    expand_attributes,
    tree_from_bytes,
    tree_leaves,
    tree_to_bytes,
)

try:
    from cryptography.hazmat.primitives.ciphers.aead import AESGCM
    from cryptography.exceptions import InvalidTag
except ImportError as exc:  # pragma: no cover
    raise ImportError("the 'cryptography' package is required for payload encryption") from exc

CURVE_TAG = b"BLS12-381"
DEM_TAG = b"loc-auth/dem"
MAX_PAYLOAD = 1024
_VERSION = 1
_ORDER = int(R)


class AbeError(Exception):
    """Base class for ABE failures."""


class PolicyNotSatisfied(AbeError):
    """The key's attribute set cannot satisfy the ciphertext policy."""


class IntegrityFailure(AbeError):
    """AEAD tag mismatch: tampered or inconsistent ciphertext."""


class SerializationError(AbeError):
    """Bytes do not decode to a valid ABE object."""


@dataclass
class PublicParams:
    """System-wide public material.  Treat as immutable after creation."""

    g1: tuple
    g2: tuple
    h: tuple
    gt_alpha: tuple
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def gt_base(self):
        """e(g1, g2), cached — the GT generator used for encapsulation."""
        value = self._cache.get("gt_base")
        if value is None:
            value = self._cache["gt_base"] = pairing(self.g1, self.g2)
        return value

    def _table(self, name, base, add, dbl, neutral):
        table = self._cache.get(name)
        if table is None:
            table = self._cache[name] = FixedBaseMul(base, add, dbl, neutral)
        return table

    def g1_pow(self, k):
        return self._table("g1", self.g1, g1_add, g1_dbl, G1_INF).mul(k)

    def h_pow(self, k):
        return self._table("h", self.h, g1_add, g1_dbl, G1_INF).mul(k)

    def g2_pow(self, k):
        return self._table("g2", self.g2, g2_add, g2_dbl, G2_INF).mul(k)

    def gt_base_pow(self, k):
        return self._table("gt_base_t", self.gt_base, gt_mul, gt_sq, GT_ONE).mul(k)

    def gt_alpha_pow(self, k):
        return self._table("gt_alpha_t", self.gt_alpha, gt_mul, gt_sq, GT_ONE).mul(k)

    def to_bytes(self):
        return (
            bytes([_VERSION, len(CURVE_TAG)])
            + CURVE_TAG
            + g1_to_bytes(self.g1)
            + g2_to_bytes(self.g2)
            + g1_to_bytes(self.h)
            + gt_to_bytes(self.gt_alpha)
        )

    @classmethod
    def from_bytes(cls, data):
        try:
            if len(data) < 2 or data[0] != _VERSION:
                raise SerializationError("bad params version")
            tag_len = data[1]
            off = 2 + tag_len
            if data[2:off] != CURVE_TAG:
                raise SerializationError("unknown curve tag")
            g1 = g1_from_bytes(data[off : off + 48])
            g2 = g2_from_bytes(data[off + 48 : off + 144])
            h = g1_from_bytes(data[off + 144 : off + 192])
            gt_alpha = gt_from_bytes(data[off + 192 : off + 768])
            if len(data) != off + 768:
                raise SerializationError("trailing bytes after params")
        except (PointError, GtError, IndexError) as exc:
            raise SerializationError(str(exc)) from None
        if g1_is_inf(g1) or g2_is_inf(g2) or g1_is_inf(h) or gt_alpha == GT_ONE:
            raise SerializationError("identity element in params")
        return cls(g1=g1, g2=g2, h=h, gt_alpha=gt_alpha)


@dataclass
class MasterKey:
    """beta and g2^alpha; never appears in any broadcast or login artifact."""

    beta: int
    g2_alpha: tuple

    def to_bytes(self):
        return bytes([_VERSION]) + self.beta.to_bytes(32, "big") + g2_to_bytes(self.g2_alpha)

    @classmethod
    def from_bytes(cls, data):
        if len(data) != 129 or data[0] != _VERSION:
            raise SerializationError("bad master key encoding")
        beta = int.from_bytes(data[1:33], "big")
        if not 0 < beta < _ORDER:
            raise SerializationError("master key scalar out of range")
        try:
            g2_alpha = g2_from_bytes(data[33:])
        except PointError as exc:
            raise SerializationError(str(exc)) from None
        return cls(beta=beta, g2_alpha=g2_alpha)


@dataclass
class UserSecretKey:
    """D plus per-attribute pairs; attrs is the exact generation-time set."""

    d: tuple
    components: tuple  # sorted tuple of (attr, D_j in G1, D'_j in G2)
    attrs: frozenset

    def to_bytes(self):
        out = bytearray([_VERSION])
        out += g2_to_bytes(self.d)
        out += len(self.components).to_bytes(2, "big")
        for attr, dj, djp in self.components:
            raw = attr.encode("utf-8")
            out.append(len(raw))
            out += raw
            out += g1_to_bytes(dj)
            out += g2_to_bytes(djp)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data):
        try:
            if data[0] != _VERSION:
                raise SerializationError("bad key version")
            d = g2_from_bytes(data[1:97])
            count = int.from_bytes(data[97:99], "big")
            off = 99
            components = []
            for _ in range(count):
                name_len = data[off]
                attr = data[off + 1 : off + 1 + name_len].decode("utf-8")
                off += 1 + name_len
                dj = g1_from_bytes(data[off : off + 48])
                djp = g2_from_bytes(data[off + 48 : off + 144])
                off += 144
                components.append((attr, dj, djp))
            if off != len(data):
                raise SerializationError("trailing bytes after key")
        except (PointError, IndexError, UnicodeDecodeError) as exc:
            raise SerializationError(str(exc)) from None
        if [c[0] for c in components] != sorted(c[0] for c in components):
            raise SerializationError("key components not in canonical order")
        return cls(
            d=d,
            components=tuple(components),
            attrs=frozenset(c[0] for c in components),
        )


@dataclass
class AbeCiphertext:
    tree: object  # Leaf | Gate, in the clear
    c_tilde: tuple  # GT
    c: tuple  # G1
    leaf_components: tuple  # (C_y in G2, C'_y in G1) per tree leaf, preorder
    nonce: bytes
    dem_ct: bytes

    def to_bytes(self):
        out = bytearray([_VERSION])
        out += tree_to_bytes(self.tree)
        out += gt_to_bytes(self.c_tilde)
        out += g1_to_bytes(self.c)
        for cy, cyp in self.leaf_components:
            out += g2_to_bytes(cy)
            out += g1_to_bytes(cyp)
        out += self.nonce
        out += self.dem_ct
        return bytes(out)

    @classmethod
    def from_bytes(cls, data):
        try:
            if not data or data[0] != _VERSION:
                raise SerializationError("bad ciphertext version")
            tree, off = tree_from_bytes(data, 1)
            c_tilde = gt_from_bytes(data[off : off + 576])
            c = g1_from_bytes(data[off + 576 : off + 624])
            off += 624
            leaf_components = []
            for _ in tree_leaves(tree):
                cy = g2_from_bytes(data[off : off + 96])
                cyp = g1_from_bytes(data[off + 96 : off + 144])
                off += 144
                leaf_components.append((cy, cyp))
            nonce = data[off : off + 12]
            dem_ct = data[off + 12 :]
            if len(nonce) != 12 or len(dem_ct) < 16:
                raise SerializationError("truncated AEAD envelope")
        except (PolicyError, PointError, GtError, IndexError) as exc:
            raise SerializationError(str(exc)) from None
        return cls(
            tree=tree,
            c_tilde=c_tilde,
            c=c,
            leaf_components=tuple(leaf_components),
            nonce=bytes(nonce),
            dem_ct=bytes(dem_ct),
        )


def _dem_key(k_gt):
    return hashlib.sha256(gt_to_bytes(k_gt) + DEM_TAG).digest()


def setup(security_level, rng):
    """Generate public parameters and the master key."""
    if not 100 <= security_level <= 128:
        raise AbeError(f"unsupported security level {security_level} (need 100..128 bits)")
    alpha = rand_scalar(rng, _ORDER, nonzero=True)
    beta = rand_scalar(rng, _ORDER, nonzero=True)
    g2_alpha = g2_mul(G2_GEN, alpha)
    params = PublicParams(
        g1=G1_GEN,
        g2=G2_GEN,
        h=g1_mul(G1_GEN, beta),
        gt_alpha=pairing(G1_GEN, g2_alpha),
    )
    return params, MasterKey(beta=beta, g2_alpha=g2_alpha)


def keygen(msk, params, attrs, rng):
    """Issue a key for an attribute set (numeric sugar expands first)."""
    attrs = expand_attributes(attrs)
    if not attrs:
        raise AbeError("empty attribute set")
    r = rand_scalar(rng, _ORDER)
    beta_inv = pow(msk.beta, -1, _ORDER)
    d = g2_mul(g2_add(msk.g2_alpha, params.g2_pow(r)), beta_inv)
    g1_r = params.g1_pow(r)
    components = []
    for attr in sorted(attrs):
        r_j = rand_scalar(rng, _ORDER)
        dj = g1_add(g1_r, g1_mul(hash_attribute(attr), r_j))
        djp = params.g2_pow(r_j)
        components.append((attr, dj, djp))
    return UserSecretKey(d=d, components=tuple(components), attrs=attrs)


def _share_secret(tree, secret, rng):
    """Polynomial secret sharing down the tree; returns per-leaf shares in preorder."""
    shares = []

    def walk(node, value):
        if isinstance(node, Leaf):
            shares.append((node.attr, value))
            return
        coeffs = [value] + [rand_scalar(rng, _ORDER) for _ in range(node.k - 1)]
        for index, child in enumerate(node.children, start=1):
            share = 0
            power = 1
            for coeff in coeffs:
                share = (share + coeff * power) % _ORDER
                power = power * index % _ORDER
            walk(child, share)

    walk(tree, secret)
    return shares


def encrypt(params, tree, payload, rng):
    """Encrypt payload under the policy tree (hybrid, randomized)."""
    if len(payload) > MAX_PAYLOAD:
        raise AbeError(f"payload exceeds {MAX_PAYLOAD} bytes")
    s = rand_scalar(rng, _ORDER)
    k_exp = rand_scalar(rng, _ORDER)
    k_gt = params.gt_base_pow(k_exp)
    c_tilde = gt_mul(k_gt, params.gt_alpha_pow(s))
    c = params.h_pow(s)
    leaf_components = []
    for attr, share in _share_secret(tree, s, rng):
        cy = params.g2_pow(share)
        cyp = _attr_fixed_mul(attr, share)
        leaf_components.append((cy, cyp))
    nonce = rng.random_bytes(12)
    dem_ct = AESGCM(_dem_key(k_gt)).encrypt(nonce, payload, None)
    return AbeCiphertext(
        tree=tree,
        c_tilde=c_tilde,
        c=c,
        leaf_components=tuple(leaf_components),
        nonce=nonce,
        dem_ct=dem_ct,
    )


# Per-attribute fixed-base tables: beacons re-encrypt under the same policy
# every period, so H(attr)^share recurs with the same base.
_ATTR_TABLES = {}


def _attr_fixed_mul(attr, k):
    table = _ATTR_TABLES.get(attr)
    if table is None:
        if len(_ATTR_TABLES) > 4096:
            _ATTR_TABLES.clear()
        table = _ATTR_TABLES[attr] = FixedBaseMul(hash_attribute(attr), g1_add, g1_dbl, G1_INF)
    return table.mul(k)


def lagrange_at_zero(indices):
    """Interpolation weights at 0 for a set of 1-based child indices, mod r."""
    weights = {}
    for i in indices:
        num, den = 1, 1
        for j in indices:
            if j == i:
                continue
            num = num * -j % _ORDER
            den = den * (i - j) % _ORDER
        weights[i] = num * pow(den, -1, _ORDER) % _ORDER
    return weights


def _select_leaves(tree, attrs):
    """Choose the deterministic satisfying leaf set with flattened weights.

    At each gate the lexicographically smallest k satisfiable child indices
    win; each chosen child's Lagrange weight multiplies down the path, so
    every selected leaf ends with one scalar weight.
    """
    leaf_pos = 0
    selected = []

    def walk(node, coeff, active):
        nonlocal leaf_pos
        if isinstance(node, Leaf):
            ok = node.attr in attrs
            if ok and active:
                selected.append((leaf_pos, node.attr, coeff))
            leaf_pos += 1
            return ok
        # First pass: which children are satisfiable?  Walk them all to keep
        # leaf positions aligned, but only mark the chosen ones active.
        saved = leaf_pos
        sat = []
        for idx, child in enumerate(node.children, start=1):
            if walk(child, 0, False):
                sat.append(idx)
        if len(sat) < node.k or not active:
            return len(sat) >= node.k
        weights = lagrange_at_zero(sat[: node.k])
        leaf_pos = saved
        for idx, child in enumerate(node.children, start=1):
            if idx in weights:
                walk(child, coeff * weights[idx] % _ORDER, True)
            else:
                walk(child, 0, False)
        return True

    ok = walk(tree, 1, True)
    return selected if ok else None


def decrypt(params, key, ct):
    """Recover the payload, or raise PolicyNotSatisfied / IntegrityFailure."""
    selected = _select_leaves(ct.tree, key.attrs)
    if selected is None:
        raise PolicyNotSatisfied("key attributes do not satisfy the ciphertext policy")
    comp = {attr: (dj, djp) for attr, dj, djp in key.components}
    pairs = []
    for leaf_pos, attr, weight in selected:
        cy, cyp = ct.leaf_components[leaf_pos]
        dj, djp = comp[attr]
        # e(D_j, C_y)^w * e(C'_y, D'_j)^(-w), folded into the G1 arguments.
        pairs.append((g1_mul(dj, weight), cy))
        pairs.append((g1_neg(g1_mul(cyp, weight)), djp))
    pairs.append((g1_neg(ct.c), key.d))
    k_gt = gt_mul(ct.c_tilde, multi_pairing(pairs))
    try:
        return AESGCM(_dem_key(k_gt)).decrypt(ct.nonce, ct.dem_ct, None)
    except InvalidTag:
        raise IntegrityFailure("payload envelope failed to authenticate") from None
