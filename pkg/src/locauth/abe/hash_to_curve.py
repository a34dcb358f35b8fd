"""Deterministic hashing of attribute strings onto the G1 subgroup.

Implements the standard hash-to-curve pipeline (expand_message_xmd with
SHA-256, two field elements, Shallue-van de Woestijne map, cofactor
clearing).  The SVDW map is used because all of its constants derive
directly from the curve equation, making the whole pipeline reproducible
from first principles; the map constant Z below is exactly what the
standard ``find_z_svdw`` procedure yields for y^2 = x^3 + 4.
"""

import hashlib
from functools import lru_cache

from gmpy2 import invert, mpz

from .curve import G1_INF, g1_add, g1_from_affine, g1_mul_by_cofactor_eff
from .fields import P, fp_sqrt

DST = b"loc-auth/attr"

# Output size of a field element draw; ceil((381 + 128) / 8) per the
# hash-to-field security argument.
_L = 64
_HASH_BLOCK = 64  # SHA-256 input block size
_HASH_LEN = 32

Z = (-3) % P

# Map constants derived from Z and the curve (A = 0, B = 4).
_G_Z = (Z**3 + 4) % P
_C1 = mpz(_G_Z)
_C2 = mpz(-Z * invert(2, P) % P)
_c3 = fp_sqrt(-_G_Z * (3 * Z * Z) % P)
assert _c3 is not None, "SVDW precondition: -g(Z)(3Z^2+4A) must be square"
_C3 = _c3 if _c3 % 2 == 0 else P - _c3  # sgn0(c3) must be 0
_C4 = mpz(-4 * _G_Z * invert(3 * Z * Z, P) % P)


def expand_message_xmd(msg, dst, len_in_bytes):
    """Expand `msg` to `len_in_bytes` uniform bytes, domain-separated by `dst`."""
    if len(dst) > 255:
        raise ValueError("domain separation tag too long")
    ell = -(-len_in_bytes // _HASH_LEN)
    if ell > 255:
        raise ValueError("requested expansion too large")
    dst_prime = dst + bytes([len(dst)])
    b0 = hashlib.sha256(
        bytes(_HASH_BLOCK) + msg + len_in_bytes.to_bytes(2, "big") + b"\x00" + dst_prime
    ).digest()
    blocks = [hashlib.sha256(b0 + b"\x01" + dst_prime).digest()]
    for i in range(2, ell + 1):
        prev = blocks[-1]
        mixed = bytes(x ^ y for x, y in zip(b0, prev))
        blocks.append(hashlib.sha256(mixed + bytes([i]) + dst_prime).digest())
    return b"".join(blocks)[:len_in_bytes]


def hash_to_field(msg, count, dst=DST):
    """Hash to `count` elements of Fp."""
    uniform = expand_message_xmd(msg, dst, count * _L)
    return [mpz(int.from_bytes(uniform[i * _L : (i + 1) * _L], "big") % P) for i in range(count)]


def _is_square(a):
    a = a % P
    return a == 0 or pow(a, (P - 1) // 2, P) == 1


def _inv0(a):
    a = a % P
    return mpz(0) if a == 0 else invert(a, P)


def map_to_curve_svdw(u):
    """Map a field element to an affine point on y^2 = x^3 + 4 (not yet in G1)."""
    tv1 = u * u % P * _C1 % P
    tv2 = (1 + tv1) % P
    tv1 = (1 - tv1) % P
    tv3 = _inv0(tv1 * tv2 % P)
    tv4 = u * tv1 % P * tv3 % P * _C3 % P
    x1 = (_C2 - tv4) % P
    gx1 = (x1 * x1 % P * x1 + 4) % P
    x2 = (_C2 + tv4) % P
    gx2 = (x2 * x2 % P * x2 + 4) % P
    x3 = (tv2 * tv2 % P * tv3 % P) ** 2 % P * _C4 % P
    x3 = (x3 + Z) % P
    if _is_square(gx1):
        x, gx = x1, gx1
    elif _is_square(gx2):
        x, gx = x2, gx2
    else:
        x, gx = x3, (x3 * x3 % P * x3 + 4) % P
    y = fp_sqrt(gx)
    if y % 2 != u % 2:  # sgn0 agreement
        y = (P - y) % P
    return (mpz(x), mpz(y))


def hash_to_g1(msg, dst=DST):
    """Hash bytes to a point in the prime-order G1 subgroup."""
    u0, u1 = hash_to_field(msg, 2, dst)
    q0 = g1_from_affine(*map_to_curve_svdw(u0))
    q1 = g1_from_affine(*map_to_curve_svdw(u1))
    return g1_mul_by_cofactor_eff(g1_add(q0, q1))


@lru_cache(maxsize=4096)
def hash_attribute(name):
    """Cached map from a canonical attribute string to its G1 point."""
    return hash_to_g1(name.encode("utf-8"))
