"""Point arithmetic and serialization for the two source groups.

G1 lives on y^2 = x^3 + 4 over Fp; G2 on the sextic twist y^2 = x^3 + 4(1+u)
over Fp2.  Points are Jacobian tuples ``(X, Y, Z)`` (affine x = X/Z^2,
y = Y/Z^3) with Z = 0 marking the identity.  Byte encodings follow the
widely deployed 48/96-byte compressed convention (flag bits in the top three
bits of the first byte, big-endian field elements, imaginary Fp2 half first).
"""

from gmpy2 import mpz

from .fields import (
    P,
    R,
    F2_ZERO,
    f2_add,
    f2_inv,
    f2_is_zero,
    f2_mul,
    f2_neg,
    f2_smul,
    f2_sq,
    f2_sqrt,
    f2_sub,
    fp_inv,
    fp_sqrt,
)

_ZERO = mpz(0)
_ONE = mpz(1)

G1_B = mpz(4)
G2_B = (mpz(4), mpz(4))

G1_INF = (_ONE, _ONE, _ZERO)
G2_INF = ((_ONE, _ZERO), (_ONE, _ZERO), F2_ZERO)

G1_GEN = (
    mpz(0x17F1D3A73197D7942695638C4FA9AC0FC3688C4F9774B905A14E3A3F171BAC586C55E83FF97A1AEFFB3AF00ADB22C6BB),
    mpz(0x08B3F481E3AAA0F1A09E30ED741D8AE4FCF5E095D5D00AF600DB18CB2C04B3EDD03CC744A2888AE40CAA232946C5E7E1),
    _ONE,
)
G2_GEN = (
    (
        mpz(352701069587466618187139116011060144890029952792775240219908644239793785735715026873347600343865175952761926303160),
        mpz(3059144344244213709971259814753781636986470325476647558659373206291635324768958432433509563104347017837885763365758),
    ),
    (
        mpz(1985150602287291935568054521177171638300868978215655730859378665066344726373823718423869104263333984641494340347905),
        mpz(927553665492332455747201965776037880757740193453592970025027978793976877002675564980949289727957565575433344219582),
    ),
    (_ONE, _ZERO),
)

_FLAG_COMPRESSED = 0x80
_FLAG_INFINITY = 0x40
_FLAG_SIGN = 0x20


class PointError(ValueError):
    """Raised when bytes do not decode to a valid group element."""


# ---------------------------------------------------------------------------
# G1 (coordinates are Fp integers)


def g1_is_inf(pt):
    return pt[2] == 0


def g1_dbl(pt):
    X, Y, Z = pt
    if Z == 0:
        return pt
    A = X * X % P
    B = Y * Y % P
    C = B * B % P
    t = (X + B)
    D = 2 * (t * t - A - C) % P
    E = 3 * A % P
    F = E * E % P
    X3 = (F - 2 * D) % P
    Y3 = (E * (D - X3) - 8 * C) % P
    Z3 = 2 * Y * Z % P
    return (X3, Y3, Z3)


def g1_add(p1, p2):
    if p1[2] == 0:
        return p2
    if p2[2] == 0:
        return p1
    X1, Y1, Z1 = p1
    X2, Y2, Z2 = p2
    Z1Z1 = Z1 * Z1 % P
    Z2Z2 = Z2 * Z2 % P
    U1 = X1 * Z2Z2 % P
    U2 = X2 * Z1Z1 % P
    S1 = Y1 * Z2 * Z2Z2 % P
    S2 = Y2 * Z1 * Z1Z1 % P
    H = (U2 - U1) % P
    r = (S2 - S1) % P
    if H == 0:
        return g1_dbl(p1) if r == 0 else G1_INF
    HH = H * H % P
    HHH = H * HH % P
    V = U1 * HH % P
    X3 = (r * r - HHH - 2 * V) % P
    Y3 = (r * (V - X3) - S1 * HHH) % P
    Z3 = Z1 * Z2 * H % P
    return (X3, Y3, Z3)


def g1_neg(pt):
    return (pt[0], -pt[1] % P, pt[2])


def g1_affine(pt):
    """Return (x, y) or None for the identity."""
    X, Y, Z = pt
    if Z == 0:
        return None
    zi = fp_inv(Z)
    zi2 = zi * zi % P
    return (X * zi2 % P, Y * zi2 * zi % P)


def g1_eq(p1, p2):
    if p1[2] == 0 or p2[2] == 0:
        return p1[2] == 0 and p2[2] == 0
    Z1Z1 = p1[2] * p1[2] % P
    Z2Z2 = p2[2] * p2[2] % P
    if p1[0] * Z2Z2 % P != p2[0] * Z1Z1 % P:
        return False
    return p1[1] * Z2Z2 * p2[2] % P == p2[1] * Z1Z1 * p1[2] % P


def g1_from_affine(x, y):
    return (mpz(x), mpz(y), _ONE)


# ---------------------------------------------------------------------------
# G2 (coordinates are Fp2 pairs); same formulas over the extension field.


def g2_is_inf(pt):
    return f2_is_zero(pt[2])


def g2_dbl(pt):
    X, Y, Z = pt
    if f2_is_zero(Z):
        return pt
    A = f2_sq(X)
    B = f2_sq(Y)
    C = f2_sq(B)
    D = f2_sub(f2_sq(f2_add(X, B)), f2_add(A, C))
    D = f2_add(D, D)
    E = f2_add(f2_add(A, A), A)
    F = f2_sq(E)
    X3 = f2_sub(F, f2_add(D, D))
    eight_c = f2_add(C, C)
    eight_c = f2_add(eight_c, eight_c)
    eight_c = f2_add(eight_c, eight_c)
    Y3 = f2_sub(f2_mul(E, f2_sub(D, X3)), eight_c)
    YZ = f2_mul(Y, Z)
    Z3 = f2_add(YZ, YZ)
    return (X3, Y3, Z3)


def g2_add(p1, p2):
    if f2_is_zero(p1[2]):
        return p2
    if f2_is_zero(p2[2]):
        return p1
    X1, Y1, Z1 = p1
    X2, Y2, Z2 = p2
    Z1Z1 = f2_sq(Z1)
    Z2Z2 = f2_sq(Z2)
    U1 = f2_mul(X1, Z2Z2)
    U2 = f2_mul(X2, Z1Z1)
    S1 = f2_mul(f2_mul(Y1, Z2), Z2Z2)
    S2 = f2_mul(f2_mul(Y2, Z1), Z1Z1)
    H = f2_sub(U2, U1)
    r = f2_sub(S2, S1)
    if f2_is_zero(H):
        return g2_dbl(p1) if f2_is_zero(r) else G2_INF
    HH = f2_sq(H)
    HHH = f2_mul(H, HH)
    V = f2_mul(U1, HH)
    X3 = f2_sub(f2_sub(f2_sq(r), HHH), f2_add(V, V))
    Y3 = f2_sub(f2_mul(r, f2_sub(V, X3)), f2_mul(S1, HHH))
    Z3 = f2_mul(f2_mul(Z1, Z2), H)
    return (X3, Y3, Z3)


def g2_neg(pt):
    return (pt[0], f2_neg(pt[1]), pt[2])


def g2_affine(pt):
    X, Y, Z = pt
    if f2_is_zero(Z):
        return None
    zi = f2_inv(Z)
    zi2 = f2_sq(zi)
    return (f2_mul(X, zi2), f2_mul(f2_mul(Y, zi2), zi))


def g2_eq(p1, p2):
    i1, i2 = f2_is_zero(p1[2]), f2_is_zero(p2[2])
    if i1 or i2:
        return i1 and i2
    Z1Z1 = f2_sq(p1[2])
    Z2Z2 = f2_sq(p2[2])
    if f2_mul(p1[0], Z2Z2) != f2_mul(p2[0], Z1Z1):
        return False
    return f2_mul(f2_mul(p1[1], Z2Z2), p2[2]) == f2_mul(f2_mul(p2[1], Z1Z1), p1[2])


def g2_from_affine(x, y):
    return (x, y, (_ONE, _ZERO))


# ---------------------------------------------------------------------------
# Scalar multiplication: 4-bit left-to-right window, shared between groups.


def _window_mul(pt, k, add, dbl, inf):
    k = int(k) % int(R)
    if k == 0:
        return inf
    table = [inf, pt]
    for _ in range(14):
        table.append(add(table[-1], pt))
    acc = inf
    for shift in range((k.bit_length() + 3) // 4 * 4 - 4, -1, -4):
        acc = dbl(dbl(dbl(dbl(acc))))
        digit = (k >> shift) & 0xF
        if digit:
            acc = add(acc, table[digit])
    return acc


def g1_mul(pt, k):
    return _window_mul(pt, k, g1_add, g1_dbl, G1_INF)


# 1 - x, the effective cofactor for clearing hashed G1 points into the
# prime-order subgroup.
_H_EFF = mpz(0xD201000000010001)


def g1_mul_by_cofactor_eff(pt):
    acc = G1_INF
    for bit in bin(int(_H_EFF))[2:]:
        acc = g1_dbl(acc)
        if bit == "1":
            acc = g1_add(acc, pt)
    return acc


def g2_mul(pt, k):
    return _window_mul(pt, k, g2_add, g2_dbl, G2_INF)


class FixedBaseMul:
    """Precomputed powers-of-two ladder for a base used many times.

    Stores base * 2^i for every bit position, reducing each multiplication
    to one addition per set scalar bit.  Works for any group given its
    add/neutral callables (G1, G2, and GT all use it).
    """

    def __init__(self, base, add, dbl, neutral, bits=256):
        self._add = add
        self._neutral = neutral
        self._powers = []
        cur = base
        for _ in range(bits):
            self._powers.append(cur)
            cur = dbl(cur)

    def mul(self, k):
        k = int(k) % int(R)
        acc = self._neutral
        i = 0
        while k:
            if k & 1:
                acc = self._add(acc, self._powers[i])
            k >>= 1
            i += 1
        return acc


# ---------------------------------------------------------------------------
# Curve membership


def g1_on_curve(pt):
    if g1_is_inf(pt):
        return True
    aff = g1_affine(pt)
    x, y = aff
    return (y * y - (x * x * x + G1_B)) % P == 0


def g2_on_curve(pt):
    if g2_is_inf(pt):
        return True
    x, y = g2_affine(pt)
    return f2_sub(f2_sq(y), f2_add(f2_mul(f2_sq(x), x), G2_B)) == F2_ZERO


def _mul_unreduced(pt, k, add, dbl, inf):
    # g1_mul/g2_mul reduce scalars mod R, which is sound for subgroup
    # points but would make a multiply-by-R order check vacuous; the
    # subgroup tests need the full-width ladder.
    acc = inf
    for bit in bin(int(k))[2:]:
        acc = dbl(acc)
        if bit == "1":
            acc = add(acc, pt)
    return acc


def g1_in_subgroup(pt):
    return g1_on_curve(pt) and g1_is_inf(
        _mul_unreduced(pt, R, g1_add, g1_dbl, G1_INF))


def g2_in_subgroup(pt):
    return g2_on_curve(pt) and g2_is_inf(
        _mul_unreduced(pt, R, g2_add, g2_dbl, G2_INF))


# ---------------------------------------------------------------------------
# Serialization (48-byte G1 / 96-byte G2 compressed form)


def _fp_bytes(a):
    return int(a).to_bytes(48, "big")


def g1_to_bytes(pt):
    if g1_is_inf(pt):
        return bytes([_FLAG_COMPRESSED | _FLAG_INFINITY]) + bytes(47)
    x, y = g1_affine(pt)
    out = bytearray(_fp_bytes(x))
    out[0] |= _FLAG_COMPRESSED
    if y > P - y:
        out[0] |= _FLAG_SIGN
    return bytes(out)


def g1_from_bytes(data, check_subgroup=True):
    if len(data) != 48:
        raise PointError("G1 element must be 48 bytes")
    flags = data[0] & 0xE0
    if not flags & _FLAG_COMPRESSED:
        raise PointError("only compressed G1 encodings are accepted")
    body = bytes([data[0] & 0x1F]) + data[1:]
    if flags & _FLAG_INFINITY:
        if any(body):
            raise PointError("non-zero payload on identity encoding")
        return G1_INF
    x = mpz(int.from_bytes(body, "big"))
    if x >= P:
        raise PointError("G1 x-coordinate out of range")
    y = fp_sqrt((x * x * x + G1_B) % P)
    if y is None:
        raise PointError("G1 x-coordinate not on curve")
    if bool(flags & _FLAG_SIGN) != (y > P - y):
        y = (P - y) % P
    pt = g1_from_affine(x, y)
    if check_subgroup and not g1_is_inf(
            _mul_unreduced(pt, R, g1_add, g1_dbl, G1_INF)):
        raise PointError("G1 point not in the prime-order subgroup")
    return pt


def _f2_lex_larger(y):
    neg = f2_neg(y)
    return (y[1], y[0]) > (neg[1], neg[0])


def g2_to_bytes(pt):
    if g2_is_inf(pt):
        return bytes([_FLAG_COMPRESSED | _FLAG_INFINITY]) + bytes(95)
    x, y = g2_affine(pt)
    out = bytearray(_fp_bytes(x[1]) + _fp_bytes(x[0]))
    out[0] |= _FLAG_COMPRESSED
    if _f2_lex_larger(y):
        out[0] |= _FLAG_SIGN
    return bytes(out)


def g2_from_bytes(data, check_subgroup=True):
    if len(data) != 96:
        raise PointError("G2 element must be 96 bytes")
    flags = data[0] & 0xE0
    if not flags & _FLAG_COMPRESSED:
        raise PointError("only compressed G2 encodings are accepted")
    body = bytes([data[0] & 0x1F]) + data[1:]
    if flags & _FLAG_INFINITY:
        if any(body):
            raise PointError("non-zero payload on identity encoding")
        return G2_INF
    x1 = mpz(int.from_bytes(body[:48], "big"))
    x0 = mpz(int.from_bytes(body[48:], "big"))
    if x0 >= P or x1 >= P:
        raise PointError("G2 x-coordinate out of range")
    x = (x0, x1)
    y = f2_sqrt(f2_add(f2_mul(f2_sq(x), x), G2_B))
    if y is None:
        raise PointError("G2 x-coordinate not on curve")
    if bool(flags & _FLAG_SIGN) != _f2_lex_larger(y):
        y = f2_neg(y)
    pt = g2_from_affine(x, y)
    if check_subgroup and not g2_is_inf(
            _mul_unreduced(pt, R, g2_add, g2_dbl, G2_INF)):
        raise PointError("G2 point not in the prime-order subgroup")
    return pt
