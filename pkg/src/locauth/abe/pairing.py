"""Optimal ate pairing e: G1 x G2 -> GT over BLS12-381.

The Miller loop tracks the G2 argument in affine coordinates on the twist
and evaluates each line at the G1 argument mapped onto the twist curve,
which keeps every intermediate in Fp2 and makes each line a sparse Fp12
element (slots 1, v, v*w).  The final exponentiation computes the cube of
the usual hard part via

    3 * (p^4 - p^2 + 1) / r = (x - 1)^2 * (x + p) * (x^2 + p^2 - 1) + 3

(asserted below), needing only five exponentiations by the 64-bit curve
parameter.  The cubed pairing is still bilinear and non-degenerate because
gcd(3, r) = 1, and every value in this package comes from this same map, so
the convention is self-consistent.

``multi_pairing`` shares one final exponentiation across a product of
Miller loops, which is what makes multi-leaf ABE decryption affordable.
"""

from gmpy2 import mpz

from .curve import g1_affine, g1_is_inf, g2_affine, g2_is_inf
from .fields import (
    BLS_X,
    BLS_X_ABS,
    P,
    R,
    F12_ONE,
    f2_add,
    f2_inv,
    f2_mul,
    f2_neg,
    f2_smul,
    f2_sq,
    f2_sub,
    f12_conj,
    f12_frob,
    f12_inv,
    f12_mul,
    f12_mul_by_014,
    f12_pow,
    f12_sq,
)

assert 3 * ((P**4 - P**2 + 1) // R) == (BLS_X - 1) ** 2 * (BLS_X + P) * (BLS_X**2 + P**2 - 1) + 3

GT_ONE = F12_ONE

# Bits of |x| after the leading one, driving the Miller loop and exp-by-x.
_X_BITS = [int(b) for b in bin(int(BLS_X_ABS))[3:]]


def _dbl_step(t, xp):
    """Double T on the twist; return (2T, line coefficients c0, c1)."""
    x, y = t
    lam = f2_mul(f2_smul(f2_sq(x), 3), f2_inv(f2_add(y, y)))
    x3 = f2_sub(f2_sq(lam), f2_add(x, x))
    y3 = f2_sub(f2_mul(lam, f2_sub(x, x3)), y)
    c0 = f2_sub(f2_mul(lam, x), y)
    c1 = f2_neg(f2_smul(lam, xp))
    return (x3, y3), c0, c1


def _add_step(t, q, xp):
    """Chord from T through Q on the twist; return (T+Q, line coefficients)."""
    x1, y1 = t
    x2, y2 = q
    lam = f2_mul(f2_sub(y2, y1), f2_inv(f2_sub(x2, x1)))
    x3 = f2_sub(f2_sub(f2_sq(lam), x1), x2)
    y3 = f2_sub(f2_mul(lam, f2_sub(x1, x3)), y1)
    c0 = f2_sub(f2_mul(lam, x1), y1)
    c1 = f2_neg(f2_smul(lam, xp))
    return (x3, y3), c0, c1


def _miller_loop(pairs):
    """Product of Miller loops over affine ((xp, yp), (xq, yq)) pairs.

    Returns the accumulated Fp12 value before final exponentiation, already
    conjugated to account for the negative curve parameter.
    """
    ts = [q for _, q in pairs]
    xs = [p[0] for p, _ in pairs]
    c4s = [(p[1], 0) for p, _ in pairs]  # y_P sits in an Fp2 slot of the line
    f = F12_ONE
    first = True
    for bit in _X_BITS:
        if first:
            first = False
        else:
            f = f12_sq(f)
        for i, (_, q) in enumerate(pairs):
            ts[i], c0, c1 = _dbl_step(ts[i], xs[i])
            f = f12_mul_by_014(f, c0, c1, c4s[i])
            if bit:
                ts[i], c0, c1 = _add_step(ts[i], q, xs[i])
                f = f12_mul_by_014(f, c0, c1, c4s[i])
    return f12_conj(f)


def _exp_by_x_abs(f):
    result = f
    for bit in _X_BITS:
        result = f12_sq(result)
        if bit:
            result = f12_mul(result, f)
    return result


def final_exp(f):
    # Easy part: f^((p^6 - 1)(p^2 + 1)), after which f is cyclotomic and
    # inversion degenerates to conjugation.
    f = f12_mul(f12_conj(f), f12_inv(f))
    m = f12_mul(f12_frob(f, 2), f)
    # Hard part, following the factored identity in the module docstring.
    # t^x for negative x is conj(t^|x|) in the cyclotomic subgroup.
    y1 = f12_conj(f12_mul(_exp_by_x_abs(m), m))            # m^(x-1)
    y2 = f12_conj(f12_mul(_exp_by_x_abs(y1), y1))          # m^((x-1)^2)
    t2 = f12_mul(f12_conj(_exp_by_x_abs(y2)), f12_frob(y2, 1))   # ^(x+p)
    xx = _exp_by_x_abs(_exp_by_x_abs(t2))                  # t2^(x^2)
    t3 = f12_mul(f12_mul(xx, f12_frob(t2, 2)), f12_conj(t2))     # ^(x^2+p^2-1)
    return f12_mul(t3, f12_mul(f12_sq(m), m))              # * m^3


def pairing(p, q):
    """Pairing of a Jacobian G1 point and a Jacobian G2 point."""
    if g1_is_inf(p) or g2_is_inf(q):
        return GT_ONE
    return final_exp(_miller_loop([(g1_affine(p), g2_affine(q))]))


def multi_pairing(pairs):
    """Product of pairings over (G1, G2) Jacobian pairs, one final exp."""
    affine = [
        (g1_affine(p), g2_affine(q))
        for p, q in pairs
        if not (g1_is_inf(p) or g2_is_inf(q))
    ]
    if not affine:
        return GT_ONE
    return final_exp(_miller_loop(affine))


# ---------------------------------------------------------------------------
# GT helpers.  Every GT element in this package is a final_exp output, i.e.
# lies in the cyclotomic subgroup, where inversion is conjugation.

gt_mul = f12_mul
gt_sq = f12_sq
gt_inv = f12_conj


def gt_exp(a, k):
    k = int(k) % int(R)
    if k == 0:
        return GT_ONE
    return f12_pow(a, k)


def gt_eq(a, b):
    return a == b


def gt_to_bytes(a):
    """Canonical 576-byte encoding: 12 big-endian Fp coefficients.

    Order is low Fp6 half first, each Fp6 coefficient c0..c2, each Fp2 as
    (real, imaginary).
    """
    out = bytearray()
    for half in a:
        for c in half:
            out += int(c[0]).to_bytes(48, "big")
            out += int(c[1]).to_bytes(48, "big")
    return bytes(out)


class GtError(ValueError):
    """Raised when bytes do not decode to a valid GT element."""


def gt_from_bytes(data):
    if len(data) != 576:
        raise GtError("GT element must be 576 bytes")
    coeffs = []
    for i in range(12):
        c = mpz(int.from_bytes(data[48 * i : 48 * (i + 1)], "big"))
        if c >= P:
            raise GtError("GT coefficient out of range")
        coeffs.append(c)
    a = (
        ((coeffs[0], coeffs[1]), (coeffs[2], coeffs[3]), (coeffs[4], coeffs[5])),
        ((coeffs[6], coeffs[7]), (coeffs[8], coeffs[9]), (coeffs[10], coeffs[11])),
    )
    # Cyclotomic membership: f^(p^4 - p^2 + 1) == 1, i.e. frob^4(f) * f == frob^2(f).
    if f12_mul(f12_frob(f12_frob(a, 2), 2), a) != f12_frob(a, 2):
        raise GtError("GT element outside the cyclotomic subgroup")
    return a
