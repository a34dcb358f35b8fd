"""Extension-field tower arithmetic for the BLS12-381 pairing curve.

Elements are plain tuples of ``gmpy2.mpz`` residues, operated on by module
functions rather than classes: the pairing evaluates tens of thousands of
field multiplications per call and attribute dispatch is the dominant
overhead in pure Python.

Tower layout (the conventional one for this curve):

* Fp      -- integers mod P
* Fp2     -- ``(c0, c1)`` meaning c0 + c1*u with u^2 = -1
* Fp6     -- ``(a0, a1, a2)`` of Fp2, basis 1, v, v^2 with v^3 = xi = 1 + u
* Fp12    -- ``(b0, b1)`` of Fp6, basis 1, w with w^2 = v
"""

from gmpy2 import invert, mpz

# Base field modulus, subgroup order and the (negative) curve parameter x.
P = mpz(0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB)
R = mpz(0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001)
BLS_X_ABS = mpz(0xD201000000010000)
BLS_X = -BLS_X_ABS

_ZERO = mpz(0)
_ONE = mpz(1)

F2_ZERO = (_ZERO, _ZERO)
F2_ONE = (_ONE, _ZERO)
F6_ZERO = (F2_ZERO, F2_ZERO, F2_ZERO)
F6_ONE = (F2_ONE, F2_ZERO, F2_ZERO)
F12_ONE = (F6_ONE, F6_ZERO)

# Sanity anchors for the curve family; these tie the three constants together
# so a transcription slip in any one of them is caught at import time.
assert R == BLS_X**4 - BLS_X**2 + 1
assert P == (BLS_X - 1) ** 2 // 3 * R + BLS_X
assert P % 4 == 3 and P % 6 == 1


def fp_inv(a):
    return invert(a, P)


def fp_sqrt(a):
    """Square root mod P (P = 3 mod 4), or None when `a` is not a square."""
    a = a % P
    root = pow(a, (P + 1) // 4, P)
    return root if root * root % P == a else None


# ---------------------------------------------------------------------------
# Fp2


def f2_add(a, b):
    return ((a[0] + b[0]) % P, (a[1] + b[1]) % P)


def f2_sub(a, b):
    return ((a[0] - b[0]) % P, (a[1] - b[1]) % P)


def f2_neg(a):
    return (-a[0] % P, -a[1] % P)


def f2_conj(a):
    return (a[0], -a[1] % P)


def f2_mul(a, b):
    # Karatsuba over u^2 = -1.
    t0 = a[0] * b[0]
    t1 = a[1] * b[1]
    return ((t0 - t1) % P, ((a[0] + a[1]) * (b[0] + b[1]) - t0 - t1) % P)


def f2_sq(a):
    t = a[0] * a[1]
    return ((a[0] + a[1]) * (a[0] - a[1]) % P, (t + t) % P)


def f2_smul(a, s):
    """Multiply by an Fp scalar."""
    return (a[0] * s % P, a[1] * s % P)


def f2_mul_xi(a):
    """Multiply by xi = 1 + u, the Fp6 non-residue."""
    return ((a[0] - a[1]) % P, (a[0] + a[1]) % P)


def f2_inv(a):
    norm_inv = invert(a[0] * a[0] + a[1] * a[1], P)
    return (a[0] * norm_inv % P, -a[1] * norm_inv % P)


def f2_pow(a, e):
    result = F2_ONE
    for bit in bin(int(e))[2:]:
        result = f2_sq(result)
        if bit == "1":
            result = f2_mul(result, a)
    return result


def f2_is_zero(a):
    return a[0] == 0 and a[1] == 0


def f2_sqrt(a):
    """Square root in Fp2 for P = 3 mod 4, or None when `a` is not a square.

    Complex-extension variant: writes a = a0 + a1*u and solves via Fp square
    roots of the norm, which avoids a general Tonelli-Shanks loop.
    """
    a0, a1 = a[0] % P, a[1] % P
    if a1 == 0:
        r = fp_sqrt(a0)
        if r is not None:
            return (r, _ZERO)
        # a0 is a non-residue, so a0 = -s^2 and sqrt(a) = s*u.
        r = fp_sqrt(-a0 % P)
        return None if r is None else (_ZERO, r)
    norm = (a0 * a0 + a1 * a1) % P
    d = fp_sqrt(norm)
    if d is None:
        return None
    two_inv = invert(mpz(2), P)
    for cand in ((a0 + d) * two_inv % P, (a0 - d) * two_inv % P):
        re = fp_sqrt(cand)
        if re is None or re == 0:
            continue
        root = (re, a1 * invert(re + re, P) % P)
        if f2_sq(root) == (a0, a1):
            return root
    return None


# ---------------------------------------------------------------------------
# Fp6


def f6_add(a, b):
    return (f2_add(a[0], b[0]), f2_add(a[1], b[1]), f2_add(a[2], b[2]))


def f6_sub(a, b):
    return (f2_sub(a[0], b[0]), f2_sub(a[1], b[1]), f2_sub(a[2], b[2]))


def f6_neg(a):
    return (f2_neg(a[0]), f2_neg(a[1]), f2_neg(a[2]))


def f6_mul(a, b):
    a0, a1, a2 = a
    b0, b1, b2 = b
    v0 = f2_mul(a0, b0)
    v1 = f2_mul(a1, b1)
    v2 = f2_mul(a2, b2)
    c0 = f2_add(v0, f2_mul_xi(f2_sub(f2_mul(f2_add(a1, a2), f2_add(b1, b2)), f2_add(v1, v2))))
    c1 = f2_add(f2_sub(f2_mul(f2_add(a0, a1), f2_add(b0, b1)), f2_add(v0, v1)), f2_mul_xi(v2))
    c2 = f2_add(f2_sub(f2_mul(f2_add(a0, a2), f2_add(b0, b2)), f2_add(v0, v2)), v1)
    return (c0, c1, c2)


def f6_sq(a):
    a0, a1, a2 = a
    s0 = f2_sq(a0)
    t = f2_mul(a0, a1)
    s1 = f2_add(t, t)
    s2 = f2_sq(f2_add(f2_sub(a0, a1), a2))
    t = f2_mul(a1, a2)
    s3 = f2_add(t, t)
    s4 = f2_sq(a2)
    c0 = f2_add(s0, f2_mul_xi(s3))
    c1 = f2_add(s1, f2_mul_xi(s4))
    c2 = f2_sub(f2_add(f2_add(s1, s2), s3), f2_add(s0, s4))
    return (c0, c1, c2)


def f6_mul_by_v(a):
    """Multiply by v (shifts coefficients, wrapping through xi)."""
    return (f2_mul_xi(a[2]), a[0], a[1])


def f6_smul(a, s):
    """Multiply by an Fp2 scalar."""
    return (f2_mul(a[0], s), f2_mul(a[1], s), f2_mul(a[2], s))


def f6_inv(a):
    a0, a1, a2 = a
    t0 = f2_sub(f2_sq(a0), f2_mul_xi(f2_mul(a1, a2)))
    t1 = f2_sub(f2_mul_xi(f2_sq(a2)), f2_mul(a0, a1))
    t2 = f2_sub(f2_sq(a1), f2_mul(a0, a2))
    denom = f2_add(f2_mul(a0, t0), f2_mul_xi(f2_add(f2_mul(a2, t1), f2_mul(a1, t2))))
    dinv = f2_inv(denom)
    return (f2_mul(t0, dinv), f2_mul(t1, dinv), f2_mul(t2, dinv))


# ---------------------------------------------------------------------------
# Fp12


def f12_mul(a, b):
    t0 = f6_mul(a[0], b[0])
    t1 = f6_mul(a[1], b[1])
    c1 = f6_sub(f6_mul(f6_add(a[0], a[1]), f6_add(b[0], b[1])), f6_add(t0, t1))
    return (f6_add(t0, f6_mul_by_v(t1)), c1)


def f12_sq(a):
    s0 = f6_sq(a[0])
    s1 = f6_sq(a[1])
    c1 = f6_sub(f6_sq(f6_add(a[0], a[1])), f6_add(s0, s1))
    return (f6_add(s0, f6_mul_by_v(s1)), c1)


def f12_conj(a):
    return (a[0], f6_neg(a[1]))


def f12_inv(a):
    denom = f6_inv(f6_sub(f6_sq(a[0]), f6_mul_by_v(f6_sq(a[1]))))
    return (f6_mul(a[0], denom), f6_neg(f6_mul(a[1], denom)))


def f12_pow(a, e):
    result = F12_ONE
    for bit in bin(int(e))[2:]:
        result = f12_sq(result)
        if bit == "1":
            result = f12_mul(result, a)
    return result


def f12_mul_by_014(f, c0, c1, c4):
    """Multiply by a sparse element c0 + c1*v + c4*v*w (a Miller-loop line).

    The name follows the slot indices over Fp2: coefficients 0 and 1 of the
    low Fp6 half and coefficient 1 of the high half.
    """
    a, b = f
    # t_a = a * (c0 + c1 v): the 2-sparse Fp6 product, Karatsuba on c0/c1.
    a0, a1, a2 = a
    v0 = f2_mul(a0, c0)
    v1 = f2_mul(a1, c1)
    ta0 = f2_add(v0, f2_mul_xi(f2_mul(a2, c1)))
    ta1 = f2_sub(f2_mul(f2_add(a0, a1), f2_add(c0, c1)), f2_add(v0, v1))
    ta2 = f2_add(f2_mul(a2, c0), v1)
    # t_b = b * (c4 v)
    b0, b1, b2 = b
    tb0 = f2_mul_xi(f2_mul(b2, c4))
    tb1 = f2_mul(b0, c4)
    tb2 = f2_mul(b1, c4)
    # high half: (a + b) * (c0 + (c1 + c4) v) - t_a - t_b
    c1c4 = f2_add(c1, c4)
    s0, s1, s2 = f2_add(a0, b0), f2_add(a1, b1), f2_add(a2, b2)
    w0 = f2_mul(s0, c0)
    w1 = f2_mul(s1, c1c4)
    th0 = f2_add(w0, f2_mul_xi(f2_mul(s2, c1c4)))
    th1 = f2_sub(f2_mul(f2_add(s0, s1), f2_add(c0, c1c4)), f2_add(w0, w1))
    th2 = f2_add(f2_mul(s2, c0), w1)
    ta = (ta0, ta1, ta2)
    tb = (tb0, tb1, tb2)
    low = f6_add(ta, f6_mul_by_v(tb))
    high = f6_sub((th0, th1, th2), f6_add(ta, tb))
    return (low, high)


# ---------------------------------------------------------------------------
# Frobenius maps
#
# Viewing Fp12 as sum(c_i * w^i) over Fp2, the p-power map sends c_i to
# conj(c_i) * gamma_i with gamma_i = xi^(i*(p-1)/6).  The constants for the
# p, p^2 and p^3 powers are computed here once at import.

_XI = (_ONE, _ONE)


def _frob_gammas(power):
    exp = (P**power - 1) // 6
    return [f2_pow(_XI, i * exp) for i in range(6)]

_GAMMA = {1: _frob_gammas(1), 2: _frob_gammas(2), 3: _frob_gammas(3)}


def f12_frob(f, power):
    """Raise to the p^power for power in {1, 2, 3}."""
    gamma = _GAMMA[power]
    (a0, a1, a2), (b0, b1, b2) = f
    if power % 2:
        a0, a1, a2 = f2_conj(a0), f2_conj(a1), f2_conj(a2)
        b0, b1, b2 = f2_conj(b0), f2_conj(b1), f2_conj(b2)
    return (
        (a0, f2_mul(a1, gamma[2]), f2_mul(a2, gamma[4])),
        (f2_mul(b0, gamma[1]), f2_mul(b1, gamma[3]), f2_mul(b2, gamma[5])),
    )
