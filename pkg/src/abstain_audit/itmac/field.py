"""Prime-field and quadratic-extension arithmetic for MAC tags.

Base field F_p with p = 2^61 - 1 (Mersenne, so reduction is cheap and every
element packs into 8 bytes).  Tags and keys live in F_{p^2} represented as
pairs (a, b) standing for a + b*i with i^2 = -1, which is a field because
p = 3 (mod 4).  Elements are plain Python ints / 2-tuples: values stay
small and the arithmetic is exact.
"""

P = (1 << 61) - 1

assert P % 4 == 3  # i^2 = -1 must be a non-residue for the extension


def fadd(a: int, b: int) -> int:
    return (a + b) % P


def fsub(a: int, b: int) -> int:
    return (a - b) % P


def fmul(a: int, b: int) -> int:
    return (a * b) % P


def fneg(a: int) -> int:
    return -a % P


def finv(a: int) -> int:
    if a % P == 0:
        raise ZeroDivisionError("0 has no inverse")
    return pow(a, P - 2, P)


def to_field(v: int) -> int:
    """Signed int -> canonical residue."""
    return v % P


def from_field_signed(a: int) -> int:
    """Canonical residue -> signed int, reading values above p/2 as negative."""
    a %= P
    return a - P if a > P // 2 else a


# ---------------------------------------------------------------------------
# F_{p^2}: pairs (re, im)

EXT_ZERO = (0, 0)


def eadd(x, y):
    return ((x[0] + y[0]) % P, (x[1] + y[1]) % P)


def esub(x, y):
    return ((x[0] - y[0]) % P, (x[1] - y[1]) % P)


def emul(x, y):
    return ((x[0] * y[0] - x[1] * y[1]) % P,
            (x[0] * y[1] + x[1] * y[0]) % P)


def escale(x, s: int):
    """Multiply an extension element by a base-field scalar."""
    return (x[0] * s % P, x[1] * s % P)


def rand_field(rng) -> int:
    return rng.randrange(P)


def rand_ext(rng):
    return (rng.randrange(P), rng.randrange(P))
