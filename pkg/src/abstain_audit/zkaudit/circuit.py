"""Authenticated-arithmetic gadgets mirroring the fixed-point pipeline.

Every wire pairs an authenticated field element with the prover's plaintext
(signed) value; the verifier's side of the pair is None.  Gadgets advance
both in lockstep: the clear side reproduces fixedpoint.py exactly and is
where witnesses (bits, quotients, reciprocals, one-hot selectors) come
from, while the committed side turns each witness into boolean / range /
recomposition claims that the batch MAC check enforces.  A cheating prover
can feed in any witnesses it likes; it cannot make a false claim survive
batch_check except with probability ~1/p^2.
"""

from dataclasses import dataclass

from ..itmac.field import P, fneg
from ..itmac.session import PROVER, AuthValue, Session
from .fixedpoint import FixedPointParams, fx_exp_index


@dataclass
class Wire:
    av: AuthValue
    clear: int | None  # prover-only signed value


class Circuit:
    """Gadget toolbox bound to one session.  `corrupt` lets the adversarial
    test harness replace the prover's clear values at chosen spots; honest
    runs never set it."""

    def __init__(self, sess: Session, fp: FixedPointParams):
        self.s = sess
        self.fp = fp
        self.prover = sess.role == PROVER

    # -- wire plumbing -------------------------------------------------------

    def witness_vec(self, clears) -> list[Wire]:
        """Hidden prover-chosen values (clears is a count on the verifier)."""
        if self.prover:
            avs = self.s.input_vec([c % P for c in clears])
            return [Wire(av, c) for av, c in zip(avs, clears)]
        return [Wire(av, None) for av in self.s.input_vec(clears)]

    def witness(self, clear) -> Wire:
        return self.witness_vec([clear] if self.prover else 1)[0]

    def public(self, v: int) -> Wire:
        return Wire(self.s.public(v), v)

    def lin(self, coeffs, wires, const: int = 0) -> Wire:
        av = self.s.lin_combine([c % P for c in coeffs],
                                [w.av for w in wires], const % P)
        clear = None
        if self.prover:
            clear = const + sum(c * w.clear for c, w in zip(coeffs, wires))
        return Wire(av, clear)

    def add(self, x: Wire, y: Wire) -> Wire:
        return self.lin([1, 1], [x, y])

    def sub(self, x: Wire, y: Wire) -> Wire:
        return self.lin([1, -1], [x, y])

    def mul_vec(self, xs, ys) -> list[Wire]:
        avs = self.s.multiply_vec([x.av for x in xs], [y.av for y in ys])
        if self.prover:
            return [Wire(av, x.clear * y.clear)
                    for av, x, y in zip(avs, xs, ys)]
        return [Wire(av, None) for av in avs]

    def mul(self, x: Wire, y: Wire) -> Wire:
        return self.mul_vec([x], [y])[0]

    def assert_zero(self, w: Wire) -> None:
        self.s.assert_zero(w.av)

    # -- boolean / range gadgets ----------------------------------------------

    def assert_bool_vec(self, bits) -> None:
        minus_one = [self.lin([1], [b], -1) for b in bits]
        for prod in self.mul_vec(bits, minus_one):
            self.assert_zero(prod)

    def decompose(self, w: Wire, nbits: int, clear_override=None) -> list[Wire]:
        """Prover supplies the nbits-bit decomposition; recomposition is
        pinned to the wire, so wrong bits cannot survive."""
        if self.prover:
            v = w.clear if clear_override is None else clear_override
            clears = [(v >> i) & 1 for i in range(nbits)]
        else:
            clears = nbits
        bits = self.witness_vec(clears)
        self.assert_bool_vec(bits)
        recomp = self.lin([1 << i for i in range(nbits)], bits)
        self.assert_zero(self.sub(recomp, w))
        return bits

    def range_check(self, w: Wire, nbits: int) -> None:
        self.decompose(w, nbits)

    def lt(self, x: Wire, y: Wire) -> Wire:
        """1 iff x < y, both signed within ell bits: the top bit of
        y - x - 1 + 2^ell, proven by full decomposition."""
        ell = self.fp.ell
        v = self.lin([1, -1], [y, x], (1 << ell) - 1)
        return self.decompose(v, ell + 1)[ell]

    def select(self, b: Wire, x: Wire, y: Wire) -> Wire:
        """b*x + (1-b)*y for a proven boolean b."""
        return self.add(y, self.mul(b, self.sub(x, y)))

    def relu(self, w: Wire) -> Wire:
        neg = self.lt(w, self.public(0))
        keep = self.lin([-1], [neg], 1)
        return self.mul(w, keep)

    def rescale(self, w: Wire) -> Wire:
        """Floor-divide by 2^f: witness quotient and remainder, check
        w = q*2^f + r, r in [0, 2^f), q in signed ell-bit range."""
        f, half = self.fp.f, 1 << (self.fp.ell - 1)
        if self.prover:
            q, r = w.clear // self.fp.scale, w.clear % self.fp.scale
            qw, rw = self.witness_vec([q, r])
        else:
            qw, rw = self.witness_vec(2)
        self.range_check(rw, f)
        self.decompose(self.lin([1], [qw], half), self.fp.ell)  # q + 2^{ell-1} >= 0
        self.assert_zero(self.lin([1 << f, 1, -1], [qw, rw, w]))
        return qw

    # -- model layers ----------------------------------------------------------

    def linear_public_input(self, W_wires, b_wires, x_ints) -> list[Wire]:
        """First layer when the reference point is public: the inputs act as
        coefficients over committed weights -- no triples consumed."""
        out = []
        for row, bias in zip(W_wires, b_wires):
            out.append(self.lin(list(x_ints) + [self.fp.scale], row + [bias]))
        return out

    def linear_hidden(self, W_wires, b_wires, h) -> list[Wire]:
        """Hidden x hidden matmul: one batched multiply per layer."""
        n_out, n_in = len(W_wires), len(h)
        flat_w = [w for row in W_wires for w in row]
        flat_h = h * n_out
        prods = self.mul_vec(flat_w, flat_h)
        out = []
        for i, bias in enumerate(b_wires):
            row = prods[i * n_in:(i + 1) * n_in]
            out.append(self.lin([1] * n_in + [self.fp.scale], row + [bias]))
        return out

    def layer(self, W_wires, b_wires, h, x_public=None, final=False) -> list[Wire]:
        if x_public is not None:
            acc = self.linear_public_input(W_wires, b_wires, x_public)
        else:
            acc = self.linear_hidden(W_wires, b_wires, h)
        out = [self.rescale(z) for z in acc]
        if not final:
            out = [self.relu(z) for z in out]
        return out

    def argmax(self, logits) -> tuple[Wire, Wire]:
        """(max, argmax) by tournament; strict lt keeps the lowest index."""
        best, idx = logits[0], self.public(0)
        for j in range(1, len(logits)):
            b = self.lt(best, logits[j])
            best = self.select(b, logits[j], best)
            idx = self.select(b, self.public(j), idx)
        return best, idx

    # -- table reads -------------------------------------------------------------

    def one_hot(self, idx: Wire, size: int, clear_idx=None) -> list[Wire]:
        """Prover-supplied selector: booleans summing to 1 whose index-weighted
        sum equals idx."""
        if self.prover:
            k = idx.clear if clear_idx is None else clear_idx
            sel = self.witness_vec([int(j == k) for j in range(size)])
        else:
            sel = self.witness_vec(size)
        self.assert_bool_vec(sel)
        self.assert_zero(self.lin([1] * size, sel, -1))
        self.assert_zero(self.sub(self.lin(list(range(size)), sel), idx))
        return sel

    def table_read(self, table: list[int], idx: Wire) -> Wire:
        """Hidden-index read of a public table, factored through two 2^(n/2)
        one-hots so the boolean work stays square-root sized."""
        size = len(table)
        lo_sz = 1 << ((size - 1).bit_length() // 2)
        hi_sz = (size + lo_sz - 1) // lo_sz
        if self.prover:
            hi_c, lo_c = idx.clear // lo_sz, idx.clear % lo_sz
            hi_w, lo_w = self.witness_vec([hi_c, lo_c])
        else:
            hi_w, lo_w = self.witness_vec(2)
            hi_c = lo_c = None
        self.assert_zero(self.lin([lo_sz, 1, -1], [hi_w, lo_w, idx]))
        hi_sel = self.one_hot(hi_w, hi_sz, hi_c)
        lo_sel = self.one_hot(lo_w, lo_sz, lo_c)
        # row values: public-coefficient combinations of the low selector
        rows = []
        for j in range(hi_sz):
            coeffs = [table[j * lo_sz + k] if j * lo_sz + k < size else 0
                      for k in range(lo_sz)]
            rows.append(self.lin(coeffs, lo_sel))
        picked = self.mul_vec(hi_sel, rows)
        return self.lin([1] * hi_sz, picked)

    # -- confidence --------------------------------------------------------------

    def confidence(self, logits, table: list[int]) -> tuple[Wire, Wire]:
        """(p_hat, y_hat) from the committed logits, mirroring
        fixedpoint.fx_confidence bit-exactly."""
        fp = self.fp
        z_max, y_hat = self.argmax(logits)
        width = fp.scale >> (fp.table_bits - 4)
        terms = []
        for z in logits:
            neg_d = self.sub(z_max, z)  # -d >= 0
            shifted = self.lin([1], [neg_d], width // 2)
            # raw slot index: floor(shifted / width); width is a power of two
            if self.prover:
                q, r = shifted.clear // width, shifted.clear % width
                qw, rw = self.witness_vec([q, r])
            else:
                qw, rw = self.witness_vec(2)
            self.range_check(rw, width.bit_length() - 1)
            self.range_check(qw, fp.ell)
            self.assert_zero(self.lin([width, 1, -1], [qw, rw, shifted]))
            in_range = self.lt(qw, self.public(fp.table_size))
            idx = self.select(in_range, qw, self.public(fp.table_size - 1))
            if self.prover:
                assert idx.clear == fx_exp_index(-(neg_d.clear), fp)
            terms.append(self.table_read(table, idx))
        S = self.lin([1] * len(terms), terms)
        if self.prover:
            p_clear = ((1 << (2 * fp.f)) + S.clear // 2) // S.clear
        else:
            p_clear = None
        p_hat = self.witness(p_clear)
        self.range_check(p_hat, fp.f + 1)
        prod = self.mul(p_hat, S)
        target = 1 << (2 * fp.f)
        lo = self.public(target - fp.recip_tol)
        hi = self.public(target + fp.recip_tol)
        self.assert_zero(self.lt(prod, lo))
        self.assert_zero(self.lt(hi, prod))
        return p_hat, y_hat

    def equals(self, x: Wire, y: Wire) -> Wire:
        """1 iff x == y, via two strict comparisons."""
        a = self.lt(x, y)
        b = self.lt(y, x)
        return self.lin([-1, -1], [a, b], 1)


class ZkArray:
    """Size-B array of authenticated accumulators with hidden-index update."""

    def __init__(self, circuit: Circuit, size: int):
        self.c = circuit
        self.size = size
        self.entries = [circuit.public(0) for _ in range(size)]

    def add_at(self, selector: list[Wire], inc: Wire) -> None:
        """entries[k] += selector[k] * inc for a proven one-hot selector."""
        prods = self.c.mul_vec(selector, [inc] * self.size)
        self.entries = [self.c.add(e, p) for e, p in zip(self.entries, prods)]

    def add_count(self, selector: list[Wire]) -> None:
        self.entries = [self.c.add(e, s) for e, s in zip(self.entries, selector)]


def zk_bin_update(circuit: Circuit, arrays, b: Wire, p_hat: Wire, eq: Wire,
                  clear_b=None) -> None:
    """Scatter one audited point into (count, conf, acc) at hidden bin b."""
    count_arr, conf_arr, acc_arr = arrays
    sel = circuit.one_hot(b, count_arr.size, clear_b)
    count_arr.add_count(sel)
    conf_arr.add_at(sel, p_hat)
    acc_arr.add_at(sel, circuit.lin([circuit.fp.scale], [eq]))


def zk_bin_check(circuit: Circuit, arrays, alpha_fx: int) -> Wire:
    """Per-bin |acc - conf| <= alpha * count over public bin indices, ANDed
    into the single pass flag."""
    count_arr, conf_arr, acc_arr = arrays
    f_pass = circuit.public(1)
    for k in range(count_arr.size):
        diff = circuit.sub(acc_arr.entries[k], conf_arr.entries[k])
        if circuit.prover:
            sign = circuit.witness(int(diff.clear >= 0))
        else:
            sign = circuit.witness(1)
        circuit.assert_bool_vec([sign])
        # abs = diff * (2*sign - 1); the range check pins sign to the true one
        # (a flipped sign makes abs negative, which cannot decompose)
        abs_w = circuit.mul(diff, circuit.lin([2], [sign], -1))
        circuit.range_check(abs_w, circuit.fp.ell)
        lhs = circuit.lin([alpha_fx], [count_arr.entries[k]])
        f_bin = circuit.lin([-1], [circuit.lt(lhs, abs_w)], 1)
        f_pass = circuit.mul(f_pass, f_bin)
    return f_pass
