"""Authenticated-value sessions: dealer, linear ops, Beaver multiplication,
and the deferred batch MAC check.

A session binds one prover and one verifier running the *same* deterministic
op sequence in lockstep, talking only through the channel.  Every value x
the prover holds carries a tag M_x; the verifier holds a key K_x and the
global Delta with M_x = K_x + Delta*x in F_{p^2}.  Linear ops are local;
multiplication consumes a dealer triple and opens masked differences; all
correctness claims are deferred to batch_check, which verifies one random
linear combination per batch (soundness error ~ 1/p^2).

The dealer is co-located with the verifier and seeds all preprocessing --
a deliberate trust simplification: a corrupt verifier here could equivocate
on preprocessing, which a VOLE-style setup would prevent.
"""

import random
from collections import deque
from dataclasses import dataclass

from . import channel as ch
from .field import (P, EXT_ZERO, eadd, emul, escale, esub, fadd, fmul, fneg,
                    fsub, rand_ext, rand_field)

PROVER = "prover"
VERIFIER = "verifier"

_CHUNK = 8192  # preprocessing batch size


class AbortError(RuntimeError):
    """MAC or consistency check failed: the run ends with no verdict."""


@dataclass
class AuthValue:
    """One authenticated wire.  Prover fills value/tag, verifier fills key."""

    value: int | None = None
    tag: tuple | None = None
    key: tuple | None = None


class Dealer:
    """Seeded source of authenticated randoms and Beaver triples."""

    def __init__(self, seed: int):
        self.rng = random.Random(f"dealer:{seed}")
        self.delta = rand_ext(self.rng)

    def _auth(self, x: int):
        key = rand_ext(self.rng)
        return (x, eadd(key, escale(self.delta, x))), key

    def make_auth(self, n: int):
        prover_part, keys = [], []
        for _ in range(n):
            r = rand_field(self.rng)
            pv, key = self._auth(r)
            prover_part.append(pv)
            keys.append(key)
        return prover_part, keys

    def make_triples(self, n: int):
        prover_part, keys = [], []
        for _ in range(n):
            a, b = rand_field(self.rng), rand_field(self.rng)
            c = fmul(a, b)
            pa, ka = self._auth(a)
            pb, kb = self._auth(b)
            pc, kc = self._auth(c)
            prover_part.append((pa, pb, pc))
            keys.append((ka, kb, kc))
        return prover_part, keys


class Session:
    def __init__(self, role: str, channel, dealer: Dealer | None = None):
        if role not in (PROVER, VERIFIER):
            raise ValueError(f"unknown role {role!r}")
        if (dealer is not None) != (role == VERIFIER):
            raise ValueError("exactly the verifier carries the dealer")
        self.role = role
        self.ch = channel
        self.dealer = dealer
        self.delta = dealer.delta if dealer else None
        self._auth_pool = deque()
        self._triple_pool = deque()
        self._pending = []  # AuthValues claimed to be zero
        self.n_multiplies = 0
        self.n_checks = 0

    # -- preprocessing -----------------------------------------------------

    def _refill(self, n_auth: int, n_triple: int) -> None:
        n_auth, n_triple = max(n_auth, _CHUNK), max(n_triple, _CHUNK)
        if self.role == PROVER:
            self.ch.send(ch.MSG_NEED_DEALER, ch.pack_fields([n_auth, n_triple]))
            t, payload = self.ch.recv()
            self._expect(t, ch.MSG_DEALER_AUTH)
            flat = ch.unpack_fields(payload)
            for i in range(0, len(flat), 3):
                self._auth_pool.append((flat[i], (flat[i + 1], flat[i + 2])))
            t, payload = self.ch.recv()
            self._expect(t, ch.MSG_DEALER_TRIPLE)
            flat = ch.unpack_fields(payload)
            for i in range(0, len(flat), 9):
                g = flat[i:i + 9]
                self._triple_pool.append(((g[0], (g[1], g[2])),
                                          (g[3], (g[4], g[5])),
                                          (g[6], (g[7], g[8]))))
        else:
            t, payload = self.ch.recv()
            self._expect(t, ch.MSG_NEED_DEALER)
            n_auth, n_triple = ch.unpack_fields(payload)
            prover_part, keys = self.dealer.make_auth(n_auth)
            flat = []
            for r, tag in prover_part:
                flat += [r, tag[0], tag[1]]
            self.ch.send(ch.MSG_DEALER_AUTH, ch.pack_fields(flat))
            self._auth_pool.extend(keys)
            prover_part, keys = self.dealer.make_triples(n_triple)
            flat = []
            for trip in prover_part:
                for r, tag in trip:
                    flat += [r, tag[0], tag[1]]
            self.ch.send(ch.MSG_DEALER_TRIPLE, ch.pack_fields(flat))
            self._triple_pool.extend(keys)

    def _take_auth(self, n: int):
        if len(self._auth_pool) < n:
            self._refill(n - len(self._auth_pool), 0)
        return [self._auth_pool.popleft() for _ in range(n)]

    def _take_triples(self, n: int):
        if len(self._triple_pool) < n:
            self._refill(0, n - len(self._triple_pool))
        return [self._triple_pool.popleft() for _ in range(n)]

    @staticmethod
    def _expect(msg_type: int, wanted: int) -> None:
        if msg_type == ch.MSG_ABORT:
            raise AbortError("peer aborted")
        if msg_type != wanted:
            raise ch.ChannelError(f"unexpected frame type {msg_type}, wanted {wanted}")

    # -- wires ---------------------------------------------------------------

    def public(self, v: int) -> AuthValue:
        """A constant both parties know: tag 0, key -Delta*v."""
        v %= P
        if self.role == PROVER:
            return AuthValue(value=v, tag=EXT_ZERO)
        return AuthValue(key=escale(self.delta, fneg(v)))

    def input_vec(self, xs) -> list[AuthValue]:
        """Prover feeds hidden values in; verifier passes the expected count."""
        if self.role == PROVER:
            n = len(xs)
            randoms = self._take_auth(n)
            deltas, out = [], []
            for x, (r, tag) in zip(xs, randoms):
                x %= P
                deltas.append(fsub(x, r))
                out.append(AuthValue(value=x, tag=tag))
            self.ch.send(ch.MSG_INPUT_DELTA, ch.pack_fields(deltas))
            return out
        n = xs if isinstance(xs, int) else len(xs)
        keys = self._take_auth(n)
        t, payload = self.ch.recv()
        self._expect(t, ch.MSG_INPUT_DELTA)
        deltas = ch.unpack_fields(payload)
        if len(deltas) != n:
            raise ch.ChannelError("input batch size mismatch")
        return [AuthValue(key=esub(k, escale(self.delta, d)))
                for k, d in zip(keys, deltas)]

    def input_scalar(self, x) -> AuthValue:
        return self.input_vec([x] if self.role == PROVER else 1)[0]

    def lin_combine(self, coeffs, values, const: int = 0) -> AuthValue:
        if len(coeffs) != len(values):
            raise ValueError("coeffs and values must have equal length")
        const %= P
        if self.role == PROVER:
            acc_v, acc_t = const, EXT_ZERO
            for c, av in zip(coeffs, values):
                c %= P
                acc_v = (acc_v + c * av.value) % P
                acc_t = eadd(acc_t, escale(av.tag, c))
            return AuthValue(value=acc_v, tag=acc_t)
        acc_k = escale(self.delta, fneg(const))
        for c, av in zip(coeffs, values):
            acc_k = eadd(acc_k, escale(av.key, c % P))
        return AuthValue(key=acc_k)

    def add(self, x: AuthValue, y: AuthValue) -> AuthValue:
        return self.lin_combine([1, 1], [x, y])

    def sub(self, x: AuthValue, y: AuthValue) -> AuthValue:
        return self.lin_combine([1, P - 1], [x, y])

    def multiply_vec(self, xs, ys) -> list[AuthValue]:
        """Beaver multiplication, one opening frame for the whole batch."""
        n = len(xs)
        if len(ys) != n:
            raise ValueError("batch length mismatch")
        triples = self._take_triples(n)
        self.n_multiplies += n
        if self.role == PROVER:
            opens = []
            for x, y, ((a, _), (b, _), _) in zip(xs, ys, triples):
                opens.append(fsub(x.value, a))
                opens.append(fsub(y.value, b))
            self.ch.send(ch.MSG_OPEN_MASKED, ch.pack_fields(opens))
        else:
            t, payload = self.ch.recv()
            self._expect(t, ch.MSG_OPEN_MASKED)
            opens = ch.unpack_fields(payload)
            if len(opens) != 2 * n:
                raise ch.ChannelError("opening batch size mismatch")
        out = []
        for i, (x, y, trip) in enumerate(zip(xs, ys, triples)):
            d, e = opens[2 * i], opens[2 * i + 1]
            if self.role == PROVER:
                (a, ta), (b, tb), (c, tc) = trip
                z = (c + d * b + e * a + d * e) % P
                tz = eadd(tc, eadd(escale(tb, d), escale(ta, e)))
                out.append(AuthValue(value=z, tag=tz))
                # claims: the openings really were x-a and y-b
                av_a = AuthValue(value=a, tag=ta)
                av_b = AuthValue(value=b, tag=tb)
            else:
                ka, kb, kc = trip
                kz = eadd(kc, eadd(escale(kb, d), escale(ka, e)))
                kz = esub(kz, escale(self.delta, fmul(d, e)))
                out.append(AuthValue(key=kz))
                av_a = AuthValue(key=ka)
                av_b = AuthValue(key=kb)
            self.assert_zero(self.lin_combine([1, P - 1], [x, av_a], fneg(d)))
            self.assert_zero(self.lin_combine([1, P - 1], [y, av_b], fneg(e)))
        return out

    def multiply(self, x: AuthValue, y: AuthValue) -> AuthValue:
        return self.multiply_vec([x], [y])[0]

    # -- verification --------------------------------------------------------

    def assert_zero(self, av: AuthValue) -> None:
        self._pending.append(av)

    def batch_check(self) -> bool:
        """Check all pending zero claims with one random combination."""
        self.n_checks += 1
        if not self._pending:
            return True
        pending, self._pending = self._pending, []
        if self.role == VERIFIER:
            seed = self.dealer.rng.getrandbits(64)
            self.ch.send(ch.MSG_CHECK_COINS, seed.to_bytes(8, "little"))
        else:
            t, payload = self.ch.recv()
            self._expect(t, ch.MSG_CHECK_COINS)
            seed = int.from_bytes(payload, "little")
        coin_rng = random.Random(seed)
        coins = [rand_ext(coin_rng) for _ in pending]
        if self.role == PROVER:
            acc = EXT_ZERO
            for chi, av in zip(coins, pending):
                acc = eadd(acc, emul(chi, av.tag))
            self.ch.send(ch.MSG_CHECK_MAC, ch.pack_fields([acc[0], acc[1]]))
            t, _ = self.ch.recv()
            if t == ch.MSG_ABORT:
                raise AbortError("verifier rejected the batch MAC")
            self._expect(t, ch.MSG_CHECK_OK)
            return True
        acc = EXT_ZERO
        for chi, av in zip(coins, pending):
            acc = eadd(acc, emul(chi, av.key))
        t, payload = self.ch.recv()
        self._expect(t, ch.MSG_CHECK_MAC)
        got = tuple(ch.unpack_fields(payload))
        if got != acc:
            self.ch.send(ch.MSG_ABORT)
            raise AbortError("batch MAC mismatch")
        self.ch.send(ch.MSG_CHECK_OK)
        return True

    def reveal(self, av: AuthValue) -> int:
        """Immediate MAC-checked opening; the one place plaintext crosses."""
        if self.role == PROVER:
            self.ch.send(ch.MSG_REVEAL,
                         ch.pack_fields([av.value, av.tag[0], av.tag[1]]))
            t, payload = self.ch.recv()
            if t == ch.MSG_ABORT:
                raise AbortError("verifier rejected the reveal")
            self._expect(t, ch.MSG_VERDICT)
            return ch.unpack_fields(payload)[0]
        t, payload = self.ch.recv()
        self._expect(t, ch.MSG_REVEAL)
        x, tre, tim = ch.unpack_fields(payload)
        if (tre, tim) != eadd(av.key, escale(self.delta, x)):
            self.ch.send(ch.MSG_ABORT)
            raise AbortError("reveal MAC mismatch")
        self.ch.send(ch.MSG_VERDICT, ch.pack_fields([x]))
        return x
