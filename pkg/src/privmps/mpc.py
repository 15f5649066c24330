"""Interactive gadgets over additive shares.

Every function here runs inside one CSP and operates on that party's share
vectors; all CSPs call the same gadgets in the same order. The only values
ever reconstructed are masked openings and the outputs the leakage model
permits, each recorded in the transcript with its class.
"""

from __future__ import annotations

from collections import Counter

from .field import FieldParams, decode_elems, encode_elems
from .sharing import BeaverTriple, CmpMaterial, LookupMaterial, MaterialKind, decode_material
from .transcript import LeakageClass, Transcript
from .transport import Link, ProtocolAbort
from .wire import MsgType


class MaterialError(ProtocolAbort):
    pass


class Runtime:
    """One CSP's lockstep protocol state: counters, peers, material, transcript."""

    def __init__(self, index: int, beta: int, params: FieldParams, link: Link,
                 csp_ids: list[str], dealer_id: str = "dealer", transcript: Transcript | None = None):
        self.index = index
        self.beta = beta
        self.params = params
        self.p = params.p
        self.link = link
        self.others = [c for i, c in enumerate(csp_ids) if i != index]
        self.dealer_id = dealer_id
        self.transcript = transcript if transcript is not None else Transcript()
        self.round = 0
        self.gadget = 0
        self.context = "setup"
        self.consumed: Counter = Counter()
        self.requested: Counter = Counter()

    def next_gadget(self) -> int:
        self.gadget += 1
        return self.gadget

    def const(self, c: int) -> int:
        """This party's share of a public constant."""
        return c % self.p if self.index == 0 else 0

    def exchange(self, shares: list[int], cls: LeakageClass) -> list[int]:
        """Open a vector of shared values to every CSP."""
        self.round += 1
        payload = encode_elems(shares)
        for peer in self.others:
            self.link.send(peer, MsgType.OPEN_PART, payload, self.round, self.gadget)
        total = list(shares)
        for peer in self.others:
            frame = self.link.recv(peer, MsgType.OPEN_PART, self.round, self.gadget)
            part = decode_elems(frame.payload)
            if len(part) != len(total):
                raise ProtocolAbort(f"{peer} opened {len(part)} values, expected {len(total)}")
            total = [a + b for a, b in zip(total, part)]
        p = self.p
        values = [v % p for v in total]
        self.transcript.record(self.round, self.gadget, cls, values, self.context)
        return values

    def fetch(self, kind: MaterialKind, count: int, length: int = 0) -> list:
        if count == 0:
            return []
        payload = encode_elems([int(kind), count, length])
        self.link.send(self.dealer_id, MsgType.MATERIAL_REQUEST, payload, self.round, self.gadget)
        frame = self.link.recv(self.dealer_id, MsgType.MATERIAL, self.round, self.gadget)
        got_kind, items = decode_material(frame.payload)
        if got_kind != kind or len(items) != count:
            raise MaterialError(f"dealer sent {len(items)} x {got_kind.name}, wanted {count} x {kind.name}")
        self.requested[kind] += count
        return items

    def end_session(self) -> None:
        self.link.send(self.dealer_id, MsgType.MATERIAL_REQUEST,
                       encode_elems([int(MaterialKind.END), 0, 0]), self.round, self.gadget)


def open_values(rt: Runtime, xs: list[int], cls: LeakageClass) -> list[int]:
    rt.next_gadget()
    return rt.exchange(xs, cls)


def open_value(rt: Runtime, x: int, cls: LeakageClass) -> int:
    return open_values(rt, [x], cls)[0]


def mul(rt: Runtime, xs: list[int], ys: list[int], triples: list[BeaverTriple] | None = None) -> list[int]:
    """Elementwise product of shared vectors, one Beaver triple per entry."""
    n = len(xs)
    if len(ys) != n:
        raise ValueError("operand vectors differ in length")
    if triples is None:
        triples = rt.fetch(MaterialKind.TRIPLE, n)
    if len(triples) != n:
        raise MaterialError("one triple per product required")
    for t in triples:
        if t.spent:
            raise MaterialError("Beaver triple reused")
        t.spent = True
    rt.next_gadget()
    if not n:
        return []
    p = rt.p
    masked = rt.exchange([(x - t.a) % p for x, t in zip(xs, triples)]
                         + [(y - t.b) % p for y, t in zip(ys, triples)],
                         LeakageClass.MASKED_COMPARISON_VALUE)
    ds, es = masked[:n], masked[n:]
    rt.consumed[MaterialKind.TRIPLE] += n
    if rt.index == 0:
        return [(t.c + d * t.b + e * t.a + d * e) % p for t, d, e in zip(triples, ds, es)]
    return [(t.c + d * t.b + e * t.a) % p for t, d, e in zip(triples, ds, es)]


def ltz(rt: Runtime, ds: list[int], mats: list[CmpMaterial] | None = None, bits: int | None = None) -> list[int]:
    """Shared bits [d < 0] for shared signed values with |d| < 2^k.

    ``bits`` is k (default K); a smaller public bound saves k - 1 products per
    value. d' = d + 2^k is opened under the statistical mask R; the low k bits
    of d' follow from a bitwise comparison of the public c mod 2^k with the
    shared bits of R, and bit k of d' is then an exact division by 2^k.
    """
    n = len(ds)
    if not n:
        return []
    K, p = rt.params.K, rt.p
    k = K if bits is None else bits
    if not 1 <= k <= K:
        raise ValueError(f"comparison width {k} outside [1, {K}]")
    if mats is None:
        mats = rt.fetch(MaterialKind.CMP, n)
    if len(mats) != n:
        raise MaterialError("one comparison mask per value required")
    rt.next_gadget()
    rt.consumed[MaterialKind.CMP] += n
    two_k = 1 << k
    shift = rt.const(two_k)
    dprime = [(d + shift) % p for d in ds]
    cs = rt.exchange([(x + m.R) % p for x, m in zip(dprime, mats)], LeakageClass.MASKED_COMPARISON_VALUE)
    limit = (1 << (k + 1)) + (1 << (K + 1 + rt.params.sigma))
    if any(c >= limit for c in cs):
        raise ProtocolAbort("comparison operand outside the signed range")
    low_a = [c & (two_k - 1) for c in cs]

    one = rt.const(1)
    # x_i = a_i XOR r_i, linear because a_i is public
    xor = [[(m.bits[i] if not (a >> i) & 1 else (one - m.bits[i])) % p for i in range(k)]
           for a, m in zip(low_a, mats)]
    # prefix OR from the most significant bit down
    prefix = [[0] * (k + 1) for _ in range(n)]
    for t in range(n):
        prefix[t][k - 1] = xor[t][k - 1]
    triples = rt.fetch(MaterialKind.TRIPLE, n * (k - 1))
    for step, i in enumerate(range(k - 2, -1, -1)):
        prev = [prefix[t][i + 1] for t in range(n)]
        cur = [xor[t][i] for t in range(n)]
        prod = mul(rt, prev, cur, triples[step * n:(step + 1) * n])
        for t in range(n):
            prefix[t][i] = (prev[t] + cur[t] - prod[t]) % p

    out = []
    inv_two_k = pow(two_k, -1, p)
    for t in range(n):
        a, m, e = low_a[t], mats[t], prefix[t]
        # [a < r'] = sum over the first differing bit i of (1 - a_i)
        below = sum(e[i] - e[i + 1] for i in range(k) if not (a >> i) & 1)
        r_low = sum(m.bits[i] << i for i in range(k))
        d_low = rt.const(a) - r_low + two_k * below
        top = (dprime[t] - d_low) * inv_two_k
        out.append((one - top) % p)
    return out


def cmp_open_lt(rt: Runtime, a: int, b: int, bits: int | None = None) -> int:
    """Public bit [a < b] for shared a, b with |a - b| < 2^bits; only the bit is opened."""
    (bit,) = ltz(rt, [(a - b) % rt.p], bits=bits)
    value = open_value(rt, bit, LeakageClass.COMPARISON_BIT)
    if value not in (0, 1):
        raise ProtocolAbort(f"comparison produced non-bit {value}")
    return value


def lookup(rt: Runtime, idxs: list[int], table: list[int], mats: list[LookupMaterial] | None = None) -> list[int]:
    """Shares of table[idx] for shared indices, table public.

    The dealer's one-hot vector e_r is rotated by the opened z = (idx - r)
    mod L, which is uniform whatever idx is.
    """
    n, L = len(idxs), len(table)
    if not n:
        return []
    p = rt.p
    if mats is None:
        mats = rt.fetch(MaterialKind.LOOKUP, n, L)
    if len(mats) != n or any(m.length != L for m in mats):
        raise MaterialError(f"need {n} lookup vectors of length {L}")
    diffs = [(i - m.r) % p for i, m in zip(idxs, mats)]
    # idx - r lies in (-L, L)
    wrap = ltz(rt, diffs, bits=L.bit_length())
    rt.next_gadget()
    rt.consumed[MaterialKind.LOOKUP] += n
    zs = rt.exchange([(d + L * b) % p for d, b in zip(diffs, wrap)], LeakageClass.MASKED_LOOKUP_INDEX)
    if any(z >= L for z in zs):
        raise ProtocolAbort("opened lookup offset outside [0, L): corrupted material or index out of range")
    doubled = list(table) + list(table)
    return [sum(map(int.__mul__, m.onehot, doubled[z:z + L])) % p for m, z in zip(mats, zs)]
