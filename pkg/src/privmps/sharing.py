"""Additive secret sharing among the CSPs and dealer-issued correlated randomness.

A secret x is split into beta field elements that sum to x mod p. The dealer
produces input-independent material: Beaver triples, shifted one-hot vectors
for oblivious lookup, and bit-decomposed masks for comparison.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .field import ELEM_BYTES, MERSENNE_127, FieldError, FieldParams, FieldRNG, decode_elems, encode_elems


class SharingError(ValueError):
    pass


@dataclass(frozen=True)
class AdditiveShare:
    party_index: int
    value: int


def share(x: int, beta: int, rng: FieldRNG, p: int = MERSENNE_127) -> list[AdditiveShare]:
    if beta < 2:
        raise SharingError("additive sharing needs at least two parties")
    masks = rng.elements(beta - 1)
    last = (x - sum(masks)) % p
    return [AdditiveShare(i, v) for i, v in enumerate(masks + [last])]


def share_vector(values: list[int], beta: int, rng: FieldRNG, p: int = MERSENNE_127) -> list[list[int]]:
    """Share each entry of ``values``; returns one share vector per party."""
    if beta < 2:
        raise SharingError("additive sharing needs at least two parties")
    n = len(values)
    rows = [rng.elements(n) for _ in range(beta - 1)]
    last = [(v - sum(col)) % p for v, col in zip(values, zip(*rows))] if n else []
    return rows + [last]


def reconstruct(shares: list[AdditiveShare], beta: int | None = None, p: int = MERSENNE_127) -> int:
    indices = [s.party_index for s in shares]
    if len(set(indices)) != len(indices):
        raise SharingError(f"duplicate party index in {sorted(indices)}")
    expected = len(shares) if beta is None else beta
    if sorted(indices) != list(range(expected)):
        raise SharingError(f"expected shares from parties 0..{expected - 1}, got {sorted(indices)}")
    return sum(s.value for s in shares) % p


def local_lincomb(terms: list[tuple[int, AdditiveShare]], const: int = 0, party_index: int | None = None,
                  p: int = MERSENNE_127) -> AdditiveShare:
    """Share of sum(coeff * x) + const, computed without interaction.

    Only party 0 adds the public constant. ``party_index`` is required when
    ``terms`` is empty.
    """
    parties = {s.party_index for _, s in terms}
    if party_index is not None:
        parties.add(party_index)
    if len(parties) != 1:
        raise SharingError(f"terms mix party indices {sorted(parties)}")
    (me,) = parties
    acc = sum(c * s.value for c, s in terms)
    if me == 0:
        acc += const
    return AdditiveShare(me, acc % p)


# -- dealer material ---------------------------------------------------------

class MaterialKind(enum.IntEnum):
    END = 0
    TRIPLE = 1
    LOOKUP = 2
    CMP = 3


@dataclass(slots=True)
class BeaverTriple:
    """One party's shares of (a, b, c = a*b). Single use."""

    a: int
    b: int
    c: int
    spent: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class LookupMaterial:
    """One party's shares of a random offset r in [0, L) and of its one-hot vector."""

    r: int
    onehot: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.onehot)


@dataclass(frozen=True)
class CmpMaterial:
    """One party's shares of a mask R < 2^(K+1+sigma) and of its low K+1 bits."""

    R: int
    bits: tuple[int, ...]


class Dealer:
    """Generates material for all beta parties at once.

    Each ``*_batch`` method returns a list indexed by party, holding that
    party's view of every item.
    """

    def __init__(self, params: FieldParams, beta: int, rng: FieldRNG):
        if beta < 2:
            raise SharingError("need at least two CSPs")
        self.params = params
        self.beta = beta
        self.rng = rng
        self.issued = {kind: 0 for kind in MaterialKind}

    def _split(self, values: list[int]) -> list[list[int]]:
        return share_vector(values, self.beta, self.rng, self.params.p)

    def triple_batch(self, count: int) -> list[list[BeaverTriple]]:
        p = self.params.p
        a = self.rng.elements(count)
        b = self.rng.elements(count)
        c = [x * y % p for x, y in zip(a, b)]
        sa, sb, sc = self._split(a), self._split(b), self._split(c)
        self.issued[MaterialKind.TRIPLE] += count
        return [[BeaverTriple(*abc) for abc in zip(sa[i], sb[i], sc[i])] for i in range(self.beta)]

    def lookup_batch(self, count: int, length: int) -> list[list[LookupMaterial]]:
        p = self.params.p
        offsets = self.rng.below(length, count)
        out: list[list[LookupMaterial]] = [[] for _ in range(self.beta)]
        r_shares = self._split(offsets)
        for item, r in enumerate(offsets):
            rows = [self.rng.elements(length) for _ in range(self.beta - 1)]
            last = [(-sum(col)) % p for col in zip(*rows)]
            last[r] = (last[r] + 1) % p
            rows.append(last)
            for i in range(self.beta):
                out[i].append(LookupMaterial(r_shares[i][item], tuple(rows[i])))
        self.issued[MaterialKind.LOOKUP] += count
        return out

    def cmp_batch(self, count: int) -> list[list[CmpMaterial]]:
        K, sigma = self.params.K, self.params.sigma
        masks = self.rng.bits(count, K + 1 + sigma)
        flat_bits = [(R >> j) & 1 for R in masks for j in range(K + 1)]
        r_shares = self._split(masks)
        b_shares = self._split(flat_bits)
        w = K + 1
        self.issued[MaterialKind.CMP] += count
        return [[CmpMaterial(r_shares[i][t], tuple(b_shares[i][t * w:(t + 1) * w])) for t in range(count)]
                for i in range(self.beta)]

    def generate(self, kind: MaterialKind, count: int, length: int = 0) -> list[list]:
        if kind == MaterialKind.TRIPLE:
            return self.triple_batch(count)
        if kind == MaterialKind.LOOKUP:
            return self.lookup_batch(count, length)
        if kind == MaterialKind.CMP:
            return self.cmp_batch(count)
        raise SharingError(f"cannot generate material of kind {kind!r}")


def dealer_generate(kind: str | MaterialKind, count: int, rng: FieldRNG, params: FieldParams, beta: int,
                    length: int = 0, m_max: int | None = None) -> list[list]:
    kind = MaterialKind[kind.upper()] if isinstance(kind, str) else kind
    if kind == MaterialKind.LOOKUP and m_max is not None and length > m_max + 1:
        raise SharingError(f"lookup length {length} exceeds m_max + 1 = {m_max + 1}")
    return Dealer(params, beta, rng).generate(kind, count, length)


# Batch wire encoding: kind byte, 16-byte count, then per item
#   triple: a, b, c | lookup: r, e_r[0..L) | cmp: R, bit_0..bit_K

def encode_material(kind: MaterialKind, items: list) -> bytes:
    if kind == MaterialKind.TRIPLE:
        flat = [v for t in items for v in (t.a, t.b, t.c)]
    elif kind == MaterialKind.LOOKUP:
        flat = [v for m in items for v in (m.r, *m.onehot)]
    elif kind == MaterialKind.CMP:
        flat = [v for m in items for v in (m.R, *m.bits)]
    else:
        raise SharingError(f"no encoding for material kind {kind!r}")
    return bytes([kind]) + len(items).to_bytes(ELEM_BYTES, "little") + encode_elems(flat)


def decode_material(data: bytes) -> tuple[MaterialKind, list]:
    if len(data) < 1 + ELEM_BYTES:
        raise SharingError("truncated material batch")
    try:
        kind = MaterialKind(data[0])
    except ValueError:
        raise SharingError(f"unknown material kind {data[0]}") from None
    count = int.from_bytes(data[1:1 + ELEM_BYTES], "little")
    try:
        flat = decode_elems(data[1 + ELEM_BYTES:])
    except FieldError as exc:
        raise SharingError(str(exc)) from None
    if count == 0:
        if flat:
            raise SharingError("trailing data in empty material batch")
        return kind, []
    if len(flat) % count:
        raise SharingError("material batch size is not a multiple of its count")
    width = len(flat) // count
    items = [flat[t * width:(t + 1) * width] for t in range(count)]
    if kind == MaterialKind.TRIPLE:
        if width != 3:
            raise SharingError("triples carry three elements")
        return kind, [BeaverTriple(*it) for it in items]
    if kind == MaterialKind.LOOKUP:
        if width < 2:
            raise SharingError("lookup material needs a non-empty vector")
        return kind, [LookupMaterial(it[0], tuple(it[1:])) for it in items]
    if kind == MaterialKind.CMP:
        return kind, [CmpMaterial(it[0], tuple(it[1:])) for it in items]
    raise SharingError(f"no decoding for material kind {kind!r}")
