"""Prime-field arithmetic and fixed-point encoding of real-valued scores.

Secret values live in GF(p) with p = 2^127 - 1 by default. Real-valued
quantities (logarithms, entropies, MDL scores) are carried as fixed-point
mantissas at scale 2^f; negative numbers use the centered representative.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

from sympy import isprime

MERSENNE_127 = (1 << 127) - 1
ELEM_BYTES = 16


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class FieldParams:
    """Public arithmetic parameters shared by every party of a session.

    K bounds the magnitude of any signed value entering a comparison and
    sigma is the statistical masking slack used when opening masked values.
    """

    p: int = MERSENNE_127
    f: int = 16
    K: int = 40
    sigma: int = 40

    def __post_init__(self):
        if self.p.bit_length() > 8 * ELEM_BYTES:
            raise FieldError("modulus does not fit the 16-byte wire encoding")
        if not isprime(self.p):
            raise FieldError(f"modulus {self.p} is not prime")
        if self.f < 1:
            raise FieldError("need at least one fraction bit")
        if self.K < 2 or self.sigma < 1:
            raise FieldError("K and sigma must be positive")
        # c = d' + R must not wrap: d' < 2^(K+1), R < 2^(K+1+sigma)
        if self.K + self.sigma + 2 >= self.p.bit_length() - 1:
            raise FieldError("modulus too small for masked comparison")

    @property
    def scale(self) -> int:
        return 1 << self.f

    def to_dict(self) -> dict:
        return {"p": self.p, "f": self.f, "K": self.K, "sigma": self.sigma}


DEFAULT_PARAMS = FieldParams()


@dataclass(frozen=True)
class FieldElem:
    value: int
    p: int = MERSENNE_127

    def __post_init__(self):
        if not 0 <= self.value < self.p:
            raise FieldError(f"{self.value} is not canonical mod p")

    @classmethod
    def of(cls, x: int, p: int = MERSENNE_127) -> FieldElem:
        return cls(x % p, p)

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElem):
            if other.p != self.p:
                raise FieldError("operands from different fields")
            return other.value
        if isinstance(other, int):
            return other
        return NotImplemented

    def __add__(self, other):
        return FieldElem((self.value + self._coerce(other)) % self.p, self.p)

    __radd__ = __add__

    def __sub__(self, other):
        return FieldElem((self.value - self._coerce(other)) % self.p, self.p)

    def __rsub__(self, other):
        return FieldElem((self._coerce(other) - self.value) % self.p, self.p)

    def __mul__(self, other):
        return FieldElem((self.value * self._coerce(other)) % self.p, self.p)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElem((-self.value) % self.p, self.p)

    def __int__(self):
        return self.value

    def signed(self) -> int:
        return signed_lift(self.value, self.p)

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(ELEM_BYTES, "little")

    @classmethod
    def from_bytes(cls, data: bytes, p: int = MERSENNE_127) -> FieldElem:
        if len(data) != ELEM_BYTES:
            raise FieldError("field elements are 16 bytes")
        return cls(int.from_bytes(data, "little"), p)


def fe_arith(a: FieldElem, b: FieldElem, op: str) -> FieldElem:
    """Apply ``op`` in {'add', 'sub', 'mul', 'neg'}; 'neg' ignores ``b``."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "neg":
        return -a
    raise ValueError(f"unknown field op {op!r}")


def signed_lift(x: int, p: int = MERSENNE_127) -> int:
    """Centered representative of ``x`` mod p."""
    x %= p
    return x if x <= p // 2 else x - p


def fp_encode(r: float, f: int = 16, K: int | None = 40) -> int:
    """Mantissa of ``r`` at scale 2^f, rounding half to even.

    Raises OverflowError when the mantissa magnitude reaches 2^K.
    """
    # scaling by a power of two is exact in binary floating point, and
    # round() on a float is round-half-even
    mantissa = round(r * (1 << f))
    if K is not None and abs(mantissa) >= 1 << K:
        raise OverflowError(f"{r} does not fit in {K} signed bits at f={f}")
    return mantissa


def fp_decode(mantissa: int, f: int = 16) -> float:
    return mantissa / (1 << f)


def encode_elems(values, width: int = ELEM_BYTES) -> bytes:
    return b"".join(v.to_bytes(width, "little") for v in values)


def decode_elems(data: bytes, width: int = ELEM_BYTES) -> list[int]:
    if len(data) % width:
        raise FieldError("payload is not a whole number of elements")
    frm = int.from_bytes
    return [frm(data[i:i + width], "little") for i in range(0, len(data), width)]


class FieldRNG:
    """Deterministic SHAKE-256 stream for shares and dealer material.

    With ``seed=None`` the stream is keyed from os.urandom; a fixed seed gives
    replayable sessions.
    """

    def __init__(self, seed: int | bytes | str | None = None, p: int = MERSENNE_127):
        if seed is None:
            key = os.urandom(32)
        elif isinstance(seed, bytes):
            key = seed
        else:
            key = str(seed).encode()
        self._key = hashlib.sha256(b"privmps-rng|" + key).digest()
        self._counter = 0
        self.p = p

    def derive(self, label: str) -> FieldRNG:
        return FieldRNG(self._key + label.encode(), self.p)

    def _stream(self, nbytes: int) -> bytes:
        block = hashlib.shake_256(self._key + self._counter.to_bytes(8, "little"))
        self._counter += 1
        return block.digest(nbytes)

    def _ints(self, count: int, nbits: int) -> list[int]:
        width = (nbits + 7) // 8 + 1
        mask = (1 << nbits) - 1
        buf = self._stream(count * width)
        frm = int.from_bytes
        return [frm(buf[i:i + width], "little") & mask for i in range(0, count * width, width)]

    def elements(self, count: int) -> list[int]:
        """``count`` uniform elements of [0, p)."""
        nbits = self.p.bit_length()
        out = [v for v in self._ints(count, nbits) if v < self.p]
        while len(out) < count:
            out.extend(v for v in self._ints(count - len(out), nbits) if v < self.p)
        return out

    def element(self) -> int:
        return self.elements(1)[0]

    def bits(self, count: int, nbits: int) -> list[int]:
        """``count`` uniform integers of [0, 2^nbits)."""
        return self._ints(count, nbits)

    def below(self, bound: int, count: int) -> list[int]:
        """``count`` uniform integers of [0, bound) by rejection."""
        if bound < 1:
            raise ValueError("bound must be positive")
        nbits = max(1, (bound - 1).bit_length())
        out: list[int] = []
        while len(out) < count:
            out.extend(v for v in self._ints(2 * (count - len(out)), nbits) if v < bound)
        return out[:count]
