import math

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from privmps.field import (DEFAULT_PARAMS, MERSENNE_127, FieldElem, FieldError, FieldParams, FieldRNG,
                           decode_elems, encode_elems, fe_arith, fp_decode, fp_encode, signed_lift)

P = MERSENNE_127
elems = st.integers(min_value=0, max_value=P - 1)


def fe(x):
    return FieldElem.of(x)


def test_arith_examples():
    assert fe_arith(fe(P - 1), fe(1), "add").value == 0
    assert fe_arith(fe(12345), fe(1), "mul").value == 12345
    assert fe_arith(fe(3), fe(4), "mul").value == 12
    assert fe_arith(fe(3), fe(4), "sub").value == P - 1
    assert fe_arith(fe(5), fe(0), "neg").value == P - 5
    with pytest.raises(ValueError):
        fe_arith(fe(1), fe(2), "div")


def test_mismatched_moduli_rejected():
    with pytest.raises(FieldError):
        fe_arith(FieldElem(1, 7), FieldElem(1, 11), "add")


def test_non_canonical_value_rejected():
    with pytest.raises(FieldError):
        FieldElem(P, P)


@given(elems, elems)
def test_ring_laws(a, b):
    x, y = fe(a), fe(b)
    assert (x + y).value == (a + b) % P
    assert (x * y).value == (a * b) % P
    assert (x - y + y) == x
    assert (-x + x).value == 0


@pytest.mark.parametrize("x,expected", [(0, 0), (P - 5, -5), (7, 7), ((P - 1) // 2, (P - 1) // 2),
                                        ((P + 1) // 2, -((P - 1) // 2))])
def test_signed_lift(x, expected):
    assert signed_lift(x) == expected


def test_fp_encode_examples():
    assert fp_encode(0.0) == 0
    assert fp_encode(1.0) == 65536
    assert fp_encode(math.log(2)) == 45426
    assert fp_encode(-1.5) == -98304
    assert fp_decode(65536) == 1.0


def test_fp_encode_rounds_half_to_even():
    assert fp_encode(0.5 / 65536) == 0
    assert fp_encode(1.5 / 65536) == 2


def test_fp_encode_overflow():
    with pytest.raises(OverflowError):
        fp_encode(2.0 ** 30, f=16, K=40)
    assert fp_encode(2.0 ** 30, f=16, K=None) == 1 << 46


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_fp_roundtrip_error(r):
    assert abs(fp_decode(fp_encode(r)) - r) <= 2.0 ** -17 + 1e-12


def test_log_constant_against_high_precision():
    with mpmath.workdps(40):
        assert fp_encode(math.log(2)) == int(mpmath.nint(mpmath.log(2) * 65536))


def test_params_validation():
    assert DEFAULT_PARAMS.scale == 65536
    with pytest.raises(FieldError):
        FieldParams(p=2 ** 127 - 3)
    with pytest.raises(FieldError):
        FieldParams(K=100)
    with pytest.raises(FieldError):
        FieldParams(f=0)


@given(st.lists(elems, max_size=20))
def test_elem_codec_roundtrip(values):
    assert decode_elems(encode_elems(values)) == values


def test_elem_codec_rejects_partial():
    with pytest.raises(FieldError):
        decode_elems(b"\x00" * 17)


def test_rng_replay_and_range():
    a, b = FieldRNG(5), FieldRNG(5)
    assert a.elements(50) == b.elements(50)
    assert FieldRNG(5).elements(3) != FieldRNG(6).elements(3)
    assert all(0 <= v < P for v in FieldRNG(1).elements(1000))
    assert all(0 <= v < 33 for v in FieldRNG(1).below(33, 1000))
    assert FieldRNG(1).derive("x").elements(2) != FieldRNG(1).derive("y").elements(2)
