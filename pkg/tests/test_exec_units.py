import ctypes
import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rvcorep.exec_units import (
    BoothMultiplier, DspMultiplier, MulImpl, NonRestoringDivider, Phase, m_semantics,
    make_multiplier,
)
from rvcorep.isa import DIV_OPS, MUL_OPS, Op

EDGES = [0, 1, 0xFFFFFFFF, 0x80000000, 0x7FFFFFFF]
MUL_LIST = sorted(MUL_OPS, key=lambda o: o.name)
DIV_LIST = sorted(DIV_OPS, key=lambda o: o.name)


def _signed(x, width):
    if width == 32:
        return ctypes.c_int32(x).value
    return x - (1 << width) if x >> (width - 1) else x


def oracle(op, a, b, width=32):
    """Wide-integer reference, written without reusing the package's helper."""
    mask = (1 << width) - 1
    sa, sb = _signed(a, width), _signed(b, width)
    if op is Op.MUL:
        return (a * b) & mask
    if op is Op.MULH:
        return ((sa * sb) >> width) & mask
    if op is Op.MULHSU:
        return ((sa * b) >> width) & mask
    if op is Op.MULHU:
        return ((a * b) >> width) & mask
    if b == 0:
        return {Op.DIV: mask, Op.DIVU: mask, Op.REM: a, Op.REMU: a}[op]
    if op is Op.DIVU:
        return a // b
    if op is Op.REMU:
        return a - b * (a // b)
    q = int(Fraction(sa, sb))  # truncates toward zero
    if op is Op.DIV:
        return q & mask
    return (sa - q * sb) & mask


def _pairs(n, seed):
    rng = random.Random(seed)
    rand = [(rng.getrandbits(32), rng.getrandbits(32)) for _ in range(n)]
    return rand + list(itertools.product(EDGES, EDGES))


def test_oracle_known_values():
    assert oracle(Op.MULHSU, 0xFFFFFFFF, 0xFFFFFFFF) == 0xFFFFFFFF
    assert oracle(Op.MULHU, 0xFFFFFFFF, 0xFFFFFFFF) == 0xFFFFFFFE
    assert oracle(Op.MULH, 0x80000000, 0x80000000) == 0x40000000
    assert oracle(Op.DIV, 0x80000000, 0xFFFFFFFF) == 0x80000000
    assert oracle(Op.REM, 0x80000000, 0xFFFFFFFF) == 0
    assert oracle(Op.DIV, (-7) & 0xFFFFFFFF, 2) == (-3) & 0xFFFFFFFF
    assert oracle(Op.REM, (-7) & 0xFFFFFFFF, 2) == (-1) & 0xFFFFFFFF


@pytest.mark.parametrize("op", MUL_LIST + DIV_LIST, ids=lambda o: o.name)
def test_functional_semantics_match_oracle(op):
    for a, b in _pairs(3000, 1):
        assert m_semantics(op, a, b) == oracle(op, a, b)


@pytest.mark.parametrize("impl", list(MulImpl), ids=lambda i: i.value)
@pytest.mark.parametrize("op", MUL_LIST, ids=lambda o: o.name)
def test_multiplier_matches_oracle_random_and_edges(impl, op):
    unit = make_multiplier(impl)
    for a, b in _pairs(10_000, f"{impl.value}-{op.name}"):
        result, _ = unit.run(op, a, b)
        assert result == oracle(op, a, b), (hex(a), hex(b))


@pytest.mark.parametrize("cls", [BoothMultiplier, DspMultiplier], ids=lambda c: c.__name__)
def test_multiplier_exhaustive_8bit(cls):
    unit = cls(width=8)
    bad = 0
    for op in MUL_LIST:
        for a in range(256):
            for b in range(256):
                result, _ = unit.run(op, a, b)
                bad += result != oracle(op, a, b, width=8)
    assert bad == 0


@pytest.mark.parametrize("op", MUL_LIST, ids=lambda o: o.name)
def test_multiplier_stall_lengths(op):
    booth, dsp = BoothMultiplier(), DspMultiplier()
    for a, b in _pairs(500, 3):
        assert booth.run(op, a, b)[1] == 17
        assert dsp.run(op, a, b)[1] == 1


def test_booth_stall_scales_with_width():
    assert BoothMultiplier(width=8).run(Op.MUL, 3, 5) == (15, 5)
    assert BoothMultiplier(width=16).run(Op.MUL, 300, 5) == (1500, 9)


@pytest.mark.parametrize("op", DIV_LIST, ids=lambda o: o.name)
def test_divider_matches_oracle(op):
    unit = NonRestoringDivider()
    pairs = _pairs(10_000, 11) + [(x, 0) for x in EDGES] + [(0, x) for x in EDGES]
    pairs.append((0x80000000, 0xFFFFFFFF))
    for a, b in pairs:
        result, _ = unit.run(op, a, b)
        assert result == oracle(op, a, b), (hex(a), hex(b))


def test_divider_exhaustive_8bit():
    unit = NonRestoringDivider(width=8)
    bad = 0
    for op in DIV_LIST:
        for a in range(256):
            for b in range(256):
                bad += unit.run(op, a, b)[0] != oracle(op, a, b, width=8)
    assert bad == 0


def _expected_div_stall(op, a, b, width=32):
    if a == 0 or b == 0:
        return 2
    top = 1 << (width - 1)
    negative = bool(a & top) or bool(b & top)
    return width + 2 if op in (Op.DIV, Op.REM) and negative else width + 1


@pytest.mark.parametrize("op", DIV_LIST, ids=lambda o: o.name)
def test_divider_stall_lengths(op):
    unit = NonRestoringDivider()
    seen = set()
    for a, b in _pairs(2000, 5) + [(0, 7), (7, 0), (0, 0)]:
        stalls = unit.run(op, a, b)[1]
        assert stalls == _expected_div_stall(op, a, b)
        assert stalls in (2, 33, 34)
        seen.add(stalls)
    assert seen == ({2, 33, 34} if op in (Op.DIV, Op.REM) else {2, 33})


def test_divider_zero_operands_take_two_cycles():
    unit = NonRestoringDivider()
    assert unit.run(Op.DIV, 0, 5) == (0, 2)
    assert unit.run(Op.DIVU, 12345, 0) == (0xFFFFFFFF, 2)
    assert unit.run(Op.REM, 0xFFFFFFF9, 0) == (0xFFFFFFF9, 2)


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2**32 - 1))
def test_divider_euclidean_postcondition(a, b):
    unit = NonRestoringDivider()
    q, _ = unit.run(Op.DIVU, a, b)
    r, _ = unit.run(Op.REMU, a, b)
    assert q * b + r == a and 0 <= r < b
    sa, sb = _signed(a, 32), _signed(b, 32)
    q, _ = unit.run(Op.DIV, a, b)
    r, _ = unit.run(Op.REM, a, b)
    sq, sr = _signed(q, 32), _signed(r, 32)
    if not (sa == -2**31 and sb == -1):
        assert sq * sb + sr == sa
    assert abs(sr) < abs(sb)
    assert sr == 0 or (sr < 0) == (sa < 0)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(MUL_LIST), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_booth_property(op, a, b):
    assert BoothMultiplier().run(op, a, b)[0] == oracle(op, a, b)


@pytest.mark.parametrize("unit_cls,op", [(BoothMultiplier, Op.MULH), (DspMultiplier, Op.MULHU),
                                         (NonRestoringDivider, Op.REM)])
def test_valid_in_while_stalling_is_dropped(unit_cls, op):
    a, b = 0x87654321, 0x00012345
    clean, _ = unit_cls().run(op, a, b)
    unit = unit_cls()
    assert unit.start(op, a, b)
    pulses = 0
    while unit.stall_out:
        unit.clock(True, op, 0xDEAD, 0xBEEF)
        pulses += 1
    assert unit.valid_out and unit.result == clean
    assert unit.dropped == pulses and unit.accepted == 1


def test_handshake_outputs_by_phase():
    unit = BoothMultiplier()
    assert unit.phase is Phase.IDLE and not unit.stall_out and not unit.valid_out
    unit.start(Op.MUL, 6, 7)
    history = []
    while not unit.valid_out:
        history.append((unit.phase, unit.stall_out))
        unit.tick()
    assert all(stall for _, stall in history)
    assert [p for p, _ in history].count(Phase.SIGN) == 1
    assert unit.result == 42
    unit.tick()
    assert unit.phase is Phase.IDLE and not unit.valid_out


def test_back_to_back_accept_from_done():
    unit = DspMultiplier()
    unit.run(Op.MUL, 3, 4)
    assert unit.valid_out
    assert unit.start(Op.MUL, 5, 6)
    unit.tick()
    assert unit.result == 30


def test_units_reject_foreign_ops():
    with pytest.raises(ValueError):
        DspMultiplier().start(Op.DIV, 1, 1)
    with pytest.raises(ValueError):
        NonRestoringDivider().start(Op.MUL, 1, 1)


def test_partial_remainder_stays_in_register_width():
    unit = NonRestoringDivider()
    unit.start(Op.DIVU, 0xFFFFFFFF, 0x80000001)
    while unit.stall_out:
        assert 0 <= unit.partial_remainder < 1 << 33
        unit.tick()
    assert unit.result == 1


def test_copy_is_independent_snapshot():
    unit = BoothMultiplier()
    unit.start(Op.MUL, 9, 9)
    snap = unit.copy()
    unit.tick()
    assert snap.iter == 0 and unit.iter == 1
