"""Multi-cycle arithmetic units of the execute stage.

Every unit is clocked through ``clock(valid_in, op, a, b)``, one call per
rising edge. Outputs (``stall_out``, ``valid_out``, ``result``) describe the
cycle that follows the edge. A ``valid_in`` pulse is only accepted when the
unit is not stalling; otherwise it is dropped and the in-flight operation
continues untouched.

Timing, counted in cycles after the accepting edge:

=================  ==================  =========
unit               stall_out cycles    valid_out
=================  ==================  =========
Radix-4 Booth      17 (16 + sign fix)  cycle 18
DSP                1 (capture)         cycle 2
divider, zero op   2                   cycle 3
divider            33 or 34            34 / 35
=================  ==================  =========
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass
from typing import ClassVar

from .isa import DIV_OPS, MUL_OPS, Op


class MulImpl(enum.Enum):
    RADIX4 = "radix4"
    DSP = "dsp"


class Phase(enum.Enum):
    IDLE = "idle"
    CAPTURE = "capture"
    ITERATE = "iterate"
    SIGN = "sign"
    ZERO = "zero"
    PREP = "prep"
    CORRECT = "correct"
    DONE = "done"


def m_semantics(op: Op, a: int, b: int, width: int = 32) -> int:
    """Functional result of an M-extension op on ``width``-bit words."""
    mask = (1 << width) - 1
    top = 1 << (width - 1)
    a &= mask
    b &= mask
    sa = a - (1 << width) if a & top else a
    sb = b - (1 << width) if b & top else b

    if op is Op.MUL:
        return (a * b) & mask
    if op is Op.MULH:
        return ((sa * sb) >> width) & mask
    if op is Op.MULHSU:
        return ((sa * b) >> width) & mask
    if op is Op.MULHU:
        return ((a * b) >> width) & mask
    if op is Op.DIVU:
        return mask if b == 0 else a // b
    if op is Op.REMU:
        return a if b == 0 else a % b
    if op in (Op.DIV, Op.REM):
        if b == 0:
            return mask if op is Op.DIV else a
        if sa == -top and sb == -1:
            return a if op is Op.DIV else 0
        q = abs(sa) // abs(sb)
        if (sa < 0) != (sb < 0):
            q = -q
        if op is Op.DIV:
            return q & mask
        return (sa - q * sb) & mask
    raise ValueError(f"{op.name} is not an M-extension operation")


@dataclass
class _Unit:
    width: int = 32
    phase: Phase = Phase.IDLE
    op: Op | None = None
    cycle: int = 0  # cycles elapsed since the accepting edge
    accepted: int = 0
    dropped: int = 0

    @property
    def stall_out(self) -> bool:
        return self.phase not in (Phase.IDLE, Phase.DONE)

    @property
    def valid_out(self) -> bool:
        return self.phase is Phase.DONE

    @property
    def busy(self) -> bool:
        return self.stall_out

    def clock(self, valid_in: bool = False, op: Op | None = None, a: int = 0, b: int = 0) -> None:
        if self.stall_out:
            if valid_in:
                self.dropped += 1
            self.cycle += 1
            self._step()
            return
        if valid_in:
            if op not in self.ops:
                raise ValueError(f"{type(self).__name__} cannot execute {op}")
            mask = (1 << self.width) - 1
            self.accepted += 1
            self.op = op
            self.cycle = 1
            self._accept(op, a & mask, b & mask)
        else:
            self.phase = Phase.IDLE
            self.cycle = 0

    def start(self, op: Op, a: int, b: int) -> bool:
        """Pulse ``valid_in`` for one edge; False if the unit refused it."""
        before = self.accepted
        self.clock(True, op, a, b)
        return self.accepted != before

    def tick(self) -> None:
        self.clock()

    def run(self, op: Op, a: int, b: int, limit: int = 1000) -> tuple[int, int]:
        """Start an operation and clock until valid_out: (result, stall cycles)."""
        if not self.start(op, a, b):
            raise RuntimeError("unit busy")
        stalls = 0
        while not self.valid_out:
            if not self.stall_out:
                raise AssertionError("unit neither stalling nor valid")
            stalls += 1
            if stalls > limit:
                raise RuntimeError("unit never completed")
            self.tick()
        return self.result, stalls

    def copy(self):
        return copy.copy(self)

    ops: ClassVar[frozenset] = frozenset()

    def _accept(self, op: Op, a: int, b: int) -> None:
        raise NotImplementedError

    def _step(self) -> None:
        raise NotImplementedError

    @property
    def result(self) -> int:
        raise NotImplementedError


@dataclass
class BoothMultiplier(_Unit):
    """Iterative radix-4 Booth multiplier.

    ``pp`` is the (2*width + 2)-bit partial-product register: the upper
    width+2 bits accumulate, the lower width bits start as the multiplier and
    are shifted out two per step. ``booth_prev`` is the implicit bit to the
    right of the multiplier LSB.
    """

    ops: ClassVar[frozenset] = MUL_OPS
    multiplicand: int = 0  # signed integer, width+1 bits wide
    pp: int = 0
    booth_prev: int = 0
    iter: int = 0
    multiplier_msb: int = 0

    @property
    def pp_bits(self) -> int:
        return 2 * self.width + 2

    def _accept(self, op, a, b):
        top = 1 << (self.width - 1)
        signed_a = op is not Op.MULHU
        self.multiplicand = a - (1 << self.width) if signed_a and a & top else a
        self.pp = b
        self.booth_prev = 0
        self.iter = 0
        self.multiplier_msb = 1 if b & top else 0
        self.phase = Phase.ITERATE

    def _step(self):
        n = self.width
        pp_mask = (1 << self.pp_bits) - 1
        if self.phase is Phase.ITERATE:
            window = ((self.pp & 3) << 1) | self.booth_prev
            digit = (0, 1, 1, 2, -2, -1, -1, 0)[window]
            self.pp = (self.pp + ((digit * self.multiplicand) << n)) & pp_mask
            self.booth_prev = (self.pp >> 1) & 1
            signed_pp = self.pp - (1 << self.pp_bits) if self.pp >> (self.pp_bits - 1) else self.pp
            self.pp = (signed_pp >> 2) & pp_mask
            self.iter += 1
            if self.iter == n // 2:
                self.phase = Phase.SIGN
        elif self.phase is Phase.SIGN:
            # Booth treated the multiplier as signed; an unsigned multiplier
            # with its MSB set needs one more +1x digit at weight 2**n.
            if self.op in (Op.MULHU, Op.MULHSU) and self.multiplier_msb:
                self.pp = (self.pp + (self.multiplicand << n)) & pp_mask
            self.phase = Phase.DONE

    @property
    def product(self) -> int:
        return self.pp & ((1 << (2 * self.width)) - 1)

    @property
    def result(self) -> int:
        mask = (1 << self.width) - 1
        if self.op is Op.MUL:
            return self.product & mask
        return (self.product >> self.width) & mask


@dataclass
class DspMultiplier(_Unit):
    """Two-cycle multiplier: operand registers, then one full-width product."""

    ops: ClassVar[frozenset] = MUL_OPS
    multiplicand: int = 0
    multiplier: int = 0
    pp: int = 0

    def _accept(self, op, a, b):
        n = self.width
        top = 1 << (n - 1)
        sa = a - (1 << n) if (op in (Op.MULH, Op.MULHSU) and a & top) else a
        sb = b - (1 << n) if (op is Op.MULH and b & top) else b
        self.multiplicand = sa
        self.multiplier = sb
        self.phase = Phase.CAPTURE

    def _step(self):
        self.pp = (self.multiplicand * self.multiplier) & ((1 << (2 * self.width)) - 1)
        self.phase = Phase.DONE

    @property
    def result(self) -> int:
        mask = (1 << self.width) - 1
        if self.op is Op.MUL:
            return self.pp & mask
        return (self.pp >> self.width) & mask


@dataclass
class NonRestoringDivider(_Unit):
    """Radix-2 non-restoring divider working on operand magnitudes.

    ``partial_remainder`` is a (width+1)-bit two's-complement register and
    wraps modulo 2**(width+1); the non-restoring recurrence keeps its true
    value inside [-divisor, divisor), so the wrap is harmless.
    """

    ops: ClassVar[frozenset] = DIV_OPS
    dividend: int = 0
    divisor: int = 0
    partial_remainder: int = 0
    quotient: int = 0
    iter: int = 0
    sign_dividend: bool = False
    sign_divisor: bool = False
    zero_wait: int = 0
    out_quotient: int = 0
    out_remainder: int = 0

    @property
    def is_signed(self) -> bool:
        return self.op in (Op.DIV, Op.REM)

    @property
    def needs_correction(self) -> bool:
        """A signed op with a negative operand negates Q and/or R: one extra cycle."""
        return self.is_signed and (self.sign_dividend or self.sign_divisor)

    def _accept(self, op, a, b):
        top = 1 << (self.width - 1)
        self.dividend = a
        self.divisor = b
        signed = op in (Op.DIV, Op.REM)
        self.sign_dividend = signed and bool(a & top)
        self.sign_divisor = signed and bool(b & top)
        self.partial_remainder = 0
        self.quotient = 0
        self.iter = 0
        if a == 0 or b == 0:
            mask = (1 << self.width) - 1
            self.out_quotient = mask if b == 0 else 0
            self.out_remainder = a
            self.zero_wait = 2
            self.phase = Phase.ZERO
        else:
            self.phase = Phase.PREP

    def _step(self):
        n = self.width
        mask = (1 << n) - 1
        pr_bits = n + 1
        pr_mask = (1 << pr_bits) - 1
        if self.phase is Phase.ZERO:
            self.zero_wait -= 1
            if self.zero_wait == 0:
                self.phase = Phase.DONE
        elif self.phase is Phase.PREP:
            if self.sign_dividend:
                self.dividend = (-self.dividend) & mask
            if self.sign_divisor:
                self.divisor = (-self.divisor) & mask
            # dividend bits are shifted into the remainder from the quotient register
            self.quotient = self.dividend
            self.partial_remainder = 0
            self.phase = Phase.ITERATE
        elif self.phase is Phase.ITERATE:
            negative = (self.partial_remainder >> n) & 1
            shifted = ((self.partial_remainder << 1) | (self.quotient >> (n - 1))) & pr_mask
            if negative:
                pr = (shifted + self.divisor) & pr_mask
            else:
                pr = (shifted - self.divisor) & pr_mask
            qbit = 0 if (pr >> n) & 1 else 1
            self.partial_remainder = pr
            self.quotient = ((self.quotient << 1) | qbit) & mask
            self.iter += 1
            if self.iter == n:
                if (self.partial_remainder >> n) & 1:
                    self.partial_remainder = (self.partial_remainder + self.divisor) & pr_mask
                self.out_quotient = self.quotient
                self.out_remainder = self.partial_remainder & mask
                self.phase = Phase.CORRECT if self.needs_correction else Phase.DONE
        elif self.phase is Phase.CORRECT:
            if self.sign_dividend != self.sign_divisor:
                self.out_quotient = (-self.out_quotient) & mask
            if self.sign_dividend:
                self.out_remainder = (-self.out_remainder) & mask
            self.phase = Phase.DONE

    @property
    def expected_stall(self) -> int:
        """Stall length fixed at acceptance: 2, 33 or 34 cycles."""
        if self.dividend == 0 or self.divisor == 0:
            return 2
        return 34 if self.needs_correction else 33

    @property
    def result(self) -> int:
        if self.op in (Op.DIV, Op.DIVU):
            return self.out_quotient
        return self.out_remainder


def make_multiplier(impl: MulImpl, width: int = 32) -> BoothMultiplier | DspMultiplier:
    if impl is MulImpl.RADIX4:
        return BoothMultiplier(width=width)
    return DspMultiplier(width=width)
