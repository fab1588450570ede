"""Cycle-accurate five-stage in-order core with a fork-join execute stage.

Stages are evaluated oldest first (W, M, E, D, F) inside one ``tick``; every
stage reads the latch in front of it and produces the latch behind it, so a
latch written this cycle is what the next stage sees next cycle::

    F --fd--> D --de--> E --em--> M --mw--> W

Forwarding is resolved while an instruction sits in D, against the
instructions that will occupy M and W when it reaches E:

* M -> E only from single-cycle ALU producers (multiplier/divider outputs and
  load data are not on this path),
* W -> E from ALU, MUL and DIV producers but never from loads,
* otherwise the register file, which W updates at the start of the cycle.

Hence a dependent instruction right behind a load waits two cycles, and one
right behind a MUL/DIV waits one cycle after the unit's own stall.

Every bubble carries the reason it was created; when it reaches W it is
charged to that reason, which is what makes the accounting identity
``cycles == retired + fill + sum(stalls)`` hold by construction.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from .exec_units import MulImpl, NonRestoringDivider, make_multiplier
from .isa import (
    BRANCH_OPS, DIV_OPS, JUMP_OPS, LOAD_OPS, LOAD_WIDTH, M_OPS, MUL_OPS, STORE_OPS, STORE_WIDTH,
    Category, DecodedInstr, IllegalInstruction, Op, RegFile, agu, decode, load_extend, next_pc,
    single_cycle_result, u32,
)
from .soc import BusError, SoC
from .status import Halt, HaltReason

FILL = "fill"
LOAD_USE = "load_use"
MUL_STALL = "mul"
DIV_STALL = "div"
DEP_EXTRA = "dep_extra"
MISPREDICT = "mispredict"
STALL_CAUSES = (LOAD_USE, MUL_STALL, DIV_STALL, DEP_EXTRA, MISPREDICT)

PIPELINE_FILL = 4


# -- branch prediction --------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    taken: bool
    target: int | None
    index: int
    next_pc: int


class Gshare:
    """gshare direction predictor plus a direct-mapped BTB.

    Counters start weakly not-taken (1), the BTB empty, the history zero.
    Only conditional branches train the counters and shift the history;
    jumps live in the BTB alone and are predicted taken on a tag hit.
    """

    def __init__(self, pht_entries: int = 8192, btb_entries: int = 512):
        if pht_entries & (pht_entries - 1) or btb_entries & (btb_entries - 1):
            raise ValueError("table sizes must be powers of two")
        self.pht_entries = pht_entries
        self.btb_entries = btb_entries
        self.history_bits = pht_entries.bit_length() - 1
        self.btb_index_bits = btb_entries.bit_length() - 1
        self.pht = bytearray([1]) * pht_entries
        self.ghr = 0
        self.btb_valid = [False] * btb_entries
        self.btb_tag = [0] * btb_entries
        self.btb_target = [0] * btb_entries
        self.btb_jump = [False] * btb_entries

    def pht_index(self, pc: int) -> int:
        return ((pc >> 2) ^ self.ghr) & (self.pht_entries - 1)

    def _btb_slot(self, pc: int) -> tuple[int, int]:
        return (pc >> 2) & (self.btb_entries - 1), pc >> (2 + self.btb_index_bits)

    def btb_lookup(self, pc: int) -> tuple[int, bool] | None:
        slot, tag = self._btb_slot(pc)
        if self.btb_valid[slot] and self.btb_tag[slot] == tag:
            return self.btb_target[slot], self.btb_jump[slot]
        return None

    def lookup(self, pc: int) -> Prediction:
        index = self.pht_index(pc)
        hit = self.btb_lookup(pc)
        fallthrough = u32(pc + 4)
        if hit is None:
            return Prediction(self.pht[index] >= 2, None, index, fallthrough)
        target, is_jump = hit
        taken = is_jump or self.pht[index] >= 2
        return Prediction(taken, target, index, target if taken else fallthrough)

    def update(self, pc: int, taken: bool, target: int, *, conditional: bool = True,
               index: int | None = None) -> None:
        if conditional:
            if index is None:
                index = self.pht_index(pc)
            counter = self.pht[index]
            self.pht[index] = min(counter + 1, 3) if taken else max(counter - 1, 0)
            self.ghr = ((self.ghr << 1) | int(taken)) & (self.pht_entries - 1)
        if taken:
            slot, tag = self._btb_slot(pc)
            self.btb_valid[slot] = True
            self.btb_tag[slot] = tag
            self.btb_target[slot] = target
            self.btb_jump[slot] = not conditional


# -- latches ---------------------------------------------------------------------

class Latch:
    """A pipeline register. ``valid`` False means bubble, tagged with ``cause``."""

    __slots__ = (
        "valid", "cause", "pc", "raw", "instr", "a", "b", "result", "addr",
        "pred_next", "pht_index", "fault", "mispredicted", "started", "exits",
    )

    def __init__(self, valid=False, cause=FILL, pc=0, raw=0, instr=None, pred_next=0,
                 pht_index=0, fault=None):
        self.valid = valid
        self.cause = cause
        self.pc = pc
        self.raw = raw
        self.instr: DecodedInstr | None = instr
        self.a = 0
        self.b = 0
        self.result = 0
        self.addr = 0
        self.pred_next = pred_next
        self.pht_index = pht_index
        self.fault: Halt | None = fault
        self.mispredicted = False
        self.started = False
        self.exits = False

    @classmethod
    def bubble(cls, cause: str) -> "Latch":
        return cls(valid=False, cause=cause)

    def key(self) -> tuple:
        """Everything a stage register holds, for hold/equality checks."""
        return tuple(getattr(self, s) for s in self.__slots__)

    def label(self) -> str:
        if not self.valid:
            return "--"
        if self.instr is None:
            return f"{self.pc:08x} !!"
        return f"{self.pc:08x} {self.instr.op.mnemonic}"


@dataclass
class Signals:
    """Handshake wires as seen during the last simulated cycle."""

    id_valid: bool = False
    ex_valid: bool = False
    mul_op: bool = False
    div_op: bool = False
    mul_stall: bool = False
    div_stall: bool = False
    d_stall: bool = False
    flush: bool = False


@dataclass
class PipelineConfig:
    m_extension: bool = True
    mul_impl: MulImpl = MulImpl.DSP
    pht_entries: int = 8192
    btb_entries: int = 512


@dataclass
class Counters:
    retired: int = 0
    fill: int = 0
    stalls: Counter = field(default_factory=Counter)
    histogram: Counter = field(default_factory=Counter)
    branches: int = 0
    mispredicted: int = 0


class Pipeline:
    def __init__(self, soc: SoC, config: PipelineConfig | None = None):
        self.soc = soc
        self.config = config or PipelineConfig()
        self.regs = RegFile()
        self.predictor = Gshare(self.config.pht_entries, self.config.btb_entries)
        self.mul = make_multiplier(self.config.mul_impl)
        self.div = NonRestoringDivider()
        self.pc = soc.reset_pc
        self.cycle = 0
        self.halt: Halt | None = None
        self.fd = Latch.bubble(FILL)
        self.de = Latch.bubble(FILL)
        self.em = Latch.bubble(FILL)
        self.mw = Latch.bubble(FILL)
        self.signals = Signals()
        self.counters = Counters()
        self.stage_view: tuple[str, str, str, str, str] | None = None
        self.on_retire: Callable[[Latch], None] | None = None
        self.on_cycle: Callable[["Pipeline"], None] | None = None
        self.trace_enabled = False

    @property
    def halted(self) -> bool:
        return self.halt is not None

    # -- stages ------------------------------------------------------------------

    def _writeback(self, w: Latch) -> bool:
        """Retire the W latch; returns True when the simulation must stop."""
        c = self.counters
        if not w.valid:
            if w.cause == FILL:
                c.fill += 1
            else:
                c.stalls[w.cause] += 1
            return False
        if w.fault is not None:
            self.halt = w.fault
            return True
        instr = w.instr
        if instr.writes_rd:
            self.regs[instr.rd] = w.result
        c.retired += 1
        c.histogram[instr.category] += 1
        if instr.category is Category.BRANCH:
            c.branches += 1
            c.mispredicted += w.mispredicted
        if self.on_retire is not None:
            self.on_retire(w)
        if instr.op is Op.EBREAK:
            self.halt = Halt(HaltReason.EBREAK, pc=w.pc)
        elif instr.op is Op.ECALL:
            self.halt = Halt(HaltReason.ECALL, pc=w.pc)
        elif w.exits:
            self.halt = Halt(HaltReason.EXIT, pc=w.pc, exit_code=self.soc.exit_status)
        return self.halt is not None

    def _memory(self, m: Latch) -> Latch:
        if not m.valid or m.fault is not None:
            return m
        op = m.instr.op
        try:
            if op in LOAD_OPS:
                m.result = load_extend(op, self.soc.bus_read(m.addr, LOAD_WIDTH[op]))
            elif op in STORE_OPS:
                before = self.soc.exit_status
                self.soc.bus_write(m.addr, STORE_WIDTH[op], m.b)
                m.exits = before is None and self.soc.exit_status is not None
        except BusError as exc:
            m.fault = Halt(HaltReason.BUS_ERROR, pc=m.pc, detail=str(exc))
        return m

    def _execute(self, e: Latch) -> tuple[Latch, bool, int | None, str]:
        """Returns (latch for M, E busy, redirect pc or None, E occupant label)."""
        instr = e.instr
        sig = self.signals
        if e.valid and e.fault is None and instr.op in M_OPS:
            is_mul = instr.op in MUL_OPS
            unit, other = (self.mul, self.div) if is_mul else (self.div, self.mul)
            other.clock()
            if not e.started:
                unit.clock(True, instr.op, e.a, e.b)
                e.started = True
            else:
                unit.clock()
            label = f"{e.pc:08x} {'MUL' if is_mul else 'DIV'}[{unit.cycle}]" if self.trace_enabled else ""
            sig.mul_stall = self.mul.stall_out
            sig.div_stall = self.div.stall_out
            if unit.valid_out:
                e.result = unit.result
                sig.ex_valid = True
                return e, False, None, label
            return Latch.bubble(MUL_STALL if is_mul else DIV_STALL), True, None, label

        self.mul.clock()
        self.div.clock()
        sig.mul_stall = sig.div_stall = False
        label = e.label() if self.trace_enabled else ""
        if not e.valid or e.fault is not None:
            return e, False, None, label
        sig.ex_valid = True
        op = instr.op
        if op in LOAD_OPS or op in STORE_OPS:
            e.addr = agu(e.a, instr.imm)
            return e, False, None, label
        e.result = single_cycle_result(instr, e.pc, e.a, e.b)
        taken, target = next_pc(instr, e.pc, e.a, e.b)
        redirect = None
        if op in BRANCH_OPS or op in JUMP_OPS:
            self.predictor.update(e.pc, taken, target, conditional=op in BRANCH_OPS,
                                  index=e.pht_index)
            if target != e.pred_next:
                e.mispredicted = True
                redirect = target
            if target & 3:
                e.fault = Halt(HaltReason.MISALIGNED_TARGET, pc=e.pc, detail=f"target 0x{target:08x}")
        elif e.pred_next != target:
            # a BTB alias steered fetch past a non-branch
            e.mispredicted = True
            redirect = target
        return e, False, redirect, label

    def _decode(self, d: Latch) -> None:
        if d.valid and d.instr is None and d.fault is None:
            try:
                d.instr = decode(d.raw, m_extension=self.config.m_extension)
            except IllegalInstruction as exc:
                d.fault = Halt(HaltReason.ILLEGAL, pc=d.pc, detail=str(exc))

    def resolve_forwarding(self, d: Latch, next_m: Latch, next_w: Latch) -> tuple[int, int] | str:
        """Operand values for ``d`` or the stall cause that blocks it.

        ``next_m``/``next_w`` are the instructions that will sit in M and W
        during the cycle ``d`` would spend in E.
        """
        instr = d.instr
        values = []
        for reads, reg in ((instr.reads_rs1, instr.rs1), (instr.reads_rs2, instr.rs2)):
            if not reads or reg == 0:
                values.append(0)
                continue
            if _writes(next_m, reg):
                kind = next_m.instr.op
                if kind in LOAD_OPS:
                    return LOAD_USE
                if kind in M_OPS:
                    return DEP_EXTRA
                values.append(next_m.result)
            elif _writes(next_w, reg):
                if next_w.instr.op in LOAD_OPS:
                    return LOAD_USE
                values.append(next_w.result)
            else:
                values.append(self.regs[reg])
        return values[0], values[1]

    def _fetch(self) -> Latch:
        pc = self.pc
        pred = self.predictor.lookup(pc)
        try:
            raw = self.soc.fetch(pc)
        except BusError as exc:
            return Latch(True, pc=pc, pred_next=pred.next_pc, pht_index=pred.index,
                         fault=Halt(HaltReason.BUS_ERROR, pc=pc, detail=str(exc)))
        return Latch(True, pc=pc, raw=raw, pred_next=pred.next_pc, pht_index=pred.index)

    def _fetch_label(self) -> str:
        try:
            return f"{self.pc:08x} {decode(self.soc.fetch(self.pc)).op.mnemonic}"
        except (BusError, IllegalInstruction):
            return f"{self.pc:08x} ??"

    # -- clock ---------------------------------------------------------------------

    def tick(self) -> None:
        if self.halt is not None:
            raise RuntimeError(f"pipeline halted: {self.halt}")
        sig = self.signals = Signals()
        tracing = self.trace_enabled
        if tracing:
            self._decode(self.fd)
            f_label = self._fetch_label()
            d_label, m_label, w_label = self.fd.label(), self.em.label(), self.mw.label()
        else:
            f_label = d_label = m_label = w_label = ""

        if self._writeback(self.mw):
            if self.halt.is_fault:
                return
            self._end_cycle((f_label, d_label, self.de.label() if tracing else "", m_label, w_label))
            return

        next_w = self._memory(self.em)
        next_m, e_busy, redirect, e_label = self._execute(self.de)

        d = self.fd
        self._decode(d)
        sig.id_valid = d.valid and d.fault is None
        if e_busy:
            sig.d_stall = True
            next_e, next_d = self.de, d
        elif redirect is not None:
            sig.flush = True
            next_e = Latch.bubble(MISPREDICT)
            next_d = Latch.bubble(MISPREDICT)
            self.pc = redirect
        else:
            if not d.valid or d.fault is not None:
                next_e = d
                stall = None
            else:
                operands = self.resolve_forwarding(d, next_m, next_w)
                if isinstance(operands, str):
                    stall = operands
                else:
                    stall = None
                    d.a, d.b = operands
                    next_e = d
                    sig.mul_op = d.instr.op in MUL_OPS
                    sig.div_op = d.instr.op in DIV_OPS
            if stall is not None:
                sig.d_stall = True
                next_e, next_d = Latch.bubble(stall), d
            else:
                next_d = self._fetch()
                self.pc = next_d.pred_next

        self.mw, self.em, self.de, self.fd = next_w, next_m, next_e, next_d
        self._end_cycle((f_label, d_label, e_label, m_label, w_label))

    def _end_cycle(self, view) -> None:
        self.cycle += 1
        self.soc.tick()
        self.stage_view = view
        if self.on_cycle is not None:
            self.on_cycle(self)

    def run(self, max_cycles: int = 10**9) -> Halt:
        while self.halt is None:
            if self.cycle >= max_cycles:
                self.halt = Halt(HaltReason.TIMEOUT, pc=self.pc, detail=f"{max_cycles} cycles")
                break
            self.tick()
        return self.halt

    def accounting_ok(self) -> bool:
        c = self.counters
        return self.cycle == c.retired + c.fill + sum(c.stalls.values())


def _writes(latch: Latch, reg: int) -> bool:
    return latch.valid and latch.fault is None and latch.instr is not None \
        and latch.instr.writes_rd and latch.instr.rd == reg
