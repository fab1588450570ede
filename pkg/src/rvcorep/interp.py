"""One-instruction-at-a-time reference interpreter.

No pipeline, no timing: fetch, decode, execute, repeat. The pipelined core
must leave the same architectural state and retire the same pc sequence.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .exec_units import m_semantics
from .isa import (
    LOAD_OPS, LOAD_WIDTH, M_OPS, STORE_OPS, STORE_WIDTH, Category, IllegalInstruction, Op,
    RegFile, agu, decode, load_extend, next_pc, single_cycle_result,
)
from .soc import BusError, SoC
from .status import Halt, HaltReason


@dataclass
class InterpResult:
    halt: Halt
    retired: int
    regs: tuple[int, ...]
    histogram: Counter = field(default_factory=Counter)
    trace: list[int] | None = None


def interpret(soc: SoC, *, m_extension: bool = True, max_steps: int = 10_000_000,
              record_pcs: bool = False) -> InterpResult:
    regs = RegFile()
    pc = soc.reset_pc
    histogram: Counter = Counter()
    pcs: list[int] | None = [] if record_pcs else None
    retired = 0
    halt = Halt(HaltReason.TIMEOUT)

    for _ in range(max_steps):
        try:
            instr = decode(soc.fetch(pc), m_extension=m_extension)
        except IllegalInstruction as exc:
            halt = Halt(HaltReason.ILLEGAL, pc=pc, detail=str(exc))
            break
        except BusError as exc:
            halt = Halt(HaltReason.BUS_ERROR, pc=pc, detail=str(exc))
            break

        a, b = regs[instr.rs1], regs[instr.rs2]
        op = instr.op
        result = None
        try:
            if op in M_OPS:
                result = m_semantics(op, a, b)
            elif op in LOAD_OPS:
                addr = agu(a, instr.imm)
                result = load_extend(op, soc.bus_read(addr, LOAD_WIDTH[op]))
            elif op in STORE_OPS:
                soc.bus_write(agu(a, instr.imm), STORE_WIDTH[op], b)
            else:
                result = single_cycle_result(instr, pc, a, b)
        except BusError as exc:
            halt = Halt(HaltReason.BUS_ERROR, pc=pc, detail=str(exc))
            break

        _, target = next_pc(instr, pc, a, b)
        if target & 3:
            halt = Halt(HaltReason.MISALIGNED_TARGET, pc=pc, detail=f"target 0x{target:08x}")
            break

        if instr.writes_rd and result is not None:
            regs[instr.rd] = result
        retired += 1
        histogram[instr.category] += 1
        if pcs is not None:
            pcs.append(pc)

        if op is Op.EBREAK:
            halt = Halt(HaltReason.EBREAK, pc=pc)
            break
        if op is Op.ECALL:
            halt = Halt(HaltReason.ECALL, pc=pc)
            break
        if soc.exit_status is not None:
            halt = Halt(HaltReason.EXIT, pc=pc, exit_code=soc.exit_status)
            break
        pc = target

    for cat in Category:
        histogram.setdefault(cat, 0)
    return InterpResult(halt=halt, retired=retired, regs=regs.snapshot(),
                        histogram=histogram, trace=pcs)
