"""RV32I + M-extension decoding and single-cycle functional semantics."""

from __future__ import annotations

import enum
from dataclasses import dataclass

MASK32 = 0xFFFF_FFFF


def u32(x: int) -> int:
    return x & MASK32


def s32(x: int) -> int:
    x &= MASK32
    return x - (1 << 32) if x & 0x8000_0000 else x


def sext(value: int, bits: int) -> int:
    """Sign-extend the low ``bits`` of ``value`` to a 32-bit word."""
    value &= (1 << bits) - 1
    if value & (1 << (bits - 1)):
        value -= 1 << bits
    return u32(value)


class IllegalInstruction(Exception):
    def __init__(self, raw: int, reason: str = "unrecognized encoding"):
        super().__init__(f"illegal instruction 0x{raw:08x}: {reason}")
        self.raw = raw


class Category(enum.Enum):
    ARITH = "arith"
    MULT = "mult"
    DIV = "div"
    BRANCH = "branch"
    MEM_LOAD = "load"
    MEM_STORE = "store"
    SYSTEM = "system"


class Op(enum.Enum):
    LUI = enum.auto()
    AUIPC = enum.auto()
    JAL = enum.auto()
    JALR = enum.auto()
    BEQ = enum.auto()
    BNE = enum.auto()
    BLT = enum.auto()
    BGE = enum.auto()
    BLTU = enum.auto()
    BGEU = enum.auto()
    LB = enum.auto()
    LH = enum.auto()
    LW = enum.auto()
    LBU = enum.auto()
    LHU = enum.auto()
    SB = enum.auto()
    SH = enum.auto()
    SW = enum.auto()
    ADDI = enum.auto()
    SLTI = enum.auto()
    SLTIU = enum.auto()
    XORI = enum.auto()
    ORI = enum.auto()
    ANDI = enum.auto()
    SLLI = enum.auto()
    SRLI = enum.auto()
    SRAI = enum.auto()
    ADD = enum.auto()
    SUB = enum.auto()
    SLL = enum.auto()
    SLT = enum.auto()
    SLTU = enum.auto()
    XOR = enum.auto()
    SRL = enum.auto()
    SRA = enum.auto()
    OR = enum.auto()
    AND = enum.auto()
    FENCE = enum.auto()
    ECALL = enum.auto()
    EBREAK = enum.auto()
    MUL = enum.auto()
    MULH = enum.auto()
    MULHSU = enum.auto()
    MULHU = enum.auto()
    DIV = enum.auto()
    DIVU = enum.auto()
    REM = enum.auto()
    REMU = enum.auto()

    @property
    def mnemonic(self) -> str:
        return self.name.lower()

    @property
    def category(self) -> Category:
        return _CATEGORY[self]


BRANCH_OPS = frozenset({Op.BEQ, Op.BNE, Op.BLT, Op.BGE, Op.BLTU, Op.BGEU})
JUMP_OPS = frozenset({Op.JAL, Op.JALR})
LOAD_OPS = frozenset({Op.LB, Op.LH, Op.LW, Op.LBU, Op.LHU})
STORE_OPS = frozenset({Op.SB, Op.SH, Op.SW})
MUL_OPS = frozenset({Op.MUL, Op.MULH, Op.MULHSU, Op.MULHU})
DIV_OPS = frozenset({Op.DIV, Op.DIVU, Op.REM, Op.REMU})
M_OPS = MUL_OPS | DIV_OPS
SYSTEM_OPS = frozenset({Op.FENCE, Op.ECALL, Op.EBREAK})

_CATEGORY = {}
for _op in Op:
    if _op in MUL_OPS:
        _CATEGORY[_op] = Category.MULT
    elif _op in DIV_OPS:
        _CATEGORY[_op] = Category.DIV
    elif _op in BRANCH_OPS or _op in JUMP_OPS:
        _CATEGORY[_op] = Category.BRANCH
    elif _op in LOAD_OPS:
        _CATEGORY[_op] = Category.MEM_LOAD
    elif _op in STORE_OPS:
        _CATEGORY[_op] = Category.MEM_STORE
    elif _op in SYSTEM_OPS:
        _CATEGORY[_op] = Category.SYSTEM
    else:
        _CATEGORY[_op] = Category.ARITH

# register-operand usage per op: (reads rs1, reads rs2, writes rd)
_NO_RS1 = frozenset({Op.LUI, Op.AUIPC, Op.JAL}) | SYSTEM_OPS
_READS_RS2 = BRANCH_OPS | STORE_OPS | M_OPS | frozenset(
    {Op.ADD, Op.SUB, Op.SLL, Op.SLT, Op.SLTU, Op.XOR, Op.SRL, Op.SRA, Op.OR, Op.AND}
)
_NO_RD = BRANCH_OPS | STORE_OPS | SYSTEM_OPS


@dataclass(frozen=True, slots=True)
class DecodedInstr:
    op: Op
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    raw: int = 0

    @property
    def category(self) -> Category:
        return self.op.category

    @property
    def reads_rs1(self) -> bool:
        return self.op not in _NO_RS1

    @property
    def reads_rs2(self) -> bool:
        return self.op in _READS_RS2

    @property
    def writes_rd(self) -> bool:
        return self.op not in _NO_RD and self.rd != 0

    def sources(self) -> tuple[int, ...]:
        regs = []
        if self.reads_rs1:
            regs.append(self.rs1)
        if self.reads_rs2:
            regs.append(self.rs2)
        return tuple(regs)

    def __str__(self) -> str:
        return disassemble(self)


_BRANCH_F3 = {0: Op.BEQ, 1: Op.BNE, 4: Op.BLT, 5: Op.BGE, 6: Op.BLTU, 7: Op.BGEU}
_LOAD_F3 = {0: Op.LB, 1: Op.LH, 2: Op.LW, 4: Op.LBU, 5: Op.LHU}
_STORE_F3 = {0: Op.SB, 1: Op.SH, 2: Op.SW}
_OPIMM_F3 = {0: Op.ADDI, 2: Op.SLTI, 3: Op.SLTIU, 4: Op.XORI, 6: Op.ORI, 7: Op.ANDI}
_OP_F3 = {
    (0x00, 0): Op.ADD, (0x20, 0): Op.SUB, (0x00, 1): Op.SLL, (0x00, 2): Op.SLT,
    (0x00, 3): Op.SLTU, (0x00, 4): Op.XOR, (0x00, 5): Op.SRL, (0x20, 5): Op.SRA,
    (0x00, 6): Op.OR, (0x00, 7): Op.AND,
    (0x01, 0): Op.MUL, (0x01, 1): Op.MULH, (0x01, 2): Op.MULHSU, (0x01, 3): Op.MULHU,
    (0x01, 4): Op.DIV, (0x01, 5): Op.DIVU, (0x01, 6): Op.REM, (0x01, 7): Op.REMU,
}


def decode(raw: int, *, m_extension: bool = True) -> DecodedInstr:
    """Decode one 32-bit instruction word.

    Raises IllegalInstruction for anything outside RV32I/RV32M, for CSR
    accesses, and for M-extension encodings when ``m_extension`` is off.
    """
    raw = u32(raw)
    opcode = raw & 0x7F
    rd = (raw >> 7) & 0x1F
    f3 = (raw >> 12) & 0x7
    rs1 = (raw >> 15) & 0x1F
    rs2 = (raw >> 20) & 0x1F
    f7 = raw >> 25

    if opcode == 0b0110111:
        return DecodedInstr(Op.LUI, rd=rd, imm=raw & 0xFFFF_F000, raw=raw)
    if opcode == 0b0010111:
        return DecodedInstr(Op.AUIPC, rd=rd, imm=raw & 0xFFFF_F000, raw=raw)
    if opcode == 0b1101111:
        imm = (
            ((raw >> 31) & 1) << 20
            | ((raw >> 12) & 0xFF) << 12
            | ((raw >> 20) & 1) << 11
            | ((raw >> 21) & 0x3FF) << 1
        )
        return DecodedInstr(Op.JAL, rd=rd, imm=sext(imm, 21), raw=raw)
    if opcode == 0b1100111 and f3 == 0:
        return DecodedInstr(Op.JALR, rd=rd, rs1=rs1, imm=sext(raw >> 20, 12), raw=raw)
    if opcode == 0b1100011 and f3 in _BRANCH_F3:
        imm = (
            ((raw >> 31) & 1) << 12
            | ((raw >> 7) & 1) << 11
            | ((raw >> 25) & 0x3F) << 5
            | ((raw >> 8) & 0xF) << 1
        )
        return DecodedInstr(_BRANCH_F3[f3], rs1=rs1, rs2=rs2, imm=sext(imm, 13), raw=raw)
    if opcode == 0b0000011 and f3 in _LOAD_F3:
        return DecodedInstr(_LOAD_F3[f3], rd=rd, rs1=rs1, imm=sext(raw >> 20, 12), raw=raw)
    if opcode == 0b0100011 and f3 in _STORE_F3:
        imm = (f7 << 5) | rd
        return DecodedInstr(_STORE_F3[f3], rs1=rs1, rs2=rs2, imm=sext(imm, 12), raw=raw)
    if opcode == 0b0010011:
        if f3 in _OPIMM_F3:
            return DecodedInstr(_OPIMM_F3[f3], rd=rd, rs1=rs1, imm=sext(raw >> 20, 12), raw=raw)
        if f3 == 1 and f7 == 0:
            return DecodedInstr(Op.SLLI, rd=rd, rs1=rs1, imm=rs2, raw=raw)
        if f3 == 5 and f7 == 0:
            return DecodedInstr(Op.SRLI, rd=rd, rs1=rs1, imm=rs2, raw=raw)
        if f3 == 5 and f7 == 0x20:
            return DecodedInstr(Op.SRAI, rd=rd, rs1=rs1, imm=rs2, raw=raw)
    if opcode == 0b0110011 and (f7, f3) in _OP_F3:
        op = _OP_F3[f7, f3]
        if op in M_OPS and not m_extension:
            raise IllegalInstruction(raw, "M-extension disabled")
        return DecodedInstr(op, rd=rd, rs1=rs1, rs2=rs2, raw=raw)
    if opcode == 0b0001111 and f3 == 0:
        # fm/pred/succ and the reserved rd/rs1 fields are ignored
        return DecodedInstr(Op.FENCE, imm=raw >> 20, raw=raw)
    if opcode == 0b1110011:
        if raw == 0x0000_0073:
            return DecodedInstr(Op.ECALL, raw=raw)
        if raw == 0x0010_0073:
            return DecodedInstr(Op.EBREAK, raw=raw)
        raise IllegalInstruction(raw, "CSR and privileged instructions are not modeled")
    raise IllegalInstruction(raw)


def classify(instr: DecodedInstr) -> Category:
    return instr.op.category


def exec_alu(op: Op, a: int, b: int) -> int:
    """Single-cycle ALU. Immediate forms take the immediate as ``b``."""
    if op in (Op.ADD, Op.ADDI):
        return u32(a + b)
    if op is Op.SUB:
        return u32(a - b)
    if op in (Op.AND, Op.ANDI):
        return a & b
    if op in (Op.OR, Op.ORI):
        return a | b
    if op in (Op.XOR, Op.XORI):
        return a ^ b
    if op in (Op.SLL, Op.SLLI):
        return u32(a << (b & 31))
    if op in (Op.SRL, Op.SRLI):
        return a >> (b & 31)
    if op in (Op.SRA, Op.SRAI):
        return u32(s32(a) >> (b & 31))
    if op in (Op.SLT, Op.SLTI):
        return int(s32(a) < s32(b))
    if op in (Op.SLTU, Op.SLTIU):
        return int(a < b)
    raise ValueError(f"{op.name} is not an ALU operation")


def branch_eval(op: Op, a: int, b: int) -> bool:
    if op is Op.BEQ:
        return a == b
    if op is Op.BNE:
        return a != b
    if op is Op.BLT:
        return s32(a) < s32(b)
    if op is Op.BGE:
        return s32(a) >= s32(b)
    if op is Op.BLTU:
        return a < b
    if op is Op.BGEU:
        return a >= b
    raise ValueError(f"{op.name} is not a conditional branch")


def agu(base: int, imm: int) -> int:
    return u32(base + imm)


ALU_OPS = frozenset(
    {
        Op.ADD, Op.ADDI, Op.SUB, Op.AND, Op.ANDI, Op.OR, Op.ORI, Op.XOR, Op.XORI,
        Op.SLL, Op.SLLI, Op.SRL, Op.SRLI, Op.SRA, Op.SRAI,
        Op.SLT, Op.SLTI, Op.SLTU, Op.SLTIU,
    }
)
_IMM_FORM = frozenset({Op.ADDI, Op.ANDI, Op.ORI, Op.XORI, Op.SLLI, Op.SRLI, Op.SRAI, Op.SLTI, Op.SLTIU})

LOAD_WIDTH = {Op.LB: 1, Op.LBU: 1, Op.LH: 2, Op.LHU: 2, Op.LW: 4}
STORE_WIDTH = {Op.SB: 1, Op.SH: 2, Op.SW: 4}


def load_extend(op: Op, value: int) -> int:
    if op is Op.LB:
        return sext(value, 8)
    if op is Op.LH:
        return sext(value, 16)
    return value


def single_cycle_result(instr: DecodedInstr, pc: int, a: int, b: int) -> int:
    """Result written to rd by a non-memory, non-M instruction in one cycle."""
    op = instr.op
    if op in ALU_OPS:
        return exec_alu(op, a, instr.imm if op in _IMM_FORM else b)
    if op is Op.LUI:
        return instr.imm
    if op is Op.AUIPC:
        return u32(pc + instr.imm)
    if op in JUMP_OPS:
        return u32(pc + 4)
    return 0


def next_pc(instr: DecodedInstr, pc: int, a: int, b: int) -> tuple[bool, int]:
    """Resolved control flow: (taken, next pc) for any instruction."""
    op = instr.op
    if op is Op.JAL:
        return True, u32(pc + instr.imm)
    if op is Op.JALR:
        return True, u32(a + instr.imm) & ~1
    if op in BRANCH_OPS:
        if branch_eval(op, a, b):
            return True, u32(pc + instr.imm)
        return False, u32(pc + 4)
    return False, u32(pc + 4)


class RegFile:
    def __init__(self) -> None:
        self.regs = [0] * 32

    def __getitem__(self, idx: int) -> int:
        return self.regs[idx] if idx else 0

    def __setitem__(self, idx: int, value: int) -> None:
        if idx:
            self.regs[idx] = u32(value)

    def snapshot(self) -> tuple[int, ...]:
        return (0, *self.regs[1:])


ABI_NAMES = (
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1",
    "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7",
    "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11",
    "t3", "t4", "t5", "t6",
)


def disassemble(instr: DecodedInstr) -> str:
    op = instr.op
    m = op.mnemonic
    imm = s32(instr.imm)
    if op in (Op.LUI, Op.AUIPC):
        return f"{m} x{instr.rd}, 0x{instr.imm >> 12:x}"
    if op is Op.JAL:
        return f"{m} x{instr.rd}, {imm}"
    if op is Op.JALR or op in LOAD_OPS:
        return f"{m} x{instr.rd}, {imm}(x{instr.rs1})"
    if op in STORE_OPS:
        return f"{m} x{instr.rs2}, {imm}(x{instr.rs1})"
    if op in BRANCH_OPS:
        return f"{m} x{instr.rs1}, x{instr.rs2}, {imm}"
    if op in _IMM_FORM:
        return f"{m} x{instr.rd}, x{instr.rs1}, {imm}"
    if op in SYSTEM_OPS:
        return m
    return f"{m} x{instr.rd}, x{instr.rs1}, x{instr.rs2}"
