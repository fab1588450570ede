"""A small two-pass RV32IM assembler for building test and demo images.

Supports the base and M instructions, labels, ``.text``/``.data`` sections,
``.word/.half/.byte/.space/.align/.ascii/.asciz``, ``%hi()``/``%lo()`` and the
common pseudo-instructions (``li``, ``la``, ``mv``, ``j``, ``ret``, ``beqz`` ...).
Text is placed at the IMEM base and data at the DMEM base of the default map.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .isa import ABI_NAMES, DecodedInstr, Op, u32
from .soc import MemoryMap

_REG = {f"x{i}": i for i in range(32)} | {name: i for i, name in enumerate(ABI_NAMES)} | {"fp": 8}

_R_FUNCT = {
    Op.ADD: (0x00, 0), Op.SUB: (0x20, 0), Op.SLL: (0x00, 1), Op.SLT: (0x00, 2),
    Op.SLTU: (0x00, 3), Op.XOR: (0x00, 4), Op.SRL: (0x00, 5), Op.SRA: (0x20, 5),
    Op.OR: (0x00, 6), Op.AND: (0x00, 7),
    Op.MUL: (0x01, 0), Op.MULH: (0x01, 1), Op.MULHSU: (0x01, 2), Op.MULHU: (0x01, 3),
    Op.DIV: (0x01, 4), Op.DIVU: (0x01, 5), Op.REM: (0x01, 6), Op.REMU: (0x01, 7),
}
_I_ARITH = {Op.ADDI: 0, Op.SLTI: 2, Op.SLTIU: 3, Op.XORI: 4, Op.ORI: 6, Op.ANDI: 7}
_SHIFT_I = {Op.SLLI: (0x00, 1), Op.SRLI: (0x00, 5), Op.SRAI: (0x20, 5)}
_LOADS = {Op.LB: 0, Op.LH: 1, Op.LW: 2, Op.LBU: 4, Op.LHU: 5}
_STORES = {Op.SB: 0, Op.SH: 1, Op.SW: 2}
_BRANCHES = {Op.BEQ: 0, Op.BNE: 1, Op.BLT: 4, Op.BGE: 5, Op.BLTU: 6, Op.BGEU: 7}


class AsmError(Exception):
    pass


def _check_imm(value: int, bits: int, what: str) -> None:
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if not lo <= value <= hi:
        raise AsmError(f"{what} immediate {value} does not fit in {bits} signed bits")


def _signed(value: int) -> int:
    value = u32(value)
    return value - (1 << 32) if value & 0x8000_0000 else value


def encode(op: Op, rd: int = 0, rs1: int = 0, rs2: int = 0, imm: int = 0) -> int:
    """Encode one instruction. ``imm`` may be given signed or as a 32-bit word."""
    imm_s = _signed(imm)
    if op in _R_FUNCT:
        f7, f3 = _R_FUNCT[op]
        return f7 << 25 | rs2 << 20 | rs1 << 15 | f3 << 12 | rd << 7 | 0b0110011
    if op in _I_ARITH:
        _check_imm(imm_s, 12, op.mnemonic)
        return (imm_s & 0xFFF) << 20 | rs1 << 15 | _I_ARITH[op] << 12 | rd << 7 | 0b0010011
    if op in _SHIFT_I:
        if not 0 <= imm < 32:
            raise AsmError(f"shift amount {imm} out of range")
        f7, f3 = _SHIFT_I[op]
        return f7 << 25 | imm << 20 | rs1 << 15 | f3 << 12 | rd << 7 | 0b0010011
    if op in _LOADS or op is Op.JALR:
        _check_imm(imm_s, 12, op.mnemonic)
        opcode, f3 = (0b1100111, 0) if op is Op.JALR else (0b0000011, _LOADS[op])
        return (imm_s & 0xFFF) << 20 | rs1 << 15 | f3 << 12 | rd << 7 | opcode
    if op in _STORES:
        _check_imm(imm_s, 12, op.mnemonic)
        i = imm_s & 0xFFF
        return (i >> 5) << 25 | rs2 << 20 | rs1 << 15 | _STORES[op] << 12 | (i & 0x1F) << 7 | 0b0100011
    if op in _BRANCHES:
        _check_imm(imm_s, 13, op.mnemonic)
        if imm_s & 1:
            raise AsmError("branch offset must be even")
        i = imm_s & 0x1FFF
        return (
            ((i >> 12) & 1) << 31 | ((i >> 5) & 0x3F) << 25 | rs2 << 20 | rs1 << 15
            | _BRANCHES[op] << 12 | ((i >> 1) & 0xF) << 8 | ((i >> 11) & 1) << 7 | 0b1100011
        )
    if op is Op.JAL:
        _check_imm(imm_s, 21, "jal")
        if imm_s & 1:
            raise AsmError("jump offset must be even")
        i = imm_s & 0x1FFFFF
        return (
            ((i >> 20) & 1) << 31 | ((i >> 1) & 0x3FF) << 21 | ((i >> 11) & 1) << 20
            | ((i >> 12) & 0xFF) << 12 | rd << 7 | 0b1101111
        )
    if op in (Op.LUI, Op.AUIPC):
        opcode = 0b0110111 if op is Op.LUI else 0b0010111
        return (u32(imm) & 0xFFFF_F000) | rd << 7 | opcode
    if op is Op.FENCE:
        return ((imm or 0x0FF) & 0xFFF) << 20 | 0b0001111
    if op is Op.ECALL:
        return 0x0000_0073
    if op is Op.EBREAK:
        return 0x0010_0073
    raise AsmError(f"cannot encode {op}")


def encode_instr(instr: DecodedInstr) -> int:
    return encode(instr.op, instr.rd, instr.rs1, instr.rs2, instr.imm)


@dataclass
class Program:
    text: bytes
    data: bytes
    symbols: dict[str, int]
    text_base: int
    data_base: int
    source_lines: list[tuple[int, str]] = field(default_factory=list)

    def load_into(self, soc) -> None:
        soc.load_image(self.text, self.text_base)
        if self.data:
            soc.load_image(self.data, self.data_base)

    @property
    def words(self) -> list[int]:
        return [int.from_bytes(self.text[i:i + 4], "little") for i in range(0, len(self.text), 4)]


_BRANCH_PSEUDO = {
    "beqz": ("beq", False), "bnez": ("bne", False), "bltz": ("blt", False),
    "bgez": ("bge", False), "blez": ("bge", True), "bgtz": ("blt", True),
}
_SWAPPED = {"bgt": "blt", "ble": "bge", "bgtu": "bltu", "bleu": "bgeu"}
_MEM_OPERAND = re.compile(r"^(.*)\((\w+)\)$")
_LITERAL = re.compile(r"[+-]?(0x[0-9a-fA-F_]+|0b[01_]+|\d[\d_]*)")


def _split_operands(text: str) -> list[str]:
    return [t.strip() for t in text.split(",")] if text.strip() else []


def _li_size(value: int) -> int:
    return 1 if -2048 <= _signed(value) <= 2047 else 2


def _hi_lo(value: int) -> tuple[int, int]:
    value = u32(value)
    lo = value & 0xFFF
    if lo >= 0x800:
        lo -= 0x1000
    hi = u32(value - lo)
    return hi, lo


class _Assembler:
    def __init__(self, text_base: int, data_base: int):
        self.bases = {"text": text_base, "data": data_base}
        self.symbols: dict[str, int] = {}

    def reg(self, tok: str) -> int:
        try:
            return _REG[tok.strip().lower()]
        except KeyError:
            raise AsmError(f"unknown register {tok!r}") from None

    def value(self, tok: str) -> int:
        tok = tok.strip()
        m = re.fullmatch(r"%(hi|lo)\((.+)\)", tok)
        if m:
            hi, lo = _hi_lo(self.value(m.group(2)))
            return hi >> 12 if m.group(1) == "hi" else lo
        m = re.fullmatch(r"([A-Za-z_.$][\w.$]*)\s*([+-]\s*\w+)?", tok)
        if m and m.group(1) in self.symbols:
            off = int(m.group(2).replace(" ", ""), 0) if m.group(2) else 0
            return self.symbols[m.group(1)] + off
        if m and not _LITERAL.fullmatch(tok):
            if self.final:
                raise AsmError(f"undefined symbol {m.group(1)!r}")
            return 0
        if len(tok) == 3 and tok[0] == tok[2] == "'":
            return ord(tok[1])
        try:
            return int(tok, 0)
        except ValueError:
            raise AsmError(f"bad immediate {tok!r}") from None

    def offset(self, tok: str, pc: int) -> int:
        """Branch/jump operand: a bare number is a pc-relative offset, a symbol an address."""
        if _LITERAL.fullmatch(tok.strip()):
            return int(tok.strip(), 0)
        return self.value(tok) - pc

    def size_of(self, mnem: str, ops: list[str]) -> int:
        if mnem == "li":
            return self._li_size(ops[1])
        if mnem == "la":
            return 2
        return 1

    def _li_size(self, tok: str) -> int:
        # symbolic operands always take lui+addi so pass 1 and 2 agree
        if not _LITERAL.fullmatch(tok.strip()):
            return 2
        return _li_size(int(tok.strip(), 0))

    def expand(self, mnem: str, ops: list[str], pc: int) -> list[tuple[Op, int, int, int, int]]:
        """Return (op, rd, rs1, rs2, imm) tuples for one source statement."""
        R = self.reg
        V = self.value
        if mnem == "nop":
            return [(Op.ADDI, 0, 0, 0, 0)]
        if mnem == "li":
            rd, value = R(ops[0]), V(ops[1])
            if self._li_size(ops[1]) == 1:
                return [(Op.ADDI, rd, 0, 0, _signed(value))]
            hi, lo = _hi_lo(value)
            return [(Op.LUI, rd, 0, 0, hi), (Op.ADDI, rd, rd, 0, lo)]
        if mnem == "la":
            rd = R(ops[0])
            hi, lo = _hi_lo(V(ops[1]))
            return [(Op.LUI, rd, 0, 0, hi), (Op.ADDI, rd, rd, 0, lo)]
        if mnem == "mv":
            return [(Op.ADDI, R(ops[0]), R(ops[1]), 0, 0)]
        if mnem == "not":
            return [(Op.XORI, R(ops[0]), R(ops[1]), 0, -1)]
        if mnem == "neg":
            return [(Op.SUB, R(ops[0]), 0, R(ops[1]), 0)]
        if mnem == "seqz":
            return [(Op.SLTIU, R(ops[0]), R(ops[1]), 0, 1)]
        if mnem == "snez":
            return [(Op.SLTU, R(ops[0]), 0, R(ops[1]), 0)]
        if mnem == "j":
            return [(Op.JAL, 0, 0, 0, self.offset(ops[0], pc))]
        if mnem == "call":
            return [(Op.JAL, 1, 0, 0, self.offset(ops[0], pc))]
        if mnem == "jr":
            return [(Op.JALR, 0, R(ops[0]), 0, 0)]
        if mnem == "ret":
            return [(Op.JALR, 0, 1, 0, 0)]
        if mnem in _BRANCH_PSEUDO:
            base, swap = _BRANCH_PSEUDO[mnem]
            r = R(ops[0])
            rs1, rs2 = (0, r) if swap else (r, 0)
            return [(Op[base.upper()], 0, rs1, rs2, self.offset(ops[1], pc))]
        if mnem in _SWAPPED:
            return [(Op[_SWAPPED[mnem].upper()], 0, R(ops[1]), R(ops[0]), self.offset(ops[2], pc))]

        try:
            op = Op[mnem.upper()]
        except KeyError:
            raise AsmError(f"unknown mnemonic {mnem!r}") from None
        if op in _R_FUNCT:
            return [(op, R(ops[0]), R(ops[1]), R(ops[2]), 0)]
        if op in _I_ARITH or op in _SHIFT_I:
            return [(op, R(ops[0]), R(ops[1]), 0, V(ops[2]))]
        if op in _LOADS or op in _STORES or (op is Op.JALR and len(ops) == 2 and "(" in ops[1]):
            m = _MEM_OPERAND.match(ops[1].replace(" ", ""))
            if not m:
                raise AsmError(f"expected offset(reg), got {ops[1]!r}")
            off = V(m.group(1)) if m.group(1) else 0
            if op in _STORES:
                return [(op, 0, R(m.group(2)), R(ops[0]), off)]
            return [(op, R(ops[0]), R(m.group(2)), 0, off)]
        if op is Op.JALR:
            if len(ops) == 1:
                return [(op, 1, R(ops[0]), 0, 0)]
            return [(op, R(ops[0]), R(ops[1]), 0, V(ops[2]) if len(ops) > 2 else 0)]
        if op in _BRANCHES:
            return [(op, 0, R(ops[0]), R(ops[1]), self.offset(ops[2], pc))]
        if op is Op.JAL:
            if len(ops) == 1:
                return [(op, 1, 0, 0, self.offset(ops[0], pc))]
            return [(op, R(ops[0]), 0, 0, self.offset(ops[1], pc))]
        if op in (Op.LUI, Op.AUIPC):
            return [(op, R(ops[0]), 0, 0, (V(ops[1]) & 0xFFFFF) << 12)]
        if op in (Op.FENCE, Op.ECALL, Op.EBREAK):
            return [(op, 0, 0, 0, 0)]
        raise AsmError(f"unsupported instruction {mnem!r}")

    def run(self, source: str) -> Program:
        statements = []
        for lineno, line in enumerate(source.splitlines(), 1):
            line = re.split(r"#|;|//", line, maxsplit=1)[0].strip()
            while True:
                m = re.match(r"^([A-Za-z_.$][\w.$]*):\s*(.*)$", line)
                if not m:
                    break
                statements.append((lineno, "label", m.group(1), []))
                line = m.group(2)
            if not line:
                continue
            parts = line.split(None, 1)
            mnem = parts[0].lower()
            rest = parts[1] if len(parts) > 1 else ""
            if mnem in (".ascii", ".asciz", ".string"):
                statements.append((lineno, mnem, rest.strip(), []))
            else:
                statements.append((lineno, mnem, None, _split_operands(rest)))

        # pass 1 sizes and symbols; pass 2 emits with final addresses
        self.final = False
        self._layout(statements, emit=False)
        self.final = True
        return self._layout(statements, emit=True)

    def _layout(self, statements, emit: bool) -> Program:
        out = {"text": bytearray(), "data": bytearray()}
        section = "text"
        listing = []
        for lineno, mnem, arg, ops in statements:
            buf = out[section]
            addr = self.bases[section] + len(buf)
            try:
                if mnem == "label":
                    if not emit and arg in self.symbols:
                        raise AsmError(f"duplicate label {arg!r}")
                    self.symbols[arg] = addr
                elif mnem in (".text", ".data"):
                    section = mnem[1:]
                elif mnem in (".globl", ".global", ".section", ".option", ".type", ".size"):
                    pass
                elif mnem in (".word", ".half", ".byte"):
                    width = {".word": 4, ".half": 2, ".byte": 1}[mnem]
                    for tok in ops:
                        val = self.value(tok) if emit else 0
                        buf += (val & ((1 << (8 * width)) - 1)).to_bytes(width, "little")
                elif mnem in (".space", ".zero"):
                    buf += bytes(self.value(ops[0]))
                elif mnem in (".align", ".p2align"):
                    align = 1 << self.value(ops[0])
                    buf += bytes(-len(buf) % align)
                elif mnem in (".ascii", ".asciz", ".string"):
                    raw = arg.strip()
                    if not (raw.startswith('"') and raw.endswith('"')):
                        raise AsmError("string directive needs a quoted string")
                    data = raw[1:-1].encode("latin-1").decode("unicode_escape").encode("latin-1")
                    buf += data + (b"\0" if mnem != ".ascii" else b"")
                else:
                    if section != "text":
                        raise AsmError("instructions are only allowed in .text")
                    if emit:
                        pieces = self.expand(mnem, ops, addr)
                        for i, (op, rd, rs1, rs2, imm) in enumerate(pieces):
                            buf += encode(op, rd, rs1, rs2, imm).to_bytes(4, "little")
                            listing.append((addr + 4 * i, f"{mnem} {', '.join(ops)}"))
                    else:
                        buf += bytes(4 * self.size_of(mnem, ops))
            except (AsmError, IndexError) as exc:
                raise AsmError(f"line {lineno}: {exc}") from None
        return Program(
            text=bytes(out["text"]),
            data=bytes(out["data"]),
            symbols=dict(self.symbols),
            text_base=self.bases["text"],
            data_base=self.bases["data"],
            source_lines=listing,
        )


def assemble(source: str, memory_map: MemoryMap | None = None) -> Program:
    memory_map = memory_map or MemoryMap()
    return _Assembler(memory_map.imem_base, memory_map.dmem_base).run(source)
