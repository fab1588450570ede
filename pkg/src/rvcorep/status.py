from __future__ import annotations

import enum
from dataclasses import dataclass


class HaltReason(enum.Enum):
    EXIT = "exit"
    EBREAK = "ebreak"
    ECALL = "ecall"
    ILLEGAL = "illegal"
    BUS_ERROR = "bus_error"
    MISALIGNED_TARGET = "misaligned_target"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class Halt:
    reason: HaltReason
    pc: int | None = None
    exit_code: int | None = None
    detail: str = ""

    @property
    def is_fault(self) -> bool:
        return self.reason in (HaltReason.ILLEGAL, HaltReason.BUS_ERROR, HaltReason.MISALIGNED_TARGET)

    @property
    def success(self) -> bool:
        return self.reason is HaltReason.EXIT and self.exit_code == 0

    def __str__(self) -> str:
        s = self.reason.value
        if self.exit_code is not None:
            s += f"({self.exit_code})"
        if self.pc is not None:
            s += f" at pc=0x{self.pc:08x}"
        if self.detail:
            s += f": {self.detail}"
        return s
