"""Evaluation SoC: IMEM, DMEM, timer, TX-only UART and an exit device.

Default memory map::

    0x0000_0000  IMEM   (read-only to stores, 64 KiB)
    0x1000_0000  DMEM   (64 KiB)
    0x2000_0000  timer  mtime low word at +0, high word at +4
    0x3000_0000  UART   TX data at +0 (write), status at +4 (reads 1: ready)
    0x4000_0000  exit   a word write halts the simulation with that status
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import BinaryIO

KIB = 1024


class BusError(Exception):
    def __init__(self, addr: int, reason: str):
        super().__init__(f"bus error at 0x{addr:08x}: {reason}")
        self.addr = addr
        self.reason = reason


class MisalignedAccess(BusError):
    pass


class LoadError(Exception):
    pass


@dataclass(frozen=True)
class MemoryMap:
    imem_base: int = 0x0000_0000
    imem_size: int = 64 * KIB
    dmem_base: int = 0x1000_0000
    dmem_size: int = 64 * KIB
    timer_base: int = 0x2000_0000
    uart_base: int = 0x3000_0000
    exit_base: int = 0x4000_0000

    DEVICE_SPAN = 8

    def __post_init__(self):
        for name in ("imem_size", "dmem_size"):
            size = getattr(self, name)
            if size <= 0 or size & (size - 1):
                raise ValueError(f"{name} must be a power of two, got {size}")
        regions = sorted(self.regions().items(), key=lambda kv: kv[1][0])
        for (n1, (b1, s1)), (n2, (b2, _)) in zip(regions, regions[1:]):
            if b1 + s1 > b2:
                raise ValueError(f"memory regions {n1} and {n2} overlap")

    def regions(self) -> dict[str, tuple[int, int]]:
        return {
            "imem": (self.imem_base, self.imem_size),
            "dmem": (self.dmem_base, self.dmem_size),
            "timer": (self.timer_base, self.DEVICE_SPAN),
            "uart": (self.uart_base, self.DEVICE_SPAN),
            "exit": (self.exit_base, self.DEVICE_SPAN),
        }

    def locate(self, addr: int) -> tuple[str, int] | None:
        for name, (base, size) in self.regions().items():
            if base <= addr < base + size:
                return name, addr - base
        return None


@dataclass
class SoC:
    map: MemoryMap = field(default_factory=MemoryMap)
    uart_echo: BinaryIO | None = None

    def __post_init__(self):
        self.imem = bytearray(self.map.imem_size)
        self.dmem = bytearray(self.map.dmem_size)
        self.mtime = 0
        self.uart_sink = bytearray()
        self.exit_status: int | None = None
        self.reset_pc = self.map.imem_base

    # -- image loading --------------------------------------------------

    def load_image(self, data: bytes, base: int | None = None) -> None:
        """Copy a flat image into IMEM or DMEM and point the reset pc at IMEM."""
        base = self.map.imem_base if base is None else base
        self._place(bytes(data), base)
        self.reset_pc = self.map.imem_base

    def _place(self, data: bytes, addr: int) -> None:
        for name, mem in (("imem", self.imem), ("dmem", self.dmem)):
            mbase, msize = self.map.regions()[name]
            if mbase <= addr <= mbase + msize:
                off = addr - mbase
                if off + len(data) > msize:
                    raise LoadError(
                        f"image of {len(data)} bytes at 0x{addr:08x} overruns {name} "
                        f"(ends 0x{addr + len(data):08x}, limit 0x{mbase + msize:08x})"
                    )
                mem[off:off + len(data)] = data
                return
        raise LoadError(f"load address 0x{addr:08x} is not in IMEM or DMEM")

    def load_elf(self, stream: BinaryIO) -> int:
        """Place every PT_LOAD segment at its physical address; returns the entry."""
        from elftools.common.exceptions import ELFError
        from elftools.elf.elffile import ELFFile

        try:
            elf = ELFFile(stream)
        except ELFError as exc:
            raise LoadError(f"not an ELF file: {exc}") from None
        if elf.elfclass != 32 or not elf.little_endian or elf["e_machine"] != "EM_RISCV":
            raise LoadError("expected a 32-bit little-endian RISC-V ELF executable")
        for seg in elf.iter_segments():
            if seg["p_type"] != "PT_LOAD" or seg["p_memsz"] == 0:
                continue
            data = seg.data() + bytes(seg["p_memsz"] - seg["p_filesz"])
            self._place(data, seg["p_paddr"])
        self.reset_pc = elf["e_entry"]
        return self.reset_pc

    # -- bus -------------------------------------------------------------

    def _check(self, addr: int, width: int) -> tuple[str, int]:
        if width not in (1, 2, 4):
            raise ValueError(f"bad access width {width}")
        if addr % width:
            raise MisalignedAccess(addr, f"{width}-byte access not aligned")
        hit = self.map.locate(addr)
        if hit is None:
            raise BusError(addr, "unmapped address")
        return hit

    def fetch(self, addr: int) -> int:
        if addr % 4:
            raise MisalignedAccess(addr, "instruction fetch not word aligned")
        hit = self.map.locate(addr)
        if hit is None or hit[0] != "imem":
            raise BusError(addr, "instruction fetch outside IMEM")
        off = hit[1]
        return int.from_bytes(self.imem[off:off + 4], "little")

    def bus_read(self, addr: int, width: int) -> int:
        name, off = self._check(addr, width)
        if name == "imem":
            return int.from_bytes(self.imem[off:off + width], "little")
        if name == "dmem":
            return int.from_bytes(self.dmem[off:off + width], "little")
        if name == "timer":
            raw = self.mtime.to_bytes(8, "little")
            return int.from_bytes(raw[off:off + width], "little")
        if name == "uart":
            return 1 if off == 4 else 0
        return 0

    def bus_write(self, addr: int, width: int, value: int) -> None:
        name, off = self._check(addr, width)
        value &= (1 << (8 * width)) - 1
        if name == "dmem":
            self.dmem[off:off + width] = value.to_bytes(width, "little")
        elif name == "uart":
            if off == 0:
                byte = value & 0xFF
                self.uart_sink.append(byte)
                if self.uart_echo is not None:
                    self.uart_echo.write(bytes([byte]))
                    self.uart_echo.flush()
        elif name == "exit":
            if off == 0:
                self.exit_status = value
        elif name == "imem":
            raise BusError(addr, "store to read-only IMEM")
        else:
            raise BusError(addr, f"store to read-only {name} register")

    def tick(self) -> None:
        self.mtime += 1

    @property
    def uart_text(self) -> str:
        return self.uart_sink.decode("latin-1")
