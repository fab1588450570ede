"""Run programs on the core and report the evaluation metrics.

The trace format is one line per simulated cycle::

    <cycle:8> | F <occupant:17> | D <occupant:17> | E <occupant:17> | M <occupant:17> | W <occupant>

An occupant is ``<pc:08x> <mnemonic>``, ``--`` for a bubble, ``<pc> !!`` for a
faulting slot, and ``<pc> MUL[i]`` / ``<pc> DIV[i]`` for the i-th cycle a
multi-cycle operation has spent in E. F shows the pc being fetched.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Union

from .asm import Program
from .exec_units import MulImpl
from .isa import Category
from .pipeline import MISPREDICT, PIPELINE_FILL, STALL_CAUSES, Pipeline, PipelineConfig
from .soc import KIB, MemoryMap, SoC
from .status import Halt, HaltReason


class Isa(enum.Enum):
    RV32I = "rv32i"
    RV32IM = "rv32im"


# post-synthesis clock for the 64 KB memory configurations
DEFAULT_FREQ_MHZ = {Isa.RV32I: 164.0, Isa.RV32IM: 162.0}
FREQ_ENV = {Isa.RV32I: "RVCOREP_FREQ_RV32I", Isa.RV32IM: "RVCOREP_FREQ_RV32IM"}


def default_freq(isa: Isa) -> float:
    env = os.environ.get(FREQ_ENV[isa])
    if env:
        value = float(env)
        if value <= 0:
            raise ValueError(f"{FREQ_ENV[isa]} must be positive")
        return value
    return DEFAULT_FREQ_MHZ[isa]


@dataclass(frozen=True)
class RunConfig:
    isa: Isa = Isa.RV32IM
    mul_impl: MulImpl = MulImpl.DSP
    imem_size: int = 64 * KIB
    dmem_size: int = 64 * KIB
    freq_mhz: float | None = None
    max_cycles: int = 10**9
    trace: bool = False

    @property
    def frequency(self) -> float:
        return self.freq_mhz if self.freq_mhz is not None else default_freq(self.isa)

    @property
    def label(self) -> str:
        if self.isa is Isa.RV32I:
            return "RV32I"
        return f"RV32IM({'radix-4' if self.mul_impl is MulImpl.RADIX4 else 'DSP'})"

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(m_extension=self.isa is Isa.RV32IM, mul_impl=self.mul_impl)

    def memory_map(self) -> MemoryMap:
        return MemoryMap(imem_size=self.imem_size, dmem_size=self.dmem_size)


@dataclass
class RunStats:
    config_label: str
    cycles: int
    retired: int
    fill: int
    histogram: dict[Category, int]
    stalls: dict[str, int]
    branches: int
    mispredicted: int
    halt: Halt
    freq_mhz: float
    uart: bytes = b""
    retired_pcs: list[int] | None = field(default=None, repr=False)

    @property
    def exit_status(self) -> Halt:
        return self.halt

    @property
    def predicted(self) -> int:
        return self.branches - self.mispredicted

    @property
    def flush_cycles(self) -> int:
        return self.stalls.get(MISPREDICT, 0)

    @property
    def stall_cycles(self) -> int:
        return sum(v for k, v in self.stalls.items() if k != MISPREDICT)

    @property
    def cpi(self) -> float:
        return self.cycles / self.retired if self.retired else float("nan")

    @property
    def exec_time_ms(self) -> float:
        return exec_time_ms(self.cycles, self.freq_mhz)

    def accounting_ok(self) -> bool:
        return self.cycles == self.retired + self.fill + self.stall_cycles + self.flush_cycles

    def percentages(self) -> dict[str, float]:
        """Retired-instruction mix as percentages of all retired instructions."""
        total = self.retired or 1
        h = self.histogram
        groups = {
            "arith": h[Category.ARITH],
            "mult": h[Category.MULT],
            "div": h[Category.DIV],
            "branch": h[Category.BRANCH],
            "memory": h[Category.MEM_LOAD] + h[Category.MEM_STORE],
            "system": h[Category.SYSTEM],
        }
        return {k: 100.0 * v / total for k, v in groups.items()}

    def to_kv(self) -> list[str]:
        lines = [
            f"config={self.config_label}",
            f"halt={self.halt.reason.value}",
            f"exit_code={'' if self.halt.exit_code is None else self.halt.exit_code}",
            f"cycles={self.cycles}",
            f"retired={self.retired}",
            f"cpi={self.cpi:.6f}",
            f"freq_mhz={self.freq_mhz:g}",
            f"exec_time_ms={self.exec_time_ms:.6f}",
            f"fill={self.fill}",
        ]
        lines += [f"hist.{cat.value}={self.histogram[cat]}" for cat in Category]
        lines += [f"stall.{cause}={self.stalls.get(cause, 0)}" for cause in STALL_CAUSES]
        lines += [f"branch.resolved={self.branches}", f"branch.predicted={self.predicted}",
                  f"branch.mispredicted={self.mispredicted}"]
        lines += [f"pct.{k}={v:.2f}" for k, v in self.percentages().items()]
        return lines

    def table(self) -> str:
        pct = self.percentages()
        rows = [
            ("configuration", self.config_label),
            ("halt", str(self.halt)),
            ("cycles", f"{self.cycles:,}"),
            ("retired", f"{self.retired:,}"),
            ("CPI", f"{self.cpi:.3f}"),
            ("time @ %g MHz" % self.freq_mhz, f"{self.exec_time_ms:.6f} ms"),
            ("computation %", f"{pct['arith'] + pct['mult'] + pct['div']:.2f}"
             f"  (arith {pct['arith']:.2f}, mult {pct['mult']:.2f}, div {pct['div']:.2f})"),
            ("branch %", f"{pct['branch']:.2f}"),
            ("memory %", f"{pct['memory']:.2f}"),
            ("system %", f"{pct['system']:.2f}"),
            ("stall cycles", ", ".join(f"{c}={self.stalls.get(c, 0)}" for c in STALL_CAUSES)),
            ("branches", f"{self.predicted} predicted, {self.mispredicted} mispredicted"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def exec_time_ms(cycles: int, freq_mhz: float) -> float:
    if freq_mhz <= 0:
        raise ValueError("frequency must be positive")
    if cycles < 0:
        raise ValueError("cycle count must be non-negative")
    return cycles / (freq_mhz * 1e3)


Timing = Union[RunStats, tuple]


def _as_timing(t: Timing) -> tuple[int, float]:
    if isinstance(t, RunStats):
        return t.cycles, t.freq_mhz
    cycles, freq = t
    return cycles, freq


def perf_gain(baseline: Timing, other: Timing) -> float:
    """exec_time(baseline) / exec_time(other); above 1 means ``other`` is faster."""
    (c0, f0), (c1, f1) = _as_timing(baseline), _as_timing(other)
    if min(c0, f0, c1, f1) <= 0:
        raise ValueError("cycles and frequencies must be positive")
    return exec_time_ms(c0, f0) / exec_time_ms(c1, f1)


def format_trace_line(cycle: int, view: tuple[str, str, str, str, str]) -> str:
    f, d, e, m, w = view
    return f"{cycle:>8} | F {f:<17} | D {d:<17} | E {e:<17} | M {m:<17} | W {w}".rstrip()


def emit_trace(views: Iterable[tuple[int, tuple[str, str, str, str, str]]]) -> list[str]:
    return [format_trace_line(c, v) for c, v in views]


Image = Union[Program, bytes, str, Path]


def load_program(soc: SoC, image: Image, base: int | None = None) -> None:
    """Load an assembled Program, a raw byte image, or a file (ELF or raw)."""
    if isinstance(image, Program):
        image.load_into(soc)
        return
    if isinstance(image, (str, Path)):
        path = Path(image)
        with path.open("rb") as fh:
            if fh.read(4) == b"\x7fELF":
                fh.seek(0)
                soc.load_elf(fh)
                return
        image = path.read_bytes()
    soc.load_image(bytes(image), base)


def run(config: RunConfig, image: Image, *, base: int | None = None,
        trace: IO[str] | list | None = None, uart_echo=None,
        record_pcs: bool = False) -> RunStats:
    soc = SoC(config.memory_map(), uart_echo=uart_echo)
    load_program(soc, image, base)
    core = Pipeline(soc, config.pipeline_config())
    pcs: list[int] | None = [] if record_pcs else None
    if pcs is not None:
        core.on_retire = lambda latch: pcs.append(latch.pc)

    if config.trace or trace is not None:
        core.trace_enabled = True
        if isinstance(trace, list):
            def sink(c):
                trace.append(format_trace_line(c.cycle, c.stage_view))
        elif trace is not None:
            def sink(c):
                trace.write(format_trace_line(c.cycle, c.stage_view) + "\n")
        else:
            sink = None
        core.on_cycle = sink

    halt = core.run(config.max_cycles)
    c = core.counters
    if soc.mtime != core.cycle:
        raise AssertionError(f"mtime {soc.mtime} drifted from cycle count {core.cycle}")
    stats = RunStats(
        config_label=config.label,
        cycles=core.cycle,
        retired=c.retired,
        fill=c.fill,
        histogram={cat: c.histogram.get(cat, 0) for cat in Category},
        stalls={cause: c.stalls.get(cause, 0) for cause in STALL_CAUSES},
        branches=c.branches,
        mispredicted=c.mispredicted,
        halt=halt,
        freq_mhz=config.frequency,
        uart=bytes(soc.uart_sink),
        retired_pcs=pcs,
    )
    if not stats.accounting_ok():
        raise AssertionError(
            f"cycle accounting broken: {stats.cycles} != {stats.retired} + {stats.fill} "
            f"+ {stats.stall_cycles} + {stats.flush_cycles}"
        )
    if stats.cycles >= PIPELINE_FILL and stats.fill != PIPELINE_FILL:
        raise AssertionError(f"pipeline fill counted {stats.fill} cycles")
    return stats


def _run_job(job):
    config, image = job
    return run(config, image)


def run_many(jobs: list[tuple[RunConfig, Image]], parallel: bool = True) -> list[RunStats]:
    """Run independent (config, image) pairs, in separate processes if asked."""
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


__all__ = [
    "DEFAULT_FREQ_MHZ", "HaltReason", "Isa", "RunConfig", "RunStats", "emit_trace",
    "exec_time_ms", "format_trace_line", "load_program", "perf_gain", "run", "run_many",
]
