"""Cycle-level model of a five-stage pipelined RV32I/RV32IM core."""

from .asm import AsmError, Program, assemble
from .exec_units import BoothMultiplier, DspMultiplier, MulImpl, NonRestoringDivider, m_semantics
from .harness import Isa, RunConfig, RunStats, exec_time_ms, perf_gain, run
from .interp import interpret
from .isa import Category, DecodedInstr, IllegalInstruction, Op, decode
from .pipeline import Gshare, Pipeline, PipelineConfig
from .soc import BusError, MemoryMap, SoC
from .status import Halt, HaltReason

__all__ = [
    "AsmError", "BoothMultiplier", "BusError", "Category", "DecodedInstr", "DspMultiplier",
    "Gshare", "Halt", "HaltReason", "IllegalInstruction", "Isa", "MemoryMap", "MulImpl",
    "NonRestoringDivider", "Op", "Pipeline", "PipelineConfig", "Program", "RunConfig",
    "RunStats", "SoC", "assemble", "decode", "exec_time_ms", "interpret", "m_semantics",
    "perf_gain", "run",
]
