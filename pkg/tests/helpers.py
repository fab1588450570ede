from __future__ import annotations

from dataclasses import dataclass

from rvcorep import MulImpl, Pipeline, PipelineConfig, SoC, assemble, interpret
from rvcorep.status import Halt


@dataclass
class Outcome:
    halt: Halt
    regs: tuple[int, ...]
    dmem: bytes
    pcs: list[int]
    retired: int
    uart: bytes
    core: Pipeline | None = None


def soc_for(source: str) -> SoC:
    soc = SoC()
    assemble(source).load_into(soc)
    return soc


def on_pipeline(source: str, *, m_extension: bool = True, mul_impl: MulImpl = MulImpl.DSP,
                max_cycles: int = 1_000_000, trace: bool = False) -> Outcome:
    soc = soc_for(source)
    core = Pipeline(soc, PipelineConfig(m_extension=m_extension, mul_impl=mul_impl))
    pcs: list[int] = []
    core.on_retire = lambda latch: pcs.append(latch.pc)
    core.trace_enabled = trace
    halt = core.run(max_cycles)
    return Outcome(halt, core.regs.snapshot(), bytes(soc.dmem), pcs,
                   core.counters.retired, bytes(soc.uart_sink), core)


def on_interpreter(source: str, *, m_extension: bool = True) -> Outcome:
    soc = soc_for(source)
    r = interpret(soc, m_extension=m_extension, record_pcs=True)
    return Outcome(r.halt, r.regs, bytes(soc.dmem), r.trace, r.retired, bytes(soc.uart_sink))


def traced(source: str, **kw) -> tuple[Pipeline, list[tuple[str, ...]]]:
    """Run with tracing and return the per-cycle (F, D, E, M, W) views."""
    soc = soc_for(source)
    core = Pipeline(soc, PipelineConfig(**kw))
    core.trace_enabled = True
    views: list[tuple[str, ...]] = []
    core.on_cycle = lambda c: views.append(c.stage_view)
    core.run(100_000)
    return core, views
