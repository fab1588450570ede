"""Command-line front end.

Exit codes:
    0  guest wrote 0 to the exit device
    1  guest wrote a nonzero status
    2  bad arguments or unreadable image
    3  max-cycles reached
    4  illegal instruction
    5  bus error or misaligned jump target
    6  halted on ECALL
    7  halted on EBREAK
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .exec_units import MulImpl
from .harness import FREQ_ENV, Isa, RunConfig, RunStats, default_freq, perf_gain, run, run_many
from .soc import BusError, KIB, LoadError, MemoryMap
from .status import Halt, HaltReason

EXIT_OK = 0
EXIT_GUEST_FAILURE = 1
EXIT_USAGE = 2
EXIT_TIMEOUT = 3
EXIT_ILLEGAL = 4
EXIT_BUS_ERROR = 5
EXIT_ECALL = 6
EXIT_EBREAK = 7

_HALT_CODES = {
    HaltReason.TIMEOUT: EXIT_TIMEOUT,
    HaltReason.ILLEGAL: EXIT_ILLEGAL,
    HaltReason.BUS_ERROR: EXIT_BUS_ERROR,
    HaltReason.MISALIGNED_TARGET: EXIT_BUS_ERROR,
    HaltReason.ECALL: EXIT_ECALL,
    HaltReason.EBREAK: EXIT_EBREAK,
}

CONFIG_NAMES = {
    "rv32i": (Isa.RV32I, MulImpl.DSP),
    "rv32im-dsp": (Isa.RV32IM, MulImpl.DSP),
    "rv32im-radix4": (Isa.RV32IM, MulImpl.RADIX4),
}


def exit_code(halt: Halt) -> int:
    if halt.reason is HaltReason.EXIT:
        return EXIT_OK if halt.exit_code == 0 else EXIT_GUEST_FAILURE
    return _HALT_CODES[halt.reason]


def _int(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _size(text: str) -> int:
    t = text.strip().lower()
    scale = 1
    if t.endswith(("k", "kb", "kib")):
        scale, t = KIB, t.rstrip("ib").rstrip("k")
    value = _int(t) * scale
    if value <= 0 or value & (value - 1):
        raise argparse.ArgumentTypeError(f"size must be a positive power of two: {text!r}")
    return value


def _freq(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("frequency must be positive")
    return value


def _compare(text: str) -> tuple[str, str]:
    parts = text.lower().split(":")
    if len(parts) != 2 or any(p not in CONFIG_NAMES for p in parts):
        raise argparse.ArgumentTypeError(
            f"expected A:B with A, B in {{{', '.join(CONFIG_NAMES)}}}, got {text!r}")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rvcorep",
        description="Cycle-level simulator of a five-stage RV32I/RV32IM core.",
        epilog=f"Default frequencies can be overridden with {FREQ_ENV[Isa.RV32I]} and "
               f"{FREQ_ENV[Isa.RV32IM]}. "
               "Exit codes: 0 guest success, 1 guest failure, 2 usage, 3 timeout, "
               "4 illegal instruction, 5 bus error, 6 ecall, 7 ebreak.",
    )
    p.add_argument("--image", type=Path, default=None,
                   help="program image, ELF or raw little-endian bytes (required unless "
                        "--compare is given)")
    p.add_argument("--load-base", type=_int, default=None,
                   help="load address for raw images (default: instruction memory base, 0x0)")
    p.add_argument("--isa", choices=[i.value for i in Isa], default=Isa.RV32IM.value,
                   help="instruction set (default: %(default)s)")
    p.add_argument("--mul", choices=[m.value for m in MulImpl], default=MulImpl.DSP.value,
                   help="multiplier implementation, ignored for rv32i (default: %(default)s)")
    p.add_argument("--imem-size", type=_size, default=64 * KIB,
                   help="instruction memory bytes, K suffix allowed (default: %(default)s)")
    p.add_argument("--dmem-size", type=_size, default=64 * KIB,
                   help="data memory bytes, K suffix allowed (default: %(default)s)")
    p.add_argument("--freq", type=_freq, default=None,
                   help=f"clock in MHz used for reporting (default: {default_freq(Isa.RV32I):g} "
                        f"for rv32i, {default_freq(Isa.RV32IM):g} for rv32im)")
    p.add_argument("--max-cycles", type=_int, default=10**9,
                   help="stop with a timeout after this many cycles (default: %(default)s)")
    p.add_argument("--trace", type=Path, default=None,
                   help="write a per-cycle pipeline trace to this file (default: off)")
    p.add_argument("--stats", type=Path, default=None,
                   help="write the stats table and key=value lines to this file "
                        "(default: stderr)")
    p.add_argument("--compare", type=_compare, default=None, metavar="A:B",
                   help=f"run --image-a under A and --image-b under B and report the gain "
                        f"of B over A; names: {', '.join(CONFIG_NAMES)} (default: off)")
    p.add_argument("--image-a", type=Path, default=None,
                   help="baseline image for --compare (default: none)")
    p.add_argument("--image-b", type=Path, default=None,
                   help="image for the second --compare configuration (default: none)")
    return p


def _config(args, isa: Isa, mul: MulImpl, trace: bool = False) -> RunConfig:
    return RunConfig(isa=isa, mul_impl=mul, imem_size=args.imem_size,
                     dmem_size=args.dmem_size, freq_mhz=args.freq,
                     max_cycles=args.max_cycles, trace=trace)


def _report(stats: RunStats) -> str:
    return stats.table() + "\n\n" + "\n".join(stats.to_kv()) + "\n"


def _emit(args, text: str) -> None:
    if args.stats is None:
        sys.stderr.write(text)
    else:
        args.stats.write_text(text)


def _check_file(parser, path: Path | None, flag: str) -> Path:
    if path is None:
        parser.error(f"{flag} is required")
    if not path.is_file():
        parser.error(f"{flag}: no such file: {path}")
    return path


def _validate_sizes(parser, args) -> None:
    try:
        MemoryMap(imem_size=args.imem_size, dmem_size=args.dmem_size)
    except ValueError as exc:
        parser.error(str(exc))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate_sizes(parser, args)

    if args.compare is not None:
        return _run_compare(parser, args)

    image = _check_file(parser, args.image, "--image")
    config = _config(args, Isa(args.isa), MulImpl(args.mul), trace=args.trace is not None)
    stdout = sys.stdout.buffer if hasattr(sys.stdout, "buffer") else None
    try:
        if args.trace is not None:
            with args.trace.open("w") as tf:
                stats = run(config, image, base=args.load_base, trace=tf, uart_echo=stdout)
        else:
            stats = run(config, image, base=args.load_base, uart_echo=stdout)
    except (LoadError, BusError, ValueError) as exc:
        parser.error(f"cannot load {image}: {exc}")
    if stdout is None:
        sys.stdout.write(stats.uart.decode("latin-1"))
    _emit(args, _report(stats))
    return exit_code(stats.halt)


def _run_compare(parser, args) -> int:
    a = _check_file(parser, args.image_a, "--image-a")
    b = _check_file(parser, args.image_b, "--image-b")
    jobs = []
    for name, image in zip(args.compare, (a, b)):
        isa, mul = CONFIG_NAMES[name]
        jobs.append((_config(args, isa, mul), image))
    try:
        base_stats, other_stats = run_many(jobs)
    except (LoadError, BusError, ValueError) as exc:
        parser.error(f"cannot load image: {exc}")
    gain = perf_gain(base_stats, other_stats)
    text = (_report(base_stats) + "\n" + _report(other_stats)
            + f"\nperformance gain of {other_stats.config_label} over "
              f"{base_stats.config_label}: {gain:.4f}\n")
    sys.stdout.write(f"gain={gain:.6f}\n")
    _emit(args, text)
    for s in (base_stats, other_stats):
        code = exit_code(s.halt)
        if code != EXIT_OK:
            return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
