import subprocess
import sys

import pytest

from programs import PROGRAMS
from rvcorep import assemble
from rvcorep.cli import (
    EXIT_BUS_ERROR, EXIT_EBREAK, EXIT_ECALL, EXIT_GUEST_FAILURE, EXIT_ILLEGAL, EXIT_OK,
    EXIT_TIMEOUT, EXIT_USAGE, build_parser, main,
)


HELLO = """
    li s1, 0x30000000
    li t0, 'h'
    sw t0, 0(s1)
    li t0, 'i'
    sw t0, 0(s1)
    li t0, 10
    sw t0, 0(s1)
    li t6, 0x40000000
    sw zero, 0(t6)
"""


@pytest.fixture
def image(tmp_path):
    def make(source, name="p.bin"):
        path = tmp_path / name
        path.write_bytes(assemble(source).text)
        return path
    return make


def _kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line and " " not in line)


def test_defaults():
    args = build_parser().parse_args([])
    assert (args.isa, args.mul, args.imem_size, args.dmem_size, args.max_cycles) == \
        ("rv32im", "dsp", 65536, 65536, 10**9)
    assert args.freq is None and args.trace is None and args.stats is None


def test_help_lists_every_flag_with_default(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = " ".join(capsys.readouterr().out.split())
    for flag in ("--image", "--load-base", "--isa", "--mul", "--imem-size", "--dmem-size",
                 "--freq", "--max-cycles", "--trace", "--stats", "--compare", "--image-a",
                 "--image-b"):
        assert flag in out
    assert "default: 1000000000" in out and "default: rv32im" in out and "164" in out


def test_success_and_uart(image, tmp_path, capsys):
    stats = tmp_path / "stats.txt"
    code = main(["--image", str(image(HELLO)), "--stats", str(stats)])
    assert code == EXIT_OK
    assert capsys.readouterr().out == "hi\n"
    kv = _kv(stats.read_text())
    assert kv["config"] == "RV32IM(DSP)" and kv["halt"] == "exit"


def test_radix4_flag_mapping(image, tmp_path):
    stats = tmp_path / "s.txt"
    main(["--isa", "rv32im", "--mul", "radix4", "--image", str(image(PROGRAMS["mul_ops"])),
          "--stats", str(stats)])
    kv = _kv(stats.read_text())
    assert kv["config"] == "RV32IM(radix-4)"
    assert int(kv["stall.mul"]) == 10 * 17


@pytest.mark.parametrize("source,code", [
    (PROGRAMS["guest_failure"], EXIT_GUEST_FAILURE),
    ("loop: j loop", EXIT_TIMEOUT),
    (".word 0xffffffff", EXIT_ILLEGAL),
    ("li t0, 0x50000000\nlw t0, 0(t0)", EXIT_BUS_ERROR),
    ("ecall", EXIT_ECALL),
    ("ebreak", EXIT_EBREAK),
])
def test_exit_codes(image, source, code, capsys):
    assert main(["--image", str(image(source)), "--max-cycles", "200"]) == code
    assert capsys.readouterr().err  # report goes to stderr without --stats


def test_rv32i_rejects_m_code(image):
    assert main(["--isa", "rv32i", "--image", str(image("mul a0, a0, a0"))]) == EXIT_ILLEGAL


def test_missing_image_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--image", "/definitely/not/here.bin"])
    assert exc.value.code == EXIT_USAGE
    assert "no such file" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [], ["--isa", "rv64"], ["--mul", "wallace"], ["--freq", "0"], ["--imem-size", "1000"],
    ["--compare", "rv32i:bogus"], ["--compare", "rv32i:rv32im-dsp", "--image-a", "x"],
])
def test_argument_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == EXIT_USAGE


def test_oversized_image_is_usage_error(tmp_path):
    path = tmp_path / "big.bin"
    path.write_bytes(bytes(4096))
    with pytest.raises(SystemExit) as exc:
        main(["--image", str(path), "--imem-size", "1K"])
    assert exc.value.code == EXIT_USAGE


def test_trace_file(image, tmp_path):
    trace = tmp_path / "t.txt"
    stats = tmp_path / "s.txt"
    main(["--image", str(image(PROGRAMS["mul_chain"])), "--trace", str(trace),
          "--stats", str(stats)])
    lines = trace.read_text().splitlines()
    assert len(lines) == int(_kv(stats.read_text())["cycles"])
    assert any("MUL[2]" in line for line in lines)


def test_load_base_and_freq(tmp_path, capsys):
    path = tmp_path / "ebreak.bin"
    path.write_bytes(b"\x73\x00\x10\x00")
    stats = tmp_path / "s.txt"
    assert main(["--image", str(path), "--load-base", "0x0", "--freq", "50",
                 "--stats", str(stats)]) == EXIT_EBREAK
    assert _kv(stats.read_text())["freq_mhz"] == "50"


def test_compare_prints_gain(image, capsys):
    a = image(PROGRAMS["counted_loop"], "a.bin")
    b = image(PROGRAMS["counted_loop"], "b.bin")
    code = main(["--compare", "rv32i:rv32im-dsp", "--image-a", str(a), "--image-b", str(b)])
    assert code == EXIT_OK
    out = capsys.readouterr()
    gain = float(out.out.strip().split("=")[1])
    assert gain == pytest.approx(162 / 164, rel=1e-6)
    assert "performance gain of RV32IM(DSP) over RV32I" in out.err


def test_frequency_env_override(image, tmp_path, monkeypatch):
    monkeypatch.setenv("RVCOREP_FREQ_RV32IM", "81")
    stats = tmp_path / "s.txt"
    main(["--image", str(image("nop\nebreak")), "--stats", str(stats)])
    assert _kv(stats.read_text())["freq_mhz"] == "81"


def test_console_entry_point(image):
    proc = subprocess.run([sys.executable, "-m", "rvcorep.cli", "--image",
                           str(image(HELLO))], capture_output=True)
    assert proc.returncode == 0
    assert proc.stdout == b"hi\n"
    assert b"cycles=" in proc.stderr
