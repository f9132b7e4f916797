import runpy
import sys
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


def test_benchmark_runs_small(capsys, monkeypatch):
    monkeypatch.setattr(sys, "argv", [str(BENCH), "--sites", "2", "--repeat", "1"])
    runpy.run_path(str(BENCH), run_name="__main__")
    out = capsys.readouterr().out
    for kernel in ("hopping_coo", "lookup", "csr_matvec"):
        assert kernel in out
