"""The command-line workflow end to end, driven from Python.

1. build a compressed kernel cache once,
2. check the numerical invariants on a tiny grid,
3. solve the shorted microstrip in ``microstrip.json`` from the cache,
   at two frequencies, writing CSV, JSON and VTK outputs.

The same steps from a shell::

    voxind cache-build --nmax 32 --out kernels.svxt
    voxind verify
    voxind solve demos/microstrip.json --cache kernels.svxt --outdir out

    python3 demos/cli_workflow.py
"""
import tempfile
from pathlib import Path

from voxind.cli import main

HERE = Path(__file__).parent


def run(*argv):
    print("$ voxind", " ".join(argv))
    code = main(list(argv))
    print(f"(exit {code})\n")
    return code


def show(path, lines=6):
    print(f"--- {path.name}")
    print("\n".join(path.read_text().splitlines()[:lines]))


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cache = tmp / "kernels.svxt"
        run("cache-build", "--nmax", "32", "--tol", "1e-8", "--out", str(cache))
        run("verify")
        run("solve", str(HERE / "microstrip.json"), "--cache", str(cache), "--outdir", str(tmp / "out"))
        for name in ("microstrip_report.csv", "microstrip_stats.json", "microstrip_timings.json"):
            show(tmp / "out" / name, 12)
        vtk = tmp / "out" / "microstrip_current_line.vtk"
        print(f"--- {vtk.name}: {vtk.stat().st_size} bytes, open in ParaView")
