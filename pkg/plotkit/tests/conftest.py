"""Shared fixtures: benchmark outputs generated through the oacbench CLI.

The figure package reads only CSV files, so the fixtures are produced the
same way a user would produce them, by running the benchmark command line
in a subprocess.
"""

import subprocess
import sys

import pytest

FREE_SCENARIO = """\
name: free
chain: planar2
duration: 1.0
reference:
  target: [1.2, 1.1, 0.0]
"""


def bench(*args) -> None:
    proc = subprocess.run(
        [sys.executable, "-m", "oacbench.cli", *args],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr


@pytest.fixture(scope="session")
def fixtures(tmp_path_factory):
    """Directory with traces and metrics for every figure kind.

    - drdo/: full circle-tracking run without avoidance (10 s)
    - srdo/: avoidance run with obstacle contact plus its metrics.csv
    - free/: obstacle-free run, so repulsion stays identically zero
    """
    root = tmp_path_factory.mktemp("bench_outputs")
    bench(
        "run", "--scenario", "drdo", "--controller", "baseline",
        "--out", str(root / "drdo"),
    )
    bench(
        "run", "--scenario", "srdo", "--controller", "escobedo",
        "--duration", "4", "--out", str(root / "srdo"),
    )
    bench("analyze", "--trace", str(root / "srdo" / "trace.csv"))
    scenario = root / "free.yaml"
    scenario.write_text(FREE_SCENARIO)
    bench("run", "--scenario", str(scenario), "--out", str(root / "free"))
    return root
