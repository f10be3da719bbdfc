"""Smoke test for the adaptor_lab_py extension.

Uses an installed module if present (e.g. after `maturin develop` in
crates/py); otherwise builds the cdylib with cargo and imports it from a
temporary directory.
"""

import importlib
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module(tmp: pathlib.Path):
    try:
        return importlib.import_module("adaptor_lab_py")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "adaptor-lab-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libadaptor_lab_py.so"
    shutil.copy(lib, tmp / "adaptor_lab_py.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("adaptor_lab_py")


def main() -> int:
    with tempfile.TemporaryDirectory() as d:
        tmp = pathlib.Path(d)
        lab = load_module(tmp)

        names = [name for name, _ in lab.list_scenarios()]
        assert len(names) >= 6, names
        for required in ("free", "self_similar_W", "cubic_nls_small"):
            assert required in names, required

        out = str(tmp / "runs")
        summary = lab.run_scenario("self_similar_W", out)
        assert summary["exit_code"] == 0, summary
        assert summary["run_id"].startswith("self_similar_W-")
        assert "validity window" in lab.report(summary["run_id"], out)

        negative = lab.run_scenario("negative_flipped_q", out)
        assert negative["exit_code"] == 1, negative

        try:
            lab.run_scenario("negative_focusing", out)
        except ValueError:
            pass
        else:
            raise AssertionError("focusing scenario must be rejected")

        times = [1.0 + 0.5 * k for k in range(40)]
        slope, width, samples = lab.fit_decay_rate(times, [t ** -1.5 for t in times])
        assert math.isclose(slope, -1.5, abs_tol=1e-12), slope
        assert samples == 40 and width < 1e-9

    print("python smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
