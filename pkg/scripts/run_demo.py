#!/usr/bin/env python3
"""End-to-end demo: exponents, region scan, solve, oscillation probe.

Runs the four bundled configs through the CLI and prints where the report
bundles land. Takes a few seconds on a laptop.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from plaplab.cli import main  # noqa: E402

HERE = Path(__file__).resolve().parent
RUNS = [
    ("exponent", "exponent_heat.json"),
    ("region", "region_singular.json"),
    ("solve", "solve_heat_singular.json"),
    ("probe", "probe_heat_singular.json"),
]


def run():
    for sub, cfg_name in RUNS:
        cfg = HERE / "configs" / cfg_name
        print(f"--- plaplab {sub} {cfg.name}")
        code = main([sub, str(cfg)])
        if code != 0:
            print(f"subcommand {sub} failed with exit code {code}", file=sys.stderr)
            return code
        out_dir = json.loads(cfg.read_text())["output_dir"]
        summary = json.loads((Path(out_dir) / "summary.json").read_text())
        if "predicted" in summary and "alpha" in summary.get("predicted", {}):
            print(f"    predicted alpha = {summary['predicted']['alpha']}")
        if "measured" in summary and "centers" in summary.get("measured", {}):
            c0 = summary["measured"]["centers"][0]
            print(f"    fitted slope at {c0['center_x']} = {c0['fitted_slope']}")
        print(f"    reports in {out_dir}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
