#!/usr/bin/env python3
"""Extremum-seeking run with the stock parameter set, compensated and not.

Writes es_on_* / es_off_* CSV artifacts into the working directory and
prints the tail metrics side by side, parsed from the run summaries.
"""

import sys
from pathlib import Path

from measurefde.cli import main as cli_main


def _metric(prefix: str, key: str) -> str:
    for line in Path(f"{prefix}_summary.txt").read_text().splitlines():
        if line.startswith(f"# {key} = "):
            return line.split(" = ", 1)[1]
    return "n/a"


def run() -> int:
    code = cli_main(["es", "--preset", "table1", "--t-end", "200",
                     "--dt", "1e-3", "--tail-start", "150", "--out", "es_on"])
    code |= cli_main(["es", "--preset", "table1", "--t-end", "200",
                      "--dt", "1e-3", "--predictor", "off",
                      "--tail-start", "150", "--out", "es_off"])
    print("\ntail (t >= 150)          compensated   uncompensated")
    for key, label in (("theta_err", "|theta - theta*|"),
                       ("y_err", "|y - y*|"), ("u_abs", "|U|")):
        print(f"{label:<24} {_metric('es_on', key):>11}   "
              f"{_metric('es_off', key):>13}")
    print(f"{'min feasibility margin':<24} "
          f"{_metric('es_on', 'min_feas_margin'):>11}")
    return code


if __name__ == "__main__":
    sys.exit(run())
