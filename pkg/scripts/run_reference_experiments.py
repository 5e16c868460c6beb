"""Run the two canonical stability experiments through the CLI.

Writes configs and results under ./reference_runs/: the nondegenerate
product model (quadratic stability, exponent 2) and the bifurcation-radius
model (quartic degeneracy, exponent 4), plus a covariance self-check.
"""

import json
import math
import os

from yamstab import cli

OUT_DIR = "reference_runs"
SUB = 0.8 / math.sqrt(3.0)
BIF = 1.0 / math.sqrt(3.0)


def write_config(name, experiment, r, **sampling):
    cfg = {
        "model": {"kind": "frank_product", "params": {"d": 5, "r": r}},
        "N": 256,
        "experiment": experiment,
        "seed": 1,
        "sampling": {"count": 3, **sampling},
        "output": os.path.join(OUT_DIR, name),
    }
    path = os.path.join(OUT_DIR, name + "_config.json")
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2)
    return path


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    runs = [
        ("quadratic_stability", "stability", SUB, {}),
        ("quartic_reduction", "lsred", BIF, {"directions": 2}),
        ("quartic_stability", "stability", BIF, {}),
        ("covariance_check", "covariance", SUB, {"count": 8}),
    ]
    for name, experiment, r, sampling in runs:
        path = write_config(name, experiment, r, **sampling)
        print(f"== {name}")
        code = cli.main([experiment, "--config", path])
        if code != 0:
            raise SystemExit(code)
    print(f"reports and tables written under {OUT_DIR}/")


if __name__ == "__main__":
    main()
