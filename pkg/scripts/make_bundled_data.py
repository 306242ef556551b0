#!/usr/bin/env python3
"""Regenerate the bundled example data and its committed truth file.

Writes into src/semvb/data/:
  visual_tests_spec.json   one factor, three indicators
  visual_tests.csv         301 rows simulated from plausible test-score
                           parameters (seeded; byte-stable across runs)
  visual_tests_truths.json posterior means from a long Gibbs run on that
                           data; the simulation study's generating truth
"""

import json
from pathlib import Path

import numpy as np

from semvb import (
    ChainConfig,
    FactorSpec,
    TrueParameters,
    chain_summary,
    gibbs_single,
    simulate,
)
from semvb._rng import substream

OUT = Path(__file__).resolve().parents[1] / "src" / "semvb" / "data"

GENERATOR = TrueParameters(
    nu=[4.94, 6.09, 2.25],
    lam=[1.0, 0.55, 0.73],
    psi=[0.55, 1.13, 0.84],
    sigma2=0.81,
)
SPEC = FactorSpec(names=("visual",), blocks=(("x1", "x2", "x3"),))
N = 301
DATA_SEED = 19390301
GIBBS_SEED = 20210604


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "visual_tests_spec.json", "w", encoding="utf-8") as fh:
        json.dump(SPEC.to_dict(), fh, indent=1)

    data = simulate(GENERATOR, SPEC, N, substream(DATA_SEED, "bundled-data"))
    frame = data.to_frame().round(6)
    frame.to_csv(OUT / "visual_tests.csv", index=False)

    cfg = ChainConfig(iterations=30000, burn_in=15000, chains=1, seed=GIBBS_SEED)
    draws = gibbs_single(data, cfg=cfg)
    means = {r.parameter: r.point for r in chain_summary(draws)}
    truths = {
        "nu": [means[f"nu[{j}]"] for j in (1, 2, 3)],
        "lambda": [1.0, means["lambda[2]"], means["lambda[3]"]],
        "psi": [means[f"psi[{j}]"] for j in (1, 2, 3)],
        "sigma2": means["sigma2"],
    }
    with open(OUT / "visual_tests_truths.json", "w", encoding="utf-8") as fh:
        json.dump(truths, fh, indent=1)
    print("generator:", GENERATOR.to_dict())
    print("committed truths:", json.dumps(truths, indent=1))


if __name__ == "__main__":
    main()
