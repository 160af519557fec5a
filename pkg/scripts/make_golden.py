"""Regenerate tests/fixtures/admm_golden_n20.json from the current ADMM code.

Run only after an intentional change to the iteration; the file pins the
initial state and the first five sweeps on the N=20 fixture instance.
"""

import json
from pathlib import Path

from emsopt import admm, problem

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def snapshot(state):
    return {k: [float(v) for v in getattr(state, k)] for k in ("u", "x", "zeta", "lambda1", "lambda2")}


def main():
    inst = problem.load(FIXTURES / "instance_n20.json")
    cfg = admm.AdmmConfig()
    factor = admm.precompute_zeta_factor(inst, cfg.rho1, cfg.rho2)
    state = admm.initialize(inst)
    doc = {"initial": snapshot(state), "iterations": []}
    for _ in range(5):
        state = admm.iterate_reference(inst, state, factor, cfg)
        doc["iterations"].append(snapshot(state) | {"r_p": state.r_p, "r_d": state.r_d})
    (FIXTURES / "admm_golden_n20.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
