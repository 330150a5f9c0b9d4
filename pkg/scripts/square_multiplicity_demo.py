"""Degenerate clusters on the unit square.

Prints the mode matrices of the double cluster ``(1,2)/(2,1)`` for three
device layouts and the resulting verdicts under both K readings, next to
the finite-difference verdict.
"""

from pathlib import Path

import numpy as np

from outstab.config import load_config
from outstab.report import analyze, oracle_check

CONFIGS = Path(__file__).parent / "configs"
CASES = ["square_single.toml", "square_double.toml", "square_symmetric_sensor.toml"]


def main() -> None:
    np.set_printoptions(precision=5, suppress=True)
    for name in CASES:
        cfg = load_config(CONFIGS / name)
        rep = analyze(cfg)
        a = rep.mode(2)
        mm = rep.mode_matrices[2]
        doc = oracle_check(cfg, with_trajectory=False)
        print(f"== {name}")
        print(f"   cluster 2: mu={a.mu:.5f} modes={a.mode_indices} rank B={a.rank_B}")
        print(f"   B_2 =\n{mm.B}\n   T_2 =\n{mm.T}")
        print(f"   K literal={rep.K_set('literal')} refined={rep.K_set('refined')}")
        print(
            f"   verdict literal={rep.verdict_literal} refined={rep.verdict_refined} "
            f"oracle={doc['verdict_oracle']} agreement={doc['agreement']}"
        )
        print(f"   approx controllability: {rep.approx_controllability.as_dict()}")


if __name__ == "__main__":
    main()
