"""Closed-loop decay against the verdict.

For a stabilizable configuration the modal feedback (sigma = 1) is applied
to a mixed initial state; otherwise the initial state is the witness
direction, whose output cannot decay whatever the feedback.
"""

import argparse
from pathlib import Path

from outstab.config import load_config
from outstab.report import simulate, simulation_clusters
from outstab.simulator import InitialState

CONFIGS = Path(__file__).parent / "configs"


def witness_state(cfg, res):
    n, _ = res.report.witnesses_refined[0]
    members = next(c for c in simulation_clusters(cfg) if c.cluster_index == n).members
    w = res.report.mode(n).observable_uncontrollable_basis[:, 0]
    return InitialState.combination({m.mode_indices: float(v) for m, v in zip(members, w)})


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", type=Path, default=sorted(CONFIGS.glob("*.toml")))
    args = ap.parse_args()
    for path in args.configs:
        cfg = load_config(path)
        clusters = simulation_clusters(cfg)
        x0 = InitialState.combination({m.mode_indices: 1.0 for c in clusters[:6] for m in c.members})
        res = simulate(cfg, x0)
        label = "mixed state"
        if not res.report.verdict_refined:
            res = simulate(cfg, witness_state(cfg, res))
            label = "witness state"
        print(f"{path.name:32s} stabilizable={res.report.verdict_refined!s:5s} {label:14s} rate={res.rate:+.4f}")


if __name__ == "__main__":
    main()
