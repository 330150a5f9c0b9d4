"""Randomized analyzer/oracle agreement over several seeds.

Usage::

    python scripts/run_agreement_suite.py --seeds 1 2 3 --trials 50 --trials-2d 10
"""

import argparse
import time
from collections import Counter

from outstab.suites import agreement_suite


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--trials", type=int, default=50, help="1-D configurations per seed")
    ap.add_argument("--trials-2d", type=int, default=10, help="square configurations per seed")
    ap.add_argument("--trajectory", action="store_true", help="also compare output trajectories")
    args = ap.parse_args()

    print(f"{'seed':>4} {'runs':>5} {'agree':>6} {'disagree':>9} {'inconcl':>8} {'not stab':>9} {'max dev':>9} {'time':>7}")
    for seed in args.seeds:
        t0 = time.perf_counter()
        outcomes = agreement_suite(seed, args.trials, args.trials_2d, trajectory=args.trajectory)
        elapsed = time.perf_counter() - t0
        tally = Counter(str(o.agreement) for o in outcomes)
        not_stab = sum(1 for o in outcomes if not o.document["verdict_refined"])
        devs = [o.document["trajectory_max_relative_deviation"] for o in outcomes]
        devs = [d for d in devs if d is not None]
        dev = f"{max(devs):.1e}" if devs else "-"
        print(
            f"{seed:>4} {len(outcomes):>5} {tally['True']:>6} {tally['False']:>9} "
            f"{tally['inconclusive']:>8} {not_stab:>9} {dev:>9} {elapsed:>6.1f}s"
        )
        for i, o in enumerate(outcomes):
            if o.agreement is False:
                print(f"     disagreement in run {i}: k={o.config.k:.4f} {o.config.domain.kind}")


if __name__ == "__main__":
    main()
