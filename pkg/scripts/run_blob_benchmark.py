#!/usr/bin/env python3
"""Run the synthetic blob benchmark: samplers vs the fine-tune/upper bounds.

Prints a per-seed table of last-task accuracy for each approach plus summary
statistics and the per-seed win counts. Everything is seeded, so reruns
reproduce the table exactly.
"""

import argparse

import numpy as np

from pbes.benchmark import BLOB_SEEDS, last_accuracy, run_mode

APPROACHES = [
    ("pbes", "method", "pbes"),
    ("randp", "method", "randp"),
    ("herding", "method", "herding"),
    ("random", "method", "random"),
    ("finetune", "finetune", "pbes"),
    ("upperbound", "upperbound", "pbes"),
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=len(BLOB_SEEDS),
                        help="number of master seeds (default %(default)s)")
    parser.add_argument("--budget", type=int, default=40)
    args = parser.parse_args()
    seeds = list(range(args.seeds))

    table = {}
    for name, mode, sampler in APPROACHES:
        table[name] = [
            last_accuracy(run_mode(mode, seed, sampler=sampler, budget=args.budget))
            for seed in seeds
        ]
        print(f"finished {name}")

    header = "seed " + " ".join(f"{name:>10s}" for name, _, _ in APPROACHES)
    print("\n" + header)
    for i, seed in enumerate(seeds):
        cells = " ".join(f"{table[name][i]:10.3f}" for name, _, _ in APPROACHES)
        print(f"{seed:4d} {cells}")
    print("-" * len(header))
    means = " ".join(f"{np.mean(table[name]):10.3f}" for name, _, _ in APPROACHES)
    print(f"mean {means}")

    pbes = np.array(table["pbes"])
    print(f"\npbes >= random   on {int(np.sum(pbes >= np.array(table['random'])))}/{len(seeds)} seeds")
    print(f"pbes >= finetune on {int(np.sum(pbes >= np.array(table['finetune'])))}/{len(seeds)} seeds")
    best = np.vstack([table["pbes"], table["random"], table["finetune"]]).max(axis=0)
    print(f"upperbound >= all methods on {int(np.sum(np.array(table['upperbound']) >= best))}/{len(seeds)} seeds")


if __name__ == "__main__":
    main()
