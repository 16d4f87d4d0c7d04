#!/usr/bin/env python3
"""Compare the admissible step sizes on the same paired drops."""
import argparse

from cellfree_ota.acceptance import BACKHAUL, OTA, acceptance_config
from cellfree_ota.evaluation.campaign import run_campaign


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--values", default="0.3,0.5,0.7")
    p.add_argument("--drops", type=int, default=50)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    for alpha in (float(x) for x in a.values.split(",")):
        cfg = acceptance_config(step_size=alpha, max_iter=a.iterations)
        rep = run_campaign(cfg, [BACKHAUL, OTA], drops=a.drops, workers=a.workers)
        curves = {alg: rep.mean_curve(alg) for alg in rep.algorithms}
        print(f"alpha={alpha}: " + ", ".join(
            f"{alg} i=5 {c[min(4, len(c) - 1)]:.1f} final {c[-1]:.1f}"
            for alg, c in curves.items()))


if __name__ == "__main__":
    main()
