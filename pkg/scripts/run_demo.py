"""End-to-end demo: compress a seeded 16x16 token grid and print the report.

Usage: python scripts/run_demo.py [seed]
"""

import sys

import numpy as np

from tokcomp import CompressionSchedule, TokenGrid, run_experiment
from tokcomp.toymodel import ToyModelConfig


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    grid = TokenGrid.from_data(np.random.default_rng(seed).normal(size=(16, 16, 32)))
    cfg = ToyModelConfig(d=32, heads=4, seed=seed, text_len=8)
    sched = CompressionSchedule(
        enc_layers=6, merge_pairs=((0, 1), (2, 3), (4, 5)), m=2,
        llm_layers=12, l0=6, l_delta=3, projector_factor=2,
    )
    report = run_experiment(grid, None, cfg, sched)

    print(f"{'stage':8s} {'layer':>5s} {'visual':>6s} {'text':>4s} {'base':>5s}")
    for e in report.per_layer_counts:
        print(f"{e.stage:8s} {e.layer:5d} {e.visual:6d} {e.text:4d} {e.base_visual:5d}")
    print()
    print(f"retention ratio   {report.retention_ratio:.4f}")
    print(f"pruning ratio     {report.pruning_ratio:.4f}")
    print(f"flops base        {report.flops_base:,}")
    print(f"flops compressed  {report.flops_compressed:,}")
    print(f"flops ratio       {report.flops_compressed / report.flops_base:.4f}")
    print(f"similarity ops    {report.similarity_ops:,}")
    print(f"total wall time   {report.timings_ms['total_ms']:.1f} ms")


if __name__ == "__main__":
    main()
