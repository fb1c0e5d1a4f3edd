"""Similarity-op scaling of lane-wise 2D matching vs flat 1D matching.

Fits log-log slopes over a sweep of token counts; the 2D pass should land
near 1.5 and the 1D pass at 2.0.
"""

import numpy as np

from tokcomp import similarity_op_count

SIZES = [64, 256, 1024, 4096, 16384]


def main():
    ops2 = [similarity_op_count(n, "2d") for n in SIZES]
    ops1 = [similarity_op_count(n, "1d") for n in SIZES]
    print(f"{'n':>7s} {'ops 2d':>12s} {'ops 1d':>12s} {'1d/2d':>8s}")
    for n, a, b in zip(SIZES, ops2, ops1):
        print(f"{n:7d} {a:12,d} {b:12,d} {b / a:8.1f}")
    logs = np.log(SIZES)
    print()
    print(f"2d exponent: {np.polyfit(logs, np.log(ops2), 1)[0]:.3f}")
    print(f"1d exponent: {np.polyfit(logs, np.log(ops1), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
