#!/usr/bin/env python3
"""Walks the U-Net layer by layer and prints activation shapes and parameter
counts. Independent of the Rust implementation; used to freeze expected values
in the test suite.

    python3 tools/shape_enumerator.py 64 4 32 4 [cap]
"""
import sys


def walk(size, depth, base, k, cap=512):
    ch = lambda i: min(cap, base * 2 ** i)
    side = size
    c = 1
    total = 0
    encoder = []
    for i in range(depth):
        out_c = ch(i)
        side //= 2
        weights = out_c * c * 4 * 4
        extra = 2 * out_c if side > 1 else out_c  # gamma+beta, or bias
        total += weights + extra
        encoder.append((out_c, side))
        c = out_c
    bottleneck = (c, side)
    skips = encoder[:-1]
    c = c + k
    for j in range(depth):
        last = j == depth - 1
        out_c = 1 if last else encoder[depth - 2 - j][0]
        weights = c * out_c * 4 * 4
        normalized = 0 < j < depth - 1
        extra = 2 * out_c if normalized else out_c
        total += weights + extra
        side *= 2
        c = out_c if last else out_c + encoder[depth - 2 - j][0]
    return bottleneck, skips, (1, side), total


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:]]
    b, skips, out, total = walk(*args)
    print("bottleneck (C, side):", b)
    print("skips:", skips)
    print("output:", out)
    print("parameters:", total)
