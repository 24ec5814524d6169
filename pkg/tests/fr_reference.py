"""Loop-based reference implementation of the fidelity formula, kept
deliberately independent of the vectorized production path. Used by tests
as the brute-force oracle."""

from __future__ import annotations

import math

import numpy as np

C1 = 0.01 ** 2
C2 = 0.03 ** 2
CHROMA_RATE = 4.0
WINDOW = 8
STRIDE = 4


def to_planes(data):
    h, w = data.shape[:2]
    y = np.zeros((h, w))
    cb = np.zeros((h, w))
    cr = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            r, g, b = data[i, j]
            y[i, j] = 0.299 * r + 0.587 * g + 0.114 * b
            cb[i, j] = -0.168736 * r - 0.331264 * g + 0.5 * b
            cr[i, j] = 0.5 * r - 0.418688 * g - 0.081312 * b
    return y, cb, cr


def halve(plane):
    h, w = plane.shape
    h2, w2 = h // 2, w // 2
    out = np.zeros((h2, w2))
    for i in range(h2):
        for j in range(w2):
            out[i, j] = (
                plane[2 * i, 2 * j] + plane[2 * i + 1, 2 * j]
                + plane[2 * i, 2 * j + 1] + plane[2 * i + 1, 2 * j + 1]
            ) / 4.0
    return out


def window_stats(a, b, i0, j0):
    n = WINDOW * WINDOW
    xs = [a[i0 + di, j0 + dj] for di in range(WINDOW) for dj in range(WINDOW)]
    ys = [b[i0 + di, j0 + dj] for di in range(WINDOW) for dj in range(WINDOW)]
    mx = sum(xs) / n
    my = sum(ys) / n
    vx = sum((x - mx) ** 2 for x in xs) / n
    vy = sum((y - my) ** 2 for y in ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / n
    return mx, my, vx, vy, cov


def scale_score(yd, yr, cbd, cbr, crd, crr):
    h, w = yd.shape
    vals = []
    for i0 in range(0, h - WINDOW + 1, STRIDE):
        for j0 in range(0, w - WINDOW + 1, STRIDE):
            mx, my, vx, vy, cov = window_stats(yd, yr, i0, j0)
            vals.append(
                ((2 * mx * my + C1) * (2 * cov + C2))
                / ((mx * mx + my * my + C1) * (vx + vy + C2))
            )
    structural = min(max(sum(vals) / len(vals), 0.0), 1.0)
    total = 0.0
    for i in range(h):
        for j in range(w):
            total += abs(cbd[i, j] - cbr[i, j]) + abs(crd[i, j] - crr[i, j])
    chroma = 0.5 * total / (h * w)
    return structural * math.exp(-CHROMA_RATE * chroma)


def reference_fr_score(dist_data, ref_data):
    yd, cbd, crd = to_planes(dist_data)
    yr, cbr, crr = to_planes(ref_data)
    scores = []
    for _ in range(3):
        if min(yd.shape) < WINDOW:
            break
        scores.append(scale_score(yd, yr, cbd, cbr, crd, crr))
        yd, yr = halve(yd), halve(yr)
        cbd, cbr = halve(cbd), halve(cbr)
        crd, crr = halve(crd), halve(crr)
    prod = 1.0
    for s in scores:
        prod *= s
    return min(max(prod ** (1.0 / len(scores)), 0.0), 1.0)
