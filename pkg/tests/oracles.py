"""Slow, independent reference implementations used as test oracles."""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np


def blur_dense(img, sigma):
    """Direct 2-D convolution with the truncated, normalised Gaussian; mirrored borders."""
    img = np.asarray(img, dtype=np.float64)
    r = int(math.ceil(4 * sigma))
    k = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    k2 = np.outer(k, k)
    k2 /= k2.sum()
    p = np.pad(img, r, mode="symmetric")
    h, w = img.shape
    out = np.zeros((h, w))
    for dy in range(2 * r + 1):
        for dx in range(2 * r + 1):
            out += k2[dy, dx] * p[dy:dy + h, dx:dx + w]
    return out


def edt_brute(mask):
    """Distance from every foreground pixel to the nearest background pixel, by full scan."""
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros(mask.shape)
    fg = np.argwhere(mask)
    bg = np.argwhere(~mask)
    if len(fg) == 0:
        return out
    if len(bg) == 0:
        return np.full(mask.shape, math.hypot(*mask.shape))
    d2 = ((fg[:, None, :] - bg[None, :, :]) ** 2).sum(-1)
    out[fg[:, 0], fg[:, 1]] = np.sqrt(d2.min(axis=1))
    return out


def otsu_exhaustive(values, nbins=256):
    """Try every split of the histogram; exact between-class variance with fractions."""
    values = np.asarray(values, dtype=np.float64).ravel()
    counts, edges = np.histogram(values, bins=nbins, range=(values.min(), values.max()))
    counts = [int(c) for c in counts]
    n = sum(counts)
    best, best_k = None, None
    for k in range(nbins - 1):
        n0 = sum(counts[:k + 1])
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            score = Fraction(0)
        else:
            mu0 = Fraction(sum(i * counts[i] for i in range(k + 1)), n0)
            mu1 = Fraction(sum(i * counts[i] for i in range(k + 1, nbins)), n1)
            score = Fraction(n0, n) * Fraction(n1, n) * (mu0 - mu1) ** 2
        if best is None or score > best:
            best, best_k = score, k
    return float(edges[best_k + 1])


def peaks_greedy(a, min_distance, threshold):
    """Window maxima by explicit comparison, then greedy suppression by value order."""
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape
    half = int(math.floor(min_distance))
    cands = []
    for y in range(h):
        for x in range(w):
            v = a[y, x]
            if v < threshold:
                continue
            nb = a[max(y - half, 0):y + half + 1, max(x - half, 0):x + half + 1].ravel()
            if all(v >= u for u in nb):
                cands.append((-v, y * w + x, x, y))
    cands.sort()
    kept = []
    for _, _, x, y in cands:
        if all(math.hypot(x - kx, y - ky) >= min_distance for kx, ky in kept):
            kept.append((x, y))
    return np.array(kept, dtype=np.int64).reshape(-1, 2)


def flood_oracle(elev, markers, mask):
    """Priority flood with a plain list frontier and linear-scan minimum selection."""
    elev = np.asarray(elev, dtype=np.float64)
    h, w = elev.shape
    lab = np.where(mask, markers, 0).astype(np.int64)
    frontier = []
    order = 0
    for y in range(h):
        for x in range(w):
            if lab[y, x]:
                frontier.append((elev[y, x], order, y, x))
                order += 1
    offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    while frontier:
        i = min(range(len(frontier)), key=lambda j: frontier[j][:2])
        _, _, y, x = frontier.pop(i)
        for dy, dx in offsets:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and lab[yy, xx] == 0:
                lab[yy, xx] = lab[y, x]
                frontier.append((elev[yy, xx], order, yy, xx))
                order += 1
    return lab


def nearest_centroid_classes(xy, class_id, h, w, radius):
    """Class of the nearest centroid within ``radius`` at every pixel (lower index on ties)."""
    out = np.zeros((h, w), dtype=np.int64)
    if len(xy) == 0:
        return out
    yy, xx = np.mgrid[0:h, 0:w]
    d2 = np.stack([(xx - x) ** 2 + (yy - y) ** 2 for x, y in xy])
    owner = np.argmin(d2, axis=0)
    inside = d2.min(axis=0) <= radius ** 2
    out[inside] = np.asarray(class_id)[owner[inside]]
    return out


def bilinear_sample(img, sy, sx):
    """Bilinear value of a 2-D array at fractional ``(row, col)``, edge-clamped."""
    h, w = img.shape
    y0 = min(int(math.floor(sy)), h - 2) if h > 1 else 0
    x0 = min(int(math.floor(sx)), w - 2) if w > 1 else 0
    fy = sy - y0 if h > 1 else 0.0
    fx = sx - x0 if w > 1 else 0.0
    y1 = min(y0 + 1, h - 1)
    x1 = min(x0 + 1, w - 1)
    top = (1 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1 - fx) * img[y1, x0] + fx * img[y1, x1]
    return (1 - fy) * top + fy * bot


def crop_upsample_oracle(tissue, x0, y0, ew, eh, out_h, out_w):
    """Cropped window upsampled with corner-aligned bilinear sampling, pixel by pixel."""
    c = tissue.shape[0]
    out = np.zeros((c, out_h, out_w))
    for i in range(out_h):
        sy = y0 + (i * (eh - 1) / (out_h - 1) if out_h > 1 else (eh - 1) / 2)
        for j in range(out_w):
            sx = x0 + (j * (ew - 1) / (out_w - 1) if out_w > 1 else (ew - 1) / 2)
            for k in range(c):
                win = tissue[k, y0:y0 + eh, x0:x0 + ew]
                out[k, i, j] = bilinear_sample(win, sy - y0, sx - x0)
    return out


def max_matching(pred, gt, radius):
    """Maximum number of one-to-one pairs within ``radius``, by exhaustive search."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    ok = [[math.hypot(*(p - g)) <= radius for g in gt] for p in pred]

    @lru_cache(maxsize=None)
    def best(i, used):
        if i == len(pred):
            return 0
        result = best(i + 1, used)
        for j in range(len(gt)):
            if ok[i][j] and not used >> j & 1:
                result = max(result, 1 + best(i + 1, used | 1 << j))
        return result

    return best(0, 0)


def candidate_components_are_stars(pred, gt, radius):
    """True when every connected component of the within-radius graph has one pred or one gt."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    n = len(pred)
    parent = list(range(n + len(gt)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            if math.hypot(*(p - g)) <= radius:
                parent[find(i)] = find(n + j)
    comps = {}
    for v in range(n + len(gt)):
        comps.setdefault(find(v), [0, 0])[v >= n] += 1
    return all(min(c) <= 1 for c in comps.values())


def finite_difference(f, x, h=1e-6):
    """Central-difference gradient of scalar ``f`` at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g
