"""Independent reference computations used to freeze expected values."""
import cmath
import math

import numpy as np


def direct_dft2(plane):
    """O(N^2) direct summation of the unnormalized 2D DFT of one (H, W) plane."""
    plane = np.asarray(plane)
    h, w = plane.shape
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            acc = 0j
            for x in range(h):
                for y in range(w):
                    acc += plane[x, y] * cmath.exp(-2j * math.pi * (u * x / h + v * y / w))
            out[u, v] = acc
    return out


def direct_idft2(plane):
    plane = np.asarray(plane)
    h, w = plane.shape
    out = np.zeros((h, w), dtype=complex)
    for x in range(h):
        for y in range(w):
            acc = 0j
            for u in range(h):
                for v in range(w):
                    acc += plane[u, v] * cmath.exp(2j * math.pi * (u * x / h + v * y / w))
            out[x, y] = acc / (h * w)
    return out


def brute_band(h, w, rho):
    """Enumerate the shifted grid, keep the Chebyshev ball, map back to unshifted indices."""
    r = math.floor(rho * min(h, w) / 2 + 1e-12)
    keep = set()
    for i in range(h):
        for j in range(w):
            uc, vc = i - h // 2, j - w // 2
            if max(abs(uc), abs(vc)) <= r:
                keep.add(((uc) % h, (vc) % w))
    return sorted(keep)


def finite_difference(f, arr, h=1e-5):
    """Central differences of scalar f() w.r.t. every entry of a mutable array."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        up = f()
        arr[idx] = old - h
        down = f()
        arr[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad
