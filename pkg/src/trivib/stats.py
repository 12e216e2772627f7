"""Spectral-fluctuation analysis: unfolding, NNSD, and Delta3 rigidity.

Delta3 over an interval is evaluated exactly: the staircase moments are
piecewise-analytic between level positions and the best-fit line solves the
2x2 normal equations, so there is no quadrature error. The value is invariant
under affine maps of the energy axis, which is also how windows specified in
mean-spacing units are reduced to plain intervals.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

UNFOLD_METHODS = ("none", "polynomial", "local")

#: Delta3 expectations quoted for L = 100 windows.
POISSON_DELTA3_SLOPE = 1.0 / 15.0
GOE_DELTA3_AT_100 = 0.46
_GOE_CAL = GOE_DELTA3_AT_100 - np.log(100.0) / np.pi ** 2


def poisson_delta3_reference(L):
    """Random (uncorrelated) level expectation L/15."""
    return np.asarray(L, float) * POISSON_DELTA3_SLOPE


def goe_delta3_reference(L):
    """Logarithmic GOE curve calibrated through 0.46 at L = 100 (plot aid)."""
    return np.log(np.asarray(L, float)) / np.pi ** 2 + _GOE_CAL


def _check_monotone(levels):
    levels = np.asarray(levels, float)
    bad = np.nonzero(np.diff(levels) <= 0)[0]
    if bad.size:
        pairs = ", ".join(
            f"({i}:{levels[i]:g}, {i + 1}:{levels[i + 1]:g})" for i in bad[:8])
        raise ValueError(f"levels are not strictly increasing at {pairs}")
    return levels


@dataclass
class UnfoldedLevels:
    original: np.ndarray
    unfolded: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    @property
    def spacings(self):
        return np.diff(self.unfolded)


def unfold(levels, method: str = "polynomial", degree: int = 3,
           window: int = 100) -> UnfoldedLevels:
    """Monotone map to unit mean spacing.

    Methods: "none" (global rescale only), "polynomial" (staircase fit of the
    given degree), "local" (median spacing over a sliding window of `window`
    levels).
    """
    e = _check_monotone(levels)
    n = e.size
    if n < 10:
        raise ValueError("need at least 10 levels to unfold")
    if method not in UNFOLD_METHODS:
        raise ValueError(f"unknown unfolding method {method!r}")

    if method == "none":
        u = e.copy()
    elif method == "polynomial":
        counts = np.arange(n) + 0.5
        # scale the abscissa to [-1, 1] for a well-conditioned fit
        x = 2.0 * (e - e[0]) / (e[-1] - e[0]) - 1.0
        coef = np.polynomial.polynomial.polyfit(x, counts, degree)
        u = np.polynomial.polynomial.polyval(x, coef)
        if np.any(np.diff(u) <= 0):
            raise ValueError(
                "polynomial staircase fit is not monotone over the levels; "
                "lower the degree")
    else:
        gaps = np.diff(e)
        u = np.empty(n)
        u[0] = 0.0
        half = max(window // 2, 2)
        for i in range(n - 1):
            lo = max(0, i - half)
            hi = min(n - 1, i + half)
            med = np.median(gaps[lo:hi])
            u[i + 1] = u[i] + gaps[i] / med

    mean_spacing = (u[-1] - u[0]) / (n - 1)
    u = u / mean_spacing
    return UnfoldedLevels(original=e, unfolded=u, method=method,
                          params={"degree": degree, "window": window})


# -- nearest-neighbor spacing distribution -----------------------------------

def wigner_pdf(s):
    s = np.asarray(s, float)
    return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s * s)


def wigner_cdf(s):
    s = np.asarray(s, float)
    return 1.0 - np.exp(-0.25 * np.pi * s * s)


def poisson_pdf(s):
    return np.exp(-np.asarray(s, float))


def poisson_cdf(s):
    return 1.0 - np.exp(-np.asarray(s, float))


def _ks_distance(samples, cdf):
    s = np.sort(samples)
    n = s.size
    F = cdf(s)
    lo = np.max(F - np.arange(n) / n)
    hi = np.max((np.arange(n) + 1) / n - F)
    return float(max(lo, hi))


@dataclass
class NNSDResult:
    bin_edges: np.ndarray
    density: np.ndarray
    poisson_curve: np.ndarray
    wigner_curve: np.ndarray
    sse_poisson: float
    sse_wigner: float
    ks_poisson: float
    ks_wigner: float
    better: str

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def integral(self):
        return float(np.sum(self.density * np.diff(self.bin_edges)))


def nnsd(u: UnfoldedLevels, bins: int = 30) -> NNSDResult:
    """Spacing histogram with zero-parameter Poisson and Wigner comparisons."""
    spacings = u.spacings if isinstance(u, UnfoldedLevels) else np.diff(np.asarray(u))
    if spacings.size < 49:
        raise ValueError("need at least 50 levels for a spacing histogram")
    density, edges = np.histogram(spacings, bins=bins,
                                  range=(0.0, float(spacings.max())),
                                  density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    pc = poisson_pdf(centers)
    wc = wigner_pdf(centers)
    sse_p = float(np.sum((density - pc) ** 2))
    sse_w = float(np.sum((density - wc) ** 2))
    ks_p = _ks_distance(spacings, poisson_cdf)
    ks_w = _ks_distance(spacings, wigner_cdf)
    return NNSDResult(
        bin_edges=edges, density=density, poisson_curve=pc, wigner_curve=wc,
        sse_poisson=sse_p, sse_wigner=sse_w, ks_poisson=ks_p, ks_wigner=ks_w,
        better="poisson" if ks_p <= ks_w else "wigner")


# -- Delta3 rigidity ----------------------------------------------------------

def delta3(levels, interval) -> float:
    """Least-squares staircase deviation over an energy interval (exact).

    The interval is mapped to [0, 1] (the value is affine invariant); the
    staircase moments and the optimal straight line are evaluated in closed
    form between level positions.
    """
    e = np.asarray(levels, float)
    x0, x1 = float(interval[0]), float(interval[1])
    if not x0 < x1:
        raise ValueError("empty interval")
    t = (e[(e > x0) & (e <= x1)] - x0) / (x1 - x0)
    k = t.size
    if k < 2:
        raise ValueError("interval must contain at least 2 levels")
    t = np.sort(t)
    j = np.arange(1, k + 1)
    I0 = k - np.sum(t)
    I1 = 0.5 * (k - np.sum(t * t))
    I2 = k * k - np.sum((2 * j - 1) * t)
    a = 12.0 * I1 - 6.0 * I0
    b = I0 - 0.5 * a
    val = I2 - 2.0 * a * I1 - 2.0 * b * I0 + a * a / 3.0 + a * b + b * b
    return float(max(val, 0.0))


def sliding_delta3(levels, window: int = 100, step: int = 10):
    """Delta3 over consecutive windows of `window` levels.

    Returns (center energies, values); each value sits at the midpoint of its
    window's energy span.
    """
    e = _check_monotone(levels)
    n = e.size
    if n < window:
        raise ValueError(f"need at least {window} levels")
    centers, values = [], []
    for start in range(0, n - window + 1, step):
        span = (e[start], e[start + window - 1])
        centers.append(0.5 * (span[0] + span[1]))
        values.append(delta3(e, span))
    return np.asarray(centers), np.asarray(values)


def averaged_delta3(levels, e_range, L_values, step_fraction: float = 0.5):
    """Mean and rms of Delta3(L) over windows sliding through an energy range.

    L is measured in mean level spacings of the range. Returns a dict with
    the L grid, means, rms errors, window counts, and the Poisson/GOE
    reference curves.
    """
    e = _check_monotone(levels)
    lo, hi = float(e_range[0]), float(e_range[1])
    sel = e[(e >= lo) & (e <= hi)]
    L_values = np.asarray(L_values, float)
    if sel.size < max(L_values) + 1:
        raise ValueError("energy range holds fewer levels than max(L)")
    mean_spacing = (sel[-1] - sel[0]) / (sel.size - 1)
    means, rms, counts = [], [], []
    for L in L_values:
        width = L * mean_spacing
        step = max(width * step_fraction, 1e-300)
        vals = []
        x = sel[0]
        while x + width <= sel[-1] + 1e-12 * width:
            try:
                vals.append(delta3(sel, (x, x + width)))
            except ValueError:
                pass
            x += step
        if not vals:
            raise ValueError(f"no usable window of L={L} in range")
        v = np.asarray(vals)
        means.append(v.mean())
        rms.append(v.std())
        counts.append(v.size)
    return {
        "L": L_values,
        "mean": np.asarray(means),
        "rms": np.asarray(rms),
        "windows": np.asarray(counts),
        "poisson_reference": poisson_delta3_reference(L_values),
        "goe_reference": goe_delta3_reference(L_values),
    }


# -- plot-data output ---------------------------------------------------------

def write_nnsd_csv(path, result: NNSDResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "density", "poisson", "wigner"])
        for row in zip(result.bin_centers, result.density,
                       result.poisson_curve, result.wigner_curve):
            w.writerow([f"{x:.10e}" for x in row])


def write_sliding_csv(path, centers, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["center_energy", "delta3"])
        for c, v in zip(centers, values):
            w.writerow([f"{c:.12e}", f"{v:.10e}"])


def write_averaged_csv(path, avg: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "delta3_mean", "delta3_rms", "windows",
                    "poisson_reference", "goe_reference"])
        for row in zip(avg["L"], avg["mean"], avg["rms"], avg["windows"],
                       avg["poisson_reference"], avg["goe_reference"]):
            w.writerow([f"{row[0]:g}", f"{row[1]:.10e}", f"{row[2]:.10e}",
                        int(row[3]), f"{row[4]:.10e}", f"{row[5]:.10e}"])


def write_summary_json(path, summary: dict):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1, default=float)
