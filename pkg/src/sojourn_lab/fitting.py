"""Small regression helpers shared by the analysis modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass
class PowerLawFit:
    exponent: float
    prefactor: float
    rvalue: float
    stderr: float


def power_law_fit(x, y) -> PowerLawFit:
    """Least-squares fit of ``log|y| = log A + p log x``."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs at least two positive samples")
    res = stats.linregress(np.log(x), np.log(y))
    return PowerLawFit(float(res.slope), float(np.exp(res.intercept)), float(res.rvalue), float(res.stderr))


def richardson(h, values, order: float, terms: int = 1):
    """Extrapolate ``values(h) = L + sum_j a_j h^(j*order)`` to ``h = 0``.

    Uses a least-squares fit with ``terms`` correction terms, so more
    samples than unknowns are allowed.  Works for complex values.
    """
    h = np.asarray(h, dtype=float)
    v = np.asarray(values)
    if h.size < terms + 1:
        raise ValueError("not enough samples for the requested number of terms")
    cols = [np.ones_like(h)] + [h ** (order * j) for j in range(1, terms + 1)]
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A.astype(v.dtype if np.iscomplexobj(v) else float), v, rcond=None)
    return coef[0]


def richardson_table(h, values, order: float):
    """Successive two-point Richardson eliminations (last row is the estimate)."""
    h = np.asarray(h, dtype=float)
    rows = [np.asarray(values, dtype=complex)]
    for j in range(1, h.size):
        prev = rows[-1]
        ratio = (h[:-j] / h[j:]) ** (order * j)
        rows.append((ratio * prev[1:] - prev[:-1]) / (ratio - 1.0))
    return rows
