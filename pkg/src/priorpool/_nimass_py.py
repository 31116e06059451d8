"""NumPy fallback for the grid-posterior kernel; see ``_nimass.pyx``."""

import numpy as np


def ni_mass(row, col, l2, l2c, y2, ny2, cut):
    """Return (ni_fraction, max_log_weight) for one (y1, y2) outcome."""
    logw = row[:, None] + col[None, :] + y2 * l2 + ny2 * l2c
    mx = float(logw.max())
    if mx == -np.inf:
        return 0.0, mx
    w = np.exp(logw - mx)
    tot = float(w.sum())
    ni = float(w[:, :cut].sum())
    return ni / tot, mx
