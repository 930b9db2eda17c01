"""Pure NumPy implementations of the inner loops.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop.
Channel outputs live on the lattice ``y_j = j * dy``.  An input ``g`` reaches
node ``j`` with probability proportional to

    exp(-(y_j - g)**2 / (2 sigma**2)) - exp(-radius**2 / (2 sigma**2))

for ``|y_j - g| < radius`` (zero elsewhere), normalized over the nodes.  The
shift by the value at the radius makes the weights continuous in ``g`` as
nodes enter and leave the support, so every cost built on them is smooth in
the channel input between and across lattice nodes.
"""
from __future__ import annotations

import numpy as np


def _node_weights(gvals, dy, sigma, radius):
    """First reachable node index and normalized weights for every input.

    Returns ``(jlo, w)`` with ``jlo`` of shape (K, N) and ``w`` of shape
    (K, N, W); ``w[..., m]`` belongs to node ``jlo + m``.
    """
    width = int(np.floor(2.0 * radius / dy)) + 2
    jlo = np.floor((gvals - radius) / dy).astype(np.int64) + 1
    d = (jlo[..., None] + np.arange(width)) * dy - gvals[..., None]
    floor_val = np.exp(-0.5 * (radius / sigma) ** 2)
    w = np.where(np.abs(d) < radius, np.maximum(np.exp(-0.5 * (d / sigma) ** 2) - floor_val, 0.0), 0.0)
    w /= w.sum(axis=-1, keepdims=True)
    return jlo, w


def channel_matrix(gvals, assoc, dy, sigma, radius, first_index, n_rows):
    """Likelihood of every lattice node given every source point.

    Parameters
    ----------
    gvals, assoc : ndarray, shape (K, N)
        Channel input of model ``k`` at source point ``n`` and its probability.
    dy : float
        Lattice spacing.
    sigma, radius : float
        Noise standard deviation and support half-width.
    first_index, n_rows : int
        Output rows cover lattice indices ``first_index .. first_index+n_rows-1``;
        mass falling outside is piled on the nearest edge row.

    Returns
    -------
    L : ndarray, shape (n_rows, N)
    """
    gvals = np.atleast_2d(np.asarray(gvals, dtype=float))
    assoc = np.atleast_2d(np.asarray(assoc, dtype=float))
    n_pts = gvals.shape[1]
    out = np.zeros((n_rows, n_pts))
    jlo, w = _node_weights(gvals, dy, sigma, radius)
    rows = np.clip(jlo[..., None] + np.arange(w.shape[-1]) - first_index, 0, n_rows - 1)
    cols = np.broadcast_to(np.arange(n_pts)[None, :, None], rows.shape)
    np.add.at(out, (rows.ravel(), cols.ravel()), (assoc[..., None] * w).ravel())
    return out


def smoothed_interp(c, gvals, dy, sigma, radius, first_index):
    """Noise average of a node table at arbitrary channel inputs.

    ``c[r, n]`` is a per-node quantity at lattice index ``first_index + r``
    (edge rows extend the table on both sides).  Returns
    ``sum_j P(node j | g[k, n]) * c[j, n]`` with shape (K, N); column ``n`` of
    ``gvals`` reads column ``n`` of ``c``.
    """
    c = np.asarray(c, dtype=float)
    gvals = np.atleast_2d(np.asarray(gvals, dtype=float))
    jlo, w = _node_weights(gvals, dy, sigma, radius)
    rows = np.clip(jlo[..., None] + np.arange(w.shape[-1]) - first_index, 0, c.shape[0] - 1)
    cols = np.arange(gvals.shape[1])[None, :, None]
    return np.sum(w * c[rows, cols], axis=-1)
