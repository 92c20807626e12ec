"""Post-run measurements: fragments, plastic fraction, column height."""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


def fragment_labels(positions, linkage_radius: float, min_size: int = 1):
    """Connected components of the graph linking points closer than the radius.

    Returns ``(count, labels, sizes)``; components smaller than ``min_size``
    are not counted (their labels are kept).
    """
    x = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = len(x)
    if n == 0:
        return 0, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs = cKDTree(x).query_pairs(linkage_radius, output_type="ndarray")
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    sizes = np.bincount(labels)
    return int(np.count_nonzero(sizes >= min_size)), labels, sizes


def fragment_count(positions, linkage_radius: float, min_size: int = 1) -> int:
    return fragment_labels(positions, linkage_radius, min_size)[0]


def plastic_fraction(alpha, alpha0) -> float:
    """Share of particles whose hardening variable moved above its start value."""
    alpha = np.asarray(alpha, dtype=float)
    return float(np.mean(alpha > np.asarray(alpha0, dtype=float))) if alpha.size else 0.0


def column_height(positions, floor: float = 0.0, quantile: float = 0.99) -> float:
    """Height of the ``quantile`` of particle z above the floor (robust max)."""
    z = np.asarray(positions, dtype=float)[:, 2]
    return float(np.quantile(z, quantile) - floor)


def rms_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))
