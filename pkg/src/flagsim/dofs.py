"""Layout of the generalized-coordinate vector.

For N nodes the vector has length 4N-1 and interleaves node positions with
per-edge twist angles:

    q = [x0, y0, z0, th0, x1, y1, z1, th1, ..., x_{N-1}, y_{N-1}, z_{N-1}]

Node k occupies q[4k:4k+3]; the twist angle of edge k (connecting nodes k
and k+1) sits at q[4k+3].
"""

from __future__ import annotations

import numpy as np


def n_dof(n_nodes: int) -> int:
    return 4 * n_nodes - 1


def node_slice(k: int) -> slice:
    return slice(4 * k, 4 * k + 3)


def theta_index(k: int) -> int:
    return 4 * k + 3


def positions(q: np.ndarray, n_nodes: int) -> np.ndarray:
    """Extract node positions as an (N, 3) array (copy)."""
    if q.shape[0] != n_dof(n_nodes):
        raise ValueError(f"DOF vector has length {q.shape[0]}, expected {n_dof(n_nodes)}")
    return np.stack((q[0::4], q[1::4], q[2::4]), axis=1)


def thetas(q: np.ndarray, n_nodes: int) -> np.ndarray:
    """Extract per-edge twist angles as an (N-1,) array (copy)."""
    if q.shape[0] != n_dof(n_nodes):
        raise ValueError(f"DOF vector has length {q.shape[0]}, expected {n_dof(n_nodes)}")
    return q[3::4].copy()


def pack(pos: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Interleave an (N, 3) position array and (N-1,) twist array into q."""
    n = pos.shape[0]
    if theta.shape[0] != n - 1:
        raise ValueError(f"expected {n - 1} twist angles, got {theta.shape[0]}")
    q = np.empty(n_dof(n))
    q[0::4] = pos[:, 0]
    q[1::4] = pos[:, 1]
    q[2::4] = pos[:, 2]
    q[3::4] = theta
    return q


def edges(pos: np.ndarray) -> np.ndarray:
    """Edge vectors e^k = x_{k+1} - x_k, shape (N-1, 3)."""
    return pos[1:] - pos[:-1]


def tangents(pos: np.ndarray) -> np.ndarray:
    """Unit tangents of every edge, shape (N-1, 3)."""
    e = edges(pos)
    norms = np.linalg.norm(e, axis=1)
    if np.any(norms <= 0.0):
        raise ValueError("degenerate (zero-length) edge")
    return e / norms[:, None]
