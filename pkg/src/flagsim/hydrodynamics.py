"""Stokes-flow hydrodynamics: segment-integrated regularized Stokeslets.

The regularized point Stokeslet (blob radius eps) induces

    u(x) = (1/8 pi mu) [ F (1/R + eps^2/R^3) + (F . r) r / R^3 ],
    r = x - y,  R = sqrt(|r|^2 + eps^2).

For a straight segment y(s) = a + s d_hat, s in [0, L], carrying a uniform
force density g (N/m), the integral has a closed form in the antiderivatives

    I1 = int ds / R        I3 = int ds / R^3
    J3 = int s ds / R^3    K3 = int s^2 ds / R^3

with R^2 = (s - b)^2 + c^2, b = r0 . d_hat, c^2 = |r0|^2 + eps^2 - b^2 and
r0 = x - a. c^2 >= eps^2 > 0 keeps every term finite, including self terms.

The mobility matrix collocates velocities at the flagellar nodes and spreads
each nodal force as a uniform density over the node's support: the two half
segments adjacent to it (one at chain ends), divided by the support length.
Spreading the force per segment as the average of the two endpoint forces
looks natural but makes an end-segment pair exactly singular (antisymmetric
forces induce zero velocity), which destroys positive definiteness; the
node-centered support has no such null direction. The head is not in the
mobility; it carries lumped translational/rotational drag scaled by the
calibrated prefactors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from . import dofs


class MobilityError(RuntimeError):
    """Mobility matrix is singular or not positive definite."""


@njit(cache=True)
def _segment_kernel(r0x, r0y, r0z, dx, dy, dz, seg_len, eps):
    """3x3 matrix K with u = K g / (8 pi mu) for uniform density g."""
    b = r0x * dx + r0y * dy + r0z * dz
    r0sq = r0x * r0x + r0y * r0y + r0z * r0z
    c2 = r0sq + eps * eps - b * b
    if c2 < eps * eps * 1e-12:
        c2 = eps * eps * 1e-12
    c = np.sqrt(c2)

    w0 = -b
    w1 = seg_len - b
    R0 = np.sqrt(w0 * w0 + c2)
    R1 = np.sqrt(w1 * w1 + c2)

    I1 = np.arcsinh(w1 / c) - np.arcsinh(w0 / c)
    I3 = (w1 / R1 - w0 / R0) / c2
    dinv = 1.0 / R1 - 1.0 / R0
    J3 = b * I3 - dinv
    K3 = (I1 - c2 * I3) - 2.0 * b * dinv + b * b * I3

    K = np.empty((3, 3))
    iso = I1 + eps * eps * I3
    r = (r0x, r0y, r0z)
    d = (dx, dy, dz)
    for i in range(3):
        for j in range(3):
            v = I3 * r[i] * r[j] - J3 * (r[i] * d[j] + d[i] * r[j]) + K3 * d[i] * d[j]
            if i == j:
                v += iso
            K[i, j] = v
    return K


def rss_segment_velocity(eval_point, seg_start, seg_end, force_density, eps, mu):
    """Velocity induced at eval_point by a uniform force density on a segment."""
    if eps <= 0.0:
        raise ValueError("regularization eps must be positive")
    a = np.asarray(seg_start, dtype=float)
    b = np.asarray(seg_end, dtype=float)
    x = np.asarray(eval_point, dtype=float)
    g = np.asarray(force_density, dtype=float)
    seg = b - a
    seg_len = float(np.linalg.norm(seg))
    if seg_len <= 0.0:
        raise ValueError("segment length must be positive")
    d = seg / seg_len
    r0 = x - a
    K = _segment_kernel(r0[0], r0[1], r0[2], d[0], d[1], d[2], seg_len, eps)
    return (K @ g) / (8.0 * math.pi * mu)


@njit(cache=True)
def _assemble_mobility(xs, left, right, eps, mu):
    """Collocation mobility: velocities at nodes, forces spread over the
    node's half-segment support (left[j]/right[j] = neighbor node or -1)."""
    m = xs.shape[0]
    A = np.zeros((3 * m, 3 * m))
    coef = 1.0 / (8.0 * math.pi * mu)
    for j in range(m):
        # support pieces: (start point, direction, length), walking outward
        n_piece = 0
        starts = np.empty((2, 3))
        dirs = np.empty((2, 3))
        lens = np.empty(2)
        for nb in (left[j], right[j]):
            if nb < 0:
                continue
            hx = 0.5 * (xs[nb, 0] - xs[j, 0])
            hy = 0.5 * (xs[nb, 1] - xs[j, 1])
            hz = 0.5 * (xs[nb, 2] - xs[j, 2])
            ln = np.sqrt(hx * hx + hy * hy + hz * hz)
            starts[n_piece, 0] = xs[j, 0]
            starts[n_piece, 1] = xs[j, 1]
            starts[n_piece, 2] = xs[j, 2]
            dirs[n_piece, 0] = hx / ln
            dirs[n_piece, 1] = hy / ln
            dirs[n_piece, 2] = hz / ln
            lens[n_piece] = ln
            n_piece += 1
        w_total = lens[:n_piece].sum()
        for i in range(m):
            K = np.zeros((3, 3))
            for pc in range(n_piece):
                K += _segment_kernel(xs[i, 0] - starts[pc, 0],
                                     xs[i, 1] - starts[pc, 1],
                                     xs[i, 2] - starts[pc, 2],
                                     dirs[pc, 0], dirs[pc, 1], dirs[pc, 2],
                                     lens[pc], eps)
            w = coef / w_total
            for p in range(3):
                for qq in range(3):
                    A[3 * i + p, 3 * j + qq] += w * K[p, qq]
    # the continuum operator is self-adjoint; symmetrize the collocation error
    for i in range(3 * m):
        for j in range(i):
            v = 0.5 * (A[i, j] + A[j, i])
            A[i, j] = v
            A[j, i] = v
    return A


def _support_neighbors(topo):
    """Per hydro node, the local index of the chain neighbor across each
    adjacent flagellar edge (-1 where the support ends). Cached on the topology."""
    cached = getattr(topo, "_hydro_support", None)
    if cached is not None:
        return cached
    hydro = topo.hydro_nodes
    local = -np.ones(topo.n_nodes, dtype=np.int64)
    local[hydro] = np.arange(hydro.shape[0])
    left = -np.ones(hydro.shape[0], dtype=np.int64)
    right = -np.ones(hydro.shape[0], dtype=np.int64)
    edge_set = set(topo.hydro_edges.tolist())
    for li, n in enumerate(hydro):
        if n - 1 in edge_set:
            left[li] = local[n - 1]
        if n in edge_set:
            right[li] = local[n + 1]
    topo._hydro_support = (left, right)
    return left, right


def assemble_mobility(topo, q, eps, mu) -> np.ndarray:
    """Dense 3M x 3M map from flagellar nodal forces to nodal velocities."""
    pos = dofs.positions(q, topo.n_nodes)
    hydro = topo.hydro_nodes
    xs = pos[hydro]
    d2 = np.sum((xs[None, :, :] - xs[:, None, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    if d2.min() < (1e-2 * eps) ** 2:
        raise MobilityError("coincident hydrodynamic nodes")
    left, right = _support_neighbors(topo)
    return _assemble_mobility(xs, left, right, eps, mu)


def drag_forces(topo, q, velocities, eps, mu, mobility=None) -> np.ndarray:
    """Viscous forces on the flagellar DOFs for given nodal velocities.

    Solves A f = -u for the force the fluid exerts on the rod; twist DOFs
    receive nothing. velocities is the full (4N-1,) DOF-rate vector.
    """
    A = assemble_mobility(topo, q, eps, mu) if mobility is None else mobility
    hydro = topo.hydro_nodes
    u = np.empty(3 * hydro.shape[0])
    u[0::3] = velocities[4 * hydro + 0]
    u[1::3] = velocities[4 * hydro + 1]
    u[2::3] = velocities[4 * hydro + 2]
    try:
        f = cho_solve(cho_factor(A, lower=True, check_finite=False), -u,
                      check_finite=False)
    except LinAlgError as err:
        raise MobilityError(f"mobility solve failed: {err}") from err
    out = np.zeros(topo.n_dof)
    out[4 * hydro + 0] = f[0::3]
    out[4 * hydro + 1] = f[1::3]
    out[4 * hydro + 2] = f[2::3]
    return out


@dataclass
class HeadDrag:
    """Lumped Stokes drag on the head: force on the centroid, axial torque."""

    force: np.ndarray   # (3,) N
    torque: float       # N m about the robot axis


def head_drag(v_head, omega_head, params) -> HeadDrag:
    """Sphere drag scaled by the shape prefactors C_t, C_r."""
    force = -params.drag_translation * 6.0 * math.pi * params.viscosity \
        * params.head_radius * np.asarray(v_head, dtype=float)
    torque = -params.drag_rotation * 8.0 * math.pi * params.viscosity \
        * params.head_radius**3 * float(omega_head)
    return HeadDrag(force=force, torque=torque)


def spread_head_drag(topo, drag: HeadDrag, out=None) -> np.ndarray:
    """Distribute the head force (1/3 per head node) and torque (1/2 per
    head-edge twist DOF) into a DOF-layout force vector."""
    if out is None:
        out = np.zeros(topo.n_dof)
    for n in topo.head_nodes:
        out[4 * n:4 * n + 3] += drag.force / 3.0
    for e in topo.head_edges:
        out[4 * e + 3] += drag.torque / 2.0
    return out
