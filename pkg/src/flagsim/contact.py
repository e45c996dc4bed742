"""Edge-edge proximity detection and penalty response between flagella.

Closest points between two segments come from the clamped closed-form
solution; parallel segments take the midpoint of the projected overlap so
ties break deterministically. A penetrating pair (separation below one rod
diameter) receives an equal-and-opposite penalty force of magnitude
k_c * penetration along the contact normal, split onto the four segment
endpoints by the closest-point barycentric weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import dofs, rod_model

PARALLEL_TOL = 1e-12


@dataclass
class ContactPair:
    edge_l: int
    edge_m: int
    s: float            # closest-point parameter on edge l, in [0, 1]
    t: float            # closest-point parameter on edge m
    delta: float        # minimum distance (m)
    normal: np.ndarray  # unit vector from edge l toward edge m
    penetration: float  # 2 r0 - delta (m), positive when touching


@njit(cache=True)
def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@njit(cache=True)
def _segment_closest(p0, p1, q0, q1):
    """Closest-point parameters (s, t) for segments p and q."""
    u = p1 - p0
    v = q1 - q0
    w0 = p0 - q0
    a = u @ u
    b = u @ v
    c = v @ v
    d = u @ w0
    e = v @ w0
    denom = a * c - b * b

    if denom <= PARALLEL_TOL * a * c:
        # parallel: midpoint of the overlap of q's projection onto p
        s0 = -d / a
        s1 = (b - d) / a
        lo = _clamp01(min(s0, s1))
        hi = _clamp01(max(s0, s1))
        s = 0.5 * (lo + hi)
        t = _clamp01((b * s + e) / c) if c > 0.0 else 0.0
        return s, t

    s = _clamp01((b * e - c * d) / denom)
    t = (b * s + e) / c
    if t < 0.0:
        t = 0.0
        s = _clamp01(-d / a)
    elif t > 1.0:
        t = 1.0
        s = _clamp01((b - d) / a)
    return s, t


def min_distance(edge_l, edge_m):
    """Minimum distance between two segments plus closest-point data.

    Returns (delta, s, t, n) with n the unit normal from edge_l toward
    edge_m. Segments are given as (2, 3) arrays of endpoints.
    """
    p0 = np.asarray(edge_l[0], float)
    p1 = np.asarray(edge_l[1], float)
    q0 = np.asarray(edge_m[0], float)
    q1 = np.asarray(edge_m[1], float)
    if np.linalg.norm(p1 - p0) == 0.0 or np.linalg.norm(q1 - q0) == 0.0:
        raise ValueError("zero-length edge in contact query")
    s, t = _segment_closest(p0, p1, q0, q1)
    cp = p0 + s * (p1 - p0)
    cq = q0 + t * (q1 - q0)
    diff = cq - cp
    delta = float(np.linalg.norm(diff))
    if delta > 1e-12:
        n = diff / delta
    else:
        # touching: fall back to the mutual perpendicular, deterministic
        n = np.cross(p1 - p0, q1 - q0)
        nn = np.linalg.norm(n)
        if nn < 1e-12:
            u = p1 - p0
            a = np.array([0.0, 0.0, 1.0])
            if abs(u @ a) > 0.9 * np.linalg.norm(u):
                a = np.array([0.0, 1.0, 0.0])
            n = np.cross(u, a)
            nn = np.linalg.norm(n)
        n = n / nn
    return delta, s, t, n


def penalty_response(pair: ContactPair, stiffness: float):
    """Nodal forces (4, 3) on [x_l, x_l+1, x_m, x_m+1] for a penetrating pair."""
    if stiffness <= 0.0:
        raise ValueError("contact stiffness must be positive")
    if pair.penetration <= 0.0:
        return np.zeros((4, 3))
    f = stiffness * pair.penetration * pair.normal
    out = np.empty((4, 3))
    out[0] = -(1.0 - pair.s) * f
    out[1] = -pair.s * f
    out[2] = (1.0 - pair.t) * f
    out[3] = pair.t * f
    return out


@njit(cache=True)
def _detect_core(pos, cand_l, cand_m, diameter):
    n_cand = cand_l.shape[0]
    out_idx = np.empty(n_cand, np.int64)
    out_s = np.empty(n_cand)
    out_t = np.empty(n_cand)
    out_delta = np.empty(n_cand)
    out_n = np.empty((n_cand, 3))
    count = 0
    for i in range(n_cand):
        l = cand_l[i]
        m = cand_m[i]
        s, t = _segment_closest(pos[l], pos[l + 1], pos[m], pos[m + 1])
        cp = pos[l] + s * (pos[l + 1] - pos[l])
        cq = pos[m] + t * (pos[m + 1] - pos[m])
        dx = cq[0] - cp[0]
        dy = cq[1] - cp[1]
        dz = cq[2] - cp[2]
        delta = np.sqrt(dx * dx + dy * dy + dz * dz)
        if delta < diameter:
            out_idx[count] = i
            out_s[count] = s
            out_t[count] = t
            out_delta[count] = delta
            if delta > 1e-12:
                out_n[count, 0] = dx / delta
                out_n[count, 1] = dy / delta
                out_n[count, 2] = dz / delta
            else:
                ux = pos[l + 1] - pos[l]
                vx = pos[m + 1] - pos[m]
                nv = np.empty(3)
                nv[0] = ux[1] * vx[2] - ux[2] * vx[1]
                nv[1] = ux[2] * vx[0] - ux[0] * vx[2]
                nv[2] = ux[0] * vx[1] - ux[1] * vx[0]
                nn = np.sqrt(nv[0] ** 2 + nv[1] ** 2 + nv[2] ** 2)
                if nn < 1e-18:
                    nv[0], nv[1], nv[2] = 0.0, 0.0, 1.0
                    nn = 1.0
                out_n[count, 0] = nv[0] / nn
                out_n[count, 1] = nv[1] / nn
                out_n[count, 2] = nv[2] / nn
            count += 1
    return count, out_idx, out_s, out_t, out_delta, out_n


def _candidate_pairs(topo):
    """Eligible edge pairs: flagellar edges, excluding same-flagellum
    neighbors (|l - m| <= 1). Cached on the topology."""
    cached = getattr(topo, "_contact_candidates", None)
    if cached is not None:
        return cached
    ls = []
    ms = []
    n_flag = len(topo.flagellum_edges)
    for fa in range(n_flag):
        ea = topo.flagellum_edges[fa]
        for fb in range(fa, n_flag):
            eb = topo.flagellum_edges[fb]
            for i, l in enumerate(ea):
                start = i + 2 if fa == fb else 0
                mm = eb[start:] if fa == fb else eb
                for m in mm:
                    ls.append(l)
                    ms.append(m)
    cand = (np.array(ls, dtype=np.int64), np.array(ms, dtype=np.int64))
    topo._contact_candidates = cand
    return cand


def detect_all(topo, q, rod_radius: float):
    """All penetrating flagellar edge pairs (separation < 2 r0)."""
    pos = dofs.positions(q, topo.n_nodes)
    cand_l, cand_m = _candidate_pairs(topo)
    if cand_l.shape[0] == 0:
        return []
    count, idx, s, t, delta, n = _detect_core(pos, cand_l, cand_m,
                                              2.0 * rod_radius)
    pairs = []
    for i in range(count):
        pairs.append(ContactPair(
            edge_l=int(cand_l[idx[i]]),
            edge_m=int(cand_m[idx[i]]),
            s=float(s[i]),
            t=float(t[i]),
            delta=float(delta[i]),
            normal=n[i].copy(),
            penetration=2.0 * rod_radius - float(delta[i]),
        ))
    return pairs


def contact_forces(topo, q, rod_radius: float, stiffness: float):
    """Penalty forces for every penetrating pair, in DOF layout.

    Returns (force_vector, pairs). Equal-and-opposite by construction.
    """
    pairs = detect_all(topo, q, rod_radius)
    out = np.zeros(topo.n_dof)
    for pair in pairs:
        f = penalty_response(pair, stiffness)
        for node, fi in ((pair.edge_l, f[0]), (pair.edge_l + 1, f[1]),
                         (pair.edge_m, f[2]), (pair.edge_m + 1, f[3])):
            out[4 * node:4 * node + 3] += fi
    return out, pairs


def max_penetration(topo, q, rod_radius: float) -> float:
    """Deepest penetration over eligible pairs; 0 when contact free."""
    pairs = detect_all(topo, q, rod_radius)
    if not pairs:
        return 0.0
    return max(p.penetration for p in pairs)
