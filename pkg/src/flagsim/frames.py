"""Adapted reference/material frames evolved by parallel transport.

Each edge carries an orthonormal triad (d1, d2, t) with t the unit edge
tangent. The material frame (m1, m2, t) is the reference frame rotated about
t by the edge twist angle. Reference frames are seeded on the first edge,
space-transported along the chain at construction, and time-transported from
the previous configuration during stepping.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import dofs

log = logging.getLogger(__name__)

UNIT_TOL = 1e-6
ANTIPODAL_TOL = 1e-12


@dataclass
class FrameSet:
    """Per-edge triads plus per-interior-node reference twist."""

    d1: np.ndarray  # (E, 3) first reference director
    d2: np.ndarray  # (E, 3) second reference director
    t: np.ndarray   # (E, 3) unit tangent
    m1: np.ndarray = field(default=None)  # (E, 3) material directors
    m2: np.ndarray = field(default=None)
    ref_twist: np.ndarray = field(default=None)  # (E-1,) holonomy angles

    def __post_init__(self):
        n_edge = self.d1.shape[0]
        if self.m1 is None:
            self.m1 = self.d1.copy()
        if self.m2 is None:
            self.m2 = self.d2.copy()
        if self.ref_twist is None:
            self.ref_twist = np.zeros(max(n_edge - 1, 0))

    @property
    def n_edges(self) -> int:
        return self.d1.shape[0]

    def copy(self) -> "FrameSet":
        return FrameSet(self.d1.copy(), self.d2.copy(), self.t.copy(),
                        self.m1.copy(), self.m2.copy(), self.ref_twist.copy())


def _seed_perpendicular(t: np.ndarray) -> np.ndarray:
    """Deterministic unit vector perpendicular to t.

    Crosses t with z-hat unless t is nearly axial in z, then with y-hat.
    """
    a = np.array([0.0, 0.0, 1.0])
    if abs(t @ a) > 0.9:
        a = np.array([0.0, 1.0, 0.0])
    v = np.cross(t, a)
    return v / np.linalg.norm(v)


def parallel_transport(v: np.ndarray, t_from: np.ndarray, t_to: np.ndarray) -> np.ndarray:
    """Transport v by the minimal rotation taking t_from onto t_to.

    Identity when the tangents coincide; for (near-)antipodal tangents the
    rotation is by pi about a deterministic perpendicular axis, which is
    logged since it indicates a kinked rod.
    """
    for name, t in (("t_from", t_from), ("t_to", t_to)):
        if abs(np.linalg.norm(t) - 1.0) > UNIT_TOL:
            raise ValueError(f"{name} is not a unit vector")
    b = np.cross(t_from, t_to)
    c = float(t_from @ t_to)
    if b @ b < ANTIPODAL_TOL**2:
        if c > 0.0:
            return v.copy()
        log.warning("antipodal tangents in parallel transport (kinked rod)")
        axis = _seed_perpendicular(t_from)
        # rotation by pi about axis: v -> 2(axis.v)axis - v
        return 2.0 * (axis @ v) * axis - v
    return c * v + np.cross(b, v) + b * (b @ v) / (1.0 + c)


def _transport_rows(v: np.ndarray, t_from: np.ndarray, t_to: np.ndarray) -> np.ndarray:
    """Row-wise parallel transport for (n, 3) stacks of vectors/tangents."""
    b = np.cross(t_from, t_to)
    c = np.einsum("ij,ij->i", t_from, t_to)
    chi = 1.0 + c
    bad = chi < ANTIPODAL_TOL
    if np.any(bad):
        chi = np.where(bad, 1.0, chi)  # patched below
    out = c[:, None] * v + np.cross(b, v) + b * (np.einsum("ij,ij->i", b, v) / chi)[:, None]
    if np.any(bad):
        log.warning("antipodal tangents in parallel transport (kinked rod)")
        for i in np.flatnonzero(bad):
            axis = _seed_perpendicular(t_from[i])
            out[i] = 2.0 * (axis @ v[i]) * axis - v[i]
    return out


def _signed_angle(u: np.ndarray, v: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Signed angle from u to v about axis, in (-pi, pi], row-wise."""
    w = np.cross(u, v)
    sine = np.einsum("ij,ij->i", axis, w)
    cosine = np.einsum("ij,ij->i", u, v)
    return np.arctan2(sine, cosine)


def _rotate_about(v: np.ndarray, axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Rodrigues rotation of rows of v about unit rows of axis."""
    c = np.cos(angle)[:, None]
    s = np.sin(angle)[:, None]
    dot = np.einsum("ij,ij->i", axis, v)[:, None]
    return c * v + s * np.cross(axis, v) + (1.0 - c) * dot * axis


def _orthonormalize(fs: FrameSet) -> None:
    """Project directors onto the plane normal to t and renormalize."""
    d1 = fs.d1 - np.einsum("ij,ij->i", fs.d1, fs.t)[:, None] * fs.t
    fs.d1 = d1 / np.linalg.norm(d1, axis=1)[:, None]
    fs.d2 = np.cross(fs.t, fs.d1)


def init_reference_frames(q: np.ndarray, n_nodes: int) -> FrameSet:
    """Seed a frame on edge 0 and space-transport it along the chain.

    The seed first director is the deterministic perpendicular of the first
    tangent; the material frame starts equal to the reference frame.
    """
    pos = dofs.positions(q, n_nodes)
    t = dofs.tangents(pos)
    n_edge = t.shape[0]
    d1 = np.empty_like(t)
    d1[0] = _seed_perpendicular(t[0])
    for k in range(1, n_edge):
        d1[k] = parallel_transport(d1[k - 1], t[k - 1], t[k])
    fs = FrameSet(d1=d1, d2=np.cross(t, d1), t=t)
    _orthonormalize(fs)
    material_frames(fs, dofs.thetas(q, n_nodes))
    return fs


def time_update_frames(frames_old: FrameSet, q_new: np.ndarray, n_nodes: int) -> FrameSet:
    """Transport every reference frame from the old tangent to the new one."""
    pos = dofs.positions(q_new, n_nodes)
    t_new = dofs.tangents(pos)
    if t_new.shape[0] != frames_old.n_edges:
        raise ValueError("topology mismatch between frame set and DOF vector")
    d1 = _transport_rows(frames_old.d1, frames_old.t, t_new)
    fs = FrameSet(d1=d1, d2=np.cross(t_new, d1), t=t_new,
                  ref_twist=frames_old.ref_twist.copy())
    _orthonormalize(fs)
    return fs


def reference_twist(frames: FrameSet, guess: np.ndarray | None = None) -> np.ndarray:
    """Holonomy angle at every interior node.

    Without a guess the angle is the principal value in (-pi, pi]. With a
    guess (the previous value) the returned twist is the continuous branch
    nearest the guess, which keeps long-running spins free of 2*pi jumps.
    """
    d1, t = frames.d1, frames.t
    pt = _transport_rows(d1[:-1], t[:-1], t[1:])
    if guess is None:
        return _signed_angle(pt, d1[1:], t[1:])
    pt = _rotate_about(pt, t[1:], guess)
    return guess + _signed_angle(pt, d1[1:], t[1:])


def material_frames(frames: FrameSet, theta: np.ndarray) -> FrameSet:
    """Fill m1, m2 by rotating the reference directors by the twist angles."""
    c = np.cos(theta)[:, None]
    s = np.sin(theta)[:, None]
    frames.m1 = c * frames.d1 + s * frames.d2
    frames.m2 = -s * frames.d1 + c * frames.d2
    return frames
