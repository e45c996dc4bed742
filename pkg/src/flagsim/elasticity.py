"""Stretching, bending, and twisting energies with analytic derivatives.

Discrete measures per interior node k (edges e = k-1, f = k):

    kb    = 2 t_e x t_f / (1 + t_e . t_f)
    kappa1 = 0.5 (m2_e + m2_f) . kb      kappa2 = -0.5 (m1_e + m1_f) . kb
    tau   = theta^f - theta^e + ref_twist_k

Energies:

    E_s = sum_e 0.5 EA_e (|e|/|e_bar| - 1)^2 |e_bar|
    E_b = sum_k 0.5 (EI_k / vor_k) [(kappa1 - kbar1)^2 + (kappa2 - kbar2)^2]
    E_t = sum_k 0.5 (GJ_k / vor_k) (tau - tau_bar)^2

Each interior node touches 11 consecutive DOFs
[x_{k-1}, theta^{k-1}, x_k, theta^k, x_{k+1}] starting at 4(k-1); gradients
and Hessian blocks are produced in that interleaved local ordering so the
assembly is a contiguous scatter. Derivatives account for the variation of
the time-parallel-transported reference frames (checked against central
finite differences of the energy through the actual transport pipeline).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from . import dofs, frames as frames_mod

# local index layout of the 11-DOF bend/twist stencil
_P0 = 0   # x_{k-1} occupies 0:3
_T0 = 3   # theta^{k-1}
_P1 = 4   # x_k occupies 4:7
_T1 = 7   # theta^k
_P2 = 8   # x_{k+1} occupies 8:11


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _add_outer(M, a, b, s):
    for i in range(3):
        for j in range(3):
            M[i, j] += s * a[i] * b[j]


@njit(cache=True)
def _add_crossmat(M, v, s):
    M[0, 1] -= s * v[2]
    M[0, 2] += s * v[1]
    M[1, 0] += s * v[2]
    M[1, 2] -= s * v[0]
    M[2, 0] -= s * v[1]
    M[2, 1] += s * v[0]


@njit(cache=True)
def _add_eye(M, s):
    M[0, 0] += s
    M[1, 1] += s
    M[2, 2] += s


@njit(cache=True)
def _stretch_blocks(pos, rest_len, EA_edge, want_hess, grad_blocks, hess_blocks):
    """Per-edge energy, 7-DOF gradient blocks [x_k, theta^k, x_{k+1}]."""
    n_edge = rest_len.shape[0]
    energy = 0.0
    for e in range(n_edge):
        ex = pos[e + 1, 0] - pos[e, 0]
        ey = pos[e + 1, 1] - pos[e, 1]
        ez = pos[e + 1, 2] - pos[e, 2]
        ln = np.sqrt(ex * ex + ey * ey + ez * ez)
        lbar = rest_len[e]
        eps = ln / lbar - 1.0
        ea = EA_edge[e]
        energy += 0.5 * ea * eps * eps * lbar

        gx = ea * eps * ex / ln
        gy = ea * eps * ey / ln
        gz = ea * eps * ez / ln
        grad_blocks[e, 0] = -gx
        grad_blocks[e, 1] = -gy
        grad_blocks[e, 2] = -gz
        grad_blocks[e, 3] = 0.0
        grad_blocks[e, 4] = gx
        grad_blocks[e, 5] = gy
        grad_blocks[e, 6] = gz

        if want_hess:
            H = hess_blocks[e]
            H[:, :] = 0.0
            c1 = ea * (1.0 / lbar - 1.0 / ln)
            c2 = ea / ln**3
            t = np.empty(3)
            t[0] = ex
            t[1] = ey
            t[2] = ez
            for i in range(3):
                for j in range(3):
                    m = c2 * t[i] * t[j]
                    if i == j:
                        m += c1
                    H[i, j] = m
                    H[i + 4, j + 4] = m
                    H[i, j + 4] = -m
                    H[i + 4, j] = -m
    return energy


@njit(cache=True)
def _bend_twist_blocks(pos, theta, m1, m2, ref_twist, rest_len, vor_len,
                       kappa_bar, tau_bar, EI_node, GJ_node,
                       want_hess, grad_blocks, hess_blocks):
    """Per-interior-node bend+twist energy, 11-DOF gradient/Hessian blocks."""
    n_inner = vor_len.shape[0]
    e_bend = 0.0
    e_twist = 0.0

    gk1 = np.empty(11)
    gk2 = np.empty(11)
    gtw = np.empty(11)

    for k in range(n_inner):
        # edges e = k, f = k+1 flank interior node k+1
        ee = pos[k + 1] - pos[k]
        ef = pos[k + 2] - pos[k + 1]
        norm_e = np.sqrt(ee[0]**2 + ee[1]**2 + ee[2]**2)
        norm_f = np.sqrt(ef[0]**2 + ef[1]**2 + ef[2]**2)
        te = ee / norm_e
        tf = ef / norm_f
        m1e = m1[k]
        m2e = m2[k]
        m1f = m1[k + 1]
        m2f = m2[k + 1]

        chi = 1.0 + te[0] * tf[0] + te[1] * tf[1] + te[2] * tf[2]
        if chi < 1e-12:
            chi = 1e-12
        kb = 2.0 * _cross(te, tf) / chi
        tilde_t = (te + tf) / chi
        tilde_d1 = (m1e + m1f) / chi
        tilde_d2 = (m2e + m2f) / chi

        kappa1 = 0.5 * (kb[0] * (m2e[0] + m2f[0]) + kb[1] * (m2e[1] + m2f[1])
                        + kb[2] * (m2e[2] + m2f[2]))
        kappa2 = -0.5 * (kb[0] * (m1e[0] + m1f[0]) + kb[1] * (m1e[1] + m1f[1])
                         + kb[2] * (m1e[2] + m1f[2]))
        tau = theta[k + 1] - theta[k] + ref_twist[k]

        ei = EI_node[k]
        gj = GJ_node[k]
        ilen = 1.0 / vor_len[k]
        dk1 = kappa1 - kappa_bar[k, 0]
        dk2 = kappa2 - kappa_bar[k, 1]
        dtau = tau - tau_bar[k]
        e_bend += 0.5 * ei * ilen * (dk1 * dk1 + dk2 * dk2)
        e_twist += 0.5 * gj * ilen * dtau * dtau

        # curvature gradients wrt the two edge vectors
        dk1_de = (-kappa1 * tilde_t + _cross(tf, tilde_d2)) / norm_e
        dk1_df = (-kappa1 * tilde_t - _cross(te, tilde_d2)) / norm_f
        dk2_de = (-kappa2 * tilde_t - _cross(tf, tilde_d1)) / norm_e
        dk2_df = (-kappa2 * tilde_t + _cross(te, tilde_d1)) / norm_f

        for i in range(3):
            gk1[_P0 + i] = -dk1_de[i]
            gk1[_P1 + i] = dk1_de[i] - dk1_df[i]
            gk1[_P2 + i] = dk1_df[i]
            gk2[_P0 + i] = -dk2_de[i]
            gk2[_P1 + i] = dk2_de[i] - dk2_df[i]
            gk2[_P2 + i] = dk2_df[i]
        kb_m1e = kb[0] * m1e[0] + kb[1] * m1e[1] + kb[2] * m1e[2]
        kb_m1f = kb[0] * m1f[0] + kb[1] * m1f[1] + kb[2] * m1f[2]
        kb_m2e = kb[0] * m2e[0] + kb[1] * m2e[1] + kb[2] * m2e[2]
        kb_m2f = kb[0] * m2f[0] + kb[1] * m2f[1] + kb[2] * m2f[2]
        gk1[_T0] = -0.5 * kb_m1e
        gk1[_T1] = -0.5 * kb_m1f
        gk2[_T0] = -0.5 * kb_m2e
        gk2[_T1] = -0.5 * kb_m2f

        # twist gradient: holonomy varies with the curvature binormal
        for i in range(3):
            gtw[_P0 + i] = -0.5 * kb[i] / norm_e
            gtw[_P2 + i] = 0.5 * kb[i] / norm_f
            gtw[_P1 + i] = -(gtw[_P0 + i] + gtw[_P2 + i])
        gtw[_T0] = -1.0
        gtw[_T1] = 1.0

        gb = grad_blocks[k]
        for i in range(11):
            gb[i] = ei * ilen * (dk1 * gk1[i] + dk2 * gk2[i]) + gj * ilen * dtau * gtw[i]

        if not want_hess:
            continue

        H = hess_blocks[k]
        H[:, :] = 0.0

        # outer-product parts
        for i in range(11):
            for j in range(11):
                H[i, j] = ilen * (ei * (gk1[i] * gk1[j] + gk2[i] * gk2[j])
                                  + gj * gtw[i] * gtw[j])

        # second derivatives of kappa1, kappa2 wrt edge vectors
        inv_e2 = 1.0 / (norm_e * norm_e)
        inv_f2 = 1.0 / (norm_f * norm_f)
        inv_ef = 1.0 / (norm_e * norm_f)
        tf_c_d2 = _cross(tf, tilde_d2)
        te_c_d2 = _cross(te, tilde_d2)
        tf_c_d1 = _cross(tf, tilde_d1)
        te_c_d1 = _cross(te, tilde_d1)

        k1_ee = np.zeros((3, 3))
        _add_outer(k1_ee, tilde_t, tilde_t, 2.0 * kappa1 * inv_e2)
        _add_outer(k1_ee, tf_c_d2, tilde_t, -inv_e2)
        _add_outer(k1_ee, tilde_t, tf_c_d2, -inv_e2)
        _add_eye(k1_ee, -kappa1 / chi * inv_e2)
        _add_outer(k1_ee, te, te, kappa1 / chi * inv_e2)
        _add_outer(k1_ee, kb, m2e, 0.5 * inv_e2)

        k1_ff = np.zeros((3, 3))
        _add_outer(k1_ff, tilde_t, tilde_t, 2.0 * kappa1 * inv_f2)
        _add_outer(k1_ff, te_c_d2, tilde_t, inv_f2)
        _add_outer(k1_ff, tilde_t, te_c_d2, inv_f2)
        _add_eye(k1_ff, -kappa1 / chi * inv_f2)
        _add_outer(k1_ff, tf, tf, kappa1 / chi * inv_f2)
        _add_outer(k1_ff, kb, m2f, 0.5 * inv_f2)

        k1_ef = np.zeros((3, 3))
        _add_eye(k1_ef, -kappa1 / chi * inv_ef)
        _add_outer(k1_ef, te, tf, -kappa1 / chi * inv_ef)
        _add_outer(k1_ef, tilde_t, tilde_t, 2.0 * kappa1 * inv_ef)
        _add_outer(k1_ef, tf_c_d2, tilde_t, -inv_ef)
        _add_outer(k1_ef, tilde_t, te_c_d2, inv_ef)
        _add_crossmat(k1_ef, tilde_d2, -inv_ef)

        k2_ee = np.zeros((3, 3))
        _add_outer(k2_ee, tilde_t, tilde_t, 2.0 * kappa2 * inv_e2)
        _add_outer(k2_ee, tf_c_d1, tilde_t, inv_e2)
        _add_outer(k2_ee, tilde_t, tf_c_d1, inv_e2)
        _add_eye(k2_ee, -kappa2 / chi * inv_e2)
        _add_outer(k2_ee, te, te, kappa2 / chi * inv_e2)
        _add_outer(k2_ee, kb, m1e, -0.5 * inv_e2)

        k2_ff = np.zeros((3, 3))
        _add_outer(k2_ff, tilde_t, tilde_t, 2.0 * kappa2 * inv_f2)
        _add_outer(k2_ff, te_c_d1, tilde_t, -inv_f2)
        _add_outer(k2_ff, tilde_t, te_c_d1, -inv_f2)
        _add_eye(k2_ff, -kappa2 / chi * inv_f2)
        _add_outer(k2_ff, tf, tf, kappa2 / chi * inv_f2)
        _add_outer(k2_ff, kb, m1f, -0.5 * inv_f2)

        k2_ef = np.zeros((3, 3))
        _add_eye(k2_ef, -kappa2 / chi * inv_ef)
        _add_outer(k2_ef, te, tf, -kappa2 / chi * inv_ef)
        _add_outer(k2_ef, tilde_t, tilde_t, 2.0 * kappa2 * inv_ef)
        _add_outer(k2_ef, tf_c_d1, tilde_t, inv_ef)
        _add_outer(k2_ef, tilde_t, te_c_d1, -inv_ef)
        _add_crossmat(k2_ef, tilde_d1, inv_ef)

        # twist second derivatives wrt edge vectors (exact derivative of the
        # curvature-binormal force field, not the symmetrized energy Hessian)
        tw_ee = np.zeros((3, 3))
        _add_outer(tw_ee, kb, te + tilde_t, -0.5 * inv_e2)
        _add_crossmat(tw_ee, tf, -inv_e2 / chi)

        tw_ff = np.zeros((3, 3))
        _add_outer(tw_ff, kb, tf + tilde_t, -0.5 * inv_f2)
        _add_crossmat(tw_ff, te, inv_f2 / chi)

        tw_ef = np.zeros((3, 3))
        _add_crossmat(tw_ef, te, inv_ef / chi)
        _add_outer(tw_ef, kb, tilde_t, -0.5 * inv_ef)

        # mixed edge-theta second derivatives of the curvatures
        k1_e_t0 = (0.5 * kb_m1e * tilde_t - _cross(tf, m1e) / chi) / norm_e
        k1_e_t1 = (0.5 * kb_m1f * tilde_t - _cross(tf, m1f) / chi) / norm_e
        k1_f_t0 = (0.5 * kb_m1e * tilde_t + _cross(te, m1e) / chi) / norm_f
        k1_f_t1 = (0.5 * kb_m1f * tilde_t + _cross(te, m1f) / chi) / norm_f
        k2_e_t0 = (0.5 * kb_m2e * tilde_t - _cross(tf, m2e) / chi) / norm_e
        k2_e_t1 = (0.5 * kb_m2f * tilde_t - _cross(tf, m2f) / chi) / norm_e
        k2_f_t0 = (0.5 * kb_m2e * tilde_t + _cross(te, m2e) / chi) / norm_f
        k2_f_t1 = (0.5 * kb_m2f * tilde_t + _cross(te, m2f) / chi) / norm_f

        w1 = ei * ilen * dk1
        w2 = ei * ilen * dk2
        wt = gj * ilen * dtau

        for a in range(3):
            for b in range(3):
                hee = w1 * k1_ee[a, b] + w2 * k2_ee[a, b] + wt * tw_ee[a, b]
                hff = w1 * k1_ff[a, b] + w2 * k2_ff[a, b] + wt * tw_ff[a, b]
                hef = w1 * k1_ef[a, b] + w2 * k2_ef[a, b] + wt * tw_ef[a, b]
                hfe = w1 * k1_ef[b, a] + w2 * k2_ef[b, a] + wt * tw_ef[b, a]
                H[_P0 + a, _P0 + b] += hee
                H[_P0 + a, _P1 + b] += -hee + hef
                H[_P0 + a, _P2 + b] += -hef
                H[_P1 + a, _P0 + b] += -hee + hfe
                H[_P1 + a, _P1 + b] += hee - hef - hfe + hff
                H[_P1 + a, _P2 + b] += hef - hff
                H[_P2 + a, _P0 + b] += -hfe
                H[_P2 + a, _P1 + b] += hfe - hff
                H[_P2 + a, _P2 + b] += hff

        # theta-theta curvature terms
        H[_T0, _T0] += w1 * (-0.5 * kb_m2e) + w2 * (0.5 * kb_m1e)
        H[_T1, _T1] += w1 * (-0.5 * kb_m2f) + w2 * (0.5 * kb_m1f)

        # mixed position-theta terms
        for a in range(3):
            c0 = w1 * k1_e_t0[a] + w2 * k2_e_t0[a]
            c1 = w1 * k1_f_t0[a] + w2 * k2_f_t0[a]
            d0 = w1 * k1_e_t1[a] + w2 * k2_e_t1[a]
            d1 = w1 * k1_f_t1[a] + w2 * k2_f_t1[a]
            H[_P0 + a, _T0] += -c0
            H[_P1 + a, _T0] += c0 - c1
            H[_P2 + a, _T0] += c1
            H[_T0, _P0 + a] += -c0
            H[_T0, _P1 + a] += c0 - c1
            H[_T0, _P2 + a] += c1
            H[_P0 + a, _T1] += -d0
            H[_P1 + a, _T1] += d0 - d1
            H[_P2 + a, _T1] += d1
            H[_T1, _P0 + a] += -d0
            H[_T1, _P1 + a] += d0 - d1
            H[_T1, _P2 + a] += d1

    return e_bend, e_twist


@njit(cache=True)
def _scatter_dense(grad_blocks7, hess_blocks7, grad_blocks11, hess_blocks11,
                   grad_out, hess_out, want_hess):
    n_edge = grad_blocks7.shape[0]
    for e in range(n_edge):
        base = 4 * e
        for i in range(7):
            grad_out[base + i] += grad_blocks7[e, i]
        if want_hess:
            for i in range(7):
                for j in range(7):
                    hess_out[base + i, base + j] += hess_blocks7[e, i, j]
    n_inner = grad_blocks11.shape[0]
    for k in range(n_inner):
        base = 4 * k
        for i in range(11):
            grad_out[base + i] += grad_blocks11[k, i]
        if want_hess:
            for i in range(11):
                for j in range(11):
                    hess_out[base + i, base + j] += hess_blocks11[k, i, j]


@njit(cache=True)
def _scatter_banded(grad_blocks7, hess_blocks7, grad_blocks11, hess_blocks11,
                    grad_out, ab, half_bw):
    """Accumulate into LAPACK band storage ab[half_bw + i - j, j] += H[i, j]."""
    n_edge = grad_blocks7.shape[0]
    for e in range(n_edge):
        base = 4 * e
        for i in range(7):
            grad_out[base + i] += grad_blocks7[e, i]
            for j in range(7):
                ab[half_bw + i - j, base + j] += hess_blocks7[e, i, j]
    n_inner = grad_blocks11.shape[0]
    for k in range(n_inner):
        base = 4 * k
        for i in range(11):
            grad_out[base + i] += grad_blocks11[k, i]
            for j in range(11):
                ab[half_bw + i - j, base + j] += hess_blocks11[k, i, j]


class _Workspace:
    """Reusable per-topology scratch arrays for the assembly kernels."""

    def __init__(self, n_nodes: int):
        n_edge = n_nodes - 1
        n_inner = n_nodes - 2
        self.g7 = np.zeros((n_edge, 7))
        self.h7 = np.zeros((n_edge, 7, 7))
        self.g11 = np.zeros((n_inner, 11))
        self.h11 = np.zeros((n_inner, 11, 11))


_workspaces: dict = {}


def _workspace(n_nodes: int) -> _Workspace:
    ws = _workspaces.get(n_nodes)
    if ws is None:
        ws = _Workspace(n_nodes)
        _workspaces[n_nodes] = ws
    return ws


def _gather(topo, q, fs):
    pos = dofs.positions(q, topo.n_nodes)
    theta = q[3::4]
    return pos, theta


def elastic_energy(topo, q, fs):
    """Return (E_stretch, E_bend, E_twist, E_total) for the current state."""
    pos, theta = _gather(topo, q, fs)
    ws = _workspace(topo.n_nodes)
    es = _stretch_blocks(pos, topo.rest_len, topo.EA_edge, False, ws.g7, ws.h7)
    eb, et = _bend_twist_blocks(pos, theta, fs.m1, fs.m2, fs.ref_twist,
                                topo.rest_len, topo.voronoi_len, topo.kappa_bar,
                                topo.tau_bar, topo.EI_node, topo.GJ_node,
                                False, ws.g11, ws.h11)
    return es, eb, et, es + eb + et


def elastic_force(topo, q, fs) -> np.ndarray:
    """Force vector -dE/dq; twist entries are scalar moments."""
    grad, _ = _gradient(topo, q, fs, want_hess=False)
    return -grad


def elastic_jacobian(topo, q, fs) -> np.ndarray:
    """Exact force-field Jacobian d(-force)/dq, dense (4N-1)^2.

    Matches central finite differences of elastic_force. Coincides with the
    (symmetric) energy Hessian at stress-free states; elsewhere the holonomy
    of the transported frames adds small terms weighted by the bending and
    twisting strain excess, so exact symmetry is not guaranteed.
    """
    _, hess = _gradient(topo, q, fs, want_hess=True)
    return hess


def _gradient(topo, q, fs, want_hess):
    pos, theta = _gather(topo, q, fs)
    ws = _workspace(topo.n_nodes)
    grad = np.zeros(topo.n_dof)
    hess = np.zeros((topo.n_dof, topo.n_dof)) if want_hess else np.zeros((1, 1))
    _stretch_blocks(pos, topo.rest_len, topo.EA_edge, want_hess, ws.g7, ws.h7)
    _bend_twist_blocks(pos, theta, fs.m1, fs.m2, fs.ref_twist,
                       topo.rest_len, topo.voronoi_len, topo.kappa_bar,
                       topo.tau_bar, topo.EI_node, topo.GJ_node,
                       want_hess, ws.g11, ws.h11)
    _scatter_dense(ws.g7, ws.h7, ws.g11, ws.h11, grad, hess, want_hess)
    return grad, (hess if want_hess else None)


def gradient_and_banded_hessian(topo, q, fs, ab: np.ndarray, half_bw: int = 10):
    """Energy gradient plus Hessian accumulated into LAPACK band storage.

    ab must be zeroed (or pre-loaded with the inertia band) by the caller;
    only entries within the stencil bandwidth are touched.
    """
    pos, theta = _gather(topo, q, fs)
    ws = _workspace(topo.n_nodes)
    grad = np.zeros(topo.n_dof)
    _stretch_blocks(pos, topo.rest_len, topo.EA_edge, True, ws.g7, ws.h7)
    _bend_twist_blocks(pos, theta, fs.m1, fs.m2, fs.ref_twist,
                       topo.rest_len, topo.voronoi_len, topo.kappa_bar,
                       topo.tau_bar, topo.EI_node, topo.GJ_node,
                       True, ws.g11, ws.h11)
    _scatter_banded(ws.g7, ws.h7, ws.g11, ws.h11, grad, ab, half_bw)
    return grad


def strain_state(topo, q, fs):
    """Per-edge strains and per-node (kappa1, kappa2, tau) for diagnostics."""
    pos, theta = _gather(topo, q, fs)
    e = dofs.edges(pos)
    ln = np.linalg.norm(e, axis=1)
    strain = ln / topo.rest_len - 1.0
    t = e / ln[:, None]
    chi = 1.0 + np.einsum("ij,ij->i", t[:-1], t[1:])
    kb = 2.0 * np.cross(t[:-1], t[1:]) / chi[:, None]
    kappa1 = 0.5 * np.einsum("ij,ij->i", fs.m2[:-1] + fs.m2[1:], kb)
    kappa2 = -0.5 * np.einsum("ij,ij->i", fs.m1[:-1] + fs.m1[1:], kb)
    tau = theta[1:] - theta[:-1] + fs.ref_twist
    return strain, kb, kappa1, kappa2, tau
