"""Shared helpers: generic rod topologies and finite-difference oracles."""

import numpy as np

from flagsim import dofs, elasticity, frames, rod_model


def make_rod(n_nodes, edge_len=5.0e-3, params=None, kappa_bar=None, tau_bar=None,
             positions=None):
    """Generic straight (or given) rod wrapped in a RobotTopology for tests."""
    p = params or rod_model.PhysicalParams()
    if positions is None:
        positions = np.zeros((n_nodes, 3))
        positions[:, 0] = np.arange(n_nodes) * edge_len
    rest_len = np.linalg.norm(dofs.edges(positions), axis=1)
    voronoi = 0.5 * (rest_len[:-1] + rest_len[1:])
    n_inner = n_nodes - 2
    q0 = dofs.pack(positions, np.zeros(n_nodes - 1))

    node_mass = np.full(n_nodes, p.density * np.pi * p.rod_radius**2 * edge_len)
    mass = np.empty(dofs.n_dof(n_nodes))
    mass[0::4] = node_mass
    mass[1::4] = node_mass
    mass[2::4] = node_mass
    mass[3::4] = 0.5 * p.density * np.pi * p.rod_radius**2 * edge_len * p.rod_radius**2

    topo = rod_model.RobotTopology(
        n_nodes=n_nodes,
        node_roles=np.array([rod_model.ROLE_FLAG_A] * n_nodes),
        edge_roles=np.array([rod_model.EDGE_FLAGELLUM] * (n_nodes - 1)),
        head_nodes=np.array([], dtype=int),
        motor_nodes=np.array([], dtype=int),
        head_edges=np.array([], dtype=int),
        motor_edges=np.array([], dtype=int),
        flagellum_nodes=[np.arange(n_nodes)],
        flagellum_edges=[np.arange(n_nodes - 1)],
        flagellum_tips=np.array([0]),
        actuation_nodes=np.array([], dtype=int),
        rest_len=rest_len,
        voronoi_len=voronoi,
        kappa_bar=np.zeros((n_inner, 2)) if kappa_bar is None else kappa_bar,
        tau_bar=np.zeros(n_inner) if tau_bar is None else tau_bar,
        EA_edge=np.full(n_nodes - 1, p.EA),
        EI_node=np.full(n_inner, p.EI),
        GJ_node=np.full(n_inner, p.GJ),
        mass=mass,
        hydro_nodes=np.arange(n_nodes),
        hydro_edges=np.arange(n_nodes - 1),
    )
    return topo, q0


def random_rod_state(n_nodes, rng, edge_len=5.0e-3, wiggle=0.25, natural=True):
    """Perturbed rod with random twists and (optionally) natural strains."""
    pos = np.zeros((n_nodes, 3))
    pos[:, 0] = np.arange(n_nodes) * edge_len
    pos += wiggle * edge_len * rng.normal(size=pos.shape)
    theta = rng.uniform(-1.2, 1.2, size=n_nodes - 1)
    kb = rng.normal(scale=0.3, size=(n_nodes - 2, 2)) if natural else None
    tb = rng.normal(scale=0.2, size=n_nodes - 2) if natural else None
    topo, _ = make_rod(n_nodes, edge_len=edge_len, kappa_bar=kb, tau_bar=tb)
    # rest lengths from an unperturbed rod so the state carries stretch strain
    q = dofs.pack(pos, theta)
    fs = frames.init_reference_frames(q, n_nodes)
    frames.material_frames(fs, theta)
    fs.ref_twist = frames.reference_twist(fs)
    return topo, q, fs


def energy_at(topo, q, fs_base, q_base_unused=None):
    """Total elastic energy with frames transported from the base state."""
    fs = frames.time_update_frames(fs_base, q, topo.n_nodes)
    fs.ref_twist = frames.reference_twist(fs, guess=fs_base.ref_twist)
    frames.material_frames(fs, q[3::4])
    return elasticity.elastic_energy(topo, q, fs)[3]


def force_at(topo, q, fs_base):
    """Elastic force with frames transported from the base state."""
    fs = frames.time_update_frames(fs_base, q, topo.n_nodes)
    fs.ref_twist = frames.reference_twist(fs, guess=fs_base.ref_twist)
    frames.material_frames(fs, q[3::4])
    return elasticity.elastic_force(topo, q, fs)


def fd_gradient(topo, q, fs_base, h=1.0e-8):
    """Central finite differences of the energy through the transport pipeline."""
    g = np.zeros_like(q)
    for i in range(q.shape[0]):
        qp = q.copy()
        qp[i] += h
        qm = q.copy()
        qm[i] -= h
        g[i] = (energy_at(topo, qp, fs_base) - energy_at(topo, qm, fs_base)) / (2.0 * h)
    return g


def fd_jacobian(topo, q, fs_base, h=1.0e-7):
    """Central finite differences of -force (columns of the Hessian)."""
    n = q.shape[0]
    J = np.zeros((n, n))
    for j in range(n):
        qp = q.copy()
        qp[j] += h
        qm = q.copy()
        qm[j] -= h
        J[:, j] = -(force_at(topo, qp, fs_base) - force_at(topo, qm, fs_base)) / (2.0 * h)
    return J


def componentwise_close(got, want, rtol, floor_frac=1e-6):
    """Relative agreement on entries above the noise floor."""
    scale = np.abs(want).max()
    if scale == 0.0:
        return np.abs(got).max() == 0.0
    floor = floor_frac * scale
    mask = np.abs(want) > floor
    rel = np.abs(got[mask] - want[mask]) / np.abs(want[mask])
    small_ok = np.abs(got[~mask] - want[~mask]) <= max(rtol * scale, floor)
    return rel.max() < rtol and np.all(small_ok)
