"""Robot geometry, topology, and undeformed state.

The swimmer is a single open chain of nodes: flagellum A traversed tip to
base, a short motor shaft up to motor node m1, three head nodes straddling
the motor plane along the robot axis, motor node m2, and flagellum B
traversed base to tip. Flagella hang along -x; the robot swims along the
x axis. Junction angles are kept well away from 180 degrees so parallel
transport and the discrete-curvature denominator stay regular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dofs, frames

ROLE_FLAG_A = "flagellumA"
ROLE_FLAG_B = "flagellumB"
ROLE_MOTOR1 = "motor1"
ROLE_MOTOR2 = "motor2"
ROLE_HEAD = "head"

EDGE_FLAGELLUM = "flagellum"
EDGE_MOTOR = "motor"
EDGE_HEAD = "head"

# Head casing height from the hardware build; only used for the lumped
# head mass default (neutral buoyancy: head density equals fluid density).
DEFAULT_HEAD_HEIGHT = 0.082


@dataclass
class PhysicalParams:
    """Geometric, material, fluid, and discretization parameters (SI)."""

    helix_radius: float = 0.0064      # r
    pitch: float = 0.0572             # lambda
    axial_length: float = 0.0954      # l
    head_radius: float = 0.031        # r_h
    rod_radius: float = 0.0016        # r0
    youngs_modulus: float = 1.255e6   # E
    poisson_ratio: float = 0.5        # nu
    density: float = 1260.0           # rho
    viscosity: float = 1.0            # mu
    dt: float = 1.0e-4
    epsilon_reg: float = 1.67e-4      # Stokeslet blob radius
    edge_length: float = 5.0e-3       # target |e|
    drag_translation: float = 4.8     # C_t
    drag_rotation: float = 0.36       # C_r

    def __post_init__(self):
        positive = {
            "helix_radius": self.helix_radius, "pitch": self.pitch,
            "axial_length": self.axial_length, "head_radius": self.head_radius,
            "rod_radius": self.rod_radius, "youngs_modulus": self.youngs_modulus,
            "density": self.density, "viscosity": self.viscosity,
            "dt": self.dt, "epsilon_reg": self.epsilon_reg,
            "edge_length": self.edge_length,
            "drag_translation": self.drag_translation,
            "drag_rotation": self.drag_rotation,
        }
        for name, value in positive.items():
            if not value > 0.0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if not 0.0 < self.poisson_ratio <= 0.5:
            raise ValueError(f"poisson_ratio must lie in (0, 0.5], got {self.poisson_ratio}")

    @property
    def shear_modulus(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def EA(self) -> float:
        return self.youngs_modulus * math.pi * self.rod_radius**2

    @property
    def EI(self) -> float:
        return self.youngs_modulus * math.pi * self.rod_radius**4 / 4.0

    @property
    def GJ(self) -> float:
        return self.shear_modulus * math.pi * self.rod_radius**4 / 2.0


def contour_length(r: float, pitch: float, axial_length: float) -> float:
    """Arc length of a helix of axial extent l: l * sqrt(1 + (2 pi r / lambda)^2)."""
    return axial_length * math.sqrt(1.0 + (2.0 * math.pi * r / pitch) ** 2)


def build_helix(r: float, pitch: float, axial_length: float, handedness: str,
                dl: float, phase_end: float = 0.0) -> np.ndarray:
    """Sample a helix along +x at uniform arc-length spacing.

    Nodes run from x=0 to x=axial_length; all spacings equal dl except a
    final shorter edge absorbing the arc-length remainder. phase_end fixes
    the cross-section angle of the last node. r=0 degenerates to a straight
    segment.
    """
    if r < 0.0 or pitch <= 0.0 or axial_length <= 0.0 or dl <= 0.0:
        raise ValueError("helix parameters must be positive (r may be zero)")
    if handedness not in ("left", "right"):
        raise ValueError(f"handedness must be 'left' or 'right', got {handedness!r}")
    lc = contour_length(r, pitch, axial_length)
    if dl >= lc:
        raise ValueError(f"discretization length {dl} exceeds contour length {lc}")

    # ratio of axial advance and phase advance per unit arc length
    ax_rate = axial_length / lc
    ph_rate = 2.0 * math.pi * ax_rate / pitch

    def chord(h):
        return math.hypot(h * ax_rate, 2.0 * r * math.sin(0.5 * ph_rate * h))

    # arc step whose straight chord equals dl (node spacing is chord distance)
    h = dl
    for _ in range(4):
        h *= dl / chord(h)

    n_full = int(math.floor(lc / h))
    s = np.arange(n_full + 1) * h
    if lc - s[-1] > 1e-9 * lc:
        s = np.append(s, lc)

    phase = ph_rate * s + (phase_end - ph_rate * lc)
    sign = -1.0 if handedness == "left" else 1.0
    pos = np.column_stack((s * ax_rate, r * np.cos(phase), sign * r * np.sin(phase)))
    return pos


@dataclass
class RobotTopology:
    """Single-chain discretization with role tags and undeformed state."""

    n_nodes: int
    node_roles: np.ndarray          # (N,) strings
    edge_roles: np.ndarray          # (N-1,) strings
    head_nodes: np.ndarray          # (3,) node indices h-1, h, h+1
    motor_nodes: np.ndarray         # (1 or 2,) node indices
    head_edges: np.ndarray          # (2,) edge indices along the robot axis
    motor_edges: np.ndarray         # edge indices of the mount structure
    flagellum_nodes: list           # per flagellum, node indices in chain order
    flagellum_edges: list           # per flagellum, edge indices
    flagellum_tips: np.ndarray      # free-tip node index per flagellum
    actuation_nodes: np.ndarray     # interior node index per motor
    rest_len: np.ndarray            # (N-1,) undeformed edge lengths
    voronoi_len: np.ndarray         # (N-2,) interior-node lengths
    kappa_bar: np.ndarray           # (N-2, 2) natural material curvatures
    tau_bar: np.ndarray             # (N-2,) natural twist (mutated by actuation)
    EA_edge: np.ndarray             # (N-1,) stretching stiffness per edge
    EI_node: np.ndarray             # (N-2,) bending stiffness per interior node
    GJ_node: np.ndarray             # (N-2,) twisting stiffness per interior node
    mass: np.ndarray                # (4N-1,) lumped mass / twist inertia per DOF
    hydro_nodes: np.ndarray         # node indices carrying Stokeslet segments
    hydro_edges: np.ndarray         # edge indices integrated by the RSS kernel
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    @property
    def n_edges(self) -> int:
        return self.n_nodes - 1

    @property
    def n_dof(self) -> int:
        return dofs.n_dof(self.n_nodes)


def _node_masses(rest_len: np.ndarray, rho: float, r0: float) -> np.ndarray:
    area = math.pi * r0**2
    m = np.zeros(rest_len.shape[0] + 1)
    m[:-1] += 0.5 * rho * area * rest_len
    m[1:] += 0.5 * rho * area * rest_len
    return m


def assemble_robot(params: PhysicalParams, pitch_values=None, flagella_count: int = 2, *,
                   base_separation: float | None = None,
                   head_node_spacing: float | None = None,
                   shaft_length: float | None = None,
                   head_height: float = DEFAULT_HEAD_HEIGHT,
                   head_mass: float | None = None,
                   head_spin_inertia: float | None = None,
                   head_stiffness_scale: float = 1.0e3,
                   handedness: str = "left"):
    """Build the chain, tag roles, and freeze the undeformed state.

    Returns (RobotTopology, q0) with all twist angles zero. The natural
    curvatures and twist are measured on the as-built geometry so the
    initial configuration is stress free.
    """
    if flagella_count not in (1, 2):
        raise ValueError(f"flagella_count must be 1 or 2, got {flagella_count}")
    if pitch_values is None:
        pitch_values = [params.pitch] * flagella_count
    else:
        pitch_values = list(np.atleast_1d(pitch_values).astype(float))
        if len(pitch_values) == 1:
            pitch_values = pitch_values * flagella_count
        if len(pitch_values) != flagella_count:
            raise ValueError(
                f"got {len(pitch_values)} pitch values for {flagella_count} flagella")

    sep = params.head_radius if base_separation is None else base_separation
    dh = params.edge_length if head_node_spacing is None else head_node_spacing
    gap = params.edge_length if shaft_length is None else shaft_length
    if head_mass is None:
        head_mass = params.density * math.pi * params.head_radius**2 * head_height

    u_ax = 0.5 * sep
    # flagellum A: tip -> base, base node directly below motor node m1
    helix_a = build_helix(params.helix_radius, pitch_values[0], params.axial_length,
                          handedness, params.edge_length, phase_end=0.0)
    helix_a = helix_a + np.array([-gap - params.axial_length,
                                  -u_ax - params.helix_radius, 0.0])
    base_a = helix_a[-1]
    m1 = base_a + np.array([gap, 0.0, 0.0])

    head = np.array([[-dh, 0.0, 0.0], [0.0, 0.0, 0.0], [dh, 0.0, 0.0]])

    nodes = [helix_a, m1[None, :], head]
    roles = ([ROLE_FLAG_A] * helix_a.shape[0] + [ROLE_MOTOR1] + [ROLE_HEAD] * 3)

    if flagella_count == 2:
        # flagellum B is the half-turn rotation of A about the robot axis,
        # traversed base -> tip; rotation preserves the helix handedness
        helix_b = build_helix(params.helix_radius, pitch_values[1], params.axial_length,
                              handedness, params.edge_length, phase_end=0.0)
        helix_b = helix_b + np.array([-gap - params.axial_length,
                                      -u_ax - params.helix_radius, 0.0])
        helix_b = helix_b * np.array([1.0, -1.0, -1.0])
        helix_b = helix_b[::-1]
        m2 = helix_b[0] + np.array([gap, 0.0, 0.0])
        nodes += [m2[None, :], helix_b]
        roles += [ROLE_MOTOR2] + [ROLE_FLAG_B] * helix_b.shape[0]

    pos = np.vstack(nodes)
    n = pos.shape[0]
    node_roles = np.array(roles)

    na = helix_a.shape[0]
    m1_idx = na
    head_idx = np.array([na + 1, na + 2, na + 3])
    motor_nodes = [m1_idx]
    flag_nodes = [np.arange(na)]
    flag_edges = [np.arange(na - 1)]
    tips = [0]

    edge_roles = np.empty(n - 1, dtype=object)
    edge_roles[:na - 1] = EDGE_FLAGELLUM
    edge_roles[na - 1] = EDGE_MOTOR      # base_a -> m1 shaft
    edge_roles[na] = EDGE_MOTOR          # m1 -> h-1
    edge_roles[na + 1] = EDGE_HEAD       # h-1 -> h
    edge_roles[na + 2] = EDGE_HEAD       # h -> h+1
    head_edges = np.array([na + 1, na + 2])
    motor_edges = [na - 1, na]
    if flagella_count == 2:
        m2_idx = na + 4
        nb = n - (na + 5)
        edge_roles[na + 3] = EDGE_MOTOR  # h+1 -> m2
        edge_roles[na + 4] = EDGE_MOTOR  # m2 -> base_b shaft
        edge_roles[na + 5:] = EDGE_FLAGELLUM
        motor_nodes.append(m2_idx)
        motor_edges += [na + 3, na + 4]
        flag_nodes.append(np.arange(na + 5, n))
        flag_edges.append(np.arange(na + 5, n - 1))
        tips.append(n - 1)
    edge_roles = np.array(edge_roles.tolist())

    q0 = dofs.pack(pos, np.zeros(n - 1))

    rest_len = np.linalg.norm(dofs.edges(pos), axis=1)
    voronoi = 0.5 * (rest_len[:-1] + rest_len[1:])

    # stress-free curvature/twist measured on the as-built shape
    fs = frames.init_reference_frames(q0, n)
    kb = _curvature_binormal(fs.t, rest_len)
    kappa_bar = np.column_stack((
        0.5 * np.einsum("ij,ij->i", fs.m2[:-1] + fs.m2[1:], kb),
        -0.5 * np.einsum("ij,ij->i", fs.m1[:-1] + fs.m1[1:], kb),
    ))
    tau_bar = frames.reference_twist(fs)

    edge_scale = np.where(edge_roles == EDGE_FLAGELLUM, 1.0, head_stiffness_scale)
    node_scale = np.minimum(edge_scale[:-1], edge_scale[1:])
    EA_edge = params.EA * edge_scale
    EI_node = params.EI * node_scale
    GJ_node = params.GJ * node_scale

    node_mass = _node_masses(rest_len, params.density, params.rod_radius)
    node_mass[head_idx] += head_mass / 3.0
    area = math.pi * params.rod_radius**2
    twist_inertia = 0.5 * (params.density * area * rest_len) * params.rod_radius**2
    # the head edges' twist DOFs are the head's spin; they must carry its
    # rotational inertia or the explicitly coupled drag torque (coefficient
    # C_r 8 pi mu r_h^3 >> rod twist inertia / dt) is violently unstable
    if head_spin_inertia is None:
        head_spin_inertia = 0.5 * head_mass * params.head_radius**2
    twist_inertia[head_edges] += head_spin_inertia / 2.0
    mass = np.empty(dofs.n_dof(n))
    mass[0::4] = node_mass
    mass[1::4] = node_mass
    mass[2::4] = node_mass
    mass[3::4] = twist_inertia

    hydro_mask = (node_roles == ROLE_FLAG_A) | (node_roles == ROLE_FLAG_B)
    hydro_nodes = np.flatnonzero(hydro_mask)
    hydro_edges = np.flatnonzero(edge_roles == EDGE_FLAGELLUM)

    topo = RobotTopology(
        n_nodes=n,
        node_roles=node_roles,
        edge_roles=edge_roles,
        head_nodes=head_idx,
        motor_nodes=np.array(motor_nodes),
        head_edges=head_edges,
        motor_edges=np.array(motor_edges),
        flagellum_nodes=flag_nodes,
        flagellum_edges=flag_edges,
        flagellum_tips=np.array(tips),
        actuation_nodes=np.array(motor_nodes),
        rest_len=rest_len,
        voronoi_len=voronoi,
        kappa_bar=kappa_bar,
        tau_bar=tau_bar,
        EA_edge=EA_edge,
        EI_node=EI_node,
        GJ_node=GJ_node,
        mass=mass,
        hydro_nodes=hydro_nodes,
        hydro_edges=hydro_edges,
    )
    return topo, q0


def _curvature_binormal(t: np.ndarray, rest_len: np.ndarray) -> np.ndarray:
    """Discrete curvature binormal 2 t_e x t_f / (1 + t_e . t_f) per interior node."""
    chi = 1.0 + np.einsum("ij,ij->i", t[:-1], t[1:])
    if np.any(chi < 1e-12):
        raise ValueError("consecutive edges are antiparallel; curvature is singular")
    return 2.0 * np.cross(t[:-1], t[1:]) / chi[:, None]
