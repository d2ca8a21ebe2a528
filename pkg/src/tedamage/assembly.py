"""
Weak forms of the fully discrete thermo-elastic-damage scheme.

One time step couples three equations, each lagged so they can be solved in
sequence (damage, then displacement, then temperature):

momentum, for u^{k+1}::

    (u^{k+1} - 2u^k + u^{k-1})/tau^2 . v + (phi^{k+1}^2 + kappa) A(E(u^{k+1})) : E(v)
        - rho theta^k div v  =  I_h f^k . v

damage, for phi^{k+1}::

    ell grad phi . grad w + phi w / ell + gamma0 [phi - phi^k]_+ w
        + phi A(E(u^k)):E(u^k) w / Gc  =  0

heat, for theta^{k+1}::

    (theta - theta^k)/tau z + K(theta) grad theta . grad z
        + rho theta^k div((u^{k+1} - u^{k-1}) / 2 tau) z + gbar^k z|_Gamma  =  I_h gamma^k z

Matrices are assembled with vectorized element kernels into CSR form; the
element loops are over quadrature points of the default rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import linalg, tensor
from .errors import InvalidArgument
from .mesh import Mesh
from .space import (
    SCALAR,
    VECTOR,
    CellGeometry,
    DofMap,
    Field,
    divergence_at_qp,
    geometry,
    gradient_at_qp,
    strain_at_qp,
    values_at_qp,
)

apply_dirichlet = linalg.apply_dirichlet

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConductivityModel:
    """Heat conductivity K(theta): constant, or c1 (|theta|^beta + 1).

    ``beta`` also sets the exponent (beta+2)^2/(beta+1)^2 used by the a
    priori data functionals, so it is carried for the constant model too.
    """

    kind: str = "constant"
    K_const: float = 1.0
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    beta: float = 1.5
    dim: int = 2

    def __post_init__(self):
        if self.kind not in ("constant", "power-law"):
            raise InvalidArgument(f"conductivity kind must be 'constant' or 'power-law', got {self.kind!r}")
        beta_d = 2.0 if self.dim == 2 else 5.0 / 3.0
        if not 1.0 < self.beta < beta_d:
            raise InvalidArgument(f"beta must lie in (1, {beta_d}) for d={self.dim}, got {self.beta}")
        if self.kind == "constant":
            if not self.K_const > 0:
                raise InvalidArgument("constant conductivity must be positive")
        else:
            if not (self.c0 > 0 and self.c1 > 0 and self.c2 > 0):
                raise InvalidArgument("c0, c1, c2 must be positive")
            if not (self.c0 <= self.c1 <= self.c2):
                raise InvalidArgument("power-law bounds need c0 <= c1 <= c2")

    def K(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "constant":
            return np.full_like(theta, self.K_const)
        return self.c1 * (np.abs(theta) ** self.beta + 1.0)

    def dK(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(theta)
        return self.c1 * self.beta * np.abs(theta) ** (self.beta - 1.0) * np.sign(theta)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"


@dataclass(frozen=True)
class ModelParams:
    """Material and model constants.

    rho is the thermal expansion coupling; ``rho = 0`` decouples the
    temperature from the displacement and is allowed for verification runs.
    """

    moduli: tensor.ElasticModuli
    rho: float
    kappa: float
    ell: float
    Gc: float
    gamma0: float
    conductivity: ConductivityModel = field(default_factory=ConductivityModel)

    def __post_init__(self):
        for name in ("kappa", "ell", "Gc", "gamma0"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive, got {getattr(self, name)}")
        if not self.rho >= 0:
            raise InvalidArgument(f"rho must be non-negative, got {self.rho}")

    @property
    def gamma_kappa(self) -> float:
        return self.rho**4 / self.kappa

    def advisory(self, h: float) -> dict:
        """Ratios behind the kappa = O(ell), h = O(ell) scaling assumptions."""
        return {
            "kappa_over_ell": self.kappa / self.ell,
            "h_over_ell": h / self.ell,
            "kappa_le_ell": self.kappa <= self.ell,
            "h_le_ell": h <= self.ell,
        }


# ---------------------------------------------------------------------------
# Boundary conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryCondition:
    """One condition on one tagged boundary part.

    ``value(x, t)`` maps an ``(P, 2)`` array of points to ``(P,)`` values for
    scalar fields or ``(P, d)`` for the displacement. ``components``
    restricts a displacement Dirichlet condition to some components.
    """

    tag: str
    kind: str
    value: Callable
    components: tuple | None = None

    def __post_init__(self):
        if self.kind not in (DIRICHLET, NEUMANN):
            raise InvalidArgument(f"boundary condition kind must be dirichlet or neumann, got {self.kind!r}")


@dataclass(frozen=True)
class BCSpec:
    displacement: tuple = ()
    damage: tuple = ()
    temperature: tuple = ()

    def __post_init__(self):
        for name in ("displacement", "damage", "temperature"):
            bcs = tuple(getattr(self, name))
            object.__setattr__(self, name, bcs)
            tags = [bc.tag for bc in bcs]
            if len(tags) != len(set(tags)):
                raise InvalidArgument(f"a boundary tag appears twice in the {name} conditions")
        if any(bc.kind == NEUMANN for bc in self.damage):
            raise InvalidArgument("the damage field only admits its natural (zero-flux) Neumann condition")

    def check_tags(self, mesh: Mesh) -> None:
        known = mesh.tags
        for bc in self.displacement + self.damage + self.temperature:
            if bc.tag not in known:
                raise InvalidArgument(f"unknown boundary tag {bc.tag!r}; mesh has {sorted(known)}")


def dirichlet_dofs(dofmap: DofMap, bcs, t: float):
    """Constrained dof indices and their values at time ``t``."""
    mesh = dofmap.mesh
    dofs, vals = [], []
    for bc in bcs:
        if bc.kind != DIRICHLET:
            continue
        nodes = mesh.nodes_with_tag(bc.tag)
        v = np.asarray(bc.value(mesh.nodes[nodes], t), dtype=float)
        if not np.all(np.isfinite(v)):
            raise InvalidArgument(f"non-finite Dirichlet data on {bc.tag!r}")
        if dofmap.field_kind == SCALAR:
            dofs.append(nodes)
            vals.append(np.broadcast_to(v, nodes.shape))
        else:
            d = dofmap.dofs_per_node
            v = np.broadcast_to(v, (len(nodes), d))
            comps = bc.components if bc.components is not None else range(d)
            for c in comps:
                dofs.append(d * nodes + c)
                vals.append(v[:, c])
    if not dofs:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    dofs = np.concatenate(dofs)
    vals = np.concatenate(vals)
    # later conditions win on shared corner nodes
    _, last = np.unique(dofs[::-1], return_index=True)
    keep = len(dofs) - 1 - last
    return dofs[keep], vals[keep]


# facet quadrature: 2-point Gauss on [0, 1]
_FG = 0.5 + 0.5 * np.array([-1.0, 1.0]) / np.sqrt(3.0)
_FW = np.array([0.5, 0.5])


def _facet_points(mesh: Mesh, facets: np.ndarray):
    a, b = mesh.nodes[facets[:, 0]], mesh.nodes[facets[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    pts = a[:, None, :] + _FG[None, :, None] * (b - a)[:, None, :]  # (F, 2, 2)
    return pts, length


def boundary_load(mesh: Mesh, bcs, t: float, kind: str = SCALAR) -> np.ndarray:
    """Load vector of ``int_Gamma g . v ds`` over all Neumann conditions in ``bcs``."""
    d = 1 if kind == SCALAR else mesh.dim
    out = np.zeros(mesh.n_nodes * d)
    for bc in bcs:
        if bc.kind != NEUMANN:
            continue
        facets = mesh.facets_with_tag(bc.tag)
        if len(facets) == 0:
            continue
        pts, length = _facet_points(mesh, facets)
        g = np.asarray(bc.value(pts.reshape(-1, 2), t), dtype=float).reshape(len(facets), 2, -1)
        wl = length[:, None] * _FW  # (F, 2)
        shape = np.stack([1.0 - _FG, _FG], axis=1)  # (qp, endpoint)
        local = np.einsum("fq,qe,fqk->fek", wl, shape, g)  # (F, 2 endpoints, k)
        for e in range(2):
            for c in range(d):
                np.add.at(out, facets[:, e] * d + c, local[:, e, c if g.shape[2] > 1 else 0])
    return out


def boundary_norm(mesh: Mesh, bcs, t: float) -> float:
    """L2(Gamma) norm of the Neumann data (zero on untagged parts)."""
    total = 0.0
    for bc in bcs:
        if bc.kind != NEUMANN:
            continue
        facets = mesh.facets_with_tag(bc.tag)
        if len(facets) == 0:
            continue
        pts, length = _facet_points(mesh, facets)
        g = np.asarray(bc.value(pts.reshape(-1, 2), t), dtype=float).reshape(len(facets), 2, -1)
        total += float(np.einsum("f,q,fqk->", length, _FW, g**2))
    return np.sqrt(total)


# ---------------------------------------------------------------------------
# Element kernels and global assembly
# ---------------------------------------------------------------------------


def _assemble(row_map: DofMap, col_map: DofMap, local: np.ndarray) -> sp.csr_matrix:
    rd, cd = row_map.cell_dofs(), col_map.cell_dofs()
    nr, nc = rd.shape[1], cd.shape[1]
    rows = np.repeat(rd, nc, axis=1).ravel()
    cols = np.tile(cd, (1, nr)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(row_map.n_dofs, col_map.n_dofs))
    return linalg.as_system_matrix(A)


def _scatter(dofmap: DofMap, local: np.ndarray) -> np.ndarray:
    return np.bincount(dofmap.cell_dofs().ravel(), weights=local.ravel(), minlength=dofmap.n_dofs)


def mass_matrix(dofmap: DofMap, coeff=None, geom: CellGeometry | None = None) -> sp.csr_matrix:
    """Scalar or vector mass matrix with optional coefficient at quadrature points."""
    geom = geom or geometry(dofmap.mesh)
    wc = geom.wdet if coeff is None else geom.wdet * coeff
    Me = np.einsum("cq,qa,qb->cab", wc, geom.N, geom.N)
    if dofmap.field_kind == VECTOR:
        d = dofmap.dofs_per_node
        Me = np.einsum("cab,ij->caibj", Me, np.eye(d)).reshape(Me.shape[0], -1, Me.shape[1] * d)
    return _assemble(dofmap, dofmap, Me)


def stiffness_matrix(dofmap: DofMap, coeff=None, geom: CellGeometry | None = None) -> sp.csr_matrix:
    """Scalar Laplace stiffness ``int c grad N_b . grad N_a``."""
    geom = geom or geometry(dofmap.mesh)
    wc = geom.wdet if coeff is None else geom.wdet * coeff
    Ke = np.einsum("cq,cqak,cqbk->cab", wc, geom.dN, geom.dN)
    return _assemble(dofmap, dofmap, Ke)


def elasticity_matrix(dofmap: DofMap, moduli: tensor.ElasticModuli, coeff=None,
                      geom: CellGeometry | None = None) -> sp.csr_matrix:
    """``int c A(E(N_b e_j)) : E(N_a e_i)`` for all node/component pairs."""
    geom = geom or geometry(dofmap.mesh)
    wc = geom.wdet if coeff is None else geom.wdet * coeff
    dN = geom.dN
    lam, mu = moduli.lam, moduli.mu
    d = dofmap.dofs_per_node
    K = lam * np.einsum("cq,cqai,cqbj->caibj", wc, dN, dN)
    K += mu * np.einsum("cq,cqaj,cqbi->caibj", wc, dN, dN)
    lap = np.einsum("cq,cqak,cqbk->cab", wc, dN, dN)
    K += mu * np.einsum("cab,ij->caibj", lap, np.eye(d))
    C, nl = K.shape[0], K.shape[1]
    return _assemble(dofmap, dofmap, K.reshape(C, nl * d, nl * d))


def load_vector(dofmap: DofMap, values_qp: np.ndarray, geom: CellGeometry | None = None) -> np.ndarray:
    """``int v . N_a`` for data at quadrature points: (C, Q) scalar or (C, Q, d) vector."""
    geom = geom or geometry(dofmap.mesh)
    if dofmap.field_kind == SCALAR:
        local = np.einsum("cq,cq,qa->ca", geom.wdet, values_qp, geom.N)
    else:
        local = np.einsum("cq,cqi,qa->cai", geom.wdet, values_qp, geom.N)
    return _scatter(dofmap, local)


def divergence_load(dofmap: DofMap, values_qp: np.ndarray, geom: CellGeometry | None = None) -> np.ndarray:
    """``int s div(N_a e_i)`` = ``int s I : E(N_a e_i)`` for scalar data ``s``."""
    geom = geom or geometry(dofmap.mesh)
    local = np.einsum("cq,cq,cqai->cai", geom.wdet, values_qp, geom.dN)
    return _scatter(dofmap, local)


def _check_same_mesh(*fields):
    mesh = fields[0].mesh
    for f in fields[1:]:
        if f.mesh is not mesh:
            raise InvalidArgument("all fields must live on the same mesh")
    return mesh


def _check_tau(tau):
    if not tau > 0:
        raise InvalidArgument(f"time step must be positive, got {tau}")


# ---------------------------------------------------------------------------
# The three equations
# ---------------------------------------------------------------------------


def degradation(phi_qp):
    return phi_qp**2


def assemble_momentum(u_k: Field, u_km1: Field, phi_kp1: Field, theta_k: Field, f_k: Field,
                      p: ModelParams, tau: float, traction: np.ndarray | None = None):
    """System matrix and right-hand side of the displacement update.

    The matrix is ``M / tau^2 + K[g(phi^{k+1}) + kappa]``; the right-hand side
    collects the interpolated load, the thermal coupling, the inertia terms
    of the previous two levels and an optional traction load vector.
    """
    mesh = _check_same_mesh(u_k, u_km1, phi_kp1, theta_k, f_k)
    _check_tau(tau)
    if u_k.kind != VECTOR or f_k.kind != VECTOR:
        raise InvalidArgument("displacement and load must be vector fields")
    geom = geometry(mesh)
    vdm = u_k.dofmap
    coeff = degradation(values_at_qp(phi_kp1, geom)) + p.kappa
    M = mass_matrix(vdm, geom=geom)
    K = elasticity_matrix(vdm, p.moduli, coeff, geom)
    matrix = linalg.as_system_matrix(M / tau**2 + K)
    rhs = M @ f_k.coeffs
    if p.rho:
        rhs += p.rho * divergence_load(vdm, values_at_qp(theta_k, geom), geom)
    rhs += M @ (2.0 * u_k.coeffs - u_km1.coeffs) / tau**2
    if traction is not None:
        rhs += traction
    return matrix, rhs


def momentum_residual(u_kp1: Field, u_k, u_km1, phi_kp1, theta_k, f_k, p, tau, traction=None):
    matrix, rhs = assemble_momentum(u_k, u_km1, phi_kp1, theta_k, f_k, p, tau, traction)
    return matrix @ u_kp1.coeffs - rhs


def assemble_damage(phi_trial: Field, phi_k: Field, u_k: Field, p: ModelParams):
    """Residual and generalized Jacobian of the penalized damage equation at ``phi_trial``.

    The penalty is active at quadrature points where ``phi_trial - phi_k > 0``;
    at the kink the inactive branch is taken.
    """
    mesh = _check_same_mesh(phi_trial, phi_k, u_k)
    geom = geometry(mesh)
    sdm = phi_trial.dofmap
    phi_q = values_at_qp(phi_trial, geom)
    inc = phi_q - values_at_qp(phi_k, geom)
    active = inc > 0
    drive = tensor.B_array(p.moduli, strain_at_qp(u_k, geom)) / p.Gc

    K = stiffness_matrix(sdm, geom=geom)
    reaction = phi_q / p.ell + p.gamma0 * np.where(active, inc, 0.0) + drive * phi_q
    residual = p.ell * (K @ phi_trial.coeffs) + load_vector(sdm, reaction, geom)
    jac_coeff = 1.0 / p.ell + p.gamma0 * active + drive
    jacobian = linalg.as_system_matrix(p.ell * K + mass_matrix(sdm, jac_coeff, geom))
    return residual, jacobian


def assemble_heat(theta_trial: Field, theta_k: Field, u_kp1: Field, u_km1: Field, gamma_k: Field,
                  gammabar_k: np.ndarray | None, p: ModelParams, tau: float):
    """Residual and Newton Jacobian of the heat equation at ``theta_trial``.

    ``gamma_k`` is the interpolated volume source; ``gammabar_k`` is the
    boundary vector ``int_Gamma gbar^k z ds`` (see :func:`boundary_load`),
    which enters the residual with a plus sign as in the discrete scheme.
    """
    mesh = _check_same_mesh(theta_trial, theta_k, u_kp1, u_km1, gamma_k)
    _check_tau(tau)
    geom = geometry(mesh)
    sdm = theta_trial.dofmap
    th_q = values_at_qp(theta_trial, geom)
    grad_th = gradient_at_qp(theta_trial, geom)
    cond = p.conductivity
    Kq = cond.K(th_q)

    source = (th_q - values_at_qp(theta_k, geom)) / tau - values_at_qp(gamma_k, geom)
    if p.rho:
        div_du = divergence_at_qp(u_kp1 - u_km1, geom) / (2.0 * tau)
        source = source + p.rho * values_at_qp(theta_k, geom) * div_du
    flux = np.einsum("cq,cq,cqk,cqak->ca", geom.wdet, Kq, grad_th, geom.dN)
    residual = load_vector(sdm, source, geom) + _scatter(sdm, flux)
    if gammabar_k is not None:
        residual = residual + gammabar_k

    jacobian = mass_matrix(sdm, geom=geom) / tau + stiffness_matrix(sdm, Kq, geom)
    if not cond.is_constant:
        dK = cond.dK(th_q)
        local = np.einsum("cq,cq,cqk,cqak,qb->cab", geom.wdet, dK, grad_th, geom.dN, geom.N)
        jacobian = jacobian + _assemble(sdm, sdm, local)
    return residual, linalg.as_system_matrix(jacobian)


# ---------------------------------------------------------------------------
# Off-diagonal blocks for the monolithic Newton step
# ---------------------------------------------------------------------------


def momentum_damage_coupling(u_kp1: Field, phi_kp1: Field, p: ModelParams) -> sp.csr_matrix:
    """d R_u / d phi: ``int 2 phi N_b A(E(u)) : E(N_a e_i)``."""
    geom = geometry(u_kp1.mesh)
    sigma = tensor.A_array(p.moduli, strain_at_qp(u_kp1, geom))
    w = geom.wdet * 2.0 * values_at_qp(phi_kp1, geom)
    local = np.einsum("cq,cqij,cqaj,qb->caib", w, sigma, geom.dN, geom.N)
    C, nl, d, _ = local.shape
    return _assemble(u_kp1.dofmap, phi_kp1.dofmap, local.reshape(C, nl * d, nl))


def heat_displacement_coupling(theta_k: Field, u_kp1: Field, p: ModelParams, tau: float) -> sp.csr_matrix:
    """d R_theta / d u^{k+1}: ``rho / (2 tau) int theta^k div(N_b e_j) N_a``."""
    geom = geometry(theta_k.mesh)
    w = geom.wdet * values_at_qp(theta_k, geom) * p.rho / (2.0 * tau)
    local = np.einsum("cq,qa,cqbj->cabj", w, geom.N, geom.dN)
    C, nl, _, d = local.shape
    return _assemble(theta_k.dofmap, u_kp1.dofmap, local.reshape(C, nl, nl * d))
