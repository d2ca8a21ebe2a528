"""
Lowest-order Lagrange spaces: P1 on triangles, Q1 on quadrilaterals.

Everything is evaluated in vectorized form over all cells and quadrature
points at once. A :class:`CellGeometry` holds, for one mesh and one
quadrature rule, the shape function values, the physical gradients and the
integration weights ``w_q |det J|``; it is cached on the mesh.

Vector fields are numbered node-major: dof ``d*node + component``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import tensor
from .errors import InvalidArgument
from .mesh import QUADRILATERAL, TRIANGLE, Mesh

SCALAR = "scalar"
VECTOR = "vector"


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Points on the reference cell and weights summing to its measure.

    The reference triangle is {x, y >= 0, x + y <= 1}; the reference
    quadrilateral is [-1, 1]^2.
    """

    cell_kind: str
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


def _dunavant5():
    a1, b1, w1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
    a2, b2, w2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
    pts = [(1 / 3, 1 / 3)]
    pts += [(b1, b1), (a1, b1), (b1, a1)]
    pts += [(b2, b2), (a2, b2), (b2, a2)]
    w = [0.225] + [w1] * 3 + [w2] * 3
    return np.array(pts), 0.5 * np.array(w)


def quadrature_rule(cell_kind: str, degree: int = 2) -> QuadratureRule:
    """Quadrature rule exact for polynomials of the requested total degree.

    Triangles: degree <= 2 uses the three edge midpoints, degree <= 5 the
    7-point Dunavant rule. Quadrilaterals: tensor Gauss-Legendre with
    ``ceil((degree + 1) / 2)`` points per direction (degree 3 gives 2x2).
    """
    if cell_kind == TRIANGLE:
        if degree <= 2:
            pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
            return QuadratureRule(TRIANGLE, pts, np.full(3, 1.0 / 6.0), 2)
        if degree <= 5:
            pts, w = _dunavant5()
            return QuadratureRule(TRIANGLE, pts, w, 5)
        raise InvalidArgument(f"triangle rules available up to degree 5, requested {degree}")
    if cell_kind == QUADRILATERAL:
        npts = max(1, -(-(degree + 1) // 2))
        g, gw = np.polynomial.legendre.leggauss(npts)
        X, Y = np.meshgrid(g, g)
        W = np.outer(gw, gw)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        return QuadratureRule(QUADRILATERAL, pts, W.ravel(), 2 * npts - 1)
    raise InvalidArgument(f"unknown cell kind {cell_kind!r}")


def default_rule(cell_kind: str) -> QuadratureRule:
    """Edge-midpoint rule on triangles, 2x2 Gauss on quadrilaterals."""
    return quadrature_rule(cell_kind, 2 if cell_kind == TRIANGLE else 3)


def monomial_integral(cell_kind: str, a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference cell."""
    if cell_kind == TRIANGLE:
        return factorial(a) * factorial(b) / factorial(a + b + 2)
    ia = 0.0 if a % 2 else 2.0 / (a + 1)
    ib = 0.0 if b % 2 else 2.0 / (b + 1)
    return ia * ib


# ---------------------------------------------------------------------------
# Shape functions and geometry
# ---------------------------------------------------------------------------

_QUAD_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def shape_functions(cell_kind: str, points: np.ndarray):
    """Values ``(Q, nloc)`` and reference gradients ``(Q, nloc, 2)``."""
    points = np.atleast_2d(points)
    xi, eta = points[:, 0], points[:, 1]
    if cell_kind == TRIANGLE:
        N = np.column_stack([1.0 - xi - eta, xi, eta])
        dN = np.broadcast_to(
            np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(xi), 3, 2)
        ).copy()
        return N, dN
    sx, sy = _QUAD_CORNERS[:, 0], _QUAD_CORNERS[:, 1]
    fx = 1.0 + np.outer(xi, sx)
    fy = 1.0 + np.outer(eta, sy)
    N = 0.25 * fx * fy
    dN = np.stack([0.25 * sx * fy, 0.25 * fx * sy], axis=-1)
    return N, dN


@dataclass
class CellGeometry:
    """Per-cell, per-quadrature-point data for one mesh and one rule."""

    rule: QuadratureRule
    N: np.ndarray  # (Q, nloc)
    dN: np.ndarray  # (C, Q, nloc, 2) physical gradients
    wdet: np.ndarray  # (C, Q)
    xq: np.ndarray  # (C, Q, 2)


def geometry(mesh: Mesh, rule: QuadratureRule | None = None) -> CellGeometry:
    rule = rule or default_rule(mesh.cell_kind)
    if rule.cell_kind != mesh.cell_kind:
        raise InvalidArgument(f"{rule.cell_kind} rule used on a {mesh.cell_kind} mesh")
    key = ("geometry", rule.cell_kind, rule.degree)
    if key in mesh._cache:
        return mesh._cache[key]
    N, dNref = shape_functions(mesh.cell_kind, rule.points)
    X = mesh.nodes[mesh.cells]  # (C, nloc, 2)
    J = np.einsum("cai,qaj->cqij", X, dNref)  # dx_i / dxi_j
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        raise InvalidArgument("inverted or degenerate cell mapping")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    dN = np.einsum("qaj,cqji->cqai", dNref, inv)
    geom = CellGeometry(
        rule=rule,
        N=N,
        dN=dN,
        wdet=det * rule.weights,
        xq=np.einsum("qa,cai->cqi", N, X),
    )
    mesh._cache[key] = geom
    return geom


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: Mesh
    field_kind: str = SCALAR
    constrained_dofs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.field_kind not in (SCALAR, VECTOR):
            raise InvalidArgument(f"field_kind must be 'scalar' or 'vector', got {self.field_kind!r}")
        for dof in self.constrained_dofs:
            if not 0 <= dof < self.n_dofs:
                raise InvalidArgument(f"constrained dof {dof} out of range")

    @property
    def dofs_per_node(self) -> int:
        return 1 if self.field_kind == SCALAR else self.mesh.dim

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_nodes * self.dofs_per_node

    def cell_dofs(self) -> np.ndarray:
        """(C, nloc * dofs_per_node) global dof indices, node-major within a cell."""
        k = self.dofs_per_node
        return (self.mesh.cells[:, :, None] * k + np.arange(k)).reshape(self.mesh.n_cells, -1)


@dataclass(eq=False)
class Field:
    """Nodal coefficient vector of a P1/Q1 function (mm for u, 1 for phi, K for theta)."""

    dofmap: DofMap
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.dofmap.n_dofs,):
            raise InvalidArgument(
                f"coefficient vector has shape {self.coeffs.shape}, expected ({self.dofmap.n_dofs},)"
            )

    @property
    def mesh(self) -> Mesh:
        return self.dofmap.mesh

    @property
    def kind(self) -> str:
        return self.dofmap.field_kind

    def nodal(self) -> np.ndarray:
        """Values per node: (N,) for scalars, (N, d) for vectors."""
        if self.kind == SCALAR:
            return self.coeffs
        return self.coeffs.reshape(-1, self.dofmap.dofs_per_node)

    def copy(self) -> "Field":
        return Field(self.dofmap, self.coeffs.copy())

    def with_coeffs(self, coeffs) -> "Field":
        return Field(self.dofmap, coeffs)

    def __add__(self, other):
        _same_space(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_space(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, alpha):
        return self.with_coeffs(alpha * self.coeffs)

    __rmul__ = __mul__


def _same_space(a: Field, b: Field) -> None:
    if a.mesh is not b.mesh or a.kind != b.kind:
        raise InvalidArgument("fields live on different meshes or spaces")


def scalar_space(mesh: Mesh) -> DofMap:
    return DofMap(mesh, SCALAR)


def vector_space(mesh: Mesh) -> DofMap:
    return DofMap(mesh, VECTOR)


def zero_field(mesh: Mesh, kind: str = SCALAR) -> Field:
    dm = DofMap(mesh, kind)
    return Field(dm, np.zeros(dm.n_dofs))


def interpolate_nodal(mesh: Mesh, f, kind: str | None = None, t: float | None = None) -> Field:
    """Nodal interpolant of ``f``.

    ``f`` maps an ``(N, 2)`` array of points (and ``t`` if given) to ``(N,)``
    or ``(N, d)`` values; a constant (scalar or sequence) is also accepted.
    The field kind is inferred from the value shape unless given.
    """
    x = mesh.nodes
    if callable(f):
        vals = f(x) if t is None else f(x, t)
    else:
        vals = f
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 0:
        vals = np.full(mesh.n_nodes, float(vals))
    elif vals.ndim == 1 and vals.shape[0] != mesh.n_nodes:
        vals = np.broadcast_to(vals, (mesh.n_nodes, vals.shape[0]))
    if vals.shape[0] != mesh.n_nodes:
        raise InvalidArgument(f"function returned {vals.shape[0]} values for {mesh.n_nodes} nodes")
    if not np.all(np.isfinite(vals)):
        raise InvalidArgument("interpolated function is not finite at every node")
    inferred = SCALAR if vals.ndim == 1 else VECTOR
    kind = kind or inferred
    if kind != inferred:
        raise InvalidArgument(f"function values have {inferred} shape but {kind} field requested")
    if kind == VECTOR and vals.shape[1] != mesh.dim:
        raise InvalidArgument(f"vector field needs {mesh.dim} components, got {vals.shape[1]}")
    return Field(DofMap(mesh, kind), vals.reshape(-1).copy())


# ---------------------------------------------------------------------------
# Evaluation at quadrature points
# ---------------------------------------------------------------------------


def values_at_qp(f: Field, geom: CellGeometry | None = None) -> np.ndarray:
    """(C, Q) for scalars, (C, Q, d) for vectors."""
    geom = geom or geometry(f.mesh)
    local = f.nodal()[f.mesh.cells]
    if f.kind == SCALAR:
        return np.einsum("qa,ca->cq", geom.N, local)
    return np.einsum("qa,cai->cqi", geom.N, local)


def gradient_at_qp(f: Field, geom: CellGeometry | None = None) -> np.ndarray:
    """(C, Q, 2) for scalars; (C, Q, d, 2) with ``[..., i, j] = du_i/dx_j`` for vectors."""
    geom = geom or geometry(f.mesh)
    local = f.nodal()[f.mesh.cells]
    if f.kind == SCALAR:
        return np.einsum("cqaj,ca->cqj", geom.dN, local)
    return np.einsum("cqaj,cai->cqij", geom.dN, local)


def strain_at_qp(u: Field, geom: CellGeometry | None = None) -> np.ndarray:
    if u.kind != VECTOR:
        raise InvalidArgument("strain requires a vector field")
    return tensor.sym_grad(gradient_at_qp(u, geom))


def divergence_at_qp(u: Field, geom: CellGeometry | None = None) -> np.ndarray:
    if u.kind != VECTOR:
        raise InvalidArgument("divergence requires a vector field")
    return np.trace(gradient_at_qp(u, geom), axis1=-2, axis2=-1)


def eval_strain(u: Field, cell: int, qp: int, rule: QuadratureRule | None = None) -> tensor.SymTensor2:
    """Strain E(u) = (grad u + grad u^T)/2 at one quadrature point of one cell."""
    if u.kind != VECTOR:
        raise InvalidArgument("eval_strain requires a vector field")
    geom = geometry(u.mesh, rule)
    local = u.nodal()[u.mesh.cells[cell]]
    grad = np.einsum("aj,ai->ij", geom.dN[cell, qp], local)
    return tensor.SymTensor2.from_matrix(0.5 * (grad + grad.T))


def eval_divergence(u: Field, cell: int, qp: int, rule: QuadratureRule | None = None) -> float:
    if u.kind != VECTOR:
        raise InvalidArgument("eval_divergence requires a vector field")
    return eval_strain(u, cell, qp, rule).trace


def integrate(values_qp: np.ndarray, geom: CellGeometry) -> float:
    """Integral of quadrature-point data (C, Q, ...) summed over all trailing axes."""
    v = values_qp.reshape(values_qp.shape[0], values_qp.shape[1], -1)
    return float(np.einsum("cq,cqk->", geom.wdet, v))


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

L2 = "L2"
H1SEMI = "H1semi"
ANORM = "Anorm"


def norm(f: Field, kind: str = L2, moduli: tensor.ElasticModuli | None = None,
         rule: QuadratureRule | None = None) -> float:
    """L2 norm, H1 seminorm, or the energy norm ``sqrt(int A(E(u)):E(u))``."""
    geom = geometry(f.mesh, rule)
    if kind == L2:
        v = values_at_qp(f, geom)
        return np.sqrt(integrate(v**2, geom))
    if kind == H1SEMI:
        g = gradient_at_qp(f, geom)
        return np.sqrt(integrate(g**2, geom))
    if kind == ANORM:
        if f.kind != VECTOR or moduli is None:
            raise InvalidArgument("the A-norm needs a vector field and elastic moduli")
        E = strain_at_qp(f, geom)
        return np.sqrt(integrate(tensor.B_array(moduli, E), geom))
    raise InvalidArgument(f"unknown norm kind {kind!r}")


def error_norm(f: Field, exact, kind: str = L2, exact_grad=None, t: float | None = None,
               rule: QuadratureRule | None = None) -> float:
    """Norm of ``f - exact`` evaluated with a high-order quadrature rule.

    ``exact`` and ``exact_grad`` take an ``(P, 2)`` array of points (and ``t``
    if given). For vectors, ``exact_grad`` returns ``(P, d, 2)``.
    """
    rule = rule or quadrature_rule(f.mesh.cell_kind, 5)
    geom = geometry(f.mesh, rule)
    pts = geom.xq.reshape(-1, 2)
    call = (lambda fn: fn(pts)) if t is None else (lambda fn: fn(pts, t))
    if kind == L2:
        ex = np.asarray(call(exact)).reshape(values_at_qp(f, geom).shape)
        diff = values_at_qp(f, geom) - ex
    elif kind == H1SEMI:
        if exact_grad is None:
            raise InvalidArgument("H1 error needs the exact gradient")
        gh = gradient_at_qp(f, geom)
        diff = gh - np.asarray(call(exact_grad)).reshape(gh.shape)
    else:
        raise InvalidArgument(f"unsupported error norm {kind!r}")
    return np.sqrt(integrate(diff**2, geom))


# ---------------------------------------------------------------------------
# Recovery of quadrature-point data at the nodes
# ---------------------------------------------------------------------------


def node_patches(mesh: Mesh):
    """CSR-like (offsets, cells) listing the cells around every node."""
    if "patches" not in mesh._cache:
        nodes = mesh.cells.ravel()
        cells = np.repeat(np.arange(mesh.n_cells), mesh.nodes_per_cell)
        order = np.argsort(nodes, kind="stable")
        counts = np.bincount(nodes, minlength=mesh.n_nodes)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        mesh._cache["patches"] = (offsets, cells[order])
    return mesh._cache["patches"]


def recover_gauss_to_nodes(mesh: Mesh, values_qp: np.ndarray, geom: CellGeometry | None = None,
                           n_closest: int = 4, exponent: float = 1.0) -> np.ndarray:
    """Inverse-distance average of the closest quadrature-point values.

    For every node the candidates are the quadrature points of the cells
    sharing that node; the ``n_closest`` nearest are combined with weights
    ``1 / dist**exponent``. A candidate at distance zero is returned exactly.

    Parameters
    ----------
    values_qp : (C, Q, ...) array
        Data at the quadrature points of ``geom`` (default rule if omitted).

    Returns
    -------
    (N, ...) array of nodal values.
    """
    geom = geom or geometry(mesh)
    values_qp = np.asarray(values_qp, dtype=float)
    C, Q = values_qp.shape[:2]
    if (C, Q) != geom.wdet.shape:
        raise InvalidArgument("quadrature data does not match the mesh/rule")
    tail = values_qp.shape[2:]
    flat_vals = values_qp.reshape(C * Q, -1)
    flat_pts = geom.xq.reshape(C * Q, 2)
    offsets, patch_cells = node_patches(mesh)
    out = np.empty((mesh.n_nodes, flat_vals.shape[1]))
    qidx = np.arange(Q)
    for node in range(mesh.n_nodes):
        cells = patch_cells[offsets[node]: offsets[node + 1]]
        cand = (cells[:, None] * Q + qidx).ravel()
        dist = np.linalg.norm(flat_pts[cand] - mesh.nodes[node], axis=1)
        k = min(n_closest, len(cand))
        pick = np.argsort(dist, kind="stable")[:k]
        d = dist[pick]
        if d[0] == 0.0:
            out[node] = flat_vals[cand[pick[0]]]
            continue
        w = 1.0 / d**exponent
        out[node] = (w @ flat_vals[cand[pick]]) / w.sum()
    return out.reshape((mesh.n_nodes,) + tail)


def recovered_gradient(f: Field, geom: CellGeometry | None = None) -> np.ndarray:
    """Gradient at the Gauss points recovered at the nodes: (N, 2) or (N, d, 2)."""
    geom = geom or geometry(f.mesh)
    return recover_gauss_to_nodes(f.mesh, gradient_at_qp(f, geom), geom)


def nodal_l2(mesh: Mesh, nodal: np.ndarray, rule: QuadratureRule | None = None) -> float:
    """L2 norm of the P1/Q1 interpolant of nodal data of any trailing shape."""
    geom = geometry(mesh, rule)
    flat = np.asarray(nodal, dtype=float).reshape(mesh.n_nodes, -1)
    vals = np.einsum("qa,cak->cqk", geom.N, flat[mesh.cells])
    return np.sqrt(integrate(vals**2, geom))
