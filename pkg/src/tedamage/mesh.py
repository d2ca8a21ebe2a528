"""
Structured meshes of the unit square and of the single-edge-notched square.

A :class:`Mesh` stores node coordinates, cell connectivity (counter-clockwise
triangles or quadrilaterals) and the boundary facets with one tag each.
Meshes are treated as immutable once built; refinement returns a new mesh
whose first ``n_nodes`` nodes coincide with the parent nodes, so refined
families are nested node-for-node.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InvalidArgument, InvalidMesh

TRIANGLE = "triangle"
QUADRILATERAL = "quadrilateral"

_GEOM_TOL = 1e-12


class Mesh:
    """Unstructured storage for a structured 2D mesh.

    Parameters
    ----------
    nodes : (N, 2) array
        Node coordinates (mm).
    cells : (C, 3) or (C, 4) int array
        Node indices per cell, counter-clockwise.
    cell_kind : {'triangle', 'quadrilateral'}
    facets : (F, 2) int array
        Boundary facets as node pairs.
    facet_tags : sequence of str, length F
    """

    def __init__(self, nodes, cells, cell_kind, facets, facet_tags):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if cell_kind not in (TRIANGLE, QUADRILATERAL):
            raise InvalidArgument(f"unknown cell kind {cell_kind!r}")
        self.cell_kind = cell_kind
        nv = 3 if cell_kind == TRIANGLE else 4
        if self.cells.ndim != 2 or self.cells.shape[1] != nv:
            raise InvalidMesh(f"{cell_kind} cells need {nv} nodes each")
        self.facets = np.ascontiguousarray(facets, dtype=np.int64).reshape(-1, 2)
        self.facet_tags = np.asarray(facet_tags, dtype=object)
        if len(self.facet_tags) != len(self.facets):
            raise InvalidMesh("one tag per boundary facet required")
        for arr in (self.nodes, self.cells, self.facets):
            arr.flags.writeable = False
        self._cache = {}

        areas = self.cell_areas()
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise InvalidMesh(f"cell {bad} has non-positive area {areas[bad]:.3e}")

    # -- basic sizes -------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def nodes_per_cell(self) -> int:
        return self.cells.shape[1]

    @property
    def tags(self) -> set:
        return set(self.facet_tags.tolist())

    def __repr__(self):
        return (
            f"Mesh({self.cell_kind}, nodes={self.n_nodes}, cells={self.n_cells}, "
            f"tags={sorted(self.tags)})"
        )

    # -- geometry ----------------------------------------------------------
    def cell_areas(self) -> np.ndarray:
        """Signed areas by the shoelace formula."""
        x = self.nodes[self.cells]
        xs, ys = x[..., 0], x[..., 1]
        return 0.5 * np.sum(xs * np.roll(ys, -1, axis=1) - np.roll(xs, -1, axis=1) * ys, axis=1)

    def cell_diameters(self) -> np.ndarray:
        x = self.nodes[self.cells]
        nv = self.nodes_per_cell
        diam = np.zeros(self.n_cells)
        for a, b in combinations(range(nv), 2):
            diam = np.maximum(diam, np.linalg.norm(x[:, a] - x[:, b], axis=1))
        return diam

    @property
    def area(self) -> float:
        return float(self.cell_areas().sum())

    def local_edges(self):
        nv = self.nodes_per_cell
        return [(i, (i + 1) % nv) for i in range(nv)]

    def edges(self):
        """Unique undirected edges and, per cell, the index of each local edge."""
        if "edges" not in self._cache:
            pairs = np.stack([self.cells[:, [a, b]] for a, b in self.local_edges()], axis=1)
            flat = np.sort(pairs.reshape(-1, 2), axis=1)
            uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
            self._cache["edges"] = (uniq, inverse.reshape(self.n_cells, -1))
        return self._cache["edges"]

    # -- boundary ----------------------------------------------------------
    def facets_with_tag(self, tag: str) -> np.ndarray:
        return self.facets[self.facet_tags == tag]

    def nodes_with_tag(self, tag: str) -> np.ndarray:
        if tag not in self.tags:
            raise InvalidArgument(f"unknown boundary tag {tag!r}; mesh has {sorted(self.tags)}")
        return np.unique(self.facets_with_tag(tag))

    def facet_owner(self) -> np.ndarray:
        """Index of the unique cell containing each boundary facet (-1 if none)."""
        uniq, cell_edges = self.edges()
        lookup = {tuple(e): i for i, e in enumerate(uniq)}
        owners = [[] for _ in range(len(uniq))]
        for c, row in enumerate(cell_edges):
            for e in row:
                owners[e].append(c)
        result = np.full(len(self.facets), -1, dtype=np.int64)
        for i, (a, b) in enumerate(self.facets):
            e = lookup.get((min(a, b), max(a, b)))
            if e is not None and len(owners[e]) == 1:
                result[i] = owners[e][0]
        return result


def boundary_edges(cells: np.ndarray, cell_kind: str) -> np.ndarray:
    """Edges used by exactly one cell, oriented as in their owning cell."""
    nv = 3 if cell_kind == TRIANGLE else 4
    directed = np.concatenate([cells[:, [i, (i + 1) % nv]] for i in range(nv)])
    key = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return directed[counts[inverse.ravel()] == 1]


def _tag_facets(nodes, facets, rules):
    tags = []
    for a, b in facets:
        pa, pb = nodes[a], nodes[b]
        for tag, pred in rules:
            if pred(pa) and pred(pb):
                tags.append(tag)
                break
        else:
            raise InvalidMesh(f"boundary facet {(a, b)} at {pa}, {pb} matches no tag")
    return tags


def _close(v, target):
    return abs(v - target) <= _GEOM_TOL


_SQUARE_RULES = [
    ("bottom", lambda p: _close(p[1], 0.0)),
    ("top", lambda p: _close(p[1], 1.0)),
    ("left", lambda p: _close(p[0], 0.0)),
    ("right", lambda p: _close(p[0], 1.0)),
]


def _split_quads(quads: np.ndarray) -> np.ndarray:
    # diagonal from local node 0 to 2 keeps counter-clockwise orientation
    return np.concatenate([quads[:, [0, 1, 2]], quads[:, [0, 2, 3]]])


def _check_kind(kind):
    if kind not in (TRIANGLE, QUADRILATERAL):
        raise InvalidArgument(f"kind must be 'triangle' or 'quadrilateral', got {kind!r}")


def build_unit_square(n: int, kind: str = TRIANGLE) -> Mesh:
    """Uniform ``n x n`` mesh of (0, 1)^2 with tags left/right/top/bottom."""
    _check_kind(kind)
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n}")
    n = int(n)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    quads = np.column_stack(
        [idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(), idx[1:, 1:].ravel(), idx[1:, :-1].ravel()]
    )
    cells = quads if kind == QUADRILATERAL else _split_quads(quads)
    facets = boundary_edges(cells, kind)
    return Mesh(nodes, cells, kind, facets, _tag_facets(nodes, facets, _SQUARE_RULES))


def build_notched_square(
    n: int,
    notch_length: float = 0.5,
    notch_thickness: float = 1e-3,
    kind: str = QUADRILATERAL,
    notch_y: float = 0.5,
) -> Mesh:
    """Unit square with a thin horizontal slit entering from the left side.

    The slit occupies ``[0, notch_length] x [notch_y - t/2, notch_y + t/2]``
    and is removed from the domain. The grid line at ``notch_y`` is doubled
    into two lines a distance ``t`` apart; to the right of the notch tip a
    single row of thin cells joins them. Slit faces are tagged
    ``notch_lower``, ``notch_upper`` and ``notch_front``.

    ``n * notch_length`` and ``n * notch_y`` must be integers so the notch
    lies on grid lines, and ``t < 1/n``.
    """
    _check_kind(kind)
    if int(n) != n or n < 2:
        raise InvalidArgument(f"n must be an integer >= 2, got {n}")
    n = int(n)
    t = float(notch_thickness)
    if not 0.0 < notch_length < 1.0:
        raise InvalidArgument(f"notch_length must lie in (0, 1), got {notch_length}")
    if not 0.0 < t < 1.0 / n:
        raise InvalidArgument(f"notch_thickness must lie in (0, 1/n) = (0, {1.0 / n}), got {t}")
    i_tip = notch_length * n
    j_mid = notch_y * n
    if abs(i_tip - round(i_tip)) > 1e-9 or abs(j_mid - round(j_mid)) > 1e-9:
        raise InvalidArgument(
            "notch tip and notch height must fall on grid lines: "
            f"n*notch_length={i_tip}, n*notch_y={j_mid}"
        )
    i_tip, j_mid = int(round(i_tip)), int(round(j_mid))
    if not 0 < j_mid < n:
        raise InvalidArgument(f"notch_y must lie strictly inside (0, 1), got {notch_y}")

    xs = np.arange(n + 1) / n
    ys = np.concatenate(
        [
            np.arange(j_mid) / n,
            [notch_y - 0.5 * t, notch_y + 0.5 * t],
            np.arange(j_mid + 1, n + 1) / n,
        ]
    )
    nrow = len(ys)  # n + 2 node rows
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(nrow * (n + 1)).reshape(nrow, n + 1)

    quads = []
    for r in range(nrow - 1):
        i0 = i_tip if r == j_mid else 0  # the thin row exists only right of the tip
        for i in range(i0, n):
            quads.append([idx[r, i], idx[r, i + 1], idx[r + 1, i + 1], idx[r + 1, i]])
    quads = np.asarray(quads, dtype=np.int64)
    cells = quads if kind == QUADRILATERAL else _split_quads(quads)
    facets = boundary_edges(cells, kind)

    y_lo, y_hi = notch_y - 0.5 * t, notch_y + 0.5 * t
    L = float(notch_length)
    rules = [
        ("notch_lower", lambda p: _close(p[1], y_lo) and p[0] <= L + _GEOM_TOL),
        ("notch_upper", lambda p: _close(p[1], y_hi) and p[0] <= L + _GEOM_TOL),
        ("notch_front", lambda p: _close(p[0], L) and y_lo - _GEOM_TOL <= p[1] <= y_hi + _GEOM_TOL),
    ] + _SQUARE_RULES
    return Mesh(nodes, cells, kind, facets, _tag_facets(nodes, facets, rules))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every cell into four similar children; boundary tags are inherited."""
    uniq, cell_edges = mesh.edges()
    n0 = mesh.n_nodes
    mid = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    m = n0 + cell_edges  # midpoint node of local edge i (from vertex i to i+1)
    v = mesh.cells
    if mesh.cell_kind == TRIANGLE:
        nodes = np.vstack([mesh.nodes, mid])
        cells = np.concatenate(
            [
                np.column_stack([v[:, 0], m[:, 0], m[:, 2]]),
                np.column_stack([m[:, 0], v[:, 1], m[:, 1]]),
                np.column_stack([m[:, 2], m[:, 1], v[:, 2]]),
                np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
            ]
        )
    else:
        centers = mesh.nodes[v].mean(axis=1)
        c = n0 + len(uniq) + np.arange(mesh.n_cells)
        nodes = np.vstack([mesh.nodes, mid, centers])
        cells = np.concatenate(
            [
                np.column_stack([v[:, 0], m[:, 0], c, m[:, 3]]),
                np.column_stack([m[:, 0], v[:, 1], m[:, 1], c]),
                np.column_stack([c, m[:, 1], v[:, 2], m[:, 2]]),
                np.column_stack([m[:, 3], c, m[:, 2], v[:, 3]]),
            ]
        )

    lookup = {(a, b): i for i, (a, b) in enumerate(uniq)}
    facets, tags = [], []
    for (a, b), tag in zip(mesh.facets, mesh.facet_tags):
        mnode = n0 + lookup[(min(a, b), max(a, b))]
        facets += [(a, mnode), (mnode, b)]
        tags += [tag, tag]
    return Mesh(nodes, cells, mesh.cell_kind, np.asarray(facets), tags)


def refine(mesh: Mesh, times: int) -> Mesh:
    for _ in range(times):
        mesh = refine_uniform(mesh)
    return mesh


@dataclass(frozen=True)
class ShapeReport:
    h_max: float
    h_min: float
    gamma: float
    quasi_uniformity: float


def shape_report(mesh: Mesh) -> ShapeReport:
    """Mesh width, shape-regularity constant diam(T)/|T|^(1/d) and h_max/h_min."""
    areas = mesh.cell_areas()
    if np.any(areas <= 0):
        raise InvalidMesh("degenerate cell with zero area")
    diam = mesh.cell_diameters()
    gamma = float(np.max(diam / areas ** (1.0 / mesh.dim)))
    return ShapeReport(
        h_max=float(diam.max()),
        h_min=float(diam.min()),
        gamma=gamma,
        quasi_uniformity=float(diam.max() / diam.min()),
    )


def nested_node_map(coarse: Mesh, fine: Mesh, tol: float = 1e-10) -> np.ndarray:
    """Index into ``fine.nodes`` of every coarse node; raises if a node is missing."""
    from scipy.spatial import cKDTree

    dist, idx = cKDTree(fine.nodes).query(coarse.nodes)
    if np.any(dist > tol):
        raise InvalidArgument(
            f"meshes are not nested: {int(np.sum(dist > tol))} coarse nodes have no fine counterpart"
        )
    return idx
