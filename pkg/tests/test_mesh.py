import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tedamage import mesh as M
from tedamage.errors import InvalidArgument, InvalidMesh


def edge_counts(m):
    nv = m.nodes_per_cell
    counts = {}
    for c in m.cells:
        for i in range(nv):
            e = tuple(sorted((c[i], c[(i + 1) % nv])))
            counts[e] = counts.get(e, 0) + 1
    return counts


def assert_conforming(m):
    """Every edge is shared by one or two cells, the single-use edges are exactly
    the boundary facets, and V - E + F = 1 for a simply connected domain."""
    counts = edge_counts(m)
    assert set(counts.values()) <= {1, 2}
    boundary = {e for e, c in counts.items() if c == 1}
    facets = {tuple(sorted(f)) for f in m.facets}
    assert boundary == facets
    assert m.n_nodes - len(counts) + m.n_cells == 1
    assert len(np.unique(m.cells)) == m.n_nodes


# -- unit square ---------------------------------------------------------------


def test_smallest_triangle_mesh():
    m = M.build_unit_square(1, "triangle")
    assert (m.n_nodes, m.n_cells) == (4, 2)


def test_n2_triangle_counts():
    m = M.build_unit_square(2, "triangle")
    assert (m.n_nodes, m.n_cells) == (9, 8)


def test_quad_area_sums_to_one():
    m = M.build_unit_square(4, "quadrilateral")
    assert abs(m.cell_areas().sum() - 1.0) <= 1e-14


def test_zero_cells_rejected():
    with pytest.raises(InvalidArgument):
        M.build_unit_square(0)


@pytest.mark.parametrize("kind, h", [("triangle", math.sqrt(2) / 3), ("quadrilateral", math.sqrt(2) / 3)])
def test_unit_square_mesh_width(kind, h):
    # the cell diameter of a square cell is its diagonal
    assert math.isclose(M.shape_report(M.build_unit_square(3, kind)).h_max, h, rel_tol=1e-14)


@pytest.mark.parametrize("kind", ["triangle", "quadrilateral"])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_unit_square_invariants(kind, n):
    m = M.build_unit_square(n, kind)
    assert np.all(m.cell_areas() > 0)
    assert_conforming(m)
    assert m.tags == {"left", "right", "top", "bottom"}
    assert np.all(m.facet_owner() >= 0)
    assert len(m.facet_tags) == len(m.facets)


# -- notched square -------------------------------------------------------------


def test_notched_area():
    m = M.build_notched_square(20, 0.5, 1e-3)
    assert abs(m.cell_areas().sum() - (1 - 0.5 * 1e-3)) <= 1e-10


def test_notch_front_position():
    m = M.build_notched_square(20, 0.5, 1e-3)
    front = m.facets_with_tag("notch_front")
    assert len(front) > 0
    assert np.all(np.abs(m.nodes[front.ravel(), 0] - 0.5) <= 1e-12)


def test_notched_shape_report():
    rep = M.shape_report(M.build_notched_square(20, 0.5, 1e-3))
    assert math.isfinite(rep.gamma)
    assert rep.quasi_uniformity <= 4


@pytest.mark.parametrize("kind", ["triangle", "quadrilateral"])
def test_notched_tags_and_conformity(kind):
    m = M.build_notched_square(4, 0.5, 1e-3, kind)
    assert m.tags == {"left", "right", "top", "bottom", "notch_upper", "notch_lower", "notch_front"}
    assert_conforming(m)
    assert np.all(m.facet_owner() >= 0)
    lo = m.nodes[m.facets_with_tag("notch_lower").ravel()]
    hi = m.nodes[m.facets_with_tag("notch_upper").ravel()]
    assert np.allclose(lo[:, 1], 0.5 - 5e-4) and np.allclose(hi[:, 1], 0.5 + 5e-4)
    assert lo[:, 0].max() <= 0.5 + 1e-12


def test_slit_nodes_are_duplicated():
    m = M.build_notched_square(4, 0.5, 1e-3)
    lo = set(np.unique(m.facets_with_tag("notch_lower")))
    hi = set(np.unique(m.facets_with_tag("notch_upper")))
    assert not lo & hi


@pytest.mark.parametrize("kwargs", [
    dict(n=4, notch_length=0.5, notch_thickness=0.3),  # thicker than a cell
    dict(n=4, notch_length=0.3, notch_thickness=1e-3),  # tip off the grid
    dict(n=4, notch_length=1.2, notch_thickness=1e-3),
    dict(n=1, notch_length=0.5, notch_thickness=1e-3),
])
def test_notched_incompatible_parameters(kwargs):
    with pytest.raises(InvalidArgument):
        M.build_notched_square(**kwargs)


# -- refinement -----------------------------------------------------------------


def test_refine_unit_triangle_to_eight():
    assert M.refine_uniform(M.build_unit_square(1, "triangle")).n_cells == 8


@pytest.mark.parametrize("builder", [
    lambda: M.build_unit_square(2, "triangle"),
    lambda: M.build_unit_square(2, "quadrilateral"),
    lambda: M.build_notched_square(4, 0.5, 1e-3, "quadrilateral"),
    lambda: M.build_notched_square(4, 0.5, 1e-3, "triangle"),
])
def test_refine_properties(builder):
    m = builder()
    r = M.refine_uniform(m)
    assert r.n_cells == 4 * m.n_cells
    assert abs(r.area - m.area) <= 1e-13
    assert abs(M.shape_report(r).h_max - M.shape_report(m).h_max / 2) <= 1e-14
    assert r.tags == m.tags
    for tag in m.tags:
        length = lambda mm: np.linalg.norm(np.diff(mm.nodes[mm.facets_with_tag(tag)], axis=1), axis=-1).sum()
        assert abs(length(r) - length(m)) <= 1e-13
    assert_conforming(r)
    # nested: every coarse node is a fine node
    idx = M.nested_node_map(m, r)
    assert np.allclose(r.nodes[idx], m.nodes)


def test_gamma_invariant_under_refinement():
    m = M.build_unit_square(2, "triangle")
    g0 = M.shape_report(m).gamma
    g1 = M.shape_report(M.refine(m, 2)).gamma
    assert abs(g0 - g1) <= 1e-12 * g0


# -- shape report ---------------------------------------------------------------


def test_shape_report_uniform_triangles():
    m = M.build_unit_square(4, "triangle")
    rep = M.shape_report(m)
    assert math.isclose(rep.h_max, math.sqrt(2) / 4, rel_tol=1e-14)
    # per-cell oracle: longest edge over sqrt(area) from explicit vertices
    oracle = 0.0
    for cell in m.cells:
        x = m.nodes[cell]
        diam = max(np.linalg.norm(x[a] - x[b]) for a, b in itertools.combinations(range(3), 2))
        (x0, y0), (x1, y1), (x2, y2) = x
        area = 0.5 * abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
        oracle = max(oracle, diam / math.sqrt(area))
    assert math.isclose(rep.gamma, oracle, rel_tol=1e-13)
    assert math.isclose(rep.gamma, 2.0, rel_tol=1e-13)
    assert rep.quasi_uniformity == 1.0


def test_equilateral_lower_bound():
    s = math.sqrt(3) / 2
    eq = M.Mesh([[0, 0], [1, 0], [0.5, s]], [[0, 1, 2]], "triangle", [[0, 1], [1, 2], [2, 0]], ["a"] * 3)
    g_eq = M.shape_report(eq).gamma
    assert M.shape_report(M.build_unit_square(3, "triangle")).gamma >= g_eq


def test_degenerate_cell_rejected():
    with pytest.raises(InvalidMesh):
        M.Mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], "triangle", [[0, 1]], ["a"])


def test_non_nested_meshes_detected():
    with pytest.raises(InvalidArgument):
        M.nested_node_map(M.build_unit_square(3), M.build_unit_square(4))


@given(st.integers(1, 6), st.sampled_from(["triangle", "quadrilateral"]))
def test_area_and_positivity_property(n, kind):
    m = M.build_unit_square(n, kind)
    assert np.all(m.cell_areas() > 0)
    assert abs(m.area - 1.0) <= 1e-13
