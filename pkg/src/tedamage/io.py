"""Legacy ASCII VTK and CSV output."""

from __future__ import annotations

import csv

import numpy as np

from .mesh import QUADRILATERAL, Mesh

_VTK_CELL_TYPE = {QUADRILATERAL: 9}  # triangles are 5


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, title: str = "tedamage") -> None:
    """Unstructured-grid file with optional scalar/vector point data.

    Vector data of shape (N, 2) is padded with a zero z-component.
    """
    nodes = mesh.nodes
    pts = np.zeros((mesh.n_nodes, 3))
    pts[:, : nodes.shape[1]] = nodes
    ctype = _VTK_CELL_TYPE.get(mesh.cell_kind, 5)
    npc = mesh.nodes_per_cell
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        np.savetxt(fh, pts, fmt="%.17g")
        fh.write(f"CELLS {mesh.n_cells} {mesh.n_cells * (npc + 1)}\n")
        np.savetxt(fh, np.column_stack([np.full(mesh.n_cells, npc), mesh.cells]), fmt="%d")
        fh.write(f"CELL_TYPES {mesh.n_cells}\n")
        np.savetxt(fh, np.full(mesh.n_cells, ctype), fmt="%d")
        if point_data:
            fh.write(f"POINT_DATA {mesh.n_nodes}\n")
            for name, vals in point_data.items():
                vals = np.asarray(vals, dtype=float)
                if vals.ndim == 1:
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    np.savetxt(fh, vals, fmt="%.17g")
                else:
                    v3 = np.zeros((mesh.n_nodes, 3))
                    v3[:, : vals.shape[1]] = vals
                    fh.write(f"VECTORS {name} double\n")
                    np.savetxt(fh, v3, fmt="%.17g")


def write_state_vtk(path, state) -> None:
    write_vtk(path, state.mesh, {
        "u": state.u_curr.nodal(),
        "phi": state.phi_curr.nodal(),
        "theta": state.theta_curr.nodal(),
    }, title=f"level {state.k}")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


STEP_COLUMNS = ["k", "iters_damage", "iters_heat", "res_damage", "res_momentum", "res_heat",
                "penalty_violation", "phi_min", "phi_max", "theta_max"]


def step_rows(reports):
    for r in reports:
        yield [
            r.k,
            r.newton_iters.get("damage", 0),
            r.newton_iters.get("heat", 0),
            repr(float(r.residuals.get("damage", 0.0))),
            repr(float(r.residuals.get("momentum", 0.0))),
            repr(float(r.residuals.get("heat", 0.0))),
            repr(float(r.penalty_violation)),
            repr(r.phi_min),
            repr(r.phi_max),
            repr(r.theta_max),
        ]


def write_step_reports(path, reports) -> None:
    write_csv(path, STEP_COLUMNS, step_rows(reports))


def write_nodal_csv(path, state) -> None:
    """One row per node: coordinates, displacement, damage, temperature."""
    x = state.mesh.nodes
    u = state.u_curr.nodal()
    rows = np.column_stack([x, u, state.phi_curr.nodal(), state.theta_curr.nodal()])
    write_csv(path, ["x", "y", "ux", "uy", "phi", "theta"], ([repr(float(v)) for v in r] for r in rows))


def write_keyvalue(path, values: dict) -> None:
    with open(path, "w") as fh:
        for k, v in values.items():
            if hasattr(v, "item"):  # numpy scalar
                v = v.item()
            fh.write(f"{k}={v!r}\n")
