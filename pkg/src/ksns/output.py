"""Field snapshots (legacy ASCII VTK) and bit-exact state checkpoints."""

from __future__ import annotations

import numpy as np

from .fespace import P1Field, TaylorHoodField
from .mesh import TriMesh, _atomic_write


def write_fields_vtk(state, path):
    """Legacy VTK unstructured grid with point data n, c, p and vector u.

    The velocity is sampled at the vertices (the vertex dofs of the
    quadratic basis).  All numbers carry 17 significant digits so files are
    byte-stable across runs.
    """
    mesh = state.n.mesh
    n = state.n.values
    c = state.c.values
    p = state.uh_p.pressure
    uv = state.uh_p.vertex_velocity()

    out = []
    out.append("# vtk DataFile Version 3.0")
    out.append(f"fields step={state.step} time={state.time:.17g}")
    out.append("ASCII")
    out.append("DATASET UNSTRUCTURED_GRID")
    out.append(f"POINTS {mesh.n_vertices} double")
    for x, y in mesh.vertices:
        out.append(f"{x:.17g} {y:.17g} 0")
    T = mesh.n_triangles
    out.append(f"CELLS {T} {4 * T}")
    for a, b, d in mesh.triangles:
        out.append(f"3 {a} {b} {d}")
    out.append(f"CELL_TYPES {T}")
    out.extend(["5"] * T)
    out.append(f"POINT_DATA {mesh.n_vertices}")
    for name, values in (("n", n), ("c", c), ("p", p)):
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(f"{v:.17g}" for v in values)
    out.append("VECTORS u double")
    out.extend(f"{uv[0, i]:.17g} {uv[1, i]:.17g} 0" for i in range(mesh.n_vertices))
    _atomic_write(path, "\n".join(out) + "\n")


def save_state(state, path):
    """ASCII checkpoint in the mesh-format style (header + nodal arrays)."""
    mesh = state.n.mesh
    lines = ["simstate 1",
             f"step {state.step}",
             f"time {state.time:.17g}",
             f"n {len(state.n.values)}"]
    lines.extend(f"{v:.17g}" for v in state.n.values)
    lines.append(f"c {len(state.c.values)}")
    lines.extend(f"{v:.17g}" for v in state.c.values)
    nu = state.uh_p.velocity.shape[1]
    lines.append(f"u {nu}")
    lines.extend(f"{state.uh_p.velocity[0, i]:.17g} {state.uh_p.velocity[1, i]:.17g}"
                 for i in range(nu))
    lines.append(f"p {len(state.uh_p.pressure)}")
    lines.extend(f"{v:.17g}" for v in state.uh_p.pressure)
    _atomic_write(path, "\n".join(lines) + "\n")


def load_state(mesh: TriMesh, n_p2_dofs: int, path):
    from .solver import SimState

    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh]
    if not lines or lines[0] != "simstate 1":
        raise ValueError(f"{path}: not a 'simstate 1' file")
    idx = 1

    def expect(tag):
        nonlocal idx
        parts = lines[idx].split()
        if parts[0] != tag:
            raise ValueError(f"{path}:{idx + 1}: expected '{tag} ...'")
        idx += 1
        return parts[1]

    step = int(expect("step"))
    time = float(expect("time"))
    nn = int(expect("n"))
    n = np.array([float(lines[idx + i]) for i in range(nn)])
    idx += nn
    nc = int(expect("c"))
    c = np.array([float(lines[idx + i]) for i in range(nc)])
    idx += nc
    nu = int(expect("u"))
    u = np.empty((2, nu))
    for i in range(nu):
        a, b = lines[idx + i].split()
        u[0, i], u[1, i] = float(a), float(b)
    idx += nu
    npp = int(expect("p"))
    p = np.array([float(lines[idx + i]) for i in range(npp)])
    if nn != mesh.n_vertices or nc != mesh.n_vertices or npp != mesh.n_vertices:
        raise ValueError(f"{path}: nodal array size does not match the mesh")
    if nu != n_p2_dofs:
        raise ValueError(f"{path}: velocity dof count does not match the mesh")
    return SimState(
        n=P1Field(mesh, n),
        c=P1Field(mesh, c),
        uh_p=TaylorHoodField(mesh=mesh, velocity=u, pressure=p),
        step=step,
        time=time,
    )
