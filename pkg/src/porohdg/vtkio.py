"""Legacy-VTK ASCII output of vertex-sampled solution fields."""

import numpy as np

from . import fe

FIELD_NAMES = ("p", "vs1", "vs2", "vf1", "vf2", "sxx", "syy", "sxy")


def vertex_samples(sys, state):
    """Fields sampled at mesh vertices (averaged over sharing elements)."""
    mesh = sys.mesh
    lay = sys.lay
    Vk = fe.simplex_basis(sys.k).eval(fe.REF_VERTICES)
    Vk1 = fe.simplex_basis(sys.k + 1).eval(fe.REF_VERTICES)
    nk = lay.nk

    per_corner = {}
    sig = state.u[:, : 3 * nk].reshape(-1, 3, nk)
    per_corner["sxx"] = sig[:, 0] @ Vk.T
    per_corner["syy"] = sig[:, 1] @ Vk.T
    per_corner["sxy"] = sig[:, 2] @ Vk.T
    per_corner["p"] = state.u[:, lay.p_slice] @ Vk.T
    per_corner["vs1"] = state.u[:, lay.vs_slice(0)] @ Vk1.T
    per_corner["vs2"] = state.u[:, lay.vs_slice(1)] @ Vk1.T
    per_corner["vf1"] = state.u[:, lay.vf_slice(0)] @ Vk.T
    per_corner["vf2"] = state.u[:, lay.vf_slice(1)] @ Vk.T

    counts = np.zeros(mesh.n_vertices)
    np.add.at(counts, mesh.triangles.ravel(), 1.0)
    out = {}
    for name in FIELD_NAMES:
        acc = np.zeros(mesh.n_vertices)
        np.add.at(acc, mesh.triangles.ravel(), per_corner[name].ravel())
        out[name] = acc / counts
    return out


def write_fields(sys, state, path):
    """Write one unstructured-grid snapshot (9 significant digits)."""
    mesh = sys.mesh
    data = vertex_samples(sys, state)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = [
        "# vtk DataFile Version 3.0",
        f"porohdg fields t={state.t!r}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{x:.9g} {y:.9g} 0")
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    lines.append(f"POINT_DATA {nv}")
    for name in FIELD_NAMES:
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.9g}" for v in data[name])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_fields(path):
    """Parse a file written by write_fields (points, cells, point fields)."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    lines = [ln.strip() for ln in tokens if ln.strip()]
    if not lines[0].startswith("# vtk DataFile"):
        raise ValueError("not a legacy VTK file")
    if lines[2] != "ASCII" or lines[3] != "DATASET UNSTRUCTURED_GRID":
        raise ValueError("unsupported VTK flavor")
    pos = 4
    nv = int(lines[pos].split()[1]); pos += 1
    pts = np.array([[float(v) for v in lines[pos + i].split()] for i in range(nv)])
    pos += nv
    nt = int(lines[pos].split()[1]); pos += 1
    cells = np.array([[int(v) for v in lines[pos + i].split()[1:]] for i in range(nt)])
    pos += nt
    assert lines[pos].startswith("CELL_TYPES")
    pos += 1 + nt
    assert lines[pos].startswith("POINT_DATA")
    pos += 1
    fields = {}
    while pos < len(lines):
        name = lines[pos].split()[1]
        pos += 2  # SCALARS line + LOOKUP_TABLE line
        fields[name] = np.array([float(lines[pos + i]) for i in range(nv)])
        pos += nv
    return pts[:, :2], cells, fields
