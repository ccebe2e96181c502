"""Conforming 2D simplicial meshes with tagged boundary faces.

Boundary faces carry one tag from each of the two boundary splittings: the
elastic side ('d' = prescribed solid velocity, 't' = prescribed traction) and
the flow side ('p' = prescribed pressure, 'f' = prescribed flux).  Meshes are
immutable after construction; refinement returns a new mesh.
"""

import numpy as np

ELASTIC_TAGS = ("d", "t")
FLOW_TAGS = ("p", "f")


class BoundarySpec:
    """Assigns boundary tags from predicates evaluated at face midpoints.

    Each predicate maps (x, y) -> bool, True meaning the essential side of
    the splitting ('d' resp. 'p').  The default tags the whole boundary
    essential on both splittings.
    """

    def __init__(self, elastic_dirichlet=None, flow_dirichlet=None):
        self.elastic_dirichlet = elastic_dirichlet
        self.flow_dirichlet = flow_dirichlet

    def tags(self, midpoint):
        x, y = midpoint
        te = "d" if self.elastic_dirichlet is None or self.elastic_dirichlet(x, y) else "t"
        tf = "p" if self.flow_dirichlet is None or self.flow_dirichlet(x, y) else "f"
        return te, tf


class Mesh:
    """Conforming triangulation with a face table and boundary tags.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    faces : (nf, 2) int array, each row the (lo, hi) vertex pair of an edge
    face_elems : (nf, 2) int array, adjacent elements (second is -1 on the
        boundary; the first is the lower-indexed adjacent element)
    face_normals : (nf, 2) float array, unit normal pointing out of
        ``face_elems[:, 0]``
    elem_faces : (nt, 3) int array, global face id of each local face
        (local face i is opposite local vertex i)
    tag_elastic, tag_flow : length-nf lists, '' on interior faces
    h_per_element : (nt,) float array of element diameters
    """

    def __init__(self, vertices, triangles, boundary_spec=None, boundary_tags=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=int)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (nv, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be an (nt, 3) array")
        if len(self.triangles) == 0:
            raise ValueError("mesh has no triangles")

        v = self.vertices
        t = self.triangles
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        self.signed_areas = 0.5 * (
            (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
            - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
        )
        bad = np.where(self.signed_areas <= 0.0)[0]
        if bad.size:
            raise ValueError(
                f"triangle {bad[0]} is degenerate or clockwise "
                f"(signed area {self.signed_areas[bad[0]]:g})"
            )
        edge_len = np.stack(
            [
                np.linalg.norm(p2 - p1, axis=1),
                np.linalg.norm(p0 - p2, axis=1),
                np.linalg.norm(p1 - p0, axis=1),
            ],
            axis=1,
        )
        self.h_per_element = edge_len.max(axis=1)

        self._build_faces()
        self._assign_tags(boundary_spec, boundary_tags)

    def _build_faces(self):
        t = self.triangles
        # local face i is opposite local vertex i
        raw = np.concatenate(
            [t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=0
        )
        keys = np.sort(raw, axis=1)
        faces, inverse = np.unique(keys, axis=0, return_inverse=True)
        nt = len(t)
        nf = len(faces)
        self.faces = faces
        self.elem_faces = inverse.reshape(3, nt).T.copy()

        face_elems = np.full((nf, 2), -1, dtype=int)
        for local in range(3):
            for e in range(nt):
                f = self.elem_faces[e, local]
                if face_elems[f, 0] == -1:
                    face_elems[f, 0] = e
                elif face_elems[f, 1] == -1:
                    face_elems[f, 1] = e
                else:
                    raise ValueError(f"face {f} adjacent to more than two elements")
        interior = face_elems[:, 1] >= 0
        lo = np.minimum(face_elems[:, 0], face_elems[:, 1])
        hi = np.maximum(face_elems[:, 0], face_elems[:, 1])
        face_elems[interior, 0] = lo[interior]
        face_elems[interior, 1] = hi[interior]
        self.face_elems = face_elems

        # unit normal pointing out of the first adjacent element
        a = self.vertices[faces[:, 0]]
        b = self.vertices[faces[:, 1]]
        tang = b - a
        lengths = np.linalg.norm(tang, axis=1)
        normals = np.stack([tang[:, 1], -tang[:, 0]], axis=1) / lengths[:, None]
        centroids = self.vertices[self.triangles[face_elems[:, 0]]].mean(axis=1)
        mid = 0.5 * (a + b)
        flip = np.einsum("ij,ij->i", normals, mid - centroids) < 0.0
        normals[flip] *= -1.0
        self.face_normals = normals
        self.face_lengths = lengths

    def _assign_tags(self, boundary_spec, boundary_tags):
        nf = len(self.faces)
        self.tag_elastic = [""] * nf
        self.tag_flow = [""] * nf
        spec = boundary_spec if boundary_spec is not None else BoundarySpec()
        for f in range(nf):
            if self.face_elems[f, 1] >= 0:
                continue
            if boundary_tags is not None:
                key = (int(self.faces[f, 0]), int(self.faces[f, 1]))
                if key not in boundary_tags:
                    raise ValueError(f"missing boundary tags for face {key}")
                te, tf = boundary_tags[key]
            else:
                mid = 0.5 * (
                    self.vertices[self.faces[f, 0]] + self.vertices[self.faces[f, 1]]
                )
                te, tf = spec.tags(mid)
            if te not in ELASTIC_TAGS or tf not in FLOW_TAGS:
                raise ValueError(f"invalid boundary tags ({te!r}, {tf!r})")
            self.tag_elastic[f] = te
            self.tag_flow[f] = tf
        boundary = np.where(self.face_elems[:, 1] < 0)[0]
        if not any(self.tag_elastic[f] == "d" for f in boundary):
            raise ValueError("boundary splitting leaves no solid-velocity faces (Gamma_d empty)")
        if not any(self.tag_flow[f] == "p" for f in boundary):
            raise ValueError("boundary splitting leaves no pressure faces (Gamma_p empty)")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_faces(self):
        return len(self.faces)

    def boundary_faces(self):
        return np.where(self.face_elems[:, 1] < 0)[0]

    def boundary_tag_dict(self):
        return {
            (int(self.faces[f, 0]), int(self.faces[f, 1])): (
                self.tag_elastic[f],
                self.tag_flow[f],
            )
            for f in self.boundary_faces()
        }


def mesh_size(mesh):
    """Largest element diameter."""
    return float(mesh.h_per_element.max())


def build_structured_rect(xmin, xmax, ymin, ymax, nx, ny, tags=None):
    """Uniform triangulation of a rectangle.

    Every cell is split along the same lower-left to upper-right diagonal,
    giving 2*nx*ny congruent triangles.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"grid resolution must be >= 1, got nx={nx}, ny={ny}")
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("rectangle extents must have positive size")
    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return Mesh(vertices, np.array(tris), boundary_spec=tags)


def _disk_hits_triangle(verts, center, radius):
    """True if the closed disk intersects the closed triangle."""
    c = np.asarray(center, dtype=float)
    # center inside the triangle?
    inside = True
    for i in range(3):
        a, b = verts[i], verts[(i + 1) % 3]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if cross < 0.0:
            inside = False
            break
    if inside:
        return True
    dmin = np.inf
    for i in range(3):
        a, b = verts[i], verts[(i + 1) % 3]
        ab = b - a
        s = np.clip(np.dot(c - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        dmin = min(dmin, float(np.linalg.norm(a + s * ab - c)))
    return dmin <= radius


def _refine_once(mesh, marked):
    """Red refinement of the marked elements with green closure."""
    nt = mesh.n_triangles
    red = np.zeros(nt, dtype=bool)
    red[list(marked)] = True

    # an edge is split iff some red element touches it; elements with two or
    # more split edges are promoted to red until the marking is stable
    while True:
        split = np.zeros(mesh.n_faces, dtype=bool)
        for e in np.where(red)[0]:
            split[mesh.elem_faces[e]] = True
        counts = split[mesh.elem_faces].sum(axis=1)
        promote = (~red) & (counts >= 2)
        if not promote.any():
            break
        red |= promote

    verts = [tuple(p) for p in mesh.vertices]
    midpoint = {}
    edge_parent = {}

    def mid_id(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            verts.append(tuple(0.5 * (mesh.vertices[a] + mesh.vertices[b])))
            m = len(verts) - 1
            midpoint[key] = m
            edge_parent[(min(a, m), max(a, m))] = key
            edge_parent[(min(b, m), max(b, m))] = key
        return midpoint[key]

    tris = []
    for e in range(nt):
        v0, v1, v2 = (int(x) for x in mesh.triangles[e])
        nsplit = int(counts[e])
        if red[e]:
            m01, m12, m20 = mid_id(v0, v1), mid_id(v1, v2), mid_id(v2, v0)
            tris += [
                (v0, m01, m20),
                (m01, v1, m12),
                (m20, m12, v2),
                (m01, m12, m20),
            ]
        elif nsplit == 1:
            # green bisection toward the vertex opposite the split edge
            local = int(np.where(split[mesh.elem_faces[e]])[0][0])
            corners = (v0, v1, v2)
            a, b = corners[(local + 1) % 3], corners[(local + 2) % 3]
            cveg = corners[local]
            m = mid_id(a, b)
            tris += [(a, m, cveg), (m, b, cveg)]
        else:
            tris.append((v0, v1, v2))

    old_tags = mesh.boundary_tag_dict()

    def child_tags(key):
        while key not in old_tags:
            if key not in edge_parent:
                raise ValueError(f"boundary face {key} has no tagged ancestor")
            key = edge_parent[key]
        return old_tags[key]

    refined = Mesh(np.array(verts), np.array(tris), boundary_tags=_TagLookup(child_tags))
    return refined


class _TagLookup(dict):
    """Boundary-tag mapping backed by an ancestor lookup."""

    def __init__(self, fn):
        super().__init__()
        self._fn = fn

    def __contains__(self, key):
        return True

    def __missing__(self, key):
        return self._fn(key)


def refine_near_point(mesh, center, radius, levels):
    """Refine all elements meeting a disk, `levels` times, conformingly.

    Marked elements are red-refined (four congruent children); neighbors are
    closed with green bisections so no hanging vertices remain.
    """
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    out = mesh
    for _ in range(levels):
        marked = [
            e
            for e in range(out.n_triangles)
            if _disk_hits_triangle(out.vertices[out.triangles[e]], center, radius)
        ]
        if not marked:
            break
        out = _refine_once(out, marked)
    return out


def write_mesh(mesh, path):
    """Write the plain-text 'poro-mesh v1' format."""
    lines = ["poro-mesh v1", str(mesh.n_vertices)]
    for x, y in mesh.vertices:
        lines.append(f"{x!r} {y!r}")
    lines.append(str(mesh.n_triangles))
    for a, b, c in mesh.triangles:
        lines.append(f"{a} {b} {c}")
    for f in mesh.boundary_faces():
        v0, v1 = (int(v) for v in mesh.faces[f])
        lines.append(f"face {v0} {v1} {mesh.tag_elastic[f]} {mesh.tag_flow[f]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Read the plain-text 'poro-mesh v1' format."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    lines = [ln.strip() for ln in tokens if ln.strip()]
    if not lines or lines[0] != "poro-mesh v1":
        raise ValueError("not a poro-mesh v1 file")
    pos = 1
    nv = int(lines[pos]); pos += 1
    verts = []
    for _ in range(nv):
        x, y = lines[pos].split(); pos += 1
        verts.append((float(x), float(y)))
    nt = int(lines[pos]); pos += 1
    tris = []
    for _ in range(nt):
        a, b, c = lines[pos].split(); pos += 1
        tris.append((int(a), int(b), int(c)))
    tags = {}
    while pos < len(lines):
        parts = lines[pos].split(); pos += 1
        if parts[0] != "face" or len(parts) != 5:
            raise ValueError(f"malformed boundary tag line: {' '.join(parts)!r}")
        v0, v1 = int(parts[1]), int(parts[2])
        tags[(min(v0, v1), max(v0, v1))] = (parts[3], parts[4])
    return Mesh(np.array(verts), np.array(tris), boundary_tags=tags)
