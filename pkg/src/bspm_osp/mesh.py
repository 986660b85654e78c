"""Triangle meshes: OFF ingestion, vertex areas, discrete curvature and heat kernels.

Vertex areas use the barycentric one-third share of each incident face.
Gaussian curvature is the angle deficit divided by the vertex area; the mean
curvature magnitude comes from the cotangent Laplacian of the coordinates.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import MeshError, ParameterError

DEGENERATE_AREA = 1e-12
DUPLICATE_TOL = 1e-9


@dataclass(frozen=True)
class TriMesh:
    """Validated triangle mesh.

    ``vertices`` is a float array of shape (V, 3), ``faces`` an int array of
    shape (F, 3). Construct through :func:`make_mesh` or :func:`load_mesh` to
    get validation.
    """

    vertices: np.ndarray
    faces: np.ndarray

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def face_areas(self):
        return _face_areas(self.vertices, self.faces)

    def edges(self):
        """Unique undirected edges as a sorted (E, 2) array."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def boundary_vertices(self):
        """Boolean mask of vertices lying on an edge with a single incident face."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[uniq[counts == 1].ravel()] = True
        return mask

    def euler_characteristic(self):
        return self.n_vertices - len(self.edges()) + self.n_faces

    def transformed(self, rotation, translation):
        """Rigidly moved copy of the mesh."""
        v = self.vertices @ np.asarray(rotation, dtype=float).T + np.asarray(translation, dtype=float)
        return TriMesh(v, self.faces.copy())


def _face_areas(vertices, faces):
    a, b, c = (vertices[faces[:, i]] for i in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def make_mesh(vertices, faces):
    """Build a :class:`TriMesh` after checking indices, face areas and duplicates."""
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=np.int64)
    if v.ndim != 2 or v.shape[1] != 3:
        raise MeshError(f"vertices must have shape (V, 3), got {v.shape}")
    if f.size == 0:
        f = f.reshape(0, 3)
    if f.ndim != 2 or f.shape[1] != 3:
        raise MeshError(f"faces must have shape (F, 3), got {f.shape}")
    if not np.all(np.isfinite(v)):
        raise MeshError("non-finite vertex coordinate")
    bad = np.flatnonzero((f < 0).any(axis=1) | (f >= len(v)).any(axis=1))
    if bad.size:
        raise MeshError(f"face index out of range in face {bad[0]}: {f[bad[0]].tolist()} (|V|={len(v)})")
    areas = _face_areas(v, f)
    bad = np.flatnonzero(areas <= DEGENERATE_AREA)
    if bad.size:
        raise MeshError(f"degenerate face {bad[0]}: area {areas[bad[0]]:.3g}")
    pairs = cKDTree(v).query_pairs(DUPLICATE_TOL)
    if pairs:
        i, j = min(pairs)
        raise MeshError(f"duplicate vertices {i} and {j}")
    v.setflags(write=False)
    f.setflags(write=False)
    return TriMesh(v, f)


def _data_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_off(text):
    """Parse OFF text into a validated mesh."""
    lines = _data_lines(text)
    try:
        lineno, tok = next(lines)
    except StopIteration:
        raise MeshError("empty OFF file") from None
    if tok[0] != "OFF":
        raise MeshError(f"line {lineno}: expected 'OFF' header, got {tok[0]!r}")
    tok = tok[1:]
    if not tok:
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshError("missing counts line") from None
    try:
        nv, nf = int(tok[0]), int(tok[1])
    except (ValueError, IndexError):
        raise MeshError(f"line {lineno}: bad counts line {' '.join(tok)!r}") from None

    verts = []
    faces = []
    for lineno, tok in lines:
        if len(verts) < nv:
            if len(tok) < 3:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                verts.append([float(t) for t in tok[:3]])
            except ValueError:
                raise MeshError(f"line {lineno}: bad vertex {' '.join(tok)!r}") from None
        elif len(faces) < nf:
            try:
                vals = [int(t) for t in tok]
            except ValueError:
                raise MeshError(f"line {lineno}: bad face {' '.join(tok)!r}") from None
            if vals[0] != 3 or len(vals) < 4:
                raise MeshError(f"line {lineno}: only triangular faces are supported")
            idx = vals[1:4]
            if min(idx) < 0 or max(idx) >= nv:
                raise MeshError(f"line {lineno}: face index out of range {idx} (|V|={nv})")
            faces.append(idx)
        else:
            raise MeshError(f"line {lineno}: trailing data after {nv} vertices and {nf} faces")
    if len(verts) != nv or len(faces) != nf:
        raise MeshError(f"expected {nv} vertices and {nf} faces, got {len(verts)} and {len(faces)}")
    return make_mesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def load_mesh(path):
    return parse_off(Path(path).read_text())


def format_off(mesh):
    out = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {len(mesh.edges())}"]
    out += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    out += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    return "\n".join(out) + "\n"


def save_mesh(mesh, path):
    Path(path).write_text(format_off(mesh))


def vertex_areas(mesh):
    """Barycentric vertex areas: one third of the area of every incident face."""
    fa = mesh.face_areas() / 3.0
    areas = np.zeros(mesh.n_vertices)
    for i in range(3):
        np.add.at(areas, mesh.faces[:, i], fa)
    return areas


@dataclass(frozen=True)
class VertexGeometry:
    """Per-vertex area and curvature arrays (all of length V)."""

    area: np.ndarray
    gauss_k: np.ndarray
    mean_eta: np.ndarray
    k1: np.ndarray
    k2: np.ndarray


def _corner_angles(vertices, faces):
    """Interior angle at each corner, shape (F, 3)."""
    p = [vertices[faces[:, i]] for i in range(3)]
    ang = np.empty(faces.shape)
    for i in range(3):
        u = p[(i + 1) % 3] - p[i]
        w = p[(i + 2) % 3] - p[i]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        ang[:, i] = np.arctan2(cross, np.einsum("ij,ij->i", u, w))
    return ang


def curvatures(mesh, areas=None):
    """Angle-deficit Gaussian curvature and cotangent mean curvature per vertex.

    Boundary vertices use pi instead of 2*pi as the flat reference angle.
    ``mean_eta`` is the unsigned sum of principal curvatures; principal
    curvatures come from ``eta/2 +- sqrt(max((eta/2)**2 - K, 0))``.
    """
    if areas is None:
        areas = vertex_areas(mesh)
    areas = np.asarray(areas, dtype=float)
    counts = np.bincount(mesh.faces.ravel(), minlength=mesh.n_vertices)
    isolated = np.flatnonzero(counts == 0)
    if isolated.size:
        raise MeshError(f"vertex {isolated[0]} has no incident face")

    v, f = mesh.vertices, mesh.faces
    ang = _corner_angles(v, f)
    angle_sum = np.zeros(mesh.n_vertices)
    for i in range(3):
        np.add.at(angle_sum, f[:, i], ang[:, i])
    reference = np.where(mesh.boundary_vertices(), np.pi, 2.0 * np.pi)
    gauss_k = (reference - angle_sum) / areas

    # the angle at corner i weights the opposite edge (i+1, i+2)
    cot = 1.0 / np.tan(ang)
    lap = np.zeros((mesh.n_vertices, 3))
    for i in range(3):
        a, b = f[:, (i + 1) % 3], f[:, (i + 2) % 3]
        d = cot[:, i, None] * (v[a] - v[b])
        np.add.at(lap, a, d)
        np.add.at(lap, b, -d)
    h_std = np.linalg.norm(lap / (2.0 * areas[:, None]), axis=1) / 2.0
    eta = 2.0 * h_std

    half = eta / 2.0
    disc = np.sqrt(np.maximum(half ** 2 - gauss_k, 0.0))
    return VertexGeometry(area=areas, gauss_k=gauss_k, mean_eta=eta, k1=half + disc, k2=half - disc)


def heat_kernel(mesh, t):
    """Dense squared-exponential kernel ``exp(-|xi - xj|^2 / t)`` on vertex positions."""
    if not t > 0:
        raise ParameterError(f"heat kernel bandwidth must be positive, got {t}")
    d2 = cdist(mesh.vertices, mesh.vertices, "sqeuclidean")
    return np.exp(-d2 / t)


def median_sq_distance(points):
    """Median squared pairwise distance, the default heat-kernel bandwidth."""
    pts = np.asarray(points, dtype=float)
    iu = np.triu_indices(len(pts), k=1)
    return float(np.median(cdist(pts, pts, "sqeuclidean")[iu]))


# ---------------------------------------------------------------------------
# shape generators used by tests, demos and synthetic data

def single_triangle():
    h = np.sqrt(3) / 2
    return make_mesh([[0, 0, 0], [1, 0, 0], [0.5, h, 0]], [[0, 1, 2]])


def tetrahedron():
    """Regular tetrahedron with unit edges, outward oriented."""
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(8)
    return make_mesh(v, [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])


def icosphere(subdivisions=2, radius=1.0):
    phi = (1 + np.sqrt(5)) / 2
    verts = [[-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
             [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
             [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1]]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return make_mesh(radius * np.array(verts), faces)


def grid_rectangle(nx=6, ny=5, width=1.0, height=1.0):
    """Flat triangulated rectangle in the z=0 plane."""
    xs, ys = np.linspace(0, width, nx), np.linspace(0, height, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    idx = np.arange(nx * ny).reshape(nx, ny)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            faces += [[a, b, c], [a, c, d]]
    return make_mesh(v, faces)


def cylinder(radius=1.0, height=2.0, n_around=32, n_rings=9, capped=False, radius_y=None):
    """Triangulated (elliptic) cylinder along z; optional fan caps make it closed.

    Vertex order is ring by ring from the bottom; cap centers, when present,
    come last (bottom then top).
    """
    ry = radius if radius_y is None else radius_y
    theta = 2 * np.pi * np.arange(n_around) / n_around
    zs = np.linspace(0, height, n_rings)
    verts = [[radius * np.cos(a), ry * np.sin(a), z] for z in zs for a in theta]
    faces = []
    for r in range(n_rings - 1):
        # alternate the diagonal per ring to avoid a helical bias
        shift = r % 2
        for k in range(n_around):
            a = r * n_around + k
            b = r * n_around + (k + 1) % n_around
            c = a + n_around
            d = b + n_around
            if shift:
                faces += [[a, b, c], [b, d, c]]
            else:
                faces += [[a, b, d], [a, d, c]]
    if capped:
        bottom = len(verts)
        verts.append([0.0, 0.0, zs[0]])
        top = len(verts)
        verts.append([0.0, 0.0, zs[-1]])
        last = (n_rings - 1) * n_around
        for k in range(n_around):
            k2 = (k + 1) % n_around
            faces.append([bottom, k2, k])
            faces.append([top, last + k, last + k2])
    return make_mesh(np.array(verts), faces)


def torso_mesh(n_around=25, n_rings=14, half_width=170.0, half_depth=110.0, height=600.0):
    """Closed elliptic-cylinder stand-in for a torso surface, in millimetres.

    The defaults give 352 vertices and 700 faces. Axes follow the usual
    body-surface convention loosely: x transverse, y sagittal (front is
    negative y), z longitudinal.
    """
    return cylinder(radius=half_width, height=height, n_around=n_around, n_rings=n_rings,
                    capped=True, radius_y=half_depth)
