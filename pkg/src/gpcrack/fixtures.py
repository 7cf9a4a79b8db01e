"""Small mesh generators used by tests, demos and the bundled fixture files."""

import itertools

import numpy as np
from scipy.spatial import Delaunay

from .body_mesh import TET_FACES, BodyMesh
from .tensor_core import det3

_PERMS = list(itertools.permutations(range(3)))


def _kuhn_cell(corner_id):
    """Six positively oriented tets of a unit cell; ``corner_id(i, j, k)`` maps offsets to node ids."""
    out = []
    for perm in _PERMS:
        off = np.zeros(3, dtype=int)
        path = [corner_id(*off)]
        for ax in perm:
            off[ax] += 1
            path.append(corner_id(*off))
        out.append(path)
    return out


def _orient(nodes, tets):
    tets = np.array(tets, dtype=np.int64)
    X = nodes[tets]
    D = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0], X[:, 3] - X[:, 0]], axis=-1)
    neg = det3(D) < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    return tets


def _boundary_faces(tets):
    count = {}
    for tet in tets:
        for k in range(4):
            key = tuple(sorted(tet[TET_FACES[k]]))
            count[key] = count.get(key, 0) + 1
    return [key for key, c in count.items() if c == 1]


def structured_box(shape, size, dirichlet_map=None, gamma0=("x0",), crack_planes=()):
    """Structured Kuhn tetrahedralization of a box ``[0,Lx]x[0,Ly]x[0,Lz]``.

    Parameters
    ----------
    shape : (nx, ny, nz) cells per axis, 6 tets per cell
    size : (Lx, Ly, Lz)
    dirichlet_map : callable x -> y0(x) on Gamma_0 nodes, identity by default
    gamma0 : box sides tagged g0, from ``x0, x1, y0, y1, z0, z1``
    crack_planes : x-coordinates of grid planes whose interior faces become crack candidates
    """
    nx, ny, nz = shape
    Lx, Ly, Lz = size
    xs, ys, zs = np.linspace(0, Lx, nx + 1), np.linspace(0, Ly, ny + 1), np.linspace(0, Lz, nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                tets += _kuhn_cell(lambda a, b, c: nid(i + a, j + b, k + c))
    tets = _orient(nodes, tets)

    sides = {"x0": (0, 0.0), "x1": (0, Lx), "y0": (1, 0.0), "y1": (1, Ly), "z0": (2, 0.0), "z1": (2, Lz)}
    tol = 1e-12 * max(size)
    bfaces, btags = [], []
    for f in _boundary_faces(tets):
        P = nodes[list(f)]
        tag = "g1"
        for name in gamma0:
            ax, val = sides[name]
            if np.all(np.abs(P[:, ax] - val) < tol):
                tag = "g0"
        bfaces.append(f)
        btags.append(tag)

    cfaces = []
    for xc in crack_planes:
        seen = set()
        for tet in tets:
            for k in range(4):
                f = tuple(sorted(tet[TET_FACES[k]]))
                if f in seen:
                    continue
                seen.add(f)
                if np.all(np.abs(nodes[list(f), 0] - xc) < tol) and 0 < xc < Lx:
                    cfaces.append(f)
        cfaces.sort()

    g0 = sorted({v for f, t in zip(bfaces, btags) if t == "g0" for v in f})
    dmap = dirichlet_map or (lambda x: x)
    dirichlet = {v: np.asarray(dmap(nodes[v]), dtype=float) for v in g0}
    return BodyMesh(nodes, tets, bfaces, btags, cfaces, dirichlet)


def unit_cube(candidate_count=2):
    """The 6-tet unit cube; Gamma_0 is the face x = 0 with identity data.

    The first ``candidate_count`` interior faces (all contain the main
    diagonal) are crack candidates.
    """
    mesh = structured_box((1, 1, 1), (1.0, 1.0, 1.0))
    cf = mesh.faces[:candidate_count]
    return BodyMesh(mesh.nodes, mesh.tets, mesh.bfaces, mesh.btags, cf,
                    dict(zip(mesh.dirichlet_nodes.tolist(), mesh.dirichlet_values)))


def stretched_bar(stretch, shape=(2, 1, 1), size=(0.5, 2.0, 2.0)):
    """Bar clamped at both ends with y0 = diag(stretch, 1, 1) x and a mid-plane crack candidate.

    The default block is short compared to its cross-section, so the clamped
    ends keep the uncracked state close to the homogeneous stretch.
    """
    A = np.diag([stretch, 1.0, 1.0])
    return structured_box(shape, size, dirichlet_map=lambda x: A @ x,
                          gamma0=("x0", "x1"), crack_planes=(size[0] / 2,))


# -- triangulated surfaces ---------------------------------------------------------------

def unit_square():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return pts, tris


def grid_square(n, size=1.0):
    """n x n grid on the square [0,size]^2 in the plane z = 0, 2 n^2 triangles."""
    s = np.linspace(0, size, n + 1)
    X, Y = np.meshgrid(s, s, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    tris = []
    for i in range(n):
        for j in range(n):
            a, b = i * (n + 1) + j, (i + 1) * (n + 1) + j
            tris += [[a, b, b + 1], [a, b + 1, a + 1]]
    return pts, np.array(tris)


def icosphere(level, radius=1.0):
    """Subdivided icosahedron projected to the sphere; 20 * 4**level triangles."""
    t = (1 + 5 ** 0.5) / 2
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    pts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in v]
    tris = f
    for _ in range(level):
        mid = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                p = pts[a] + pts[b]
                pts.append(p / np.linalg.norm(p))
                mid[key] = len(pts) - 1
            return mid[key]

        new = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        tris = new
    return radius * np.array(pts), np.array(tris, dtype=np.int64)


def flat_disc(rings, radius=1.0):
    """Disc of concentric rings (6k points on ring k) in the plane z = 0, about 6 rings**2 triangles."""
    pts = [[0.0, 0.0]]
    for k in range(1, rings + 1):
        r = radius * k / rings
        ang = 2 * np.pi * np.arange(6 * k) / (6 * k)
        pts += np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1).tolist()
    pts = np.array(pts)
    tris = Delaunay(pts).simplices
    return np.column_stack([pts, np.zeros(len(pts))]), tris


def open_cylinder(n_around, n_axial, radius=1.0, height=1.0):
    """Axis-aligned (z) open cylinder, each quad split in two triangles."""
    ang = 2 * np.pi * np.arange(n_around) / n_around
    z = np.linspace(0, height, n_axial + 1)
    pts = np.array([[radius * np.cos(a), radius * np.sin(a), zz] for zz in z for a in ang])
    tris = []
    for k in range(n_axial):
        for j in range(n_around):
            a, b = k * n_around + j, k * n_around + (j + 1) % n_around
            c, d = a + n_around, b + n_around
            tris += [[a, b, d], [a, d, c]]
    return pts, np.array(tris)
