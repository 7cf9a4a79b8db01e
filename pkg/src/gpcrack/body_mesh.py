"""Tetrahedral body, mesh cutting along crack faces, and the discrete bulk energy.

Deformations are P1 (affine per tet).  Activating candidate crack faces cuts
the mesh: a node on an activated face is duplicated once per connected
component of its tet fan, where two tets in the fan are connected when they
share a non-activated face.  Nodes on the crack front keep a single copy.

cof(grad y) and det(grad y) are constant per tet; their gradients come from a
weighted least-squares fit over face neighbours (weights 1/centroid distance)
that never reaches across an activated face.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.sparse.linalg import spsolve

from .energy_density import eval_density, grad_density
from .errors import DomainError, ParseError, TopologyError, ValidationError
from .tensor_core import cof3, d_cof_adjoint, det3

# local face k of a tet is the face opposite local vertex k
TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
JUMP_TOL_REL = 1e-8


def _tri_area(P):
    return 0.5 * np.linalg.norm(np.cross(P[..., 1, :] - P[..., 0, :], P[..., 2, :] - P[..., 0, :]), axis=-1)


class BodyMesh:
    """Reference tetrahedral mesh with boundary tags, crack candidates and Dirichlet data.

    Parameters
    ----------
    nodes : (N, 3) float
    tets : (M, 4) int, positively oriented
    bfaces : (K, 3) int, boundary triangles
    btags : sequence of "g0" / "g1", one per boundary triangle
    cfaces : (L, 3) int, candidate crack faces (must be interior)
    dirichlet : dict node -> (3,) prescribed deformation on Gamma_0 nodes
    """

    def __init__(self, nodes, tets, bfaces, btags, cfaces, dirichlet, validate=True):
        self.nodes = np.ascontiguousarray(nodes, dtype=float).reshape(-1, 3)
        self.tets = np.ascontiguousarray(tets, dtype=np.int64).reshape(-1, 4)
        self.bfaces = np.asarray(bfaces, dtype=np.int64).reshape(-1, 3)
        self.btags = [str(t) for t in btags]
        self.cfaces = np.asarray(cfaces, dtype=np.int64).reshape(-1, 3)
        items = sorted((int(k), np.asarray(v, dtype=float)) for k, v in dict(dirichlet).items())
        self.dirichlet_nodes = np.array([k for k, _ in items], dtype=np.int64)
        self.dirichlet_values = np.array([v for _, v in items], dtype=float).reshape(-1, 3)
        self._check_indices()
        self._build()
        if validate:
            self.validate()

    def _check_indices(self):
        n = len(self.nodes)
        for arr, what in ((self.tets, "tet"), (self.bfaces, "boundary face"), (self.cfaces, "crack face"),
                          (self.dirichlet_nodes, "Dirichlet entry")):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise ValidationError(f"{what} references a node outside 0..{n - 1}")

    # -- derived geometry and adjacency --------------------------------------------------
    def _build(self):
        X = self.nodes[self.tets]
        self.Dm = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0], X[:, 3] - X[:, 0]], axis=-1)
        self.volumes = det3(self.Dm) / 6.0
        with np.errstate(divide="ignore", invalid="ignore"):
            self.Dm_inv = cof3(self.Dm).swapaxes(-1, -2) / det3(self.Dm)[:, None, None]
        self.centroids = X.mean(axis=1)

        faces = {}
        for t, tet in enumerate(self.tets):
            for k in range(4):
                key = tuple(sorted(tet[TET_FACES[k]]))
                faces.setdefault(key, []).append(t)
        self.face_index = {}
        interior, face_tets, boundary = [], [], []
        self.nonmanifold_faces = []
        for key, ts in faces.items():
            if len(ts) == 2:
                self.face_index[key] = len(interior)
                interior.append(key)
                face_tets.append(sorted(ts))
            elif len(ts) == 1:
                boundary.append(key)
            else:
                self.nonmanifold_faces.append(key)
        self.faces = np.array(interior, dtype=np.int64).reshape(-1, 3)
        self.face_tets = np.array(face_tets, dtype=np.int64).reshape(-1, 2)
        self.face_areas = _tri_area(self.nodes[self.faces]) if len(self.faces) else np.zeros(0)
        self.boundary_face_set = set(boundary)

        self.candidate_face_ids = np.array(
            [self.face_index.get(tuple(sorted(f)), -1) for f in self.cfaces], dtype=np.int64)
        self.candidate_areas = _tri_area(self.nodes[self.cfaces]) if len(self.cfaces) else np.zeros(0)

        node_tets = [[] for _ in range(len(self.nodes))]
        for t, tet in enumerate(self.tets):
            for v in tet:
                node_tets[v].append(t)
        self.node_tets = node_tets

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_tets(self):
        return len(self.tets)

    def boundary_area(self, tag):
        sel = [i for i, t in enumerate(self.btags) if t == tag]
        if not sel:
            return 0.0
        return float(np.sum(_tri_area(self.nodes[self.bfaces[sel]])))

    def gamma0_nodes(self):
        sel = [i for i, t in enumerate(self.btags) if t == "g0"]
        return np.unique(self.bfaces[sel]) if sel else np.zeros(0, dtype=np.int64)

    def bbox_diagonal(self):
        return float(np.linalg.norm(self.nodes.max(axis=0) - self.nodes.min(axis=0)))

    def validate(self):
        bad = np.flatnonzero(~(self.volumes > 0))
        if bad.size:
            raise ValidationError(f"tet {int(bad[0])} has non-positive reference volume {self.volumes[bad[0]]:.6g}")
        if self.nonmanifold_faces:
            raise ValidationError(f"face {self.nonmanifold_faces[0]} is shared by more than two tets")
        for i, f in enumerate(self.bfaces):
            if tuple(sorted(f)) not in self.boundary_face_set:
                raise ValidationError(f"boundary face {i} {tuple(f)} is not on the mesh boundary")
        if len(self.btags) != len(self.bfaces):
            raise ValidationError("one tag per boundary face is required")
        for i, t in enumerate(self.btags):
            if t not in ("g0", "g1"):
                raise ValidationError(f"boundary face {i} has unknown tag {t!r}")
        bad = np.flatnonzero(self.candidate_face_ids < 0)
        if bad.size:
            raise ValidationError(f"crack face {int(bad[0])} {tuple(self.cfaces[bad[0]])} is not an interior face")
        if len(set(self.candidate_face_ids.tolist())) != len(self.candidate_face_ids):
            raise ValidationError("duplicate crack candidate faces")
        if not self.boundary_area("g0") > 0:
            raise ValidationError("Gamma_0 has zero area")
        missing = np.setdiff1d(self.gamma0_nodes(), self.dirichlet_nodes)
        if missing.size:
            raise ValidationError(f"Gamma_0 node {int(missing[0])} has no Dirichlet value")


# -- file format -------------------------------------------------------------------------

def _tokens(path):
    with open(path) as fh:
        text = fh.read()
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    return lines


def parse_mesh_lines(lines):
    if not lines or lines[0] != ["tetmesh", "1"]:
        raise ParseError("expected header 'tetmesh 1'")
    sections = {"nodes": [], "tets": [], "bfaces": [], "cfaces": [], "dirichlet": []}
    widths = {"nodes": 3, "tets": 4, "bfaces": 4, "cfaces": 3, "dirichlet": 4}
    i = 1
    while i < len(lines):
        head = lines[i]
        if len(head) != 2 or head[0] not in sections:
            raise ParseError(f"unexpected line {' '.join(head)!r}")
        name = head[0]
        try:
            count = int(head[1])
        except ValueError:
            raise ParseError(f"bad count in section {name!r}") from None
        rows = lines[i + 1:i + 1 + count]
        if len(rows) != count or any(len(r) != widths[name] for r in rows):
            raise ParseError(f"section {name!r} expects {count} rows of {widths[name]} fields")
        sections[name] = rows
        i += 1 + count
    try:
        nodes = np.array([[float(v) for v in r] for r in sections["nodes"]]).reshape(-1, 3)
        tets = np.array([[int(v) for v in r] for r in sections["tets"]], dtype=np.int64).reshape(-1, 4)
        bfaces = np.array([[int(v) for v in r[:3]] for r in sections["bfaces"]], dtype=np.int64).reshape(-1, 3)
        btags = [r[3] for r in sections["bfaces"]]
        cfaces = np.array([[int(v) for v in r] for r in sections["cfaces"]], dtype=np.int64).reshape(-1, 3)
        dirichlet = {int(r[0]): [float(v) for v in r[1:]] for r in sections["dirichlet"]}
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return nodes, tets, bfaces, btags, cfaces, dirichlet


def load_mesh(path):
    """Read and validate a ``tetmesh 1`` file."""
    return BodyMesh(*parse_mesh_lines(_tokens(path)))


def write_mesh(mesh, path):
    """Write ``mesh`` so that :func:`load_mesh` restores it bit for bit."""
    out = ["tetmesh 1", f"nodes {mesh.n_nodes}"]
    out += [" ".join(repr(float(v)) for v in x) for x in mesh.nodes]
    out.append(f"tets {mesh.n_tets}")
    out += [" ".join(str(int(v)) for v in t) for t in mesh.tets]
    out.append(f"bfaces {len(mesh.bfaces)}")
    out += [" ".join(str(int(v)) for v in f) + f" {tag}" for f, tag in zip(mesh.bfaces, mesh.btags)]
    out.append(f"cfaces {len(mesh.cfaces)}")
    out += [" ".join(str(int(v)) for v in f) for f in mesh.cfaces]
    out.append(f"dirichlet {len(mesh.dirichlet_nodes)}")
    out += [f"{int(k)} " + " ".join(repr(float(v)) for v in y)
            for k, y in zip(mesh.dirichlet_nodes, mesh.dirichlet_values)]
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


# -- cut topology and deformation state ---------------------------------------------------

@dataclass
class MinorFieldJumps:
    faces: np.ndarray          # candidate indices of activated faces
    areas: np.ndarray
    cof_jump: np.ndarray       # Frobenius norm of cof difference across each face
    det_jump: np.ndarray       # |det difference|

    @property
    def cof_measure(self):
        return self.cof_jump * self.areas

    @property
    def det_measure(self):
        return self.det_jump * self.areas


@dataclass
class JumpSet:
    faces: np.ndarray          # candidate indices
    areas: np.ndarray
    mean_jump: np.ndarray

    @property
    def measure(self):
        return float(np.sum(self.areas))


@dataclass
class DeformationState:
    """Cut topology plus nodal deformation values.

    ``tets`` index the cut node set; ``parent[k]`` is the reference node a cut
    node was copied from.  ``y`` holds one deformation value per cut node.
    """

    mesh: BodyMesh
    active: tuple
    tets: np.ndarray
    parent: np.ndarray
    y: np.ndarray
    fixed: np.ndarray
    y0: np.ndarray
    stencil_nb: np.ndarray = field(repr=False)
    stencil_coef: np.ndarray = field(repr=False)
    active_face_nodes: np.ndarray = field(repr=False)

    @property
    def n_nodes(self):
        return len(self.parent)

    @property
    def n_duplicated(self):
        return self.n_nodes - self.mesh.n_nodes

    def copy(self):
        out = DeformationState(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        out.y = self.y.copy()
        return out

    def with_y(self, y):
        out = self.copy()
        out.y = np.array(y, dtype=float).reshape(-1, 3)
        return out

    def apply_dirichlet(self):
        self.y[self.fixed] = self.y0[self.fixed]
        return self

    def components(self):
        """Connected components of the cut mesh (labels per cut node)."""
        n = self.n_nodes
        i = np.repeat(self.tets[:, :1], 3, axis=1).ravel()
        j = self.tets[:, 1:].ravel()
        A = sp.coo_matrix((np.ones(i.size), (i, j)), shape=(n, n))
        return connected_components(A, directed=False)


def _active_interior_faces(mesh, active):
    active = tuple(sorted({int(a) for a in active}))
    if any(a < 0 or a >= len(mesh.cfaces) for a in active):
        raise TopologyError(f"active set {active} is not a subset of the {len(mesh.cfaces)} candidate faces")
    return active, {int(mesh.candidate_face_ids[a]) for a in active}


def reconstruction_stencil(mesh, blocked):
    """Per-tet least-squares coefficients.

    For tet e with usable neighbours n_k the reconstructed gradient of an
    element field f is ``sum_k coef[e, k] * (f[n_k] - f[e])``.  Padding slots
    point at e itself with zero coefficients.
    """
    m = mesh.n_tets
    nb = np.tile(np.arange(m)[:, None], (1, 4))
    count = np.zeros(m, dtype=np.int64)
    for f, (a, b) in enumerate(mesh.face_tets):
        if f in blocked:
            continue
        nb[a, count[a]] = b
        count[a] += 1
        nb[b, count[b]] = a
        count[b] += 1
    dc = mesh.centroids[nb] - mesh.centroids[:, None, :]
    dist = np.linalg.norm(dc, axis=-1)
    w = np.zeros_like(dist)
    np.divide(1.0, dist, out=w, where=dist > 0)
    M = np.einsum("ek,eki,ekj->eij", w, dc, dc)
    coef = np.zeros((m, 4, 3))
    ok = count >= 3
    if np.any(ok):
        s = np.linalg.svd(M[ok], compute_uv=False)
        good = s[:, -1] > 1e-12 * s[:, 0]
        idx = np.flatnonzero(ok)[good]
        Minv = np.linalg.inv(M[idx])
        coef[idx] = np.einsum("eij,ekj->eki", Minv, w[idx, :, None] * dc[idx])
    return nb, coef


def cut_mesh(mesh, active=()):
    """Duplicate nodes along the activated candidate faces.

    ``active`` holds candidate indices (rows of ``mesh.cfaces``).  The returned
    state carries the identity deformation on the cut node set.
    """
    active, blocked = _active_interior_faces(mesh, active)
    tets = mesh.tets.copy()
    parent = list(range(mesh.n_nodes))
    crack_nodes = sorted({int(v) for f in blocked for v in mesh.faces[f]})
    for v in crack_nodes:
        fan = mesh.node_tets[v]
        pos = {t: i for i, t in enumerate(fan)}
        uf = list(range(len(fan)))

        def find(a):
            while uf[a] != a:
                uf[a] = uf[uf[a]]
                a = uf[a]
            return a

        for t in fan:
            for k in range(4):
                fk = TET_FACES[k]
                if v not in mesh.tets[t][fk]:
                    continue
                f = mesh.face_index.get(tuple(sorted(mesh.tets[t][fk])))
                if f is None or f in blocked:
                    continue
                a, b = mesh.face_tets[f]
                ra, rb = find(pos[a]), find(pos[b])
                if ra != rb:
                    uf[max(ra, rb)] = min(ra, rb)
        roots = sorted({find(i) for i in range(len(fan))})
        for root in roots[1:]:
            new = len(parent)
            parent.append(v)
            for i, t in enumerate(fan):
                if find(i) == root:
                    tets[t][tets[t] == v] = new
    parent = np.array(parent, dtype=np.int64)
    y = mesh.nodes[parent].copy()

    fixed = np.zeros(len(parent), dtype=bool)
    y0 = np.zeros((len(parent), 3))
    lookup = {int(k): i for i, k in enumerate(mesh.dirichlet_nodes)}
    for c, p in enumerate(parent):
        i = lookup.get(int(p))
        if i is not None:
            fixed[c] = True
            y0[c] = mesh.dirichlet_values[i]

    nb, coef = reconstruction_stencil(mesh, blocked)

    # cut ids of each activated face's three vertices, seen from either side
    afn = np.zeros((len(active), 3, 2), dtype=np.int64)
    for r, a in enumerate(active):
        f = int(mesh.candidate_face_ids[a])
        for side, t in enumerate(mesh.face_tets[f]):
            for j, v in enumerate(mesh.faces[f]):
                loc = int(np.flatnonzero(mesh.tets[t] == v)[0])
                afn[r, j, side] = tets[t][loc]
    return DeformationState(mesh, active, tets, parent, y, fixed, y0, nb, coef, afn)


def initial_guess(state):
    """Identity plus the P1-harmonic extension of the Dirichlet displacement y0 - x.

    Free boundaries carry the natural (zero-traction) condition, so affine data
    is reproduced exactly when its displacement gradient has no normal
    component there (e.g. a stretch along the clamped axis).  Components
    without Dirichlet nodes are held at the identity.
    """
    mesh = state.mesh
    n = state.n_nodes
    B = np.concatenate([-mesh.Dm_inv.sum(axis=1, keepdims=True), mesh.Dm_inv], axis=1)  # (m,4,3)
    Ke = mesh.volumes[:, None, None] * np.einsum("eai,ebi->eab", B, B)
    rows = np.repeat(state.tets, 4, axis=1).ravel()
    cols = np.tile(state.tets, (1, 4)).ravel()
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    X = mesh.nodes[state.parent]
    u = np.zeros_like(X)
    u[state.fixed] = state.y0[state.fixed] - X[state.fixed]
    _, labels = state.components()
    anchored = np.zeros(labels.max() + 1, dtype=bool)
    anchored[labels[state.fixed]] = True
    free = ~state.fixed & anchored[labels]
    if np.any(free):
        Kff = K[free][:, free].tocsc()
        rhs = -K[free][:, state.fixed] @ u[state.fixed]
        sol = spsolve(Kff, rhs)
        u[free] = np.asarray(sol).reshape(-1, 3)
    out = state.copy()
    out.y = X + u
    return out


# -- element fields ----------------------------------------------------------------------

def _gradients(state, y):
    Y = y[state.tets]
    Ds = np.stack([Y[:, 1] - Y[:, 0], Y[:, 2] - Y[:, 0], Y[:, 3] - Y[:, 0]], axis=-1)
    return Ds @ state.mesh.Dm_inv


def element_gradients(state):
    """Constant deformation gradient on every tet."""
    return _gradients(state, state.y)


def minor_fields(state):
    """Per-tet (cof grad y, det grad y)."""
    F = element_gradients(state)
    return cof3(F), det3(F)


def reconstruct_field_gradient(state, values):
    """Least-squares gradient of a per-tet field; values shape (m, ...) -> (m, ..., 3)."""
    values = np.asarray(values, dtype=float)
    diff = values[state.stencil_nb] - values[:, None]
    return np.einsum("ek...,eki->e...i", diff, state.stencil_coef)


def reconstruct_minor_gradients(state):
    """Per-tet (grad[cof grad y] of shape (m,3,3,3), grad[det grad y] of shape (m,3))."""
    C, J = minor_fields(state)
    return reconstruct_field_gradient(state, C), reconstruct_field_gradient(state, J)


def minor_field_jumps(state):
    """Jumps of cof and det across each activated face."""
    mesh = state.mesh
    C, J = minor_fields(state)
    fids = mesh.candidate_face_ids[list(state.active)] if state.active else np.zeros(0, dtype=np.int64)
    a, b = mesh.face_tets[fids, 0], mesh.face_tets[fids, 1]
    dC = C[a] - C[b]
    return MinorFieldJumps(
        faces=np.array(state.active, dtype=np.int64),
        areas=mesh.face_areas[fids],
        cof_jump=np.sqrt(np.sum(dC * dC, axis=(-2, -1))),
        det_jump=np.abs(J[a] - J[b]),
    )


def deformation_jump_set(state, tol=None):
    """Activated faces whose one-sided nodal traces differ by more than ``tol`` (max norm).

    Default tolerance is 1e-8 times the reference bounding-box diagonal.
    """
    if tol is None:
        tol = JUMP_TOL_REL * state.mesh.bbox_diagonal()
    if not state.active:
        return JumpSet(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))
    afn = state.active_face_nodes
    d = state.y[afn[:, :, 0]] - state.y[afn[:, :, 1]]
    maxabs = np.abs(d).max(axis=(1, 2))
    sel = maxabs > tol
    act = np.array(state.active, dtype=np.int64)
    return JumpSet(
        faces=act[sel],
        areas=state.mesh.candidate_areas[act[sel]],
        mean_jump=np.linalg.norm(d[sel], axis=-1).mean(axis=1),
    )


# -- energy ------------------------------------------------------------------------------

def element_energy_density(state, spec, y=None):
    """Per-tet density values (inf on tets with det <= 0)."""
    y = state.y if y is None else y
    F = _gradients(state, y)
    C, J = cof3(F), det3(F)
    D1 = reconstruct_field_gradient(state, C)
    D2 = reconstruct_field_gradient(state, J)
    return np.atleast_1d(eval_density(spec, F, D1, D2))


def bulk_energy(state, spec, params=None, y=None):
    """One-point quadrature of the density; +inf if any tet has det <= 0."""
    W = element_energy_density(state, spec, y)
    if not np.all(np.isfinite(W)):
        return np.inf
    return float(np.sum(state.mesh.volumes * W))


def energy_and_gradient(state, spec, y=None):
    """Bulk energy and its exact gradient with respect to every cut node value.

    The gradient is chained through the cofactor/determinant fields and the
    reconstruction stencils.  Rows of fixed nodes are zeroed.
    """
    y = state.y if y is None else y
    mesh = state.mesh
    F = _gradients(state, y)
    C, J = cof3(F), det3(F)
    if np.any(~(J > 0)):
        raise DomainError("bulk gradient requested where some tet has det <= 0")
    D1 = reconstruct_field_gradient(state, C)
    D2 = reconstruct_field_gradient(state, J)
    vol = mesh.volumes
    W = np.atleast_1d(eval_density(spec, F, D1, D2))
    E = float(np.sum(vol * W))
    dG, dD1, dD2 = grad_density(spec, F, D1, D2)

    m = mesh.n_tets
    nb, coef = state.stencil_nb, state.stencil_coef
    # adjoints of the reconstruction: D_e = sum_k coef[e,k] (f[nb[e,k]] - f[e])
    P1 = vol[:, None, None, None] * dD1
    Q = np.einsum("eijl,ekl->ekij", P1, coef)                        # (m,4,3,3)
    adjC = np.zeros((m, 3, 3))
    np.add.at(adjC, nb.ravel(), Q.reshape(-1, 3, 3))
    adjC -= Q.sum(axis=1)
    q = np.einsum("el,ekl->ek", vol[:, None] * dD2, coef)             # (m,4)
    adjJ = np.bincount(nb.ravel(), weights=q.ravel(), minlength=m) - q.sum(axis=1)

    dF = vol[:, None, None] * dG + d_cof_adjoint(F, adjC) + adjJ[:, None, None] * C
    H = dF @ mesh.Dm_inv.swapaxes(-1, -2)                             # dE/dDs, columns = vertices 1..3
    nodal = np.concatenate([-H.sum(axis=-1, keepdims=True), H], axis=-1)  # (m,3,4)
    g = np.zeros((state.n_nodes, 3))
    idx = state.tets.ravel()
    vals = nodal.swapaxes(1, 2).reshape(-1, 3)
    for d in range(3):
        g[:, d] = np.bincount(idx, weights=vals[:, d], minlength=state.n_nodes)
    g[state.fixed] = 0.0
    return E, g


def bulk_gradient(state, spec, params=None):
    """Gradient of :func:`bulk_energy` w.r.t. free nodal values (fixed rows are zero)."""
    return energy_and_gradient(state, spec)[1]


def element_adjacency_distance(mesh, source):
    """Face-graph distance from tet ``source`` to every tet (ignores cuts)."""
    m = mesh.n_tets
    A = sp.coo_matrix((np.ones(len(mesh.face_tets)), (mesh.face_tets[:, 0], mesh.face_tets[:, 1])), shape=(m, m))
    return shortest_path(A, directed=False, unweighted=True, indices=source)
