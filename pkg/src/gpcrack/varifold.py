"""Discrete integer-rectifiable curvature 2-varifolds with boundary.

A varifold is a triangle list with a positive integer multiplicity per
triangle.  The projection field is constant on each triangle
(``P_T = I - n n^T``).  The curvature tensor ``A[l, m, k]`` (tangential
derivative of ``P[l, m]`` in direction k) lives on vertices: it is the average
over the vertex's barycentric cell of the distributional derivative of the
piecewise-constant projection field, i.e. each interior edge contributes its
projection jump times half its length along the in-surface edge normal.

The boundary measure sits on edges whose incident multiplicities do not
cancel, with vector weight ``length * multiplicity * inward conormal``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, NonManifoldError, ParseError


@dataclass
class CrackEnergyBreakdown:
    mass: float
    curvature: float
    boundary: float

    @property
    def total(self):
        return self.mass + self.curvature + self.boundary

    def to_dict(self):
        return {"mass": self.mass, "curvature": self.curvature, "boundary": self.boundary, "total": self.total}


class DiscreteVarifold:
    """Triangles with integer multiplicities and cached geometry.

    Use :func:`from_triangles` rather than calling this directly.
    """

    def __init__(self, points, tris, theta, face_ids=None):
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
        self.theta = np.asarray(theta, dtype=np.int64).reshape(-1)
        self.face_ids = None if face_ids is None else np.asarray(face_ids, dtype=np.int64)
        X = self.points[self.tris]
        cr = np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
        dbl = np.linalg.norm(cr, axis=1)
        self.areas = 0.5 * dbl
        with np.errstate(invalid="ignore", divide="ignore"):
            self.normals = cr / dbl[:, None]
        self.centroids = X.mean(axis=1)
        self.proj = np.eye(3) - np.einsum("ti,tj->tij", self.normals, self.normals)
        self._build_edges()
        self._A = None

    def _build_edges(self):
        T = len(self.tris)
        local = np.array([[0, 1, 2], [1, 2, 0], [2, 0, 1]])   # (a, b, opposite)
        inc = {}
        for t in range(T):
            for a, b, c in local:
                va, vb = int(self.tris[t, a]), int(self.tris[t, b])
                inc.setdefault((min(va, vb), max(va, vb)), []).append((t, int(self.tris[t, c])))
        keys = sorted(inc)
        self.edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
        self.edge_incidence = [inc[k] for k in keys]
        self.edge_count = np.array([len(v) for v in self.edge_incidence], dtype=np.int64)
        self.edge_lengths = np.linalg.norm(self.points[self.edges[:, 1]] - self.points[self.edges[:, 0]], axis=1) \
            if len(keys) else np.zeros(0)

        b_edges, b_tri, b_mult, b_conormal = [], [], [], []
        for e, items in enumerate(self.edge_incidence):
            if len(items) == 1:
                t, opp = items[0]
                mult = int(self.theta[t])
            elif len(items) == 2:
                (t1, o1), (t2, o2) = items
                mult = abs(int(self.theta[t1]) - int(self.theta[t2]))
                t, opp = (t1, o1) if self.theta[t1] >= self.theta[t2] else (t2, o2)
            else:
                continue
            if mult == 0:
                continue
            a, b = self.points[self.edges[e]]
            u = (b - a) / np.linalg.norm(b - a)
            w = self.points[opp] - a
            nu = w - np.dot(w, u) * u
            b_edges.append(e)
            b_tri.append(t)
            b_mult.append(mult)
            # degenerate triangles are rejected by from_triangles after construction
            nn = np.linalg.norm(nu)
            b_conormal.append(nu / nn if nn > 0 else nu)
        self.boundary_edges = np.array(b_edges, dtype=np.int64)
        self.boundary_tri = np.array(b_tri, dtype=np.int64)
        self.boundary_mult = np.array(b_mult, dtype=np.int64)
        self.boundary_conormal = np.array(b_conormal, dtype=float).reshape(-1, 3)
        self.junction_edges = np.flatnonzero(self.edge_count > 2)

    @property
    def n_triangles(self):
        return len(self.tris)

    def vertex_areas(self, weighted=True):
        """One third of each incident triangle's area (times multiplicity if ``weighted``)."""
        w = self.areas * (self.theta if weighted else 1) / 3.0
        return np.bincount(self.tris.ravel(), weights=np.repeat(w, 3), minlength=len(self.points))

    def check_invariants(self):
        """Largest defects of the projection invariants (symmetry, idempotency, trace 2)."""
        P = self.proj
        if not len(P):
            return {"symmetry": 0.0, "idempotency": 0.0, "trace": 0.0}
        return {
            "symmetry": float(np.abs(P - P.swapaxes(1, 2)).max()),
            "idempotency": float(np.abs(P @ P - P).max()),
            "trace": float(np.abs(np.trace(P, axis1=1, axis2=2) - 2).max()),
        }

    def transformed(self, R, t):
        """Copy with every point mapped to ``R x + t``."""
        return DiscreteVarifold(self.points @ np.asarray(R).T + t, self.tris, self.theta, self.face_ids)


def from_triangles(points, tris, multiplicities=None, face_ids=None):
    """Build a varifold; raises GeometryError on degenerate triangles and ValueError on theta < 1."""
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    if multiplicities is None:
        multiplicities = np.ones(len(tris), dtype=np.int64)
    theta = np.asarray(multiplicities).reshape(-1)
    if theta.size != len(tris):
        raise ValueError("one multiplicity per triangle is required")
    if theta.size and (np.any(theta != np.round(theta)) or np.any(theta < 1)):
        raise ValueError("multiplicities must be integers >= 1")
    V = DiscreteVarifold(points, tris, theta.astype(np.int64), face_ids)
    bad = np.flatnonzero(~(V.areas > 1e-14 * max(1.0, float(np.max(V.areas, initial=0.0)))))
    if bad.size:
        raise GeometryError(f"triangle {int(bad[0])} has zero area")
    return V


def empty_varifold():
    return from_triangles(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def union(V1, V2):
    """Disjoint union (points are concatenated)."""
    n = len(V1.points)
    return from_triangles(np.vstack([V1.points, V2.points]), np.vstack([V1.tris, V2.tris + n]),
                          np.concatenate([V1.theta, V2.theta]))


def from_mesh_faces(mesh, face_ids, theta=1):
    """Varifold on candidate crack faces of a :class:`BodyMesh` (reference geometry)."""
    face_ids = np.asarray(sorted(int(f) for f in face_ids), dtype=np.int64)
    tris = mesh.cfaces[face_ids] if face_ids.size else np.zeros((0, 3), dtype=np.int64)
    th = np.broadcast_to(np.asarray(theta), face_ids.shape).astype(np.int64)
    return from_triangles(mesh.nodes, tris, th, face_ids=face_ids)


# -- measures ----------------------------------------------------------------------------

def mass(V):
    """Total multiplicity-weighted area."""
    return float(np.sum(V.theta * V.areas))


def weight_measure(V, region=None):
    """Weight of the triangles whose centroid satisfies ``region`` (a predicate on (T,3) arrays)."""
    if region is None:
        return mass(V)
    sel = np.asarray(region(V.centroids), dtype=bool)
    return float(np.sum((V.theta * V.areas)[sel]))


def curvature(V):
    """Per-vertex curvature tensors, shape (n_points, 3, 3, 3).

    Raises NonManifoldError if any edge is shared by more than two triangles.
    """
    if V._A is not None:
        return V._A
    if V.junction_edges.size:
        e = int(V.junction_edges[0])
        raise NonManifoldError(f"edge {tuple(int(v) for v in V.edges[e])} is shared by {int(V.edge_count[e])} triangles")
    A = np.zeros((len(V.points), 3, 3, 3))
    inner = np.flatnonzero(V.edge_count == 2)
    if inner.size:
        t1 = np.array([V.edge_incidence[e][0][0] for e in inner])
        t2 = np.array([V.edge_incidence[e][1][0] for e in inner])
        a, b = V.points[V.edges[inner, 0]], V.points[V.edges[inner, 1]]
        u = (b - a) / V.edge_lengths[inner, None]
        dc = V.centroids[t2] - V.centroids[t1]
        m = dc - np.sum(dc * u, axis=1, keepdims=True) * u
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        dP = V.proj[t2] - V.proj[t1]
        contrib = 0.5 * V.edge_lengths[inner, None, None, None] * np.einsum("elm,ek->elmk", dP, m)
        for side in (0, 1):
            np.add.at(A, V.edges[inner, side], contrib)
        area = V.vertex_areas(weighted=False)
        nz = area > 0
        A[nz] /= area[nz, None, None, None]
    V._A = A
    return A


def curvature_norms(V):
    """Frobenius norm of the per-vertex curvature over all 27 components."""
    A = curvature(V)
    return np.sqrt(np.sum(A * A, axis=(1, 2, 3)))


def curvature_energy(V, a1=1.0, p_bar=2.0):
    """a1 * sum_v (lumped weighted area) * |A_v|^p_bar."""
    return float(a1 * np.sum(V.vertex_areas() * curvature_norms(V) ** p_bar))


def boundary_measure(V):
    """Edge-supported vector measure: (edge indices, (k,3) weights length*mult*inward conormal)."""
    w = (V.edge_lengths[V.boundary_edges] * V.boundary_mult)[:, None] * V.boundary_conormal
    return V.boundary_edges, w


def boundary_mass(V):
    """Total variation of the boundary measure."""
    return float(np.sum(V.edge_lengths[V.boundary_edges] * V.boundary_mult))


def crack_energy(V, params):
    """Mass, curvature and boundary terms of the crack energy."""
    return CrackEnergyBreakdown(
        mass=float(params.a_bar * mass(V)),
        curvature=curvature_energy(V, params.a1, params.p_bar),
        boundary=float(params.a2 * boundary_mass(V)),
    )


# -- first variation ---------------------------------------------------------------------

class PolyBumpTest:
    """Test function phi(x, P) = bump(x) * (a0 + a.x) * (b0 + <B, P> + <B2, P*P>).

    ``bump`` is the standard C-infinity bump of radius ``radius`` centred at
    ``center`` with value 1 at the centre; ``radius=None`` drops it.  P*P is
    the entrywise square.
    """

    def __init__(self, a0=1.0, a=(0.0, 0.0, 0.0), b0=1.0, B=None, B2=None, center=None, radius=None):
        self.a0 = float(a0)
        self.a = np.asarray(a, dtype=float)
        self.b0 = float(b0)
        self.B = np.zeros((3, 3)) if B is None else np.asarray(B, dtype=float)
        self.B2 = np.zeros((3, 3)) if B2 is None else np.asarray(B2, dtype=float)
        self.center = None if center is None else np.asarray(center, dtype=float)
        self.radius = radius

    @classmethod
    def random(cls, rng, center, radius, p_dependent=True):
        return cls(a0=rng.uniform(0.5, 1.5), a=rng.uniform(-1, 1, 3), b0=1.0,
                   B=rng.uniform(-1, 1, (3, 3)) if p_dependent else None,
                   B2=rng.uniform(-1, 1, (3, 3)) if p_dependent else None,
                   center=center, radius=radius)

    def _bump(self, x):
        if self.center is None:
            return np.ones(len(x)), np.zeros_like(x)
        d = x - self.center
        u = np.sum(d * d, axis=1) / self.radius ** 2
        inside = u < 1
        b = np.zeros(len(x))
        g = np.zeros_like(x)
        ui = u[inside]
        b[inside] = np.exp(1.0 - 1.0 / (1.0 - ui))
        g[inside] = -(b[inside] * 2.0 / (self.radius ** 2 * (1.0 - ui) ** 2))[:, None] * d[inside]
        return b, g

    def evaluate(self, x, P):
        """Return (phi, grad_x phi, grad_P phi) at points x (k,3) with planes P (k,3,3)."""
        b, gb = self._bump(x)
        lin = self.a0 + x @ self.a
        pol = self.b0 + np.einsum("lm,klm->k", self.B, P) + np.einsum("lm,klm->k", self.B2, P * P)
        phi = b * lin * pol
        gx = (gb * lin[:, None] + b[:, None] * self.a) * pol[:, None]
        gP = (b * lin)[:, None, None] * (self.B + 2 * self.B2 * P)
        return phi, gx, gP


def first_variation_vector(V, phi):
    """Residual of the curvature-varifold identity for one scalar test function, per component.

    Integrals over the varifold use per-triangle vertex quadrature (one third
    of the weighted area at each corner, with that triangle's plane); the
    boundary integral uses the trapezoid rule on each boundary edge.
    """
    if V.n_triangles == 0:
        return np.zeros(3)
    A = curvature(V)
    x = V.points[V.tris].reshape(-1, 3)
    P = np.repeat(V.proj, 3, axis=0)
    Av = A[V.tris.ravel()]
    w = np.repeat(V.theta * V.areas / 3.0, 3)
    f, gx, gP = phi.evaluate(x, P)
    term = (np.einsum("kij,kj->ki", P, gx)
            + np.einsum("klmi,klm->ki", Av, gP)
            + f[:, None] * np.einsum("kijj->ki", Av))
    lhs = np.sum(w[:, None] * term, axis=0)
    if V.boundary_edges.size:
        edges, wb = boundary_measure(V)
        Pb = V.proj[V.boundary_tri]
        fa = phi.evaluate(V.points[V.edges[edges, 0]], Pb)[0]
        fb = phi.evaluate(V.points[V.edges[edges, 1]], Pb)[0]
        lhs = lhs + np.sum((0.5 * (fa + fb))[:, None] * wb, axis=0)
    return lhs


def first_variation_residual(V, test_functions):
    """Max over test functions of the Euclidean norm of the first-variation identity residual."""
    worst = 0.0
    for phi in test_functions:
        worst = max(worst, float(np.linalg.norm(first_variation_vector(V, phi))))
    return worst


# -- surface file format -----------------------------------------------------------------

def load_surface(path):
    """Read a ``trisurf 1`` file: nodes section then ``triangles M`` rows ``i j k theta``."""
    with open(path) as fh:
        lines = [ln.split("#", 1)[0].split() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != ["trisurf", "1"]:
        raise ParseError("expected header 'trisurf 1'")
    data = {}
    i = 1
    while i < len(lines):
        head = lines[i]
        if len(head) != 2 or head[0] not in ("nodes", "triangles"):
            raise ParseError(f"unexpected line {' '.join(head)!r}")
        n = int(head[1])
        rows = lines[i + 1:i + 1 + n]
        width = 3 if head[0] == "nodes" else 4
        if len(rows) != n or any(len(r) != width for r in rows):
            raise ParseError(f"section {head[0]!r} expects {n} rows of {width} fields")
        data[head[0]] = rows
        i += 1 + n
    try:
        pts = np.array([[float(v) for v in r] for r in data.get("nodes", [])]).reshape(-1, 3)
        tri = np.array([[int(v) for v in r] for r in data.get("triangles", [])], dtype=np.int64).reshape(-1, 4)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return from_triangles(pts, tri[:, :3], tri[:, 3])


def write_surface(V, path):
    out = ["trisurf 1", f"nodes {len(V.points)}"]
    out += [" ".join(repr(float(v)) for v in p) for p in V.points]
    out.append(f"triangles {V.n_triangles}")
    out += [f"{a} {b} {c} {int(t)}" for (a, b, c), t in zip(V.tris, V.theta)]
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
