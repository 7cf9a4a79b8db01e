"""Discrete membership tests for the admissible class of (deformation, varifold) pairs.

Each condition produces a :class:`ConditionRecord`; a record passes iff its
``margin`` is non-negative (strict positivity for the orientation margin).

The projected boundary of the deformation graph over a jumping face is
modelled as twice the face area (one sheet from each side), so the jump bound
``pi_#|dG_y| <= C mu_V`` reads ``theta(F) >= 2 / C`` on every jumping face.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import quad
from scipy.spatial import cKDTree

from .body_mesh import (JUMP_TOL_REL, TET_FACES, deformation_jump_set, element_gradients,
                        minor_field_jumps, reconstruct_field_gradient)
from .errors import NonManifoldError, ResolutionError
from .tensor_core import cof3, det3, frobenius
from .varifold import curvature_energy

MINOR_JUMP_TOL = 1e-8
VOXEL_CAP = 256 ** 3

ITEM_NAMES = {
    1: "curvature_varifold",
    2: "bounds_and_dirichlet",
    3: "jump_containment",
    4: "integrability",
    5: "orientation",
    6: "cof_gsbv",
    7: "det_gsbv",
    8: "minor_jump_containment",
}


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")


@dataclass
class ConditionRecord:
    item: int
    name: str
    passed: bool
    margin: float
    location: object = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"item": self.item, "name": self.name, "passed": bool(self.passed),
                "margin": _json_float(self.margin), "location": self.location, "details": self.details}


@dataclass
class NonInterpenetrationRecord:
    passed: bool
    cn_passed: bool
    gms_passed: bool
    det_integral: float
    image_volume: float
    tolerance: float
    deficit: float
    resolution: int
    gms_worst_margin: float
    gms_worst_index: int

    def to_dict(self):
        return {k: (_json_float(v) if isinstance(v, float) else v) for k, v in self.__dict__.items()}


@dataclass
class AdmissibilityReport:
    records: list
    noninterpenetration: NonInterpenetrationRecord = None

    @property
    def passed(self):
        ok = all(r.passed for r in self.records)
        if self.noninterpenetration is not None:
            ok = ok and self.noninterpenetration.passed
        return ok

    def record(self, item):
        return next(r for r in self.records if r.item == item)

    def failed_items(self):
        out = [r.item for r in self.records if not r.passed]
        if self.noninterpenetration is not None and not self.noninterpenetration.passed:
            out.append("noninterpenetration")
        return out

    def to_dict(self):
        return {
            "passed": self.passed,
            "records": [r.to_dict() for r in self.records],
            "noninterpenetration": None if self.noninterpenetration is None else self.noninterpenetration.to_dict(),
        }


def covered_faces(mesh, V):
    """Map candidate-face index -> total multiplicity of the V triangles lying on it.

    Uses ``V.face_ids`` when V was built on the mesh; otherwise matches vertex
    coordinates.  Returns (coverage dict, number of V triangles off the candidate surface).
    """
    cover = {}
    if V.n_triangles == 0:
        return cover, 0
    if V.face_ids is not None:
        for f, th in zip(V.face_ids, V.theta):
            cover[int(f)] = cover.get(int(f), 0) + int(th)
        return cover, 0
    tree = cKDTree(mesh.nodes)
    tol = 1e-9 * max(mesh.bbox_diagonal(), 1.0)
    dist, idx = tree.query(V.points[V.tris].reshape(-1, 3))
    idx = idx.reshape(-1, 3)
    ok = (dist.reshape(-1, 3) <= tol).all(axis=1)
    cand = {int(f): i for i, f in enumerate(mesh.candidate_face_ids)}
    off = 0
    for t in range(V.n_triangles):
        f = mesh.face_index.get(tuple(sorted(idx[t]))) if ok[t] else None
        c = cand.get(f) if f is not None else None
        if c is None:
            off += 1
            continue
        cover[c] = cover.get(c, 0) + int(V.theta[t])
    return cover, off


def _lnorm(vol, vals, e):
    return float(np.sum(vol * np.abs(vals) ** e) ** (1.0 / e))


def _cut_consistent(state):
    """True iff every non-activated interior face is shared (same cut node ids) by its two tets."""
    mesh = state.mesh
    blocked = {int(mesh.candidate_face_ids[a]) for a in state.active}
    for f, (a, b) in enumerate(mesh.face_tets):
        if f in blocked:
            continue
        ids_a = {int(state.tets[a][k]) for k in range(4) if mesh.tets[a][k] in mesh.faces[f]}
        ids_b = {int(state.tets[b][k]) for k in range(4) if mesh.tets[b][k] in mesh.faces[f]}
        if ids_a != ids_b:
            return False, f
    return True, None


def check_class(state, V, params, jump_tol=None, minor_tol=MINOR_JUMP_TOL):
    """Evaluate items (1)-(8) for the pair (state, V)."""
    mesh = state.mesh
    records = []
    vol = mesh.volumes

    # (1)
    inv = V.check_invariants()
    defect = max(inv.values())
    details = dict(inv)
    margin = 1e-12 - defect
    location = None
    try:
        curv = curvature_energy(V, params.a1, params.p_bar)
        details["curvature_energy"] = curv
        if not math.isfinite(curv):
            margin = -math.inf
    except NonManifoldError as exc:
        margin = -math.inf
        location = str(exc)
    if V.n_triangles and (np.any(V.theta < 1) or np.any(~(V.areas > 0))):
        margin = -math.inf
    cover, off = covered_faces(mesh, V)
    details["triangles_off_candidates"] = off
    records.append(ConditionRecord(1, ITEM_NAMES[1], margin >= 0, margin, location, details))

    # (2)
    norms = np.linalg.norm(state.y, axis=1)
    k = int(np.argmax(norms))
    mismatch = np.abs(state.y[state.fixed] - state.y0[state.fixed])
    mis = float(mismatch.max()) if mismatch.size else 0.0
    if mis > 0:
        fixed_ids = np.flatnonzero(state.fixed)
        j = int(fixed_ids[np.argmax(mismatch.max(axis=1))])
        margin, location = -mis, {"node": int(state.parent[j]), "cut_node": j, "kind": "dirichlet"}
    else:
        margin, location = params.K - float(norms[k]), {"node": int(state.parent[k]), "cut_node": k, "kind": "sup_norm"}
    records.append(ConditionRecord(2, ITEM_NAMES[2], margin >= 0, margin, location,
                                   {"max_norm": float(norms[k]), "K": params.K, "dirichlet_mismatch": mis}))

    # (3)
    js = deformation_jump_set(state, jump_tol)
    theta_min = 2.0 / params.C
    margin, location = math.inf, None
    for f, area in zip(js.faces, js.areas):
        th = cover.get(int(f), 0)
        mrg = (params.C * th - 2.0) * area
        if mrg < margin:
            margin, location = mrg, {"face": int(f), "theta": th}
    records.append(ConditionRecord(3, ITEM_NAMES[3], margin >= 0, margin, location,
                                   {"jump_faces": int(len(js.faces)), "jump_measure": js.measure,
                                    "theta_required": theta_min}))

    # (4)
    F = element_gradients(state)
    Cf, J = cof3(F), det3(F)
    n4 = {"grad_Lp": _lnorm(vol, frobenius(F), params.p),
          "cof_Lq": _lnorm(vol, frobenius(Cf), params.q),
          "det_Lr": _lnorm(vol, J, params.r)}
    ok4 = all(math.isfinite(v) for v in n4.values())
    records.append(ConditionRecord(4, ITEM_NAMES[4], ok4, 0.0 if ok4 else -math.inf, None, n4))

    # (5)
    k = int(np.argmin(J))
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_s = float(np.sum(vol * np.where(J > 0, J, np.nan) ** (-params.s))) if np.all(J > 0) else math.inf
    records.append(ConditionRecord(5, ITEM_NAMES[5], bool(J[k] > 0) and math.isfinite(inv_s), float(J[k]),
                                   {"tet": k}, {"inverse_det_Ls_integral": _json_float(inv_s)}))

    # (6), (7)
    consistent, bad_face = _cut_consistent(state)
    dC = reconstruct_field_gradient(state, Cf)
    dJ = reconstruct_field_gradient(state, J)
    nC = _lnorm(vol, np.sqrt(np.sum(dC * dC, axis=(1, 2, 3))), params.q)
    nJ = _lnorm(vol, np.linalg.norm(dJ, axis=1), params.r)
    for item, val, key in ((6, nC, "grad_cof_Lq"), (7, nJ, "grad_det_Lr")):
        ok = consistent and math.isfinite(val)
        records.append(ConditionRecord(item, ITEM_NAMES[item], ok, 0.0 if ok else -math.inf,
                                       None if consistent else {"face": bad_face},
                                       {key: _json_float(val), "jumps_only_on_activated_faces": consistent}))

    # (8)
    mj = minor_field_jumps(state)
    margin, location = math.inf, None
    n_jump = 0
    for f, cj, dj in zip(mj.faces, mj.cof_jump, mj.det_jump):
        if cj > minor_tol or dj > minor_tol:
            n_jump += 1
            th = cover.get(int(f), 0)
            if th - 1 < margin:
                margin, location = float(th - 1), {"face": int(f), "theta": th}
    records.append(ConditionRecord(8, ITEM_NAMES[8], margin >= 0, margin, location,
                                   {"minor_jump_faces": n_jump,
                                    "cof_jump_measure": float(np.sum(mj.cof_measure)),
                                    "det_jump_measure": float(np.sum(mj.det_measure))}))
    return AdmissibilityReport(records)


# -- non-interpenetration ----------------------------------------------------------------

def _cut_boundary_faces(state):
    count = {}
    for tet in state.tets:
        for k in range(4):
            key = tuple(sorted(int(v) for v in tet[TET_FACES[k]]))
            count[key] = count.get(key, 0) + 1
    return np.array([k for k, c in count.items() if c == 1], dtype=np.int64).reshape(-1, 3)


def deformed_surface_area(state):
    """Area of the deformed boundary of the cut body (crack lips included)."""
    P = state.y[_cut_boundary_faces(state)]
    return float(0.5 * np.sum(np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)))


def voxel_image(state, resolution=128, memory_cap=VOXEL_CAP):
    """Rasterize the deformed body: voxels of the deformed bounding box whose centre lies in a deformed tet.

    Returns (covered boolean grid, lower corner, voxel size).
    """
    n = int(resolution)
    if n ** 3 > memory_cap:
        raise ResolutionError(f"{n}^3 voxels exceed the cap of {memory_cap}")
    Y = state.y[state.tets]
    lo = state.y.min(axis=0)
    hi = state.y.max(axis=0)
    h = (hi - lo) / n
    h[h == 0] = 1.0
    grid = np.zeros((n, n, n), dtype=bool)
    Ds = np.stack([Y[:, 1] - Y[:, 0], Y[:, 2] - Y[:, 0], Y[:, 3] - Y[:, 0]], axis=-1)
    Dinv = np.linalg.inv(Ds)
    tlo = np.clip(np.floor((Y.min(axis=1) - lo) / h - 0.5).astype(int), 0, n - 1)
    thi = np.clip(np.ceil((Y.max(axis=1) - lo) / h - 0.5).astype(int), 0, n - 1)
    for t in range(len(Y)):
        axes = [np.arange(tlo[t, d], thi[t, d] + 1) for d in range(3)]
        I, Jg, Kg = np.meshgrid(*axes, indexing="ij")
        centres = lo + (np.stack([I, Jg, Kg], axis=-1) + 0.5) * h
        lam = (centres - Y[t, 0]) @ Dinv[t].T
        inside = (lam >= -1e-12).all(axis=-1) & (lam.sum(axis=-1) <= 1 + 1e-12)
        grid[I[inside], Jg[inside], Kg[inside]] = True
    return grid, lo, h


_BUMP_RADIAL = None


def _bump_integral(radius):
    """Integral over R^3 of exp(1 - 1/(1 - |z|^2/radius^2)) on the unit ball scaled by radius."""
    global _BUMP_RADIAL
    if _BUMP_RADIAL is None:
        _BUMP_RADIAL = quad(lambda t: math.exp(1 - 1 / (1 - t * t)) * t * t if t < 1 else 0.0, 0, 1)[0]
    return 4 * math.pi * radius ** 3 * _BUMP_RADIAL


def _bump(z, c, rho):
    u = np.sum((z - c) ** 2, axis=-1) / rho ** 2
    out = np.zeros(u.shape)
    m = u < 1
    out[m] = np.exp(1 - 1 / (1 - u[m]))
    return out


def _subtet_centroids(levels=2):
    """Barycentric coordinates of the centroids of a regular 8**levels subdivision of the unit tet."""
    tets = [np.eye(4)]
    for _ in range(levels):
        new = []
        for T in tets:
            m = {(i, j): 0.5 * (T[i] + T[j]) for i in range(4) for j in range(i + 1, 4)}
            a, b, c, d = T
            new += [np.array([a, m[0, 1], m[0, 2], m[0, 3]]), np.array([m[0, 1], b, m[1, 2], m[1, 3]]),
                    np.array([m[0, 2], m[1, 2], c, m[2, 3]]), np.array([m[0, 3], m[1, 3], m[2, 3], d])]
            # the inner octahedron, split along the m02-m13 diagonal
            p, q = m[0, 2], m[1, 3]
            ring = [m[0, 1], m[1, 2], m[2, 3], m[0, 3]]
            for k in range(4):
                new.append(np.array([p, q, ring[k], ring[(k + 1) % 4]]))
        tets = new
    return np.array([T.mean(axis=0) for T in tets])


def check_noninterpenetration(state, resolution=128, sample_functions=8, seed=0, memory_cap=VOXEL_CAP):
    """Volume (Ciarlet-Necas) and sampled test-function (GMS) non-interpenetration checks."""
    mesh = state.mesh
    F = element_gradients(state)
    J = det3(F)
    det_integral = float(np.sum(mesh.volumes * J))
    grid, lo, h = voxel_image(state, resolution, memory_cap)
    image_volume = float(grid.sum() * np.prod(h))
    # a voxel centre is misclassified only within half a voxel diagonal of the surface
    tol = 0.5 * float(np.linalg.norm(h)) * deformed_surface_area(state)
    deficit = det_integral - image_volume
    cn_ok = det_integral <= image_volume + tol

    rng = np.random.default_rng(seed)
    bary = _subtet_centroids(2)
    Xq = np.einsum("qa,tai->tqi", bary, mesh.nodes[mesh.tets])
    Yq = np.einsum("qa,tai->tqi", bary, state.y[state.tets])
    wq = (mesh.volumes * J)[:, None] / len(bary)
    ylo, yhi = state.y.min(axis=0), state.y.max(axis=0)
    diag = float(np.linalg.norm(yhi - ylo))
    xdiag = mesh.bbox_diagonal()
    worst, worst_k = math.inf, -1
    for k in range(sample_functions):
        zc = rng.uniform(ylo, yhi)
        rho = rng.uniform(0.2, 0.5) * diag
        xc = mesh.centroids[rng.integers(mesh.n_tets)]
        ax = _bump(Xq, xc, 2.0 * xdiag)
        lhs = float(np.sum(wq * ax * _bump(Yq, zc, rho)))
        # sup_x of the x-factor is 1 (attained at its centre inside the body)
        rhs = _bump_integral(rho)
        margin = rhs + tol - lhs
        if margin < worst:
            worst, worst_k = margin, k
    gms_ok = worst >= 0
    return NonInterpenetrationRecord(
        passed=bool(cn_ok and gms_ok), cn_passed=bool(cn_ok), gms_passed=bool(gms_ok),
        det_integral=det_integral, image_volume=image_volume, tolerance=tol, deficit=deficit,
        resolution=int(resolution), gms_worst_margin=float(worst), gms_worst_index=int(worst_k))
