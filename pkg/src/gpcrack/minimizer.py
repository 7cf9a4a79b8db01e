"""Minimization of bulk + crack energy over deformations and a finite family of crack sets.

The inner problem (fixed crack set) is solved by a limited-memory quasi-Newton
descent with backtracking.  A trial step is accepted only if it decreases the
energy, keeps det grad y > 0 on every tet (the energy is +inf otherwise) and,
after projection, keeps every free node inside the ball |y| <= K.

The outer problem enumerates crack candidates supported on the tagged
candidate surface, always including the crack-free configuration.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import math
import time

import numpy as np

from .admissibility import _json_float, check_class, check_noninterpenetration
from .body_mesh import bulk_energy, cut_mesh, element_energy_density, energy_and_gradient, initial_guess
from .errors import NoFeasibleCandidate
from .tensor_core import det3
from .varifold import crack_energy, from_mesh_faces, mass

STRATEGIES = ("enumerate-connected-subsurfaces", "greedy-growth")


@dataclass
class MinimizerConfig:
    max_candidates: int = 64
    max_iterations: int = 2000
    grad_tol: float = 1e-6
    backtrack: float = 0.5
    max_halvings: int = 40
    initial_step: float = 0.1
    strategy: str = "enumerate-connected-subsurfaces"
    seed: int = 0
    memory: int = 10
    voxel_resolution: int = 128
    gms_samples: int = 8

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.initial_step > 0):
            raise ValueError("tolerances and initial step must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.max_candidates < 1 or self.max_iterations < 0 or self.max_halvings < 1:
            raise ValueError("iteration limits must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")

    def to_dict(self):
        return asdict(self)


@dataclass
class InnerDiagnostics:
    iterations: int = 0
    converged: bool = False
    stalled: bool = False
    grad_norm: float = math.nan
    energy_trace: list = field(default_factory=list)
    min_det_trace: list = field(default_factory=list)
    max_norm_trace: list = field(default_factory=list)

    def to_dict(self, trace=False):
        out = {"iterations": self.iterations, "converged": self.converged, "stalled": self.stalled,
               "grad_norm": _json_float(self.grad_norm)}
        if trace:
            out["energy_trace"] = list(self.energy_trace)
        return out


def _project_ball(y_new, y_old, K):
    """Pull nodes with |y| > K back along the step towards their previous value."""
    r = np.linalg.norm(y_new, axis=1)
    bad = r > K
    if not np.any(bad):
        return y_new, False
    y = y_new.copy()
    a, d = y_old[bad], y_new[bad] - y_old[bad]
    # smallest tau in [0, 1] with |a + tau d| = K, given |a| <= K
    A = np.sum(d * d, axis=1)
    B = 2 * np.sum(a * d, axis=1)
    C = np.sum(a * a, axis=1) - K * K
    with np.errstate(invalid="ignore", divide="ignore"):
        tau = (-B + np.sqrt(np.maximum(B * B - 4 * A * C, 0.0))) / (2 * A)
    tau = np.clip(np.nan_to_num(tau), 0.0, 1.0) * (1 - 1e-12)
    y[bad] = a + tau[:, None] * d
    return y, True


def _lbfgs_direction(g, S, Y):
    q = g.copy()
    alphas = []
    for s, yv in zip(reversed(S), reversed(Y)):
        rho = 1.0 / np.dot(yv, s)
        a = rho * np.dot(s, q)
        alphas.append((rho, a))
        q -= a * yv
    if S:
        q *= np.dot(S[-1], Y[-1]) / np.dot(Y[-1], Y[-1])
    for (s, yv), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * np.dot(yv, q)
        q += (a - b) * s
    return -q


def descend(state, spec, params, config):
    """Run the inner descent from ``state`` (modified copy returned) -> (state, energy, diagnostics)."""
    state = state.copy()
    state.apply_dirichlet()
    diag = InnerDiagnostics()
    free = ~state.fixed
    K = params.K
    E = bulk_energy(state, spec)
    if not math.isfinite(E):
        diag.stalled = True
        return state, E, diag
    E, g = energy_and_gradient(state, spec)
    y = state.y
    diag.energy_trace.append(E)
    h_min = float(np.min(state.mesh.volumes)) ** (1.0 / 3.0)
    S, Yh = [], []
    it = 0
    while True:
        gf = g[free].ravel()
        gnorm = float(np.linalg.norm(gf))
        diag.grad_norm = gnorm
        if gnorm <= config.grad_tol * (1 + abs(E)):
            diag.converged = True
            break
        if it >= config.max_iterations:
            break
        if S:
            d = _lbfgs_direction(gf, S, Yh)
            t = 1.0
            if np.dot(d, gf) >= 0:
                S, Yh = [], []
        if not S:
            d = -gf
            t = config.initial_step * h_min / max(float(np.abs(gf).max()), 1e-300)
        accepted = False
        for _ in range(config.max_halvings):
            y_try = y.copy()
            y_try[free] = y[free] + t * d.reshape(-1, 3)
            y_try, projected = _project_ball(y_try, y, K)
            E_try = bulk_energy(state, spec, y=y_try)
            step = (y_try[free] - y[free]).ravel()
            if math.isfinite(E_try) and E_try < E and E_try <= E + 1e-4 * float(np.dot(gf, step)):
                accepted = True
                break
            t *= config.backtrack
        if not accepted:
            if S:
                S, Yh = [], []
                continue
            diag.stalled = True
            break
        E_new, g_new = energy_and_gradient(state, spec, y=y_try)
        s_vec = step
        y_vec = (g_new[free] - g[free]).ravel()
        if projected:
            S, Yh = [], []
        elif np.dot(s_vec, y_vec) > 1e-12 * np.dot(y_vec, y_vec):
            S.append(s_vec)
            Yh.append(y_vec)
            if len(S) > config.memory:
                S.pop(0)
                Yh.pop(0)
        y, E, g = y_try, E_new, g_new
        it += 1
        diag.energy_trace.append(E)
        diag.min_det_trace.append(float(det3(_grads(state, y)).min()))
        diag.max_norm_trace.append(float(np.linalg.norm(y[free], axis=1).max()) if np.any(free) else 0.0)
    diag.iterations = it
    state.y = y
    return state, E, diag


def _grads(state, y):
    Y = y[state.tets]
    Ds = np.stack([Y[:, 1] - Y[:, 0], Y[:, 2] - Y[:, 0], Y[:, 3] - Y[:, 0]], axis=-1)
    return Ds @ state.mesh.Dm_inv


def minimize_deformation(mesh, active_cracks, spec, params, config, warm_start=None):
    """Minimize the bulk energy for a fixed crack set.

    ``warm_start`` is an (n_reference_nodes, 3) deformation; duplicated nodes
    copy their parent's value.  Without it the start is the harmonic
    extension of the Dirichlet data.
    """
    state = cut_mesh(mesh, active_cracks)
    if warm_start is not None:
        state.y = np.asarray(warm_start, dtype=float)[state.parent].copy()
        state.apply_dirichlet()
        if not math.isfinite(bulk_energy(state, spec)):
            state = initial_guess(state)
    else:
        state = initial_guess(state)
    return descend(state, spec, params, config)


# -- candidate generation ----------------------------------------------------------------

def candidate_adjacency(mesh):
    """Edge adjacency between candidate crack faces."""
    by_edge = {}
    for i, f in enumerate(mesh.cfaces):
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[0], f[2])):
            by_edge.setdefault((min(a, b), max(a, b)), []).append(i)
    nbrs = [set() for _ in range(len(mesh.cfaces))]
    for faces in by_edge.values():
        for i in faces:
            nbrs[i].update(j for j in faces if j != i)
    return [sorted(n) for n in nbrs]


def enumerate_connected(mesh, limit):
    """Empty set plus edge-connected subsets of candidate faces, by size then lexicographically."""
    out = [()]
    if limit <= 1:
        return out
    nbrs = candidate_adjacency(mesh)
    level = sorted((i,) for i in range(len(mesh.cfaces)))
    while level and len(out) < limit:
        out.extend(level[:limit - len(out)])
        nxt = set()
        for s in level:
            members = set(s)
            for i in s:
                for j in nbrs[i]:
                    if j not in members:
                        nxt.add(tuple(sorted(members | {j})))
        level = sorted(nxt)
    return out


def generate_candidates(mesh, strategy="enumerate-connected-subsurfaces", limit=64, evaluate=None, scores=None):
    """List crack face sets to evaluate.

    ``greedy-growth`` needs ``evaluate(faces) -> total energy`` and per-face
    ``scores`` (bulk energy density next to each candidate face); it returns
    the visited path, starting with the empty set.
    """
    if strategy == "enumerate-connected-subsurfaces":
        return enumerate_connected(mesh, limit)
    if strategy != "greedy-growth":
        raise ValueError(f"unknown strategy {strategy!r}")
    path = [()]
    if limit <= 1 or len(mesh.cfaces) == 0:
        return path
    if evaluate is None or scores is None:
        raise ValueError("greedy-growth needs evaluate and scores")
    nbrs = candidate_adjacency(mesh)
    scores = np.asarray(scores, dtype=float)
    current = ()
    best = evaluate(current)
    nxt = int(np.argmax(scores))
    while len(path) < limit:
        trial = tuple(sorted(current + (nxt,)))
        path.append(trial)
        total = evaluate(trial)
        if not total < best:
            break
        current, best = trial, total
        frontier = sorted({j for i in current for j in nbrs[i]} - set(current))
        if not frontier:
            break
        nxt = max(frontier, key=lambda j: (scores[j], -j))
    return path


# -- outer search ------------------------------------------------------------------------

@dataclass
class CandidateRecord:
    index: int
    faces: tuple
    bulk: float
    crack: dict
    total: float
    crack_mass: float
    admissible: bool
    failed_items: list
    inner: dict
    admissibility: dict

    @property
    def face_set_id(self):
        return ",".join(str(f) for f in self.faces) if self.faces else "-"

    def to_dict(self):
        return {"index": self.index, "face_set_id": self.face_set_id, "faces": list(self.faces),
                "bulk": _json_float(self.bulk), "crack": self.crack, "total": _json_float(self.total), "crack_mass": self.crack_mass,
                "admissible": self.admissible, "failed_items": self.failed_items,
                "inner": self.inner, "admissibility": self.admissibility}


@dataclass
class MinimizationReport:
    candidates: list
    selected: int
    config: dict
    seed: int
    wall_clock: float = 0.0
    states: dict = field(default_factory=dict, repr=False)
    traces: dict = field(default_factory=dict, repr=False)

    @property
    def selected_record(self):
        return self.candidates[self.selected]

    def to_dict(self):
        return {"config": self.config, "seed": self.seed, "selected": self.selected,
                "selected_faces": list(self.selected_record.faces),
                "candidates": [c.to_dict() for c in self.candidates]}


def theta_for(params):
    """Smallest integer multiplicity satisfying the jump bound theta >= 2/C."""
    return max(1, math.ceil(2.0 / params.C - 1e-12))


def minimize_total(mesh, spec, params, config, noninterpenetration=False, threads=1):
    """Evaluate every crack candidate and select the admissible minimum of bulk + crack energy.

    Ties are broken by smaller crack mass, then by the lexicographically
    smaller face set.  Raises NoFeasibleCandidate if nothing is admissible.
    """
    t0 = time.perf_counter()
    theta = theta_for(params)
    base_state, base_E, base_diag = minimize_deformation(mesh, (), spec, params, config)
    warm = base_state.y
    cache = {}

    def solve(faces):
        if faces in cache:
            return cache[faces]
        if not faces:
            state, E, diag = base_state, base_E, base_diag
        else:
            state, E, diag = minimize_deformation(mesh, faces, spec, params, config, warm_start=warm)
        V = from_mesh_faces(mesh, faces, theta)
        ce = crack_energy(V, params)
        adm = check_class(state, V, params)
        if noninterpenetration:
            adm.noninterpenetration = check_noninterpenetration(
                state, config.voxel_resolution, config.gms_samples, config.seed)
        cache[faces] = (state, E, diag, V, ce, adm)
        return cache[faces]

    if config.strategy == "greedy-growth":
        dens = element_energy_density(base_state, spec)
        ft = mesh.face_tets[mesh.candidate_face_ids]
        scores = 0.5 * (dens[ft[:, 0]] + dens[ft[:, 1]]) if len(ft) else np.zeros(0)
        cands = generate_candidates(mesh, config.strategy, config.max_candidates,
                                    evaluate=lambda f: solve(f)[1] + solve(f)[4].total, scores=scores)
    else:
        cands = generate_candidates(mesh, config.strategy, config.max_candidates)
        todo = [c for c in cands if c and c not in cache]
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(
                    lambda f: (f, minimize_deformation(mesh, f, spec, params, config, warm_start=warm)), todo))
            for f, (state, E, diag) in results:
                V = from_mesh_faces(mesh, f, theta)
                adm = check_class(state, V, params)
                if noninterpenetration:
                    adm.noninterpenetration = check_noninterpenetration(
                        state, config.voxel_resolution, config.gms_samples, config.seed)
                cache[f] = (state, E, diag, V, crack_energy(V, params), adm)

    records, states, traces = [], {}, {}
    for i, faces in enumerate(cands):
        state, E, diag, V, ce, adm = solve(faces)
        records.append(CandidateRecord(
            index=i, faces=tuple(int(f) for f in faces), bulk=float(E), crack=ce.to_dict(),
            total=float(E + ce.total), crack_mass=mass(V), admissible=adm.passed,
            failed_items=adm.failed_items(), inner=diag.to_dict(), admissibility=adm.to_dict()))
        states[i] = (state, V)
        traces[i] = list(diag.energy_trace)

    feasible = [r for r in records if r.admissible and math.isfinite(r.total)]
    if not feasible:
        exc = NoFeasibleCandidate(
            "no admissible candidate: " + "; ".join(f"{r.face_set_id}: {r.failed_items}" for r in records))
        exc.records = records
        raise exc
    best = min(feasible, key=lambda r: (r.total, r.crack_mass, r.faces))
    report = MinimizationReport(candidates=records, selected=best.index, config=config.to_dict(),
                                seed=config.seed, states=states, traces=traces)
    report.wall_clock = time.perf_counter() - t0
    return report
