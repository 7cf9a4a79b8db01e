"""Batch command-line interface.

Exit codes: 0 ok, 1 I/O error, 2 validation error, 3 density check failed,
4 no feasible crack candidate.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .admissibility import _json_float
from .body_mesh import element_gradients, load_mesh, reconstruct_minor_gradients
from .energy_density import (DENSITY_LABELS, DensitySpec, EnergyParams, verify_coercivity,
                             verify_delta_convexity, verify_exponents)
from .errors import GpcrackError, NoFeasibleCandidate, NonManifoldError, ParseError, ValidationError
from .minimizer import MinimizerConfig, minimize_total, theta_for
from .tensor_core import cof3, det3
from .varifold import (PolyBumpTest, boundary_mass, crack_energy, curvature_energy, curvature_norms,
                       first_variation_residual, from_mesh_faces, load_surface, mass)

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_DENSITY, EXIT_INFEASIBLE = 0, 1, 2, 3, 4
THREADS_ENV = "GPCRACK_THREADS"


@dataclass
class RunConfig:
    mesh: str | None = None
    density: str = "w_ref"
    kappa: float = 0.0
    params: dict = field(default_factory=dict)
    minimizer: dict = field(default_factory=dict)
    noninterpenetration: bool = True
    varifold_only: bool = False
    out: str = "out"
    seed: int = 0
    check_samples: int = 100_000

    def energy_params(self):
        return EnergyParams(**self.params)

    def density_spec(self, params=None):
        if params is None:
            params = self.energy_params()
        return DensitySpec.from_params(params, self.density, self.kappa)

    def minimizer_config(self):
        return MinimizerConfig(**{**self.minimizer, "seed": self.seed})

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_config(path):
    """Read a JSON run config; relative mesh paths resolve against the config's directory."""
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ParseError(f"unknown config keys: {', '.join(unknown)}")
    cfg = RunConfig(**raw)
    if cfg.mesh is not None and not os.path.isabs(cfg.mesh):
        cfg.mesh = str(path.parent / cfg.mesh)
    if cfg.mesh is not None and not os.path.exists(cfg.mesh):
        raise FileNotFoundError(cfg.mesh)
    return cfg


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _emit(obj, out_dir, name):
    text = json.dumps(obj, indent=2)
    print(text)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / name).write_text(text + "\n")


# -- visualization --------------------------------------------------------------------------

def write_vtk_state(state, spec, path):
    """Deformed mesh as legacy ASCII unstructured grid with det, |cof| and |grad det| cell fields."""
    F = element_gradients(state)
    J = det3(F)
    cofn = np.sqrt(np.sum(cof3(F) ** 2, axis=(-2, -1)))
    _, Ddet = reconstruct_minor_gradients(state)
    gdet = np.linalg.norm(Ddet, axis=-1)
    lines = ["# vtk DataFile Version 3.0", "deformed body", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {state.n_nodes} double"]
    lines += [f"{a!r} {b!r} {c!r}" for a, b, c in state.y.tolist()]
    nt = len(state.tets)
    lines.append(f"CELLS {nt} {5 * nt}")
    lines += [f"4 {a} {b} {c} {d}" for a, b, c, d in state.tets.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["10"] * nt
    lines.append(f"CELL_DATA {nt}")
    for name, vals in (("det", J), ("cof_norm", cofn), ("grad_det_norm", gdet)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in vals]
    Path(path).write_text("\n".join(lines) + "\n")


def write_vtk_surface(V, path):
    """Crack surface as legacy ASCII unstructured grid with the curvature norm as vertex field."""
    lines = ["# vtk DataFile Version 3.0", "crack surface", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(V.points)} double"]
    lines += [f"{a!r} {b!r} {c!r}" for a, b, c in V.points.tolist()]
    nt = len(V.tris)
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in V.tris.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    if nt:
        lines.append(f"CELL_DATA {nt}")
        lines += ["SCALARS multiplicity int 1", "LOOKUP_TABLE default"]
        lines += [str(int(t)) for t in V.theta]
    lines.append(f"POINT_DATA {len(V.points)}")
    lines += ["SCALARS curvature_norm double 1", "LOOKUP_TABLE default"]
    norms = curvature_norms(V) if len(V.points) else np.zeros(0)
    lines += [repr(float(v)) for v in norms]
    Path(path).write_text("\n".join(lines) + "\n")


# -- subcommands ----------------------------------------------------------------------------

def cmd_validate(mesh_path, out=None):
    mesh = load_mesh(mesh_path)
    report = {
        "mesh": str(mesh_path),
        "nodes": mesh.n_nodes,
        "tets": mesh.n_tets,
        "volume": float(mesh.volumes.sum()),
        "boundary_faces": len(mesh.bfaces),
        "gamma0_area": mesh.boundary_area("g0"),
        "gamma1_area": mesh.boundary_area("g1"),
        "dirichlet_nodes": len(mesh.dirichlet_nodes),
        "candidate_faces": len(mesh.cfaces),
        "candidate_area": float(np.sum(mesh.candidate_areas)),
    }
    _emit(report, out, "validate.json")
    return EXIT_OK, report


def cmd_check_density(cfg, out=None):
    exps = verify_exponents(tuple(cfg.params.get(k, getattr(EnergyParams, k)) for k in "pqrs"))
    report = {"density": cfg.density, "density_label": DENSITY_LABELS.get(cfg.density), "kappa": cfg.kappa,
              "checks": [exps.to_dict()]}
    if not exps.passed:
        report["passed"] = False
        _emit(report, out, "density_check.json")
        return EXIT_DENSITY, report
    params = cfg.energy_params()
    spec = cfg.density_spec(params)
    checks = [verify_coercivity(spec, params, cfg.check_samples, cfg.seed),
              verify_delta_convexity(spec, cfg.check_samples, cfg.seed)]
    report["checks"] += [c.to_dict() for c in checks]
    report["passed"] = all(c.passed for c in checks)
    _emit(report, out, "density_check.json")
    return (EXIT_OK if report["passed"] else EXIT_DENSITY), report


def varifold_report(V, params, seed=0, n_tests=8):
    """Mass, curvature and boundary terms plus the first-variation residual."""
    report = {"triangles": V.n_triangles, "mass": mass(V), "boundary_mass": boundary_mass(V)}
    try:
        report["curvature_energy"] = curvature_energy(V, params.a1, params.p_bar)
    except NonManifoldError as exc:
        report["nonmanifold"] = str(exc)
        report["junction_edges"] = [list(map(int, V.edges[e])) for e in V.junction_edges]
        return report
    report["crack_energy"] = crack_energy(V, params).to_dict()
    if V.n_triangles:
        rng = np.random.default_rng(seed)
        lo, hi = V.points.min(axis=0), V.points.max(axis=0)
        radius = 0.75 * float(np.linalg.norm(hi - lo))
        tests = [PolyBumpTest.random(rng, 0.5 * (lo + hi), radius) for _ in range(n_tests)]
        report["first_variation_residual"] = first_variation_residual(V, tests)
    return report


def cmd_varifold(surface_path, params, out=None, seed=0):
    V = load_surface(surface_path)
    report = {"surface": str(surface_path), **varifold_report(V, params, seed)}
    _emit(report, out, "varifold.json")
    if out is not None and "nonmanifold" not in report:
        write_vtk_surface(V, Path(out) / "surface.vtk")
    return (EXIT_VALIDATION if "nonmanifold" in report else EXIT_OK), report


def _float_row(vals):
    return [_json_float(v) if isinstance(v, float) else v for v in vals]


def cmd_minimize(cfg, out=None, threads=1, noninterpenetration=None):
    """Full pipeline; writes report.json, candidates.csv, traces.csv, timing.json and VTK files."""
    out = Path(out if out is not None else cfg.out)
    exps = verify_exponents(tuple(cfg.params.get(k, getattr(EnergyParams, k)) for k in "pqrs"))
    if not exps.passed:
        print(json.dumps({"error": "exponent conditions violated", "check": exps.to_dict()}, indent=2))
        return EXIT_DENSITY, None
    params = cfg.energy_params()
    spec = cfg.density_spec(params)
    mcfg = cfg.minimizer_config()
    nonpen = cfg.noninterpenetration if noninterpenetration is None else noninterpenetration
    mesh = load_mesh(cfg.mesh)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.varifold_only:
        V = from_mesh_faces(mesh, range(len(mesh.cfaces)), theta_for(params))
        report = {"config": {**cfg.to_dict(), "mesh": os.path.basename(cfg.mesh)}, "seed": cfg.seed,
                  "status": "varifold only", "candidate_surface": varifold_report(V, params, cfg.seed)}
        del report["config"]["out"]
        _dump(report, out / "report.json")
        write_vtk_surface(V, out / "crack.vtk")
        return EXIT_OK, report
    echo = {**cfg.to_dict(), "mesh": os.path.basename(cfg.mesh), "noninterpenetration": nonpen,
            "params": params.to_dict(), "minimizer": mcfg.to_dict()}
    del echo["out"]
    try:
        result = minimize_total(mesh, spec, params, mcfg, noninterpenetration=nonpen, threads=threads)
    except NoFeasibleCandidate as exc:
        report = {"config": echo, "density_label": DENSITY_LABELS[spec.tag], "seed": cfg.seed,
                  "status": "no feasible candidate",
                  "candidates": [c.to_dict() for c in exc.records]}
        _dump(report, out / "report.json")
        print(str(exc), file=sys.stderr)
        return EXIT_INFEASIBLE, report
    body = result.to_dict()
    report = {"config": echo, "density_label": DENSITY_LABELS[spec.tag], "seed": cfg.seed, "status": "ok",
              "selected": body["selected"],
              "selected_faces": body["selected_faces"], "candidates": body["candidates"]}
    _dump(report, out / "report.json")

    with open(out / "candidates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "face_set_id", "bulk", "mass", "curvature", "boundary", "total",
                    "crack_mass", "admissible", "failed_items", "iterations", "converged", "selected"])
        for c in result.candidates:
            w.writerow(_float_row([c.index, c.face_set_id, c.bulk, c.crack["mass"], c.crack["curvature"],
                                   c.crack["boundary"], c.total, c.crack_mass, c.admissible,
                                   ";".join(map(str, c.failed_items)), c.inner["iterations"],
                                   c.inner["converged"], c.index == result.selected]))
    with open(out / "traces.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "iteration", "energy"])
        for i, trace in result.traces.items():
            for k, e in enumerate(trace):
                w.writerow([i, k, repr(float(e))])
    state, V = result.states[result.selected]
    write_vtk_state(state, spec, out / "deformed.vtk")
    write_vtk_surface(V, out / "crack.vtk")
    _dump({"wall_clock_seconds": result.wall_clock}, out / "timing.json")
    sel = result.selected_record
    print(json.dumps({"selected": sel.face_set_id, "total": _json_float(sel.total),
                      "report": str(out / "report.json")}, indent=2))
    return EXIT_OK, report


# -- entry point ----------------------------------------------------------------------------

def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    common.add_argument("--no-interpenetration-check", action="store_true",
                        help="skip the volume and test-function overlap checks")
    parser = argparse.ArgumentParser(prog="gpcrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", parents=[common], help="load and validate a tet mesh")
    p.add_argument("mesh", nargs="?")
    sub.add_parser("check-density", parents=[common], help="certify the density hypotheses")
    p = sub.add_parser("varifold", parents=[common], help="analyse a triangulated surface")
    p.add_argument("surface")
    sub.add_parser("minimize", parents=[common], help="run the crack/deformation minimization")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "validate":
            path = args.mesh or cfg.mesh
            if path is None:
                print("validate needs a mesh path", file=sys.stderr)
                return EXIT_IO
            return cmd_validate(path, args.out)[0]
        if args.command == "check-density":
            return cmd_check_density(cfg, args.out)[0]
        if args.command == "varifold":
            exps = verify_exponents(tuple(cfg.params.get(k, getattr(EnergyParams, k)) for k in "pqrs"))
            if not exps.passed:
                print(json.dumps(exps.to_dict(), indent=2), file=sys.stderr)
                return EXIT_DENSITY
            return cmd_varifold(args.surface, cfg.energy_params(), args.out, cfg.seed)[0]
        if cfg.mesh is None:
            print("minimize needs a config with a mesh path", file=sys.stderr)
            return EXIT_IO
        nonpen = False if args.no_interpenetration_check else None
        return cmd_minimize(cfg, args.out, _threads(args), nonpen)[0]
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValidationError, ValueError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GpcrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
