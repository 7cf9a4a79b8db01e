"""Regenerate the bundled fixture files: ``python tests/data/make_fixtures.py``."""

import json
from pathlib import Path

import numpy as np

from gpcrack.body_mesh import write_mesh
from gpcrack.energy_density import stress_free_s
from gpcrack.fixtures import flat_disc, grid_square, icosphere, stretched_bar, unit_cube
from gpcrack.varifold import from_triangles, write_surface

HERE = Path(__file__).parent
S_STAR = stress_free_s(1.0, 3.0, 2.0, 2.0)


def write_inverted(path):
    """The cube with one tet's orientation flipped."""
    write_mesh(unit_cube(), path)
    lines = path.read_text().splitlines()
    k = lines.index(next(ln for ln in lines if ln.startswith("tets"))) + 1
    a, b, c, d = lines[k].split()
    lines[k] = f"{a} {c} {b} {d}"
    path.write_text("\n".join(lines) + "\n")


def main():
    write_mesh(unit_cube(), HERE / "cube.mesh")
    write_inverted(HERE / "inverted.mesh")
    for name, lam in (("bar.mesh", 1.0), ("bar_stretched.mesh", 1.6), ("bar_compressed.mesh", 0.6)):
        write_mesh(stretched_bar(lam), HERE / name)
    write_surface(from_triangles(*grid_square(4), multiplicities=np.full(32, 2)), HERE / "square2.surf")
    write_surface(from_triangles(*flat_disc(12)), HERE / "disc.surf")
    write_surface(from_triangles(*icosphere(2)), HERE / "sphere.surf")
    # three sheets sharing one edge
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0], [0.5, 0, 1]])
    write_surface(from_triangles(pts, np.array([[0, 1, 2], [0, 3, 1], [0, 1, 4]])), HERE / "junction.surf")

    bar = {"params": {"s": S_STAR}, "minimizer": {"max_candidates": 16}, "noninterpenetration": False}
    configs = {
        "cube.json": {"mesh": "cube.mesh", "params": {"s": S_STAR}, "noninterpenetration": False},
        "bar.json": {**bar, "mesh": "bar.mesh"},
        "bar_stretched.json": {**bar, "mesh": "bar_stretched.mesh"},
        "bar_compressed.json": {**bar, "mesh": "bar_compressed.mesh", "noninterpenetration": True},
        "bar_small_K.json": {**bar, "mesh": "bar_stretched.mesh", "params": {"s": S_STAR, "K": 1.5}},
        "density_ok.json": {"params": {"p": 3, "q": 2, "r": 2, "s": 1, "p_bar": 2}},
        "density_p2.json": {"params": {"p": 2, "q": 2, "r": 2, "s": 1}},
        "density_concave.json": {"density": "w_ref_concave", "kappa": 5.0, "check_samples": 2000},
    }
    for name, cfg in configs.items():
        (HERE / name).write_text(json.dumps(cfg, indent=2) + "\n")


if __name__ == "__main__":
    main()
