"""Gradient-polyconvex stored-energy densities and certifiers for their hypotheses.

A density is a function W(G, D1, D2) of the deformation gradient G (3x3), the
gradient of its cofactor D1 (3x3x3, ``D1[i, a, k] = d cof[i, a] / d x_k``) and
the gradient of its determinant D2 (3,).  All evaluators broadcast over
leading batch axes.
"""

from dataclasses import asdict, dataclass, field
import math

import numpy as np

from .errors import DomainError
from .tensor_core import cof3, d_cof_adjoint, det3

DENSITY_TAGS = ("w_ref", "w_ref_quadratic", "w_ref_concave")
DENSITY_LABELS = {
    "w_ref": "minimal representative satisfying the growth bounds",
    "w_ref_quadratic": "minimal representative plus a quadratic term in the minor gradients",
    "w_ref_concave": "deliberately non-convex test density",
}


@dataclass(frozen=True)
class EnergyParams:
    """Exponents, crack coefficients and class bounds.

    Construction raises ``ValueError`` when any hypothesis is violated; use
    :func:`verify_exponents` to diagnose raw exponent tuples without raising.
    """

    c: float = 1.0
    p: float = 3.0
    q: float = 2.0
    r: float = 2.0
    s: float = 1.0
    p_bar: float = 2.0
    a_bar: float = 1.0
    a1: float = 1.0
    a2: float = 1.0
    K: float = 10.0
    C: float = 2.0

    def __post_init__(self):
        report = verify_exponents(self)
        if not report.passed:
            bad = [chk["name"] for chk in report.details["checks"] if not chk["passed"]]
            raise ValueError(f"exponent conditions violated: {', '.join(bad)}")
        if not self.p_bar > 1:
            raise ValueError("p_bar must exceed 1")
        for name in ("c", "a_bar", "a1", "a2", "K", "C"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DensitySpec:
    """A built-in density family.

    ``w_ref``            c(|G|^p + |cof G|^q + det^r + det^-s + |D1|^q + |D2|^r)
    ``w_ref_quadratic``  w_ref + kappa (|D1|^2 + |D2|^2)
    ``w_ref_concave``    w_ref - kappa |D1|^2  (deliberately invalid, for testing certifiers)

    Every family is +inf where det G <= 0.
    """

    tag: str = "w_ref"
    c: float = 1.0
    p: float = 3.0
    q: float = 2.0
    r: float = 2.0
    s: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.tag not in DENSITY_TAGS:
            raise ValueError(f"unknown density tag {self.tag!r}; expected one of {DENSITY_TAGS}")

    @classmethod
    def from_params(cls, params, tag="w_ref", kappa=0.0):
        return cls(tag=tag, c=params.c, p=params.p, q=params.q, r=params.r, s=params.s, kappa=kappa)

    def to_dict(self):
        return asdict(self)


@dataclass
class CheckReport:
    name: str
    passed: bool
    margin: float
    location: object = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "margin": float(self.margin),
            "location": self.location,
            "details": self.details,
        }


def stress_free_s(c, p, q, r):
    """The exponent s for which the identity is a stationary point of W_ref.

    At G = I the G-gradient of W_ref is a multiple of I whose coefficient is
    c(p 3^((p-2)/2) + 2q 3^((q-2)/2) + r - s); this returns the root in s.
    """
    return p * 3.0 ** ((p - 2) / 2) + 2 * q * 3.0 ** ((q - 2) / 2) + r


def _norm(x, naxes):
    axes = tuple(range(-naxes, 0))
    return np.sqrt(np.sum(x * x, axis=axes))


def _pow(x, e):
    # x >= 0; 0**e == 0 for e > 0
    return np.power(x, e)


def coercive_terms(G, D1, D2, p, q, r, s):
    """The six nonnegative terms of the coercivity bound (without the factor c).

    Entries with det G <= 0 come back as nan in the det^-s slot; callers mask them.
    """
    G = np.asarray(G, dtype=float)
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    J = det3(G)
    with np.errstate(divide="ignore", invalid="ignore"):
        Jpos = np.where(J > 0, J, np.nan)
        return (
            _pow(_norm(G, 2), p),
            _pow(_norm(cof3(G), 2), q),
            _pow(Jpos, r),
            _pow(Jpos, -s),
            _pow(_norm(D1, 3), q),
            _pow(_norm(D2, 1), r),
        )


def eval_density(spec, G, D1, D2):
    """Evaluate the density; returns +inf exactly where det G <= 0."""
    G = np.asarray(G, dtype=float)
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    tG, tC, tJr, tJs, tD1, tD2 = coercive_terms(G, D1, D2, spec.p, spec.q, spec.r, spec.s)
    W = spec.c * (tG + tC + tJr + tJs + tD1 + tD2)
    if spec.tag == "w_ref_quadratic":
        W = W + spec.kappa * (np.sum(D1 * D1, axis=(-3, -2, -1)) + np.sum(D2 * D2, axis=-1))
    elif spec.tag == "w_ref_concave":
        W = W - spec.kappa * np.sum(D1 * D1, axis=(-3, -2, -1))
    W = np.where(det3(G) > 0, W, np.inf)
    return W if W.ndim else float(W)


def _power_grad(X, naxes, e):
    """Gradient of |X|^e (Frobenius), zero at X = 0."""
    n = _norm(X, naxes)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(n > 0, e * np.power(n, e - 2), 0.0)
    return f.reshape(f.shape + (1,) * naxes) * X


def grad_density(spec, G, D1, D2):
    """Partial derivatives (dW/dG, dW/dD1, dW/dD2).

    Raises :class:`DomainError` if any det G <= 0.
    """
    G = np.asarray(G, dtype=float)
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    J = det3(G)
    if np.any(~(J > 0)):
        raise DomainError("density gradient requested where det G <= 0")
    C = cof3(G)
    Jb = J[..., None, None]
    c = spec.c
    dG = c * (
        _power_grad(G, 2, spec.p)
        + d_cof_adjoint(G, _power_grad(C, 2, spec.q))
        + (spec.r * Jb ** (spec.r - 1) - spec.s * Jb ** (-spec.s - 1)) * C
    )
    dD1 = c * _power_grad(D1, 3, spec.q)
    dD2 = c * _power_grad(D2, 1, spec.r)
    if spec.tag == "w_ref_quadratic":
        dD1 = dD1 + 2 * spec.kappa * D1
        dD2 = dD2 + 2 * spec.kappa * D2
    elif spec.tag == "w_ref_concave":
        dD1 = dD1 - 2 * spec.kappa * D1
    return dG, dD1, dD2


def verify_exponents(params):
    """Check p > 2, q >= p/(p-1), r > 1, s > 0.

    ``params`` is anything with ``p, q, r, s`` attributes, or a 4-tuple.
    Margins are signed: positive means satisfied.
    """
    if isinstance(params, (tuple, list)):
        p, q, r, s = (float(v) for v in params)
    else:
        p, q, r, s = float(params.p), float(params.q), float(params.r), float(params.s)
    q_min = p / (p - 1) if p != 1 else math.inf
    checks = [
        {"name": "p > 2", "margin": p - 2, "passed": p > 2},
        {"name": "q >= p/(p-1)", "margin": q - q_min, "passed": q >= q_min},
        {"name": "r > 1", "margin": r - 1, "passed": r > 1},
        {"name": "s > 0", "margin": s, "passed": s > 0},
    ]
    passed = all(chk["passed"] for chk in checks)
    margin = min(chk["margin"] for chk in checks)
    failed = [chk["name"] for chk in checks if not chk["passed"]]
    return CheckReport(
        "exponents", passed, margin, location=failed or None,
        details={"p": p, "q": q, "r": r, "s": s, "checks": checks},
    )


def sample_points(n, rng):
    """Draw (G, D1, D2) as documented: G = I + U(-0.4, 0.4), resampled until det G > 0.05."""
    G = np.empty((n, 3, 3))
    todo = np.arange(n)
    while todo.size:
        cand = np.eye(3) + rng.uniform(-0.4, 0.4, size=(todo.size, 3, 3))
        ok = det3(cand) > 0.05
        G[todo[ok]] = cand[ok]
        todo = todo[~ok]
    D1 = rng.uniform(-1.0, 1.0, size=(n, 3, 3, 3))
    D2 = rng.uniform(-1.0, 1.0, size=(n, 3))
    return G, D1, D2


def _point(G, D1, D2, k):
    return {"G": G[k].tolist(), "D1": D1[k].tolist(), "D2": D2[k].tolist()}


def verify_coercivity(spec, params, n_samples=10_000, seed=0, tol=1e-12):
    """Minimum over samples of W - c(...) using the constant and exponents in ``params``."""
    rng = np.random.default_rng(seed)
    G, D1, D2 = sample_points(n_samples, rng)
    W = eval_density(spec, G, D1, D2)
    terms = coercive_terms(G, D1, D2, params.p, params.q, params.r, params.s)
    bound = params.c * (terms[0] + terms[1] + terms[2] + terms[3] + terms[4] + terms[5])
    residual = W - bound
    k = int(np.argmin(residual))
    margin = float(residual[k])
    return CheckReport(
        "coercivity", margin >= -tol, margin, location=_point(G, D1, D2, k),
        details={"n_samples": n_samples, "seed": seed, "tol": tol, "density": spec.tag},
    )


def verify_delta_convexity(spec, n_samples=10_000, seed=0, tol=1e-10):
    """Midpoint convexity of W(G, ., .) on random pairs; reports the worst violation."""
    rng = np.random.default_rng(seed)
    G, D1a, D2a = sample_points(n_samples, rng)
    D1b = rng.uniform(-1.0, 1.0, size=D1a.shape)
    D2b = rng.uniform(-1.0, 1.0, size=D2a.shape)
    mid = eval_density(spec, G, 0.5 * (D1a + D1b), 0.5 * (D2a + D2b))
    avg = 0.5 * eval_density(spec, G, D1a, D2a) + 0.5 * eval_density(spec, G, D1b, D2b)
    defect = mid - avg
    k = int(np.argmax(defect))
    worst = float(defect[k])
    location = {
        "G": G[k].tolist(),
        "D1": D1a[k].tolist(), "D2": D2a[k].tolist(),
        "D1_other": D1b[k].tolist(), "D2_other": D2b[k].tolist(),
    }
    return CheckReport(
        "delta_convexity", worst <= tol, -worst, location=location,
        details={"n_samples": n_samples, "seed": seed, "tol": tol, "density": spec.tag,
                 "worst_defect": worst},
    )
