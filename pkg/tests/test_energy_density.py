import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from gpcrack.energy_density import (DensitySpec, EnergyParams, eval_density, grad_density, sample_points,
                                    stress_free_s, verify_coercivity, verify_delta_convexity,
                                    verify_exponents)
from gpcrack.errors import DomainError
from gpcrack.tensor_core import cof3

W_REF = DensitySpec("w_ref", c=1, p=3, q=2, r=2, s=1)


def test_value_at_identity():
    assert eval_density(W_REF, np.eye(3), np.zeros((3, 3, 3)), np.zeros(3)) == pytest.approx(
        3 * math.sqrt(3) + 5, rel=1e-15)


def test_d1_term_is_additive():
    D1 = np.zeros((3, 3, 3))
    D1[0, 0, 0] = 2.0
    base = eval_density(W_REF, np.eye(3), np.zeros((3, 3, 3)), np.zeros(3))
    assert eval_density(W_REF, np.eye(3), D1, np.zeros(3)) == pytest.approx(base + 4, rel=1e-15)


@pytest.mark.parametrize("tag", ["w_ref", "w_ref_quadratic", "w_ref_concave"])
def test_infinite_for_reflection(tag):
    spec = DensitySpec(tag, kappa=0.3)
    G = np.diag([1.0, 1.0, -1.0])
    assert eval_density(spec, G, np.zeros((3, 3, 3)), np.zeros(3)) == math.inf


def test_infinite_iff_nonpositive_det():
    rng = np.random.default_rng(0)
    G = rng.uniform(-1.5, 1.5, (5000, 3, 3))
    W = eval_density(W_REF, G, np.zeros((5000, 3, 3, 3)), np.zeros((5000, 3)))
    np.testing.assert_array_equal(np.isinf(W), ~(np.linalg.det(G) > 0))


def test_gradient_at_identity_has_zero_delta_parts():
    _, dD1, dD2 = grad_density(W_REF, np.eye(3), np.zeros((3, 3, 3)), np.zeros(3))
    assert not np.any(dD1) and not np.any(dD2)


def test_inverse_det_term_chain_rule():
    G = np.diag([2.0, 1.0, 1.0])
    dG, _, _ = grad_density(W_REF, G, np.zeros((3, 3, 3)), np.zeros(3))
    # remaining terms: |G|^3, |cof G|^2 (by finite differences), det^2
    h = 1e-6
    cof_part = np.zeros((3, 3))
    for i in range(3):
        for a in range(3):
            E = np.zeros((3, 3))
            E[i, a] = h
            cof_part[i, a] = (np.sum(cof3(G + E) ** 2) - np.sum(cof3(G - E) ** 2)) / (2 * h)
    rest = 3 * np.linalg.norm(G) * G + cof_part + 2 * 2.0 * np.diag([1.0, 2.0, 2.0])
    np.testing.assert_allclose(dG - rest, -0.25 * np.diag([1.0, 2.0, 2.0]), atol=1e-8)


def test_stationary_identity_with_balanced_s():
    spec = DensitySpec("w_ref", s=stress_free_s(1, 3, 2, 2))
    dG, _, _ = grad_density(spec, np.eye(3), np.zeros((3, 3, 3)), np.zeros(3))
    assert np.max(np.abs(dG)) < 1e-12


def test_gradient_rejects_inverted():
    with pytest.raises(DomainError):
        grad_density(W_REF, -np.eye(3), np.zeros((3, 3, 3)), np.zeros(3))


@pytest.mark.parametrize("spec", [W_REF, DensitySpec("w_ref_quadratic", kappa=0.1),
                                  DensitySpec("w_ref_concave", kappa=0.2),
                                  DensitySpec("w_ref", p=3.5, q=1.7, r=1.3, s=0.5)])
def test_gradient_finite_differences(spec):
    rng = np.random.default_rng(7)
    G, D1, D2 = sample_points(1000, rng)
    dG, dD1, dD2 = grad_density(spec, G, D1, D2)
    h = 1e-5
    HG = rng.uniform(-1, 1, G.shape)
    H1 = rng.uniform(-1, 1, D1.shape)
    H2 = rng.uniform(-1, 1, D2.shape)
    fd = (eval_density(spec, G + h * HG, D1 + h * H1, D2 + h * H2)
          - eval_density(spec, G - h * HG, D1 - h * H1, D2 - h * H2)) / (2 * h)
    an = (np.sum(dG * HG, axis=(1, 2)) + np.sum(dD1 * H1, axis=(1, 2, 3)) + np.sum(dD2 * H2, axis=1))
    assert np.max(np.abs(fd - an) / (1 + np.abs(an))) <= 1e-5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_frame_indifference(seed):
    rng = np.random.default_rng(seed)
    G, D1, D2 = sample_points(20, rng)
    Q = Rotation.random(20, random_state=seed).as_matrix()
    a = eval_density(W_REF, G, D1, D2)
    b = eval_density(W_REF, Q @ G, D1, D2)
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_convex_along_delta_rays():
    rng = np.random.default_rng(8)
    G, D1, D2 = sample_points(200, rng)
    t = np.linspace(-2, 2, 41)
    vals = np.stack([eval_density(W_REF, G, s * D1, s * D2) for s in t])
    second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    assert second.min() >= -1e-10


@pytest.mark.parametrize("pqrs, ok, failed", [
    ((3, 2, 2, 1), True, None),
    ((2, 2, 2, 1), False, ["p > 2"]),
    ((3, 1.4, 2, 1), False, ["q >= p/(p-1)"]),
])
def test_verify_exponents(pqrs, ok, failed):
    rep = verify_exponents(pqrs)
    assert rep.passed is ok
    assert rep.location == failed


def test_energy_params_validation():
    EnergyParams()
    with pytest.raises(ValueError, match="p > 2"):
        EnergyParams(p=2)
    with pytest.raises(ValueError):
        EnergyParams(p_bar=1.0)
    with pytest.raises(ValueError):
        EnergyParams(K=0)


def test_coercivity_exact_for_reference():
    rep = verify_coercivity(W_REF, EnergyParams(), n_samples=5000)
    assert rep.passed and rep.margin == 0.0


def test_coercivity_with_quadratic_perturbation():
    rep = verify_coercivity(DensitySpec("w_ref_quadratic", kappa=0.1), EnergyParams(), n_samples=5000)
    assert rep.passed and rep.margin >= 0


def test_coercivity_fails_with_doubled_constant():
    rep = verify_coercivity(W_REF, EnergyParams(c=2.0), n_samples=5000)
    assert not rep.passed and rep.margin < 0
    assert set(rep.location) == {"G", "D1", "D2"}


def test_convexity_pass_and_fail():
    assert verify_delta_convexity(W_REF, n_samples=5000).passed
    bad = verify_delta_convexity(DensitySpec("w_ref_concave", kappa=5.0), n_samples=5000)
    assert not bad.passed
    loc = bad.location
    G, D1, D1o = np.array(loc["G"]), np.array(loc["D1"]), np.array(loc["D1_other"])
    D2, D2o = np.array(loc["D2"]), np.array(loc["D2_other"])
    spec = DensitySpec("w_ref_concave", kappa=5.0)
    mid = eval_density(spec, G, 0.5 * (D1 + D1o), 0.5 * (D2 + D2o))
    avg = 0.5 * (eval_density(spec, G, D1, D2) + eval_density(spec, G, D1o, D2o))
    assert mid - avg == pytest.approx(bad.details["worst_defect"], rel=1e-12)
    assert mid > avg


def test_equal_pairs_midpoint_is_equality():
    rng = np.random.default_rng(9)
    G, D1, D2 = sample_points(100, rng)
    mid = eval_density(W_REF, G, 0.5 * (D1 + D1), 0.5 * (D2 + D2))
    np.testing.assert_allclose(mid, eval_density(W_REF, G, D1, D2), rtol=1e-14)


def test_sampler_distribution():
    G, D1, D2 = sample_points(2000, np.random.default_rng(10))
    assert np.all(np.linalg.det(G) > 0.05)
    assert np.all(np.abs(G - np.eye(3)) <= 0.4)
    assert np.all(np.abs(D1) <= 1) and np.all(np.abs(D2) <= 1)


def test_unknown_tag():
    with pytest.raises(ValueError):
        DensitySpec("neo_hookean")
