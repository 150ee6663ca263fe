"""Model-level tests: Rayleigh functional, residuals, definite type, bracket."""

import math

import numpy as np
import pytest

from plmr import gallery, kernel
from plmr.errors import DefiniteTypeError, RayleighDomainError
from plmr.model import (
    NonlinearEigenproblem,
    SCALAR_REGISTRY,
    bracket_bilinear,
    normalize,
    rayleigh_functional,
    relative_residual,
    verify_definite_type,
)


def small_quadratic(n=8, seed=0):
    """Diagonal hyperbolic quadratic with analytically known Rayleigh roots."""
    return gallery.diag_hyperbolic(n=n, seed=seed)


def test_rayleigh_functional_on_coordinate_vectors():
    # for the diagonal quadratic, the Rayleigh functional of the i-th
    # coordinate vector is the left root r_i (the independent oracle is the
    # quadratic formula used to construct the problem)
    nep = small_quadratic(n=10, seed=1)
    r = np.asarray(nep.meta["eigenvalues"])
    for i in range(10):
        e = np.zeros(10)
        e[i] = 1.0
        assert abs(rayleigh_functional(nep, e) - r[i]) <= 1e-10


def test_rayleigh_functional_scale_invariance():
    nep = small_quadratic(n=12, seed=2)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    rho = rayleigh_functional(nep, x)
    for c in (2.0, -3.5, 1e6 * 1j, 1e-8):
        assert abs(rayleigh_functional(nep, c * x) - rho) <= 1e-10


def test_rayleigh_functional_root_accuracy_on_linear_problem():
    # linear problem: rho(x) is the plain Rayleigh quotient, so the oracle is
    # an inner-product formula evaluated directly
    nep = gallery.laplace2d(6)
    A = nep.terms[0][1].to_dense()
    rng = np.random.default_rng(4)
    for _ in range(5):
        x = rng.standard_normal(36)
        rho = rayleigh_functional(nep, x)
        rq = (x @ A @ x) / (x @ x)
        assert abs(rho - rq) <= 1e-12 * max(1.0, abs(rq))


def test_rayleigh_domain_error():
    # a vector whose quadratic form keeps one sign on J has no functional value
    nep = gallery.diag_hyperbolic(n=6, seed=5)
    with pytest.raises(RayleighDomainError):
        rayleigh_functional(nep, np.zeros(6))


def test_sign_property_both_types():
    # (mu - rho) * x*T(mu)x has the sign of type_sign throughout J
    for nep in (gallery.diag_hyperbolic(n=9, seed=6), gallery.pdde(g=8, interval=(-20.87, 2.0))):
        sign = verify_definite_type(nep)
        rng = np.random.default_rng(7)
        a, b = nep.interval
        for _ in range(5):
            x = rng.standard_normal(nep.n)
            try:
                rho = rayleigh_functional(nep, x)
            except RayleighDomainError:
                continue
            for mu in np.linspace(a + 0.05 * (b - a), b - 0.05 * (b - a), 7):
                if abs(mu - rho) <= 1e-8 * max(1.0, abs(rho)):
                    continue
                g = nep.quadratic_form_coeffs(x) @ nep.coefficients(mu)
                assert (mu - rho) * g * sign > 0


def test_relative_residual_zero_for_eigenpair():
    nep = gallery.diag_hyperbolic(n=10, seed=8)
    r = np.asarray(nep.meta["eigenvalues"])
    e = np.zeros(10)
    e[3] = 1.0
    assert relative_residual(nep, r[3], e) <= 1e-12


def test_normalize_fixes_derivative_form():
    nep = gallery.diag_hyperbolic(n=10, seed=9)
    rng = np.random.default_rng(10)
    x = rng.standard_normal(10)
    rho = rayleigh_functional(nep, x)
    from plmr.model import EigenpairApprox

    pair = normalize(nep, EigenpairApprox(x=x, rho=rho, rel_residual=0.0))
    c = np.vdot(pair.x, nep.apply_prime(rho, pair.x)).real
    assert abs(abs(c) - 1.0) <= 1e-10
    assert pair.normalized


def test_bracket_orthogonality_of_eigenvectors():
    # coordinate eigenvectors of the diagonal problem are bracket-orthogonal
    nep = gallery.diag_hyperbolic(n=8, seed=11)
    e0, e5 = np.zeros(8), np.zeros(8)
    e0[0], e5[5] = 1.0, 1.0
    assert abs(bracket_bilinear(nep, e0, e5)) <= 1e-6
    # and the bracket of an eigenvector with itself matches x*T'(rho)x
    self_val = bracket_bilinear(nep, e0, e0)
    rho = rayleigh_functional(nep, e0)
    assert abs(self_val - np.vdot(e0, nep.apply_prime(rho, e0))) <= 1e-8


def test_scalar_term_derivatives_finite_difference():
    for label, term in SCALAR_REGISTRY.items():
        # stay clear of the pole of the rational term
        for mu in (1.5, 2.0, 3.25):
            h = 1e-6
            fd = (term.f(mu + h) - term.f(mu - h)) / (2 * h)
            assert abs(fd - term.fprime(mu)) <= 1e-5 * max(1.0, abs(term.fprime(mu)))


def test_apply_matches_assemble():
    nep = gallery.string(50)
    rng = np.random.default_rng(12)
    x = rng.standard_normal(50)
    mu = 1234.5
    y1 = nep.apply(mu, x)
    y2 = nep.assemble(mu).to_dense() @ x
    assert np.allclose(y1, y2, rtol=1e-12, atol=1e-9)


def test_matvec_counting_on_apply():
    nep = gallery.string(30)
    c0 = nep.matvec_counter.count
    nep.apply(10.0, np.ones(30))
    assert nep.matvec_counter.count == c0 + 1
    nep.apply(10.0, np.ones((30, 4)))
    assert nep.matvec_counter.count == c0 + 5
    relative_residual(nep, 10.0, np.ones(30))  # residual checks are not counted
    assert nep.matvec_counter.count == c0 + 5


def test_verify_definite_type_gallery():
    assert verify_definite_type(gallery.string(40)) == -1
    assert verify_definite_type(gallery.diag_hyperbolic(n=12, seed=13)) == -1
    assert verify_definite_type(gallery.pdde(g=8, interval=(-20.87, 2.0))) == 1


def test_definite_type_failure():
    # an interval containing eigenvalues of both term signs is rejected:
    # T(mu) = A - mu I on an interval strictly inside the spectrum keeps
    # indefinite endpoint inertia
    A = np.diag([1.0, 2.0, 10.0])
    terms = [(SCALAR_REGISTRY["1"], A), (SCALAR_REGISTRY["λ"], -np.eye(3))]
    nep = NonlinearEigenproblem(terms, (1.5, 3.0))
    with pytest.raises(DefiniteTypeError):
        verify_definite_type(nep)


def test_descriptor_round_trip(tmp_path):
    from plmr.model import load_descriptor, save_descriptor

    nep = gallery.string(20)
    path = save_descriptor(nep, tmp_path, name="p")
    nep2 = load_descriptor(path)
    assert nep2.n == 20
    assert nep2.interval == nep.interval
    x = np.arange(1.0, 21.0)
    assert np.allclose(nep.apply(100.0, x), nep2.apply(100.0, x))
