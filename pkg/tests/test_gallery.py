"""Gallery construction tests."""

import numpy as np
import pytest
import scipy.linalg

from plmr import gallery


def test_string_structure():
    nep = gallery.string(50)
    assert nep.n == 50
    assert nep.interval == (4.4, 1.2e9)
    labels = [t.label for t, _ in nep.terms]
    assert labels == ["1", "λ", "λ/(λ−1)"]


def test_artificial_structure():
    nep = gallery.artificial(7)
    assert nep.n == 49
    assert nep.type_sign == -1


def test_pdde_structure():
    nep = gallery.pdde(g=10, interval=(-20.87, 2.0))
    assert nep.n == 81
    assert nep.type_sign == 1
    # the delayed term is a nonpositive diagonal
    D = nep.terms[2][1].to_dense()
    assert np.allclose(D, np.diag(np.diag(D)))
    assert np.max(np.diag(D).real) <= 0


def test_laplace2d_analytic_eigenvalues_against_dense_eig():
    g = 7
    nep = gallery.laplace2d(g)
    A = nep.terms[0][1].to_dense()
    w = np.sort(scipy.linalg.eigvalsh(A))
    assert np.allclose(w, gallery.laplace2d_eigenvalues(g), atol=1e-10)


def test_laplace3d_order():
    nep = gallery.laplace3d(4)
    assert nep.n == 64


def test_diag_hyperbolic_planted_and_conjugated():
    nep = gallery.diag_hyperbolic(n=20, seed=0, multiplicities=[(0.3, 3)], conjugate=True)
    r = np.asarray(nep.meta["eigenvalues"])
    assert int(np.sum(r == 0.3)) == 3
    Q = nep.meta["eigenvectors"]
    # planted eigenvector triple satisfies T(0.3) v = 0
    idx = np.nonzero(r == 0.3)[0]
    for i in idx:
        v = Q[:, i]
        assert np.linalg.norm(nep.apply(0.3, v)) <= 1e-10


def test_build_dispatch():
    nep = gallery.build("laplace2d", g=5)
    assert nep.n == 25
    with pytest.raises(KeyError):
        gallery.build("missing")
