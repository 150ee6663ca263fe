"""Gallery of nonlinear Hermitian eigenproblem instances.

All builders accept a size parameter so that small instances can be used for
fast testing, and return a NonlinearEigenproblem whose admissible interval is
of definite type.
"""

import math

import numpy as np
import scipy.sparse

from .model import SCALAR_REGISTRY, NonlinearEigenproblem


def _tridiag(n, lo, d, up):
    return scipy.sparse.diags(
        [np.full(n - 1, lo), np.full(n, d), np.full(n - 1, up)], [-1, 0, 1]
    ).tocsr()


def laplacian_2d(g, scaled=False, h=None):
    """5-point stencil Laplacian on a g x g interior grid (order g^2).

    Unscaled stencil has diagonal 4 and off-diagonal -1.  With scaled=True
    the matrix is divided by h^2 (default h = 1/(g+1)).
    """
    one = _tridiag(g, -1.0, 2.0, -1.0)
    eye = scipy.sparse.identity(g, format="csr")
    L = scipy.sparse.kron(one, eye, format="csr") + scipy.sparse.kron(eye, one, format="csr")
    if scaled:
        if h is None:
            h = 1.0 / (g + 1)
        L = L / h**2
    return scipy.sparse.csr_matrix(L)


def laplacian_3d(g):
    """7-point stencil Laplacian on a g x g x g interior grid, unscaled."""
    one = _tridiag(g, -1.0, 2.0, -1.0)
    eye = scipy.sparse.identity(g, format="csr")
    L = (
        scipy.sparse.kron(scipy.sparse.kron(one, eye), eye)
        + scipy.sparse.kron(scipy.sparse.kron(eye, one), eye)
        + scipy.sparse.kron(scipy.sparse.kron(eye, eye), one)
    )
    return scipy.sparse.csr_matrix(L)


def string(n=10000):
    """Rational eigenvibration problem of a string attached to a spring.

    T(lambda) = A - lambda B + lambda/(lambda-1) C of order n, with the
    admissible interval (4.4, 1.2e9) at n = 10000.
    """
    h = 1.0 / n
    A = _tridiag(n, -1.0, 2.0, -1.0) / h
    A = A.tolil()
    A[n - 1, n - 1] = 1.0 / h
    A = A.tocsr()
    B = _tridiag(n, 1.0, 4.0, 1.0) * (h / 6.0)
    B = B.tolil()
    B[n - 1, n - 1] = h / 3.0
    B = B.tocsr()
    C = scipy.sparse.csr_matrix(
        (np.array([1.0]), (np.array([n - 1]), np.array([n - 1]))), shape=(n, n)
    )
    terms = [
        (SCALAR_REGISTRY["1"], A),
        (SCALAR_REGISTRY["λ"], -B),
        (SCALAR_REGISTRY["λ/(λ−1)"], C),
    ]
    return NonlinearEigenproblem(
        terms, (4.4, 1.2e9), type_sign=-1, meta={"name": "string", "n": n}
    )


def artificial(g=127):
    """Nonlinear problem -sin(l/5) I + sqrt(l+1) B + exp(-l/sqrt(pi)) C.

    B is the unscaled 1D second-difference matrix tridiag[1, -2, 1] and C is
    the unscaled 5-point Laplacian on a g x g grid, both of order g^2.  The
    admissible interval is (-0.43, 3.34).
    """
    n = g * g
    A = scipy.sparse.identity(n, format="csr")
    B = _tridiag(n, 1.0, -2.0, 1.0)
    C = laplacian_2d(g, scaled=False)
    terms = [
        (SCALAR_REGISTRY["−sin(λ/5)"], A),
        (SCALAR_REGISTRY["√(λ+1)"], B),
        (SCALAR_REGISTRY["e^{−λ/√π}"], C),
    ]
    return NonlinearEigenproblem(
        terms, (-0.43, 3.34), type_sign=-1, meta={"name": "artificial", "n": n}
    )


def pdde(g=200, interval=(-20.87, 4.08)):
    """Delay differential equation u_t = Laplace(u) + a u + b u(t - 2).

    Discretized on a g x g uniform grid over (0, pi)^2 with Dirichlet
    boundaries, giving T(lambda) = lambda I + M - diag(a) - exp(-2 lambda)
    diag(b) of order (g-1)^2, where M is the 1/h^2-scaled 5-point Laplacian,
    a = 8 sin(x1) sin(x2) and b = 100 |sin(x1 + x2)|.  The default interval
    (-20.87, 4.08) is of definite type at production grid sizes (g >= 40);
    coarse grids push one eigenvalue slightly above 4.08, so small-grid
    callers should pass a reduced right endpoint.
    """
    m = g - 1
    n = m * m
    h = math.pi / g
    M = laplacian_2d(m, scaled=True, h=h)
    x = h * np.arange(1, g)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    a = 8.0 * np.sin(X1) * np.sin(X2)
    b = 100.0 * np.abs(np.sin(X1 + X2))
    terms = [
        (SCALAR_REGISTRY["λ"], scipy.sparse.identity(n, format="csr")),
        (SCALAR_REGISTRY["1"], M - scipy.sparse.diags(a.ravel()).tocsr()),
        (SCALAR_REGISTRY["e^{−2λ}"], scipy.sparse.csr_matrix(-scipy.sparse.diags(b.ravel()))),
    ]
    return NonlinearEigenproblem(
        terms, interval, type_sign=1, meta={"name": "pdde", "n": n}
    )


def laplace2d(g=100):
    """Linear eigenproblem A - lambda I with the unscaled 5-point Laplacian.

    Eigenvalues 4 sin^2(i pi / (2(g+1))) + 4 sin^2(j pi / (2(g+1))) lie in
    (0, 8); most are semi-simple (double for i != j).
    """
    n = g * g
    A = laplacian_2d(g, scaled=False)
    terms = [
        (SCALAR_REGISTRY["1"], A),
        (SCALAR_REGISTRY["λ"], scipy.sparse.csr_matrix(-scipy.sparse.identity(n))),
    ]
    return NonlinearEigenproblem(
        terms, (0.0, 8.0), type_sign=-1, meta={"name": "laplace2d", "n": n}
    )


def laplace2d_eigenvalues(g):
    """Sorted analytic eigenvalues of the unscaled 5-point Laplacian."""
    s = 4.0 * np.sin(np.arange(1, g + 1) * np.pi / (2.0 * (g + 1))) ** 2
    return np.sort((s[:, None] + s[None, :]).ravel())


def laplace3d(g=50):
    """Linear eigenproblem A - lambda I with the unscaled 7-point Laplacian."""
    n = g**3
    A = laplacian_3d(g)
    terms = [
        (SCALAR_REGISTRY["1"], A),
        (SCALAR_REGISTRY["λ"], scipy.sparse.csr_matrix(-scipy.sparse.identity(n))),
    ]
    return NonlinearEigenproblem(
        terms, (0.0, 12.0), type_sign=-1, meta={"name": "laplace3d", "n": n}
    )


def diag_hyperbolic(n=100, seed=0, multiplicities=None, conjugate=False):
    """Diagonalizable hyperbolic quadratic problem with known eigenvalues.

    Builds T(lambda) = lambda^2 I - lambda diag(r + R) + diag(r R) whose
    eigenvalues on the admissible interval are the left roots r_i in
    (0.05, 0.95); the right roots R_i lie in (2, 3).  multiplicities, if
    given, is a list of (value, count) pairs planted among the r_i.  With
    conjugate=True all three matrices are conjugated by a random orthogonal
    matrix (dense), hiding the diagonal structure.
    """
    rng = np.random.default_rng(seed)
    r = np.sort(rng.uniform(0.05, 0.95, size=n))
    if multiplicities:
        idx = 0
        for value, count in multiplicities:
            r[idx : idx + count] = value
            idx += count
        r = np.sort(r)
    R = np.sort(rng.uniform(2.0, 3.0, size=n))
    A2 = np.eye(n)
    A1 = np.diag(-(r + R))
    A0 = np.diag(r * R)
    Q = np.eye(n)
    if conjugate:
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A2 = Q @ A2 @ Q.T
        A1 = Q @ A1 @ Q.T
        A0 = Q @ A0 @ Q.T
        A2 = (A2 + A2.T) / 2
        A1 = (A1 + A1.T) / 2
        A0 = (A0 + A0.T) / 2
    terms = [
        (SCALAR_REGISTRY["λ²"], A2),
        (SCALAR_REGISTRY["λ"], A1),
        (SCALAR_REGISTRY["1"], A0),
    ]
    nep = NonlinearEigenproblem(
        terms,
        (0.0, 1.0),
        type_sign=-1,
        meta={"name": "diag_hyperbolic", "n": n, "seed": seed},
    )
    nep.meta["eigenvalues"] = r.tolist()
    nep.meta["eigenvectors"] = Q  # column i pairs with eigenvalue r[i]
    return nep


BUILDERS = {
    "string": string,
    "artificial": artificial,
    "pdde": pdde,
    "laplace2d": laplace2d,
    "laplace3d": laplace3d,
    "diag_hyperbolic": diag_hyperbolic,
}


def build(name, **kwargs):
    """Construct a gallery problem by name."""
    if name not in BUILDERS:
        raise KeyError(f"unknown gallery problem {name!r}; known: {sorted(BUILDERS)}")
    return BUILDERS[name](**kwargs)
