"""Nonlinear Hermitian eigenproblem model.

T(lambda) = sum_i f_i(lambda) A_i on an open interval J = (a, b) of definite
type, with the Rayleigh functional, relative eigenresiduals, the bilinear
bracket from the variational principle, and the definite-type certificate.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import kernel
from .errors import (
    DefiniteTypeError,
    DegenerateNormalizationError,
    DimensionMismatchError,
    RayleighDomainError,
)


@dataclass(frozen=True)
class ScalarTerm:
    """Scalar coefficient function f with derivative, as used in T(.)."""

    f: callable
    fprime: callable
    label: str


_SQRT_PI = math.sqrt(math.pi)

SCALAR_REGISTRY = {
    "1": ScalarTerm(lambda t: 1.0, lambda t: 0.0, "1"),
    "λ": ScalarTerm(lambda t: t, lambda t: 1.0, "λ"),
    "λ²": ScalarTerm(lambda t: t * t, lambda t: 2.0 * t, "λ²"),
    "λ/(λ−1)": ScalarTerm(
        lambda t: t / (t - 1.0), lambda t: -1.0 / (t - 1.0) ** 2, "λ/(λ−1)"
    ),
    "−sin(λ/5)": ScalarTerm(
        lambda t: -math.sin(t / 5.0), lambda t: -math.cos(t / 5.0) / 5.0, "−sin(λ/5)"
    ),
    "√(λ+1)": ScalarTerm(
        lambda t: math.sqrt(t + 1.0), lambda t: 0.5 / math.sqrt(t + 1.0), "√(λ+1)"
    ),
    "e^{−λ/√π}": ScalarTerm(
        lambda t: math.exp(-t / _SQRT_PI),
        lambda t: -math.exp(-t / _SQRT_PI) / _SQRT_PI,
        "e^{−λ/√π}",
    ),
    "e^{−2λ}": ScalarTerm(
        lambda t: math.exp(-2.0 * t), lambda t: -2.0 * math.exp(-2.0 * t), "e^{−2λ}"
    ),
}


def _check_derivative(term, a, b, rng):
    """Spot-check fprime against central differences at 10 points of (a, b)."""
    for _ in range(10):
        mu = rng.uniform(a, b)
        h = 1e-6 * (abs(mu) + 1.0)
        if mu - h <= a or mu + h >= b:
            continue
        fd = (term.f(mu + h) - term.f(mu - h)) / (2.0 * h)
        dp = term.fprime(mu)
        fval = abs(term.f(mu))
        noise = 10.0 * np.finfo(float).eps * fval / h
        scale = max(abs(dp), noise)
        if scale == 0.0:
            scale = 1.0
        if abs(fd - dp) > 1e-6 * scale + noise:
            raise ValueError(
                f"derivative of term '{term.label}' disagrees with finite "
                f"differences at mu={mu:.6g}: {dp:.6g} vs {fd:.6g}"
            )


@dataclass
class EigenpairApprox:
    """An approximate eigenpair (x, rho(x)) with its relative residual."""

    x: np.ndarray
    rho: float
    rel_residual: float
    normalized: bool = False


class NonlinearEigenproblem:
    """T(lambda) = sum f_i(lambda) A_i on the open interval J = (a, b).

    type_sign is +1 for positive type, -1 for negative type; it is computed
    on demand by verify_definite_type and cached.  The instance is immutable
    after construction apart from per-run caches and the matvec counter.
    """

    def __init__(self, terms, interval, type_sign=None, meta=None, check_terms=True):
        if not terms:
            raise ValueError("at least one term is required")
        self.terms = [(t, m if isinstance(m, kernel.HermitianMatrix) else kernel.HermitianMatrix(m)) for t, m in terms]
        n = self.terms[0][1].n
        for _, m in self.terms:
            if m.n != n:
                raise DimensionMismatchError("term matrices have differing orders")
        self.n = n
        a, b = float(interval[0]), float(interval[1])
        if not a < b:
            raise ValueError("interval must satisfy a < b")
        self.interval = (a, b)
        self.type_sign = type_sign
        self.meta = dict(meta or {})
        self.matvec_counter = kernel.MatvecCounter()
        self._fro_cache = {}
        if check_terms:
            rng = np.random.default_rng(0)
            for t, _ in self.terms:
                _check_derivative(t, a, b, rng)

    # -- evaluation -------------------------------------------------------

    def _require_in_interval(self, mu):
        a, b = self.interval
        if not (a < mu < b):
            raise ValueError(f"mu={mu!r} is outside the admissible interval ({a}, {b})")

    def coefficients(self, mu):
        return np.array([t.f(mu) for t, _ in self.terms])

    def coefficients_prime(self, mu):
        return np.array([t.fprime(mu) for t, _ in self.terms])

    def assemble(self, mu, count=True):
        """Assemble T(mu) as a HermitianMatrix (matvecs on it are counted)."""
        self._require_in_interval(mu)
        cs = self.coefficients(mu)
        sparse = not any(m.is_dense for _, m in self.terms)
        if sparse:
            acc = sum(c * m.data for c, (_, m) in zip(cs, self.terms))
            acc = scipy.sparse.csr_matrix(acc)
        else:
            acc = sum(c * m.to_dense() for c, (_, m) in zip(cs, self.terms))
        return kernel.HermitianMatrix(
            acc, check=False, counter=self.matvec_counter if count else None
        )

    def apply(self, mu, x):
        """T(mu) x without assembling; counts one matvec per column."""
        self._require_in_interval(mu)
        cs = self.coefficients(mu)
        out = cs[0] * self.terms[0][1].data @ x
        for c, (_, m) in zip(cs[1:], self.terms[1:]):
            if c != 0.0:
                out += c * (m.data @ x)
        self.matvec_counter.add(1 if np.ndim(x) == 1 else np.shape(x)[1])
        return out

    def apply_prime(self, mu, x):
        """T'(mu) x without assembling."""
        self._require_in_interval(mu)
        cs = self.coefficients_prime(mu)
        out = np.zeros_like(np.asarray(x, dtype=np.complex128))
        for c, (_, m) in zip(cs, self.terms):
            if c != 0.0:
                out += c * (m.data @ x)
        return out

    def frobenius_norm(self, mu):
        """||T(mu)||_F, cached per mu (values are immutable, cache is bounded)."""
        key = float(mu)
        val = self._fro_cache.get(key)
        if val is None:
            val = self.assemble(mu, count=False).frobenius_norm()
            if len(self._fro_cache) > 256:
                self._fro_cache.clear()
            self._fro_cache[key] = val
        return val

    # -- derived quantities -------------------------------------------------

    def quadratic_form_coeffs(self, x):
        """Real coefficients c_i = x* A_i x defining g(mu) = x*T(mu)x."""
        return np.array([np.vdot(x, m.data @ x).real for _, m in self.terms])


def assemble_T(nep, mu):
    return nep.assemble(mu)


def apply_T(nep, mu, x):
    return nep.apply(mu, x)


def apply_Tprime(nep, mu, x):
    return nep.apply_prime(mu, x)


def _scalar_root(fs, fps, coeffs, lo, hi, glo, ghi, max_iter=80):
    """Root of g(mu) = sum coeffs_i * f_i(mu) inside the bracket [lo, hi].

    Safeguarded Newton: the Newton step uses g' from the term derivatives and
    falls back to bisection whenever it exits the current bracket.  Returns
    (root, g(root), |g(lo')| + |g(hi')|) with the final bracket values.
    """
    eps = np.finfo(float).eps
    mu = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g = float(sum(c * f(mu) for c, f in zip(coeffs, fs)))
        ref = abs(glo) + abs(ghi)
        # stop only on bracket collapse or an exact zero: |g| compared to the
        # endpoint magnitudes is a poor test when g varies over many orders
        if g == 0.0 or hi - lo <= 4.0 * eps * max(abs(lo), abs(hi), 1e-300):
            return mu, g, ref
        if (g > 0) == (ghi > 0):
            hi, ghi = mu, g
        else:
            lo, glo = mu, g
        gp = float(sum(c * fp(mu) for c, fp in zip(coeffs, fps)))
        step_ok = False
        if gp != 0.0:
            step = g / gp
            if abs(step) <= eps * max(abs(mu), 1e-300):
                return mu, g, ref
            cand = mu - step
            if lo < cand < hi:
                mu = cand
                step_ok = True
        if not step_ok:
            mu = 0.5 * (lo + hi)
    return mu, float(sum(c * f(mu) for c, f in zip(coeffs, fs))), abs(glo) + abs(ghi)


def rayleigh_functional(nep, x):
    """The unique root rho(x) in J of mu -> x* T(mu) x.

    Raises RayleighDomainError when the quadratic form has no sign change on
    J (x outside the Rayleigh-functional domain).
    """
    x = np.asarray(x)
    if np.linalg.norm(x) == 0.0:
        raise RayleighDomainError("zero vector has no Rayleigh functional value")
    coeffs = nep.quadratic_form_coeffs(x)
    return _rayleigh_from_coeffs(nep, coeffs)


def _rayleigh_from_coeffs(nep, coeffs):
    a, b = nep.interval
    lo = a + min(1e-12 * max(1.0, abs(a)), 0.25 * (b - a))
    hi = b - min(1e-12 * max(1.0, abs(b)), 0.25 * (b - a))
    fs = [t.f for t, _ in nep.terms]
    fps = [t.fprime for t, _ in nep.terms]
    glo = float(sum(c * f(lo) for c, f in zip(coeffs, fs)))
    ghi = float(sum(c * f(hi) for c, f in zip(coeffs, fs)))
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if (glo > 0) == (ghi > 0):
        raise RayleighDomainError(
            "x*T(mu)x has no sign change on J: x outside Rayleigh-functional domain"
        )
    mu, _, _ = _scalar_root(fs, fps, coeffs, lo, hi, glo, ghi)
    return mu


def relative_residual(nep, mu, x):
    """||T(mu) x||_2 / (||T(mu)||_F ||x||_2)."""
    x = np.asarray(x)
    r = nep.apply(mu, x)
    nep.matvec_counter.add(-1)  # residual evaluation is not an iteration matvec
    return float(np.linalg.norm(r) / (nep.frobenius_norm(mu) * np.linalg.norm(x)))


def _jacobi_scale(A, diag):
    """Symmetric diagonal scaling s A s with s = 1/sqrt(|diag|).

    A congruence, so inertia is preserved; it removes the extreme entry
    scaling that otherwise drowns small eigenvalues in roundoff.
    """
    d = np.abs(np.asarray(diag)).astype(float)
    d[d == 0.0] = 1.0
    s = 1.0 / np.sqrt(d)
    if scipy.sparse.issparse(A):
        S = scipy.sparse.diags(s)
        return scipy.sparse.csr_matrix(S @ A @ S)
    return A * s[:, None] * s[None, :]


def _definiteness(H):
    """+1 if positive definite, -1 if negative definite, 0 otherwise."""
    B = _jacobi_scale(H.data, H.diagonal())
    if H.n <= kernel.DENSE_EIG_LIMIT:
        if scipy.sparse.issparse(B):
            B = B.toarray()
        np_, nm, nz = kernel.ldlt_factor(
            kernel.HermitianMatrix(B, check=False)
        ).inertia
        if nm == 0 and nz == 0:
            return 1
        if np_ == 0 and nz == 0:
            return -1
        return 0
    # large sparse: the eigenvalue of smallest magnitude decides definiteness
    ev = scipy.sparse.linalg.eigsh(
        scipy.sparse.csc_matrix(B), k=1, sigma=0.0, return_eigenvectors=False
    )[0]
    if ev > 0:
        return 1
    if ev < 0:
        return -1
    return 0


def verify_definite_type(nep):
    """Definite-type certificate for J via inertia of T(a+eps), T(b-eps).

    Returns +1 (positive type: T(a) negative definite, T(b) positive
    definite) or -1 (mirrored).  Raises DefiniteTypeError otherwise.  The
    result is cached on the problem.
    """
    if nep.type_sign is not None:
        return nep.type_sign
    a, b = nep.interval
    # offsets scale with the endpoint magnitude, capped by the interval width
    ea = min(1e-8 * max(1.0, abs(a)), 0.25 * (b - a))
    eb = min(1e-8 * max(1.0, abs(b)), 0.25 * (b - a))
    da = _definiteness(nep.assemble(a + ea, count=False))
    db = _definiteness(nep.assemble(b - eb, count=False))
    if da == -1 and db == 1:
        nep.type_sign = 1
    elif da == 1 and db == -1:
        nep.type_sign = -1
    else:
        raise DefiniteTypeError(
            f"interval not of definite type: T(a) sign {da}, T(b) sign {db}"
        )
    return nep.type_sign


def normalize(nep, pair):
    """Scale x so that |x* T'(rho) x| = 1; rho is unchanged."""
    x = np.asarray(pair.x)
    c = np.vdot(x, nep.apply_prime(pair.rho, x)).real
    if abs(c) < 1e-14 * np.vdot(x, x).real:
        raise DegenerateNormalizationError(
            f"|x*T'(rho)x| = {abs(c):.3e} is numerically zero at rho={pair.rho}"
        )
    return EigenpairApprox(
        x=x / math.sqrt(abs(c)),
        rho=pair.rho,
        rel_residual=pair.rel_residual,
        normalized=True,
    )


def bracket_bilinear(nep, x, y):
    """[x, y] = y*(T(rho(y)) - T(rho(x)))x / (rho(y) - rho(x)), T' limit on ties."""
    rx = rayleigh_functional(nep, x)
    ry = rayleigh_functional(nep, y)
    if abs(rx - ry) <= 1e-10 * max(abs(rx), abs(ry), 1.0):
        return complex(np.vdot(y, nep.apply_prime(rx, x)))
    num = np.vdot(y, nep.apply(ry, x) - nep.apply(rx, x))
    nep.matvec_counter.add(-2)
    return complex(num / (ry - rx))


# -- JSON problem descriptor -------------------------------------------------


def save_descriptor(nep, directory, name="problem"):
    """Write {terms: [{label, matrix_file}], interval} plus Matrix Market files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    terms = []
    for i, (t, m) in enumerate(nep.terms):
        fname = f"{name}_A{i}.mtx"
        kernel.write_matrix_market(directory / fname, m)
        terms.append({"label": t.label, "matrix_file": fname})
    doc = {"terms": terms, "interval": list(nep.interval)}
    path = directory / f"{name}.json"
    path.write_text(json.dumps(doc, ensure_ascii=False, indent=2))
    return path


def load_descriptor(path):
    """Load a NonlinearEigenproblem from a JSON descriptor written by save_descriptor."""
    path = Path(path)
    doc = json.loads(path.read_text())
    terms = []
    for entry in doc["terms"]:
        label = entry["label"]
        if label not in SCALAR_REGISTRY:
            raise ValueError(f"unknown scalar label {label!r}")
        m = kernel.read_matrix_market(path.parent / entry["matrix_file"])
        terms.append((SCALAR_REGISTRY[label], m))
    return NonlinearEigenproblem(terms, tuple(doc["interval"]))
