"""Brute-force eigenvalue oracle based on matrix inertia.

On a definite-type interval every eigenvalue curve of T(mu) crosses zero
exactly once, so the inertia of a single factorization of T(mu) counts the
eigenvalues of the nonlinear problem on one side of mu.  Bisection on this
count enumerates all eigenvalues in a window with multiplicities, with no
reliance on the iterative solvers being tested.
"""

import csv

import numpy as np
import scipy.sparse

from . import kernel
from .errors import FactorizationBreakdownError
from .model import _jacobi_scale, verify_definite_type


def _inertia(H):
    """(n_plus, n_minus, n_zero) of a Hermitian matrix via exact LDL^T.

    Jacobi scaling is applied first; it is a congruence, so the inertia is
    unchanged while badly scaled problems become tractable.
    """
    B = _jacobi_scale(H.data, H.diagonal())
    if H.n <= kernel.DENSE_EIG_LIMIT and scipy.sparse.issparse(B):
        B = B.toarray()
    return kernel.ldlt_factor(kernel.HermitianMatrix(B, check=False)).inertia


def count_below(nep, mu, _retry=True):
    """Number of eigenvalues of the nonlinear problem in (a, mu].

    Uses one exact factorization of T(mu).  If the factorization breaks down
    or reports a numerically singular matrix (mu sits essentially on an
    eigenvalue), the count is retried at a slightly perturbed shift.
    """
    sign = verify_definite_type(nep)
    a, b = nep.interval
    if mu <= a:
        return 0
    if mu >= b:
        mu = b - min(1e-12 * max(1.0, abs(b)), 0.25 * (b - a))
    try:
        np_, nm, nz = _inertia(nep.assemble(mu, count=False))
    except FactorizationBreakdownError:
        nz = 1
        np_ = nm = 0
    if nz > 0 and _retry:
        # nudge off the eigenvalue; direction keeps the count conservative
        mu2 = mu + 1e-9 * max(1.0, abs(mu))
        if mu2 < b:
            return count_below(nep, mu2, _retry=False)
    if sign > 0:
        return np_ + nz
    return nm + nz


def enumerate_eigenvalues(nep, lo=None, hi=None, rel_tol=1e-10, max_count=None):
    """All eigenvalues in (lo, hi] with multiplicities, by bisection on counts.

    Returns a sorted 1D array in which an eigenvalue of multiplicity m
    appears m times.  Each value is located to relative width rel_tol.
    max_count, if given, stops after that many eigenvalues from the left.
    """
    a, b = nep.interval
    if lo is None:
        lo = a
    if hi is None:
        hi = b
    lo = max(lo, a)
    hi = min(hi, b)
    n_lo = count_below(nep, lo)
    n_hi = count_below(nep, hi)
    found = []
    stack = [(lo, hi, n_lo, n_hi)]
    while stack:
        l, h, nl, nh = stack.pop()
        if nh == nl:
            continue
        if max_count is not None and nl - n_lo >= max_count:
            continue
        if h - l <= rel_tol * max(1.0, abs(l), abs(h)):
            found.extend([0.5 * (l + h)] * (nh - nl))
            continue
        mid = 0.5 * (l + h)
        nm = count_below(nep, mid)
        # right half pushed first so the left half is processed first
        stack.append((mid, h, nm, nh))
        stack.append((l, mid, nl, nm))
    found.sort()
    if max_count is not None:
        found = found[:max_count]
    return np.array(found)


def write_csv(path, values, counts_meta=None):
    """Write enumerated eigenvalues as index,value rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        for i, v in enumerate(values):
            w.writerow([i, f"{v:.16e}"])
