"""Eigenpair extraction from a search subspace.

Projects the nonlinear problem onto range(U), solves the small projected
problem completely by inertia slicing with a Rayleigh-functional polish,
filters out spurious Ritz values by full-space residuals, and refines the
chosen eigenvector approximations via smallest singular vectors of T(nu)U.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .errors import ProjectedSolveError
from .model import NonlinearEigenproblem, _rayleigh_from_coeffs, verify_definite_type


def single_defaults(m):
    """Default (r, s) for the single-vector solver."""
    return min(m + 1, max(5, math.ceil((m + 1) / 2))), 2


def block_defaults(m, q):
    """Default (r, s) for the block solver."""
    return min((m + 2) * q, max(3 * q, math.ceil((m + 2) * q / 3))), 2 * q


@dataclass
class RitzSet:
    """All eigenpairs of the projected problem, in coefficient space."""

    values: np.ndarray          # shape (p,), ascending
    Y: np.ndarray               # shape (p_dim, p), column j pairs with values[j]
    U: np.ndarray               # the subspace basis the set was computed in
    rel_residuals: np.ndarray = None   # full-space, filled lazily
    restored: np.ndarray = None        # boolean flags
    group_ids: np.ndarray = None

    @property
    def count(self):
        return len(self.values)

    def ritz_vector(self, j):
        return self.U @ self.Y[:, j]


def project(nep, U):
    """Projected problem with term matrices U* A_i U (same interval and type)."""
    U = np.asarray(U)
    terms = []
    for t, m in nep.terms:
        B = U.conj().T @ (m.data @ U)
        B = (B + B.conj().T) / 2
        terms.append((t, kernel.HermitianMatrix(np.asarray(B), check=False)))
    return NonlinearEigenproblem(
        terms, nep.interval, type_sign=nep.type_sign, check_terms=False
    )


def _count_nonneg_side(proj, mu, sign):
    w, _ = kernel.dense_hermitian_eig(proj.assemble(mu, count=False).to_dense())
    tol = len(w) * np.finfo(float).eps * max(1.0, np.max(np.abs(w)))
    if sign > 0:
        return int(np.sum(w >= -tol))
    return int(np.sum(w <= tol))


def _polish_root(proj, lo, hi, sign, max_iter=60):
    """Safeguarded fixed point nu <- rho_proj(y(nu)) inside the bracket (lo, hi).

    y(nu) is the eigenvector of the assembled projected matrix at nu whose
    eigenvalue is nearest zero.  Bisection on the slicing count is the
    fallback whenever the fixed-point iterate leaves the bracket.
    """
    nu = 0.5 * (lo + hi)
    for _ in range(max_iter):
        w, V = kernel.dense_hermitian_eig(proj.assemble(nu, count=False).to_dense())
        j = int(np.argmin(np.abs(w)))
        y = V[:, j]
        try:
            nxt = _rayleigh_from_coeffs(proj, proj.quadratic_form_coeffs(y))
        except Exception:
            nxt = None
        if nxt is None or not (lo <= nxt <= hi):
            nxt = 0.5 * (lo + hi)  # bisection fallback keeps the bracket
        if abs(nxt - nu) <= 1e-12 * max(1.0, abs(nxt)):
            nu = nxt
            break
        nu = nxt
    w, V = kernel.dense_hermitian_eig(proj.assemble(nu, count=False).to_dense())
    return nu, w, V


def solve_projected(proj, U):
    """All p eigenpairs of the projected problem on J, by inertia slicing.

    Bisection on the count of crossed eigenvalue curves brackets every root
    (with multiplicity); a Rayleigh-functional fixed point polishes each.
    """
    sign = verify_definite_type(proj)
    p = proj.n
    a, b = proj.interval
    lo = a + min(1e-12 * max(1.0, abs(a)), 0.25 * (b - a))
    hi = b - min(1e-12 * max(1.0, abs(b)), 0.25 * (b - a))
    n_lo = _count_nonneg_side(proj, lo, sign)
    n_hi = _count_nonneg_side(proj, hi, sign)
    if n_hi - n_lo != p:
        raise ProjectedSolveError(
            f"projected slicing found {n_hi - n_lo} eigenvalues, expected {p}"
        )
    roots = []  # (value, multiplicity)
    stack = [(lo, hi, n_lo, n_hi)]
    while stack:
        l, h, nl, nh = stack.pop()
        if nh == nl:
            continue
        if h - l <= 1e-8 * max(1.0, abs(l), abs(h)):
            roots.append((l, h, nh - nl))
            continue
        mid = 0.5 * (l + h)
        nm = _count_nonneg_side(proj, mid, sign)
        stack.append((mid, h, nm, nh))
        stack.append((l, mid, nl, nm))
    roots.sort()
    values, vectors = [], []
    for l, h, mult in roots:
        nu, w, V = _polish_root(proj, l, h, sign)
        idx = np.argsort(np.abs(w))[:mult]
        for j in idx:
            values.append(nu)
            vectors.append(V[:, j])
    order = np.argsort(values)
    values = np.array([values[i] for i in order])
    Y = np.column_stack([vectors[i] for i in order])
    return RitzSet(values=values, Y=Y, U=np.asarray(U))


def full_space_residuals(nep, ritz, indices=None):
    """Relative full-space residuals of selected Ritz pairs (cached in the set)."""
    if ritz.rel_residuals is None:
        ritz.rel_residuals = np.full(ritz.count, np.nan)
    if indices is None:
        indices = range(ritz.count)
    for j in indices:
        if np.isnan(ritz.rel_residuals[j]):
            z = ritz.ritz_vector(j)
            r = nep.apply(ritz.values[j], z)
            nep.matvec_counter.add(-1)
            ritz.rel_residuals[j] = np.linalg.norm(r) / (
                nep.frobenius_norm(ritz.values[j]) * np.linalg.norm(z)
            )
    return ritz.rel_residuals


def filter_and_select(nep, ritz, sigma, r, s, q_sel, exclude=None):
    """Select q_sel promising Ritz values near sigma.

    Among the r values nearest sigma (minus excluded/restored ones), order by
    full-space relative residual, keep the s smallest, return the q_sel of
    those nearest sigma (as indices into the RitzSet, nearest first).
    """
    mask = np.ones(ritz.count, dtype=bool)
    if exclude is not None:
        mask[np.asarray(exclude, dtype=bool)] = False
    cand = np.nonzero(mask)[0]
    if len(cand) == 0:
        return []
    cand = cand[np.argsort(np.abs(ritz.values[cand] - sigma), kind="stable")][:r]
    res = full_space_residuals(nep, ritz, cand)
    cand = cand[np.argsort(res[cand], kind="stable")][:s]
    cand = cand[np.argsort(np.abs(ritz.values[cand] - sigma), kind="stable")][:q_sel]
    return list(cand)


def refine(nep, U, nu, g=1):
    """g best coefficient vectors minimizing ||T(nu) U y||, with their values.

    Returns (sing_values, Y) where Y columns are orthonormal and ordered by
    ascending singular value of T(nu)U.
    """
    U = np.asarray(U)
    B = nep.apply(nu, U)
    nep.matvec_counter.add(-U.shape[1])
    return kernel.smallest_right_singular_vectors(B, g)


def group_values(values, threshold=1e-8, interval=None):
    """Greedy ascending clustering of nearly equal values.

    A value joins the current group when every member stays within
    threshold * |mean| of the updated group mean (absolute tolerance when
    the mean vanishes).  Returns a list of index lists.
    """
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    abs_scale = 1.0
    if interval is not None:
        abs_scale = max(1.0, abs(interval[0]), abs(interval[1]))
    groups = []
    cur = []
    for idx in order:
        trial = cur + [idx]
        mean = float(np.mean(values[trial]))
        tol = threshold * (abs(mean) if mean != 0.0 else abs_scale)
        if cur and np.max(np.abs(values[trial] - mean)) > tol:
            groups.append(cur)
            cur = [idx]
        else:
            cur = trial
    if cur:
        groups.append(cur)
    return groups


def sin_angle(x, Q):
    """sin of the principal angle between vector x and range(Q) (Q orthonormal)."""
    x = np.asarray(x)
    nx = np.linalg.norm(x)
    if Q is None or Q.size == 0:
        return 1.0
    y = x - Q @ (Q.conj().T @ x)
    return float(np.linalg.norm(y) / nx)


def accept_candidate(x_cand, X_protected, delta=1e-2):
    """Accept a new eigenvector candidate iff it leaves the protected span."""
    if X_protected is None or np.size(X_protected) == 0:
        return True
    Q, _ = kernel.orthonormalize(np.asarray(X_protected))
    return sin_angle(x_cand, Q) > delta


def restore_converged(ritz, rhos_conv, X_conv, value_tol=1e-6, angle_tol=1e-4):
    """Flag Ritz pairs that re-identify already converged/deflated pairs.

    A pair (nu, z) is flagged when nu matches some converged rho to
    value_tol (relative) and z lies within angle_tol of the converged span.
    The flags are stored on the set and returned.
    """
    flags = np.zeros(ritz.count, dtype=bool)
    rhos_conv = np.atleast_1d(rhos_conv) if rhos_conv is not None else np.array([])
    if len(rhos_conv) and X_conv is not None and np.size(X_conv):
        Q, _ = kernel.orthonormalize(np.asarray(X_conv))
        for j in range(ritz.count):
            gap = np.min(np.abs(ritz.values[j] - rhos_conv))
            if gap <= value_tol * max(1.0, np.max(np.abs(rhos_conv))):
                if sin_angle(ritz.ritz_vector(j), Q) <= angle_tol:
                    flags[j] = True
    ritz.restored = flags
    return flags
