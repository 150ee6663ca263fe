"""Stabilized projected preconditioning.

M is an (incomplete) LDL^T factorization of T(sigma).  Plain application of
M^{-1} to a residual collapses the search direction onto the current iterate
when sigma is close to the target eigenvalue; the stabilized form projects
out the T'-weighted iterate block first:

    y = (I - M^{-1}Z (Z*M^{-1}Z)^{-1} Z*) M^{-1} b,   Z = [T'(rho_i) x_i].

With a single iterate (q = 1) this reduces to the familiar rank-one
deflation of M^{-1}T'(rho)x.
"""

import numpy as np
import scipy.linalg

from . import kernel
from .errors import StabilizationDegenerateError


class StabilizedPreconditioner:
    """Holds M = LDL^T of T(sigma) and the current stabilization block."""

    def __init__(self, nep, sigma, drop_tol=0.0):
        a, b = nep.interval
        if not (a < sigma < b):
            raise ValueError(f"shift {sigma!r} outside the admissible interval")
        self.sigma = sigma
        self.drop_tol = drop_tol
        self.base = kernel.ldlt_factor(nep.assemble(sigma, count=False), drop_tol)
        self.Z = None
        self.W = None
        self._G_lu = None
        self.apply_count = kernel.MatvecCounter()
        self.solve_count = kernel.MatvecCounter()

    def solve_plain(self, b):
        """M^{-1} b, counted as solves (not as stabilized applications)."""
        self.solve_count.add(1 if np.ndim(b) == 1 else np.shape(b)[1])
        return self.base.solve(b)

    def refresh(self, nep, X, rhos):
        """Cache Z = [T'(rho_i) x_i], W = M^{-1}Z and the factor of Z*W.

        One M-solve per column.  Raises StabilizationDegenerateError when
        Z*M^{-1}Z is numerically singular; the caller may fall back to
        apply_plain for the iteration.
        """
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[:, None]
        rhos = np.atleast_1d(rhos)
        cols = [nep.apply_prime(rhos[i], X[:, i]) for i in range(X.shape[1])]
        Z = np.column_stack(cols)
        W = self.base.solve(Z)
        self.solve_count.add(Z.shape[1])
        G = Z.conj().T @ W
        sv = scipy.linalg.svdvals(G)
        if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
            self.Z = self.W = self._G_lu = None
            raise StabilizationDegenerateError(
                f"Z*M^{{-1}}Z nearly singular (sigma_min/sigma_max = "
                f"{sv[-1] / max(sv[0], 1e-300):.3e})"
            )
        self.Z = Z
        self.W = W
        self._G_lu = scipy.linalg.lu_factor(G)

    def apply_stabilized(self, b):
        """(I - W (Z*W)^{-1} Z*) M^{-1} b for a vector or block b."""
        if self._G_lu is None:
            raise StabilizationDegenerateError("refresh has not been performed")
        y = self.base.solve(b)
        c = scipy.linalg.lu_solve(self._G_lu, self.Z.conj().T @ y)
        out = y - self.W @ c
        self.apply_count.add(1 if np.ndim(b) == 1 else np.shape(b)[1])
        return out

    def apply_stabilized_columnwise(self, B):
        """Column i of B gets the rank-one projection from (z_i, w_i) only.

        Used by the block Krylov recursion: the shared projection against all
        q directions also removes the cross-column components each column
        needs to correct its own error, which stalls convergence for
        clustered eigenvalues with a strong preconditioner.  A column whose
        z_i* w_i is numerically zero falls back to the plain solve.
        """
        if self.Z is None:
            raise StabilizationDegenerateError("refresh has not been performed")
        B = np.asarray(B)
        if B.ndim == 1:
            B = B[:, None]
        if B.shape[1] != self.Z.shape[1]:
            raise ValueError("column count does not match the stabilization block")
        Y = self.base.solve(B)
        out = np.empty_like(Y)
        for i in range(B.shape[1]):
            z, w = self.Z[:, i], self.W[:, i]
            g = np.vdot(z, w)
            if abs(g) <= 1e-14 * np.linalg.norm(z) * max(np.linalg.norm(w), 1e-300):
                out[:, i] = Y[:, i]
            else:
                out[:, i] = Y[:, i] - w * (np.vdot(z, Y[:, i]) / g)
        self.apply_count.add(B.shape[1])
        return out

    def apply_plain(self, b):
        """M^{-1} b counted as a stabilized-application fallback."""
        self.apply_count.add(1 if np.ndim(b) == 1 else np.shape(b)[1])
        return self.base.solve(b)
