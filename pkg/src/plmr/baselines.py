"""Comparator solvers: basic Jacobi-Davidson with right-preconditioned
GMRES(m) for the correction equation, and a nonlinear LOBPCG-style block
solver for extreme eigenvalues (also used to bootstrap sweeps).
"""

from dataclasses import dataclass, field

import numpy as np

from . import extraction, kernel
from .errors import DegenerateNormalizationError, RayleighDomainError
from .model import (
    EigenpairApprox,
    rayleigh_functional,
    relative_residual,
    verify_definite_type,
)


@dataclass
class GmresWorkspace:
    """Arnoldi data from one GMRES cycle, kept for inspection."""

    V: np.ndarray = None        # n x (j+1) Arnoldi basis
    H: np.ndarray = None        # (j+1) x j Hessenberg
    residual_norms: list = field(default_factory=list)


def gmres_cycle(op, b, m, tol=0.0):
    """One GMRES(m) cycle for op(u) = b starting from zero.

    Returns (u, workspace).  op is a callable; Givens rotations maintain the
    least-squares residual norm at every step, which is nonincreasing.
    """
    n = b.shape[0]
    beta = np.linalg.norm(b)
    ws = GmresWorkspace()
    if beta == 0.0:
        ws.residual_norms = [0.0]
        return np.zeros_like(b), ws
    V = np.zeros((n, m + 1), dtype=np.complex128)
    H = np.zeros((m + 1, m), dtype=np.complex128)  # Hessenberg before rotations
    R = np.zeros((m + 1, m), dtype=np.complex128)  # after rotations
    cs = np.zeros(m)
    sn = np.zeros(m, dtype=np.complex128)
    g = np.zeros(m + 1, dtype=np.complex128)
    g[0] = beta
    V[:, 0] = b / beta
    ws.residual_norms = [beta]
    j_done = 0
    for j in range(m):
        w = op(V[:, j])
        for i in range(j + 1):
            H[i, j] = np.vdot(V[:, i], w)
            w = w - H[i, j] * V[:, i]
        hjj1 = np.linalg.norm(w)
        H[j + 1, j] = hjj1
        col = H[: j + 2, j].copy()
        for i in range(j):
            a, c2 = col[i], col[i + 1]
            col[i] = cs[i] * a + sn[i] * c2
            col[i + 1] = -np.conj(sn[i]) * a + cs[i] * c2
        a, c2 = col[j], col[j + 1]
        d = np.hypot(abs(a), abs(c2))
        if d == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        elif a == 0.0:
            cs[j], sn[j] = 0.0, np.conj(c2) / abs(c2)
        else:
            cs[j] = abs(a) / d
            sn[j] = (a / abs(a)) * np.conj(c2) / d
        col[j] = cs[j] * a + sn[j] * c2
        col[j + 1] = 0.0
        R[: j + 2, j] = col
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]
        ws.residual_norms.append(abs(g[j + 1]))
        j_done = j + 1
        if hjj1 == 0.0:
            break  # happy breakdown: exact solve within the basis
        V[:, j + 1] = w / hjj1
        if tol and abs(g[j + 1]) <= tol * beta:
            break
    y = np.linalg.solve(R[:j_done, :j_done], g[:j_done])
    u = V[:, :j_done] @ y
    ws.V = V[:, : j_done + 1]
    ws.H = H[: j_done + 1, :j_done]
    return u, ws


def jd_step(nep, P, x, rho, m):
    """One basic Jacobi-Davidson step: x + dx with dx from GMRES(m).

    The correction equation P1 T(rho) P2 dx = -T(rho) x, with P1, P2 the
    T'-weighted projectors, is solved by one right-preconditioned GMRES(m)
    cycle using the stabilized preconditioner; exactly m+1 stabilized
    applications are consumed.  P.refresh must have been run at (x, rho).
    """
    x = np.asarray(x, dtype=np.complex128)
    tp = nep.apply_prime(rho, x)
    denom = np.vdot(x, tp)
    if abs(denom) < 1e-14 * np.linalg.norm(x) * max(np.linalg.norm(tp), 1e-300):
        raise DegenerateNormalizationError("x*T'(rho)x is numerically zero")

    def proj1(v):
        return v - tp * (np.vdot(x, v) / denom)

    def proj2(v):
        return v - x * (np.vdot(tp, v) / denom)

    def op(u):
        return proj1(nep.apply(rho, proj2(P.apply_stabilized(u))))

    b = -nep.apply(rho, x)
    u, ws = gmres_cycle(op, b, m)
    dx = P.apply_stabilized(u)
    x_new = x + dx
    nrm = np.linalg.norm(x_new)
    if nrm == 0.0:
        return x, ws
    return x_new / nrm, ws


def jd_solve(nep, P, sigma, m=2, tol=1e-10, max_iter=100, seed=0, x0=None):
    """Basic Jacobi-Davidson iteration built on jd_step.

    Returns (EigenpairApprox, record dict).  m+1 stabilized preconditioner
    applications per iteration; the Rayleigh functional supplies rho.
    """
    verify_definite_type(nep)
    rng = np.random.default_rng(seed)
    if x0 is None:
        x0 = rng.standard_normal(nep.n) + 1j * rng.standard_normal(nep.n)
    x = np.asarray(x0, dtype=np.complex128)
    x = x / np.linalg.norm(x)
    rho = rayleigh_functional(nep, x)
    history = []
    best = None
    converged = False
    for k in range(max_iter + 1):
        res = relative_residual(nep, rho, x)
        history.append({"k": k, "rho": float(rho), "rel_residual": res})
        if best is None or res < best[0]:
            best = (res, x.copy(), rho)
        if res <= tol:
            converged = True
            break
        if k == max_iter:
            break
        P.refresh(nep, x, rho)
        try:
            x_new, _ = jd_step(nep, P, x, rho, m)
            rho_new = rayleigh_functional(nep, x_new)
        except (DegenerateNormalizationError, RayleighDomainError):
            break
        x, rho = x_new, rho_new
    res, xb, rhob = best
    pair = EigenpairApprox(x=xb, rho=float(rhob), rel_residual=res)
    return pair, {"iterations": history, "converged": converged}


def lobpcg_solve(
    nep,
    q,
    precond,
    tol=1e-10,
    which="lowest",
    max_iter=300,
    seed=0,
    X0=None,
    delta=1e-2,
):
    """Nonlinear block LOBPCG for the q extreme eigenpairs on J.

    Per column the search subspace is {x, M^{-1}T(rho)x, p}; extraction uses
    the standard (unrefined) Ritz pairs at the extreme end.  Converged
    columns are soft-deflated: kept bit-identical in the basis and never
    updated.  Returns (pairs, record dict).
    """
    verify_definite_type(nep)
    n = nep.n
    rng = np.random.default_rng(seed)
    if X0 is None:
        X0 = rng.standard_normal((n, q)) + 1j * rng.standard_normal((n, q))
    X, _ = kernel.orthonormalize(np.asarray(X0, dtype=np.complex128))
    while X.shape[1] < q:
        extra = rng.standard_normal((n, q - X.shape[1]))
        X, _ = kernel.orthonormalize(np.column_stack([X, extra]))
    rhos = np.array([rayleigh_functional(nep, X[:, i]) for i in range(q)])
    conv = np.zeros(q, dtype=bool)
    X_prev = None
    history = []
    for k in range(max_iter):
        res = np.array(
            [
                0.0 if conv[i] else relative_residual(nep, rhos[i], X[:, i])
                for i in range(q)
            ]
        )
        newly = (~conv) & (res <= tol)
        conv |= newly
        history.append({"k": k, "n_converged": int(conv.sum()), "max_res": float(res.max())})
        if conv.all():
            break
        act = np.nonzero(~conv)[0]
        blocks = []
        if conv.any():
            blocks.append(X[:, conv])
        Xa = X[:, act]
        blocks.append(Xa)
        W = np.column_stack(
            [precond.apply_plain(nep.apply(rhos[i], X[:, i])) for i in act]
        )
        # project out the current block before normalizing, otherwise the
        # informative component is lost to cancellation once residuals shrink
        Qx, _ = kernel.orthonormalize(X)
        W = W - Qx @ (Qx.conj().T @ W)
        nw = np.linalg.norm(W, axis=0)
        nw[nw == 0.0] = 1.0
        blocks.append(W / nw)
        if X_prev is not None:
            Pb = Xa - X_prev[:, act]
            Pb = Pb - Qx @ (Qx.conj().T @ Pb)
            npb = np.linalg.norm(Pb, axis=0)
            if np.any(npb > 0):
                npb[npb == 0.0] = 1.0
                blocks.append(Pb / npb)
        U, _ = kernel.orthonormalize(np.column_stack(blocks))
        ritz = extraction.solve_projected(extraction.project(nep, U), U)
        order = np.argsort(ritz.values)
        if which == "highest":
            order = order[::-1]
        X_prev = X.copy()
        protected = [X[:, i] for i in np.nonzero(conv)[0]]
        taken = 0
        for j in order:
            if taken >= len(act):
                break
            z = ritz.ritz_vector(j)
            z = z / np.linalg.norm(z)
            if protected:
                Qp, _ = kernel.orthonormalize(np.column_stack(protected))
                if extraction.sin_angle(z, Qp) <= delta:
                    continue
            try:
                rho_z = rayleigh_functional(nep, z)
            except RayleighDomainError:
                continue
            i = act[taken]
            X[:, i] = z
            rhos[i] = rho_z
            protected.append(z)
            taken += 1
    pairs = [
        EigenpairApprox(
            x=X[:, i],
            rho=float(rhos[i]),
            rel_residual=relative_residual(nep, rhos[i], X[:, i]),
        )
        for i in range(q)
    ]
    order = np.argsort([p.rho for p in pairs])
    if which == "highest":
        order = order[::-1]
    return [pairs[i] for i in order], {"iterations": history, "converged": bool(conv.all())}
