"""Search-subspace construction for the single-vector and block solvers.

The single-vector subspace is the preconditioned Krylov space
K_{m+1}(Mdag T(rho), x) plus the previous search direction p = x_k - x_{k-1};
the block variant prepends deflated columns (window + converged iterates) so
that their span survives any column drops, runs the block Krylov recursion on
the active columns only, and appends a least-squares block direction.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .errors import StabilizationDegenerateError


@dataclass
class SubspaceBasis:
    U: np.ndarray
    tags: list = field(default_factory=list)
    generation: int = 0

    @property
    def dim(self):
        return self.U.shape[1]


def _kept_tags(tags, kept):
    return [tags[i] for i in kept]


def build_plmr_subspace(nep, P, x, rho, p_prev, m, generation=0, stabilized=True):
    """Orthonormal basis of {x, w_1, ..., w_m, p_prev}.

    w_{j+1} = Mdag T(rho) w_j starting from w_0 = x; exactly m stabilized
    preconditioner applications.  A Krylov vector that projects to nothing
    new ends the chain early (invariant subspace reached).
    """
    x = np.asarray(x, dtype=np.complex128)
    cols = [x / np.linalg.norm(x)]
    tags = ["krylov"]
    w = cols[0]
    for _ in range(m):
        if stabilized:
            try:
                w = P.apply_stabilized(nep.apply(rho, w))
            except StabilizationDegenerateError:
                w = P.apply_plain(nep.apply(rho, w))
        else:
            w = P.apply_plain(nep.apply(rho, w))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        w = w / nw
        cols.append(w)
        tags.append("krylov")
    if p_prev is not None and np.linalg.norm(p_prev) > 0:
        cols.append(np.asarray(p_prev, dtype=np.complex128))
        tags.append("direction")
    U, kept = kernel.orthonormalize(np.column_stack(cols))
    return SubspaceBasis(U=U, tags=_kept_tags(tags, kept), generation=generation)


def block_direction(X_k, X_prev):
    """Least-squares block direction P = X_k - X_prev G, G = argmin ||X_k - X_prev G||_F.

    Invariant under column reordering or mixing of the previous block; falls
    back to the plain difference when X_prev is rank deficient.
    """
    X_k = np.asarray(X_k)
    X_prev = np.asarray(X_prev)
    if X_prev.size == 0:
        return np.zeros_like(X_k)
    # lstsq uses the pseudoinverse, so rank-deficient history is handled
    G, _, _, _ = np.linalg.lstsq(X_prev, X_k, rcond=None)
    return X_k - X_prev @ G


def build_bplmr_subspace(
    nep, P, X_act, rhos_act, P_block, X_conv=None, W_window=None, m=2, generation=0
):
    """Deflation-aware block basis: [window, converged, Krylov blocks, direction].

    Deflated columns come first so that orthonormalization drops, if any, can
    only affect the expansion columns.  The block Krylov recursion applies
    the stabilized preconditioner to each active column (m * q_act counted
    applications).
    """
    X_act = np.asarray(X_act, dtype=np.complex128)
    if X_act.ndim == 1:
        X_act = X_act[:, None]
    blocks, tags = [], []

    def add(block, tag):
        block = np.asarray(block, dtype=np.complex128)
        if block.ndim == 1:
            block = block[:, None]
        if block.size == 0:
            return
        blocks.append(block)
        tags.extend([tag] * block.shape[1])

    if W_window is not None:
        add(W_window, "deflated-window")
    if X_conv is not None:
        add(X_conv, "converged")
    add(X_act, "krylov")
    W = X_act
    for _ in range(m):
        try:
            W = _precond_block(nep, P, W, rhos_act)
        except StabilizationDegenerateError:
            W = np.column_stack(
                [P.apply_plain(nep.apply(r, W[:, i])) for i, r in enumerate(np.atleast_1d(rhos_act))]
            )
        norms = np.linalg.norm(W, axis=0)
        norms[norms == 0.0] = 1.0
        W = W / norms
        add(W, "krylov")
    if P_block is not None:
        add(P_block, "direction")
    U, kept = kernel.orthonormalize(np.column_stack(blocks))
    return SubspaceBasis(U=U, tags=_kept_tags(tags, kept), generation=generation)


def _precond_block(nep, P, W, rhos):
    """Mdag applied to [T(rho_i) w_i], stabilized column by column.

    Each column keeps its own rank-one projection: the shared q-directional
    projection also strips the cross-column components a column needs to
    correct its own error, which stalls the block iteration on clustered
    eigenvalues when the preconditioner is strong.
    """
    rhos = np.atleast_1d(rhos)
    TW = np.column_stack([nep.apply(rhos[i], W[:, i]) for i in range(W.shape[1])])
    return P.apply_stabilized_columnwise(TW)
