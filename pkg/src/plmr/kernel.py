"""Complex Hermitian matrix kernel.

Dense and CSR-sparse Hermitian storage, matvecs with optional counting,
two-pass orthonormalization with column dropping, small dense Hermitian
eigendecompositions, symmetric-indefinite LDL^T factorization (exact and
incomplete with drop tolerance) reporting inertia, and smallest-singular-
vector extraction through Gram matrices.
"""

import math

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse

from .errors import (
    DimensionMismatchError,
    EmptyBasisError,
    FactorizationBreakdownError,
)

DENSE_EIG_LIMIT = 2000

HERMITIAN_RTOL = 1e-12


class MatvecCounter:
    """Per-run accumulator for matrix-vector products."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, n=1):
        self.count += n

    def reset(self):
        self.count = 0


class HermitianMatrix:
    """Hermitian matrix, stored dense (ndarray) or sparse (CSR).

    A ``counter`` may be attached (e.g. by an assembled T(mu)); each matvec
    then increments it.
    """

    def __init__(self, data, check=True, counter=None):
        if scipy.sparse.issparse(data):
            data = scipy.sparse.csr_matrix(data).astype(np.complex128)
            data.sort_indices()
            self.is_dense = False
        else:
            data = np.asarray(data, dtype=np.complex128)
            if data.ndim != 2 or data.shape[0] != data.shape[1]:
                raise DimensionMismatchError("matrix must be square")
            self.is_dense = True
        self.data = data
        self.n = data.shape[0]
        self.counter = counter
        if check:
            self._check_hermitian()

    def _check_hermitian(self):
        if self.is_dense:
            dev = np.max(np.abs(self.data - self.data.conj().T)) if self.n else 0.0
            fro = np.linalg.norm(self.data)
        else:
            diff = self.data - self.data.getH()
            dev = np.max(np.abs(diff.data)) if diff.nnz else 0.0
            fro = math.sqrt(np.sum(np.abs(self.data.data) ** 2))
        if dev > HERMITIAN_RTOL * max(fro, 1e-300):
            raise ValueError(f"matrix is not Hermitian: deviation {dev:.3e}")

    def matvec(self, x):
        x = np.asarray(x, dtype=np.complex128)
        if x.shape[0] != self.n:
            raise DimensionMismatchError(
                f"dimension mismatch: matrix is {self.n}, vector is {x.shape[0]}"
            )
        if self.counter is not None:
            self.counter.add(1 if x.ndim == 1 else x.shape[1])
        return self.data @ x

    def to_dense(self):
        if self.is_dense:
            return self.data
        return self.data.toarray()

    def frobenius_norm(self):
        if self.is_dense:
            return float(np.linalg.norm(self.data))
        return float(math.sqrt(np.sum(np.abs(self.data.data) ** 2)))

    def diagonal(self):
        return self.data.diagonal()


def matvec(A, x):
    """Apply A to x. Counts on A's attached counter, if any."""
    return A.matvec(x)


def orthonormalize(V, against=None, drop_tol=1e-10):
    """Orthonormalize the columns of V, optionally against an orthonormal block.

    Two passes of classical Gram-Schmidt projection per column; a column is
    dropped when its norm after projection falls below drop_tol times its
    original norm.  Returns (Q, kept) where kept lists the surviving column
    indices of V.

    Raises EmptyBasisError if no column survives.
    """
    if drop_tol <= 0:
        raise ValueError("drop_tol must be positive")
    V = np.asarray(V, dtype=np.complex128)
    if V.ndim == 1:
        V = V[:, None]
    n = V.shape[0]
    cols = []
    kept = []
    ag = None
    if against is not None and np.size(against) > 0:
        ag = np.asarray(against, dtype=np.complex128).reshape(n, -1)
    for j in range(V.shape[1]):
        v = V[:, j].copy()
        orig = np.linalg.norm(v)
        if orig == 0.0:
            continue
        for _ in range(2):
            if ag is not None:
                v -= ag @ (ag.conj().T @ v)
            for q in cols:
                v -= q * np.vdot(q, v)
        nrm = np.linalg.norm(v)
        if nrm <= drop_tol * orig:
            continue
        cols.append(v / nrm)
        kept.append(j)
    if not cols:
        raise EmptyBasisError("all columns dropped during orthonormalization")
    return np.column_stack(cols), kept


def dense_hermitian_eig(A):
    """Full eigendecomposition of a dense Hermitian matrix.

    Returns (theta, V) with eigenvalues sorted descending, so that zero being
    the k-th largest eigenvalue is read off as theta[k-1].
    """
    M = A.to_dense() if isinstance(A, HermitianMatrix) else np.asarray(A)
    if M.shape[0] > DENSE_EIG_LIMIT:
        raise ValueError(f"matrix order {M.shape[0]} exceeds dense limit {DENSE_EIG_LIMIT}")
    w, V = np.linalg.eigh(M)
    return w[::-1].copy(), V[:, ::-1].copy()


def smallest_right_singular_vectors(B, count):
    """Smallest singular values/right vectors of B from the Gram matrix B*B.

    Returns (sigma, Y): singular values ascending and orthonormal right
    singular vectors as columns.  Intended for tall skinny B (p small).
    """
    B = np.asarray(B, dtype=np.complex128)
    p = B.shape[1]
    if count > p:
        raise ValueError(f"requested {count} singular vectors from a {p}-column matrix")
    G = B.conj().T @ B
    G = 0.5 * (G + G.conj().T)
    w, V = np.linalg.eigh(G)
    sig = np.sqrt(np.clip(w[:count], 0.0, None))
    return sig, V[:, :count].copy()


class LdltFactorization:
    """P A P^T = L D L^* with unit lower L and 1x1/2x2 diagonal blocks.

    ``inertia`` is the triple (n_plus, n_minus, n_zero).  ``drop_tolerance``
    zero means the factorization is exact (up to roundoff).
    """

    def __init__(self, n, perm, lower, blocks, inertia, drop_tolerance, scale=None):
        self.n = n
        self.perm = perm  # None means identity
        self.lower = lower  # dense triangular factor or (Lrows, Lvals) column lists
        self.blocks = blocks  # list of (start, size, block) with block 1x1 float or 2x2 array
        self.inertia = inertia
        self.drop_tolerance = drop_tolerance
        self.scale = scale  # equilibration: the factored matrix is S A S

    def solve(self, b):
        b = np.asarray(b, dtype=np.complex128)
        single = b.ndim == 1
        B = b.reshape(self.n, -1).copy()
        if self.scale is not None:
            B *= self.scale[:, None]
        if self.perm is not None:
            B = B[self.perm]
        if isinstance(self.lower, tuple):
            self._solve_sparse(B)
        else:
            self._solve_dense(B)
        if self.perm is not None:
            out = np.empty_like(B)
            out[self.perm] = B
            B = out
        if self.scale is not None:
            B *= self.scale[:, None]
        return B[:, 0] if single else B

    def _solve_dense(self, B):
        L = self.lower
        scipy.linalg.solve_triangular(
            L, B, lower=True, unit_diagonal=True, overwrite_b=True
        )
        self._block_solve(B)
        scipy.linalg.solve_triangular(
            L.conj().T, B, lower=False, unit_diagonal=True, overwrite_b=True
        )

    def _solve_sparse(self, B):
        Lrows, Lvals = self.lower
        n = self.n
        # forward: L z = b (column-oriented)
        for j in range(n):
            rows = Lrows[j]
            if rows.size:
                B[rows] -= np.outer(Lvals[j], B[j])
        self._block_solve(B)
        # backward: L^* x = y
        for j in range(n - 1, -1, -1):
            rows = Lrows[j]
            if rows.size:
                B[j] -= Lvals[j].conj() @ B[rows]

    def _block_solve(self, B):
        for start, size, blk in self.blocks:
            if size == 1:
                B[start] /= blk
            else:
                B[start : start + 2] = np.linalg.solve(blk, B[start : start + 2])


def ldlt_solve(F, b):
    """Solve A x = b given an LdltFactorization of A."""
    return F.solve(b)


def ldlt_factor(A, drop_tol=0.0):
    """LDL^T factorization of a Hermitian matrix with inertia.

    drop_tol == 0 on dense storage uses a pivoted exact factorization (LAPACK
    Bunch-Kaufman via scipy).  Otherwise a left-looking sparse elimination is
    performed after symmetric equilibration and reverse Cuthill-McKee
    reordering, with 1x1/2x2 pivots restricted to the diagonal block,
    threshold dropping of fill, and a static diagonal perturbation fallback
    for failed pivots.
    """
    if not isinstance(A, HermitianMatrix):
        A = HermitianMatrix(A)
    if drop_tol < 0:
        raise ValueError("drop_tol must be nonnegative")
    if A.is_dense and drop_tol == 0.0:
        return _ldlt_dense_exact(A)
    return _ldlt_sparse(A, drop_tol)


def _block_inertia(blocks, zero_tol):
    np_, nm, nz = 0, 0, 0
    for _, size, blk in blocks:
        if size == 1:
            if abs(blk) <= zero_tol:
                nz += 1
            elif blk > 0:
                np_ += 1
            else:
                nm += 1
        else:
            for ev in np.linalg.eigvalsh(blk):
                if abs(ev) <= zero_tol:
                    nz += 1
                elif ev > 0:
                    np_ += 1
                else:
                    nm += 1
    return (np_, nm, nz)


def _ldlt_dense_exact(A):
    M = A.to_dense()
    n = A.n
    lu, d, perm = scipy.linalg.ldl(M, hermitian=True)
    L = lu[perm]
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and d[i, i + 1] != 0:
            blocks.append((i, 2, np.array(d[i : i + 2, i : i + 2], dtype=np.complex128)))
            i += 2
        else:
            blocks.append((i, 1, float(d[i, i].real)))
            i += 1
    zero_tol = n * np.finfo(float).eps * max(np.linalg.norm(M), 1e-300)
    inertia = _block_inertia(blocks, zero_tol)
    return LdltFactorization(n, np.asarray(perm), L, blocks, inertia, 0.0)


_BK_ALPHA = (1.0 + math.sqrt(17.0)) / 8.0


def _ldlt_sparse(A, drop_tol):
    """Left-looking incomplete LDL^T with diagonal-block pivoting (no permutation).

    The matrix is symmetrically equilibrated first (factoring S A S with
    S = diag(1/sqrt(|a_ii|))), which makes the drop tolerance invariant under
    diagonal scaling of the problem, and reordered by reverse Cuthill-McKee
    to keep the fill (and hence the dropped mass) small.  Both are
    congruences/permutations, so the inertia is unchanged and ``solve``
    undoes them.
    """
    Ac = scipy.sparse.csc_matrix(A.data)
    Ac.sort_indices()
    n = A.n
    diag = np.abs(Ac.diagonal().real)
    cn0 = np.sqrt(np.asarray(abs(Ac).power(2).sum(axis=0)).ravel())
    ref = np.where(diag > 0, diag, np.where(cn0 > 0, cn0, 1.0))
    s = 1.0 / np.sqrt(ref)
    S = scipy.sparse.diags(s)
    Ac = scipy.sparse.csc_matrix(S @ Ac @ S)
    perm = np.asarray(
        scipy.sparse.csgraph.reverse_cuthill_mckee(Ac, symmetric_mode=True),
        dtype=np.intp,
    )
    Ac = scipy.sparse.csc_matrix(Ac[perm][:, perm])
    Ac.sort_indices()
    fro = scipy.sparse.linalg.norm(Ac)
    perturbation = 1e-8 * max(fro, 1e-300)
    colnorm = np.sqrt(np.asarray(abs(Ac).power(2).sum(axis=0)).ravel())

    indptr, indices, data = Ac.indptr, Ac.indices, Ac.data
    Lrows = [None] * n
    Lvals = [None] * n
    Wvals = [None] * n  # unscaled eliminated columns, (L D) columnwise
    rowlist = [[] for _ in range(n)]  # (col, position in Lrows[col])
    blocks = []

    w1 = np.zeros(n, dtype=np.complex128)
    w2 = np.zeros(n, dtype=np.complex128)

    def gather_column(j, w):
        """Accumulate the updated lower part of column j into w; return touched rows."""
        lo, hi = indptr[j], indptr[j + 1]
        arows = indices[lo:hi]
        mask = arows >= j
        arows = arows[mask]
        w[arows] = data[lo:hi][mask]
        pieces = [arows]
        for k, pos in rowlist[j]:
            ljk = Lvals[k][pos]
            rk = Lrows[k]
            w[rk] -= Wvals[k] * np.conj(ljk)
            pieces.append(rk)
        if len(pieces) > 1:
            return np.unique(np.concatenate(pieces))
        return arows

    def store_column(j, rows, lcol, wcol):
        Lrows[j] = rows
        Lvals[j] = lcol
        Wvals[j] = wcol
        for pos, i in enumerate(rows):
            rowlist[int(i)].append((j, pos))

    j = 0
    while j < n:
        touched1 = gather_column(j, w1)
        off = touched1[touched1 > j]
        dj = w1[j].real
        colmax = float(np.max(np.abs(w1[off]))) if off.size else 0.0
        done = False
        if colmax > 0.0 and abs(dj) < _BK_ALPHA * colmax and j + 1 < n:
            e21 = w1[j + 1]
            touched2 = gather_column(j + 1, w2)
            d2 = w2[j + 1].real
            det = dj * d2 - abs(e21) ** 2
            scale = max(abs(dj), abs(d2), abs(e21), 1e-300)
            if abs(det) > 1e-12 * scale * scale:
                E = np.array([[dj, np.conj(e21)], [e21, d2]], dtype=np.complex128)
                rows = np.unique(np.concatenate([touched1, touched2]))
                rows = rows[rows > j + 1]
                Wblk = np.column_stack([w1[rows], w2[rows]])
                Lblk = Wblk @ np.linalg.inv(E)
                if drop_tol > 0:
                    # keep fill that is significant in either the unscaled
                    # column or the unit factor: a small pivot makes |L| large
                    # even when |W| is small, and dropping it destroys the
                    # factorization of an indefinite matrix
                    ref = drop_tol * max(colnorm[j], colnorm[j + 1])
                    keep = (np.max(np.abs(Wblk), axis=1) >= ref) | (
                        np.max(np.abs(Lblk), axis=1) >= drop_tol
                    )
                else:
                    keep = np.max(np.abs(Wblk), axis=1) > 0
                rows_k = rows[keep]
                store_column(j, rows_k, np.ascontiguousarray(Lblk[keep, 0]),
                             np.ascontiguousarray(Wblk[keep, 0]))
                store_column(j + 1, rows_k.copy(), np.ascontiguousarray(Lblk[keep, 1]),
                             np.ascontiguousarray(Wblk[keep, 1]))
                blocks.append((j, 2, E))
                w1[touched1] = 0.0
                w2[touched2] = 0.0
                j += 2
                done = True
            else:
                # 2x2 pivot numerically singular: discard the scratch column
                # and fall back to a perturbed 1x1 pivot
                w2[touched2] = 0.0
        if not done:
            if abs(dj) <= 1e-14 * max(colmax, fro / max(math.sqrt(n), 1.0), 1e-300):
                dj = dj + perturbation if dj >= 0 else dj - perturbation
                if dj == 0.0:
                    raise FactorizationBreakdownError(j)
            wcol = w1[off]
            if drop_tol > 0:
                keep = (np.abs(wcol) >= drop_tol * colnorm[j]) | (
                    np.abs(wcol / dj) >= drop_tol
                )
            else:
                keep = np.abs(wcol) > 0
            rows_k = off[keep]
            wk = np.ascontiguousarray(wcol[keep])
            store_column(j, rows_k, wk / dj, wk)
            blocks.append((j, 1, float(dj)))
            w1[touched1] = 0.0
            j += 1

    zero_tol = n * np.finfo(float).eps * max(fro, 1e-300)
    inertia = _block_inertia(blocks, zero_tol)
    Lrows = [np.asarray(r, dtype=np.intp) for r in Lrows]
    return LdltFactorization(n, perm, (Lrows, Lvals), blocks, inertia, drop_tol, scale=s)


def read_matrix_market(path, counter=None):
    """Load a HermitianMatrix from a Matrix Market file."""
    M = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(M):
        M = scipy.sparse.csr_matrix(M)
    return HermitianMatrix(M, counter=counter)


def write_matrix_market(path, A):
    """Write a HermitianMatrix in coordinate complex hermitian format."""
    data = A.data if not A.is_dense else scipy.sparse.csr_matrix(A.data)
    scipy.io.mmwrite(str(path), data, symmetry="hermitian")
