"""Block minimal-residual solver with soft deflation and a moving-window
sweep for many successive eigenvalues.

The block algorithm finds the q eigenvalues closest to the shift.  Converged
columns are soft-deflated: they stay in the search subspace bit-identical but
are no longer updated.  The sweep strings block solves together, retiring
old eigenvector groups from a bounded deflation window and moving the shift
past the frontier of computed eigenvalues.
"""

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import extraction, kernel, subspace
from .errors import RayleighDomainError, StabilizationDegenerateError
from .model import (
    EigenpairApprox,
    normalize,
    rayleigh_functional,
    relative_residual,
    verify_definite_type,
)
from .precond import StabilizedPreconditioner
from .single import ConvergenceRecord, random_start


@dataclass
class BplmrConfig:
    sigma: float
    q: int = 4
    m: int = 2
    tol: float = 1e-10
    max_iter: int = 100
    drop_tol: float = 0.0
    r: int = None
    s: int = None
    delta: float = 1e-2
    group_threshold: float = 1e-8
    restore_value_tol: float = 1e-6
    restore_angle_tol: float = 1e-4
    seed: int = 0
    min_converged: int = None  # stop once this many columns converge (default q)


class DeflationWindow:
    """Bounded set of retired converged eigenvector groups.

    Capacity is counted in groups; when exceeded, the oldest group is
    archived (written to disk when archive_dir is set, kept in a list
    otherwise) and removed from the active window.
    """

    def __init__(self, capacity=4, archive_dir=None):
        self.capacity = capacity
        self.groups = []   # list of dicts: values, X, meta
        self.retired = []  # metadata of archived groups
        self.archive_dir = Path(archive_dir) if archive_dir else None
        self._next_id = 0

    @property
    def W(self):
        if not self.groups:
            return None
        return np.column_stack([g["X"] for g in self.groups])

    @property
    def values(self):
        if not self.groups:
            return np.array([])
        return np.concatenate([g["values"] for g in self.groups])

    def push(self, values, X, meta=None):
        self.groups.append(
            {"values": np.asarray(values, dtype=float), "X": np.asarray(X), "meta": dict(meta or {}), "id": self._next_id}
        )
        self._next_id += 1
        while len(self.groups) > self.capacity:
            self._retire(self.groups.pop(0))

    def _retire(self, group):
        entry = {"id": group["id"], "values": group["values"].tolist(), "meta": group["meta"]}
        if self.archive_dir is not None:
            self.archive_dir.mkdir(parents=True, exist_ok=True)
            fname = f"group_{group['id']:05d}.npz"
            np.savez_compressed(
                self.archive_dir / fname, values=group["values"], X=group["X"]
            )
            entry["file"] = fname
            index = self.archive_dir / "index.json"
            existing = json.loads(index.read_text()) if index.exists() else []
            existing.append({k: entry[k] for k in ("id", "values", "meta", "file")})
            index.write_text(json.dumps(existing, indent=2))
        else:
            entry["X"] = group["X"]
        self.retired.append(entry)


def solve_block(nep, config, window=None, X0=None, precond=None):
    """Find the q eigenpairs nearest config.sigma; returns (pairs, record).

    pairs are ordered by |rho - sigma| ascending.  An unconverged run (max
    iterations) returns the current block flagged via record.converged.
    """
    verify_definite_type(nep)
    a, b = nep.interval
    sigma = config.sigma
    if not (a < sigma < b):
        raise ValueError("shift outside the admissible interval")
    q = config.q
    n = nep.n
    if precond is None:
        precond = StabilizedPreconditioner(nep, sigma, config.drop_tol)
    rng = np.random.default_rng(config.seed)
    if X0 is None:
        X0 = rng.standard_normal((n, q)) + 1j * rng.standard_normal((n, q))
    X0 = np.asarray(X0, dtype=np.complex128)
    X, _ = kernel.orthonormalize(X0)
    while X.shape[1] < q:
        fill = rng.standard_normal((n, q - X.shape[1]))
        X, _ = kernel.orthonormalize(np.column_stack([X, fill]))
    rhos = np.array([rayleigh_functional(nep, X[:, i]) for i in range(q)])
    res = np.array([relative_residual(nep, rhos[i], X[:, i]) for i in range(q)])
    # converged columns live at the front; d counts them
    order = np.argsort(np.where(res <= config.tol, 0, 1), kind="stable")
    X, rhos, res = X[:, order], rhos[order], res[order]
    d = int(np.sum(res <= config.tol))
    W = window.W if window is not None else None
    w_values = window.values if window is not None else np.array([])
    X_prev_act = None
    need = q if config.min_converged is None else min(config.min_converged, q)
    record = ConvergenceRecord()
    mv0 = nep.matvec_counter.count
    pc0 = precond.apply_count.count

    for k in range(config.max_iter):
        record.log(
            k=k,
            rho=list(map(float, rhos)),
            rel_residual=float(np.max(res[d:])) if d < q else 0.0,
            matvecs=nep.matvec_counter.count - mv0,
            precond_applies=precond.apply_count.count - pc0,
            basis_dim=0,
            n_converged=d,
        )
        if d >= need:
            record.converged = True
            break

        X_act = X[:, d:]
        rhos_act = rhos[d:]
        try:
            precond.refresh(nep, X_act, rhos_act)
        except StabilizationDegenerateError:
            pass  # basis construction falls back to plain solves per column
        P_act = None
        if X_prev_act is not None and X_prev_act.shape[1]:
            P_act = subspace.block_direction(X_act, X_prev_act)
            if np.linalg.norm(P_act) == 0.0:
                P_act = None
        basis = subspace.build_bplmr_subspace(
            nep,
            precond,
            X_act,
            rhos_act,
            P_act,
            X_conv=X[:, :d] if d else None,
            W_window=W,
            m=config.m,
            generation=k,
        )
        U = basis.U
        record.iterations[-1]["basis_dim"] = basis.dim
        ritz = extraction.solve_projected(extraction.project(nep, U), U)

        # restore converged + window pairs so they are not re-selected
        prot_vals = np.concatenate([w_values, rhos[:d]]) if (len(w_values) or d) else None
        prot_X = None
        if W is not None and d:
            prot_X = np.column_stack([W, X[:, :d]])
        elif W is not None:
            prot_X = W
        elif d:
            prot_X = X[:, :d]
        expected_restored = (W.shape[1] if W is not None else 0) + d
        if prot_vals is not None and prot_X is not None:
            restored = extraction.restore_converged(
                ritz, prot_vals, prot_X,
                config.restore_value_tol, config.restore_angle_tol,
            )
            if int(restored.sum()) != expected_restored:
                warnings.warn(
                    f"restored {int(restored.sum())} Ritz pairs, expected "
                    f"{expected_restored}",
                    stacklevel=2,
                )
        else:
            restored = np.zeros(ritz.count, dtype=bool)

        q_act = q - d
        r, s = config.r, config.s
        if r is None or s is None:
            rd, sd = extraction.block_defaults(config.m, q_act)
            r = rd if r is None else r
            s = sd if s is None else s
        avail = int((~restored).sum())
        r = min(r, avail)
        s = min(s, r)
        sel = extraction.filter_and_select(
            nep, ritz, sigma, r, s, q_act, exclude=restored
        )
        if len(sel) < q_act:
            warnings.warn(
                f"only {len(sel)} of {q_act} candidate Ritz values available",
                stacklevel=2,
            )
        groups = extraction.group_values(
            ritz.values[sel], config.group_threshold, nep.interval
        )

        X_old_act = X_act.copy()
        protected_cols = [] if prot_X is None else [prot_X]
        accepted = []   # (x, rho)
        for grp in groups:
            gsize = len(grp)
            gvals = ritz.values[np.asarray(sel)[grp]]
            nu_rep = float(gvals[np.argmin(np.abs(gvals - sigma))])
            n_cand = U.shape[1]
            sv, Y = extraction.refine(nep, U, nu_rep, n_cand)
            got = 0
            best_rejected = None
            for i in range(n_cand):
                if got >= gsize:
                    break
                z = U @ Y[:, i]
                z = z / np.linalg.norm(z)
                prot = (
                    np.column_stack(protected_cols) if protected_cols else None
                )
                if not extraction.accept_candidate(z, prot, config.delta):
                    if best_rejected is None:
                        best_rejected = z
                    continue
                try:
                    rho_z = rayleigh_functional(nep, z)
                except RayleighDomainError:
                    continue
                accepted.append((z, rho_z))
                protected_cols.append(z[:, None])
                got += 1
            while got < gsize and best_rejected is not None:
                # candidate exhaustion: reuse the best rejected one and warn
                warnings.warn("candidate exhaustion in group refinement", stacklevel=2)
                try:
                    rho_z = rayleigh_functional(nep, best_rejected)
                except RayleighDomainError:
                    break
                accepted.append((best_rejected, rho_z))
                got += 1

        if not accepted:
            break
        # reorder new approximations by |rho - sigma|
        accepted.sort(key=lambda t: abs(t[1] - sigma))
        n_new = min(len(accepted), q_act)
        for i in range(n_new):
            X[:, d + i] = accepted[i][0]
            rhos[d + i] = accepted[i][1]
        res[d:] = [
            relative_residual(nep, rhos[i], X[:, i]) for i in range(d, q)
        ]
        # move newly converged active columns to the front of the active part
        act_order = np.argsort(
            np.where(res[d:] <= config.tol, 0, 1), kind="stable"
        )
        X[:, d:] = X[:, d + act_order]
        rhos[d:] = rhos[d + act_order]
        res[d:] = res[d + act_order]
        n_newly = int(np.sum(res[d:] <= config.tol))
        X_prev_act = X_old_act[:, act_order][:, n_newly:] if X_old_act.shape[1] else None
        d += n_newly

    if d >= need and not record.converged:
        record.converged = True
    pairs = []
    for i in range(q):
        pair = EigenpairApprox(x=X[:, i], rho=float(rhos[i]), rel_residual=float(res[i]))
        try:
            pair = normalize(nep, pair)
        except Exception:
            pass
        pairs.append(pair)
    pairs.sort(key=lambda p: abs(p.rho - sigma))
    return pairs, record


def _distinct_descending(values, threshold, interval):
    """Distinct values (per relative grouping threshold), largest first."""
    groups = extraction.group_values(values, threshold, interval)
    reps = [float(np.mean(np.asarray(values)[g])) for g in groups]
    return sorted(reps, reverse=True)


@dataclass
class SweepResult:
    eigenvalues: np.ndarray
    shifts: list
    audit: dict = None
    groups: list = field(default_factory=list)


def sweep(
    nep,
    q,
    n_total,
    sigma_start=None,
    m=2,
    drop_tol=0.0,
    tol=1e-10,
    window_capacity=4,
    guards=2,
    max_iter=100,
    seed=0,
    archive_dir=None,
    oracle_values=None,
    group_threshold=1e-8,
):
    """Compute the n_total lowest eigenvalues in groups of q, sweeping upward.

    Each group runs the block solver with block size q + guards; the guard
    pairs are not reported but warm-start the next group.  The preconditioner
    is refactored at every group shift.  When oracle_values is provided an
    audit of missed/repeated eigenvalues is attached.
    """
    verify_definite_type(nep)
    a, b = nep.interval
    if sigma_start is None:
        sigma_start = a + min(1e-6 * max(1.0, abs(a)), 0.25 * (b - a))
    window = DeflationWindow(capacity=window_capacity, archive_dir=archive_dir)
    sigma = float(sigma_start)
    results = []
    shifts = []
    group_records = []
    X_start = None
    rng = np.random.default_rng(seed)
    qb = q + guards
    while len(results) < n_total:
        shifts.append(sigma)
        cfg = BplmrConfig(
            sigma=sigma, q=qb, m=m, tol=tol, drop_tol=drop_tol,
            max_iter=max_iter, seed=seed, group_threshold=group_threshold,
            min_converged=q,
        )
        precond = StabilizedPreconditioner(nep, sigma, drop_tol)
        pairs, record = solve_block(nep, cfg, window=window, X0=X_start, precond=precond)
        if not record.converged:
            # retry once with a larger subspace
            cfg.m = m + 2
            pairs, record = solve_block(nep, cfg, window=window, X0=X_start, precond=precond)
        conv_pairs = sorted(
            (p for p in pairs if p.rel_residual <= tol), key=lambda p: p.rho
        )
        if not conv_pairs:
            warnings.warn(
                f"sweep group at shift {sigma!r} failed to converge", stacklevel=2
            )
            break
        # report only the q lowest converged pairs; leftover converged pairs
        # warm-start the next group and are reported there
        keep = conv_pairs[:q]
        keep_set = {id(p) for p in keep}
        guards_pairs = sorted(
            (p for p in pairs if id(p) not in keep_set), key=lambda p: p.rho
        )
        take = min(len(keep), n_total - len(results))
        results.extend(p.rho for p in keep[:take])
        group_records.append(
            {
                "sigma": sigma,
                "eigenvalues": [p.rho for p in keep],
                "iterations": record.n_iterations,
                "converged": record.converged,
            }
        )
        window.push(
            [p.rho for p in keep],
            np.column_stack([p.x / np.linalg.norm(p.x) for p in keep]),
            meta={"sigma": sigma, "drop_tol": drop_tol,
                  "residuals": [p.rel_residual for p in keep]},
        )
        if len(results) >= n_total:
            break
        # place the next shift between the last reported value and the next
        # computed one (from the guard pairs) so the preconditioner separates
        # the coming group from what the window already holds
        top = max(results)
        above = [p.rho for p in guards_pairs if p.rho > top]
        if above:
            sigma_new = 0.5 * (top + min(above))
        else:
            distinct = _distinct_descending(
                np.asarray(results), group_threshold, nep.interval
            )
            if len(distinct) >= 2:
                sigma_new = top + 0.5 * (distinct[0] - distinct[1])
            else:
                sigma_new = top
        # keep the sweep moving strictly right
        sigma = max(sigma_new, np.nextafter(sigma, b))
        if not (a < sigma < b):
            break
        gcols = [p.x / np.linalg.norm(p.x) for p in guards_pairs]
        fill = rng.standard_normal((nep.n, qb - len(gcols)))
        X_start = np.column_stack(gcols + [fill]) if gcols else fill
    eigenvalues = np.array(sorted(results))
    audit = None
    if oracle_values is not None:
        audit = audit_against_oracle(eigenvalues, np.asarray(oracle_values)[: len(eigenvalues)])
    return SweepResult(eigenvalues=eigenvalues, shifts=shifts, audit=audit, groups=group_records)


def audit_against_oracle(computed, oracle, rel_tol=1e-6):
    """Match two sorted eigenvalue lists; count missed and repeated entries.

    Greedy one-to-one matching within rel_tol relative distance.  A computed
    value with no available oracle partner counts as repeated (or spurious);
    an unmatched oracle value counts as missed.
    """
    computed = np.sort(np.asarray(computed, dtype=float))
    oracle = np.sort(np.asarray(oracle, dtype=float))
    used = np.zeros(len(oracle), dtype=bool)
    repeated = 0
    matches = []
    for c in computed:
        scale = max(1.0, abs(c))
        best, best_gap = -1, np.inf
        for j in range(len(oracle)):
            if used[j]:
                continue
            gap = abs(oracle[j] - c)
            if gap < best_gap:
                best, best_gap = j, gap
        if best >= 0 and best_gap <= rel_tol * scale:
            used[best] = True
            matches.append((float(c), float(oracle[best])))
        else:
            repeated += 1
    missed = int((~used).sum())
    return {
        "missed": missed,
        "repeated": repeated,
        "matched": len(matches),
        "max_match_error": max((abs(c - o) for c, o in matches), default=0.0),
    }
