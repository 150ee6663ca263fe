"""Single-vector minimal-residual eigensolver for the eigenvalue nearest a shift.

Each outer iteration builds the stabilized preconditioned Krylov subspace
augmented with the previous search direction, solves the projected problem,
filters spurious Ritz values by full-space residuals, and extracts a refined
(minimal-residual) eigenvector approximation.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import extraction, subspace
from .errors import RayleighDomainError
from .model import (
    EigenpairApprox,
    normalize,
    rayleigh_functional,
    relative_residual,
    verify_definite_type,
)
from .precond import StabilizedPreconditioner


@dataclass
class PlmrConfig:
    sigma: float
    m: int = 2
    tol: float = 1e-10
    max_iter: int = 100
    drop_tol: float = 0.0
    r: int = None
    s: int = None
    refine: bool = True
    stabilize: bool = True
    seed: int = 0
    m_schedule: object = None  # callable k -> m, overrides fixed m

    def m_at(self, k):
        if self.m_schedule is None:
            return self.m
        return int(self.m_schedule(k))


@dataclass
class ConvergenceRecord:
    iterations: list = field(default_factory=list)
    converged: bool = False

    def log(self, **kw):
        self.iterations.append(kw)

    @property
    def residuals(self):
        return np.array([it["rel_residual"] for it in self.iterations])

    @property
    def n_iterations(self):
        """Outer iterations that built a subspace (the k=0 check is free)."""
        return max(0, len(self.iterations) - 1)


def random_start(n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return x / np.linalg.norm(x)


def solve(nep, config, x0=None, precond=None):
    """Run the solver; returns (EigenpairApprox, ConvergenceRecord).

    An unconverged run (max_iter reached) returns the best iterate seen with
    record.converged False.
    """
    verify_definite_type(nep)
    a, b = nep.interval
    if not (a < config.sigma < b):
        raise ValueError("shift outside the admissible interval")
    if precond is None:
        precond = StabilizedPreconditioner(nep, config.sigma, config.drop_tol)
    if x0 is None:
        x0 = random_start(nep.n, config.seed)
    x = np.asarray(x0, dtype=np.complex128)
    x = x / np.linalg.norm(x)
    rho = rayleigh_functional(nep, x)
    x_prev = None
    record = ConvergenceRecord()
    best = None
    mv0 = nep.matvec_counter.count
    pc0 = precond.apply_count.count

    for k in range(config.max_iter + 1):
        res = relative_residual(nep, rho, x)
        record.log(
            k=k,
            rho=rho,
            rel_residual=res,
            matvecs=nep.matvec_counter.count - mv0,
            precond_applies=precond.apply_count.count - pc0,
            basis_dim=0,
            selected_nu=None,
            refined_sigma_min=None,
        )
        if best is None or res < best[0]:
            best = (res, x.copy(), rho)
        if res <= config.tol:
            record.converged = True
            break
        if k == config.max_iter:
            break

        m_k = config.m_at(k)
        if config.stabilize:
            precond.refresh(nep, x, rho)
        p_prev = None if x_prev is None else x - x_prev
        basis = subspace.build_plmr_subspace(
            nep, precond, x, rho, p_prev, m_k,
            generation=k, stabilized=config.stabilize,
        )
        U = basis.U
        proj = extraction.project(nep, U)
        ritz = extraction.solve_projected(proj, U)
        r, s = (config.r, config.s)
        if r is None or s is None:
            rd, sd = extraction.single_defaults(m_k)
            r = rd if r is None else r
            s = sd if s is None else s
        r = min(r, ritz.count)
        s = min(s, r)
        sel = extraction.filter_and_select(nep, ritz, config.sigma, r, s, 1)
        if not sel:
            break
        nu = float(ritz.values[sel[0]])
        sigma_min = None
        if config.refine:
            sv, Y = extraction.refine(nep, U, nu, 1)
            sigma_min = float(sv[0])
            x_new = U @ Y[:, 0]
        else:
            x_new = ritz.ritz_vector(sel[0])
        try:
            rho_new = rayleigh_functional(nep, x_new)
        except RayleighDomainError:
            rho_new = None
        if rho_new is None and config.refine:
            # refined vector left the Rayleigh domain: retreat to the Ritz pair
            x_new = ritz.ritz_vector(sel[0])
            try:
                rho_new = rayleigh_functional(nep, x_new)
            except RayleighDomainError:
                rho_new = None
        if rho_new is None:
            # keep the current iterate, drop the direction to force a rebuild
            x_prev = None
            continue
        x_new = x_new / np.linalg.norm(x_new)
        x_prev = x
        x = x_new
        rho = rho_new
        record.iterations[-1]["basis_dim"] = basis.dim
        record.iterations[-1]["selected_nu"] = nu
        record.iterations[-1]["refined_sigma_min"] = sigma_min

    res, xb, rhob = best
    pair = EigenpairApprox(x=xb, rho=rhob, rel_residual=res)
    try:
        pair = normalize(nep, pair)
    except Exception:
        pass
    return pair, record


def estimate_order(residuals, lo=1e-13, hi=1e-2):
    """Convergence order as the least-squares slope of log r_{k+1} vs log r_k.

    Uses consecutive residual pairs with both entries inside (lo, hi);
    requires at least 3 such pairs.
    """
    r = np.asarray(residuals, dtype=float)
    xs, ys = [], []
    for k in range(len(r) - 1):
        if lo < r[k] < hi and lo < r[k + 1] < hi:
            xs.append(math.log(r[k]))
            ys.append(math.log(r[k + 1]))
    if len(xs) < 3:
        raise ValueError(f"need at least 3 residual pairs in range, got {len(xs)}")
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)
