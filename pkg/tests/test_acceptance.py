"""Acceptance gate: eight end-to-end criteria, one pass/fail line each.

Each test prints exactly one line ``ACCEPTANCE <k> (<name>): PASS|FAIL`` so the
gate can be read off a test log at a glance.  All tolerances and iteration
bounds are fixed here; the configurations are frozen known-good settings for
the small problem scales used.
"""

import time

import numpy as np
import pytest

from plmr import baselines, block, extraction, gallery, oracle, single, subspace
from plmr.model import (
    normalize,
    rayleigh_functional,
    relative_residual,
    verify_definite_type,
)
from plmr.precond import StabilizedPreconditioner


def _report(k, name, ok, detail=""):
    line = f"ACCEPTANCE {k} ({name}): {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  [{detail}]"
    print(line, flush=True)
    assert ok, line


def test_criterion_1_reference_eigenvalue_reproduction():
    t0 = time.time()
    checks = []

    # string, n = 10000, shift 4.9e7: the printed reference value 48974187.5
    # is a truncation; a block of size 2 brackets the shift from both sides
    nep = gallery.string(10000)
    cfg = block.BplmrConfig(sigma=4.9e7, q=2, m=2, tol=1e-12, max_iter=66,
                            drop_tol=0.06, seed=0)
    pairs, rec = block.solve_block(nep, cfg)
    hit = any(abs(p.rho - 48974187.5) < 0.1 for p in pairs)
    checks.append(("string", hit and rec.converged and rec.n_iterations <= 66))

    # artificial, g = 127, shift 0.2 (reference prints 0.19999002)
    nep = gallery.artificial(127)
    cfg = single.PlmrConfig(sigma=0.2, m=2, tol=1e-10, max_iter=60,
                            drop_tol=0.01, seed=0)
    pair, rec = single.solve(nep, cfg)
    checks.append((
        "artificial",
        rec.converged and abs(pair.rho - 0.19999002) <= 1e-8 and rec.n_iterations <= 60,
    ))

    # pdde, g = 200, shift 0 (reference prints 0.00149342689); the drop
    # tolerance is chosen for equivalent factor quality under this
    # incomplete-LDL^T variant
    nep = gallery.pdde(200)
    cfg = single.PlmrConfig(sigma=0.0, m=2, tol=1e-10, max_iter=42,
                            drop_tol=1e-4, seed=0)
    pair, rec = single.solve(nep, cfg)
    checks.append((
        "pdde",
        rec.converged and abs(pair.rho - 0.00149342689) <= 2e-11 and rec.n_iterations <= 42,
    ))

    ok = all(c for _, c in checks)
    detail = ", ".join(f"{n}={'ok' if c else 'BAD'}" for n, c in checks)
    _report(1, "reference eigenvalue reproduction", ok,
            f"{detail}, {time.time() - t0:.0f}s")


def test_criterion_2_oracle_equivalence():
    t0 = time.time()
    ok = True
    detail = []

    # diagonal hyperbolic n = 100: solver values vs the inertia oracle
    nep = gallery.diag_hyperbolic(n=100, seed=0)
    ovals = oracle.enumerate_eigenvalues(nep)
    for sigma in (0.3, 0.7):
        cfg = single.PlmrConfig(sigma=sigma, m=2, tol=1e-10, max_iter=60, seed=0)
        pair, rec = single.solve(nep, cfg)
        gap = np.min(np.abs(ovals - pair.rho))
        ok &= rec.converged and gap <= 1e-8 * max(1.0, abs(pair.rho))
    cfg = block.BplmrConfig(sigma=0.5, q=4, m=2, tol=1e-10, max_iter=80, seed=0)
    pairs, rec = block.solve_block(nep, cfg)
    for p in pairs:
        gap = np.min(np.abs(ovals - p.rho))
        ok &= rec.converged and gap <= 1e-8 * max(1.0, abs(p.rho))
    detail.append(f"diag-hyperbolic={'ok' if ok else 'BAD'}")

    # string n = 400: sweep of the lowest 50 audited against the oracle
    nep = gallery.string(400)
    ovals = oracle.enumerate_eigenvalues(nep, max_count=52)
    res = block.sweep(nep, q=5, n_total=50, m=2, tol=1e-12, seed=0,
                      oracle_values=ovals[:50])
    clean = res.audit["missed"] == 0 and res.audit["repeated"] == 0
    rel_err = np.max(np.abs(res.eigenvalues - ovals[:50]) / np.abs(ovals[:50]))
    ok &= clean and rel_err <= 1e-8
    detail.append(f"string sweep missed={res.audit['missed']} "
                  f"repeated={res.audit['repeated']} relerr={rel_err:.1e}")

    _report(2, "oracle equivalence", ok, ", ".join(detail) + f", {time.time() - t0:.0f}s")


def test_criterion_3_refinement_ablation():
    t0 = time.time()
    nep = gallery.string(400)
    sigma, lam, td = 200200.0, 198866.9721887, 0.5
    counts = {}
    for refine in (True, False):
        n_ok = 0
        for seed in range(20):
            cfg = single.PlmrConfig(sigma=sigma, m=2, tol=1e-10, max_iter=100,
                                    drop_tol=td, seed=seed, refine=refine)
            pair, rec = single.solve(nep, cfg)
            if rec.converged and abs(pair.rho - lam) <= 1e-6 * lam:
                n_ok += 1
        counts[refine] = n_ok
    ok = counts[False] < 16 and counts[True] >= 18 and counts[True] >= counts[False]
    _report(3, "refinement ablation", ok,
            f"refined {counts[True]}/20, no-refine {counts[False]}/20, "
            f"{time.time() - t0:.0f}s")


def test_criterion_4_convergence_order_slopes():
    t0 = time.time()
    probs = [
        ("string", gallery.string(400), 2e5, 0.3),
        ("artificial", gallery.artificial(31), 0.2, 0.05),
        ("diag-hyperbolic", gallery.diag_hyperbolic(100, seed=0, conjugate=True), 0.5, 0.1),
    ]
    fixed_ok = True
    n_super = 0
    detail = []
    for name, nep, sigma, td in probs:
        cfg = single.PlmrConfig(sigma=sigma, m=2, tol=1e-13, max_iter=60,
                                drop_tol=td, seed=0)
        _, rec = single.solve(nep, cfg)
        slope_fixed = single.estimate_order(rec.residuals)
        fixed_ok &= 0.8 <= slope_fixed <= 1.3
        cfg = single.PlmrConfig(sigma=sigma, m=2, tol=1e-13, max_iter=12,
                                drop_tol=td, seed=0,
                                m_schedule=lambda k: min(2 ** (k + 1), 64))
        _, rec = single.solve(nep, cfg)
        try:
            slope_dbl = single.estimate_order(rec.residuals, lo=1e-16, hi=0.5)
        except ValueError:
            slope_dbl = float("nan")
        if slope_dbl >= 1.5:
            n_super += 1
        detail.append(f"{name}: fixed {slope_fixed:.2f} doubling {slope_dbl:.2f}")
    ok = fixed_ok and n_super >= 2
    _report(4, "convergence-order slopes", ok,
            "; ".join(detail) + f", {time.time() - t0:.0f}s")


def test_criterion_5_jd_iterate_containment():
    t0 = time.time()
    worst = 0.0
    for nep, sigma in [
        (gallery.string(400), 2e5),
        (gallery.diag_hyperbolic(100, seed=0, conjugate=True), 0.5),
    ]:
        for m in (2, 4):
            P = StabilizedPreconditioner(nep, sigma, 0.0)
            x = single.random_start(nep.n, seed=3)
            rho = rayleigh_functional(nep, x)
            for _ in range(5):
                P.refresh(nep, x, rho)
                xj, _ = baselines.jd_step(nep, P, x, rho, m)
                basis = subspace.build_plmr_subspace(nep, P, x, rho, None, m)
                worst = max(worst, extraction.sin_angle(xj, basis.U))
                sv, Y = extraction.refine(nep, basis.U, rho, 1)
                x = basis.U @ Y[:, 0]
                x = x / np.linalg.norm(x)
                rho = rayleigh_functional(nep, x)
    ok = worst <= 1e-6
    _report(5, "JD iterate containment", ok,
            f"worst sin {worst:.1e}, {time.time() - t0:.0f}s")


def test_criterion_6_stabilization_necessity():
    t0 = time.time()
    g = 12
    nep = gallery.laplace2d(g)

    # rank degeneracy with the exact factor and rho pinned at sigma
    sigma, m = 1.0, 2
    P = StabilizedPreconditioner(nep, sigma, 0.0)
    x = single.random_start(nep.n, seed=0)
    P.refresh(nep, x, sigma)
    p_prev = single.random_start(nep.n, seed=1)
    b_un = subspace.build_plmr_subspace(nep, P, x, sigma, p_prev, m, stabilized=False)
    b_st = subspace.build_plmr_subspace(nep, P, x, sigma, p_prev, m, stabilized=True)
    rank_ok = b_un.dim <= 2 and b_st.dim == m + 1

    # stagnation: start at a two-eigenvector mix whose Rayleigh quotient
    # equals the shift exactly; the unstabilized chain cannot leave span{x}
    def vec(i, j):
        s = np.sin(np.arange(1, g + 1) * i * np.pi / (g + 1))
        t = np.sin(np.arange(1, g + 1) * j * np.pi / (g + 1))
        v = np.outer(s, t).ravel()
        return v / np.linalg.norm(v)

    lam = lambda i, j: (4 * np.sin(i * np.pi / (2 * (g + 1))) ** 2
                        + 4 * np.sin(j * np.pi / (2 * (g + 1))) ** 2)
    x0 = (vec(2, 3) + vec(5, 4)) / np.sqrt(2)
    sig = 0.5 * (lam(2, 3) + lam(5, 4))
    runs = {}
    for stab in (True, False):
        cfg = single.PlmrConfig(sigma=sig, m=2, tol=1e-10, max_iter=55,
                                drop_tol=0.0, seed=0, stabilize=stab)
        _, rec = single.solve(nep, cfg, x0=x0)
        runs[stab] = rec
    stag_ok = (runs[True].converged
               and not runs[False].converged
               and runs[False].n_iterations >= 50)
    ok = rank_ok and stag_ok
    _report(6, "stabilization necessity", ok,
            f"ranks {b_un.dim}/{b_st.dim}, stabilized iters "
            f"{runs[True].n_iterations}, unstabilized stagnated "
            f"{runs[False].n_iterations}, {time.time() - t0:.0f}s")


def test_criterion_7_semi_simple_recovery():
    t0 = time.time()

    # Laplace2D 20x20: the lowest 40 eigenvalues carry the analytic
    # multiplicity pattern exactly
    g = 20
    nep = gallery.laplace2d(g)
    exact = gallery.laplace2d_eigenvalues(g)
    res = block.sweep(nep, q=5, n_total=40, m=2, tol=1e-10, seed=0,
                      oracle_values=exact[:42])
    got = [len(grp) for grp in extraction.group_values(res.eigenvalues, 1e-8)]
    want = [len(grp) for grp in extraction.group_values(exact[:40], 1e-8)]
    mult_ok = (got == want and res.audit["missed"] == 0
               and res.audit["repeated"] == 0)

    # planted triple eigenvalue: principal angles to the true eigenspace
    nep = gallery.diag_hyperbolic(n=100, seed=0, multiplicities=[(0.03, 3)],
                                  conjugate=True)
    r = np.asarray(nep.meta["eigenvalues"])
    Q = nep.meta["eigenvectors"]
    V = Q[:, np.nonzero(r == 0.03)[0]]
    cfg = block.BplmrConfig(sigma=0.01, q=3, m=4, tol=1e-12, max_iter=80, seed=0)
    pairs, rec = block.solve_block(nep, cfg)
    X = np.column_stack([p.x / np.linalg.norm(p.x) for p in pairs])
    Xq, _ = np.linalg.qr(X)
    s = np.linalg.svd(V.conj().T @ Xq, compute_uv=False)
    sines = np.sqrt(np.clip(1.0 - np.clip(s, 0.0, 1.0) ** 2, 0.0, None))
    angle_ok = (rec.converged
                and all(abs(p.rho - 0.03) <= 1e-8 for p in pairs)
                and np.max(sines) <= 1e-8)

    ok = mult_ok and angle_ok
    _report(7, "semi-simple recovery", ok,
            f"multiplicities={'ok' if mult_ok else 'BAD'}, max sine "
            f"{np.max(sines):.1e}, {time.time() - t0:.0f}s")


def test_criterion_8_structural_invariants():
    t0 = time.time()
    checks = {}

    # sign property on both interval types
    for nep in (gallery.diag_hyperbolic(n=20, seed=1),
                gallery.pdde(g=8, interval=(-20.87, 2.0))):
        sign = verify_definite_type(nep)
        rng = np.random.default_rng(2)
        a, b = nep.interval
        good = True
        for _ in range(4):
            x = rng.standard_normal(nep.n)
            rho = rayleigh_functional(nep, x)
            for mu in np.linspace(a + 0.1 * (b - a), b - 0.1 * (b - a), 5):
                if abs(mu - rho) <= 1e-6 * max(1.0, abs(rho)):
                    continue
                gval = nep.quadratic_form_coeffs(x) @ nep.coefficients(mu)
                good &= (mu - rho) * gval * sign > 0
        checks.setdefault("sign", True)
        checks["sign"] &= good

    # Rayleigh functional scale invariance
    nep = gallery.diag_hyperbolic(n=30, seed=3)
    x = np.random.default_rng(4).standard_normal(30)
    rho = rayleigh_functional(nep, x)
    checks["scale-invariance"] = all(
        abs(rayleigh_functional(nep, c * x) - rho) <= 1e-10
        for c in (5.0, -2.0, 1e7, 1e-7)
    )

    # interlacing of projected eigenvalues under one column removal
    nep2 = gallery.laplace2d(6)
    rng = np.random.default_rng(5)
    from plmr import kernel

    U, _ = kernel.orthonormalize(rng.standard_normal((36, 5)))
    big = np.sort(extraction.solve_projected(extraction.project(nep2, U), U).values)
    Us = U[:, :4]
    small = np.sort(extraction.solve_projected(extraction.project(nep2, Us), Us).values)
    checks["interlacing"] = all(
        big[j] <= small[j] + 1e-9 and small[j] <= big[j + 1] + 1e-9 for j in range(4)
    )

    # projected solve returns exactly p eigenvalues
    ritz = extraction.solve_projected(extraction.project(nep, U[:30, :4]), U[:30, :4])
    checks["projected-count"] = ritz.count == 4

    # bracket orthogonality of two computed eigenpairs
    from plmr.model import bracket_bilinear

    nep3 = gallery.string(100)
    xs = []
    for sigma in (2e4, 8e4):
        cfg = single.PlmrConfig(sigma=sigma, m=2, tol=1e-12, max_iter=50, seed=0)
        pair, rec = single.solve(nep3, cfg)
        assert rec.converged
        xs.append(pair.x / np.linalg.norm(pair.x))
    checks["bracket-orthogonality"] = abs(bracket_bilinear(nep3, xs[0], xs[1])) <= 1e-6

    # normalization |x* T'(rho) x| = 1
    from plmr.model import EigenpairApprox

    xn = np.random.default_rng(6).standard_normal(30)
    rhon = rayleigh_functional(nep, xn)
    pn = normalize(nep, EigenpairApprox(x=xn, rho=rhon, rel_residual=0.0))
    cval = np.vdot(pn.x, nep.apply_prime(rhon, pn.x)).real
    checks["normalization"] = abs(abs(cval) - 1.0) <= 1e-10

    # matvec accounting: m stabilized applications per PLMR subspace, m+1 per
    # JD step
    nep4 = gallery.string(80)
    P = StabilizedPreconditioner(nep4, 1000.0, 0.0)
    x4 = single.random_start(80, seed=7)
    rho4 = rayleigh_functional(nep4, x4)
    acc = True
    for m in (2, 3):
        P.refresh(nep4, x4, rho4)
        c0 = P.apply_count.count
        subspace.build_plmr_subspace(nep4, P, x4, rho4, None, m)
        acc &= P.apply_count.count - c0 == m
        P.refresh(nep4, x4, rho4)
        c0 = P.apply_count.count
        baselines.jd_step(nep4, P, x4, rho4, m)
        acc &= P.apply_count.count - c0 == m + 1
    checks["matvec-accounting"] = acc

    # T' consistency with finite differences of T
    mu, h = 0.5, 1e-6
    v = np.random.default_rng(8).standard_normal(30)
    fd = (nep.apply(mu + h, v) - nep.apply(mu - h, v)) / (2 * h)
    checks["derivative-consistency"] = (
        np.linalg.norm(fd - nep.apply_prime(mu, v)) <= 1e-5 * np.linalg.norm(fd)
    )

    ok = all(checks.values())
    bad = [k for k, v in checks.items() if not v]
    _report(8, "structural invariants", ok,
            ("all properties hold" if ok else f"failing: {bad}") +
            f", {time.time() - t0:.0f}s")
