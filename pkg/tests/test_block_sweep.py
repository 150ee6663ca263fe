"""Block solver and sweep tests: deflation, multiplicities, oracle audits."""

import numpy as np

from plmr import block, gallery, oracle


def test_block_q1_matches_single():
    from plmr import single

    nep = gallery.diag_hyperbolic(n=50, seed=0)
    r = np.asarray(nep.meta["eigenvalues"])
    sigma = 0.5
    target = r[np.argmin(np.abs(r - sigma))]
    cfg = block.BplmrConfig(sigma=sigma, q=1, m=2, tol=1e-10, max_iter=60, seed=0)
    pairs, record = block.solve_block(nep, cfg)
    assert record.converged
    assert abs(pairs[0].rho - target) <= 1e-8


def test_block_finds_q_nearest():
    nep = gallery.diag_hyperbolic(n=60, seed=1)
    r = np.asarray(nep.meta["eigenvalues"])
    sigma = 0.5
    q = 3
    targets = np.sort(r[np.argsort(np.abs(r - sigma))[:q]])
    cfg = block.BplmrConfig(sigma=sigma, q=q, m=2, tol=1e-10, max_iter=80, seed=0)
    pairs, record = block.solve_block(nep, cfg)
    assert record.converged
    got = np.sort([p.rho for p in pairs])
    assert np.allclose(got, targets, atol=1e-8)


def test_block_resolves_planted_multiplicity():
    nep = gallery.diag_hyperbolic(n=40, seed=2, multiplicities=[(0.5, 2)])
    cfg = block.BplmrConfig(sigma=0.49, q=2, m=3, tol=1e-10, max_iter=80, seed=0)
    pairs, record = block.solve_block(nep, cfg)
    assert record.converged
    rhos = sorted(p.rho for p in pairs)
    assert abs(rhos[0] - 0.5) <= 1e-8 and abs(rhos[1] - 0.5) <= 1e-8
    # the two eigenvectors must be independent (nontrivial angle)
    X = np.column_stack([p.x / np.linalg.norm(p.x) for p in pairs])
    s = np.linalg.svd(X, compute_uv=False)
    assert s[1] >= 1e-3


def test_deflation_window_capacity_and_archive(tmp_path):
    w = block.DeflationWindow(capacity=2, archive_dir=tmp_path)
    for i in range(4):
        w.push([float(i)], np.eye(5)[:, i : i + 1], meta={"i": i})
    assert len(w.groups) == 2
    assert len(w.retired) == 2
    assert (tmp_path / "index.json").exists()
    files = sorted(tmp_path.glob("group_*.npz"))
    assert len(files) == 2
    data = np.load(files[0])
    assert data["values"][0] == 0.0


def test_sweep_lowest_eigenvalues_diag():
    nep = gallery.diag_hyperbolic(n=50, seed=3)
    r = np.asarray(nep.meta["eigenvalues"])
    res = block.sweep(nep, q=3, n_total=9, m=3, tol=1e-10, seed=0,
                      oracle_values=r)
    assert len(res.eigenvalues) == 9
    assert np.allclose(res.eigenvalues, r[:9], atol=1e-7)
    assert res.audit["missed"] == 0
    assert res.audit["repeated"] == 0


def test_sweep_audit_detects_problems():
    # deliberately corrupted lists are reported as missed / repeated
    oracle_vals = [1.0, 2.0, 3.0, 4.0]
    audit = block.audit_against_oracle([1.0, 2.0, 2.0, 4.0], oracle_vals)
    assert audit["missed"] == 1
    assert audit["repeated"] == 1
    clean = block.audit_against_oracle([1.0, 2.0, 3.0, 4.0], oracle_vals)
    assert clean["missed"] == 0 and clean["repeated"] == 0


def test_sweep_laplace2d_multiplicities():
    g = 8
    nep = gallery.laplace2d(g)
    exact = gallery.laplace2d_eigenvalues(g)
    res = block.sweep(nep, q=4, n_total=12, m=2, tol=1e-10, seed=0,
                      oracle_values=exact[:14])
    assert res.audit["missed"] == 0
    assert res.audit["repeated"] == 0
    # multiplicity pattern of the lowest 12 matches the analytic spectrum
    from plmr import extraction

    got = [len(g_) for g_ in extraction.group_values(res.eigenvalues, 1e-8)]
    want = [len(g_) for g_ in extraction.group_values(exact[:12], 1e-8)]
    assert got == want
