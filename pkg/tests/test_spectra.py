"""Exact diagonalization against dense oracles (L=2, 256 dimensions)."""

import numpy as np
import pytest

from toricsim import lattice as lt
from toricsim import spectra as sp
from toricsim.pauli import PauliString

LAT = lt.build(2)
RNG = np.random.default_rng(11)


def test_term_counts_and_pair_modes():
    h0 = sp.build_hamiltonian(LAT)
    assert len(h0.terms) == 8
    h = sp.build_hamiltonian(LAT, chi=0.3, h_z=0.1, chi_pairs="sequence")
    assert len(h.terms) == 8 + 8 + 8
    h_all = sp.build_hamiltonian(LAT, chi=0.3, h_z=0.1, chi_pairs="all")
    assert len(h_all.terms) == 8 + 8 + 12
    assert sp.chi_pair_terms(LAT, "sequence") == [
        (links[1], links[2]) for links in LAT.vertex_links + LAT.plaquette_links]
    assert sp.chi_pair_terms(LAT, "all") == lt.neighbor_pairs(LAT)
    with pytest.raises(ValueError):
        sp.chi_pair_terms(LAT, "diagonal")


def test_rejects_non_hermitian_terms():
    z = PauliString.single(8, 0, "Z")
    with pytest.raises(ValueError):
        sp.SparseHamiltonian(8, ((1.0j, z),))
    with pytest.raises(ValueError):
        sp.SparseHamiltonian(8, ((1.0, PauliString.from_label("+i·" + "Z" * 8)),))


def test_unperturbed_ground_sector():
    evals = np.linalg.eigvalsh(sp.build_hamiltonian(LAT).to_dense())
    np.testing.assert_allclose(evals[:4], -8.0, atol=1e-12)
    # pair-creation gap: one flipped vertex and one flipped plaquette
    # stabilizer each cost 2, nearest excited level sits 4 above
    np.testing.assert_allclose(evals[4], -4.0, atol=1e-12)


def test_matvec_matches_dense():
    for chi, h_z, mode in ((0.0, 0.0, "sequence"), (0.3, 0.07, "sequence"),
                           (-0.2, 0.05, "all")):
        h = sp.build_hamiltonian(LAT, chi=chi, h_z=h_z, chi_pairs=mode)
        dense = h.to_dense()
        assert np.max(np.abs(dense - dense.conj().T)) == 0.0
        for _ in range(3):
            v = RNG.normal(size=256) + 1j * RNG.normal(size=256)
            np.testing.assert_allclose(h.matvec(v), dense @ v, atol=1e-12)


def test_vertex_terms_commute_with_everything():
    h = sp.build_hamiltonian(LAT)
    for v in range(LAT.n_vertices):
        a = lt.vertex_stabilizer(LAT, v)
        for _, s in h.terms:
            assert a.commutes_with(s)


def test_h_z_only_free_spins():
    h = sp.build_hamiltonian(LAT, j_e=0.0, j_m=0.0, h_z=0.1)
    evals = np.linalg.eigvalsh(h.to_dense())
    assert evals[0] == pytest.approx(-0.8)
    # spectrum is -h_z (n - 2k) with binomial multiplicities
    import math
    uniq, counts = np.unique(np.round(evals, 10), return_counts=True)
    np.testing.assert_allclose(uniq, [-0.1 * (8 - 2 * k) for k in range(9)])
    np.testing.assert_allclose(counts, [math.comb(8, k) for k in range(9)])


def test_ground_space_reference_exact():
    states, sectors = sp.ground_space_reference(LAT)
    assert sectors == [(1, 1), (-1, 1), (1, -1), (-1, -1)]
    np.testing.assert_allclose(states.conj().T @ states, np.eye(4), atol=1e-12)
    h = sp.build_hamiltonian(LAT)
    zl = lt.z_loops(LAT)
    for s in range(4):
        v = states[:, s]
        assert np.linalg.norm(h.matvec(v) + 8.0 * v) < 1e-12
        assert np.vdot(v, zl[0].apply(v)).real == pytest.approx(sectors[s][0])
        assert np.vdot(v, zl[1].apply(v)).real == pytest.approx(sectors[s][1])


def test_lowest_eigenpairs_dense_path():
    h = sp.build_hamiltonian(LAT, j_e=0.0, j_m=0.0, h_z=0.05)
    res = sp.lowest_eigenpairs(h, k=1)
    assert res.eigenvalues[0] == pytest.approx(-8 * 0.05)
    res = sp.lowest_eigenpairs(sp.build_hamiltonian(LAT, h_z=0.05), k=6)
    evals = res.eigenvalues
    assert np.all(np.diff(evals) >= -1e-12)
    assert evals[3] - evals[0] < 4 * 0.05  # splitting is O(h_z)
    assert evals[4] - evals[3] > 3.5       # below a gap of about 4
    assert np.all(res.residuals <= 1e-8)


def test_lanczos_path_matches_dense(monkeypatch):
    h = sp.build_hamiltonian(LAT, chi=0.25, h_z=0.05)
    dense_res = sp.lowest_eigenpairs(h, k=6)
    monkeypatch.setattr(sp, "DENSE_DIM_CAP", 64)
    sparse_res = sp.lowest_eigenpairs(h, k=6, seed=3)
    np.testing.assert_allclose(sparse_res.eigenvalues, dense_res.eigenvalues,
                               atol=1e-8)
    assert np.all(sparse_res.residuals <= 1e-8)
    again = sp.lowest_eigenpairs(h, k=6, seed=3)
    np.testing.assert_allclose(again.eigenvalues, sparse_res.eigenvalues,
                               atol=1e-12)


def test_eigenvalues_invariant_under_relabeling():
    # translate the lattice one row down: a link permutation that maps the
    # term list onto itself up to relabeling
    def shift(link):
        r, c = LAT.link_rc(link)
        base = LAT.L * LAT.L if LAT.link_kind(link) == "v" else 0
        return base + ((r + 1) % LAT.L) * LAT.L + c

    def relabel(s: PauliString) -> PauliString:
        x = z = 0
        for q in range(s.n_qubits):
            if s.x_mask >> q & 1:
                x |= 1 << shift(q)
            if s.z_mask >> q & 1:
                z |= 1 << shift(q)
        return PauliString(s.n_qubits, x, z, s.phase_quarter)

    h = sp.build_hamiltonian(LAT, chi=0.3, h_z=0.07)
    h2 = sp.SparseHamiltonian(8, tuple((c, relabel(s)) for c, s in h.terms))
    e1 = np.linalg.eigvalsh(h.to_dense())
    e2 = np.linalg.eigvalsh(h2.to_dense())
    np.testing.assert_allclose(e1, e2, atol=1e-10)


def test_ground_fidelity_aggregates():
    states, _ = sp.ground_space_reference(LAT)
    fid = sp.ground_fidelity(states, states)
    assert fid.subspace == pytest.approx(1.0)
    np.testing.assert_allclose(fid.per_state, 1.0, atol=1e-12)
    q, _ = np.linalg.qr(RNG.normal(size=(4, 4)) + 1j * RNG.normal(size=(4, 4)))
    fid2 = sp.ground_fidelity(states, states @ q)
    assert fid2.subspace == pytest.approx(1.0, abs=1e-10)
    assert np.all(fid2.per_state < 0.999)
    # global phases never matter
    fid3 = sp.ground_fidelity(states, states * np.exp(0.7j))
    assert fid3.subspace == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        sp.ground_fidelity(states[:, :3], states)


def test_fidelity_scan_structure():
    scan = sp.fidelity_scan(LAT, [0.0, 0.2], h_z=0.05)
    assert scan.h_z == 0.05
    assert [p.chi for p in scan.points] == [0.0, 0.2]
    for p in scan.points:
        assert p.error is None
        assert 0.0 <= p.subspace_fidelity <= 1.0
        assert p.manifold_spread < p.gap / 5
    rows = scan.report_rows()
    assert len(rows) == 2 and len(rows[0]) == 6


def test_fidelity_scan_survives_solver_failure(monkeypatch):
    real = sp.lowest_eigenpairs

    def flaky(h, **kw):
        if any(abs(c - 0.2) < 1e-12 for c, _ in h.terms):
            raise sp.ConvergenceError("forced failure")
        return real(h, **kw)

    monkeypatch.setattr(sp, "lowest_eigenpairs", flaky)
    scan = sp.fidelity_scan(LAT, [0.0, 0.2], h_z=0.05)
    assert scan.points[0].error is None
    assert scan.points[1].error is not None
    assert len(scan.report_rows()) == 1
