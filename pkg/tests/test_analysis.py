import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpulse.analysis import (ModeDecomposition, TakagiDecomposition, bell_state,
                             degenerate_blocks, eigenmodes, fock_populations,
                             principal_angles, relation_check, state_fidelity, takagi,
                             takagi_matrix, two_mode_state, write_populations)
from qpulse.cascade import CorrelationMatrix, TwoPhotonAmplitude
from qpulse.modes import (GaussianParams, TemporalMode, TimeGrid, gaussian_mode,
                          gram_schmidt_pair, inner_product)
from qpulse.quantum import DensityMatrix, HilbertSpace, KetState


@pytest.fixture
def pair():
    grid = TimeGrid(0.0, 12.0, 401)
    u1 = gaussian_mode(GaussianParams(1.0, 5.0), grid)
    u2 = gaussian_mode(GaussianParams(1.0, 7.0), grid)
    a, b, _ = gram_schmidt_pair(u1, u2)
    return a, b


def corr_of(modes, pops):
    v = np.array([m.samples for m in modes])
    return CorrelationMatrix(modes[0].grid, (v.conj().T * np.asarray(pops)) @ v)


def test_rank_one_eigenmode_and_phase(pair):
    a, _ = pair
    md = eigenmodes(corr_of([a], [2.0]), 3)
    assert abs(md.populations[0] - 2) < 1e-10 and abs(md.populations[1]) < 1e-10
    assert abs(abs(inner_product(a, md.modes[0])) - 1) < 1e-10
    peak = md.modes[0].samples[np.argmax(np.abs(md.modes[0].samples))]
    assert abs(peak.imag) < 1e-12 and peak.real > 0
    assert abs(md.total - 2) < 1e-10


def test_two_mode_eigenmodes_reconstruct(pair):
    a, b = pair
    corr = corr_of([a, b.scaled(1j)], [1.3, 0.7])
    md = eigenmodes(corr, 2)
    assert np.allclose(md.populations, [1.3, 0.7], atol=1e-10)
    assert np.max(np.abs(md.reconstruct() - corr.values)) < 1e-9
    assert abs(corr.photon_number() - 2.0) < 1e-10


def test_eigenmodes_reject_non_hermitian(pair):
    a, _ = pair
    vals = corr_of([a], [1.0]).values.copy()
    vals[10, 200] += 0.1
    with pytest.raises(ValueError):
        eigenmodes(CorrelationMatrix(a.grid, vals))


def test_takagi_of_simple_matrices():
    s, u = takagi_matrix(np.diag([3.0, 1.0]))
    assert np.allclose(s, [3, 1])
    assert np.allclose(u @ np.diag(s) @ u.T, np.diag([3.0, 1.0]))
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    s, u = takagi_matrix(x)
    assert np.allclose(s, [1, 1])
    assert np.allclose(u @ np.diag(s) @ u.T, x)
    assert np.allclose(u.conj().T @ u, np.eye(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 8), st.booleans())
def test_takagi_reconstructs_random_symmetric(seed, n, degenerate):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    if degenerate:
        # symmetric unitary: all singular values equal
        q, _ = np.linalg.qr(z)
        a = q @ q.T
    else:
        a = z + z.T
    s, u = takagi_matrix(a)
    assert np.all(np.diff(s) <= 1e-12) and np.all(s >= 0)
    assert np.allclose(u.conj().T @ u, np.eye(n), atol=1e-8)
    assert np.linalg.norm(u @ np.diag(s) @ u.T - a) <= 1e-8 * np.linalg.norm(a)


def test_takagi_of_product_amplitude(pair):
    a, b = pair
    grid = a.grid
    # |1,1> of two orthonormal modes: psi = a(t1) b(t2) + b(t1) a(t2)
    psi = np.outer(a.samples, b.samples) + np.outer(b.samples, a.samples)
    tk = takagi(TwoPhotonAmplitude(grid, psi), top_k=3)
    assert np.allclose(tk.populations[:2], [1, 1], atol=1e-10) and tk.populations[2] < 1e-12
    assert np.linalg.norm(tk.reconstruct(2) - psi) < 1e-8 * np.linalg.norm(psi)
    ang = principal_angles(tk.modes[:2], [a, b])
    assert np.max(ang) < 1e-6


def test_takagi_rejects_asymmetric_and_bare_matrix(pair):
    a, b = pair
    psi = np.outer(a.samples, b.samples)
    with pytest.raises(ValueError):
        takagi(TwoPhotonAmplitude(a.grid, psi))
    with pytest.raises(ValueError):
        takagi(psi + psi.T)
    assert takagi(psi + psi.T, grid=a.grid, top_k=2).values.shape == (2,)


def test_relation_check_on_single_mode(pair):
    a, _ = pair
    md = eigenmodes(corr_of([a], [2.0]), 3)
    tk = takagi(TwoPhotonAmplitude(a.grid, np.sqrt(2) * np.outer(a.samples, a.samples)), top_k=3)
    rep = relation_check(md, tk)
    assert rep.passed and rep.max_population_error < 1e-10 and rep.max_angle < 1e-6


def test_relation_check_flags_mismatched_fields(pair):
    a, b = pair
    md = eigenmodes(corr_of([a], [2.0]), 3)
    tk = takagi(TwoPhotonAmplitude(a.grid, np.sqrt(2) * np.outer(b.samples, b.samples)), top_k=3)
    rep = relation_check(md, tk)
    assert rep.max_population_error < 1e-10
    assert not rep.passed and rep.max_angle > 1.0


def test_relation_check_compares_degenerate_block_as_subspace(pair):
    a, b = pair
    md = eigenmodes(corr_of([a, b], [1.0, 1.0]), 2)
    c, s = np.cos(0.3), np.sin(0.3)
    # rotated basis inside the degenerate block
    r1 = TemporalMode(a.grid, c * a.samples + s * b.samples)
    r2 = TemporalMode(a.grid, -s * a.samples + c * b.samples)
    tk = TakagiDecomposition(np.ones(2), [r1, r2])
    rep = relation_check(md, tk)
    assert rep.blocks == [[0, 1]] and rep.passed


def test_degenerate_blocks():
    assert degenerate_blocks(np.array([1.0, 1.00005, 0.5, 0.1])) == [[0, 1], [2], [3]]
    assert degenerate_blocks(np.array([])) == []


def test_mode_decomposition_total():
    grid = TimeGrid(0.0, 1.0, 3)
    md = ModeDecomposition(np.array([1.5, 0.4]), [], 0.1)
    assert md.total == pytest.approx(2.0)
    assert grid.n_points == 3


def test_fock_populations_and_fidelity():
    space = HilbertSpace.of(("v", 3))
    ket = KetState.from_amplitudes(space, {(0,): 1.0, (2,): 1.0})
    rho = ket.density_matrix()
    assert np.allclose(fock_populations(rho), [0.5, 0, 0.5])
    assert state_fidelity(rho, ket) == pytest.approx(1.0)
    assert state_fidelity(rho, KetState.basis(space, v=1)) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        fock_populations(DensityMatrix(HilbertSpace.of(("a", 2), ("b", 2)), np.eye(4) / 4))
    with pytest.raises(ValueError):
        state_fidelity(rho, KetState.basis(HilbertSpace.of(("w", 3)), w=0))


def test_bell_state():
    ket = bell_state(np.pi)
    sp = ket.space
    assert sp.labels == ("a", "b")
    assert ket.amplitudes[sp.basis_index(b=2)] == pytest.approx(2 ** -0.5)
    assert ket.amplitudes[sp.basis_index(a=2)] == pytest.approx(-(2 ** -0.5))


def test_two_mode_state_projection(pair):
    a, b = pair
    # Bell output (|0,2> - |2,0>)/sqrt2: psi = b(t1)b(t2) - a(t1)a(t2)
    psi = np.outer(b.samples, b.samples) - np.outer(a.samples, a.samples)
    ket, captured = two_mode_state(TwoPhotonAmplitude(a.grid, psi), a, b)
    assert captured == pytest.approx(1.0, abs=1e-10)
    assert state_fidelity(ket.density_matrix(), bell_state(np.pi)) == pytest.approx(1.0, abs=1e-10)
    # replacing b by a mode orthogonal to both keeps only the |2,0> half
    c = TemporalMode(a.grid, np.exp(-(a.times - 9.0) ** 2 / 2).astype(complex))
    for m in (a, b):
        c = TemporalMode(a.grid, c.samples - inner_product(m, c) * m.samples)
    _, half = two_mode_state(TwoPhotonAmplitude(a.grid, psi), a, c.normalized())
    assert half == pytest.approx(0.5, abs=1e-10)


def test_write_populations(tmp_path):
    path = tmp_path / "p.csv"
    write_populations(path, np.array([1.5, 0.5]))
    assert path.read_text().splitlines() == ["index,n", "1,1.5", "2,0.5"]
