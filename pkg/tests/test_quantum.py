import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpulse.quantum import (TLS, DensityMatrix, HilbertSpace, HilbertSpaceError, KetState,
                            Operator, annihilation_on, destroy, expectation, identity,
                            local_operator, number_on, partial_trace, tensor_embed,
                            tls_lowering)


def test_commutator_of_truncated_mode():
    a = destroy(3)
    comm = a @ a.conj().T - a.conj().T @ a
    # truncation spoils the last diagonal entry: 1, 1, -2
    assert np.allclose(np.diag(comm), [1, 1, -2])
    assert np.allclose(comm - np.diag(np.diag(comm)), 0)


def test_number_operator_embedding():
    space = HilbertSpace.of(("u", 3), (TLS, 2))
    n = number_on(space, "u")
    assert np.allclose(n.matrix, np.diag([0, 0, 1, 1, 2, 2]))
    assert n.is_hermitian()


def test_space_validation():
    with pytest.raises(HilbertSpaceError):
        HilbertSpace.of(("u", 3), ("u", 2))
    with pytest.raises(HilbertSpaceError):
        HilbertSpace.of((TLS, 3))
    with pytest.raises(HilbertSpaceError):
        HilbertSpace.of(("u", 1))
    with pytest.raises(HilbertSpaceError):
        HilbertSpace.of(("u", 3)).index("v")


def test_basis_index_and_excitations():
    space = HilbertSpace.of(("u", 3), (TLS, 2), ("v", 4))
    assert space.dim == 24
    i = space.basis_index(u=2, v=3)
    assert tuple(space.occupations[i]) == (2, 0, 3)
    assert space.excitations[i] == 5
    with pytest.raises(HilbertSpaceError):
        space.basis_index(u=3)


def test_operator_algebra_and_space_checks():
    space = HilbertSpace.of(("u", 3), (TLS, 2))
    a = annihilation_on(space, "u")
    s = tls_lowering(space)
    assert np.allclose((a @ s - s @ a).matrix, 0)
    h = 0.5j * (a.dag() @ s - s.dag() @ a)
    assert h.is_hermitian()
    with pytest.raises(HilbertSpaceError):
        annihilation_on(space, TLS)
    other = HilbertSpace.of(("u", 3))
    with pytest.raises(HilbertSpaceError):
        a @ identity(other)
    with pytest.raises(HilbertSpaceError):
        tensor_embed(space, [None])


def test_ket_requires_normalization():
    space = HilbertSpace.of(("u", 3))
    with pytest.raises(ValueError):
        KetState(space, [1, 1, 0])
    ket = KetState.from_amplitudes(space, {(0,): 1.0, (2,): 1.0j})
    assert np.isclose(np.linalg.norm(ket.amplitudes), 1)
    ket.density_matrix().validate()


def test_density_matrix_validation():
    space = HilbertSpace.of(("u", 2))
    DensityMatrix(space, np.diag([0.5, 0.5])).validate()
    with pytest.raises(ValueError):
        DensityMatrix(space, np.diag([0.6, 0.6])).validate()
    with pytest.raises(ValueError):
        DensityMatrix(space, np.diag([1.5, -0.5])).validate()
    with pytest.raises(ValueError):
        DensityMatrix(space, [[0.5, 0.1], [0.2, 0.5]]).validate()


def test_partial_trace_of_product_and_entangled_states():
    space = HilbertSpace.of(("a", 3), ("b", 3))
    prod = KetState.basis(space, a=1, b=2).density_matrix()
    ra = partial_trace(prod, "a")
    assert np.allclose(ra.matrix, np.diag([0, 1, 0]))
    bell = KetState.from_amplitudes(space, {(0, 2): 1, (2, 0): -1}).density_matrix()
    rb = partial_trace(bell, "b")
    assert np.allclose(rb.matrix, np.diag([0.5, 0, 0.5]))
    assert partial_trace(bell, ["a", "b"]).space == space


def test_expectation_matches_trace():
    space = HilbertSpace.of(("u", 3), (TLS, 2))
    ket = KetState.from_amplitudes(space, {(2, 0): 1.0, (1, 1): 1.0})
    rho = ket.density_matrix()
    n = number_on(space, "u")
    assert np.isclose(expectation(rho, n), np.trace(rho.matrix @ n.matrix))
    assert np.isclose(expectation(rho, n).real, 1.5)


def _random_rho(rng, dim):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = x @ x.conj().T
    return m / np.trace(m)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(2, 3), st.integers(0, 2**32 - 1))
def test_partial_trace_preserves_trace_and_positivity(da, db, seed):
    space = HilbertSpace.of(("a", da), ("b", db))
    rho = DensityMatrix(space, _random_rho(np.random.default_rng(seed), space.dim))
    for keep in ("a", "b"):
        red = partial_trace(rho, keep).validate(hermiticity_tol=1e-10)
        assert np.isclose(red.trace, 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_local_operator_expectation_equals_reduced(dim, seed):
    rng = np.random.default_rng(seed)
    space = HilbertSpace.of(("a", dim), (TLS, 2))
    rho = DensityMatrix(space, _random_rho(rng, space.dim))
    op = rng.normal(size=(dim, dim))
    full = expectation(rho, local_operator(space, "a", op))
    red = partial_trace(rho, "a")
    assert np.isclose(full, expectation(red, Operator(red.space, op)))
