"""Truncated Hilbert spaces, operators and states.

All matrices are dense complex arrays. Joint dimensions in this package stay
below ~100, where dense linear algebra is both simpler and faster than sparse
storage. The basis of a joint space is the Kronecker product of the factor
Fock bases, taken in the fixed factor order given at construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

TLS = "tls"

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-9
POSITIVITY_TOL = -1e-9


class HilbertSpaceError(ValueError):
    """Raised for unknown labels or inconsistent factor dimensions."""


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of labelled factors.

    ``factors`` is a tuple of ``(label, dim)`` pairs. The factor labelled
    ``"tls"`` is the two-level scatterer; every other factor is a truncated
    bosonic mode holding Fock states ``0 .. dim-1``.
    """

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(label), int(dim)) for label, dim in self.factors)
        object.__setattr__(self, "factors", factors)
        labels = [label for label, _ in factors]
        if not factors:
            raise HilbertSpaceError("a Hilbert space needs at least one factor")
        if len(set(labels)) != len(labels):
            raise HilbertSpaceError(f"duplicate factor labels in {labels}")
        for label, dim in factors:
            if dim < 2:
                raise HilbertSpaceError(f"factor {label!r} has dimension {dim} < 2")
            if label == TLS and dim != 2:
                raise HilbertSpaceError("the tls factor must have dimension 2")

    @classmethod
    def of(cls, *factors: tuple[str, int]) -> "HilbertSpace":
        return cls(tuple(factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise HilbertSpaceError(f"unknown factor label {label!r}") from None

    def factor_dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    @cached_property
    def occupations(self) -> np.ndarray:
        """Integer array (dim, n_factors) of per-factor quanta of each basis state."""
        grids = np.indices(self.dims).reshape(len(self.dims), -1)
        return grids.T.copy()

    @cached_property
    def excitations(self) -> np.ndarray:
        """Total excitation number of each product basis state."""
        return self.occupations.sum(axis=1)

    def basis_index(self, **occupation: int) -> int:
        """Flat index of a product basis state; unspecified factors are in 0."""
        for label in occupation:
            self.index(label)
        digits = [occupation.get(label, 0) for label in self.labels]
        for n, d, label in zip(digits, self.dims, self.labels):
            if not 0 <= n < d:
                raise HilbertSpaceError(f"occupation {n} out of range for {label!r}")
        return int(np.ravel_multi_index(digits, self.dims))


@dataclass(frozen=True, eq=False)
class Operator:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise HilbertSpaceError(
                f"matrix shape {m.shape} does not match space dimension {self.space.dim}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise HilbertSpaceError("operators act on different spaces")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix @ other.matrix)
        if isinstance(other, KetState):
            if other.space != self.space:
                raise HilbertSpaceError("operator and state act on different spaces")
            return self.matrix @ other.amplitudes
        return self.matrix @ np.asarray(other)

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, scalar * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def is_hermitian(self, atol: float = HERMITICITY_TOL) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol, rtol=0))


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.dim))


def zero(space: HilbertSpace) -> Operator:
    return Operator(space, np.zeros((space.dim, space.dim)))


def destroy(dim: int) -> np.ndarray:
    """Truncated single-mode annihilation matrix, <n-1|a|n> = sqrt(n)."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def tensor_embed(space: HilbertSpace, ops: Sequence[np.ndarray | None]) -> Operator:
    """Kronecker product of one matrix per factor, in factor order.

    ``None`` entries stand for the identity on that factor.
    """
    if len(ops) != len(space.factors):
        raise HilbertSpaceError(
            f"expected {len(space.factors)} factor operators, got {len(ops)}"
        )
    out = np.ones((1, 1), dtype=complex)
    for op, (label, dim) in zip(ops, space.factors):
        if op is None:
            op = np.eye(dim)
        op = np.asarray(op, dtype=complex)
        if op.shape != (dim, dim):
            raise HilbertSpaceError(
                f"operator for factor {label!r} has shape {op.shape}, expected {(dim, dim)}"
            )
        out = np.kron(out, op)
    return Operator(space, out)


def local_operator(space: HilbertSpace, label: str, op: np.ndarray) -> Operator:
    ops: list[np.ndarray | None] = [None] * len(space.factors)
    ops[space.index(label)] = op
    return tensor_embed(space, ops)


def annihilation_on(space: HilbertSpace, label: str) -> Operator:
    """Truncated annihilation operator of a bosonic factor, identity elsewhere."""
    if label == TLS:
        raise HilbertSpaceError("the tls factor has no bosonic annihilation operator")
    return local_operator(space, label, destroy(space.factor_dim(label)))


def tls_lowering(space: HilbertSpace) -> Operator:
    """sigma^- = |g><e| on the tls factor (|g> = index 0, |e> = index 1)."""
    if TLS not in space.labels:
        raise HilbertSpaceError("space has no tls factor")
    return local_operator(space, TLS, destroy(2))


def number_on(space: HilbertSpace, label: str) -> Operator:
    a = local_operator(space, label, destroy(space.factor_dim(label)))
    return a.dag() @ a


@dataclass(frozen=True, eq=False)
class KetState:
    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (self.space.dim,):
            raise HilbertSpaceError(
                f"state of length {amps.size} does not match dimension {self.space.dim}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"ket is not normalized (norm {norm:.15f})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, space: HilbertSpace, amplitudes: dict[tuple[int, ...], complex]
                        ) -> "KetState":
        """Build a normalized ket from ``{occupation tuple: amplitude}``."""
        vec = np.zeros(space.dim, dtype=complex)
        for occ, amp in amplitudes.items():
            vec[space.basis_index(**dict(zip(space.labels, occ)))] += amp
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError("all amplitudes vanish")
        return cls(space, vec / norm)

    @classmethod
    def basis(cls, space: HilbertSpace, **occupation: int) -> "KetState":
        vec = np.zeros(space.dim, dtype=complex)
        vec[space.basis_index(**occupation)] = 1.0
        return cls(space, vec)

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise HilbertSpaceError(
                f"matrix shape {m.shape} does not match space dimension {self.space.dim}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def validate(self, trace_tol: float = TRACE_TOL, positivity_tol: float = POSITIVITY_TOL,
                 hermiticity_tol: float = HERMITICITY_TOL) -> "DensityMatrix":
        """Raise ``ValueError`` unless the matrix is a valid density matrix."""
        m = self.matrix
        herm_err = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if herm_err > hermiticity_tol:
            raise ValueError(f"density matrix not Hermitian (deviation {herm_err:.3e})")
        if abs(self.trace - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {self.trace:.12f} != 1")
        lam = self.min_eigenvalue()
        if lam < positivity_tol:
            raise ValueError(f"density matrix not positive (min eigenvalue {lam:.3e})")
        return self


def partial_trace(rho: DensityMatrix, keep: str | Sequence[str]) -> DensityMatrix:
    """Reduced density matrix on the kept factor(s), in original factor order."""
    keep_labels = [keep] if isinstance(keep, str) else list(keep)
    idx = sorted(rho.space.index(label) for label in keep_labels)
    dims = rho.space.dims
    n = len(dims)
    tensor = rho.matrix.reshape(dims + dims)
    # einsum subscripts: row indices 0..n-1, column indices n..2n-1; traced
    # factors share the row letter.
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    col = [letters[n + i] if i in idx else letters[i] for i in range(n)]
    out = [letters[i] for i in idx] + [letters[n + i] for i in idx]
    expr = "".join(letters[:n]) + "".join(col) + "->" + "".join(out)
    reduced = np.einsum(expr, tensor)
    sub = HilbertSpace(tuple(rho.space.factors[i] for i in idx))
    return DensityMatrix(sub, reduced.reshape(sub.dim, sub.dim))


def expectation(rho: DensityMatrix, op: Operator) -> complex:
    if op.space != rho.space:
        raise HilbertSpaceError("operator and density matrix act on different spaces")
    # Tr(rho op) without forming the product.
    return complex(np.sum(rho.matrix * op.matrix.T))
