"""Output-field mode decompositions and state-content diagnostics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .cascade import CorrelationMatrix, TwoPhotonAmplitude
from .modes import TemporalMode, TimeGrid, inner_product
from .quantum import DensityMatrix, HilbertSpace, KetState

DEGENERACY_TOL = 1e-4


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column real and positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    peak = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(peak) / np.where(peak == 0, 1, peak))[None, :]


@dataclass(frozen=True, eq=False)
class ModeDecomposition:
    populations: np.ndarray
    modes: list[TemporalMode]
    residual: float

    @property
    def total(self) -> float:
        return float(self.populations.sum() + self.residual)

    def reconstruct(self) -> np.ndarray:
        """sum_i n_i v_i*(t) v_i(t') on the grid."""
        v = np.array([m.samples for m in self.modes])
        return (v.conj().T * self.populations) @ v


def eigenmodes(corr: CorrelationMatrix, top_k: int = 10, herm_tol: float = 1e-9
               ) -> ModeDecomposition:
    """Diagonalize g1 on the grid: populations n_i and unit-norm modes v_i.

    g1(t, t') = sum_i n_i v_i*(t) v_i(t'); with trapezoid weights W the modes
    are eigenvectors of W^(1/2) conj(G) W^(1/2), rescaled by W^(-1/2).
    """
    g = corr.values
    scale = max(1.0, float(np.max(np.abs(g))))
    if corr.hermiticity_error() > herm_tol * scale:
        raise ValueError(f"correlation matrix is not Hermitian ({corr.hermiticity_error():.2e})")
    sw = np.sqrt(corr.grid.weights)
    m = sw[:, None] * g.conj() * sw[None, :]
    m = 0.5 * (m + m.conj().T)
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    top_k = min(top_k, len(vals))
    vecs = _fix_phase(vecs[:, :top_k] / sw[:, None])
    modes = [TemporalMode(corr.grid, vecs[:, i]) for i in range(top_k)]
    return ModeDecomposition(vals[:top_k].copy(), modes, float(vals[top_k:].sum()))


@dataclass(frozen=True, eq=False)
class TakagiDecomposition:
    values: np.ndarray
    modes: list[TemporalMode] = field(default_factory=list)

    def reconstruct(self, k: int | None = None) -> np.ndarray:
        v = np.array([m.samples for m in self.modes[:k]])
        return (v.T * self.values[:len(v)]) @ v

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def takagi_matrix(a: np.ndarray, rtol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Autonne-Takagi factorization a = U diag(s) U^T of a complex symmetric matrix.

    Uses the SVD a = X diag(s) Y^dag. Inside each block of equal singular
    values X = conj(Y) D with D symmetric unitary, so with Q = sqrtm(D) the
    columns conj(Y) Q are Takagi vectors.

    Returns:
        (s, U) with s descending and non-negative.
    """
    a = np.asarray(a, dtype=complex)
    x, s, yh = np.linalg.svd(a)
    y = yh.conj().T
    u = np.empty_like(x)
    tol = rtol * max(s[0], np.finfo(float).tiny) if s.size else 0.0
    start = 0
    n = len(s)
    while start < n:
        stop = start + 1
        while stop < n and s[start] - s[stop] <= tol:
            stop += 1
        blk = slice(start, stop)
        if s[start] <= tol:
            # null space: any orthonormal real-phase basis works
            u[:, blk] = y[:, blk].conj()
        else:
            d = y[:, blk].T @ x[:, blk]
            d = 0.5 * (d + d.T)
            q = scipy.linalg.sqrtm(d)
            u[:, blk] = y[:, blk].conj() @ q
        start = stop
    return s, u


def takagi(psi: TwoPhotonAmplitude | np.ndarray, grid: TimeGrid | None = None,
           top_k: int | None = None, sym_tol: float = 1e-6) -> TakagiDecomposition:
    """Takagi modes of a two-photon amplitude: psi = sum_i lambda_i phi_i phi_i.

    A ``TwoPhotonAmplitude`` is decomposed as-is, so |lambda_i|^2 are the
    mean photon numbers of its eigenmodes. A bare symmetric matrix needs a
    ``grid`` for trapezoid weights.
    """
    if isinstance(psi, TwoPhotonAmplitude):
        grid, a = psi.grid, psi.values
    else:
        if grid is None:
            raise ValueError("a raw matrix needs its time grid")
        a = np.asarray(psi, dtype=complex)
    scale = max(np.max(np.abs(a)), 1e-300)
    if np.max(np.abs(a - a.T)) > sym_tol * scale:
        raise ValueError("amplitude is not symmetric")
    sw = np.sqrt(grid.weights)
    m = sw[:, None] * a * sw[None, :]
    s, u = takagi_matrix(0.5 * (m + m.T))
    k = len(s) if top_k is None else min(top_k, len(s))
    # Column phases are fixed only up to a sign by the factorization.
    u = u[:, :k] / sw[:, None]
    modes = [TemporalMode(grid, u[:, i]) for i in range(k)]
    return TakagiDecomposition(s[:k].copy(), modes)


def degenerate_blocks(populations: np.ndarray, tol: float = DEGENERACY_TOL) -> list[list[int]]:
    blocks: list[list[int]] = []
    for i, n in enumerate(populations):
        if blocks and abs(populations[blocks[-1][-1]] - n) <= tol:
            blocks[-1].append(i)
        else:
            blocks.append([i])
    return blocks


def principal_angles(a: list[TemporalMode], b: list[TemporalMode]) -> np.ndarray:
    """Principal angles (radians) between the spans of two orthonormal mode sets."""
    overlap = np.array([[inner_product(x, y) for y in b] for x in a])
    sv = np.linalg.svd(overlap, compute_uv=False)
    return np.arccos(np.clip(sv, -1.0, 1.0))


@dataclass
class RelationReport:
    """n_i = |lambda_i|^2 and mode agreement for every populated mode."""

    population_errors: np.ndarray
    mode_angles: list[float]
    blocks: list[list[int]]
    population_tol: float
    angle_tol: float

    @property
    def max_population_error(self) -> float:
        return float(np.max(self.population_errors, initial=0.0))

    @property
    def max_angle(self) -> float:
        return float(max(self.mode_angles, default=0.0))

    @property
    def passed(self) -> bool:
        return self.max_population_error <= self.population_tol and self.max_angle <= self.angle_tol


def relation_check(modes: ModeDecomposition, tak: TakagiDecomposition,
                   populated: float = 1e-2, population_tol: float = 1e-4,
                   angle_tol: float = 0.05) -> RelationReport:
    """Compare g1 eigenmodes with Takagi modes of the same field.

    Non-degenerate modes are compared by the angle arccos|<v_i, phi_i>|;
    degenerate blocks (populations within 1e-4) by principal angles between
    the spanned subspaces.
    """
    k = min(len(modes.populations), len(tak.values))
    n = modes.populations[:k]
    lam2 = tak.populations[:k]
    keep = [i for i in range(k) if max(n[i], lam2[i]) >= populated]
    errors = np.abs(n[keep] - lam2[keep])
    blocks = [b for b in degenerate_blocks(n[keep]) if b]
    blocks = [[keep[i] for i in b] for b in blocks]
    angles: list[float] = []
    for b in blocks:
        ang = principal_angles([modes.modes[i] for i in b], [tak.modes[i] for i in b])
        angles.append(float(np.max(ang)))
    return RelationReport(errors, angles, blocks, population_tol, angle_tol)


def fock_populations(rho: DensityMatrix) -> np.ndarray:
    if len(rho.space.factors) != 1:
        raise ValueError("Fock populations need a single-mode density matrix")
    return np.real(np.diag(rho.matrix)).copy()


def state_fidelity(rho: DensityMatrix, target: KetState) -> float:
    if rho.space != target.space:
        raise ValueError("state and target live on different spaces")
    t = target.amplitudes
    return float(np.real(t.conj() @ rho.matrix @ t))


def two_mode_state(psi: TwoPhotonAmplitude, va: TemporalMode, vb: TemporalMode,
                   dim: int = 3) -> tuple[KetState, float]:
    """Project a two-photon output onto modes (va, vb).

    Returns the normalized two-mode ket on factors ``("a", dim), ("b", dim)``
    and the probability captured by the projection (1 if the output lives
    entirely in the two modes).
    """
    w = psi.grid.weights
    fa = w * va.samples.conj()
    fb = w * vb.samples.conj()
    p = psi.values
    c20 = (fa @ p @ fa) / np.sqrt(2.0)
    c02 = (fb @ p @ fb) / np.sqrt(2.0)
    c11 = fa @ p @ fb
    space = HilbertSpace.of(("a", dim), ("b", dim))
    vec = np.zeros(space.dim, dtype=complex)
    vec[space.basis_index(a=2)] = c20
    vec[space.basis_index(b=2)] = c02
    vec[space.basis_index(a=1, b=1)] = c11
    captured = float(np.linalg.norm(vec) ** 2)
    return KetState(space, vec / np.sqrt(captured)), captured


def bell_state(phase: float, dim: int = 3) -> KetState:
    """(|0,2> + e^{i phase} |2,0>)/sqrt2 on factors a, b."""
    space = HilbertSpace.of(("a", dim), ("b", dim))
    return KetState.from_amplitudes(space, {(0, 2): 1.0, (2, 0): np.exp(1j * phase)})


def write_populations(path: str | Path, populations: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "n"])
        for i, n in enumerate(populations, start=1):
            writer.writerow([i, repr(float(n))])
