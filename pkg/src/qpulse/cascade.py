"""Cascaded virtual-cavity systems and their master-equation dynamics.

A cascade is an ordered chain of channels, upstream first. Channel ``i``
contributes ``c_i(t) A_i`` to the collective emitted field
``L0(t) = sum_i c_i(t) A_i``: ``c = g*(t)`` with ``A = a`` for a virtual
cavity, ``c = sqrt(gamma)`` with ``A = sigma^-`` for the scatterer. The
chiral Hamiltonian is

    H(t) = (i/2) sum_{a upstream of b} (L_a^dag L_b - L_b^dag L_a),

which reproduces the emitter/scatterer/absorber Hamiltonians term by term.

Because everything is bilinear in the channel coefficients, the Lindblad
generator is ``sum_ik c_i c_k* S_ik`` with time-independent pair
superoperators ``S_ik``. Those are precomputed once on the subspace the
dynamics can actually reach: H conserves the total excitation number and L0
lowers it by one, so a state with at most N excitations never leaves the
``<= N`` subspace, and the difference of row and column excitation numbers of
every matrix element is conserved. ``evolve`` and the regression sweep use
this exact reduction; ``lindblad_rhs`` is the plain full-space reference.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .modes import CouplingFunction, TimeGrid
from .quantum import (TLS, DensityMatrix, HilbertSpace, KetState, Operator,
                      annihilation_on, tls_lowering, zero)

EMIT_DIM = 3
ABSORB_DIM = 4

TRACE_DRIFT_TOL = 1e-6
POSITIVITY_FLOOR = -1e-6


class InvariantViolation(RuntimeError):
    """A conservation or positivity check failed during integration."""


@dataclass(frozen=True, eq=False)
class EmitCavity:
    label: str
    coupling: CouplingFunction
    dim: int = EMIT_DIM


@dataclass(frozen=True)
class Scatterer:
    gamma: float = 1.0
    label: str = TLS
    dim: int = 2


@dataclass(frozen=True, eq=False)
class AbsorbCavity:
    label: str
    coupling: CouplingFunction
    dim: int = ABSORB_DIM


Component = EmitCavity | Scatterer | AbsorbCavity


@dataclass(frozen=True, eq=False)
class CascadeSystem:
    """Chain of components ordered upstream -> downstream.

    Emitting cavities come first, then at most one scatterer, then at most
    one absorbing cavity. Chains without a scatterer are linear optics and are
    used for the virtual-cavity consistency checks.
    """

    chain: tuple[Component, ...]
    space: HilbertSpace = field(init=False)

    def __post_init__(self):
        chain = tuple(self.chain)
        object.__setattr__(self, "chain", chain)
        kinds = [type(c) for c in chain]
        if kinds.count(Scatterer) > 1:
            raise ValueError("a cascade holds at most one scatterer")
        if kinds.count(AbsorbCavity) > 1:
            raise ValueError("a cascade holds at most one absorbing cavity")
        if AbsorbCavity in kinds and kinds[-1] is not AbsorbCavity:
            raise ValueError("the absorbing cavity must be the last component")
        if Scatterer in kinds and EmitCavity in kinds[kinds.index(Scatterer):]:
            raise ValueError("emitting cavities must precede the scatterer")
        if not chain:
            raise ValueError("empty cascade")
        object.__setattr__(self, "space",
                           HilbertSpace(tuple((c.label, c.dim) for c in chain)))

    @property
    def gamma(self) -> float:
        for c in self.chain:
            if isinstance(c, Scatterer):
                return c.gamma
        return 0.0

    @property
    def grid(self) -> TimeGrid | None:
        for c in self.chain:
            if not isinstance(c, Scatterer):
                return c.coupling.grid
        return None

    @property
    def cavity_labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.chain if not isinstance(c, Scatterer))

    def channel_operators(self) -> list[Operator]:
        return [tls_lowering(self.space) if isinstance(c, Scatterer)
                else annihilation_on(self.space, c.label) for c in self.chain]

    def coefficients(self, t) -> np.ndarray:
        """Channel coefficients c_i(t); shape ``t.shape + (n_channels,)``."""
        t = np.asarray(t, dtype=float)
        cols = []
        for c in self.chain:
            if isinstance(c, Scatterer):
                cols.append(np.full(t.shape, np.sqrt(c.gamma), dtype=complex))
            else:
                cols.append(np.conj(c.coupling.at(t)))
        return np.stack(cols, axis=-1)

    def jump(self, t: float) -> Operator:
        """Collective emitted-field operator L0(t)."""
        out = zero(self.space)
        for c, a in zip(self.coefficients(t), self.channel_operators()):
            out = out + c * a
        return out

    def hamiltonian(self, t: float) -> Operator:
        ops = self.channel_operators()
        ls = [c * a for c, a in zip(self.coefficients(t), ops)]
        h = zero(self.space)
        for i in range(len(ls)):
            for j in range(i + 1, len(ls)):
                h = h + 0.5j * (ls[i].dag() @ ls[j] - ls[j].dag() @ ls[i])
        return h

    def excitation_number(self) -> Operator:
        return Operator(self.space, np.diag(self.space.excitations.astype(complex)))


def build_emit_scatter(g_u: CouplingFunction, gamma: float = 1.0,
                       emit_dim: int = EMIT_DIM) -> CascadeSystem:
    """u-cavity emitting into the scatterer."""
    return CascadeSystem((EmitCavity("u", g_u, emit_dim), Scatterer(gamma)))


def build_emit_scatter_absorb(g_u: CouplingFunction, g_v: CouplingFunction,
                              gamma: float = 1.0, emit_dim: int = EMIT_DIM,
                              absorb_dim: int = ABSORB_DIM) -> CascadeSystem:
    return CascadeSystem((EmitCavity("u", g_u, emit_dim), Scatterer(gamma),
                          AbsorbCavity("v", g_v, absorb_dim)))


def build_two_emit_scatter(g_u2: CouplingFunction, g_u1: CouplingFunction,
                           gamma: float = 1.0, emit_dim: int = EMIT_DIM) -> CascadeSystem:
    """Two input cavities (u2 upstream of u1) and the scatterer; no absorber."""
    return CascadeSystem((EmitCavity("u2", g_u2, emit_dim), EmitCavity("u1", g_u1, emit_dim),
                          Scatterer(gamma)))


def build_two_emit_scatter_absorb(g_u2: CouplingFunction, g_u1: CouplingFunction,
                                  g_v: CouplingFunction, gamma: float = 1.0,
                                  emit_dim: int = EMIT_DIM,
                                  absorb_dim: int = ABSORB_DIM) -> CascadeSystem:
    return CascadeSystem((EmitCavity("u2", g_u2, emit_dim), EmitCavity("u1", g_u1, emit_dim),
                          Scatterer(gamma), AbsorbCavity("v", g_v, absorb_dim)))


def lindblad_rhs(system: CascadeSystem, t: float, rho: DensityMatrix | np.ndarray) -> np.ndarray:
    """Full-space d rho / dt = -i[H, rho] + L0 rho L0^dag - {L0^dag L0, rho}/2."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if m.shape != (system.space.dim, system.space.dim):
        raise ValueError(f"state of shape {m.shape} does not match {system.space.dim}")
    h = system.hamiltonian(t).matrix
    l = system.jump(t).matrix
    ld = l.conj().T
    ldl = ld @ l
    return -1j * (h @ m - m @ h) + l @ m @ ld - 0.5 * (ldl @ m + m @ ldl)


# --------------------------------------------------------------------------
# Restricted-sector machinery


class _Sector:
    """Matrix elements (p, q) of the <= n_max subspace with
    exc(q) - exc(p) in ``shifts``."""

    def __init__(self, space: HilbertSpace, n_max: int, shifts: Sequence[int]):
        self.space = space
        self.keep = np.flatnonzero(space.excitations <= n_max)
        exc = space.excitations[self.keep]
        r = len(self.keep)
        diff = exc[None, :] - exc[:, None]
        mask = np.isin(diff, list(shifts))
        self.dim = r
        self.flat = np.flatnonzero(mask.ravel())
        self.rows, self.cols = np.unravel_index(self.flat, (r, r))

    def restrict_op(self, op: np.ndarray) -> np.ndarray:
        return op[np.ix_(self.keep, self.keep)]

    def pack(self, full: np.ndarray) -> np.ndarray:
        return self.restrict_op(full).ravel()[self.flat]

    def unpack_small(self, vec: np.ndarray) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        out.ravel()[self.flat] = vec
        return out

    def unpack(self, vec: np.ndarray) -> np.ndarray:
        n = self.space.dim
        out = np.zeros((n, n), dtype=complex)
        out[np.ix_(self.keep, self.keep)] = self.unpack_small(vec)
        return out

    def outside_weight(self, full: np.ndarray) -> float:
        restricted = np.zeros_like(full)
        restricted[np.ix_(self.keep, self.keep)] = self.unpack_small(self.pack(full))
        return float(np.max(np.abs(full - restricted), initial=0.0))


def _pair_superoperators(system: CascadeSystem, sector: _Sector) -> np.ndarray:
    """S_ik on the sector, shape (m*m, E, E); generator = sum c_i c_k* S_ik.

    S_ik X = A_i X A_k^dag - (X K if k upstream of i, K X if downstream,
    {K, X}/2 if i == k), with K = A_k^dag A_i.
    """
    ops = [sector.restrict_op(a.matrix) for a in system.channel_operators()]
    r = sector.dim
    eye = np.eye(r)
    sel = np.ix_(sector.flat, sector.flat)
    m = len(ops)
    out = np.empty((m * m, len(sector.flat), len(sector.flat)), dtype=complex)
    for i in range(m):
        for k in range(m):
            a_i, a_k = ops[i], ops[k]
            kk = a_k.conj().T @ a_i
            # row-major vec: vec(A X B) = kron(A, B^T) vec(X)
            s = np.kron(a_i, a_k.conj())
            if k < i:
                s = s - np.kron(eye, kk.T)
            elif k > i:
                s = s - np.kron(kk, eye)
            else:
                s = s - 0.5 * (np.kron(kk, eye) + np.kron(eye, kk.T))
            out[i * m + k] = s[sel]
    return out


def _no_jump_operators(system: CascadeSystem, exc: int) -> tuple[np.ndarray, np.ndarray]:
    """Pieces of -i H_eff on the exactly-``exc`` subspace.

    -i H_eff = -sum_{k downstream of i} c_i c_k* A_k^dag A_i
               - (1/2) sum_i |c_i|^2 A_i^dag A_i.
    Returns (indices of the subspace, array (m*m, d, d) of weights * K_ik).
    """
    idx = np.flatnonzero(system.space.excitations == exc)
    ops = [a.matrix for a in system.channel_operators()]
    m = len(ops)
    out = np.zeros((m * m, len(idx), len(idx)), dtype=complex)
    for i in range(m):
        for k in range(i, m):
            kk = (ops[k].conj().T @ ops[i])[np.ix_(idx, idx)]
            out[i * m + k] = -(0.5 if k == i else 1.0) * kk
    return idx, out


def _stage_times(grid: TimeGrid, substeps: int) -> np.ndarray:
    """All RK4 node times: each grid interval split into ``substeps`` steps,
    each step sampled at its start, midpoint and end."""
    n = 2 * substeps * (grid.n_points - 1) + 1
    return np.linspace(grid.t_start, grid.t_end, n)


class _Stepper:
    """RK4 for batches of vectors obeying dX/dt = X @ G(t)^T,
    G(t) = sum_p coef_p(t) S_p."""

    def __init__(self, pieces: np.ndarray, pair_coefs: np.ndarray, h: float):
        self.pieces = pieces.reshape(pieces.shape[0], -1)
        self.shape = pieces.shape[1:]
        self.coefs = pair_coefs
        self.h = h
        self._cache: tuple[int, np.ndarray] | None = None

    def generator_t(self, j: int) -> np.ndarray:
        if self._cache is not None and self._cache[0] == j:
            return self._cache[1]
        g = (self.coefs[j] @ self.pieces).reshape(self.shape).T.copy()
        self._cache = (j, g)
        return g

    def step(self, x: np.ndarray, j: int) -> np.ndarray:
        """Advance from node ``j`` to ``j + 2``."""
        h = self.h
        g0 = self.generator_t(j)
        g1 = self.generator_t(j + 1)
        g2 = self.generator_t(j + 2)
        k1 = x @ g0
        k2 = (x + 0.5 * h * k1) @ g1
        k3 = (x + 0.5 * h * k2) @ g1
        k4 = (x + h * k3) @ g2
        return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _pair_coefficients(system: CascadeSystem, times: np.ndarray) -> np.ndarray:
    c = system.coefficients(times)
    m = c.shape[-1]
    return (c[:, :, None] * c[:, None, :].conj()).reshape(len(times), m * m)


def _state_sector(system: CascadeSystem, rho0: np.ndarray, shift_offset: int = 0) -> _Sector:
    exc = system.space.excitations
    support = np.flatnonzero(np.abs(rho0).max(axis=1) > 1e-14)
    n_max = int(exc[support].max()) if support.size else 0
    rows, cols = np.nonzero(np.abs(rho0) > 1e-14)
    shifts = sorted(set((exc[cols] - exc[rows]).tolist())) or [0]
    return _Sector(system.space, n_max, [s + shift_offset for s in shifts])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States and observables of one master-equation run at the grid points."""

    system: CascadeSystem
    grid: TimeGrid
    substeps: int
    packed_states: np.ndarray
    observables: dict[str, np.ndarray]
    _sector: _Sector = field(repr=False)

    def state(self, k: int) -> DensityMatrix:
        return DensityMatrix(self.system.space, self._sector.unpack(self.packed_states[k]))

    @property
    def final_state(self) -> DensityMatrix:
        return self.state(-1)

    def restricted_state(self, k: int) -> np.ndarray:
        return self._sector.unpack_small(self.packed_states[k])

    def conservation_error(self) -> float:
        """Max deviation of (stored + emitted excitations) from its initial value."""
        total = self.observables["stored"] + self.observables["emitted"]
        return float(np.max(np.abs(total - total[0])))


def evolve(system: CascadeSystem, rho0: DensityMatrix | KetState, grid: TimeGrid | None = None,
           substeps: int = 10, check: bool = True) -> Trajectory:
    """Fixed-step RK4 integration of the cascaded master equation.

    Observables recorded at each grid point: ``n_<label>`` for every cavity,
    ``tls`` (excited-state population), ``stored`` (total excitation number
    in the system), ``rate`` (<L0^dag L0>), ``emitted`` (its running
    integral, accumulated at integrator-step resolution), ``trace`` and
    ``min_eig``.

    Raises:
        InvariantViolation: trace drift above 1e-6 or a density-matrix
            eigenvalue below -1e-6 at any grid point.
    """
    if isinstance(rho0, KetState):
        rho0 = rho0.density_matrix()
    if rho0.space != system.space:
        raise ValueError("initial state does not live on the system space")
    grid = grid or system.grid
    if grid is None:
        raise ValueError("no time grid given and the system has no couplings")
    m0 = rho0.matrix
    sector = _state_sector(system, m0)
    if sector.outside_weight(m0) > 1e-14:
        raise ValueError("initial state has weight outside its excitation sectors")

    times = _stage_times(grid, substeps)
    h = grid.dt / substeps
    coefs = _pair_coefficients(system, times)
    stepper = _Stepper(_pair_superoperators(system, sector), coefs, h)

    ops = [sector.restrict_op(a.matrix) for a in system.channel_operators()]
    m = len(ops)
    # rate = Tr(L0^dag L0 rho) = sum_ik c_i c_k* Tr(A_k^dag A_i rho)
    rate_pieces = np.array([((ops[k].conj().T @ ops[i]).T).ravel()[sector.flat]
                            for i in range(m) for k in range(m)])
    exc_diag = system.space.excitations[sector.keep].astype(float)
    numbers = {}
    for comp, a in zip(system.chain, ops):
        numbers["tls" if isinstance(comp, Scatterer) else f"n_{comp.label}"] = \
            np.real(np.diag(a.conj().T @ a))

    def rate_at(j: int, vec: np.ndarray) -> float:
        return float(np.real(coefs[j] @ (rate_pieces @ vec)))

    n = grid.n_points
    x = sector.pack(m0)[None, :]
    packed = np.empty((n, x.shape[1]), dtype=complex)
    obs = {key: np.empty(n) for key in [*numbers, "stored", "rate", "emitted", "trace", "min_eig"]}
    emitted = 0.0
    for k in range(n):
        if k > 0:
            base = 2 * substeps * (k - 1)
            r_prev = rate_at(base, x[0])
            for s in range(substeps):
                x = stepper.step(x, base + 2 * s)
                r_next = rate_at(base + 2 * s + 2, x[0])
                emitted += 0.5 * h * (r_prev + r_next)
                r_prev = r_next
        packed[k] = x[0]
        rho = sector.unpack_small(x[0])
        diag = np.real(np.diag(rho))
        for key, nd in numbers.items():
            obs[key][k] = nd @ diag
        obs["stored"][k] = exc_diag @ diag
        obs["rate"][k] = rate_at(2 * substeps * k, x[0])
        obs["emitted"][k] = emitted
        obs["trace"][k] = diag.sum()
        obs["min_eig"][k] = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
        if check:
            _check_state(obs["trace"][k], obs["min_eig"][k], grid.times[k])
    return Trajectory(system, grid, substeps, packed, obs, sector)


def _check_state(trace: float, min_eig: float, t: float):
    if abs(trace - 1.0) > TRACE_DRIFT_TOL:
        raise InvariantViolation(f"trace drifted to {trace:.9f} at t={t:.4f}; reduce the step size")
    if min_eig < POSITIVITY_FLOOR:
        raise InvariantViolation(
            f"density matrix eigenvalue {min_eig:.3e} at t={t:.4f}; reduce the step size")


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """values[j, k] = g1(t_j, t_k) = <L0^dag(t_j) L0(t_k)>."""

    grid: TimeGrid
    values: np.ndarray

    def photon_number(self) -> float:
        return float(np.real(self.grid.weights @ np.diag(self.values)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.values - self.values.conj().T)))


def first_order_correlation(system: CascadeSystem, rho0: DensityMatrix | KetState,
                            grid: TimeGrid | None = None, substeps: int = 10,
                            trajectory: Trajectory | None = None) -> CorrelationMatrix:
    """Two-time field correlation by the quantum regression theorem.

    For every t_j the operator B = L0(t_j) rho(t_j) is propagated with the
    master-equation generator to every later t_k, giving
    g1(t_k, t_j) = Tr[L0^dag(t_k) B(t_k)]. All B's are propagated together
    as one batch; the upper triangle follows by Hermitian symmetry.
    """
    if trajectory is None:
        trajectory = evolve(system, rho0, grid, substeps)
    grid = trajectory.grid
    substeps = trajectory.substeps
    rho_sector = trajectory._sector
    # B = L0 rho lowers the row excitation by one.
    shifts = sorted({int(d) for d in np.unique(
        (system.space.excitations[rho_sector.keep][rho_sector.cols]
         - system.space.excitations[rho_sector.keep][rho_sector.rows]))})
    b_sector = _Sector(system.space, int(system.space.excitations[rho_sector.keep].max()),
                       [s + 1 for s in shifts])
    assert np.array_equal(b_sector.keep, rho_sector.keep)

    times = _stage_times(grid, substeps)
    h = grid.dt / substeps
    stepper = _Stepper(_pair_superoperators(system, b_sector),
                       _pair_coefficients(system, times), h)
    ops = np.array([rho_sector.restrict_op(a.matrix) for a in system.channel_operators()])
    grid_coefs = system.coefficients(grid.times)

    n = grid.n_points
    stack = np.zeros((n, len(b_sector.flat)), dtype=complex)
    g1 = np.zeros((n, n), dtype=complex)
    for k in range(n):
        if k > 0:
            base = 2 * substeps * (k - 1)
            active = stack[:k]
            for s in range(substeps):
                active = stepper.step(active, base + 2 * s)
            stack[:k] = active
        l0 = np.tensordot(grid_coefs[k], ops, axes=1)
        stack[k] = (l0 @ trajectory.restricted_state(k)).ravel()[b_sector.flat]
        # Tr(L0^dag B) = sum conj(L0) * B elementwise
        g1[k, :k + 1] = stack[:k + 1] @ l0.ravel()[b_sector.flat].conj()
    lower = np.tril(g1, -1)
    values = lower + lower.conj().T + np.diag(np.real(np.diag(g1)))
    return CorrelationMatrix(grid, values)


@dataclass(frozen=True, eq=False)
class TwoPhotonAmplitude:
    """Two-photon field amplitude psi(t1, t2) = <0| b(t1) b(t2) |out>.

    With this normalization ``int int |psi|^2 = 2`` for a complete two-photon
    emission and the Takagi values of psi square to the mean photon numbers
    of the output modes. ``wavefunction`` is the unit-norm version.
    """

    grid: TimeGrid
    values: np.ndarray

    @property
    def wavefunction(self) -> np.ndarray:
        return self.values / np.sqrt(2.0)

    def norm_squared(self) -> float:
        w = self.grid.weights
        return float(np.real(w @ (np.abs(self.values) ** 2) @ w))

    def emission_probability(self) -> float:
        return 0.5 * self.norm_squared()

    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T)))


def two_photon_amplitude(system: CascadeSystem, psi0: KetState, grid: TimeGrid | None = None,
                         substeps: int = 10) -> TwoPhotonAmplitude:
    """Two-photon emission amplitude from no-jump pure-state evolution.

    For t1 <= t2, psi(t1, t2) = <vac| L0(t2) U(t2, t1) L0(t1) U(t1, t0) |psi0>
    with U generated by H_eff = H - (i/2) L0^dag L0; the lower triangle is
    filled by symmetry.
    """
    if any(isinstance(c, AbsorbCavity) for c in system.chain):
        raise ValueError("two-photon amplitude needs a chain without an absorbing cavity")
    if psi0.space != system.space:
        raise ValueError("initial state does not live on the system space")
    exc = system.space.excitations
    amps = psi0.amplitudes
    if np.max(np.abs(amps[exc != 2]), initial=0.0) > 1e-12:
        raise ValueError("initial state is not a two-excitation eigenstate")
    grid = grid or system.grid
    times = _stage_times(grid, substeps)
    h = grid.dt / substeps
    coefs = _pair_coefficients(system, times)

    idx2, k2 = _no_jump_operators(system, 2)
    idx1, k1 = _no_jump_operators(system, 1)
    idx0 = np.flatnonzero(exc == 0)
    step2 = _Stepper(k2, coefs, h)
    step1 = _Stepper(k1, coefs, h)
    ops = np.array([a.matrix for a in system.channel_operators()])
    grid_coefs = system.coefficients(grid.times)

    n = grid.n_points
    x = amps[idx2][None, :]
    stack = np.zeros((n, len(idx1)), dtype=complex)
    amp = np.zeros((n, n), dtype=complex)
    for k in range(n):
        if k > 0:
            base = 2 * substeps * (k - 1)
            active = stack[:k]
            for s in range(substeps):
                x = step2.step(x, base + 2 * s)
                active = step1.step(active, base + 2 * s)
            stack[:k] = active
        l0 = np.tensordot(grid_coefs[k], ops, axes=1)
        stack[k] = l0[np.ix_(idx1, idx2)] @ x[0]
        amp[:k + 1, k] = stack[:k + 1] @ l0[np.ix_(idx0, idx1)][0]
    upper = np.triu(amp, 1)
    values = upper + upper.T + np.diag(np.diag(amp))
    return TwoPhotonAmplitude(grid, values)
