"""Temporal modes on a uniform time grid and the virtual-cavity couplings
that emit or absorb them.

Times are in units of 1/gamma and couplings in units of sqrt(gamma). All
integrals use the trapezoidal rule so that couplings, overlaps and
correlation-matrix weights agree on one quadrature.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

EPS_REG = 1e-8
G_MAX = 1e3
NORM_TOL = 1e-6


class ModeError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ModeError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not self.t_end > self.t_start:
            raise ModeError("t_end must exceed t_start")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / (self.n_points - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_points)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.n_points, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def extended(self, before: int, after: int) -> "TimeGrid":
        """Same spacing, ``before``/``after`` extra points on either side."""
        dt = self.dt
        return TimeGrid(self.t_start - before * dt, self.t_end + after * dt,
                        self.n_points + before + after)

    def same_as(self, other: "TimeGrid") -> bool:
        tol = 1e-12 * max(1.0, abs(self.dt))
        return (self.n_points == other.n_points
                and np.isclose(self.t_start, other.t_start, rtol=0, atol=tol)
                and np.isclose(self.t_end, other.t_end, rtol=0, atol=tol))

    @classmethod
    def for_gaussian(cls, tau: float, n_points: int = 600, relax: float = 14.0) -> "TimeGrid":
        """Default grid for a Gaussian of width ``tau`` centred at ``6 tau``.

        The window holds the +-6 tau pulse support followed by ``relax``
        lifetimes for the scatterer to decay.
        """
        return cls(0.0, max(12.0 * tau, 6.0 * tau + relax), n_points)


def trapezoid(values: np.ndarray, grid: TimeGrid) -> complex:
    return complex(np.dot(grid.weights, values))


def cumulative(values: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Running trapezoidal integral from ``t_start``; first entry is 0."""
    out = np.zeros(len(values), dtype=np.result_type(values, float))
    out[1:] = np.cumsum(0.5 * grid.dt * (values[1:] + values[:-1]))
    return out


def remaining(values: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Running trapezoidal integral up to ``t_end``; last entry is 0.

    Summed from the end so that small tails keep full relative precision.
    """
    return cumulative(values[::-1], grid)[::-1]


@dataclass(frozen=True, eq=False)
class TemporalMode:
    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex).reshape(-1)
        if s.size != self.grid.n_points:
            raise ModeError(f"{s.size} samples for a grid of {self.grid.n_points} points")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def norm(self) -> float:
        return float(np.sqrt(trapezoid(np.abs(self.samples) ** 2, self.grid).real))

    def normalized(self) -> "TemporalMode":
        n = self.norm
        if n == 0:
            raise ModeError("cannot normalize a zero mode")
        return TemporalMode(self.grid, self.samples / n)

    def scaled(self, c: complex) -> "TemporalMode":
        return TemporalMode(self.grid, c * self.samples)

    def __add__(self, other: "TemporalMode") -> "TemporalMode":
        _check_grids(self, other)
        return TemporalMode(self.grid, self.samples + other.samples)

    def __sub__(self, other: "TemporalMode") -> "TemporalMode":
        _check_grids(self, other)
        return TemporalMode(self.grid, self.samples - other.samples)

    def padded(self, before: int, after: int) -> "TemporalMode":
        """The same envelope on a grid extended by zero samples."""
        s = np.concatenate([np.zeros(before), self.samples, np.zeros(after)])
        return TemporalMode(self.grid.extended(before, after), s)

    def require_normalized(self, tol: float = NORM_TOL):
        if abs(self.norm - 1.0) > tol:
            raise ModeError(f"mode is not normalized (norm {self.norm:.9f})")


def _check_grids(f: TemporalMode, g: TemporalMode):
    if not f.grid.same_as(g.grid):
        raise ModeError("modes live on different time grids")


@dataclass(frozen=True)
class GaussianParams:
    tau: float
    t0: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ModeError(f"tau must be positive, got {self.tau}")


def gaussian_mode(params: GaussianParams, grid: TimeGrid) -> TemporalMode:
    """u(t) = exp(-(t - t0)^2 / 2 tau^2) / (sqrt(tau) pi^(1/4)), renormalized on the grid."""
    tau, t0 = params.tau, params.t0
    t = grid.times
    u = np.exp(-((t - t0) ** 2) / (2 * tau ** 2)) / (np.sqrt(tau) * np.pi ** 0.25)
    mode = TemporalMode(grid, u)
    deficit = 1.0 - mode.norm ** 2
    if deficit > NORM_TOL:
        raise ModeError(
            f"Gaussian (tau={tau}, t0={t0}) is clipped by the grid "
            f"[{grid.t_start}, {grid.t_end}] (norm deficit {deficit:.2e})"
        )
    return mode.normalized()


@dataclass(frozen=True, eq=False)
class CouplingFunction:
    grid: TimeGrid
    values: np.ndarray
    role: Literal["emission", "absorption"]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if v.size != self.grid.n_points:
            raise ModeError("coupling length does not match grid")
        if not np.all(np.isfinite(v)):
            raise ModeError("coupling has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def at(self, t) -> np.ndarray:
        """Linear interpolation between grid samples; zero outside the grid."""
        ts = self.grid.times
        re = np.interp(t, ts, self.values.real, left=0.0, right=0.0)
        im = np.interp(t, ts, self.values.imag, left=0.0, right=0.0)
        return re + 1j * im

    @classmethod
    def zero(cls, grid: TimeGrid, role: Literal["emission", "absorption"] = "emission"):
        return cls(grid, np.zeros(grid.n_points), role)


def _regularized(numer: np.ndarray, weight_left: np.ndarray) -> np.ndarray:
    """numer / sqrt(weight_left), zeroed where the remaining norm sqrt(weight_left) < EPS_REG."""
    g = np.zeros_like(numer)
    ok = np.sqrt(np.maximum(weight_left, 0.0)) >= EPS_REG
    g[ok] = numer[ok] / np.sqrt(weight_left[ok])
    mag = np.abs(g)
    big = mag > G_MAX
    g[big] *= G_MAX / mag[big]
    return g


def emission_coupling(mode: TemporalMode) -> CouplingFunction:
    """g_u(t) = u*(t) / sqrt(1 - int_0^t |u|^2), zero once the pulse is emitted."""
    mode.require_normalized()
    left = remaining(np.abs(mode.samples) ** 2, mode.grid) / mode.norm ** 2
    return CouplingFunction(mode.grid, _regularized(mode.samples.conj(), left), "emission")


def absorption_coupling(mode: TemporalMode) -> CouplingFunction:
    """g_v(t) = -v*(t) / sqrt(int_0^t |v|^2), zero before the pulse arrives."""
    mode.require_normalized()
    acc = cumulative(np.abs(mode.samples) ** 2, mode.grid) / mode.norm ** 2
    return CouplingFunction(mode.grid, _regularized(-mode.samples.conj(), acc), "absorption")


def time_reverse(mode: TemporalMode) -> TemporalMode:
    """v(t) -> v(-t)*, realized as sample reversal about the grid midpoint."""
    return TemporalMode(mode.grid, mode.samples[::-1].conj())


def inner_product(f: TemporalMode, g: TemporalMode) -> complex:
    """<f, g> = int f*(t) g(t) dt."""
    _check_grids(f, g)
    return trapezoid(f.samples.conj() * g.samples, f.grid)


def rotate_pair(v1: TemporalMode, v2: TemporalMode, tol: float = NORM_TOL
                ) -> tuple[TemporalMode, TemporalMode]:
    """Hadamard rotation (v1 + v2)/sqrt2, (v1 - v2)/sqrt2 of an orthonormal pair."""
    overlap = inner_product(v1, v2)
    if abs(overlap) > tol:
        raise ModeError(f"modes are not orthogonal (overlap {abs(overlap):.2e})")
    s = 1 / np.sqrt(2)
    return (v1 + v2).scaled(s), (v1 - v2).scaled(s)


def gram_schmidt_pair(u1: TemporalMode, u2: TemporalMode
                      ) -> tuple[TemporalMode, TemporalMode, complex]:
    """Orthonormalize (u1, u2) keeping u1; returns (u1, u2_perp, <u1, u2>).

    The second mode is divided by sqrt(1 - |o|^2), the norm of
    ``u2 - o u1`` for unit-norm inputs.
    """
    o = inner_product(u1, u2)
    if abs(o) > 1 - 1e-9:
        raise ModeError(f"modes are (nearly) parallel, |<u1,u2>| = {abs(o):.12f}")
    perp = u2 - u1.scaled(o)
    return u1, perp.normalized(), o


def delay_mode(mode: TemporalMode, d: float) -> TemporalMode:
    """Shift the envelope later by ``d`` (rounded to whole grid steps)."""
    k = int(round(d / mode.grid.dt))
    s = mode.samples
    if k == 0:
        return TemporalMode(mode.grid, s.copy())
    shifted = np.zeros_like(s)
    if k > 0:
        shifted[k:] = s[:-k]
        lost = s[-k:]
    else:
        shifted[:k] = s[-k:]
        lost = s[:-k]
    out = TemporalMode(mode.grid, shifted)
    lost_norm = mode.norm ** 2 - out.norm ** 2
    if lost_norm > NORM_TOL or np.abs(lost).max() > np.sqrt(NORM_TOL):
        raise ModeError(f"delay {d} pushes the mode support off the grid")
    return out


def cascade_input_couplings(u1: TemporalMode, u2: TemporalMode
                            ) -> tuple[CouplingFunction, CouplingFunction, TemporalMode]:
    """Couplings for two cascaded emitters whose joint output is (u1, u2).

    The downstream cavity emits u1 directly. The upstream cavity must emit an
    auxiliary mode w2 that the downstream cavity distorts into u2. With the
    downstream amplitude alpha obeying
    ``dalpha/dt = |g1|^2 alpha / 2 - g1 u2``, ``alpha(t_start) = 0``, the
    auxiliary mode is ``w2 = u2 - g1* alpha``.

    The ODE is linear with integrating factor ``1/sqrt(1 - C1(t))``, C1 the
    emitted fraction of u1, which gives the exact solution
    ``alpha = -int_0^t u1* u2 / sqrt(1 - C1)`` used here.

    Returns:
        ``(g_u1, g_u2, w2)``.
    """
    u1.require_normalized()
    u2.require_normalized()
    overlap = inner_product(u1, u2)
    if abs(overlap) > NORM_TOL:
        raise ModeError(f"input modes are not orthogonal (overlap {abs(overlap):.2e})")
    g1 = emission_coupling(u1)
    grid = u1.grid
    n1 = u1.norm ** 2
    left = remaining(np.abs(u1.samples) ** 2, grid) / n1
    cross = cumulative(u1.samples.conj() * u2.samples, grid) / np.sqrt(n1)
    alpha = np.zeros(grid.n_points, dtype=complex)
    ok = g1.values != 0
    alpha[ok] = -cross[ok] / np.sqrt(left[ok])
    w2 = TemporalMode(grid, u2.samples - g1.values.conj() * alpha)
    if abs(w2.norm - 1.0) > 1e-4:
        raise ModeError(
            f"auxiliary upstream mode has norm {w2.norm:.6f}; the grid is too coarse "
            "or the input modes are invalid"
        )
    g2 = emission_coupling(w2.normalized())
    return g1, g2, w2


def write_mode(path: str | Path, mode: TemporalMode) -> None:
    """CSV with header ``t,re,im``; values written with full float precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "re", "im"])
        for t, z in zip(mode.times, mode.samples):
            writer.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])


def read_mode(path: str | Path) -> TemporalMode:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["t", "re", "im"]:
            raise ModeError(f"{path}: expected header t,re,im, got {header}")
        rows = np.array([[float(x) for x in row] for row in reader if row])
    t = rows[:, 0]
    grid = TimeGrid(t[0], t[-1], len(t))
    if not np.allclose(t, grid.times, rtol=0, atol=1e-9 * max(1.0, grid.t_end - grid.t_start)):
        raise ModeError(f"{path}: time column is not a uniform grid")
    return TemporalMode(grid, rows[:, 1] + 1j * rows[:, 2])
