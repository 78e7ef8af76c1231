import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpulse.cascade import CascadeSystem, EmitCavity, first_order_correlation
from qpulse.analysis import eigenmodes, principal_angles
from qpulse.modes import (EPS_REG, G_MAX, CouplingFunction, GaussianParams, ModeError,
                          TemporalMode, TimeGrid, absorption_coupling, cascade_input_couplings,
                          cumulative, delay_mode, emission_coupling, gaussian_mode,
                          gram_schmidt_pair, inner_product, read_mode, remaining, rotate_pair,
                          time_reverse, write_mode)
from qpulse.quantum import KetState


def gauss(tau=1.0, t0=None, grid=None):
    grid = grid or TimeGrid(0.0, 16.0, 801)
    return gaussian_mode(GaussianParams(tau, 8.0 if t0 is None else t0), grid)


def hermite1(u: TemporalMode, t0: float) -> TemporalMode:
    return TemporalMode(u.grid, (u.times - t0) * u.samples).normalized()


def test_grid_basics():
    g = TimeGrid(0.0, 2.0, 5)
    assert g.dt == 0.5
    assert np.isclose(g.weights.sum(), 2.0)
    e = g.extended(2, 3)
    assert e.n_points == 10 and np.isclose(e.t_start, -1.0) and np.isclose(e.t_end, 3.5)
    with pytest.raises(ModeError):
        TimeGrid(1.0, 0.0, 5)
    with pytest.raises(ModeError):
        TimeGrid(0.0, 1.0, 1)


def test_default_grid_holds_pulse_and_relaxation():
    g = TimeGrid.for_gaussian(0.38)
    assert g.t_start == 0 and np.isclose(g.t_end, 6 * 0.38 + 14)
    assert np.isclose(TimeGrid.for_gaussian(5.0).t_end, 60.0)


def test_gaussian_peak_value():
    tau = 0.38
    u = gaussian_mode(GaussianParams(tau, 6 * tau), TimeGrid(0.0, 12 * tau, 601))
    # 1 / (sqrt(tau) pi^(1/4)) at the centre, which is grid point 300
    peak = u.samples[300]
    assert abs(peak.real - 1 / (np.sqrt(tau) * np.pi ** 0.25)) < 1e-9
    assert abs(peak.real - 1.2186) < 2e-4  # quoted to four decimals
    assert abs(u.norm - 1) < 1e-12


def test_gaussian_clipped_by_grid():
    with pytest.raises(ModeError):
        gaussian_mode(GaussianParams(1.0, 1.0), TimeGrid(0.0, 10.0, 201))
    with pytest.raises(ValueError):
        GaussianParams(-1.0, 0.0)


def test_couplings_at_pulse_centre():
    u = gauss()
    j = np.argmin(abs(u.times - 8.0))
    gu = emission_coupling(u)
    gv = absorption_coupling(u)
    # half the pulse is emitted (absorbed) at its centre
    assert abs(gu.values[j] - np.sqrt(2) * u.samples[j]) < 1e-6
    assert abs(gv.values[j] + np.sqrt(2) * u.samples[j]) < 1e-6
    assert gu.role == "emission" and gv.role == "absorption"


def test_coupling_regularization():
    u = gauss()
    gu = emission_coupling(u).values
    gv = absorption_coupling(u).values
    assert gu[-1] == 0 and gv[0] == 0
    assert np.all(np.abs(gu) <= G_MAX) and np.all(np.isfinite(gu))
    # cut where the remaining (accumulated) norm, not probability, drops below EPS_REG
    left = np.sqrt(remaining(np.abs(u.samples) ** 2, u.grid))
    assert np.all(gu[left < EPS_REG] == 0)
    assert np.all(gu[(left >= EPS_REG) & (np.abs(u.samples) > 0)] != 0)
    acc = np.sqrt(cumulative(np.abs(u.samples) ** 2, u.grid))
    assert np.all(gv[acc < EPS_REG] == 0)


def test_coupling_interpolation():
    grid = TimeGrid(0.0, 1.0, 3)
    g = CouplingFunction(grid, [0, 1j, 2], "emission")
    assert np.isclose(g.at(0.25), 0.5j)
    assert g.at(2.0) == 0
    with pytest.raises(ModeError):
        CouplingFunction(grid, [0, 1], "emission")


def test_time_reverse_of_centred_gaussian_is_itself():
    u = gauss()
    assert np.allclose(time_reverse(u).samples, u.samples)
    w = gauss(t0=6.0)
    assert np.allclose(time_reverse(time_reverse(w)).samples, w.samples)
    assert abs(inner_product(time_reverse(w), gauss(t0=10.0)) - 1) < 1e-9


def test_overlap_of_delayed_gaussians():
    o = inner_product(gauss(t0=7.0), gauss(t0=9.0))
    assert abs(o - np.exp(-1)) < 1e-6
    assert abs(np.exp(-1) - 0.36788) < 1e-5
    c = 0.3 - 0.4j
    assert np.isclose(inner_product(gauss(), gauss().scaled(c)), c)


def test_gram_schmidt_pair():
    u1 = gauss(t0=7.0)
    u2 = hermite1(gauss(t0=7.0), 7.0)
    a, b, o = gram_schmidt_pair(u1, u2)
    assert abs(o) < 1e-9 and np.allclose(b.samples, u2.samples, atol=1e-9)
    far = gauss(t0=9.0)
    a, b, o = gram_schmidt_pair(u1, far)
    assert abs(o - np.exp(-1)) < 1e-6
    perp = far - u1.scaled(o)
    assert abs(perp.norm ** 2 - (1 - np.exp(-2))) < 1e-6
    assert abs(inner_product(a, b)) < 1e-12 and abs(b.norm - 1) < 1e-12
    with pytest.raises(ModeError):
        gram_schmidt_pair(u1, u1)


def test_rotate_pair():
    u1 = gauss()
    u2 = hermite1(u1, 8.0)
    p, m = rotate_pair(u1, u2)
    assert abs(p.norm - 1) < 1e-9 and abs(inner_product(p, m)) < 1e-9
    with pytest.raises(ModeError):
        rotate_pair(u1, gauss(t0=8.5))


def test_delay_mode():
    u = gauss(t0=6.0)
    assert np.array_equal(delay_mode(u, 0.0).samples, u.samples)
    d = delay_mode(u, 1.5)
    assert abs(inner_product(d, gauss(t0=7.5)) - 1) < 1e-9
    back = delay_mode(d, -1.5)
    assert np.allclose(back.samples, u.samples)
    with pytest.raises(ModeError):
        delay_mode(u, 8.0)


def test_cascade_couplings_with_disjoint_modes():
    # u1 only starts after u2 is over, so the downstream cavity never distorts u2
    grid = TimeGrid(0.0, 30.0, 1501)
    u2 = gauss(1.0, 7.0, grid)
    u1 = gauss(1.0, 23.0, grid)
    g1, g2, w2 = cascade_input_couplings(u1, u2)
    assert np.max(np.abs(w2.samples - u2.samples)) < 1e-6
    with pytest.raises(ModeError):
        cascade_input_couplings(u1, gauss(1.0, 22.0, grid))


def test_cascade_couplings_unitary_for_gaussian_pair():
    u1 = gauss()
    u2 = hermite1(u1, 8.0)
    _, _, w2 = cascade_input_couplings(u1, u2)
    assert abs(w2.norm - 1) < 1e-4


def _linear_cascade(u1, u2, state, dim=3):
    g1, g2, _ = cascade_input_couplings(u1, u2)
    system = CascadeSystem((EmitCavity("u2", g2, dim), EmitCavity("u1", g1, dim)))
    psi = KetState.basis(system.space, **state)
    return eigenmodes(first_order_correlation(system, psi), 4)


def test_linear_cascade_emits_target_modes():
    u1 = gauss()
    u2 = hermite1(u1, 8.0)
    md = _linear_cascade(u1, u2, {"u1": 1, "u2": 1})
    assert np.allclose(md.populations[:2], 1, atol=1e-3) and md.populations[2] < 1e-4
    # degenerate pair: compare the spanned subspaces
    assert np.max(principal_angles(md.modes[:2], [u1, u2])) < 0.03
    # the u2 photon passes through the u1 cavity: room for three quanta there
    md = _linear_cascade(u1, u2, {"u1": 2, "u2": 1}, dim=4)
    assert abs(md.populations[0] - 2) < 2e-3 and abs(md.populations[1] - 1) < 2e-3
    assert abs(inner_product(md.modes[0], u1)) ** 2 >= 0.999
    assert abs(inner_product(md.modes[1], u2)) ** 2 >= 0.999


def test_mode_file_round_trip(tmp_path):
    u = gauss().scaled(np.exp(0.7j))
    write_mode(tmp_path / "u.csv", u)
    back = read_mode(tmp_path / "u.csv")
    assert back.grid.same_as(u.grid)
    assert np.array_equal(back.samples, u.samples)
    assert np.array_equal(back.times, u.times)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ModeError):
        read_mode(tmp_path / "bad.csv")


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 1.2), st.floats(-2.0, 2.0), st.floats(0, 2 * np.pi))
def test_inner_product_properties(tau, shift, phase):
    f = gauss(tau, 8.0)
    g = gauss(tau, 8.0 + shift).scaled(np.exp(1j * phase))
    assert np.isclose(inner_product(f, g), np.conj(inner_product(g, f)))
    assert abs(inner_product(f, g)) <= 1 + 1e-12
    assert np.isclose(inner_product(time_reverse(f), time_reverse(g)),
                      np.conj(inner_product(f, g)))
