import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqedtrap.physics import (
    CESIUM,
    DEFAULT_SCATTER_AVERAGING,
    CavityQedParams,
    DomainError,
    FortConfig,
    Vec3,
    cavity_buildup,
    central_antinode,
    coupling_g,
    critical_numbers,
    fort_gradient,
    fort_potential,
    free_fall_velocity,
    mode_function,
    nearest_fort_antinode,
    scattering_rate,
    trap_frequencies,
)


def test_critical_numbers(params):
    m0, n0 = critical_numbers(params)
    assert m0 == pytest.approx(2.6**2 / (2 * 32**2), rel=1e-12)
    assert n0 == pytest.approx(2 * 4 * 2.6 / 32**2, rel=1e-12)
    assert round(m0, 4) == 0.0033
    assert round(n0, 4) == 0.0203


def test_wavelengths(params):
    assert params.lambda_cavity == pytest.approx(852.4e-9, rel=1e-12)
    assert params.lambda_fort == pytest.approx(868.95e-9, rel=1e-5)
    assert params.cavity_length_l == pytest.approx(44.751e-6, rel=1e-4)


def test_invalid_params():
    with pytest.raises(ValueError):
        CavityQedParams(kappa=-1.0)
    with pytest.raises(ValueError):
        CavityQedParams(n_cavity=104.5)
    with pytest.raises(ValueError):
        # mode 100 sits far from the atomic line
        CavityQedParams(n_cavity=100)


def test_mode_function_values(params):
    l = params.cavity_length_l
    assert mode_function(Vec3(0.0, 0.0, 0.0), 105, params) == pytest.approx(0.0, abs=1e-12)
    assert abs(mode_function(Vec3(l / 2, 0.0, 0.0), 105, params)) == pytest.approx(1.0, abs=1e-12)
    r = Vec3(l / 2, params.waist_w0, 0.0)
    assert abs(mode_function(r, 105, params)) == pytest.approx(math.exp(-1), rel=1e-12)


def test_mode_function_domain(params):
    with pytest.raises(DomainError):
        mode_function(Vec3(-1e-6, 0, 0), 105, params)
    with pytest.raises(DomainError):
        mode_function(Vec3(params.cavity_length_l * 1.01, 0, 0), 105, params)


def test_antinode_registration_at_centre(params):
    x = central_antinode(params)
    assert x == pytest.approx(params.cavity_length_l / 2, abs=1e-15)
    assert abs(mode_function(Vec3(x, 0, 0), params.n_cavity, params)) == pytest.approx(1.0)
    assert abs(mode_function(Vec3(x, 0, 0), params.n_fort, params)) == pytest.approx(1.0)
    assert abs(coupling_g(Vec3(x, 0, 0), params)) == pytest.approx(params.g0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(-60e-6, 60e-6), st.floats(-60e-6, 60e-6))
def test_mode_function_bounded(u, y, z):
    p = CavityQedParams()
    psi = mode_function(np.array([u * p.cavity_length_l, y, z]), p.n_cavity, p)
    assert abs(psi) <= 1.0 + 1e-12


def test_fort_shift_map(params, fort45):
    x = central_antinode(params)
    shift = fort_potential(Vec3(x, 0, 0), fort45, params)
    assert shift.ground_shift == pytest.approx(-45e6)
    assert shift.transition_shift == pytest.approx(90e6)
    assert shift.energy < 0
    off = fort_potential(Vec3(x, 0, 0), FortConfig(fort_on=False), params)
    assert off.energy == 0 and off.transition_shift == 0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-30e-6, 30e-6), st.floats(-30e-6, 30e-6))
def test_gradient_matches_finite_difference(u, y, z):
    p = CavityQedParams()
    fort = FortConfig(stark_ground=-50e6, stark_excited=50e6)
    r = np.array([u * p.cavity_length_l, y, z])
    grad = fort_gradient(r, fort, p)
    h = np.array([1e-11, 1e-9, 1e-9])
    scale = fort.depth * max(p.k_fort, 2 / p.waist_w0)
    for i in range(3):
        dr = np.zeros(3)
        dr[i] = h[i]
        num = (fort_potential(r + dr, fort, p).energy - fort_potential(r - dr, fort, p).energy) / (2 * h[i])
        assert grad[i] == pytest.approx(num, abs=1e-5 * scale)


def test_trap_frequencies_match_potential_curvature(params, fort50):
    # oracle: second derivative of the tabulated potential at an on-axis antinode
    x0 = central_antinode(params)
    u = lambda r: fort_potential(np.array(r), fort50, params).energy  # noqa: E731
    hx, hy = 1e-10, 1e-8
    kxx = (u([x0 + hx, 0, 0]) - 2 * u([x0, 0, 0]) + u([x0 - hx, 0, 0])) / hx**2
    kyy = (u([x0, hy, 0]) - 2 * u([x0, 0, 0]) + u([x0, -hy, 0])) / hy**2
    nu_r, nu_a = trap_frequencies(fort50, params)
    assert nu_a == pytest.approx(math.sqrt(kxx / CESIUM.mass) / (2 * math.pi), rel=1e-4)
    assert nu_r == pytest.approx(math.sqrt(kyy / CESIUM.mass) / (2 * math.pi), rel=1e-4)
    assert nu_r == pytest.approx(6166.5, rel=1e-3)
    assert nu_a == pytest.approx(630.58e3, rel=1e-3)


def test_trap_frequencies_need_attractive_fort(params):
    with pytest.raises(DomainError):
        trap_frequencies(FortConfig(stark_ground=10e6), params)
    with pytest.raises(DomainError):
        trap_frequencies(FortConfig(fort_on=False), params)


def test_scattering_rate(params, fort45):
    assert scattering_rate(fort45, params, averaging=1.0) == pytest.approx(219.47, rel=1e-3)
    assert scattering_rate(fort45, params) == pytest.approx(37.0, rel=2e-3)
    assert DEFAULT_SCATTER_AVERAGING == pytest.approx(37.0 / 219.47, rel=2e-3)


def test_free_fall_and_buildup():
    assert free_fall_velocity(5e-3) == pytest.approx(0.3132, rel=1e-3)
    assert cavity_buildup(30e-6, 3.5e5, 0.2992) == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(DomainError):
        free_fall_velocity(-1.0)


def test_nearest_antinode(params):
    k = params.k_fort
    x = nearest_fort_antinode(params.cavity_length_l / 3, params)
    assert abs(math.sin(k * x)) == pytest.approx(1.0)
    assert abs(x - params.cavity_length_l / 3) <= math.pi / (2 * k) + 1e-15
