import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kacgibbs.errors import GridMismatchError
from kacgibbs.torus import (ExternalField, InteractionKernel, KacModel, Profile, TorusGrid, constant_kernel,
                            convolve, cosine_bump_kernel, entropy_phi, interaction_quadratic_form, kac_energy,
                            kernel_mean, profile_from_csv, profile_from_json, profile_to_csv, profile_to_json,
                            quadratic_form_values, reflect, static_rate)


def _model(grid, J=None, h=0.0, beta=1.0):
    J = constant_kernel(grid) if J is None else J
    return KacModel(J, ExternalField.constant(grid, h), beta)


def test_grid_basics():
    g = TorusGrid(2, 4)
    assert g.shape == (4, 4) and g.size == 16 and g.spacing == 0.25
    assert g.node_index((0.99, 0.0)) == (3, 0)
    with pytest.raises(ValueError):
        TorusGrid(0, 4)


def test_kernel_must_be_symmetric_and_nonnegative():
    g = TorusGrid(1, 4)
    with pytest.raises(ValueError):
        InteractionKernel(g, [1.0, 2.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        InteractionKernel(g, [1.0, -1.0, 0.0, -1.0])
    with pytest.raises(ValueError):
        InteractionKernel(g, np.zeros(4))


def test_convolve_examples():
    g = TorusGrid(1, 4)
    a = Profile(g, [1.0, -1.0, 1.0, -1.0])
    assert np.allclose(convolve(InteractionKernel(g, [4.0, 0, 0, 0]), a), a.values)
    b = Profile(g, [0.3, -0.1, 0.5, 0.2])
    assert np.allclose(convolve(constant_kernel(g), b), b.mean())
    assert np.allclose(convolve(constant_kernel(g), Profile.constant(g, 0.0)), 0.0)


@pytest.mark.parametrize("d,M", [(1, 8), (1, 2048), (2, 16), (1, 8192)])
def test_convolution_paths_agree(d, M):
    # dense / roll-sum / FFT paths against a literal lagged sum
    g = TorusGrid(d, M)
    J = cosine_bump_kernel(g)
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, g.shape)
    out = J.apply(a)
    if g.size <= 64:
        ref = np.zeros(g.shape)
        for idx in np.ndindex(g.shape):
            for jdx in np.ndindex(g.shape):
                lag = tuple((i - j) % M for i, j in zip(idx, jdx))
                ref[idx] += J.values[lag] * a[jdx]
        ref /= g.size
    else:
        ref = np.real(np.fft.ifftn(np.fft.fftn(J.values) * np.fft.fftn(a))) / g.size
    assert np.max(np.abs(out - ref)) <= 1e-12


def test_kernel_mean_and_cosine_bump_normalisation():
    g = TorusGrid(1, 16)
    assert kernel_mean(constant_kernel(g)) == 1.0
    assert kernel_mean(constant_kernel(g, 0.5)) == 0.5
    assert kernel_mean(InteractionKernel(TorusGrid(1, 4), [4.0, 0, 0, 0])) == 1.0
    for d in (1, 2, 3):
        assert abs(kernel_mean(cosine_bump_kernel(TorusGrid(d, 8))) - 1.0) <= 1e-14


def test_entropy_phi_values():
    assert entropy_phi(0.0) == 0.0
    assert entropy_phi(1.0) == pytest.approx(np.log(2), abs=1e-15)
    assert entropy_phi(-1.0) == pytest.approx(np.log(2), abs=1e-15)
    assert entropy_phi(0.5) == pytest.approx(0.130812, abs=1e-6)


def test_energy_and_static_rate_examples():
    g = TorusGrid(1, 8)
    m = _model(g)
    assert kac_energy(Profile.constant(g, 0.0), m) == 0.0
    assert kac_energy(Profile.constant(g, 1.0), m) == pytest.approx(0.5)
    assert kac_energy(Profile.constant(g, 1.0), _model(g, h=1.0)) == pytest.approx(1.5)
    m0 = _model(g, beta=0.0)
    assert static_rate(Profile.constant(g, 0.0), m0) == 0.0
    assert static_rate(Profile.constant(g, 0.4), m0) == pytest.approx(entropy_phi(0.4), abs=1e-15)
    assert static_rate(Profile.constant(g, 0.4), m) == pytest.approx(-0.08 + entropy_phi(0.4), abs=1e-15)


def test_quadratic_form_examples():
    g = TorusGrid(1, 2)
    m = _model(g)
    assert interaction_quadratic_form(Profile(g, [1.0, -1.0]), m) == pytest.approx(0.5)
    assert interaction_quadratic_form(Profile.constant(g, 0.7), m) == 0.0
    assert interaction_quadratic_form(Profile(g, [1.0, -1.0]), _model(g, beta=0.0)) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=16, max_size=16), st.floats(0, 2))
def test_quadratic_form_matches_energy_split(vals, beta):
    # (beta/4) sum J (a_i - a_j)^2 = (beta/2) <J> mean(a^2) - (beta/2) <a, J*a>
    g = TorusGrid(1, 16)
    J = cosine_bump_kernel(g)
    a = np.array(vals)
    lhs = quadratic_form_values(a, J, beta)
    rhs = 0.5 * beta * kernel_mean(J) * np.mean(a * a) - 0.5 * beta * np.mean(a * J.apply(a))
    assert lhs >= -1e-15
    assert abs(lhs - rhs) <= 1e-12


def test_reflect():
    v = np.arange(4.0)
    assert np.array_equal(reflect(v), [0.0, 3.0, 2.0, 1.0])


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        KacModel(constant_kernel(TorusGrid(1, 4)), ExternalField.constant(TorusGrid(1, 8), 0.0), 1.0)
    with pytest.raises(ValueError):
        Profile(TorusGrid(1, 4), [0.0, 0.0])


def test_profile_bounds():
    with pytest.raises(ValueError):
        Profile(TorusGrid(1, 2), [0.0, 1.5])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_serialisation_round_trip(vals):
    g = TorusGrid(1, 6)
    p = Profile(g, vals)
    assert np.array_equal(profile_from_json(profile_to_json(p)).values, p.values)
    assert np.array_equal(profile_from_csv(profile_to_csv(p), g).values, p.values)
