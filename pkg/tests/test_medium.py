import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layersphere.medium import (
    Layer,
    LayerStack,
    SourceSpec,
    ValidationError,
    cos_angle_between,
    effective_diffusion,
    jump_constant,
    spheroid_stack,
    spherical_to_cartesian,
    to_um2_per_s,
    tortuosity,
)


def test_spheroid_values():
    st_ = spheroid_stack()
    assert st_.free_diffusion == pytest.approx(0.1)
    np.testing.assert_allclose(st_.interfaces, [91.6667, 183.3333, 275.0], rtol=1e-5)
    np.testing.assert_allclose(st_.porosity, [0.2964, 0.1196, 0.1697, 1.0])
    np.testing.assert_allclose(st_.diffusion, 0.1 * st_.porosity**1.5)
    np.testing.assert_allclose(st_.jump_constants, np.sqrt(st_.diffusion[1:] / st_.diffusion[:-1]))
    # layer 2 is the least porous, so concentration jumps up entering it
    assert st_.jump_constants[0] < 1 < st_.jump_constants[1]


def test_effective_diffusion_is_porosity_over_tortuosity():
    for e in (0.05, 0.3, 1.0):
        assert effective_diffusion(e, 0.1) == pytest.approx(e / tortuosity(e) * 0.1)
    assert effective_diffusion(1.0, 0.1) == 0.1


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.2, math.nan])
def test_porosity_range(bad):
    with pytest.raises(ValidationError):
        Layer(10.0, bad)


def test_stack_structure_rules():
    with pytest.raises(ValidationError):
        LayerStack((Layer(10, 0.5),))  # no unbounded exterior
    with pytest.raises(ValidationError):
        LayerStack((Layer(math.inf, 0.5), Layer(math.inf, 1.0)))
    with pytest.raises(ValidationError):
        Layer(0.0, 0.5)
    with pytest.raises(ValidationError):
        Layer(1.0, 0.5, -1e-3)


def test_units():
    assert to_um2_per_s(1e-9, "cm2/s") == pytest.approx(0.1)
    assert to_um2_per_s(0.1, "µm2/s") == 0.1
    with pytest.raises(ValidationError):
        to_um2_per_s(1.0, "m2/s")


def test_locate_layer_boundaries_go_outward():
    st_ = LayerStack.from_widths([10, 20], [0.5, 0.5])
    assert st_.locate_layer(0.0) == 0
    assert st_.locate_layer(9.999) == 0
    assert st_.locate_layer(10.0) == 1
    assert st_.locate_layer(30.0) == 2
    assert st_.locate_layer(1e9) == 2
    with pytest.raises(ValidationError):
        st_.locate_layer(-1.0)


def test_source_on_interface_rejected():
    st_ = spheroid_stack()
    with pytest.raises(ValidationError, match="interface R_1"):
        SourceSpec(float(st_.interfaces[0])).check_against(st_)
    SourceSpec(float(st_.interfaces[0]) + 1e-6).check_against(st_)


def test_source_angles_validated():
    with pytest.raises(ValidationError):
        SourceSpec(1.0, theta=4.0)
    with pytest.raises(ValidationError):
        SourceSpec(1.0, phi=2 * math.pi)


def test_with_porosity_and_scaling():
    st_ = spheroid_stack()
    alt = st_.with_porosity(2, 0.05)
    assert alt.porosity[2] == 0.05 and st_.porosity[2] == 0.1697
    assert alt.digest() != st_.digest()
    small = st_.scaled(0.1)
    np.testing.assert_allclose(small.interfaces, st_.interfaces * 0.1)
    np.testing.assert_allclose(small.diffusion, st_.diffusion)
    assert spheroid_stack(0.1).digest() == small.digest()


def test_jump_constant():
    assert jump_constant(0.1, 0.4) == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        jump_constant(0.0, 1.0)


angles = st.tuples(st.floats(0, math.pi), st.floats(0, 2 * math.pi))


@given(a=angles, b=angles)
def test_cos_angle_matches_dot_product(a, b):
    u = spherical_to_cartesian(1.0, *a)
    v = spherical_to_cartesian(1.0, *b)
    assert cos_angle_between(a[0], a[1], b[0], b[1]) == pytest.approx(float(u @ v), abs=1e-12)


@given(
    widths=st.lists(st.floats(1, 200), min_size=1, max_size=6),
    eps=st.floats(0.05, 1.0),
)
def test_diffusion_monotone_in_porosity_and_flux_balance(widths, eps):
    st_ = LayerStack.from_widths(widths, [eps] * len(widths), exterior_porosity=1.0)
    assert np.all(np.diff(st_.radii) > 0)
    # kappa_i^2 = D_{i+1} / D_i
    np.testing.assert_allclose(st_.diffusion[:-1] * st_.jump_constants**2, st_.diffusion[1:])
