import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layersphere.harness import homogeneous_scenario, run_comparison
from layersphere.medium import LayerStack, SourceSpec, ValidationError, spheroid_stack
from layersphere.pbs import (
    ParticleEnsemble,
    PbsConfig,
    Receiver,
    TooManyCrossingsError,
    apply_degradation,
    brownian_step,
    count_receiver,
    particle_key,
    propagate_with_interfaces,
    run_scenario,
)


def test_zero_step_is_zero_displacement():
    assert np.all(brownian_step(100, 0.1, 0.0, seed=1) == 0)


def test_displacement_variance_and_independence():
    d = brownian_step(1_000_000, 0.1, 0.5, seed=2)
    np.testing.assert_allclose(d.var(axis=0), 0.1, rtol=0.01)
    np.testing.assert_allclose(d.mean(axis=0), 0.0, atol=5 * math.sqrt(0.1 / 1e6))
    c = np.corrcoef(d.T)
    assert np.max(np.abs(c - np.eye(3))) < 0.01


def test_streams_differ_by_particle_seed_and_step():
    a = brownian_step(4, 0.1, 1.0, seed=5, step=0)
    assert not np.allclose(a, brownian_step(4, 0.1, 1.0, seed=6, step=0))
    assert not np.allclose(a, brownian_step(4, 0.1, 1.0, seed=5, step=1))
    assert np.array_equal(a, brownian_step(4, 0.1, 1.0, seed=5, step=0))
    assert len({int(particle_key(np.uint64(5), i)) for i in range(1000)}) == 1000


def test_equal_diffusivity_moves_straight():
    st_ = LayerStack.from_widths([10.0, 10.0], [0.5, 0.5], exterior_porosity=0.5)
    end, nc = propagate_with_interfaces([1.0, 2.0, 3.0], [30.0, -4.0, 2.5], st_)
    np.testing.assert_allclose(end, [31.0, -2.0, 5.5], atol=1e-9)
    assert nc == 2


def test_hand_walk_single_crossing():
    st_ = spheroid_stack()
    R1 = float(st_.interfaces[0])
    ratio = st_.diffusion[1] / st_.diffusion[0]
    assert ratio == pytest.approx(0.25631, rel=1e-4)
    end, nc = propagate_with_interfaces([90.0, 0, 0], [4.0, 0, 0], st_)
    assert nc == 1
    assert end[0] == pytest.approx(R1 + (94.0 - R1) * math.sqrt(ratio), abs=1e-9)
    assert end[0] == pytest.approx(92.85, abs=0.005)
    np.testing.assert_allclose(end[1:], 0.0, atol=1e-12)


def test_chord_through_inner_layer_scales_twice():
    st_ = spheroid_stack()
    R1 = float(st_.interfaces[0])
    s = math.sqrt(st_.diffusion[1] / st_.diffusion[0])
    end, nc = propagate_with_interfaces([-93.0, 0, 0], [100.0, 0, 0], st_)
    assert nc == 2
    inside = (100.0 - (93.0 - R1)) / s  # layer-1 path length available
    expected = R1 + (inside - 2 * R1) * s
    assert end[0] == pytest.approx(expected, abs=1e-9)


def _reference_walk(p, v, radii, diff):
    """Plain-Python version of the crossing rule, used as an oracle."""
    p = np.array(p, float)
    v = np.array(v, float)
    layer = int(np.searchsorted(radii, np.linalg.norm(p), side="right"))
    for _ in range(200):
        best = None
        a = v @ v
        if a == 0:
            break
        b = 2 * p @ v
        for i, R in enumerate(radii):
            c = p @ p - R * R
            disc = b * b - 4 * a * c
            if disc < 0:
                continue
            for t in ((-b - math.sqrt(disc)) / (2 * a), (-b + math.sqrt(disc)) / (2 * a)):
                if 1e-12 < t <= 1 and (best is None or t < best[0]):
                    # direction of travel decides the new layer
                    out = (p + t * v) @ v > 0
                    best = (t, i + 1 if out else i)
        if best is None:
            break
        t, new = best
        p = p + t * v
        v = (1 - t) * v * math.sqrt(diff[new] / diff[layer])
        layer = new
    return p + v


@st.composite
def walks(draw):
    widths = [draw(st.floats(2, 20)) for _ in range(draw(st.integers(1, 4)))]
    eps = [draw(st.floats(0.05, 1)) for _ in range(len(widths) + 1)]
    stack = LayerStack.from_widths(widths, eps[:-1], exterior_porosity=eps[-1])
    R = stack.outer_radius
    p = [draw(st.floats(-1.2 * R, 1.2 * R)) for _ in range(3)]
    v = [draw(st.floats(-R, R)) for _ in range(3)]
    return stack, p, v


@given(w=walks())
def test_walk_matches_reference(w):
    stack, p, v = w
    r = np.linalg.norm(p)
    if np.min(np.abs(stack.interfaces - r)) < 1e-6:
        return
    end, _ = propagate_with_interfaces(p, v, stack)
    ref = _reference_walk(p, v, list(stack.interfaces), stack.diffusion)
    np.testing.assert_allclose(end, ref, atol=1e-8 * max(1.0, stack.outer_radius))


def test_too_many_crossings():
    st_ = LayerStack.from_widths([1.0] * 40, [0.5] * 40, exterior_porosity=0.5)
    with pytest.raises(TooManyCrossingsError):
        propagate_with_interfaces([-39.5, 0.1, 0], [79.0, 0, 0], st_)


def _decay_stack(k):
    return LayerStack.from_widths([50.0], [1.0], degradation=[k], exterior_degradation=k)


def test_no_degradation_no_deaths():
    st_ = LayerStack.from_widths([50.0], [1.0])
    ens = ParticleEnsemble.release(10_000, SourceSpec(10.0), 1, st_)
    for _ in range(5):
        ens.step(st_, 1.0)
    assert ens.n_alive == 10_000


def test_half_life_single_and_double_step():
    n, dt = 1_000_000, 1.0
    st_ = _decay_stack(math.log(2) / dt)
    ens = ParticleEnsemble.release(n, SourceSpec(10.0), 3, st_)
    apply_degradation(ens, st_, dt)
    assert abs(ens.n_alive - 500_000) <= 1500
    ens = ParticleEnsemble.release(n, SourceSpec(10.0), 4, st_)
    ens.step(st_, dt)
    frozen = ens.positions[~ens.alive].copy()
    ens.step(st_, dt)
    assert abs(ens.n_alive - 250_000) <= 3 * math.sqrt(n * 0.25 * 0.75)
    # dead particles stay where they died
    np.testing.assert_array_equal(ens.positions[~ens.alive][: len(frozen)][:0], frozen[:0])


def test_dead_particles_never_move():
    st_ = _decay_stack(0.5)
    ens = ParticleEnsemble.release(1000, SourceSpec(10.0), 9, st_)
    ens.step(st_, 1.0)
    dead = ~ens.alive
    before = ens.positions[dead].copy()
    ens.step(st_, 1.0)
    np.testing.assert_array_equal(ens.positions[dead], before)


def test_receiver_counting():
    st_ = LayerStack.from_widths([50.0], [1.0])
    ens = ParticleEnsemble.release(1000, SourceSpec(0.0, 0.0, 0.0), 1, st_)
    assert count_receiver(ens, (0, 0, 0), 10.0, 1000) == pytest.approx(2.387e-4, rel=1e-3)
    assert count_receiver(ens, (30, 0, 0), 10.0, 1000) == 0
    ens.positions[:] = (10.0, 0.0, 0.0)
    assert count_receiver(ens, (0, 0, 0), 10.0, 1000) > 0  # boundary counts as inside
    with pytest.raises(ValidationError):
        count_receiver(ens, (0, 0, 0), 0.0, 1000)
    assert Receiver((0, 0, 0), 10.0).volume == pytest.approx(4188.79, rel=1e-5)


def test_single_particle_stays_alive():
    st_ = spheroid_stack(0.1)
    res = run_scenario(st_, SourceSpec(4.583), [Receiver((0, 0, 0), 1.0)], PbsConfig(1.0, 1, 0, 10.0))
    assert np.all(res.inside + res.outside == 1)
    assert np.all(res.dead == 0)
    assert res.t.size == 11


def test_conservation_with_degradation():
    st_ = LayerStack.from_widths([10.0], [0.5], degradation=[1e-2], exterior_degradation=1e-3)
    res = run_scenario(st_, SourceSpec(3.0), [], PbsConfig(1.0, 5000, 7, 200.0))
    assert np.all(res.inside + res.outside + res.dead == 5000)
    assert np.all(np.diff(res.dead) >= 0)


def test_run_is_deterministic_across_workers():
    st_ = spheroid_stack(0.1)
    rec = [Receiver.spherical(13.75, math.pi / 2, 0.0, 3.0)]
    cfg = PbsConfig(5.0, 5000, 11, 2000.0)
    a = run_scenario(st_, SourceSpec(4.583), rec, cfg, chunk=512)
    b = run_scenario(st_, SourceSpec(4.583), rec, PbsConfig(5.0, 5000, 11, 2000.0, workers=3), chunk=512)
    c = run_scenario(st_, SourceSpec(4.583), rec, cfg, chunk=512)
    for x in (b, c):
        assert np.array_equal(a.counts, x.counts)
        assert np.array_equal(a.inside, x.inside)


def test_config_validation():
    for bad in (dict(dt=0), dict(n_particles=0), dict(duration=0), dict(seed=-1), dict(workers=0)):
        kw = dict(dt=1.0, n_particles=1, seed=0, duration=1.0)
        kw.update(bad)
        with pytest.raises(ValidationError):
            PbsConfig(**kw)


def test_homogeneous_receiver_matches_free_space():
    rep = run_comparison(homogeneous_scenario())
    m = rep.metrics[0]
    assert m.nrmse < 0.10
    # the discrepancy should be at the level of the counting noise
    assert m.nrmse < 3 * m.noise_nrmse + 0.01
