import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epworkbench.diffusion import (CFLError, DiffusionTensorField, ReactionSpec, SimConfig,
                                   diffusion_step, eigenmode, eigenmode_decay,
                                   monodomain_simulate, simulate, stability_limit)
from epworkbench.grid import ScalarField2D, discrete_energy


def domain(n):
    return ScalarField2D.on_domain(np.zeros((n, n)))


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_stability_limit_formula():
    g = ScalarField2D(np.zeros((41, 41)), spacing=(0.1, 0.1))
    assert stability_limit(DiffusionTensorField.uniform(g, 1.0)) == pytest.approx(0.0025)
    assert stability_limit(DiffusionTensorField.uniform(g, 2.0)) == pytest.approx(0.00125)


def test_stability_limit_uses_max_cells():
    g = domain(9)
    rng = np.random.default_rng(0)
    d0, d1 = rng.uniform(0.5, 3, size=(2, 9, 9))
    tensor = DiffusionTensorField(g, d0, d1)
    best = max(d0.ravel()) + max(d1.ravel())
    assert stability_limit(tensor) == pytest.approx(0.5 ** 2 / (2 * best))


def test_tensor_rejects_nonpositive():
    with pytest.raises(ValueError):
        DiffusionTensorField(domain(5), 1.0, 0.0)


def test_harmonic_face_mean():
    g = ScalarField2D.on_domain(np.zeros((2, 2)))
    t = DiffusionTensorField(g, np.array([[1.0, 1.0], [3.0, 3.0]]), 1.0)
    fx, fy = t.face_diffusivities()
    assert fx.shape == (1, 2) and fy.shape == (2, 1)
    assert np.allclose(fx, 1.5)


def test_zero_state_stays_zero():
    g = domain(17)
    t = DiffusionTensorField.uniform(g, 1.0)
    out = diffusion_step(g, t, stability_limit(t))
    assert not out.values.any()


def test_interior_maximum_decreases():
    v = np.ones((17, 17))
    v[0, :] = v[-1, :] = v[:, 0] = v[:, -1] = 0.0
    g = ScalarField2D.on_domain(v)
    t = DiffusionTensorField.uniform(g, 1.0)
    out = diffusion_step(g, t, stability_limit(t))
    assert out.values[1:-1, 1:-1].max() <= 1.0
    assert out.values[1, 1] < 1.0


def test_cfl_violation_rejected():
    g = domain(17)
    t = DiffusionTensorField.uniform(g, 1.0)
    with pytest.raises(CFLError):
        diffusion_step(g, t, 1.01 * stability_limit(t))
    with pytest.raises(CFLError):
        simulate(eigenmode(g), t, SimConfig(dt=0.1, t_end=1.0))


def test_grid_mismatch_rejected():
    t = DiffusionTensorField.uniform(domain(9), 1.0)
    with pytest.raises(ValueError, match="different grids"):
        diffusion_step(domain(17), t, 1e-4)


def test_one_step_eigenmode_decay():
    g = domain(65)
    t = DiffusionTensorField.uniform(g, 0.7)
    dt = stability_limit(t)
    ic = eigenmode(g)
    out = diffusion_step(ic, t, dt)
    factor = eigenmode_decay(0.7, 0.7, dt)
    # O(dt^2 + h^2) local error relative to the mode amplitude change
    assert rel_l2(out.values, factor * ic.values) < 5 * (dt ** 2 + g.spacing[0] ** 2) * dt


def test_eigenmode_decay_at_t01():
    g = domain(128)
    t = DiffusionTensorField.uniform(g, 1.0)
    cfg = SimConfig.for_frames(t, 0.1, 2)
    frames = simulate(eigenmode(g), t, cfg)
    expected = eigenmode_decay(1.0, 1.0, 0.1) * eigenmode(g).values
    assert rel_l2(frames[-1].values, expected) < 0.01


def test_exact_end_time_and_frames():
    g = domain(17)
    t = DiffusionTensorField.uniform(g, 1.0)
    cfg = SimConfig(dt=stability_limit(t), t_end=0.05, frame_stride=4)
    assert cfg.n_steps * cfg.step == pytest.approx(0.05)
    frames = simulate(eigenmode(g), t, cfg)
    assert len(frames) == cfg.n_steps // 4 + 1
    assert frames.times[0] == 0.0


def test_output_resampling():
    g = domain(33)
    t = DiffusionTensorField.uniform(g, 1.0)
    cfg = SimConfig.for_frames(t, 0.01, 3, output_size=16)
    frames = simulate(eigenmode(g), t, cfg)
    assert frames[0].shape == (16, 16)
    assert frames[0].extent == g.extent


def test_energy_non_increasing():
    rng = np.random.default_rng(2)
    g = ScalarField2D.on_domain(rng.normal(size=(33, 33)))
    tensor = DiffusionTensorField(g, rng.uniform(0.2, 3, (33, 33)), rng.uniform(0.2, 3, (33, 33)))
    frames = simulate(g, tensor, SimConfig.for_frames(tensor, 0.002, 20))
    energy = [discrete_energy(f) for f in frames]
    assert all(b <= a for a, b in zip(energy, energy[1:]))


def test_zero_flux_conserves_mass():
    rng = np.random.default_rng(3)
    g = ScalarField2D.on_domain(rng.uniform(size=(33, 33)))
    tensor = DiffusionTensorField(g, rng.uniform(0.2, 3, (33, 33)), rng.uniform(0.2, 3, (33, 33)))
    dt = stability_limit(tensor)
    state = g
    mass0 = state.values.sum()
    for _ in range(10):
        new = diffusion_step(state, tensor, dt, boundary="zero_flux")
        assert abs(new.values.sum() - state.values.sum()) <= 1e-10 * abs(mass0)
        state = new


def test_anisotropic_second_moments():
    g = ScalarField2D.from_function(lambda x, y: np.exp(-(x ** 2 + y ** 2) / (2 * 0.05 ** 2)),
                                    161, lo=-2, hi=2)
    d0 = 0.5
    tensor = DiffusionTensorField.uniform(g, d0, 2 * d0)
    frames = simulate(g, tensor, SimConfig.for_frames(tensor, 0.01, 2))
    X, Y = g.mesh()

    def moments(v):
        m = v.sum()
        return (v * X ** 2).sum() / m, (v * Y ** 2).sum() / m

    (x0, y0), (x1, y1) = moments(frames[0].values), moments(frames[-1].values)
    # heat kernel: d<x^2>/dt = 2 d0, d<y^2>/dt = 2 d1
    assert (y1 - y0) / (x1 - x0) == pytest.approx(2.0, rel=0.02)
    assert x1 - x0 == pytest.approx(2 * d0 * 0.01, rel=0.02)


def test_convergence_is_second_order():
    errors = []
    for n in (17, 33, 65):
        g = domain(n)
        t = DiffusionTensorField.uniform(g, 1.0)
        frames = simulate(eigenmode(g), t, SimConfig.for_frames(t, 0.05, 2, cfl_fraction=0.05))
        errors.append(rel_l2(frames[-1].values, eigenmode_decay(1, 1, 0.05) * eigenmode(g).values))
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    assert all(3.5 <= r <= 4.5 for r in ratios), ratios


def test_monodomain_none_is_bit_identical():
    rng = np.random.default_rng(4)
    g = ScalarField2D.on_domain(rng.normal(size=(17, 17)))
    tensor = DiffusionTensorField.uniform(g, 1.0)
    cfg = SimConfig.for_frames(tensor, 0.01, 4)
    a = simulate(g, tensor, cfg).stack()
    b = monodomain_simulate(g, tensor, ReactionSpec(), cfg).stack()
    c = monodomain_simulate(g, tensor, ReactionSpec("logistic", 0.0), cfg).stack()
    assert np.array_equal(a, b)
    assert np.array_equal(a, c)


def test_logistic_reaction_exact_solution():
    r = ReactionSpec("logistic", 2.0)
    v = np.array([0.1, 0.5, 1.0, 0.0])
    out = r.advance(v, 0.3)
    e = np.exp(0.6)
    assert np.allclose(out, v * e / (1 - v + v * e))


def test_custom_reaction_matches_linear_growth():
    # f(v) = v on the table range integrates to v exp(t) (RK4 error O(tau^5))
    r = ReactionSpec("custom", table_v=(-10.0, 10.0), table_f=(-10.0, 10.0))
    assert r.advance(np.array([1.0]), 0.01)[0] == pytest.approx(np.exp(0.01), rel=1e-11)


def test_reaction_spec_validation():
    with pytest.raises(ValueError):
        ReactionSpec("logistic", -1.0)
    with pytest.raises(ValueError):
        ReactionSpec("custom", table_v=(0.0,), table_f=(0.0,))
    with pytest.raises(ValueError):
        ReactionSpec("cubic")


def test_reaction_overflow_raises():
    g = ScalarField2D.on_domain(np.full((9, 9), 1.0))
    tensor = DiffusionTensorField.uniform(g, 1e-3)
    r = ReactionSpec("custom", table_v=(0.0, 1.0), table_f=(1e308, 1e308))
    with pytest.raises(FloatingPointError):
        monodomain_simulate(g, tensor, r, SimConfig(dt=1.0, t_end=10.0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.1, 1.0))
def test_maximum_principle_property(seed, frac):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0, 1, size=(12, 12))
    g = ScalarField2D.on_domain(v)
    tensor = DiffusionTensorField(g, rng.uniform(0.1, 4, (12, 12)), rng.uniform(0.1, 4, (12, 12)))
    out = diffusion_step(g, tensor, frac * stability_limit(tensor))
    assert out.values.max() <= v.max() + 1e-12
    assert out.values.min() >= -1e-12
