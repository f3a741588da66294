"""End-to-end acceptance checks, one test per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; a pass/fail line per
criterion is printed in the terminal summary.  The channel-recovery check
takes a few minutes on one core.
"""
import math
import time

import numpy as np
import pytest

from epworkbench import cli
from epworkbench.abc import (ABCConfig, PriorSpec, abs_distance, fit_sodium_channel,
                             gaussian_toy_simulate, posterior_stats, run_abcsmc,
                             synthetic_observations, weighted_variance)
from epworkbench.channel import (ORIGINAL, PARAM_NAMES, GateState, Sweep, VoltageProtocol, hj_inf,
                                 i_na, integrate_protocol, m_inf, tau_m)
from epworkbench.classify import (ClassificationReport, LabeledDataset, bagging_train, kfold_cv,
                                  sfs)
from epworkbench.diffusion import (DiffusionTensorField, ReactionSpec, SimConfig, eigenmode,
                                   eigenmode_decay, monodomain_simulate, simulate)
from epworkbench.egm import (autocorrelation, cwt_energy, remove_stimulus_artifact, ricker,
                             synthetic_electrogram)
from epworkbench.grid import ScalarField2D, forward_fft2
from epworkbench.io import read_csv
from epworkbench.rng import substream
from epworkbench.scenarios import (gen_diffusion_field, sample_specs, synthesize_noise_field)


def rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def eigenmode_error(n, t_end, cfl_fraction=0.9):
    g = ScalarField2D.on_domain(np.zeros((n, n)))
    tensor = DiffusionTensorField.uniform(g, 1.0)
    frames = simulate(eigenmode(g), tensor, SimConfig.for_frames(tensor, t_end, 2, cfl_fraction))
    return rel_l2(frames[-1].values, eigenmode_decay(1.0, 1.0, t_end) * eigenmode(g).values)


def test_criterion_01_diffusion_analytic_decay():
    start = time.perf_counter()
    err = eigenmode_error(128, 0.1)
    elapsed = time.perf_counter() - start
    print(f"eigenmode relative L2 error {err:.3e} in {elapsed:.2f} s")
    assert err < 0.01
    assert elapsed < 5.0


def test_criterion_02_convergence_order():
    # small steps so the spatial error dominates
    errors = [eigenmode_error(n, 0.05, cfl_fraction=0.05) for n in (17, 33, 65)]
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    print(f"error ratios {ratios}")
    assert all(3.5 <= r <= 4.5 for r in ratios)


def test_criterion_03_fisher_kpp_front_speed():
    start = time.perf_counter()
    nx, length, rate, diff = 801, 200.0, 1.0, 1.0
    h = length / (nx - 1)
    g = ScalarField2D(np.zeros((nx, 3)), (0.0, 0.0), (h, h))
    x = g.x
    ic = g.with_values(np.repeat((x < 10).astype(float)[:, None], 3, axis=1))
    tensor = DiffusionTensorField.uniform(g, diff)
    cfg = SimConfig.for_frames(tensor, 1.0, 61, boundary="zero_flux")
    frames = monodomain_simulate(ic, tensor, ReactionSpec("logistic", rate), cfg)
    front = []
    for f in frames:
        v = f.values[:, 1]
        i = int(np.argmax(v < 0.5))
        front.append(x[i - 1] + (v[i - 1] - 0.5) / (v[i - 1] - v[i]) * h)
    t = frames.times
    a, b = int(np.argmin(np.abs(t - 20))), int(np.argmin(np.abs(t - 40)))
    speed = (front[b] - front[a]) / (t[b] - t[a])
    elapsed = time.perf_counter() - start
    expected = 2 * math.sqrt(rate * diff)
    print(f"front speed {speed:.4f} vs {expected:.4f} in {elapsed:.1f} s")
    assert abs(speed - expected) <= 0.05 * expected
    assert elapsed < 30.0


def test_criterion_04_scenario_generator():
    specs = sample_specs(1600, master_seed=0)
    gammas = np.array([fs.gamma for _, fs in specs])
    lams = np.array([fs.lam for _, fs in specs])
    for values, target in ((gammas, 2.0), (lams, 4.5)):
        se = values.std(ddof=1) / math.sqrt(values.size)
        assert abs(values.mean() - target) <= 3 * se
    base = ScalarField2D.on_domain(np.zeros((128, 128)))
    for ic_spec, fs in specs:
        tensor, mask = gen_diffusion_field(fs, base)
        d0, d1 = tensor.d0, tensor.d1
        fast, slow = (d0, d1) if fs.fast_axis == "horizontal" else (d1, d0)
        # anisotropy ratio in both tissues, healthy-to-scar ratio along both axes
        assert np.allclose(fast / slow, fs.gamma, rtol=1e-12, atol=0)
        if mask.any() and (~mask).any():
            for d in (d0, d1):
                assert np.allclose(d[mask] / d[~mask][0], fs.lam, rtol=1e-12, atol=0)
        spec = forward_fft2(synthesize_noise_field(ic_spec))
        fx, fy = spec.frequencies()
        power = np.abs(spec.coefficients) ** 2
        assert power[fx ** 2 + fy ** 2 >= ic_spec.f0 ** 2].sum() <= 1e-20 * power.sum()
    print(f"gamma mean {gammas.mean():.4f}, lambda mean {lams.mean():.4f}")


def test_criterion_05_baseline_evaluation(tmp_path):
    ds, out = tmp_path / "ds", tmp_path / "baseline"
    start = time.perf_counter()
    assert cli.main(["gen-dataset", "--out", str(ds), "--seed", "0", "--set", "n=16"]) == 0
    print(f"16-entry dataset in {time.perf_counter() - start:.1f} s")
    assert cli.main(["baseline-eval", "--out", str(out), "--set", f'dataset="{ds}"']) == 0
    header, rows = read_csv(out / "baseline.csv")
    assert len(rows) == 16
    assert header[3:] == [f"nmse_{k}" for k in range(1, 12)]
    for row in rows:
        mse, self_mse = float(row[1]), float(row[2])
        assert mse > self_mse == 0.0
        assert all(math.isfinite(float(v)) for v in row[3:])


def test_criterion_06_channel_sanity():
    assert m_inf(-45.0) == 0.5
    assert hj_inf(-76.1) == 0.5
    state = GateState(0.7, 0.2, 0.4)
    assert i_na(ORIGINAL.e_na, state) == 0.0
    centre = float(tau_m(-47.1))
    for dv in (1e-7, 1e-10):
        assert abs(float(tau_m(-47.1 - dv)) - centre) <= 1e-8
        assert abs(float(tau_m(-47.1 + dv)) - centre) <= 1e-8


def test_criterion_07_gate_integration_oracle():
    start = time.perf_counter()
    segments = ((2.0, -120.0), (3.0, -20.0), (3.0, -60.0))
    (trace,), _ = integrate_protocol(VoltageProtocol("activation", (Sweep(segments, (1,)),)),
                                     dt=0.01)
    dt = 1e-4
    g = np.array([m_inf(-120.0), hj_inf(-120.0), hj_inf(-120.0)])
    ref = [g]
    for dur, v in segments:
        ginf = np.array([m_inf(v), hj_inf(v), hj_inf(v)])
        tau = np.array([tau_m(v), ORIGINAL.tau_h(v), ORIGINAL.tau_j(v)], dtype=float)
        for _ in range(int(round(dur / dt))):
            g = g + dt / tau * (ginf - g)
            ref.append(g)
    ref = np.array(ref)[::100]
    got = np.stack([trace.m, trace.h, trace.j], axis=1)
    err = np.linalg.norm(got - ref) / np.linalg.norm(ref)
    elapsed = time.perf_counter() - start
    print(f"relative trajectory difference {err:.2e} in {elapsed:.2f} s")
    assert err <= 1e-4
    assert elapsed < 5.0


def test_criterion_08_abc_conjugate_toy():
    start = time.perf_counter()
    observed = gaussian_toy_simulate(np.zeros(1), substream(2024, 0))
    prior = PriorSpec(("mu",), [-10.0], [10.0])
    pops = run_abcsmc(prior, observed, gaussian_toy_simulate, abs_distance,
                      ABCConfig(n_particles=200, max_generations=8, seed=1))
    last = pops[-1]
    mean = float(posterior_stats(last).mean[0])
    se = math.sqrt(weighted_variance(last.params, last.weights)[0] / last.effective_size())
    elapsed = time.perf_counter() - start
    # flat prior and 10 unit-variance draws: posterior mean equals the observed sample mean
    print(f"posterior mean {mean:.4f} vs {observed:.4f} (3 SE = {3 * se:.4f}), {elapsed:.1f} s")
    assert len(pops) == 8
    assert abs(mean - observed) <= 3 * se
    assert elapsed < 60.0


def test_criterion_09_abc_channel_recovery():
    start = time.perf_counter()
    observed = synthetic_observations(ORIGINAL, noise=0.01, seed=1)
    prior = PriorSpec.sodium_channel()
    pops = fit_sodium_channel(observed, ABCConfig(n_particles=200, max_generations=12, seed=3), prior)
    elapsed = time.perf_counter() - start
    stats = posterior_stats(pops[-1], PARAM_NAMES)
    truth = dict(zip(PARAM_NAMES, ORIGINAL.vector()))
    for name in ("p1", "p2", "q1", "q2"):
        k = PARAM_NAMES.index(name)
        print(f"{name}: truth {truth[name]} in [{stats.min[k]:.4g}, {stats.max[k]:.4g}]")
        assert stats.min[k] <= truth[name] <= stats.max[k]
    for name in ("p5", "p7"):
        k = PARAM_NAMES.index(name)
        frac = (stats.max[k] - stats.min[k]) / prior.width[k]
        print(f"{name}: posterior width {frac:.0%} of prior")
        assert frac > 0.4
    eps = [p.epsilon for p in pops]
    print(f"{len(pops)} generations, final epsilon {eps[-1]:.4g}, {elapsed:.0f} s")
    assert len(pops) <= 12
    assert all(b <= a for a, b in zip(eps, eps[1:]))
    assert elapsed < 600.0


def decision_list_data(seed=0, n=240, n_features=27, informative=(4, 13, 22)):
    """Three features jointly decide the label; the other 24 are noise."""
    X = np.random.default_rng(seed).uniform(size=(n, n_features))
    a, b, c = (X[:, i] for i in informative)
    y = np.where(a < 0.3, 0, np.where(a > 0.7, 1, np.where(b < 0.3, 0, np.where(b > 0.7, 1, c > 0.5))))
    return LabeledDataset(X, y.astype(int))


def test_criterion_10_classifier_suite():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.5, (50, 3)), rng.normal(4, 0.5, (50, 3))])
    separable = LabeledDataset(X, np.r_[np.zeros(50), np.ones(50)])
    report = kfold_cv(separable, k=10, seed=0)
    assert report.error_rate == 0.0 and report.total == 100
    model = bagging_train(separable, n_trees=30, min_leaf=1, seed=0)
    assert len(model.trees) == 30

    r = ClassificationReport(tp=97, fp=16, tn=84, fn=3)
    assert r.sensitivity == 97 / 100 and r.specificity == 84 / 100
    assert r.ppv == 97 / 113 and r.npv == 84 / 87
    assert r.error_rate == 19 / 200

    data = decision_list_data()
    result = sfs(data, k=10, n_trees=30, min_leaf=1, seed=0)
    acc = result.trace[-1][1]
    print(f"SFS selected {result.selected} with CV accuracy {acc:.3f}")
    assert {4, 13, 22} <= set(result.selected)
    assert acc > 0.9 and len(result.selected) <= 5


def test_criterion_11_feature_oracles():
    x = np.random.default_rng(11).normal(size=1024)
    scales = np.arange(1, 65)
    direct = []
    for a in scales:
        w = ricker(min(10 * int(a), x.size), a)
        full = np.zeros(x.size + w.size - 1)
        for i in range(w.size):
            full[i:i + x.size] += w[i] * x
        s = (w.size - 1) // 2
        direct.append(np.sum(full[s:s + x.size] ** 2))
    assert np.allclose(cwt_energy(x, scales), direct, rtol=1e-8, atol=0)

    xc = x - x.mean()
    brute = np.array([np.dot(xc[:xc.size - k], xc[k:]) for k in range(251)])
    assert np.allclose(autocorrelation(x, 250), brute / brute[0], rtol=1e-8, atol=1e-12)

    rec = synthetic_electrogram("control", substream(11, 1), stimulus=5.0)
    stims = rec.metadata["stim_times"]
    out = remove_stimulus_artifact(rec, stims)
    inside = np.zeros(rec.samples.size, dtype=bool)
    for s in stims:
        i0 = int(round(s * rec.sample_rate))
        inside[i0:i0 + int(round(0.02 * rec.sample_rate))] = True
    assert np.array_equal(out.samples[~inside], rec.samples[~inside])


def test_criterion_12_determinism(tmp_path):
    def run(command, out, workers, *extra):
        argv = [*command.split(), "--out", str(out), "--seed", "7", "--workers", str(workers), *extra]
        assert cli.main(argv) == 0

    feats = tmp_path / "feats"
    run("egm extract", feats, 1, "--set", "synthetic_per_class=15")
    cases = {
        "gen-dataset": (("--set", "n=4", "--set", "grid_n=64", "--set", "output_size=32"),
                        ("manifest.json", "sim_0000.epf", "sim_0003.epf")),
        "fit-channel": (("--set", "n_particles=24", "--set", "max_generations=3"),
                        ("posterior.csv", "generations.csv", "populations/gen_02.csv")),
        "egm train": (("--set", f'features="{feats / "features.csv"}"', "--set", "n_trees=10"),
                      ("model.json", "cv_report.csv")),
    }
    for command, (extra, files) in cases.items():
        outs = [tmp_path / f"{command}-{w}" for w in (1, 2)]
        for out, w in zip(outs, (1, 2)):
            run(command, out, w, *extra)
        for f in files:
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f"{command}: {f}"
