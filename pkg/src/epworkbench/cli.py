"""Command-line entry point: ``python -m epworkbench <command> [options]``.

Commands: simulate, gen-dataset, fit-channel, egm {extract,train,eval},
baseline-eval.  Settings come from the command's defaults, then a TOML
config file (top-level keys or a table named after the command, e.g.
``[gen-dataset]`` or ``[egm-train]``), then ``--set key=value``, then the
dedicated flags.  Every run writes ``resolved_config.json`` to its output
directory.

Exit codes: 0 success, 1 usage or configuration error, 2 file I/O error,
3 numerical failure.  The seed falls back to ``$EP_WORKBENCH_SEED``, then 0.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import abc as abc_mod
from . import channel, classify, diffusion, egm, grid, io, scenarios
from .rng import resolve_seed, substream

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("epworkbench")

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 1, 2, 3
SNAPSHOT_NAME = "resolved_config.json"


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# Defaults double as the schema: a key's type is its default's type.
# ``None`` marks an optional integer.
DEFAULTS = {
    "simulate": {
        "out": "simulate_out", "seed": None,
        "grid_n": 128, "ic": "eigenmode", "ic_path": "", "kx": 1, "ky": 1,
        "tensor": "uniform", "d0": 1.0, "d1": 1.0,
        "t_end": 0.1, "n_frames": 11, "dt": 0.0, "cfl_fraction": 0.9,
        "boundary": "dirichlet", "output_size": 0,
        "reaction": "none", "reaction_rate": 0.0,
    },
    "gen-dataset": {
        "out": "dataset", "seed": None, "n": 16,
        "grid_n": 128, "output_size": 64, "dt_frame": 0.01, "n_frames": 14,
        "cfl_fraction": 0.9, "dt": 0.0, "contrast": 1.0, "boundary_margin": 0.25,
    },
    "fit-channel": {
        "out": "fit_out", "seed": None, "mode": "channel",
        "n_particles": 200, "max_generations": 12, "epsilon_quantile": 0.5,
        "min_acceptance": 0.002, "max_attempts": 5000,
        "observed": "", "noise": 0.01, "obs_seed": 1,
        "toy_observation": 1.0, "toy_n_obs": 10, "toy_lo": -10.0, "toy_hi": 10.0,
    },
    "egm-extract": {
        "out": "egm_out", "seed": None, "input": "",
        "synthetic_per_class": 20, "sample_rate": 5000.0, "duration": 1.0,
        "noise": 0.01, "stimulus": 0.0, "stim_threshold": 0.0, "artifact_window": 0.02,
    },
    "egm-train": {
        "out": "egm_out", "seed": None, "features": "",
        "n_trees": 30, "min_leaf": 1, "cv_folds": 10, "select": "none",
    },
    "egm-eval": {
        "out": "egm_out", "seed": None, "model": "", "features": "",
    },
    "baseline-eval": {
        "out": "baseline_out", "seed": None, "dataset": "", "n_inputs": 3, "horizon": 11,
    },
}

CHOICES = {
    ("simulate", "ic"): ("eigenmode", "zero", "generated", "file"),
    ("simulate", "tensor"): ("uniform", "generated"),
    ("simulate", "boundary"): diffusion.BOUNDARIES,
    ("simulate", "reaction"): ("none", "logistic"),
    ("fit-channel", "mode"): ("channel", "toy", "degenerate"),
    ("egm-train", "select"): ("none", "sfs"),
}


# ---------------------------------------------------------------- configuration


def _coerce(command: str, key: str, value):
    defaults = DEFAULTS[command]
    if key not in defaults:
        raise UsageError(f"unknown key {key!r} for {command}; known: {', '.join(sorted(defaults))}")
    ref = defaults[key]
    if ref is None or isinstance(ref, int) and not isinstance(ref, bool):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(ref, bool):
        ok = isinstance(value, bool)
    elif isinstance(ref, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, str)
    if not ok:
        kind = "integer" if ref is None else type(ref).__name__
        raise UsageError(f"{command}.{key} must be {kind}, got {value!r}")
    allowed = CHOICES.get((command, key))
    if allowed and value not in allowed:
        raise UsageError(f"{command}.{key} must be one of {allowed}, got {value!r}")
    return value


def _parse_override(text: str):
    if "=" not in text:
        raise UsageError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip(), value


def resolve_config(command: str, config_path: str | None, overrides, flags: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    if config_path:
        try:
            with open(config_path, "rb") as fh:
                doc = tomllib.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config {config_path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{config_path}: {exc}") from exc
        for key, value in doc.items():
            if isinstance(value, dict):
                if key != command:
                    raise UsageError(f"{config_path}: unknown table [{key}] for {command}")
                for k, v in value.items():
                    cfg[k] = _coerce(command, k, v)
            else:
                cfg[key] = _coerce(command, key, value)
    for text in overrides or ():
        key, value = _parse_override(text)
        cfg[key] = _coerce(command, key, value)
    for key, value in flags.items():
        if value is not None:
            cfg[key] = _coerce(command, key, value)
    cfg["seed"] = resolve_seed(cfg["seed"])
    return cfg


def _prepare_out(cfg: dict, command: str, workers: int) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        snapshot = {"command": command, "config": cfg, "workers": workers}
        (out / SNAPSHOT_NAME).write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot write to {out}: {exc}") from exc
    return out


def _need_file(path_str: str, what: str) -> Path:
    if not path_str:
        raise UsageError(f"{what} path is required")
    path = Path(path_str)
    if not path.exists():
        raise InputError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------- simulate


def _projection_ratio(frames: grid.FrameSequence) -> list[float]:
    ref = frames[0].values
    norm = float(np.sum(ref * ref))
    if norm == 0.0:
        return [0.0] * len(frames)
    return [float(np.sum(f.values * ref) / norm) for f in frames]


def cmd_simulate(cfg: dict, workers: int) -> None:
    out = _prepare_out(cfg, "simulate", workers)
    if cfg["n_frames"] < 2:
        raise UsageError("n_frames must be >= 2")
    ic_spec, field_spec = scenarios.sample_specs(1, cfg["seed"])[0]
    if cfg["ic"] == "file":
        path = _need_file(cfg["ic_path"], "ic_path")
        ic = _read_epf(path)[0]
    else:
        base = grid.ScalarField2D.on_domain(np.zeros((cfg["grid_n"], cfg["grid_n"])))
        if cfg["ic"] == "eigenmode":
            ic = diffusion.eigenmode(base, cfg["kx"], cfg["ky"])
        elif cfg["ic"] == "zero":
            ic = base
        else:
            ic = scenarios.gen_initial_condition(ic_spec, cfg["grid_n"])
    if cfg["tensor"] == "uniform":
        tensor = diffusion.DiffusionTensorField.uniform(ic, cfg["d0"], cfg["d1"])
    else:
        tensor, _ = scenarios.gen_diffusion_field(field_spec, ic)
    dt_frame = cfg["t_end"] / (cfg["n_frames"] - 1)
    extra = {"boundary": cfg["boundary"], "output_size": cfg["output_size"] or None}
    if cfg["dt"] > 0:
        stride = max(1, int(round(dt_frame / cfg["dt"])))
        sim = diffusion.SimConfig(dt=dt_frame / stride, t_end=cfg["t_end"], frame_stride=stride, **extra)
    else:
        sim = diffusion.SimConfig.for_frames(tensor, dt_frame, cfg["n_frames"], cfg["cfl_fraction"], **extra)
    reaction = diffusion.ReactionSpec(cfg["reaction"], cfg["reaction_rate"])
    frames = diffusion.monodomain_simulate(ic, tensor, reaction, sim)
    io.write_epf(out / "frames.epf", frames)

    energy = [grid.discrete_energy(f) for f in frames]
    summary = {
        "n_frames": len(frames), "dt": sim.step, "n_steps": sim.n_steps,
        "frame_stride": sim.frame_stride, "times": [float(t) for t in frames.times],
        "energy": energy, "max_abs": [float(np.abs(f.values).max()) for f in frames],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    analytic = cfg["ic"] == "eigenmode" and cfg["tensor"] == "uniform" and cfg["reaction"] == "none"
    rows = []
    for t, a in zip(frames.times, _projection_ratio(frames)):
        ref = diffusion.eigenmode_decay(cfg["d0"], cfg["d1"], t, 4.0, cfg["kx"], cfg["ky"]) if analytic else ""
        rows.append((float(t), a, ref))
    io.write_csv(out / "decay.csv", ("time", "amplitude", "analytic"), rows)


def _read_epf(path: Path) -> grid.FrameSequence:
    try:
        return io.read_epf(path)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# ---------------------------------------------------------------- gen-dataset


def _dataset_config(cfg: dict) -> scenarios.DatasetConfig:
    return scenarios.DatasetConfig(
        grid_n=cfg["grid_n"], output_size=cfg["output_size"], dt_frame=cfg["dt_frame"],
        n_frames=cfg["n_frames"], cfl_fraction=cfg["cfl_fraction"], dt=cfg["dt"] or None,
        contrast=cfg["contrast"], boundary_margin=cfg["boundary_margin"])


def cmd_gen_dataset(cfg: dict, workers: int) -> None:
    out = _prepare_out(cfg, "gen-dataset", workers)
    n = cfg["n"]
    done = [0]

    def progress(entry):
        done[0] += 1
        print(f"[{done[0]}/{n}] {entry['id']} {entry['status']}", file=sys.stderr)

    manifest = scenarios.gen_dataset(n, out, cfg["seed"], _dataset_config(cfg), workers, progress)
    failed = len(manifest.entries) - len(manifest.ok_indices())
    if failed:
        logger.warning("%d of %d entries failed", failed, n)


# ---------------------------------------------------------------- fit-channel


def _write_populations(out: Path, pops, prior: abc_mod.PriorSpec) -> None:
    pop_dir = out / "populations"
    pop_dir.mkdir(exist_ok=True)
    for pop in pops:
        abc_mod.write_population_csv(pop_dir / f"gen_{pop.generation:02d}.csv", pop, prior.names)
    rows = [(p.generation, p.epsilon, p.acceptance_rate, p.n_simulations, p.effective_size(),
             int(p.complete)) for p in pops]
    io.write_csv(out / "generations.csv",
                 ("generation", "epsilon", "acceptance_rate", "n_simulations", "ess", "complete"), rows)
    abc_mod.write_posterior_csv(out / "posterior.csv", abc_mod.posterior_stats(pops[-1], prior.names), prior)
    if len(pops[-1]) >= 2:
        kde_dir = out / "kde"
        kde_dir.mkdir(exist_ok=True)
        for i, name in enumerate(prior.names):
            if prior.free[i]:
                abc_mod.write_kde_csv(kde_dir / f"{name}.csv", pops, i, prior)


def cmd_fit_channel(cfg: dict, workers: int) -> None:
    out = _prepare_out(cfg, "fit-channel", workers)
    config = abc_mod.ABCConfig(
        n_particles=cfg["n_particles"], max_generations=cfg["max_generations"],
        epsilon_quantile=cfg["epsilon_quantile"], min_acceptance=cfg["min_acceptance"],
        seed=cfg["seed"], max_attempts_per_slot=cfg["max_attempts"], workers=workers)
    if cfg["mode"] == "toy":
        prior = abc_mod.PriorSpec(("mu",), [cfg["toy_lo"]], [cfg["toy_hi"]])
        y = cfg["toy_observation"]
        n_obs = cfg["toy_n_obs"]
        simulate = _ToySimulator(n_obs)
        pops = abc_mod.run_abcsmc(prior, y, simulate, abc_mod.abs_distance, config)
        _write_populations(out, pops, prior)
        last = pops[-1]
        stats = abc_mod.posterior_stats(last, prior.names)
        sd = float(np.sqrt(abc_mod.weighted_variance(last.params, last.weights))[0])
        se = sd / np.sqrt(last.effective_size())
        check = {
            "analytic_mean": y, "analytic_sd": 1.0 / np.sqrt(n_obs),
            "posterior_mean": float(stats.mean[0]), "posterior_sd": sd, "mc_se": float(se),
            "within_3se": bool(abs(stats.mean[0] - y) <= 3 * se),
        }
        (out / "toy_check.json").write_text(json.dumps(check, indent=2) + "\n", encoding="utf-8")
        return
    if cfg["observed"]:
        try:
            observed = channel.read_curves_csv(_need_file(cfg["observed"], "observed curves"))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    else:
        observed = abc_mod.synthetic_observations(channel.ORIGINAL, cfg["noise"], cfg["obs_seed"])
    channel.write_curves_csv(out / "observed.csv", observed)
    if cfg["mode"] == "degenerate":
        v = channel.ORIGINAL.vector()
        prior = abc_mod.PriorSpec(channel.PARAM_NAMES, v, v)
    else:
        prior = abc_mod.PriorSpec.sodium_channel()
    pops = abc_mod.fit_sodium_channel(observed, config, prior)
    _write_populations(out, pops, prior)


class _ToySimulator:
    """Picklable wrapper so worker processes can run the toy model."""

    def __init__(self, n_obs: int):
        self.n_obs = n_obs

    def __call__(self, theta, rng):
        return abc_mod.gaussian_toy_simulate(theta, rng, self.n_obs)


# ---------------------------------------------------------------- egm


def _label_from_stem(stem: str):
    prefix = stem.split("_", 1)[0]
    return prefix if prefix in egm.LABELS else None


def _load_recordings(input_dir: Path):
    labels = {}
    label_file = input_dir / "labels.csv"
    if label_file.exists():
        header, rows = io.read_csv(label_file)
        if header[:2] != ["id", "label"]:
            raise InputError(f"{label_file}: expected columns id,label")
        labels = {r[0]: r[1] or None for r in rows}
    recs = []
    files = sorted(p for p in input_dir.iterdir()
                   if p.suffix in (".csv", ".egm") and p.name != "labels.csv")
    if not files:
        raise InputError(f"no .csv or .egm recordings in {input_dir}")
    for p in files:
        label = labels.get(p.stem, _label_from_stem(p.stem))
        try:
            if p.suffix == ".egm":
                rec = egm.read_recording_raw(p, label)
            else:
                rec = egm.read_recording_csv(p, label)
        except (ValueError, OSError) as exc:
            raise InputError(f"{p}: {exc}") from exc
        recs.append((p.stem, rec))
    return recs


def cmd_egm_extract(cfg: dict, workers: int) -> None:
    out = _prepare_out(cfg, "egm-extract", workers)
    if cfg["input"]:
        input_dir = Path(cfg["input"])
        if not input_dir.is_dir():
            raise InputError(f"input directory not found: {input_dir}")
        items = _load_recordings(input_dir)
    else:
        items = []
        for c, label in enumerate(egm.LABELS):
            for i in range(cfg["synthetic_per_class"]):
                rng = substream(cfg["seed"], c, i)
                rec = egm.synthetic_electrogram(label, rng, cfg["sample_rate"], cfg["duration"],
                                                noise=cfg["noise"], stimulus=cfg["stimulus"])
                items.append((f"{label}_{i:03d}", rec))
    recs = [r for _, r in items]
    job = _Extractor(cfg["stim_threshold"], cfg["artifact_window"])
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                vectors = list(pool.map(job, recs))
        else:
            vectors = [job(r) for r in recs]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    egm.write_features_csv(out / "features.csv", [i for i, _ in items], [r.label for r in recs], vectors)


class _Extractor:
    """Artefact removal (known stimulus times, else threshold detection) then features."""

    def __init__(self, stim_threshold: float, window: float):
        self.stim_threshold = stim_threshold
        self.window = window

    def __call__(self, rec):
        if rec.metadata.get("stim_times"):
            rec = egm.remove_stimulus_artifact(rec, rec.metadata["stim_times"], window_s=self.window)
        elif self.stim_threshold > 0:
            rec = egm.remove_stimulus_artifact(rec, threshold=self.stim_threshold, window_s=self.window)
        return egm.extract_features(rec)


def _read_features(path: Path):
    try:
        return egm.read_features_csv(path)
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _labeled(ids, labels, X, names) -> classify.LabeledDataset:
    if any(lab is None for lab in labels):
        raise UsageError("every row needs a control/cbx label")
    y = [egm.LABELS.index(lab) for lab in labels]
    return classify.LabeledDataset(X, y, names)


def _write_report(out: Path, stem: str, report: classify.ClassificationReport) -> None:
    report.write_csv(out / f"{stem}.csv")
    (out / f"{stem}_confusion.txt").write_text(report.confusion_text(), encoding="utf-8")


def cmd_egm_train(cfg: dict, workers: int) -> None:
    out = _prepare_out(cfg, "egm-train", workers)
    ids, labels, X, names, version = _read_features(_need_file(cfg["features"], "features"))
    data = _labeled(ids, labels, X, names)
    seed, n_trees, min_leaf, k = cfg["seed"], cfg["n_trees"], cfg["min_leaf"], cfg["cv_folds"]
    if cfg["select"] == "sfs":
        if k < 2:
            raise UsageError("feature selection needs cv_folds >= 2")
        result = classify.sfs(data, k=k, n_trees=n_trees, min_leaf=min_leaf, seed=seed, workers=workers)
        io.write_csv(out / "sfs_trace.csv", ("step", "feature", "cv_accuracy"),
                     [(i + 1, names[f], acc) for i, (f, acc) in enumerate(result.trace)])
        data = data.columns(result.selected)
    try:
        if k >= 2:
            trainer = _Trainer(n_trees, min_leaf, seed)
            _write_report(out, "cv_report", classify.kfold_cv(data, k, trainer, seed))
        model = classify.bagging_train(data, n_trees, min_leaf, seed, workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model.registry_version = version
    (out / "model.json").write_text(model.to_json(), encoding="utf-8")


class _Trainer:
    def __init__(self, n_trees, min_leaf, seed):
        self.n_trees, self.min_leaf, self.seed = n_trees, min_leaf, seed

    def __call__(self, data):
        return classify.bagging_train(data, self.n_trees, self.min_leaf, self.seed)


def cmd_egm_eval(cfg: dict, workers: int) -> None:
    out = _prepare_out(cfg, "egm-eval", workers)
    model_path = _need_file(cfg["model"], "model")
    try:
        model = classify.BaggedEnsemble.from_json(model_path.read_text(encoding="utf-8"))
    except (ValueError, KeyError) as exc:
        raise InputError(f"{model_path}: {exc}") from exc
    ids, labels, X, names, version = _read_features(_need_file(cfg["features"], "features"))
    if model.registry_version != version:
        raise UsageError(f"feature registry mismatch: model trained on {model.registry_version!r}, "
                         f"features are {version!r}")
    missing = [n for n in model.feature_names if n not in names]
    if missing:
        raise UsageError(f"features file lacks model features {missing}")
    data = _labeled(ids, labels, X[:, [names.index(n) for n in model.feature_names]],
                    model.feature_names)
    pred = model.predict(data.X)
    frac = model.vote_fraction(data.X)
    io.write_csv(out / "predictions.csv", ("id", "label", "predicted", "vote_fraction"),
                 [(i, lab, egm.LABELS[p], float(f)) for i, lab, p, f in zip(ids, labels, pred, frac)])
    _write_report(out, "report", classify.ClassificationReport.from_predictions(data.y, pred))


# ---------------------------------------------------------------- baseline-eval


def cmd_baseline_eval(cfg: dict, workers: int) -> None:
    out = _prepare_out(cfg, "baseline-eval", workers)
    path = _need_file(cfg["dataset"], "dataset")
    try:
        manifest = scenarios.load_manifest(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    n_in, horizon = cfg["n_inputs"], cfg["horizon"]
    rows = []
    for i in manifest.ok_indices():
        frames = _read_epf(manifest.root / manifest.entries[i]["frames"])
        try:
            inputs, targets = grid.split_inputs_targets(frames, n_in, horizon)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        pred = grid.last_input_baseline(inputs, horizon)
        nmse = grid.nmse_per_frame(pred, targets)
        rows.append((manifest.entries[i]["id"], grid.mse(pred, targets), grid.mse(targets, targets), *nmse))
    header = ("id", "mse", "self_mse", *(f"nmse_{k + 1}" for k in range(horizon)))
    io.write_csv(out / "baseline.csv", header, rows)


# ---------------------------------------------------------------- argument parsing


COMMANDS = {
    "simulate": cmd_simulate,
    "gen-dataset": cmd_gen_dataset,
    "fit-channel": cmd_fit_channel,
    "egm-extract": cmd_egm_extract,
    "egm-train": cmd_egm_train,
    "egm-eval": cmd_egm_eval,
    "baseline-eval": cmd_baseline_eval,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (default: $EP_WORKBENCH_SEED, else 0)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for every pool")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="ep-workbench", description="Cardiac electrophysiology workbench.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("simulate", "gen-dataset", "fit-channel", "baseline-eval"):
        sub.add_parser(name, parents=[common], help=f"run {name}")
    egm_p = sub.add_parser("egm", help="electrogram feature extraction and classification")
    egm_sub = egm_p.add_subparsers(dest="egm_command", required=True, parser_class=_Parser)
    for name in ("extract", "train", "eval"):
        egm_sub.add_parser(name, parents=[common], help=f"egm {name}")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        command = args.command if args.command != "egm" else f"egm-{args.egm_command}"
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        cfg = resolve_config(command, args.config, args.set, {"out": args.out, "seed": args.seed})
        COMMANDS[command](cfg, args.workers)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, diffusion.CFLError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return 0
