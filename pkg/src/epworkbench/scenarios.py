"""Random training scenarios: smoothed-noise initial conditions and healthy/scar diffusion fields.

Initial conditions are synthesised at 128x128 from a random spectrum with a
power-law profile ``(fx^2 + fy^2 + fc)^(alpha/2)`` times standard Gaussian
noise and uniform random phases, hard-limited to ``fx^2 + fy^2 < f0^2``
(frequencies in cycles per domain length).  The Hermitian part is inverted,
scaled to the requested contrast, tapered to zero at the boundary with a
raised cosine, then resampled to the solver grid.

Diffusion fields split the domain with the line
``sin(theta) x - cos(theta) y = beta`` (``beta`` is the signed distance from
the centre).  Healthy tissue takes ``(F, F/gamma)`` along the (fast, slow)
axes; scar takes the healthy values divided by ``lambda``.
"""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import CFLError, DiffusionTensorField, SimConfig, simulate
from .grid import FrameSequence, ScalarField2D, Spectrum2D, bilinear_resample, inverse_fft2
from .io import read_epf, write_epf
from .rng import substream

logger = logging.getLogger(__name__)

SYNTH_SIZE = 128
ALPHAS = (-1, -2)
CUTOFFS = (8, 12, 16)
GAMMA_RANGE = (1.0, 3.0)
LAMBDA_RANGE = (2.0, 7.0)
FAST_RANGE = (3.2, 3.8)
BETA_RANGE = (-1.5, 1.5)
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class InitialConditionSpec:
    alpha: int
    f0: int
    seed: int
    fc: float = 3.0
    contrast: float = 1.0
    boundary_margin: float = 0.25

    def __post_init__(self):
        if self.alpha not in ALPHAS:
            raise ValueError(f"alpha must be one of {ALPHAS}, got {self.alpha}")
        if self.f0 not in CUTOFFS:
            raise ValueError(f"f0 must be one of {CUTOFFS}, got {self.f0}")
        if not self.contrast > 0:
            raise ValueError("contrast must be positive")
        if not self.boundary_margin > 0:
            raise ValueError("boundary_margin must be positive")


@dataclass(frozen=True)
class DiffusionFieldSpec:
    theta: float
    beta: float
    gamma: float
    lam: float
    fast_magnitude: float
    fast_axis: str = "horizontal"
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 1 or self.lam < 1:
            raise ValueError("gamma and lambda must be >= 1")
        if not self.fast_magnitude > 0:
            raise ValueError("fast_magnitude must be positive")
        if self.fast_axis not in ("horizontal", "vertical"):
            raise ValueError(f"fast_axis must be horizontal or vertical, got {self.fast_axis!r}")

    def diffusivities(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """``((d0, d1), (d0_scar, d1_scar))``."""
        fast = self.fast_magnitude
        slow = fast / self.gamma
        healthy = (fast, slow) if self.fast_axis == "horizontal" else (slow, fast)
        scar = (healthy[0] / self.lam, healthy[1] / self.lam)
        return healthy, scar


def ic_spectrum(spec: InitialConditionSpec, n: int = SYNTH_SIZE) -> Spectrum2D:
    """Random band-limited spectrum before symmetrisation."""
    rng = substream(spec.seed)
    f = np.fft.fftfreq(n, d=1.0 / n)
    FX, FY = np.meshgrid(f, f, indexing="ij")
    r2 = FX ** 2 + FY ** 2
    profile = (r2 + spec.fc) ** (spec.alpha / 2.0)
    noise = rng.standard_normal((n, n))
    phase = rng.uniform(0.0, 2.0 * np.pi, (n, n))
    coeffs = profile * noise * np.exp(1j * phase)
    coeffs[r2 >= spec.f0 ** 2] = 0.0
    return Spectrum2D(coeffs)


def boundary_taper(grid: ScalarField2D, margin: float) -> np.ndarray:
    """Raised-cosine weight: 0 on the boundary, 1 beyond ``margin`` from it."""
    x0, x1, y0, y1 = grid.extent

    def ramp(d):
        return 0.5 * (1.0 - np.cos(np.pi * np.clip(d / margin, 0.0, 1.0)))

    X, Y = grid.mesh()
    return ramp(np.minimum(X - x0, x1 - X)) * ramp(np.minimum(Y - y0, y1 - Y))


def synthesize_noise_field(spec: InitialConditionSpec) -> ScalarField2D:
    """Untapered smoothed noise at the synthesis resolution, scaled so ``max|v| = contrast``."""
    field = inverse_fft2(ic_spectrum(spec).symmetrized())
    peak = np.abs(field.values).max()
    return field.with_values(field.values * (spec.contrast / peak))


def gen_initial_condition(spec: InitialConditionSpec, n: int = SYNTH_SIZE) -> ScalarField2D:
    """Tapered initial condition resampled onto an ``n x n`` solver grid."""
    raw = synthesize_noise_field(spec)
    tapered = raw.with_values(raw.values * boundary_taper(raw, spec.boundary_margin))
    return bilinear_resample(tapered, n, n)


def partition_sign(spec: DiffusionFieldSpec, X, Y) -> np.ndarray:
    return np.sin(spec.theta) * X - np.cos(spec.theta) * Y - spec.beta


def gen_diffusion_field(spec: DiffusionFieldSpec,
                        grid: ScalarField2D) -> tuple[DiffusionTensorField, np.ndarray]:
    """Tensor field and boolean healthy-tissue mask on ``grid``."""
    X, Y = grid.mesh()
    healthy_mask = partition_sign(spec, X, Y) >= 0
    (h0, h1), (s0, s1) = spec.diffusivities()
    d0 = np.where(healthy_mask, h0, s0)
    d1 = np.where(healthy_mask, h1, s1)
    return DiffusionTensorField(grid, d0, d1), healthy_mask


def sample_specs(n: int, master_seed: int, contrast: float = 1.0,
                 boundary_margin: float = 0.25
                 ) -> list[tuple[InitialConditionSpec, DiffusionFieldSpec]]:
    """Draw ``n`` scenario specs; entry ``i`` uses its own substream of ``master_seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    for i in range(n):
        rng = substream(master_seed, i)
        gamma = rng.uniform(*GAMMA_RANGE)
        lam = rng.uniform(*LAMBDA_RANGE)
        fast = rng.uniform(*FAST_RANGE)
        axis = "horizontal" if rng.random() < 0.5 else "vertical"
        alpha = ALPHAS[int(rng.integers(2))]
        f0 = CUTOFFS[int(rng.integers(3))]
        theta = rng.uniform(0.0, np.pi)
        beta = rng.uniform(*BETA_RANGE)
        ic_seed, field_seed = (int(s) for s in rng.integers(0, 2 ** 63, size=2))
        out.append((
            InitialConditionSpec(alpha, f0, ic_seed, contrast=contrast,
                                 boundary_margin=boundary_margin),
            DiffusionFieldSpec(float(theta), float(beta), float(gamma), float(lam),
                               float(fast), axis, field_seed),
        ))
    return out


@dataclass(frozen=True)
class DatasetConfig:
    """Batch simulation settings.

    ``dt=None`` picks the largest step within ``cfl_fraction`` of the
    stability limit that divides ``dt_frame``.  The defaults (3 input frames
    plus 11 prediction frames, 0.01 apart) are workbench choices.
    """

    grid_n: int = 128
    output_size: int = 64
    dt_frame: float = 0.01
    n_frames: int = 14
    cfl_fraction: float = 0.9
    dt: float | None = None
    contrast: float = 1.0
    boundary_margin: float = 0.25

    def sim_config(self, tensor: DiffusionTensorField) -> SimConfig:
        if self.dt is None:
            return SimConfig.for_frames(tensor, self.dt_frame, self.n_frames,
                                        self.cfl_fraction, output_size=self.output_size)
        stride = max(1, int(round(self.dt_frame / self.dt)))
        return SimConfig(dt=self.dt, t_end=stride * self.dt * (self.n_frames - 1),
                         frame_stride=stride, output_size=self.output_size)


def simulate_entry(ic_spec: InitialConditionSpec, field_spec: DiffusionFieldSpec,
                   config: DatasetConfig) -> FrameSequence:
    ic = gen_initial_condition(ic_spec, config.grid_n)
    tensor, _ = gen_diffusion_field(field_spec, ic)
    return simulate(ic, tensor, config.sim_config(tensor))


def _dataset_worker(args):
    idx, ic_spec, field_spec, config, out_dir = args
    entry = {
        "id": f"sim_{idx:04d}",
        "initial_condition": asdict(ic_spec),
        "diffusion_field": asdict(field_spec),
    }
    try:
        frames = simulate_entry(ic_spec, field_spec, config)
    except CFLError as exc:
        entry.update(status="failed", error=str(exc), frames=None, sha256=None)
        return entry
    name = f"{entry['id']}.epf"
    path = write_epf(Path(out_dir) / name, frames)
    entry.update(status="ok", error=None, frames=name,
                 sha256=hashlib.sha256(path.read_bytes()).hexdigest(),
                 n_frames=len(frames), dt_frame=frames.dt_frame)
    return entry


@dataclass
class DatasetManifest:
    entries: list[dict]
    config: DatasetConfig
    master_seed: int
    root: Path = field(default=Path("."))

    def to_json(self) -> str:
        doc = {
            "format": "epworkbench-dataset",
            "version": 1,
            "master_seed": self.master_seed,
            "n": len(self.entries),
            "config": asdict(self.config),
            "entries": self.entries,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def specs(self, i: int) -> tuple[InitialConditionSpec, DiffusionFieldSpec]:
        e = self.entries[i]
        return InitialConditionSpec(**e["initial_condition"]), DiffusionFieldSpec(**e["diffusion_field"])

    def frames(self, i: int) -> FrameSequence:
        name = self.entries[i]["frames"]
        if name is None:
            raise ValueError(f"entry {self.entries[i]['id']} has no frames")
        return read_epf(self.root / name)

    def ok_indices(self) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e["status"] == "ok"]


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != "epworkbench-dataset":
        raise ValueError(f"{path}: not a dataset manifest")
    return DatasetManifest(doc["entries"], DatasetConfig(**doc["config"]),
                           doc["master_seed"], path.parent)


def regenerate_entry(manifest: DatasetManifest, i: int) -> FrameSequence:
    ic_spec, field_spec = manifest.specs(i)
    return simulate_entry(ic_spec, field_spec, manifest.config)


def gen_dataset(n: int, out_dir, master_seed: int, config: DatasetConfig | None = None,
                workers: int = 1, progress=None) -> DatasetManifest:
    """Simulate ``n`` random scenarios into ``out_dir`` (EPF1 files plus ``manifest.json``).

    A CFL failure is recorded on its entry and does not stop the batch.
    Output is independent of ``workers``.
    """
    config = config or DatasetConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = sample_specs(n, master_seed, config.contrast, config.boundary_margin)
    jobs = [(i, ic, fs, config, str(out_dir)) for i, (ic, fs) in enumerate(specs)]
    entries = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for entry in pool.map(_dataset_worker, jobs):
                entries.append(entry)
                if progress:
                    progress(entry)
    else:
        for job in jobs:
            entry = _dataset_worker(job)
            entries.append(entry)
            if progress:
                progress(entry)
    for e in entries:
        if e["status"] != "ok":
            logger.warning("entry %s failed: %s", e["id"], e["error"])
    manifest = DatasetManifest(entries, config, int(master_seed), out_dir)
    (out_dir / MANIFEST_NAME).write_text(manifest.to_json(), encoding="utf-8")
    return manifest
