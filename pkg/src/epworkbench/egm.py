"""Electrogram preprocessing and feature extraction.

Pipeline: subtract the pacing artefact (a rational (2,2) polynomial fitted to
a fixed window after each stimulus), find deflections from the signal
derivative, then map each recording to a fixed feature vector.

The default registry holds the three discriminating features (amplitude,
spread of the autocorrelation function, scale of minimum continuous wavelet
energy) and four general-purpose ones.  Build a :class:`FeatureRegistry`
with a new version string to extend it.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import fftconvolve, find_peaks, periodogram

from .io import read_csv, write_csv

ACF_LAG_SECONDS = 0.05
CWT_SCALES = np.arange(1, 65)
ARTIFACT_WINDOW_SECONDS = 0.02
LABELS = ("control", "cbx")


@dataclass(frozen=True)
class ElectrogramRecording:
    samples: np.ndarray
    sample_rate: float
    label: str | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def replace_samples(self, samples, **meta) -> "ElectrogramRecording":
        return ElectrogramRecording(samples, self.sample_rate, self.label, {**self.metadata, **meta})


# ---------------------------------------------------------------- artefact removal


def detect_stimuli(rec: ElectrogramRecording, threshold: float,
                   refractory_s: float = 0.1) -> list[float]:
    """Onset times (s) where ``|x|`` first crosses ``threshold``, one per refractory period."""
    above = np.flatnonzero(np.abs(rec.samples) > threshold)
    onsets, last = [], -np.inf
    gap = refractory_s * rec.sample_rate
    for i in above:
        if i - last >= gap:
            onsets.append(i / rec.sample_rate)
            last = i
    return onsets


def _rational(coef, s):
    a0, a1, a2, b1, b2 = coef
    return (a0 + a1 * s + a2 * s * s) / (1.0 + b1 * s + b2 * s * s)


def fit_rational(y: np.ndarray, s: np.ndarray) -> np.ndarray | None:
    """Least-squares rational (2,2) fit of ``y(s)``; None if ill-posed.

    A linearised fit seeds a nonlinear refinement of the true residual.
    """
    A = np.column_stack([np.ones_like(s), s, s * s, -s * y, -s * s * y])
    if np.linalg.matrix_rank(A) < A.shape[1]:
        return None
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    den = 1.0 + coef[3] * s + coef[4] * s * s
    if np.any(den <= 1e-6):
        coef = np.array([coef[0], coef[1], coef[2], 0.0, 0.0])
    res = least_squares(lambda c: _rational(c, s) - y, coef, method="lm")
    den = 1.0 + res.x[3] * s + res.x[4] * s * s
    if not res.success or np.any(den <= 1e-6) or not np.all(np.isfinite(res.x)):
        return None
    return res.x


def remove_stimulus_artifact(rec: ElectrogramRecording, stim_times: Sequence[float] | None = None,
                             threshold: float | None = None,
                             window_s: float = ARTIFACT_WINDOW_SECONDS) -> ElectrogramRecording:
    """Subtract a rational (2,2) fit inside ``window_s`` after each stimulus onset.

    Samples outside the windows are returned unchanged.  A window whose fit
    fails is zeroed instead; its onset is listed in ``metadata["artifact_fallback"]``.
    """
    if stim_times is None:
        if threshold is None:
            raise ValueError("give stim_times or a detection threshold")
        stim_times = detect_stimuli(rec, threshold)
    x = np.array(rec.samples)
    w = max(int(round(window_s * rec.sample_rate)), 6)
    fallback = []
    for t in stim_times:
        i0 = int(round(t * rec.sample_rate))
        i1 = min(i0 + w, x.size)
        if i1 - i0 < 6:
            continue
        seg = x[i0:i1]
        s = np.arange(i1 - i0) / w
        coef = fit_rational(seg, s)
        if coef is None:
            warnings.warn(f"artefact fit failed at t={t:.4f}s; zeroing window", RuntimeWarning)
            fallback.append(float(t))
            x[i0:i1] = 0.0
        else:
            x[i0:i1] = seg - _rational(coef, s)
    return rec.replace_samples(x, artifact_fallback=fallback)


# ---------------------------------------------------------------- deflections


@dataclass(frozen=True)
class Window:
    start: int
    stop: int
    center: int


def detect_deflections(rec: ElectrogramRecording, k: float = 8.0, half_width_s: float = 0.005,
                       refractory_s: float = 0.02, rel_floor: float = 0.05) -> list[Window]:
    """Windows centred on derivative extrema above ``k`` median absolute deviations.

    The MAD is taken over the signed derivative, so for white noise ``k``
    is roughly ``0.67 k`` standard deviations.  ``rel_floor`` keeps the
    threshold at least that fraction of the largest slope, so noise-free
    signals with zero MAD do not trigger on tails.
    """
    g = np.gradient(rec.samples) if rec.samples.size > 1 else np.zeros(rec.samples.size)
    d = np.abs(g)
    # one-sided end differences carry twice the noise of central ones
    d[[0, -1] if d.size else []] = 0.0
    peak = d.max() if d.size else 0.0
    if peak == 0.0:
        return []
    mad = np.median(np.abs(g - np.median(g)))
    thr = max(k * mad, rel_floor * peak)
    dist = max(1, int(round(refractory_s * rec.sample_rate)))
    idx, _ = find_peaks(np.concatenate([[0.0], d, [0.0]]), height=thr, distance=dist)
    idx = idx - 1
    hw = int(round(half_width_s * rec.sample_rate))
    n = rec.samples.size
    return [Window(max(0, i - hw), min(n, i + hw + 1), int(i)) for i in idx]


# ---------------------------------------------------------------- features


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation of the mean-removed signal, normalised to 1 at lag 0."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft)
    r = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1]
    if r[0] == 0:
        return np.zeros(max_lag + 1)
    return r / r[0]


def ricker(points: int, a: float) -> np.ndarray:
    """Mexican-hat wavelet of width ``a`` sampled on ``points`` centred samples."""
    amp = 2.0 / (np.sqrt(3.0 * a) * np.pi ** 0.25)
    t = np.arange(points) - (points - 1.0) / 2.0
    return amp * (1.0 - (t / a) ** 2) * np.exp(-(t ** 2) / (2.0 * a * a))


def cwt_energy(x: np.ndarray, scales=CWT_SCALES) -> np.ndarray:
    """Per-scale energy ``sum_t |W(s, t)|^2`` of the Ricker CWT (``same``-mode convolution)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(len(scales))
    for i, a in enumerate(scales):
        w = ricker(min(10 * int(a), x.size), a)
        out[i] = np.sum(fftconvolve(x, w, mode="same") ** 2)
    return out


def _amplitude(x, fs, rec):
    return float(x.max() - x.min())


def _acf_std(x, fs, rec):
    return float(np.std(autocorrelation(x, int(round(ACF_LAG_SECONDS * fs)))))


def _min_energy_scale(x, fs, rec):
    return float(CWT_SCALES[int(np.argmin(cwt_energy(x)))])


def _dominant_frequency(x, fs, rec):
    f, p = periodogram(x, fs=fs, detrend="constant")
    if p.size < 2 or not np.any(p[1:] > 0):
        return 0.0
    return float(f[1 + int(np.argmax(p[1:]))])


def _rms(x, fs, rec):
    return float(np.sqrt(np.mean(x * x)))


def _deflection_count(x, fs, rec):
    return float(len(detect_deflections(rec)))


def _peak_to_peak_duration(x, fs, rec):
    return float(abs(int(np.argmax(x)) - int(np.argmin(x))) / fs)


FeatureFn = Callable[[np.ndarray, float, ElectrogramRecording], float]


@dataclass(frozen=True)
class FeatureRegistry:
    version: str
    features: tuple[tuple[str, FeatureFn], ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.features)

    def extended(self, version: str, extra: Sequence[tuple[str, FeatureFn]]) -> "FeatureRegistry":
        return FeatureRegistry(version, self.features + tuple(extra))


DEFAULT_REGISTRY = FeatureRegistry("egm-features/1", (
    ("amplitude", _amplitude),
    ("acf_std", _acf_std),
    ("min_energy_scale", _min_energy_scale),
    ("dominant_frequency", _dominant_frequency),
    ("rms", _rms),
    ("deflection_count", _deflection_count),
    ("peak_to_peak_duration", _peak_to_peak_duration),
))


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray
    registry_version: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.names),):
            raise ValueError("feature values do not match the registry")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite feature value")
        object.__setattr__(self, "values", v)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


def min_samples(sample_rate: float) -> int:
    return max(int(round(ACF_LAG_SECONDS * sample_rate)) + 1, 10 * int(CWT_SCALES[-1]))


def extract_features(rec: ElectrogramRecording,
                     registry: FeatureRegistry = DEFAULT_REGISTRY) -> FeatureVector:
    need = min_samples(rec.sample_rate)
    if rec.samples.size < need:
        raise ValueError(f"recording has {rec.samples.size} samples; features need >= {need}")
    x, fs = rec.samples, rec.sample_rate
    return FeatureVector(registry.names, [fn(x, fs, rec) for _, fn in registry.features],
                         registry.version)


# ---------------------------------------------------------------- synthetic data


def biphasic(t: np.ndarray, center: float, width: float, amplitude: float) -> np.ndarray:
    """Negative-going derivative-of-Gaussian deflection; steepest slope at ``center``."""
    u = (t - center) / width
    return -amplitude * u * np.exp(0.5 - 0.5 * u * u)


def synthetic_electrogram(label: str, rng: np.random.Generator, sample_rate: float = 5000.0,
                          duration: float = 1.0, n_beats: int = 10, noise: float = 0.01,
                          stimulus: float = 0.0, delay: float = 0.03) -> ElectrogramRecording:
    """Paced recording with ``n_beats`` deflections; uncoupled (cbx) beats are smaller and wider.

    With ``stimulus > 0`` each beat is preceded by a decaying pacing
    artefact ``delay`` seconds earlier.
    """
    if label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    period = duration / n_beats
    if label == "control":
        amp, width = rng.normal(1.0, 0.08), rng.normal(0.6e-3, 0.05e-3)
    else:
        amp, width = rng.normal(0.6, 0.08), rng.normal(1.1e-3, 0.1e-3)
    x = noise * rng.standard_normal(t.size)
    stims = []
    for b in range(n_beats):
        i_stim = int(round((b * period + 0.005) * sample_rate))
        t_stim = i_stim / sample_rate
        x += biphasic(t, t_stim + delay, width, amp)
        if stimulus > 0:
            x[i_stim:] += stimulus * np.exp(-(t[i_stim:] - t_stim) / 0.003)
            stims.append(t_stim)
    return ElectrogramRecording(x, sample_rate, label, {"stim_times": stims})


# ---------------------------------------------------------------- file formats

_RAW_HEADER = struct.Struct("<4sdI")
RAW_MAGIC = b"EGM1"


def write_recording_raw(path, rec: ElectrogramRecording) -> Path:
    """``b"EGM1"``, f64 sample rate, u32 count, then little-endian f32 samples."""
    path = Path(path)
    path.write_bytes(_RAW_HEADER.pack(RAW_MAGIC, rec.sample_rate, rec.samples.size)
                     + rec.samples.astype("<f4").tobytes())
    return path


def read_recording_raw(path, label=None) -> ElectrogramRecording:
    raw = Path(path).read_bytes()
    magic, fs, n = _RAW_HEADER.unpack_from(raw)
    if magic != RAW_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    x = np.frombuffer(raw, dtype="<f4", count=n, offset=_RAW_HEADER.size).astype(float)
    return ElectrogramRecording(x, fs, label)


def write_recording_csv(path, rec: ElectrogramRecording) -> Path:
    t = np.arange(rec.samples.size) / rec.sample_rate
    return write_csv(path, ("time_s", "value"), zip(t, rec.samples))


def read_recording_csv(path, label=None) -> ElectrogramRecording:
    header, rows = read_csv(path)
    if header[:2] != ["time_s", "value"]:
        raise ValueError(f"{path}: expected columns time_s,value")
    data = np.array(rows, dtype=float)
    dt = np.median(np.diff(data[:, 0]))
    return ElectrogramRecording(data[:, 1], 1.0 / dt, label)


def write_features_csv(path, ids: Sequence[str], labels: Sequence[str | None],
                       vectors: Sequence[FeatureVector]) -> Path:
    names = vectors[0].names
    version = vectors[0].registry_version
    rows = [(i, lab or "", version, *map(float, v.values)) for i, lab, v in zip(ids, labels, vectors)]
    return write_csv(path, ("id", "label", "registry_version", *names), rows)


def read_features_csv(path):
    """Returns ``(ids, labels, X, names, registry_version)``."""
    header, rows = read_csv(path)
    if header[:3] != ["id", "label", "registry_version"]:
        raise ValueError(f"{path}: expected id,label,registry_version,<features...>")
    versions = {r[2] for r in rows}
    if len(versions) > 1:
        raise ValueError(f"{path}: mixed registry versions {sorted(versions)}")
    X = np.array([[float(v) for v in r[3:]] for r in rows])
    return ([r[0] for r in rows], [r[1] or None for r in rows], X, tuple(header[3:]),
            versions.pop() if versions else None)
