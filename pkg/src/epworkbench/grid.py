"""Regular-grid scalar fields, spectral synthesis helpers and frame error norms.

Fields live on a node-centred grid: ``x_i = x0 + i*hx`` and ``y_j = y0 + j*hy``,
with ``values[i, j]`` the sample at ``(x_i, y_j)``.  The default domain is
``[-2, 2]^2`` so that boundary nodes sit exactly on the domain boundary.

Spectral convention: a :class:`Spectrum2D` stores coefficients in standard
FFT order (index ``k`` maps to signed frequency ``k`` for ``k < n/2`` and
``k - n`` otherwise, in cycles per domain length).  The inverse transform
carries the ``1/n^2`` factor, so ``sum|v|^2 == sum|c|^2 / n^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DOMAIN = (-2.0, 2.0)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ScalarField2D:
    """A scalar field sampled on a regular 2-D grid."""

    values: np.ndarray
    origin: tuple[float, float] = (DOMAIN[0], DOMAIN[0])
    spacing: tuple[float, float] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 2:
            raise ValueError(f"field needs at least 2x2 samples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.spacing is None:
            span = DOMAIN[1] - DOMAIN[0]
            object.__setattr__(
                self, "spacing", (span / (values.shape[0] - 1), span / (values.shape[1] - 1))
            )
        hx, hy = (float(h) for h in self.spacing)
        if not (hx > 0 and hy > 0):
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "spacing", (hx, hy))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def on_domain(cls, values, lo: float = DOMAIN[0], hi: float = DOMAIN[1]) -> "ScalarField2D":
        values = np.asarray(values, dtype=float)
        nx, ny = values.shape
        return cls(values, (lo, lo), ((hi - lo) / (nx - 1), (hi - lo) / (ny - 1)))

    @classmethod
    def from_function(cls, func, nx: int, ny: int | None = None,
                      lo: float = DOMAIN[0], hi: float = DOMAIN[1]) -> "ScalarField2D":
        """Sample ``func(X, Y)`` on an ``nx x ny`` node grid spanning ``[lo, hi]^2``."""
        ny = nx if ny is None else ny
        x = np.linspace(lo, hi, nx)
        y = np.linspace(lo, hi, ny)
        X, Y = np.meshgrid(x, y, indexing="ij")
        return cls.on_domain(np.broadcast_to(func(X, Y), (nx, ny)), lo, hi)

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.spacing[0] * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.spacing[1] * np.arange(self.ny)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (self.origin[0], self.origin[0] + self.spacing[0] * (self.nx - 1),
                self.origin[1], self.origin[1] + self.spacing[1] * (self.ny - 1))

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def same_grid(self, other: "ScalarField2D") -> bool:
        return (self.shape == other.shape
                and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12)
                and np.allclose(self.spacing, other.spacing, rtol=1e-12, atol=0))

    def with_values(self, values) -> "ScalarField2D":
        return ScalarField2D(values, self.origin, self.spacing)


@dataclass(frozen=True)
class Spectrum2D:
    """Square array of Fourier coefficients in standard FFT order."""

    coefficients: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"spectrum must be square, got shape {c.shape}")
        if not _is_pow2(c.shape[0]):
            raise ValueError(f"spectrum size must be a power of two, got {c.shape[0]}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def n(self) -> int:
        return self.coefficients.shape[0]

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """Signed integer frequencies ``(FX, FY)`` matching the coefficient layout."""
        f = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.meshgrid(f, f, indexing="ij")

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        c = self.coefficients
        mirror = np.conj(_mirror(c))
        scale = max(np.abs(c).max(), np.finfo(float).tiny)
        return bool(np.abs(c - mirror).max() <= rtol * scale)

    def symmetrized(self) -> "Spectrum2D":
        """Hermitian part ``(c(f) + conj(c(-f))) / 2``; its inverse is real."""
        c = self.coefficients
        return Spectrum2D(0.5 * (c + np.conj(_mirror(c))), hermitian=True)


def _mirror(c: np.ndarray) -> np.ndarray:
    # c(-f) in FFT ordering: index k -> (-k) mod n on both axes
    return np.roll(c[::-1, ::-1], 1, axis=(0, 1))


def forward_fft2(field: ScalarField2D) -> Spectrum2D:
    """Unnormalised forward DFT of a square power-of-two field."""
    if field.nx != field.ny or not _is_pow2(field.nx):
        raise ValueError(f"FFT needs a square power-of-two field, got {field.shape}")
    return Spectrum2D(np.fft.fft2(field.values), hermitian=True)


def inverse_fft2(spectrum: Spectrum2D, rtol: float = 1e-10) -> ScalarField2D:
    """Invert ``spectrum`` onto a real ``n x n`` field over the default domain.

    The ``1/n^2`` factor is applied here.  Coefficients must be
    Hermitian-symmetric to ``rtol``; use :meth:`Spectrum2D.symmetrized` first.
    """
    if not spectrum.is_hermitian(rtol):
        raise ValueError("spectrum is not Hermitian-symmetric; inverse would be complex")
    return ScalarField2D.on_domain(np.fft.ifft2(spectrum.coefficients).real)


def bilinear_resample(field: ScalarField2D, nx2: int, ny2: int | None = None) -> ScalarField2D:
    """Resample ``field`` onto ``nx2 x ny2`` nodes spanning the same extent."""
    ny2 = nx2 if ny2 is None else ny2
    if nx2 < 2 or ny2 < 2:
        raise ValueError(f"target grid must be at least 2x2, got {nx2}x{ny2}")
    nx, ny = field.shape
    spacing = (field.spacing[0] * (nx - 1) / (nx2 - 1), field.spacing[1] * (ny - 1) / (ny2 - 1))
    if (nx2, ny2) == (nx, ny):
        return ScalarField2D(field.values.copy(), field.origin, field.spacing)

    def weights(n_src, n_dst):
        pos = np.arange(n_dst) * (n_src - 1) / (n_dst - 1)
        i0 = np.minimum(np.floor(pos).astype(int), n_src - 2)
        return i0, pos - i0

    i0, tx = weights(nx, nx2)
    j0, ty = weights(ny, ny2)
    v = field.values
    tx = tx[:, None]
    ty = ty[None, :]
    out = ((1 - tx) * (1 - ty) * v[np.ix_(i0, j0)]
           + tx * (1 - ty) * v[np.ix_(i0 + 1, j0)]
           + (1 - tx) * ty * v[np.ix_(i0, j0 + 1)]
           + tx * ty * v[np.ix_(i0 + 1, j0 + 1)])
    return ScalarField2D(out, field.origin, spacing)


@dataclass(frozen=True)
class FrameSequence:
    """Ordered frames sharing one grid, stored ``dt_frame`` apart."""

    frames: tuple[ScalarField2D, ...]
    dt_frame: float = 1.0
    t0: float = field(default=0.0)

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a frame sequence needs at least one frame")
        first = frames[0]
        if any(not f.same_grid(first) for f in frames[1:]):
            raise ValueError("all frames must share the same grid")
        if not self.dt_frame > 0:
            raise ValueError("dt_frame must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            frames = self.frames[idx]
            start = idx.indices(len(self.frames))[0]
            return FrameSequence(frames, self.dt_frame, self.t0 + start * self.dt_frame)
        return self.frames[idx]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt_frame * np.arange(len(self.frames))

    def stack(self) -> np.ndarray:
        """Frames as one ``(nframes, nx, ny)`` array."""
        return np.stack([f.values for f in self.frames])

    @classmethod
    def from_array(cls, data: np.ndarray, template: ScalarField2D, dt_frame: float,
                   t0: float = 0.0) -> "FrameSequence":
        return cls(tuple(template.with_values(v) for v in data), dt_frame, t0)


def _check_shapes(a: FrameSequence, b: FrameSequence):
    if len(a) != len(b) or a[0].shape != b[0].shape:
        raise ValueError(
            f"shape mismatch: {len(a)}x{a[0].shape} vs {len(b)}x{b[0].shape}")


def mse(a: FrameSequence, b: FrameSequence) -> float:
    """Mean squared difference over every frame and sample."""
    _check_shapes(a, b)
    return float(np.mean((a.stack() - b.stack()) ** 2))


def nmse_per_frame(pred: FrameSequence, target: FrameSequence) -> list[float]:
    """Per-frame MSE divided by the L2 norm of the target frame."""
    _check_shapes(pred, target)
    p, t = pred.stack(), target.stack()
    norms = np.sqrt(np.sum(t ** 2, axis=(1, 2)))
    if np.any(norms == 0):
        raise ValueError("target frame with zero L2 norm; NMSE undefined")
    return list(np.mean((p - t) ** 2, axis=(1, 2)) / norms)


def last_input_baseline(inputs: FrameSequence, horizon: int) -> FrameSequence:
    """Predict ``horizon`` frames by repeating the last input frame."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    last = inputs[-1]
    t0 = inputs.times[-1] + inputs.dt_frame
    return FrameSequence((last,) * horizon, inputs.dt_frame, t0)


def split_inputs_targets(seq: FrameSequence, n_inputs: int,
                         horizon: int) -> tuple[FrameSequence, FrameSequence]:
    if n_inputs < 1 or n_inputs + horizon > len(seq):
        raise ValueError(
            f"need {n_inputs} inputs + {horizon} targets, sequence has {len(seq)} frames")
    return seq[:n_inputs], seq[n_inputs:n_inputs + horizon]


def discrete_energy(field: ScalarField2D) -> float:
    """``sum v^2 * hx * hy``."""
    return float(np.sum(field.values ** 2) * field.spacing[0] * field.spacing[1])

