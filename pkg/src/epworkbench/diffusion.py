"""Explicit finite-difference solver for heterogeneous anisotropic diffusion.

Solves ``dv/dt = div(D(x, y) grad v)`` with ``D = diag(d0, d1)`` on a
node-centred grid, homogeneous Dirichlet boundaries by default.  The update is
conservative flux form: face diffusivities are harmonic means of the two
adjacent nodes, so the flux stays continuous across a diffusivity jump.

The monodomain variant adds a pointwise reaction through Strang splitting.
Its membrane constants (surface-to-volume ratio, capacitance and the
intra/extracellular conductivity ratio) are assumed folded into the
diffusivities and the time unit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import FrameSequence, ScalarField2D, bilinear_resample

BOUNDARIES = ("dirichlet", "zero_flux")


class CFLError(ValueError):
    """Time step exceeds the explicit stability limit."""


@dataclass(frozen=True)
class DiffusionTensorField:
    """Per-node diagonal diffusion tensor ``(d0, d1)`` on the grid of ``grid``."""

    grid: ScalarField2D
    d0: np.ndarray
    d1: np.ndarray

    def __post_init__(self):
        d0 = np.array(np.broadcast_to(self.d0, self.grid.shape), dtype=float)
        d1 = np.array(np.broadcast_to(self.d1, self.grid.shape), dtype=float)
        if not (np.all(d0 > 0) and np.all(d1 > 0)):
            raise ValueError("diffusivities must be strictly positive")
        if not (np.all(np.isfinite(d0)) and np.all(np.isfinite(d1))):
            raise ValueError("diffusivities must be finite")
        d0.setflags(write=False)
        d1.setflags(write=False)
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "d1", d1)

    @classmethod
    def uniform(cls, grid: ScalarField2D, d0: float, d1: float | None = None):
        return cls(grid, d0, d0 if d1 is None else d1)

    def face_diffusivities(self) -> tuple[np.ndarray, np.ndarray]:
        """Harmonic-mean diffusivities on x-faces ``(nx-1, ny)`` and y-faces ``(nx, ny-1)``."""
        a, b = self.d0[:-1, :], self.d0[1:, :]
        fx = 2.0 * a * b / (a + b)
        a, b = self.d1[:, :-1], self.d1[:, 1:]
        fy = 2.0 * a * b / (a + b)
        return fx, fy


def stability_limit(tensor: DiffusionTensorField) -> float:
    """Largest explicit step keeping the update monotone: ``h_min^2 / (2 (max d0 + max d1))``."""
    h = min(tensor.grid.spacing)
    return h * h / (2.0 * (tensor.d0.max() + tensor.d1.max()))


def _flux_divergence(v, faces, spacing, boundary):
    fx, fy = faces
    hx, hy = spacing
    out = np.zeros_like(v)
    flux = fx * (v[1:, :] - v[:-1, :])
    out[:-1, :] += flux
    out[1:, :] -= flux
    out /= hx * hx
    flux = fy * (v[:, 1:] - v[:, :-1]) / (hy * hy)
    out[:, :-1] += flux
    out[:, 1:] -= flux
    if boundary == "dirichlet":
        out[0, :] = out[-1, :] = 0.0
        out[:, 0] = out[:, -1] = 0.0
    return out


def _zero_boundary(v):
    v[0, :] = v[-1, :] = 0.0
    v[:, 0] = v[:, -1] = 0.0
    return v


def _check_dt(dt, tensor):
    limit = stability_limit(tensor)
    if not dt > 0:
        raise CFLError(f"time step must be positive, got {dt}")
    if dt > limit * (1 + 1e-12):
        raise CFLError(f"dt={dt:.6g} exceeds stability limit {limit:.6g}")


def diffusion_step(state: ScalarField2D, tensor: DiffusionTensorField, dt: float,
                   boundary: str = "dirichlet") -> ScalarField2D:
    """Advance ``state`` by one explicit Euler step of size ``dt``.

    ``boundary="zero_flux"`` closes the domain instead of clamping boundary
    nodes; total mass ``sum(v) * hx * hy`` is then conserved.
    """
    if not state.same_grid(tensor.grid):
        raise ValueError("state and tensor field live on different grids")
    if boundary not in BOUNDARIES:
        raise ValueError(f"unknown boundary {boundary!r}")
    _check_dt(dt, tensor)
    v = np.array(state.values)
    if boundary == "dirichlet":
        _zero_boundary(v)
    v += dt * _flux_divergence(v, tensor.face_diffusivities(), state.spacing, boundary)
    return state.with_values(v)


@dataclass(frozen=True)
class SimConfig:
    """Time-stepping controls.

    ``t_end`` is reached exactly: the number of steps is ``ceil(t_end / dt)``
    and the step is shrunk to ``t_end / n_steps``.  ``output_size`` resamples
    stored frames bilinearly (e.g. 64 for the 64x64 sampling grid).
    """

    dt: float
    t_end: float
    frame_stride: int = 1
    scheme: str = "explicit"
    boundary: str = "dirichlet"
    output_size: int | None = None

    def __post_init__(self):
        if self.scheme != "explicit":
            raise ValueError(f"only the explicit scheme is available, got {self.scheme!r}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.frame_stride < 1:
            raise ValueError("frame_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(np.ceil(self.t_end / self.dt - 1e-9)))

    @property
    def step(self) -> float:
        return self.t_end / self.n_steps

    @classmethod
    def for_frames(cls, tensor: DiffusionTensorField, dt_frame: float, n_frames: int,
                   cfl_fraction: float = 0.9, **kw) -> "SimConfig":
        """Config storing ``n_frames`` frames (t=0 included) ``dt_frame`` apart."""
        stride = int(np.ceil(dt_frame / (cfl_fraction * stability_limit(tensor))))
        return cls(dt=dt_frame / stride, t_end=dt_frame * (n_frames - 1),
                   frame_stride=stride, **kw)


Reaction = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ReactionSpec:
    """Pointwise reaction term for the monodomain operator.

    kinds:
      ``none``      no reaction
      ``logistic``  ``r v (1 - v)``, advanced with its exact solution
      ``custom``    ``f(v)`` tabulated at ``table_v`` / ``table_f`` (linear
                    interpolation, constant extrapolation), advanced by RK4
    """

    kind: str = "none"
    rate: float = 0.0
    table_v: tuple[float, ...] = field(default=())
    table_f: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("none", "logistic", "custom"):
            raise ValueError(f"unknown reaction kind {self.kind!r}")
        if self.kind == "logistic" and self.rate < 0:
            raise ValueError("logistic rate must be >= 0")
        if self.kind == "custom":
            if len(self.table_v) < 2 or len(self.table_v) != len(self.table_f):
                raise ValueError("custom reaction needs matching tables of length >= 2")
            if np.any(np.diff(self.table_v) <= 0):
                raise ValueError("table_v must be strictly increasing")

    def advance(self, v: np.ndarray, tau: float) -> np.ndarray:
        """Integrate ``dv/dt = f(v)`` over ``tau`` at every node."""
        if self.kind == "none":
            return v
        if self.kind == "logistic":
            g = np.exp(self.rate * tau)
            return v * g / (1.0 + v * (g - 1.0))
        tv, tf = np.asarray(self.table_v), np.asarray(self.table_f)

        def f(u):
            return np.interp(u, tv, tf)

        k1 = f(v)
        k2 = f(v + 0.5 * tau * k1)
        k3 = f(v + 0.5 * tau * k2)
        k4 = f(v + tau * k3)
        return v + tau / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _run(ic, tensor, config, reaction):
    if not ic.same_grid(tensor.grid):
        raise ValueError("initial condition and tensor field live on different grids")
    dt = config.step
    _check_dt(dt, tensor)
    faces = tensor.face_diffusivities()
    dirichlet = config.boundary == "dirichlet"
    v = np.array(ic.values)
    if dirichlet:
        _zero_boundary(v)

    def store(arr):
        f = ic.with_values(arr.copy())
        if config.output_size:
            f = bilinear_resample(f, config.output_size, config.output_size)
        return f

    def react(u, n):
        with np.errstate(all="ignore"):
            u = reaction.advance(u, 0.5 * dt)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError(f"reaction produced non-finite values at step {n}")
        return u

    frames = [store(v)]
    for n in range(1, config.n_steps + 1):
        if reaction is not None:
            v = react(v, n)
        v = v + dt * _flux_divergence(v, faces, ic.spacing, config.boundary)
        if reaction is not None:
            v = react(v, n)
            if dirichlet:
                _zero_boundary(v)
        if n % config.frame_stride == 0:
            frames.append(store(v))
    return FrameSequence(tuple(frames), dt * config.frame_stride)


def simulate(ic: ScalarField2D, tensor: DiffusionTensorField, config: SimConfig) -> FrameSequence:
    """Integrate pure diffusion; frames every ``frame_stride`` steps from t=0."""
    return _run(ic, tensor, config, None)


def monodomain_simulate(ic: ScalarField2D, tensor: DiffusionTensorField,
                        reaction: ReactionSpec, config: SimConfig) -> FrameSequence:
    """Reaction-diffusion by Strang splitting (half reaction, diffusion, half reaction).

    With ``reaction.kind == "none"`` this is exactly :func:`simulate`.
    """
    if reaction.kind == "none":
        return simulate(ic, tensor, config)
    return _run(ic, tensor, config, reaction)


def eigenmode(grid: ScalarField2D, kx: int = 1, ky: int = 1) -> ScalarField2D:
    """Dirichlet eigenfunction ``sin(kx pi (x-x0)/Lx) sin(ky pi (y-y0)/Ly)`` on ``grid``."""
    x0, x1, y0, y1 = grid.extent
    X, Y = grid.mesh()
    v = np.sin(kx * np.pi * (X - x0) / (x1 - x0)) * np.sin(ky * np.pi * (Y - y0) / (y1 - y0))
    return grid.with_values(v)


def eigenmode_decay(d0: float, d1: float, t: float, length: float = 4.0,
                    kx: int = 1, ky: int = 1) -> float:
    """Analytic amplitude factor of :func:`eigenmode` under uniform ``diag(d0, d1)``."""
    return float(np.exp(-(d0 * (kx * np.pi / length) ** 2 + d1 * (ky * np.pi / length) ** 2) * t))
