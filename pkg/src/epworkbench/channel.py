"""Fast sodium channel kinetics and simulated patch-clamp protocols.

Current ``I = g_na m^3 h j (V - e_na)`` with steady states

    m_inf = 1 / (1 + exp((p1 + V) / p2))
    h_inf = j_inf = 1 / (1 + exp((q1 + V) / q2))
    1 / tau_m = p3 (V + p4) / (1 - exp(p5 (V + p4))) + p6 exp(-V / p7)

Inactivation time constants are not inferred; they are pluggable callables
whose defaults (10 ms and 100 ms, voltage independent) are placeholders.

Gates obey ``dg/dt = (g_inf - g) / tau_g``.  Voltage is piecewise constant,
so every segment is integrated with the exact exponential (Rush-Larsen)
update.  Peak conductance inside a measured segment is located on the
closed-form gate trajectories, which makes summary curves independent of the
sampling step.

Units: mV, ms.  The default protocol voltages and durations are workbench
choices, not published values.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np

from .io import read_csv, write_csv

PARAM_NAMES = ("p1", "p2", "p3", "p4", "p5", "p6", "p7", "q1", "q2")
PROTOCOL_KINDS = ("activation", "iv_curve", "inactivation", "pulse_train", "recovery")
_TAYLOR_EPS = 1e-6


class ChannelInfeasible(ArithmeticError):
    """Parameter set yields non-finite kinetics or degenerate summaries."""


@dataclass(frozen=True)
class ConstantTau:
    """Voltage-independent time constant (ms)."""

    value: float

    def __call__(self, v):
        return np.full_like(np.asarray(v, dtype=float), self.value)


@dataclass(frozen=True)
class SodiumChannelParams:
    g_na: float = 1.0
    e_na: float = 64.3
    p1: float = 45.0
    p2: float = -6.5
    p3: float = 0.235
    p4: float = 47.1
    p5: float = -0.1
    p6: float = 0.0588
    p7: float = 11.0
    q1: float = 76.1
    q2: float = 6.07
    tau_h: Callable = field(default=ConstantTau(10.0))
    tau_j: Callable = field(default=ConstantTau(100.0))

    def __post_init__(self):
        if not self.g_na > 0:
            raise ValueError("g_na must be positive")
        for name in ("p2", "q2", "p7"):
            if getattr(self, name) == 0:
                raise ValueError(f"{name} must be non-zero")

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    def with_vector(self, theta: Sequence[float]) -> "SodiumChannelParams":
        return replace(self, **{n: float(v) for n, v in zip(PARAM_NAMES, theta)})


ORIGINAL = SodiumChannelParams()


@dataclass(frozen=True)
class GateState:
    m: float
    h: float
    j: float

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"gate {f.name}={val} outside [0, 1]")


def m_inf(v, params: SodiumChannelParams = ORIGINAL):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp((params.p1 + np.asarray(v, dtype=float)) / params.p2))


def hj_inf(v, params: SodiumChannelParams = ORIGINAL):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp((params.q1 + np.asarray(v, dtype=float)) / params.q2))


def tau_m(v, params: SodiumChannelParams = ORIGINAL):
    """Activation time constant; the removable singularity at ``V = -p4`` is expanded."""
    v = np.asarray(v, dtype=float)
    u = v + params.p4
    x = params.p5 * u
    small = np.abs(x) < _TAYLOR_EPS
    with np.errstate(all="ignore"):
        direct = params.p3 * u / -np.expm1(x)
        series = -(params.p3 / params.p5) * (1.0 - 0.5 * x)
        rate = np.where(small, series, direct) + params.p6 * np.exp(-v / params.p7)
        tau = 1.0 / rate
    if np.any(np.isnan(tau)) or np.any(np.isinf(tau)) or np.any(tau < 0):
        raise ChannelInfeasible("tau_m is not finite and non-negative")
    return tau


def i_na(v, state: GateState, params: SodiumChannelParams = ORIGINAL):
    return params.g_na * state.m ** 3 * state.h * state.j * (np.asarray(v, dtype=float) - params.e_na)


def steady_state(v, params: SodiumChannelParams = ORIGINAL) -> GateState:
    hj = float(hj_inf(v, params))
    return GateState(float(m_inf(v, params)), hj, hj)


def _kinetics(v, params):
    v = np.asarray(v, dtype=float)
    hj = hj_inf(v, params)
    return (m_inf(v, params), hj, hj), (tau_m(v, params), params.tau_h(v), params.tau_j(v))


def _rate(tau):
    # tau == 0 means the gate tracks its steady state instantly
    return 1.0 / np.maximum(tau, 1e-300)


def _relax(g0, ginf, tau, t):
    # t * rate may overflow to inf for tiny tau; exp(-inf) = 0 is the right limit
    with np.errstate(over="ignore"):
        return ginf + (g0 - ginf) * np.exp(-t * _rate(tau))


# ---------------------------------------------------------------- protocols


@dataclass(frozen=True)
class Sweep:
    """One voltage-clamp episode: ``segments`` of (duration ms, voltage mV).

    Gates start at steady state for the first segment's voltage; peak
    conductance is reported for each segment index in ``measure``.
    """

    segments: tuple[tuple[float, float], ...]
    measure: tuple[int, ...]
    abscissa: float = 0.0

    def __post_init__(self):
        if any(d <= 0 for d, _ in self.segments):
            raise ValueError("segment durations must be positive")
        if any(not 0 <= k < len(self.segments) for k in self.measure):
            raise ValueError("measure index out of range")


@dataclass(frozen=True)
class VoltageProtocol:
    kind: str
    sweeps: tuple[Sweep, ...]

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if not self.sweeps:
            raise ValueError("protocol needs at least one sweep")


@dataclass(frozen=True)
class SummaryCurve:
    kind: str
    abscissa: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.abscissa, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if x.shape != y.shape:
            raise ValueError("abscissa and values differ in length")
        if not np.all(np.isfinite(y)):
            raise ChannelInfeasible(f"non-finite values in {self.kind} curve")
        object.__setattr__(self, "abscissa", x)
        object.__setattr__(self, "values", y)


@dataclass(frozen=True)
class Trace:
    t: np.ndarray
    v: np.ndarray
    m: np.ndarray
    h: np.ndarray
    j: np.ndarray
    i_na: np.ndarray


def activation_protocol(test_voltages=tuple(range(-60, 31, 5)), holding=-120.0,
                        duration=50.0, kind="activation") -> VoltageProtocol:
    sweeps = tuple(Sweep(((10.0, holding), (duration, float(v))), (1,), float(v))
                   for v in test_voltages)
    return VoltageProtocol(kind, sweeps)


def inactivation_protocol(prepulses=tuple(range(-120, -39, 5)), duration=500.0,
                          test=-20.0, test_duration=20.0, holding=-120.0) -> VoltageProtocol:
    sweeps = tuple(Sweep(((10.0, holding), (duration, float(v)), (test_duration, test)),
                         (2,), float(v))
                   for v in prepulses)
    return VoltageProtocol("inactivation", sweeps)


def recovery_protocol(gaps=tuple(np.geomspace(1.0, 500.0, 12)), pulse=-20.0,
                      pulse_duration=20.0, holding=-120.0) -> VoltageProtocol:
    sweeps = tuple(Sweep(((10.0, holding), (pulse_duration, pulse), (float(g), holding),
                          (pulse_duration, pulse)), (1, 3), float(g))
                   for g in gaps)
    return VoltageProtocol("recovery", sweeps)


def pulse_train_protocol(n_pulses=20, frequency_hz=2.0, pulse=-20.0,
                         pulse_duration=20.0, holding=-120.0) -> VoltageProtocol:
    period = 1000.0 / frequency_hz
    segs = [(10.0, holding)]
    for _ in range(n_pulses):
        segs += [(pulse_duration, pulse), (period - pulse_duration, holding)]
    measure = tuple(range(1, 2 * n_pulses, 2))
    return VoltageProtocol("pulse_train", (Sweep(tuple(segs), measure),))


def default_protocols() -> list[VoltageProtocol]:
    """Activation, peak I-V, availability, pulse train and recovery, in that order."""
    return [
        activation_protocol(),
        activation_protocol(kind="iv_curve"),
        inactivation_protocol(),
        pulse_train_protocol(),
        recovery_protocol(),
    ]


def _peak_conductance(g0, ginf, tau, T, n_grid=64, n_golden=40):
    """Vectorised max over t in [0, T] of m^3 h j on closed-form trajectories.

    ``g0``, ``ginf``, ``tau`` are (3, n) arrays for m, h, j; ``T`` is (n,).
    """
    rate = _rate(tau)
    amp = g0 - ginf

    def g(t):
        with np.errstate(over="ignore"):
            m, h, j = ginf + amp * np.exp(-t[None, :] * rate)
        return m ** 3 * h * j

    def g_grid(t):
        with np.errstate(over="ignore"):
            x = ginf[:, None, :] + amp[:, None, :] * np.exp(-t[None] * rate[:, None, :])
        return x[0] ** 3 * x[1] * x[2]

    s = np.concatenate([[0.0], np.geomspace(1e-7, 1.0, n_grid)])
    t = s[:, None] * T[None, :]
    vals = g_grid(t)
    k = np.argmax(vals, axis=0)
    cols = np.arange(T.size)
    best = vals[k, cols]
    a = t[np.maximum(k - 1, 0), cols]
    b = t[np.minimum(k + 1, s.size - 1), cols]
    r = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - r * (b - a)
    d = a + r * (b - a)
    fc, fd = g(c), g(d)
    for _ in range(n_golden):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        x = np.where(left, b - r * (b - a), a + r * (b - a))
        fx = g(x)
        c, d = np.where(left, x, d), np.where(left, c, x)
        fc, fd = np.where(left, fx, fd), np.where(left, fc, fx)
    return np.maximum(best, np.maximum(fc, fd))


def _measured_segments(protocol: VoltageProtocol, params):
    """Gate state entering every measured segment, with its kinetics.

    Returns ``(g0, ginf, tau, T, slots)`` where the first four are stacked
    column-wise and ``slots[c] = (sweep, measure position)`` for column ``c``.
    """
    n_meas = len(protocol.sweeps[0].measure)
    if any(len(sw.measure) != n_meas for sw in protocol.sweeps):
        raise ValueError("all sweeps in a protocol must measure the same number of segments")
    by_shape: dict[int, list[int]] = {}
    for idx, sw in enumerate(protocol.sweeps):
        by_shape.setdefault(len(sw.segments), []).append(idx)
    cols = ([], [], [], [])
    slots = []
    for n_seg, idxs in by_shape.items():
        sweeps = [protocol.sweeps[i] for i in idxs]
        dur = np.array([[d for d, _ in sw.segments] for sw in sweeps])
        volt = np.array([[v for _, v in sw.segments] for sw in sweeps])
        (mi, hi, ji), _ = _kinetics(volt[:, 0], params)
        state = np.stack([mi, hi, ji])
        for seg in range(n_seg):
            ginf, tau = _kinetics(volt[:, seg], params)
            ginf, tau = np.stack(ginf), np.stack(tau)
            if not np.all(np.isfinite(tau)) or np.any(tau < 0):
                raise ChannelInfeasible("non-finite gate time constant")
            for col, sw in enumerate(sweeps):
                if seg in sw.measure:
                    cols[0].append(state[:, col])
                    cols[1].append(ginf[:, col])
                    cols[2].append(tau[:, col])
                    cols[3].append(dur[col, seg])
                    slots.append((idxs[col], sw.measure.index(seg)))
            state = _relax(state, ginf, tau, dur[:, seg][None, :])
    g0, ginf, tau = (np.array(c).T for c in cols[:3])
    return g0, ginf, tau, np.array(cols[3]), slots


def _peaks_for(protocols: Sequence[VoltageProtocol], params) -> list[np.ndarray]:
    """Peak conductance per (sweep, measured segment) for each protocol, in one batch."""
    parts = [_measured_segments(p, params) for p in protocols]
    g0, ginf, tau, T = (np.concatenate([p[k] for p in parts], axis=-1) for k in range(4))
    peaks = _peak_conductance(g0, ginf, tau, T) * params.g_na
    if not np.all(np.isfinite(peaks)):
        raise ChannelInfeasible("non-finite peak conductance")
    out, offset = [], 0
    for prot, part in zip(protocols, parts):
        arr = np.empty((len(prot.sweeps), len(prot.sweeps[0].measure)))
        for c, (row, pos) in enumerate(part[4]):
            arr[row, pos] = peaks[offset + c]
        offset += len(part[4])
        out.append(arr)
    return out


def summarize(protocol: VoltageProtocol, peaks: np.ndarray, params) -> SummaryCurve:
    """Reduce per-sweep peak conductances to the normalised curve for ``protocol.kind``."""
    x = np.array([sw.abscissa for sw in protocol.sweeps])
    kind = protocol.kind
    with np.errstate(all="ignore"):
        if kind == "activation":
            # m^3 kinetics: the cube root of normalised peak conductance tracks m_inf
            y = np.cbrt(peaks[:, 0] / peaks[:, 0].max())
        elif kind == "inactivation":
            y = peaks[:, 0] / peaks[:, 0].max()
        elif kind == "iv_curve":
            volt = np.array([sw.segments[sw.measure[0]][1] for sw in protocol.sweeps])
            cur = peaks[:, 0] * (volt - params.e_na)
            y = cur / np.abs(cur).max()
        elif kind == "recovery":
            y = peaks[:, 1] / peaks[:, 0]
        else:
            y = peaks[0] / peaks[0, 0]
            x = np.arange(1.0, y.size + 1.0)
    return SummaryCurve(kind, x, y)


def integrate_protocol(protocol: VoltageProtocol, params: SodiumChannelParams = ORIGINAL,
                       dt: float = 0.01) -> tuple[list[Trace], SummaryCurve]:
    """Sampled traces (one per sweep, step ``dt``) and the protocol's summary curve."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    traces = []
    for sw in protocol.sweeps:
        st = steady_state(sw.segments[0][1], params)
        g = np.array([st.m, st.h, st.j])
        ts, vs, gs = [np.array([0.0])], [np.array([sw.segments[0][1]])], [g[:, None]]
        t0 = 0.0
        for dur, volt in sw.segments:
            ginf, tau = _kinetics(volt, params)
            ginf = np.array(ginf, dtype=float)[:, None]
            tau = np.array(tau, dtype=float)[:, None]
            n = max(1, int(np.ceil(dur / dt - 1e-9)))
            tt = np.minimum(np.arange(1, n + 1) * dt, dur)
            traj = _relax(g[:, None], ginf, tau, tt[None, :])
            ts.append(t0 + tt)
            vs.append(np.full(n, volt))
            gs.append(traj)
            g = traj[:, -1]
            t0 += dur
        t = np.concatenate(ts)
        v = np.concatenate(vs)
        m, h, j = np.concatenate(gs, axis=1)
        traces.append(Trace(t, v, m, h, j, params.g_na * m ** 3 * h * j * (v - params.e_na)))
    curve = summarize(protocol, _peaks_for([protocol], params)[0], params)
    return traces, curve


def run_protocol_suite(params: SodiumChannelParams = ORIGINAL,
                       protocols: Sequence[VoltageProtocol] | None = None) -> list[SummaryCurve]:
    """Summary curves for each protocol (default: the five-protocol suite)."""
    protocols = default_protocols() if protocols is None else list(protocols)
    # protocols sharing sweeps (activation and I-V) are simulated once
    unique: dict[tuple, VoltageProtocol] = {}
    for prot in protocols:
        unique.setdefault(prot.sweeps, prot)
    keys = list(unique)
    peaks = _peaks_for(list(unique.values()), params)
    return [summarize(p, peaks[keys.index(p.sweeps)], params) for p in protocols]


def write_curves_csv(path, curves: Sequence[SummaryCurve]):
    rows = [(c.kind, float(x), float(y)) for c in curves for x, y in zip(c.abscissa, c.values)]
    return write_csv(path, ("protocol_id", "abscissa", "value"), rows)


def read_curves_csv(path) -> list[SummaryCurve]:
    header, rows = read_csv(path)
    if header != ["protocol_id", "abscissa", "value"]:
        raise ValueError(f"{path}: expected columns protocol_id,abscissa,value")
    grouped: dict[str, list[tuple[float, float]]] = {}
    for pid, x, y in rows:
        grouped.setdefault(pid, []).append((float(x), float(y)))
    return [SummaryCurve(k, np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
            for k, pts in grouped.items()]
