"""Biophysical surface-EMG generator.

Chain: Hodgkin-Huxley membrane model -> extracellular current waveform ->
single-fiber action potential via a line-source volume-conduction integral ->
motor-unit action potential as the average of many jittered fibers ->
Poisson-timed superposition with phase-dependent firing rates -> per-muscle
spectral shaping -> multichannel head-muscle montage.

All generators are pure functions of (inputs, seed).
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .recording import KIND_EMG_REF, MultiChannelRecording
from .signal_core import FrequencyBand, TrialSchedule, _filtfilt, _window_slice

# classic squid-axon membrane constants
C_M = 1.0          # uF/cm^2
G_NA, G_K, G_L = 120.0, 36.0, 0.3       # mS/cm^2
E_NA, E_K, E_L = 50.0, -77.0, -54.387   # mV
V_REST = -65.0

# fiber geometry defaults; scale calibrated so the default 100-fiber motor
# unit potential peaks near 50 uV
DEFAULT_SCALE_K = 91.0

VOLTAGE_BLOWUP_MV = 200.0


class SimulationError(RuntimeError):
    """Numerical failure or invalid request inside the EMG generator."""


@dataclass(frozen=True)
class SampledWaveform:
    """Uniformly sampled waveform with an explicit sample period (ms)."""

    values: np.ndarray
    dt_ms: float
    meta: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", arr)

    @property
    def duration_ms(self) -> float:
        return len(self.values) * self.dt_ms

    def time_ms(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt_ms


@dataclass(frozen=True)
class StimulusPulse:
    onset_ms: float = 1.0
    duration_ms: float = 1.0
    amplitude_ua_cm2: float = 10.0


@dataclass(frozen=True)
class HHResult:
    membrane_mv: np.ndarray
    ionic_current: SampledWaveform  # total transmembrane ionic current, uA/cm^2


def _vtrap(x: float, scale: float) -> float:
    """x / (1 - exp(-x/scale)) with its analytic limit at x = 0."""
    if abs(x) < 1e-7:
        return scale
    return x / (1.0 - math.exp(-x / scale))


def hh_extracellular_current(duration_ms: float = 20.0, dt_ms: float = 0.01,
                             stim: StimulusPulse = StimulusPulse()) -> HHResult:
    """Forward-Euler integration of the four-state membrane model.

    Returns the membrane voltage trace and the total ionic current (sodium +
    potassium + leak; the capacitive term is excluded). The ionic current is
    the source waveform e(.) used downstream after the time-to-space mapping
    z = v*t at the fiber conduction velocity.
    """
    if dt_ms > 0.025:
        raise SimulationError(f"dt_ms must be <= 0.025 ms for stability, got {dt_ms}")
    if duration_ms < 15.0:
        raise SimulationError(f"duration_ms must cover the action potential (>= 15), got {duration_ms}")
    n = int(round(duration_ms / dt_ms))
    v = V_REST
    # gating steady state at rest
    am, bm = 0.1 * _vtrap(v + 40.0, 10.0), 4.0 * math.exp(-(v + 65.0) / 18.0)
    ah, bh = 0.07 * math.exp(-(v + 65.0) / 20.0), 1.0 / (1.0 + math.exp(-(v + 35.0) / 10.0))
    an, bn = 0.01 * _vtrap(v + 55.0, 10.0), 0.125 * math.exp(-(v + 65.0) / 80.0)
    m, h, nn = am / (am + bm), ah / (ah + bh), an / (an + bn)

    voltage = np.empty(n)
    current = np.empty(n)
    for i in range(n):
        t = i * dt_ms
        i_na = G_NA * m**3 * h * (v - E_NA)
        i_k = G_K * nn**4 * (v - E_K)
        i_l = G_L * (v - E_L)
        i_ion = i_na + i_k + i_l
        voltage[i] = v
        current[i] = i_ion
        i_stim = stim.amplitude_ua_cm2 if stim.onset_ms <= t < stim.onset_ms + stim.duration_ms else 0.0
        am, bm = 0.1 * _vtrap(v + 40.0, 10.0), 4.0 * math.exp(-(v + 65.0) / 18.0)
        ah, bh = 0.07 * math.exp(-(v + 65.0) / 20.0), 1.0 / (1.0 + math.exp(-(v + 35.0) / 10.0))
        an, bn = 0.01 * _vtrap(v + 55.0, 10.0), 0.125 * math.exp(-(v + 65.0) / 80.0)
        v = v + dt_ms * (i_stim - i_ion) / C_M
        m = m + dt_ms * (am * (1.0 - m) - bm * m)
        h = h + dt_ms * (ah * (1.0 - h) - bh * h)
        nn = nn + dt_ms * (an * (1.0 - nn) - bn * nn)
        if abs(v) > VOLTAGE_BLOWUP_MV:
            raise SimulationError(
                f"membrane integration blew up (|V| > {VOLTAGE_BLOWUP_MV} mV) at t={t:.3f} ms"
            )
    return HHResult(voltage, SampledWaveform(current, dt_ms))


@functools.lru_cache(maxsize=4)
def default_ionic_current(dt_ms: float = 0.01) -> SampledWaveform:
    """Cached ionic-current waveform for the default suprathreshold pulse."""
    return hh_extracellular_current(dt_ms=dt_ms).ionic_current


def current_to_spatial_profile(current: SampledWaveform, velocity_m_s: float,
                               spatial_step_mm: float) -> np.ndarray:
    """Map the temporal source waveform onto a spatial grid via z = v*t.

    1 m/s equals 1 mm/ms, so sample k (at z = k*step) takes the current value
    at t = z / v.
    """
    if velocity_m_s <= 0:
        raise SimulationError(f"conduction velocity must be positive, got {velocity_m_s}")
    extent_mm = current.duration_ms * velocity_m_s
    n = int(math.ceil(extent_mm / spatial_step_mm))
    z = np.arange(n) * spatial_step_mm
    t_src = current.time_ms()
    return np.interp(z / velocity_m_s, t_src, current.values, left=current.values[0], right=0.0)


@dataclass(frozen=True)
class FiberParams:
    """Geometry and observation setup for one muscle fiber."""

    fiber_length_mm: float = 120.0
    endplate_mean_mm: float = 60.0
    endplate_sd_mm: float = 2.5
    velocity_mean_m_s: float = 4.0
    velocity_sd: float = 0.125
    observation_axial_mm: float = 60.0
    observation_radial_mm: float = 10.0
    spatial_step_mm: float = 0.5
    scale_k: float = DEFAULT_SCALE_K

    def __post_init__(self):
        for name in ("fiber_length_mm", "spatial_step_mm", "velocity_mean_m_s"):
            if getattr(self, name) <= 0:
                raise SimulationError(f"{name} must be positive")
        if self.endplate_sd_mm < 0 or self.velocity_sd < 0:
            raise SimulationError("standard deviations must be non-negative")
        if not self.velocity_mean_m_s > 3.0 * self.velocity_sd:
            raise SimulationError("velocity_mean_m_s must exceed 3x velocity_sd")
        n_seg = self.fiber_length_mm / self.spatial_step_mm
        if abs(n_seg - round(n_seg)) > 1e-9:
            raise SimulationError("spatial_step_mm must divide fiber_length_mm")
        if not (0.0 <= self.endplate_mean_mm <= self.fiber_length_mm):
            raise SimulationError("endplate position must lie on the fiber")


def sfap(fp: FiberParams, e_z: np.ndarray) -> SampledWaveform:
    """Single-fiber action potential at the observation point.

    Discretizes the line-source volume-conduction integral: first-derivative
    surface terms at the two fiber ends (far-end term subtracted) plus the
    second-derivative term integrated along the fiber, each weighted by the
    reciprocal distance to the observation point; scaled by ``scale_k``.
    The source profile travels outward from the endplate in both directions
    at the fiber velocity, so the output sample period is step / velocity.
    """
    e_z = np.asarray(e_z, dtype=np.float64)
    dz = fp.spatial_step_mm
    v = fp.velocity_mean_m_s
    n_z = int(round(fp.fiber_length_mm / dz)) + 1
    z = np.arange(n_z) * dz
    r = np.hypot(z - fp.observation_axial_mm, fp.observation_radial_mm)
    if np.any(r == 0):
        raise SimulationError("observation point lies on the fiber axis (r = 0)")
    shift = np.abs(z - fp.endplate_mean_mm) / dz  # fractional grid shifts
    m = len(e_z)
    n_t = int(math.ceil(shift.max())) + m + 1
    idx = np.arange(n_t)[None, :] - shift[:, None]
    src_x = np.arange(m, dtype=np.float64)
    phi = np.interp(idx.ravel(), src_x, e_z, left=0.0, right=0.0).reshape(n_z, n_t)

    d1 = np.gradient(phi, dz, axis=0)
    d2 = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / dz**2
    volume = dz * np.sum(d2 / r[1:-1, None], axis=0)
    wave = fp.scale_k * (d1[0] / r[0] - d1[-1] / r[-1] + volume)
    return SampledWaveform(wave, dz / v)


def muap(fp: FiberParams, n_fibers: int = 100, rng_seed=0,
         current: SampledWaveform | None = None) -> SampledWaveform:
    """Motor-unit action potential: average of ``n_fibers`` single-fiber
    potentials with Gaussian endplate offsets and conduction velocities.

    Deterministic for a fixed seed. Non-positive velocity draws are redrawn;
    the count is recorded in ``meta['velocity_redraws']``.
    """
    if n_fibers < 1:
        raise SimulationError(f"n_fibers must be >= 1, got {n_fibers}")
    if current is None:
        current = default_ionic_current()
    rng = np.random.default_rng(rng_seed)
    dt_out = fp.spatial_step_mm / fp.velocity_mean_m_s
    waves = []
    redraws = 0
    for _ in range(n_fibers):
        endplate = fp.endplate_mean_mm + fp.endplate_sd_mm * rng.standard_normal()
        endplate = min(max(endplate, 0.0), fp.fiber_length_mm)
        velocity = fp.velocity_mean_m_s + fp.velocity_sd * rng.standard_normal()
        while velocity <= 0:
            redraws += 1
            velocity = fp.velocity_mean_m_s + fp.velocity_sd * rng.standard_normal()
        fiber = replace(fp, endplate_mean_mm=endplate, velocity_mean_m_s=velocity)
        waves.append(sfap(fiber, current_to_spatial_profile(current, velocity,
                                                            fp.spatial_step_mm)))
    n_out = max(int(math.ceil(w.duration_ms / dt_out)) for w in waves)
    t_out = np.arange(n_out) * dt_out
    acc = np.zeros(n_out)
    for w in waves:
        acc += np.interp(t_out, w.time_ms(), w.values, left=0.0, right=0.0)
    acc /= n_fibers
    return SampledWaveform(acc, dt_out, meta={"velocity_redraws": redraws})


@dataclass(frozen=True)
class SpikeTrain:
    """Strictly increasing firing times (seconds) within [0, duration)."""

    times: np.ndarray
    duration_s: float

    def __post_init__(self):
        arr = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", arr)
        if arr.size:
            if np.any(np.diff(arr) <= 0):
                raise SimulationError("spike times must be strictly increasing")
            if arr[0] < 0 or arr[-1] >= self.duration_s:
                raise SimulationError("spike times must lie within [0, duration)")

    def __len__(self) -> int:
        return len(self.times)


def poisson_spike_train(rate_hz: float, duration_s: float, rng_seed=0) -> SpikeTrain:
    """Homogeneous Poisson firing times via exponential inter-arrival sampling."""
    if rate_hz < 0:
        raise SimulationError(f"rate_hz must be >= 0, got {rate_hz}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    times = []
    if rate_hz > 0:
        t = rng.exponential(1.0 / rate_hz)
        while t < duration_s:
            times.append(t)
            t += rng.exponential(1.0 / rate_hz)
    return SpikeTrain(np.array(times), duration_s)


@dataclass(frozen=True)
class MuscleSpec:
    """One head/neck muscle: spectral band, scalp-map position and firing
    behaviour per phase."""

    name: str
    band: FrequencyBand
    topo_position: tuple[float, float]
    rate_idle_hz: float = 8.0
    rate_move_hz: float = 20.0
    amplitude_uv_rms: float = 30.0

    def __post_init__(self):
        if not (self.rate_move_hz >= self.rate_idle_hz > 0):
            raise SimulationError(
                f"{self.name}: need rate_move_hz >= rate_idle_hz > 0, "
                f"got {self.rate_move_hz} / {self.rate_idle_hz}"
            )
        if self.amplitude_uv_rms <= 0:
            raise SimulationError(f"{self.name}: amplitude_uv_rms must be positive")


_MUSCLE_BANDS_HZ = {
    "frontalis": (20.0, 150.0),
    "temporalis": (20.0, 300.0),
    "masseter": (20.0, 300.0),
    "trapezius": (20.0, 250.0),
    "eye_blink": (1.0, 10.0),
}
_MUSCLE_POSITIONS = {
    "frontalis": (0.35, 0.95),
    "temporalis": (0.85, 0.30),
    "masseter": (0.95, -0.25),
    "trapezius": (0.55, -0.95),
    "eye_blink": (0.0, 1.00),
}


def _make_spec(muscle: str, side: str | None, sample_rate_hz: float, **kw) -> MuscleSpec:
    low, high = _MUSCLE_BANDS_HZ[muscle]
    high = min(high, 0.45 * sample_rate_hz)
    x, y = _MUSCLE_POSITIONS[muscle]
    if side == "left":
        name, pos = f"{muscle}_l", (-x, y)
    elif side == "right":
        name, pos = f"{muscle}_r", (x, y)
    else:
        name, pos = muscle, (x, y)
    return MuscleSpec(name=name, band=FrequencyBand(low, high), topo_position=pos, **kw)


def default_muscle_specs(sample_rate_hz: float = 2000.0, **kw) -> tuple[MuscleSpec, ...]:
    """The eight-muscle head montage: bilateral frontalis, temporalis,
    masseter and trapezius."""
    return tuple(
        _make_spec(muscle, side, sample_rate_hz, **kw)
        for muscle in ("frontalis", "temporalis", "masseter", "trapezius")
        for side in ("left", "right")
    )


def scenario_muscle_types(sample_rate_hz: float = 2000.0, count: int = 5,
                          **kw) -> tuple[MuscleSpec, ...]:
    """Single-muscle EMG types in the order used by the simulation scenarios:
    frontalis, temporalis, masseter, trapezius, eye blink."""
    order = ("frontalis", "temporalis", "masseter", "trapezius", "eye_blink")
    if not (1 <= count <= len(order)):
        raise SimulationError(f"count must be in 1..{len(order)}, got {count}")
    return tuple(_make_spec(m, None, sample_rate_hz, **kw) for m in order[:count])


def muscle_specs_from_json(text: str, sample_rate_hz: float) -> tuple[MuscleSpec, ...]:
    """Load muscle specs from a JSON document: a list of objects with keys
    name, band_hz [low, high], topo_position [x, y], rate_idle_hz,
    rate_move_hz, amplitude_uv_rms."""
    doc = json.loads(text)
    specs = []
    for entry in doc:
        low, high = entry["band_hz"]
        specs.append(MuscleSpec(
            name=entry["name"],
            band=FrequencyBand(float(low), min(float(high), 0.45 * sample_rate_hz)),
            topo_position=tuple(entry.get("topo_position", (0.0, 0.0))),
            rate_idle_hz=float(entry.get("rate_idle_hz", 8.0)),
            rate_move_hz=float(entry.get("rate_move_hz", 20.0)),
            amplitude_uv_rms=float(entry.get("amplitude_uv_rms", 30.0)),
        ))
    return tuple(specs)


def _resample_kernel(wave: SampledWaveform, sample_rate_hz: float) -> np.ndarray:
    n = int(math.ceil(wave.duration_ms / 1000.0 * sample_rate_hz))
    t_ms = np.arange(n) / sample_rate_hz * 1000.0
    return np.interp(t_ms, wave.time_ms(), wave.values, left=0.0, right=0.0)


def simulate_muscle_emg(spec: MuscleSpec, schedule: TrialSchedule,
                        muap_wave: SampledWaveform, sample_rate_hz: float,
                        rng_seed=0) -> np.ndarray:
    """One muscle's surface EMG over the scheduled session.

    A fresh Poisson train is launched per scheduled window (idle rate in idle
    windows, movement rate in movement windows); the motor-unit potential is
    superposed at each firing time, the sum is bandpass-shaped by the
    muscle's spectral band and rescaled so movement-phase RMS equals
    ``spec.amplitude_uv_rms``.
    """
    n = int(round(schedule.end_s * sample_rate_hz))
    if n == 0:
        return np.zeros(0)
    spec.band.check_against(sample_rate_hz)
    kernel = _resample_kernel(muap_wave, sample_rate_hz)
    if len(kernel) >= n:
        raise SimulationError("motor-unit potential is longer than the recording")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    sig = np.zeros(n + len(kernel))
    for i0, il, m0, ml in schedule.trials:
        for start, length, rate in ((i0, il, spec.rate_idle_hz), (m0, ml, spec.rate_move_hz)):
            train = poisson_spike_train(rate, length, rng)
            for t in train.times:
                at = int(round((start + t) * sample_rate_hz))
                sig[at:at + len(kernel)] += kernel
    sig = sig[:n]
    sig = _filtfilt(sig[None, :], spec.band, sample_rate_hz, order=3)[0]
    move_idx = np.concatenate([
        np.arange(n)[_window_slice(m0, ml, sample_rate_hz, n)]
        for _, _, m0, ml in schedule.trials
    ])
    rms = float(np.sqrt(np.mean(sig[move_idx] ** 2)))
    if rms == 0:
        raise SimulationError(
            f"{spec.name}: cannot rescale an all-zero waveform to a target RMS"
        )
    return sig * (spec.amplitude_uv_rms / rms)


def simulate_head_emg_set(specs, schedule: TrialSchedule, sample_rate_hz: float,
                          rng_seed=0, fiber_params: FiberParams = FiberParams(),
                          n_fibers: int = 100,
                          muap_bank: dict | None = None) -> MultiChannelRecording:
    """Multichannel reference-EMG recording, one channel per muscle.

    Each muscle draws from an independent seeded substream, so channel
    results do not depend on generation order. ``muap_bank`` (name ->
    SampledWaveform) short-circuits the per-muscle motor-unit computation.
    """
    specs = tuple(specs)
    if not specs:
        raise SimulationError("need at least one muscle spec")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise SimulationError(f"duplicate muscle names: {names}")
    if not isinstance(rng_seed, np.random.SeedSequence):
        rng_seed = np.random.SeedSequence(rng_seed)
    streams = rng_seed.spawn(len(specs))
    channels = []
    for spec, stream in zip(specs, streams):
        muap_seq, fire_seq = stream.spawn(2)
        if muap_bank is not None and spec.name in muap_bank:
            wave = muap_bank[spec.name]
        else:
            wave = muap(fiber_params, n_fibers=n_fibers, rng_seed=muap_seq)
        channels.append(simulate_muscle_emg(spec, schedule, wave, sample_rate_hz,
                                            np.random.default_rng(fire_seq)))
    return MultiChannelRecording(tuple(names), (KIND_EMG_REF,) * len(specs),
                                 sample_rate_hz, np.vstack(channels))
