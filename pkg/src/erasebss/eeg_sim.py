"""Simulated EEG generation, controlled EMG contamination, and
reference-channel augmentation.

Simulated EEG is a per-channel sum of five band-limited Gaussian noises,
spatially smoothed across the (circular) channel axis, globally rescaled to a
60 uV maximum. Contamination adds weighted EMG to chosen channels and is
tracked by an explicit ground-truth object so metrics can be recomputed
offline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .recording import KIND_EEG, KIND_EMG_REF, MultiChannelRecording, RecordingError

NOISE_BANDS_HZ = ((1.0, 30.0), (20.0, 40.0), (40.0, 80.0), (80.0, 100.0), (100.0, 200.0))
SMOOTHING_SD_CHANNELS = 4.0
SMOOTHING_HALF_WIDTH = 8  # 2 sigma; truncation keeps the channel covariance full rank
MAX_AMPLITUDE_UV = 60.0


class SimulationError(ValueError):
    """Invalid simulation request."""


def spatial_smoothing_kernel(n_channels: int) -> np.ndarray:
    """Circular Gaussian smoothing kernel over the channel axis (sums to 1)."""
    offsets = np.arange(-SMOOTHING_HALF_WIDTH, SMOOTHING_HALF_WIDTH + 1)
    weights = np.exp(-offsets**2 / (2.0 * SMOOTHING_SD_CHANNELS**2))
    weights /= weights.sum()
    kernel = np.zeros(n_channels)
    for d, w in zip(offsets, weights):
        kernel[d % n_channels] += w
    return kernel


def _smooth_channels(data: np.ndarray) -> np.ndarray:
    """Circular convolution across the channel axis with the Gaussian kernel."""
    offsets = np.arange(-SMOOTHING_HALF_WIDTH, SMOOTHING_HALF_WIDTH + 1)
    weights = np.exp(-offsets**2 / (2.0 * SMOOTHING_SD_CHANNELS**2))
    weights /= weights.sum()
    out = np.zeros_like(data)
    for d, w in zip(offsets, weights):
        out += w * np.roll(data, d, axis=0)
    return out


def default_channel_labels(n_channels: int) -> tuple[str, ...]:
    return tuple(f"ch{i + 1:02d}" for i in range(n_channels))


def simulate_eeg(n_channels: int = 32, duration_s: float = 300.0,
                 sample_rate_hz: float = 2000.0, rng_seed=0,
                 labels: tuple[str, ...] | None = None) -> MultiChannelRecording:
    """Simulated multichannel EEG.

    Each channel sums five independent Gaussian noises bandpassed at 1-30,
    20-40, 40-80, 80-100 and 100-200 Hz (upper edges capped at 0.45x the
    sample rate), then a circular spatial smoothing (Gaussian, SD = 4
    channels) correlates neighbouring channels, with wrap-around so the last
    channels correlate with the first. The result is rescaled globally so the
    maximum absolute amplitude is 60 uV; per-channel variance is whatever
    that rescaling yields and is not forced.
    """
    if n_channels < 8:
        raise SimulationError(f"need >= 8 channels, got {n_channels}")
    if duration_s <= 0:
        raise SimulationError(f"duration_s must be positive, got {duration_s}")
    if sample_rate_hz < 400.0:
        raise SimulationError(
            f"sample rate {sample_rate_hz} Hz cannot host the 100-200 Hz noise band"
        )
    rng = np.random.default_rng(rng_seed)
    n = int(round(duration_s * sample_rate_hz))
    cap = 0.45 * sample_rate_hz
    nyq = sample_rate_hz / 2.0
    data = np.zeros((n_channels, n))
    for low, high in NOISE_BANDS_HZ:
        high = min(high, cap)
        sos = butter(4, [low / nyq, high / nyq], btype="bandpass", output="sos")
        data += sosfiltfilt(sos, rng.standard_normal((n_channels, n)), axis=-1)
    data = _smooth_channels(data)
    peak = np.max(np.abs(data))
    if peak == 0:
        raise SimulationError("degenerate all-zero noise draw")
    data *= MAX_AMPLITUDE_UV / peak
    if labels is None:
        labels = default_channel_labels(n_channels)
    return MultiChannelRecording(labels, (KIND_EEG,) * n_channels, sample_rate_hz, data)


def draw_contamination_weights(n: int, rng_seed=0) -> np.ndarray:
    """n standard-normal draws, L1-normalized: sum(|w|) == 1.

    ``rng_seed`` may be an int seed or a numpy Generator.
    """
    if n < 1:
        raise SimulationError(f"need n >= 1 weights, got {n}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    while True:
        w = rng.standard_normal(n)
        norm = np.sum(np.abs(w))
        if norm > 0:
            return w / norm


@dataclass(frozen=True)
class ContaminationAssignment:
    emg_label: str
    channel_indices: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "channel_indices", tuple(int(i) for i in self.channel_indices))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.channel_indices) != len(self.weights):
            raise SimulationError("one weight per contaminated channel required")
        if not all(np.isfinite(self.weights)):
            raise SimulationError("contamination weights must be finite")


@dataclass(frozen=True)
class ContaminationGroundTruth:
    """Which EEG channels were contaminated by which EMG source, with which
    weights. One EEG channel carries at most one EMG type."""

    assignments: tuple[ContaminationAssignment, ...]
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(self.assignments))
        seen: set[int] = set()
        for a in self.assignments:
            dup = seen.intersection(a.channel_indices)
            if dup or len(set(a.channel_indices)) != len(a.channel_indices):
                raise SimulationError(
                    f"channel indices reused across assignments: {sorted(dup) or a.channel_indices}"
                )
            seen.update(a.channel_indices)

    @property
    def contaminated_indices(self) -> tuple[int, ...]:
        out: list[int] = []
        for a in self.assignments:
            out.extend(a.channel_indices)
        return tuple(out)

    def to_json(self) -> str:
        return json.dumps({
            "rng_seed": self.rng_seed,
            "assignments": [
                {"emg_label": a.emg_label,
                 "channel_indices": list(a.channel_indices),
                 "weights": list(a.weights)}
                for a in self.assignments
            ],
        }, indent=1)

    @staticmethod
    def from_json(text: str) -> "ContaminationGroundTruth":
        doc = json.loads(text)
        return ContaminationGroundTruth(
            tuple(ContaminationAssignment(a["emg_label"], tuple(a["channel_indices"]),
                                          tuple(a["weights"]))
                  for a in doc["assignments"]),
            rng_seed=doc.get("rng_seed", 0),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path


def contaminate(eeg: MultiChannelRecording, emg: MultiChannelRecording,
                plan: ContaminationGroundTruth) -> MultiChannelRecording:
    """Add weight x EMG channel to each assigned EEG channel.

    Channels not named in the plan are bit-identical to the input.
    """
    if emg.sample_rate_hz != eeg.sample_rate_hz:
        raise SimulationError(
            f"sample rates differ: EEG {eeg.sample_rate_hz} vs EMG {emg.sample_rate_hz}"
        )
    if emg.n_samples != eeg.n_samples:
        raise SimulationError(
            f"lengths differ: EEG {eeg.n_samples} vs EMG {emg.n_samples} samples"
        )
    data = eeg.data.copy()
    for a in plan.assignments:
        source = emg.data[emg.index_of(a.emg_label)]
        for idx, w in zip(a.channel_indices, a.weights):
            if not (0 <= idx < eeg.n_channels):
                raise SimulationError(f"contaminated channel index {idx} out of range")
            data[idx] = data[idx] + w * source
    return eeg.with_data(data)


def append_reference_channels(eeg: MultiChannelRecording,
                              refs: MultiChannelRecording) -> MultiChannelRecording:
    """Stack EEG rows above reference-EMG rows, preserving both blocks."""
    if refs.n_channels == 0:
        return eeg
    if refs.sample_rate_hz != eeg.sample_rate_hz:
        raise RecordingError("EEG and reference sample rates differ")
    if refs.n_samples != eeg.n_samples:
        raise RecordingError("EEG and reference lengths differ")
    if any(k != KIND_EMG_REF for k in refs.kinds):
        raise RecordingError("all appended channels must be EMG_REF")
    collision = set(eeg.labels).intersection(refs.labels)
    if collision:
        raise RecordingError(f"label collision between EEG and references: {sorted(collision)}")
    return MultiChannelRecording(
        eeg.labels + refs.labels,
        eeg.kinds + refs.kinds,
        eeg.sample_rate_hz,
        np.vstack([eeg.data, refs.data]),
    )
