"""Filtering, epoching, spectral band power, z-scoring and the rank-sum test.

Everything here is a pure function of its inputs; recordings are never
mutated. These are the shared building blocks for the simulators, the
artifact-removal procedure and the validation pipelines.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .recording import MultiChannelRecording


class SignalError(ValueError):
    """Invalid signal-processing request (bad band, window, schedule...)."""


@dataclass(frozen=True)
class FrequencyBand:
    """Half-open analysis band in Hz. ``high_hz`` must respect Nyquist of
    whatever recording the band is applied to."""

    low_hz: float
    high_hz: float

    def __post_init__(self):
        if self.low_hz < 0:
            raise SignalError(f"low_hz must be >= 0, got {self.low_hz}")
        if self.high_hz <= self.low_hz:
            raise SignalError(f"high_hz ({self.high_hz}) must exceed low_hz ({self.low_hz})")

    def check_against(self, sample_rate_hz: float) -> None:
        if self.high_hz > sample_rate_hz / 2:
            raise SignalError(
                f"band {self.low_hz}-{self.high_hz} Hz exceeds Nyquist "
                f"({sample_rate_hz / 2} Hz)"
            )


MU_BAND = FrequencyBand(8.0, 12.0)
HF_BAND = FrequencyBand(40.0, 100.0)


@dataclass(frozen=True)
class TrialSchedule:
    """Per-trial idle/movement windows, in seconds from recording start.

    Each entry is (idle_start_s, idle_len_s, move_start_s, move_len_s).
    Windows must be chronologically ordered and non-overlapping.
    """

    trials: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self):
        trials = tuple(tuple(float(v) for v in t) for t in self.trials)
        object.__setattr__(self, "trials", trials)
        cursor = -math.inf
        for i, (i0, il, m0, ml) in enumerate(trials):
            if il <= 0 or ml <= 0:
                raise SignalError(f"trial {i}: window lengths must be positive")
            if i0 < cursor:
                raise SignalError(f"trial {i}: idle window overlaps the previous window")
            if m0 < i0 + il:
                raise SignalError(f"trial {i}: movement window overlaps its idle window")
            cursor = m0 + ml
        object.__setattr__(self, "_end_s", cursor if trials else 0.0)

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def end_s(self) -> float:
        """End of the last scheduled window (0 for an empty schedule)."""
        return self._end_s

    @staticmethod
    def regular(n_trials: int, idle_len_s: float = 1.0, move_len_s: float = 2.0,
                gap_s: float = 0.0, start_s: float = 0.0) -> "TrialSchedule":
        """Back-to-back trials of idle+movement, optionally gapped."""
        trials = []
        t = start_s
        for _ in range(n_trials):
            trials.append((t, idle_len_s, t + idle_len_s, move_len_s))
            t += idle_len_s + move_len_s + gap_s
        return TrialSchedule(tuple(trials))


# -- filtering -----------------------------------------------------------


def _butter_sos(band: FrequencyBand, sample_rate_hz: float, order: int):
    nyq = sample_rate_hz / 2.0
    lo = band.low_hz / nyq
    hi = band.high_hz / nyq
    if band.low_hz > 0:
        return butter(order, [lo, hi], btype="bandpass", output="sos")
    return butter(order, hi, btype="lowpass", output="sos")


def _filtfilt(data: np.ndarray, band: FrequencyBand, sample_rate_hz: float,
              order: int) -> np.ndarray:
    """Zero-phase Butterworth bandpass along the last axis.

    Forward-backward application squares the magnitude response; transients
    are suppressed by reflective edge padding of 3*(order+1) samples.
    """
    band.check_against(sample_rate_hz)
    if order < 1:
        raise SignalError(f"filter order must be >= 1, got {order}")
    padlen = 3 * (order + 1)
    if data.shape[-1] < 2 * (3 * order + 1):
        raise SignalError(
            f"recording too short for edge padding: {data.shape[-1]} samples, "
            f"need >= {2 * (3 * order + 1)}"
        )
    sos = _butter_sos(band, sample_rate_hz, order)
    return sosfiltfilt(sos, data, axis=-1, padtype="even", padlen=padlen)


def bandpass_filter(rec: MultiChannelRecording, band: FrequencyBand,
                    order: int = 3) -> MultiChannelRecording:
    """Zero-phase Butterworth bandpass of every channel."""
    return rec.with_data(_filtfilt(rec.data, band, rec.sample_rate_hz, order))


def resample(rec: MultiChannelRecording, target_rate_hz: float) -> MultiChannelRecording:
    """Resample onto a new rate: anti-alias lowpass at 0.45x the lower of the
    two rates, then linear interpolation onto the target time grid."""
    if not (target_rate_hz > 0):
        raise SignalError(f"target_rate_hz must be positive, got {target_rate_hz}")
    cutoff = 0.45 * min(rec.sample_rate_hz, target_rate_hz)
    sos = butter(4, cutoff / (rec.sample_rate_hz / 2.0), btype="lowpass", output="sos")
    smoothed = sosfiltfilt(sos, rec.data, axis=-1)
    n_out = int(round(rec.n_samples * target_rate_hz / rec.sample_rate_hz))
    t_src = np.arange(rec.n_samples) / rec.sample_rate_hz
    t_out = np.arange(n_out) / target_rate_hz
    out = np.empty((rec.n_channels, n_out))
    for i in range(rec.n_channels):
        out[i] = np.interp(t_out, t_src, smoothed[i])
    return MultiChannelRecording(rec.labels, rec.kinds, target_rate_hz, out)


# -- epoching ------------------------------------------------------------


def _window_slice(start_s: float, len_s: float, sample_rate_hz: float,
                  n_samples: int) -> slice:
    a = int(round(start_s * sample_rate_hz))
    b = a + int(round(len_s * sample_rate_hz))
    if a < 0 or b > n_samples:
        raise SignalError(
            f"window {start_s}s+{len_s}s is out of bounds for {n_samples} samples"
        )
    return slice(a, b)


def extract_trials(rec: MultiChannelRecording, schedule: TrialSchedule
                   ) -> list[tuple[MultiChannelRecording, MultiChannelRecording]]:
    """Per-trial (idle, movement) segment pairs, in schedule order.

    Samples are copied out of the source recording, never aliased.
    """
    pairs = []
    for i0, il, m0, ml in schedule.trials:
        si = _window_slice(i0, il, rec.sample_rate_hz, rec.n_samples)
        sm = _window_slice(m0, ml, rec.sample_rate_hz, rec.n_samples)
        pairs.append((rec.with_data(rec.data[:, si]), rec.with_data(rec.data[:, sm])))
    return pairs


@dataclass(frozen=True)
class TrialEpochs:
    """Concatenated per-trial segments plus the index ranges of each phase.

    ``data`` holds, per trial, the idle block followed by the movement block;
    ``idle_slices``/``move_slices`` index into the concatenated sample axis.
    """

    labels: tuple[str, ...]
    kinds: tuple[str, ...]
    sample_rate_hz: float
    data: np.ndarray
    idle_slices: tuple[slice, ...]
    move_slices: tuple[slice, ...]

    @property
    def n_trials(self) -> int:
        return len(self.idle_slices)

    def with_data(self, data: np.ndarray) -> "TrialEpochs":
        if data.shape != self.data.shape:
            raise SignalError("replacement data must keep the epoch layout")
        return replace(self, data=data)


def concat_trials(rec: MultiChannelRecording, schedule: TrialSchedule) -> TrialEpochs:
    """Extract and concatenate all scheduled segments for decomposition."""
    pairs = extract_trials(rec, schedule)
    blocks, idle_slices, move_slices = [], [], []
    pos = 0
    for idle, move in pairs:
        blocks.append(idle.data)
        idle_slices.append(slice(pos, pos + idle.n_samples))
        pos += idle.n_samples
        blocks.append(move.data)
        move_slices.append(slice(pos, pos + move.n_samples))
        pos += move.n_samples
    data = np.concatenate(blocks, axis=1) if blocks else np.empty((rec.n_channels, 0))
    return TrialEpochs(rec.labels, rec.kinds, rec.sample_rate_hz,
                       data, tuple(idle_slices), tuple(move_slices))


# -- spectral band power ---------------------------------------------------


def stft_band_power(data: np.ndarray, sample_rate_hz: float, band: FrequencyBand,
                    window_s: float = 0.5, hop_s: float = 0.125) -> np.ndarray:
    """Mean over Hann-windowed STFT frames of summed spectral power in band.

    ``data`` is (channels, samples); returns one scalar per channel.
    """
    n = data.shape[-1]
    win_n = int(round(window_s * sample_rate_hz))
    hop_n = max(1, int(round(hop_s * sample_rate_hz)))
    if win_n > n:
        raise SignalError(f"STFT window of {win_n} samples exceeds segment of {n}")
    window = np.hanning(win_n)
    freqs = np.fft.rfftfreq(win_n, d=1.0 / sample_rate_hz)
    mask = (freqs >= band.low_hz) & (freqs <= band.high_hz)
    starts = range(0, n - win_n + 1, hop_n)
    acc = np.zeros(data.shape[0])
    for s in starts:
        spec = np.fft.rfft(data[:, s:s + win_n] * window, axis=-1)
        acc += np.sum(np.abs(spec[:, mask]) ** 2, axis=-1)
    return acc / len(starts)


def band_power(segment: MultiChannelRecording, band: FrequencyBand,
               window_s: float = 0.5, hop_s: float = 0.125) -> np.ndarray:
    """Per-channel band power of one segment (see :func:`stft_band_power`)."""
    band.check_against(segment.sample_rate_hz)
    return stft_band_power(segment.data, segment.sample_rate_hz, band, window_s, hop_s)


@dataclass(frozen=True)
class BandPowerSeries:
    """Per-channel, per-trial band power for one band, split by phase.

    ``idle`` and ``movement`` are (channels, trials). ``z_idle``/``z_movement``
    are filled by :func:`zscore_to_idle`; channels whose idle statistics are
    degenerate are listed in ``flagged_channels`` and carry NaN z-values.
    """

    band_name: str
    channel_labels: tuple[str, ...]
    idle: np.ndarray
    movement: np.ndarray
    z_idle: np.ndarray | None = None
    z_movement: np.ndarray | None = None
    flagged_channels: tuple[int, ...] = ()

    def __post_init__(self):
        if self.idle.shape != self.movement.shape:
            raise SignalError("idle and movement power arrays must have equal shape")
        if self.idle.shape[0] != len(self.channel_labels):
            raise SignalError("power rows must match channel labels")


def band_power_series(epochs: TrialEpochs, band: FrequencyBand, band_name: str,
                      window_s: float = 0.5, hop_s: float = 0.125) -> BandPowerSeries:
    """Band power of every trial's idle and movement phase."""
    eeg_rows = [i for i, k in enumerate(epochs.kinds) if k == "EEG"]
    labels = tuple(epochs.labels[i] for i in eeg_rows)
    idle = np.empty((len(eeg_rows), epochs.n_trials))
    move = np.empty((len(eeg_rows), epochs.n_trials))
    for t, (si, sm) in enumerate(zip(epochs.idle_slices, epochs.move_slices)):
        idle[:, t] = stft_band_power(epochs.data[eeg_rows, si], epochs.sample_rate_hz,
                                     band, window_s, hop_s)
        move[:, t] = stft_band_power(epochs.data[eeg_rows, sm], epochs.sample_rate_hz,
                                     band, window_s, hop_s)
    return BandPowerSeries(band_name, labels, idle, move)


def zscore_to_idle(powers: BandPowerSeries) -> BandPowerSeries:
    """Z-score both phases against per-channel idle statistics.

    By construction the idle-phase z-values of each clean channel have mean 0
    and (sample) standard deviation 1. Channels with zero idle variance are
    flagged and their z-values set to NaN.
    """
    if powers.idle.shape[1] < 2:
        raise SignalError("z-scoring needs at least 2 idle trials per channel")
    mean = powers.idle.mean(axis=1, keepdims=True)
    sd = powers.idle.std(axis=1, ddof=1, keepdims=True)
    flagged = np.flatnonzero(sd[:, 0] == 0)
    safe_sd = np.where(sd == 0, np.nan, sd)
    z_idle = (powers.idle - mean) / safe_sd
    z_move = (powers.movement - mean) / safe_sd
    return replace(powers, z_idle=z_idle, z_movement=z_move,
                   flagged_channels=tuple(int(i) for i in flagged))


# -- rank-sum test ---------------------------------------------------------


def _midranks(pooled: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based); ties share the mean of their rank run."""
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(len(pooled))
    i = 0
    n = len(pooled)
    sv = pooled[order]
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    return ranks


EXACT_ENUMERATION_LIMIT = 12


def wilcoxon_rank_sum(a, b) -> tuple[float, float]:
    """Two-sided Wilcoxon rank-sum test.

    Returns (rank sum of ``a``, two-sided p-value). The null distribution is
    enumerated exactly when len(a)+len(b) <= 12; larger samples use the
    normal approximation with tie and continuity corrections.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise SignalError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    w = float(ranks[:n].sum())
    total = n + m

    if np.all(pooled == pooled[0]):
        return w, 1.0

    if total <= EXACT_ENUMERATION_LIMIT:
        n_le = n_ge = 0
        n_total = 0
        for comb in itertools.combinations(range(total), n):
            ws = ranks[list(comb)].sum()
            n_total += 1
            if ws <= w + 1e-12:
                n_le += 1
            if ws >= w - 1e-12:
                n_ge += 1
        p = min(1.0, 2.0 * min(n_le, n_ge) / n_total)
        return w, p

    mean_w = n * (total + 1) / 2.0
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts.astype(np.float64) ** 3 - counts))
    var_w = n * m / 12.0 * ((total + 1) - tie_term / (total * (total - 1)))
    if var_w <= 0:
        return w, 1.0
    diff = w - mean_w
    cc = 0.5 if diff > 0 else (-0.5 if diff < 0 else 0.0)
    z = (diff - cc) / math.sqrt(var_w)
    p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return w, p
