"""Multichannel recording container and its on-disk format.

A recording is a channels x samples matrix of microvolt values plus channel
labels, per-channel kind tags (EEG vs. reference EMG) and a sample rate.
Recordings are immutable once constructed; every operation in this package
returns a new recording.

On disk a recording is a JSON metadata document with either the sample matrix
inlined as CSV text or stored in a sidecar file of little-endian float32,
channel-major.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KIND_EEG = "EEG"
KIND_EMG_REF = "EMG_REF"
_VALID_KINDS = (KIND_EEG, KIND_EMG_REF)

FORMAT_VERSION = 1


class RecordingError(ValueError):
    """Invalid recording construction or malformed recording file."""


@dataclass(frozen=True)
class MultiChannelRecording:
    """Channels x samples waveform matrix with labels, kinds and sample rate.

    ``data`` is stored float64, read-only. Values are microvolts. EEG rows
    always come first when reference channels are present (see
    :func:`erasebss.eeg_sim.append_reference_channels`).
    """

    labels: tuple[str, ...]
    kinds: tuple[str, ...]
    sample_rate_hz: float
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise RecordingError(f"data must be 2-D (channels x samples), got ndim={arr.ndim}")
        object.__setattr__(self, "labels", tuple(str(l) for l in self.labels))
        object.__setattr__(self, "kinds", tuple(str(k) for k in self.kinds))
        if not (len(self.labels) == len(self.kinds) == arr.shape[0]):
            raise RecordingError(
                f"labels ({len(self.labels)}), kinds ({len(self.kinds)}) and data rows "
                f"({arr.shape[0]}) must agree"
            )
        if len(set(self.labels)) != len(self.labels):
            raise RecordingError("channel labels must be unique")
        for k in self.kinds:
            if k not in _VALID_KINDS:
                raise RecordingError(f"unknown channel kind {k!r}")
        if not (self.sample_rate_hz > 0):
            raise RecordingError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise RecordingError("recording data contains non-finite values")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    # -- shape helpers -------------------------------------------------

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    @property
    def n_eeg(self) -> int:
        """Number of EEG rows (t in the augmented mixing model)."""
        return sum(1 for k in self.kinds if k == KIND_EEG)

    @property
    def n_ref(self) -> int:
        """Number of reference-EMG rows (tau in the augmented mixing model)."""
        return sum(1 for k in self.kinds if k == KIND_EMG_REF)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise RecordingError(f"no channel labelled {label!r}") from None

    def channel(self, label: str) -> np.ndarray:
        """Return a writable copy of one channel's samples."""
        return self.data[self.index_of(label)].copy()

    def with_data(self, data: np.ndarray) -> "MultiChannelRecording":
        """Same labels/kinds/rate, new sample matrix."""
        return MultiChannelRecording(self.labels, self.kinds, self.sample_rate_hz, data)

    def select(self, indices) -> "MultiChannelRecording":
        """Sub-recording with the given channel rows, in the given order."""
        idx = list(indices)
        return MultiChannelRecording(
            tuple(self.labels[i] for i in idx),
            tuple(self.kinds[i] for i in idx),
            self.sample_rate_hz,
            self.data[idx],
        )

    def eeg_block(self) -> "MultiChannelRecording":
        return self.select([i for i, k in enumerate(self.kinds) if k == KIND_EEG])


# -- file format --------------------------------------------------------


def write_recording(path: str | Path, rec: MultiChannelRecording, payload: str = "raw") -> Path:
    """Write a recording to ``path`` (JSON metadata).

    payload="raw" stores samples in a sidecar ``<path>.raw`` file of
    little-endian float32, channel-major; payload="csv" inlines them as CSV
    text (one header row of labels, one row per sample).
    """
    path = Path(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "sample_rate_hz": rec.sample_rate_hz,
        "labels": list(rec.labels),
        "kinds": list(rec.kinds),
    }
    if payload == "raw":
        raw_path = path.with_name(path.name + ".raw")
        meta["payload"] = "raw"
        meta["samples"] = rec.n_samples
        meta["raw_file"] = raw_path.name
        rec.data.astype("<f4").tofile(raw_path)
    elif payload == "csv":
        buf = io.StringIO()
        buf.write(",".join(rec.labels) + "\n")
        for col in rec.data.T:
            buf.write(",".join(format(v, ".9g") for v in col) + "\n")
        meta["payload"] = "csv"
        meta["csv"] = buf.getvalue()
    else:
        raise RecordingError(f"unknown payload kind {payload!r}")
    path.write_text(json.dumps(meta, indent=1))
    return path


def read_recording(path: str | Path) -> MultiChannelRecording:
    """Read a recording written by :func:`write_recording`.

    Rejects version mismatches and payloads whose sample count disagrees
    with the metadata.
    """
    path = Path(path)
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise RecordingError(f"{path}: not a valid recording document: {e}") from e
    if meta.get("format_version") != FORMAT_VERSION:
        raise RecordingError(f"{path}: unsupported format_version {meta.get('format_version')!r}")
    labels = meta["labels"]
    kinds = meta["kinds"]
    rate = meta["sample_rate_hz"]
    n_ch = len(labels)
    payload = meta.get("payload", "csv")
    if payload == "raw":
        n_samples = int(meta["samples"])
        raw_path = path.with_name(meta["raw_file"])
        raw = np.fromfile(raw_path, dtype="<f4")
        if raw.size != n_ch * n_samples:
            raise RecordingError(
                f"{raw_path}: expected {n_ch * n_samples} float32 values, found {raw.size}"
            )
        data = raw.astype(np.float64).reshape(n_ch, n_samples)
    elif payload == "csv":
        lines = meta["csv"].strip().splitlines()
        header = lines[0].split(",")
        if header != list(labels):
            raise RecordingError(f"{path}: CSV header does not match metadata labels")
        rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
        if "samples" in meta and int(meta["samples"]) != len(rows):
            raise RecordingError(
                f"{path}: metadata declares {meta['samples']} samples, CSV holds {len(rows)}"
            )
        for r in rows:
            if len(r) != n_ch:
                raise RecordingError(f"{path}: CSV row width {len(r)} != {n_ch} channels")
        data = np.array(rows, dtype=np.float64).T.reshape(n_ch, len(rows))
    else:
        raise RecordingError(f"{path}: unknown payload kind {payload!r}")
    return MultiChannelRecording(tuple(labels), tuple(kinds), float(rate), data)
