import numpy as np
import pytest

from erasebss.recording import (
    KIND_EEG,
    KIND_EMG_REF,
    MultiChannelRecording,
    RecordingError,
    read_recording,
    write_recording,
)


def make_rec(n_ch=3, n_samples=50, rate=100.0, kinds=None, seed=0):
    rng = np.random.default_rng(seed)
    labels = tuple(f"ch{i}" for i in range(n_ch))
    kinds = kinds or (KIND_EEG,) * n_ch
    return MultiChannelRecording(labels, kinds, rate, rng.standard_normal((n_ch, n_samples)))


def test_valid_construction_and_shape():
    rec = make_rec()
    assert rec.n_channels == 3
    assert rec.n_samples == 50
    assert rec.duration_s == pytest.approx(0.5)
    assert rec.n_eeg == 3 and rec.n_ref == 0


def test_data_is_immutable():
    rec = make_rec()
    with pytest.raises(ValueError):
        rec.data[0, 0] = 1.0


@pytest.mark.parametrize("bad", [
    dict(labels=("a", "b"), kinds=(KIND_EEG,) * 3),           # label/row mismatch
    dict(labels=("a", "a", "b")),                             # duplicate labels
    dict(kinds=("EEG", "EEG", "bogus")),                      # unknown kind
    dict(rate=0.0),                                           # bad rate
])
def test_rejects_invalid_metadata(bad):
    rng = np.random.default_rng(0)
    kwargs = dict(labels=("a", "b", "c"), kinds=(KIND_EEG,) * 3, rate=10.0,
                  data=rng.standard_normal((3, 20)))
    kwargs.update(bad)
    with pytest.raises(RecordingError):
        MultiChannelRecording(kwargs["labels"], kwargs["kinds"], kwargs["rate"], kwargs["data"])


def test_rejects_non_finite_values():
    data = np.zeros((2, 10))
    data[1, 3] = np.nan
    with pytest.raises(RecordingError):
        MultiChannelRecording(("a", "b"), (KIND_EEG, KIND_EEG), 10.0, data)


def test_channel_lookup_and_select():
    rec = make_rec()
    np.testing.assert_array_equal(rec.channel("ch1"), rec.data[1])
    sub = rec.select([2, 0])
    assert sub.labels == ("ch2", "ch0")
    np.testing.assert_array_equal(sub.data[0], rec.data[2])
    with pytest.raises(RecordingError):
        rec.index_of("nope")


@pytest.mark.parametrize("payload", ["raw", "csv"])
def test_roundtrip(tmp_path, payload):
    rec = make_rec(n_ch=4, n_samples=37, rate=256.0,
                   kinds=(KIND_EEG, KIND_EEG, KIND_EEG, KIND_EMG_REF))
    path = write_recording(tmp_path / "rec.json", rec, payload=payload)
    back = read_recording(path)
    assert back.labels == rec.labels
    assert back.kinds == rec.kinds
    assert back.sample_rate_hz == rec.sample_rate_hz
    # raw payload is float32 on disk, csv keeps 9 significant digits
    np.testing.assert_allclose(back.data, rec.data, rtol=1e-6, atol=1e-7)


def test_reader_rejects_mismatched_sample_count(tmp_path):
    rec = make_rec(n_ch=2, n_samples=30)
    path = write_recording(tmp_path / "rec.json", rec, payload="raw")
    raw_path = tmp_path / "rec.json.raw"
    raw_path.write_bytes(raw_path.read_bytes()[:-8])  # truncate two float32 values
    with pytest.raises(RecordingError, match="expected"):
        read_recording(path)


def test_reader_rejects_bad_version(tmp_path):
    rec = make_rec()
    path = write_recording(tmp_path / "rec.json", rec, payload="csv")
    text = path.read_text().replace('"format_version": 1', '"format_version": 99')
    path.write_text(text)
    with pytest.raises(RecordingError, match="format_version"):
        read_recording(path)
