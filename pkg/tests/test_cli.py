import json

import numpy as np
import pytest

from erasebss.cli import main
from erasebss.recording import KIND_EMG_REF, MultiChannelRecording, read_recording, write_recording


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """simulate-eeg + simulate-emg with matching durations."""
    root = tmp_path_factory.mktemp("cli")
    assert run("simulate-emg", "--types", 2, "--trials", 3, "--rate", 500,
               "--seed", 2, "--out", root) == 0
    emg = read_recording(root / "emg.json")
    assert run("simulate-eeg", "--channels", 8, "--duration", emg.duration_s,
               "--rate", 500, "--seed", 1, "--out", root) == 0
    return root


def test_simulate_outputs_readable(workspace):
    eeg = read_recording(workspace / "eeg.json")
    emg = read_recording(workspace / "emg.json")
    assert eeg.n_channels == 8
    assert emg.n_channels == 2
    assert eeg.n_samples == emg.n_samples


def test_contaminate_and_erase_chain(workspace):
    assert run("contaminate", "--eeg", workspace / "eeg.json",
               "--emg", workspace / "emg.json", "--per-type", 2,
               "--seed", 3, "--out", workspace) == 0
    truth = json.loads((workspace / "ground_truth.json").read_text())
    assert len(truth["assignments"]) == 2
    assert run("erase", "--eeg", workspace / "contaminated.json",
               "--refs", workspace / "emg.json", "--ground-truth-mode",
               "--seed", 4, "--out", workspace / "erase") == 0
    cleaned = read_recording(workspace / "erase" / "cleaned.json")
    dirty = read_recording(workspace / "contaminated.json")
    assert cleaned.labels == dirty.labels
    report = json.loads((workspace / "erase" / "rejection_report.json").read_text())
    assert report["artifact_ics"]


def test_ica_baseline_command(workspace, tmp_path):
    hat = tmp_path / "hat.json"
    hat.write_text(json.dumps(["ch01", "ch02"]))
    assert run("ica-baseline", "--eeg", workspace / "eeg.json",
               "--hat-band", hat, "--seed", 5, "--out", tmp_path / "base") == 0
    assert (tmp_path / "base" / "rejection_report.json").exists()


def test_validation_error_exits_1(workspace, tmp_path):
    assert run("simulate-eeg", "--channels", 8, "--duration", 2, "--rate", 500,
               "--seed", 9, "--out", tmp_path) == 0
    code = run("contaminate", "--eeg", tmp_path / "eeg.json",
               "--emg", workspace / "emg.json", "--out", tmp_path)
    assert code == 1


def test_numerical_failure_exits_2(workspace, tmp_path):
    eeg = read_recording(workspace / "eeg.json")
    dead = MultiChannelRecording(("dead",), (KIND_EMG_REF,), eeg.sample_rate_hz,
                                 np.zeros((1, eeg.n_samples)))
    write_recording(tmp_path / "dead.json", dead)
    code = run("erase", "--eeg", workspace / "eeg.json",
               "--refs", tmp_path / "dead.json", "--ground-truth-mode",
               "--out", tmp_path)
    assert code == 2


def test_session_pseudo_real_and_report(tmp_path):
    out = tmp_path / "sess"
    assert run("session", "--pseudo-real", 1, "--seed", 0, "--out", out) == 0
    assert (out / "session_trials.csv").exists()
    assert (out / "conditions_table.csv").exists()
    rep_out = tmp_path / "rep"
    assert run("report", "--trials", out / "session_trials.csv",
               "--out", rep_out) == 0
    assert ((rep_out / "conditions_table.csv").read_text()
            == (out / "conditions_table.csv").read_text())


def test_scenario_cli_writes_summary(tmp_path):
    assert run("scenario1", "--seed", 11, "--datasets", 2, "--grid", "6",
               "--out", tmp_path) == 0
    summary = (tmp_path / "scenario1_summary.csv").read_text()
    assert "median_ai_erase" in summary.splitlines()[0]
