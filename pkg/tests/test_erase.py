import numpy as np
import pytest
from scipy.signal import butter, sosfiltfilt

from erasebss.eeg_sim import (
    ContaminationAssignment,
    ContaminationGroundTruth,
    contaminate,
    draw_contamination_weights,
    simulate_eeg,
)
from erasebss.erase import (
    CRIT_HAT_BAND,
    CRIT_MAX_REF,
    CRIT_THRESHOLD,
    EraseError,
    MODE_EXPERIMENTAL,
    MODE_SIMULATED,
    RejectionCriteria,
    identify_artifact_ics,
    rms_of_reference_rows,
    run_conventional_ica,
    run_erase,
    select_gain,
)
from erasebss.fastica import (
    IcaDecomposition,
    IcaDiagnostics,
    RankDeficiencyError,
    WhiteningTransform,
)
from erasebss.recording import KIND_EEG, KIND_EMG_REF, MultiChannelRecording
from erasebss.signal_core import HF_BAND, TrialEpochs, TrialSchedule, stft_band_power


def fake_dec(mixing, sources=None):
    mixing = np.asarray(mixing, dtype=float)
    n = mixing.shape[0]
    if sources is None:
        sources = np.zeros((mixing.shape[1], 16))
    wt = WhiteningTransform(np.zeros(n), np.eye(n), np.eye(n), n)
    return IcaDecomposition(mixing=mixing, unmixing=np.linalg.pinv(mixing),
                            sources=sources, whitening=wt,
                            diagnostics=IcaDiagnostics(True, 1, 0, 0.0), seed=0)


# -- reference-row RMS -------------------------------------------------------


def test_rms_identity_matrix():
    r = rms_of_reference_rows(np.eye(5), 3, 2)
    assert r == pytest.approx(np.sqrt(1.0 / 5.0))


def test_rms_constant_matrix():
    a = np.full((6, 6), -0.37)
    assert rms_of_reference_rows(a, 4, 2) == pytest.approx(0.37)


def test_rms_matches_hand_computation():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    got = rms_of_reference_rows(a, 4, 2)
    acc = 0.0
    for row in (4, 5):
        acc += (sum(a[row, c] ** 2 for c in range(6)) / 6.0) ** 0.5
    assert abs(got - acc / 2.0) < 1e-12


def test_rms_requires_reference_rows():
    with pytest.raises(EraseError):
        rms_of_reference_rows(np.eye(4), 4, 0)


# -- identification -----------------------------------------------------------


def test_identity_matrix_flags_reference_components():
    labels = ("e1", "e2", "e3")
    crit = RejectionCriteria(gain=1.0, hat_band_labels={"e1"})
    rep = identify_artifact_ics(fake_dec(np.eye(5)), crit, 3, 2, eeg_labels=labels)
    # reference-row unit coefficients (1.0) exceed 1.0 x RMS (~0.447)
    assert set(rep.artifact_ics) == {0, 3, 4}
    assert rep.provenance_of(3) == (CRIT_THRESHOLD,)
    assert rep.provenance_of(4) == (CRIT_THRESHOLD,)
    assert rep.provenance_of(0) == (CRIT_HAT_BAND,)
    assert rep.threshold == pytest.approx(np.sqrt(0.2))


@pytest.mark.parametrize("gain", [0.4, 3.0])
def test_hat_band_flag_is_gain_independent(gain):
    a = np.eye(5) * 0.01
    a[1, 2] = 0.9  # column 2 peaks on an EEG row
    a[4, 4] = 1.0  # reference component stays on the reference row
    labels = ("e1", "hatrow", "e3", "e4")
    crit = RejectionCriteria(gain=gain, hat_band_labels={"hatrow"})
    rep = identify_artifact_ics(fake_dec(a), crit, 4, 1, eeg_labels=labels)
    assert 2 in rep.artifact_ics
    assert CRIT_HAT_BAND in rep.provenance_of(2)


def test_simulated_mode_matches_argmax_oracle():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(8, 8))
    a[5, 1] = 9.0
    a[6, 4] = 8.0
    a[7, 6] = 7.0
    dec = fake_dec(a)
    crit = RejectionCriteria(mode=MODE_SIMULATED)
    rep = identify_artifact_ics(dec, crit, 5, 3)
    oracle = {int(np.argmax(np.abs(a[row]))) for row in (5, 6, 7)}
    assert set(rep.artifact_ics) == oracle == {1, 4, 6}
    assert all(rep.provenance_of(ic) == (CRIT_MAX_REF,) for ic in rep.artifact_ics)


def test_criterion1_scale_invariance():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(7, 7))
    labels = tuple(f"e{i}" for i in range(5))
    crit = RejectionCriteria(gain=1.2, hat_band_labels={"e0"})
    rep1 = identify_artifact_ics(fake_dec(a), crit, 5, 2, eeg_labels=labels)
    rep2 = identify_artifact_ics(fake_dec(37.5 * a), crit, 5, 2, eeg_labels=labels)
    assert rep1.artifact_ics == rep2.artifact_ics


def test_criterion2_column_rescale_invariance():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 6))
    scales = rng.uniform(0.5, 4.0, size=6)
    labels = tuple(f"e{i}" for i in range(6))
    crit = RejectionCriteria(gain=3.0, hat_band_labels={"e2", "e4"})
    rep1 = identify_artifact_ics(fake_dec(a), crit, 6, 0, eeg_labels=labels)
    rep2 = identify_artifact_ics(fake_dec(a * scales[None, :]), crit, 6, 0,
                                 eeg_labels=labels)
    hat1 = [ic for ic in rep1.artifact_ics if CRIT_HAT_BAND in rep1.provenance_of(ic)]
    hat2 = [ic for ic in rep2.artifact_ics if CRIT_HAT_BAND in rep2.provenance_of(ic)]
    assert hat1 == hat2


def test_criterion1_monotone_in_gain():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(8, 8))
    labels = tuple(f"e{i}" for i in range(6))
    previous = None
    for gain in (0.4, 1.0, 1.7, 2.4, 3.0):
        crit = RejectionCriteria(gain=gain, hat_band_labels={"e0"})
        rep = identify_artifact_ics(fake_dec(a), crit, 6, 2, eeg_labels=labels)
        flagged = {ic for ic in rep.artifact_ics
                   if CRIT_THRESHOLD in rep.provenance_of(ic)}
        if previous is not None:
            assert flagged.issubset(previous)
        previous = flagged


def test_experimental_mode_requires_hat_band():
    crit = RejectionCriteria(gain=1.0, hat_band_labels=frozenset())
    with pytest.raises(EraseError, match="hat-band"):
        identify_artifact_ics(fake_dec(np.eye(4)), crit, 3, 1, eeg_labels=("a", "b", "c"))


def test_criteria_validation():
    with pytest.raises(EraseError):
        RejectionCriteria(gain=3.5)
    with pytest.raises(EraseError):
        RejectionCriteria(mode="bogus")


# -- gain sweep ----------------------------------------------------------------


def _band_noise(rng, n, fs, lo, hi):
    sos = butter(4, [lo / (fs / 2), hi / (fs / 2)], btype="bandpass", output="sos")
    return sosfiltfilt(sos, rng.standard_normal(n))


def _sweep_fixture(mu_ref_coef=0.64, emg_ref_coef=1.4):
    """Hand-built decomposition over 8 EEG + 2 reference rows whose sweep
    objective is minimized exactly on the gain plateau starting at 1.5."""
    fs = 250.0
    n_trials = 6
    idle_n, move_n = 250, 500
    n = n_trials * (idle_n + move_n)
    rng = np.random.default_rng(11)

    idle_slices, move_slices = [], []
    pos = 0
    for _ in range(n_trials):
        idle_slices.append(slice(pos, pos + idle_n))
        pos += idle_n
        move_slices.append(slice(pos, pos + move_n))
        pos += move_n

    envelope_mu = np.ones(n)
    envelope_emg = np.ones(n)
    for s in move_slices:
        envelope_mu[s] = 0.6   # mu desynchronizes with movement
        envelope_emg[s] = 3.0  # EMG synchronizes with movement
    t = np.arange(n) / fs
    sources = np.zeros((10, n))
    sources[0] = envelope_mu * np.sin(2 * np.pi * 10.0 * t) + 0.05 * rng.standard_normal(n)
    sources[1] = envelope_emg * _band_noise(rng, n, fs, 45.0, 95.0)
    for k in range(2, 8):
        sources[k] = rng.standard_normal(n)
    sources[8] = rng.standard_normal(n)
    sources[9] = rng.standard_normal(n)

    mixing = np.zeros((10, 10))
    mixing[7, 0] = 1.0                      # mu component lives on C3
    mixing[0:4, 1] = [0.8, 0.6, 0.5, 0.4]   # EMG component spreads over E1..E4
    mixing[7, 1] = 0.2
    for k in range(2, 8):
        mixing[k - 1, k] = 1.0              # noise components on E2..E7
    mixing[7, 6] = 0.3                      # C3 keeps background when mu is rejected
    mixing[8, 8] = 1.0
    mixing[9, 9] = 1.0
    mixing[8, 0] = mu_ref_coef
    mixing[8, 1] = emg_ref_coef

    r_ms = rms_of_reference_rows(mixing, 8, 2)
    # construction premises: EMG stays rejected over the whole grid, mu flips
    # between gain 1.4 and 1.5, nothing else crosses criterion 1
    assert emg_ref_coef / r_ms > 3.0
    if mu_ref_coef:
        assert 1.4 < mu_ref_coef / r_ms < 1.5

    labels = ("E1", "E2", "E3", "E4", "E5", "E6", "E7", "C3", "refA", "refB")
    kinds = (KIND_EEG,) * 8 + (KIND_EMG_REF,) * 2
    epochs = TrialEpochs(labels, kinds, fs, mixing @ sources,
                         tuple(idle_slices), tuple(move_slices))
    return epochs, fake_dec(mixing, sources)


def test_select_gain_returns_first_gain_after_mu_crossover():
    epochs, dec = _sweep_fixture()
    crit = RejectionCriteria(hat_band_labels={"E7"})
    gain, sweep, warnings = select_gain(epochs, dec, crit, "C3")
    assert gain == pytest.approx(1.5)
    assert warnings == ()
    assert len(sweep) == 27


def test_select_gain_sweep_matches_independent_recomputation():
    from erasebss.fastica import reconstruct_without
    from erasebss.signal_core import MU_BAND, band_power_series, zscore_to_idle

    epochs, dec = _sweep_fixture()
    crit = RejectionCriteria(hat_band_labels={"E7"})
    _, sweep, _ = select_gain(epochs, dec, crit, "C3")
    from dataclasses import replace
    for gain, value in sweep[::5]:
        rep = identify_artifact_ics(dec, replace(crit, gain=gain), 8, 2,
                                    eeg_labels=epochs.labels)
        cleaned = epochs.with_data(reconstruct_without(dec, rep.artifact_ics))
        hf = zscore_to_idle(band_power_series(cleaned, HF_BAND, "hf"))
        mu = zscore_to_idle(band_power_series(cleaned, MU_BAND, "mu"))
        expected = 0.0
        for row in range(len(hf.channel_labels)):
            if row not in hf.flagged_channels:
                expected += hf.z_movement[row].mean()
        c3 = mu.channel_labels.index("C3")
        if c3 not in mu.flagged_channels:
            expected += mu.z_movement[c3].mean()
        assert value == pytest.approx(expected, abs=1e-9)


def test_select_gain_constant_objective_ties_to_smallest():
    epochs, dec = _sweep_fixture(mu_ref_coef=0.0)
    crit = RejectionCriteria(hat_band_labels={"E7"})
    gain, sweep, warnings = select_gain(epochs, dec, crit, "C3")
    assert gain == pytest.approx(0.4)
    assert warnings == ()


def test_select_gain_degenerate_sweep_warns():
    # no reference rows and no column peaking on the hat row: nothing to reject
    rng = np.random.default_rng(13)
    mixing = np.array([
        [0.5, 0.4, 0.3],
        [1.0, 0.0, 0.9],
        [0.0, 1.0, 0.2],
    ])
    sources = rng.standard_normal((3, 1800))
    idle = tuple(slice(i * 600, i * 600 + 200) for i in range(3))
    move = tuple(slice(i * 600 + 200, (i + 1) * 600) for i in range(3))
    epochs = TrialEpochs(("a", "b", "c3"), (KIND_EEG,) * 3, 250.0,
                         mixing @ sources, idle, move)
    crit = RejectionCriteria(hat_band_labels={"a"})
    gain, _, warnings = select_gain(epochs, fake_dec(mixing, sources), crit, "c3")
    assert gain == pytest.approx(0.4)
    assert warnings


# -- end-to-end ------------------------------------------------------------------


def _contaminated_session(seed, n_ch=16, fs=500.0, n_trials=5, amplitude=100.0):
    rng = np.random.default_rng(seed)
    schedule = TrialSchedule.regular(n_trials)
    duration = schedule.end_s
    eeg = simulate_eeg(n_ch, duration, fs, rng_seed=seed)
    n = eeg.n_samples
    # one bursty high-frequency artifact source, stronger during movement
    envelope = np.ones(n)
    for _, _, m0, ml in schedule.trials:
        envelope[int(m0 * fs):int((m0 + ml) * fs)] = 3.0
    artifact = envelope * _band_noise(rng, n, fs, 45.0, 120.0)
    artifact *= amplitude / np.sqrt(np.mean(artifact**2))
    refs = MultiChannelRecording(("emg_src",), (KIND_EMG_REF,), fs, artifact[None, :])
    channels = rng.choice(n_ch, size=6, replace=False)
    weights = draw_contamination_weights(6, rng)
    plan = ContaminationGroundTruth((
        ContaminationAssignment("emg_src", tuple(int(c) for c in channels),
                                tuple(weights)),
    ), rng_seed=seed)
    dirty = contaminate(eeg, refs, plan)
    return dirty, refs, schedule


def _movement_hf_power(rec, schedule):
    total = 0.0
    for _, _, m0, ml in schedule.trials:
        seg = rec.data[:, int(m0 * rec.sample_rate_hz):int((m0 + ml) * rec.sample_rate_hz)]
        total += stft_band_power(seg, rec.sample_rate_hz, HF_BAND).sum()
    return total


def test_run_erase_zero_reference_is_rank_deficient():
    eeg = simulate_eeg(8, 4.0, 500.0, rng_seed=0)
    refs = MultiChannelRecording(("dead",), (KIND_EMG_REF,), 500.0,
                                 np.zeros((1, eeg.n_samples)))
    crit = RejectionCriteria(mode=MODE_SIMULATED)
    with pytest.raises(RankDeficiencyError):
        run_erase(eeg, refs, crit, rng_seed=1)


def test_run_erase_removes_movement_hf_power():
    reductions = []
    for seed in range(3):
        dirty, refs, schedule = _contaminated_session(seed)
        crit = RejectionCriteria(mode=MODE_SIMULATED)
        cleaned, report, _ = run_erase(dirty, refs, crit, rng_seed=seed,
                                       max_iter=200, tol=1e-4, n_restarts=0)
        assert cleaned.labels == dirty.labels
        assert cleaned.n_samples == dirty.n_samples
        assert report.artifact_ics
        reductions.append(_movement_hf_power(cleaned, schedule)
                          / _movement_hf_power(dirty, schedule))
    assert np.median(reductions) <= 0.4


def test_run_conventional_no_hat_hit_keeps_data():
    rng = np.random.default_rng(21)
    truth = rng.laplace(size=(5, 30000))
    mixing = np.array([
        [0.10, 0.10, 0.08, 0.12, 0.05],
        [1.00, 0.00, 0.00, 0.00, 0.80],
        [0.00, 1.00, 0.00, 0.00, 0.60],
        [0.00, 0.00, 1.00, 0.00, 0.00],
        [0.00, 0.00, 0.00, 1.00, 0.00],
    ])
    data = mixing @ truth
    labels = tuple(f"ch{i:02d}" for i in range(5))
    rec = MultiChannelRecording(labels, (KIND_EEG,) * 5, 500.0, data)
    crit = RejectionCriteria(hat_band_labels={"ch00"})
    cleaned, report, _ = run_conventional_ica(rec, crit, rng_seed=2)
    assert report.artifact_ics == ()
    rel = np.linalg.norm(cleaned.data - rec.data) / np.linalg.norm(rec.data)
    assert rel < 1e-6


def test_run_conventional_provenance_is_hat_only():
    dirty, _, _ = _contaminated_session(7)
    crit = RejectionCriteria(hat_band_labels={dirty.labels[0], dirty.labels[3]})
    _, report, _ = run_conventional_ica(dirty, crit, rng_seed=3,
                                        max_iter=300, tol=1e-5, n_restarts=1)
    for ic in report.artifact_ics:
        assert report.provenance_of(ic) == (CRIT_HAT_BAND,)
