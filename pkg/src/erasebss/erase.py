"""Reference-augmented artifact rejection.

The procedure appends reference-EMG channels to the EEG before ICA, then
identifies artifact components from the mixing matrix: by thresholding the
reference-row coefficients against a gain multiple of their pooled RMS
(criterion 1), and by flagging components whose largest loading sits on a
hat-band electrode (criterion 2). A data-driven sweep picks the gain that
minimizes movement-phase high-frequency synchronization while maximizing
mu-band desynchronization. The conventional-ICA baseline runs on the EEG
alone with criterion 2 only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .eeg_sim import append_reference_channels
from .fastica import IcaDecomposition, fastica, reconstruct_without
from .recording import MultiChannelRecording
from .signal_core import (
    HF_BAND,
    MU_BAND,
    TrialEpochs,
    TrialSchedule,
    band_power_series,
    concat_trials,
    zscore_to_idle,
)

MODE_EXPERIMENTAL = "experimental"
MODE_SIMULATED = "simulated_ground_truth"

GAIN_MIN, GAIN_MAX = 0.4, 3.0
DEFAULT_GAIN_GRID = tuple(round(0.4 + 0.1 * i, 10) for i in range(27))

CRIT_THRESHOLD = "threshold_criterion"
CRIT_HAT_BAND = "hat_band_criterion"
CRIT_MAX_REF = "max_ref_coefficient"

# outermost ring of the 64-channel 10-10 montage; a convenience default for
# configuration, not baked into the criteria
DEFAULT_HAT_BAND_64 = frozenset({
    "Fp1", "Fpz", "Fp2", "AF7", "AF8", "F7", "F8", "FT9", "FT10",
    "T7", "T8", "TP9", "TP10", "P7", "P8", "PO9", "PO10", "O1", "Oz", "O2",
})


class EraseError(ValueError):
    """Invalid rejection configuration or input."""


@dataclass(frozen=True)
class RejectionCriteria:
    """Configuration for artifact-component identification.

    ``gain`` of None requests the automatic sweep; ``hat_band_labels`` names
    the outer-ring EEG electrodes for criterion 2 (required in experimental
    mode).
    """

    gain: float | None = None
    hat_band_labels: frozenset = frozenset()
    mode: str = MODE_EXPERIMENTAL

    def __post_init__(self):
        object.__setattr__(self, "hat_band_labels", frozenset(self.hat_band_labels))
        if self.mode not in (MODE_EXPERIMENTAL, MODE_SIMULATED):
            raise EraseError(f"unknown mode {self.mode!r}")
        if self.gain is not None and not (GAIN_MIN <= self.gain <= GAIN_MAX):
            raise EraseError(f"gain must lie in [{GAIN_MIN}, {GAIN_MAX}], got {self.gain}")


@dataclass(frozen=True)
class RejectionReport:
    """Artifact-component indices with per-criterion provenance and the
    threshold bookkeeping that produced them."""

    artifact_ics: tuple[int, ...]
    provenance: tuple[tuple[int, tuple[str, ...]], ...]
    rms_value: float
    gain: float | None
    threshold: float | None
    gain_sweep: tuple[tuple[float, float], ...] = ()
    warnings: tuple[str, ...] = ()

    def provenance_of(self, ic: int) -> tuple[str, ...]:
        return dict(self.provenance).get(ic, ())

    def to_json(self) -> str:
        return json.dumps({
            "artifact_ics": list(self.artifact_ics),
            "provenance": {str(ic): list(tags) for ic, tags in self.provenance},
            "rms_value": self.rms_value,
            "gain": self.gain,
            "threshold": self.threshold,
            "gain_sweep": [[g, v] for g, v in self.gain_sweep],
            "warnings": list(self.warnings),
        }, indent=1)

    def sweep_csv(self) -> str:
        """Gain-sweep objective values, one "gain,objective" row per gain."""
        lines = ["gain,objective"]
        lines.extend(f"{g:.10g},{v:.10g}" for g, v in self.gain_sweep)
        return "\n".join(lines) + "\n"


def rms_of_reference_rows(mixing: np.ndarray, n_eeg: int, n_ref: int) -> float:
    """Mean, over the reference rows, of each row's coefficient RMS."""
    if n_ref < 1:
        raise EraseError("no reference rows: RMS threshold undefined")
    if mixing.shape[0] < n_eeg + n_ref:
        raise EraseError(
            f"mixing matrix has {mixing.shape[0]} rows, expected {n_eeg + n_ref}"
        )
    rows = mixing[n_eeg:n_eeg + n_ref]
    return float(np.mean(np.sqrt(np.mean(rows**2, axis=1))))


def identify_artifact_ics(dec: IcaDecomposition, criteria: RejectionCriteria,
                          n_eeg: int, n_ref: int,
                          eeg_labels=None) -> RejectionReport:
    """Flag artifact components from the mixing matrix.

    Experimental mode unions two criteria: any reference-row |coefficient|
    above gain x reference RMS (criterion 1), and column argmax landing on a
    hat-band EEG row (criterion 2; ties break to the lowest row index).
    Simulated-ground-truth mode instead flags, per reference row, the
    component with the largest |coefficient| in that row.
    """
    a = np.abs(dec.mixing)
    n_ics = a.shape[1]
    tags: dict[int, list[str]] = {}

    if criteria.mode == MODE_SIMULATED:
        if n_ref < 1:
            raise EraseError("simulated_ground_truth mode requires reference rows")
        for k in range(n_ref):
            ic = int(np.argmax(a[n_eeg + k]))
            tags.setdefault(ic, []).append(CRIT_MAX_REF)
        rms = rms_of_reference_rows(dec.mixing, n_eeg, n_ref)
        return _report(tags, rms, None, None)

    if criteria.gain is None:
        raise EraseError("experimental mode needs a resolved gain (run the sweep first)")
    rms = float("nan")
    threshold = None
    if n_ref >= 1:
        rms = rms_of_reference_rows(dec.mixing, n_eeg, n_ref)
        threshold = rms * criteria.gain
        ref_max = a[n_eeg:n_eeg + n_ref].max(axis=0)
        for ic in np.flatnonzero(ref_max > threshold):
            tags.setdefault(int(ic), []).append(CRIT_THRESHOLD)

    if not criteria.hat_band_labels:
        raise EraseError("experimental mode requires a nonempty hat-band set")
    if eeg_labels is None:
        raise EraseError("criterion 2 needs the EEG channel labels")
    eeg_labels = list(eeg_labels)[:n_eeg]
    unknown = criteria.hat_band_labels.difference(eeg_labels)
    if unknown:
        raise EraseError(f"hat-band labels not in the EEG montage: {sorted(unknown)}")
    hat_rows = {i for i, lab in enumerate(eeg_labels) if lab in criteria.hat_band_labels}
    argmax_rows = np.argmax(a, axis=0)  # first occurrence = lowest row on ties
    for ic in range(n_ics):
        if int(argmax_rows[ic]) in hat_rows:
            tags.setdefault(ic, []).append(CRIT_HAT_BAND)
    return _report(tags, rms, criteria.gain, threshold)


def _report(tags: dict[int, list[str]], rms: float, gain: float | None,
            threshold: float | None, sweep=(), warnings=()) -> RejectionReport:
    ics = tuple(sorted(tags))
    prov = tuple((ic, tuple(tags[ic])) for ic in ics)
    return RejectionReport(ics, prov, rms, gain, threshold,
                           gain_sweep=tuple(sweep), warnings=tuple(warnings))


def _sweep_objective(epochs: TrialEpochs, dec: IcaDecomposition,
                     rejected, mu_channel_label: str) -> float:
    """Movement-phase z-scored HF power summed over EEG channels plus the
    movement-phase z-scored mu power at the mu channel, after rejecting the
    given components. Channels with degenerate idle statistics (e.g. fully
    zeroed by the rejection) contribute 0: no synchronization, no
    desynchronization."""
    cleaned = epochs.with_data(reconstruct_without(dec, rejected))
    hf = zscore_to_idle(band_power_series(cleaned, HF_BAND, "hf"))
    mu = zscore_to_idle(band_power_series(cleaned, MU_BAND, "mu"))
    hf_z = hf.z_movement.copy()
    hf_z[list(hf.flagged_channels)] = 0.0
    hf_term = float(hf_z.mean(axis=1).sum())
    mu_row = mu.channel_labels.index(mu_channel_label)
    if mu_row in mu.flagged_channels:
        mu_term = 0.0
    else:
        mu_term = float(mu.z_movement[mu_row].mean())
    return hf_term + mu_term


def select_gain(epochs: TrialEpochs, dec: IcaDecomposition,
                criteria: RejectionCriteria, mu_channel_label: str,
                grid=DEFAULT_GAIN_GRID) -> tuple[float, tuple[tuple[float, float], ...], tuple[str, ...]]:
    """Sweep the gain grid and return (best gain, sweep values, warnings).

    For each gain the artifact set is recomputed on the fixed decomposition,
    the recording reconstructed without it, and the summed objective
    evaluated; the minimizing gain wins, ties to the smaller gain. If no gain
    rejects anything the smallest gain is returned with a warning.
    """
    if mu_channel_label not in epochs.labels:
        raise EraseError(f"mu channel {mu_channel_label!r} not present")
    n_eeg = sum(1 for k in epochs.kinds if k == "EEG")
    n_ref = len(epochs.kinds) - n_eeg
    sweep = []
    any_rejection = False
    cache: dict[tuple[int, ...], float] = {}
    for gain in grid:
        rep = identify_artifact_ics(dec, replace(criteria, gain=gain), n_eeg, n_ref,
                                    eeg_labels=epochs.labels)
        any_rejection = any_rejection or bool(rep.artifact_ics)
        key = rep.artifact_ics
        if key not in cache:
            cache[key] = _sweep_objective(epochs, dec, key, mu_channel_label)
        sweep.append((float(gain), cache[key]))
    warnings = ()
    if not any_rejection:
        warnings = ("no gain in the grid rejected any component",)
        return float(grid[0]), tuple(sweep), warnings
    values = np.array([v for _, v in sweep])
    best = int(np.argmin(values))  # first minimum = smallest gain on ties
    return float(sweep[best][0]), tuple(sweep), warnings


def run_erase(eeg: MultiChannelRecording, refs: MultiChannelRecording,
              criteria: RejectionCriteria, rng_seed=0,
              schedule: TrialSchedule | None = None,
              mu_channel_label: str | None = None,
              gain_grid=DEFAULT_GAIN_GRID,
              max_iter: int = 1000, tol: float = 1e-6, n_restarts: int = 5,
              ) -> tuple[MultiChannelRecording, RejectionReport, IcaDecomposition]:
    """Full reference-augmented cleaning of one recording.

    Appends the reference channels, decomposes, identifies artifact
    components (sweeping the gain when ``criteria.gain`` is None), remixes
    without them and drops the reference rows. The output has exactly the
    input EEG's labels and shape.
    """
    if refs.n_channels < 1:
        raise EraseError("reference recording must contain at least one channel")
    combined = append_reference_channels(eeg, refs)
    dec = fastica(combined.data, max_iter=max_iter, tol=tol, rng_seed=rng_seed,
                  n_restarts=n_restarts)
    t, tau = eeg.n_channels, refs.n_channels
    crit = criteria
    sweep: tuple = ()
    warnings: tuple = ()
    if criteria.mode == MODE_EXPERIMENTAL and criteria.gain is None:
        if schedule is None or mu_channel_label is None:
            raise EraseError("automatic gain selection needs a schedule and a mu channel")
        epochs = concat_trials(combined, schedule)
        gain, sweep, warnings = select_gain(epochs, dec, criteria, mu_channel_label,
                                            grid=gain_grid)
        crit = replace(criteria, gain=gain)
    report = identify_artifact_ics(dec, crit, t, tau, eeg_labels=eeg.labels)
    report = replace(report, gain_sweep=sweep, warnings=report.warnings + warnings)
    cleaned = reconstruct_without(dec, report.artifact_ics)
    return eeg.with_data(cleaned[:t]), report, dec


def run_conventional_ica(eeg: MultiChannelRecording, criteria: RejectionCriteria,
                         rng_seed=0, max_iter: int = 1000, tol: float = 1e-6,
                         n_restarts: int = 5,
                         ) -> tuple[MultiChannelRecording, RejectionReport, IcaDecomposition]:
    """Baseline: ICA on the EEG alone, rejection by the hat-band criterion
    only, then reconstruction."""
    if eeg.n_channels < 1:
        raise EraseError("empty recording")
    dec = fastica(eeg.data, max_iter=max_iter, tol=tol, rng_seed=rng_seed,
                  n_restarts=n_restarts)
    crit = criteria if criteria.gain is not None else replace(criteria, gain=GAIN_MIN)
    report = identify_artifact_ics(dec, crit, eeg.n_channels, 0, eeg_labels=eeg.labels)
    cleaned = reconstruct_without(dec, report.artifact_ics)
    return eeg.with_data(cleaned), report, dec
