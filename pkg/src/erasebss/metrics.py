"""Quantitative validation metrics.

The artifact index and artifact-event predicate read a single mixing-matrix
column split by ground truth into contaminated EEG rows, uncontaminated EEG
rows, and reference rows. Percent reduction compares summed z-scored
high-frequency power before and after cleaning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import BandPowerSeries, SignalError

EVENT_MARGIN = 0.05  # fraction of the largest reference coefficient


class MetricError(ValueError):
    """Invalid metric input."""


@dataclass(frozen=True)
class ArtifactColumnView:
    """One mixing-matrix column partitioned by contamination ground truth.

    ``contaminated`` holds the coefficients of the EEG rows that carried the
    artifact (j entries), ``uncontaminated`` the remaining EEG rows, and
    ``reference`` the trailing reference-EMG rows (possibly empty).
    """

    contaminated: np.ndarray
    uncontaminated: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        for name in ("contaminated", "uncontaminated", "reference"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @staticmethod
    def from_column(column: np.ndarray, contaminated_rows, n_eeg: int
                    ) -> "ArtifactColumnView":
        """Split a full (n_eeg + n_ref)-row column by the contaminated-row set."""
        column = np.asarray(column, dtype=np.float64)
        contaminated_rows = sorted(set(int(i) for i in contaminated_rows))
        if contaminated_rows and not (0 <= contaminated_rows[0] and contaminated_rows[-1] < n_eeg):
            raise MetricError(f"contaminated rows {contaminated_rows} outside EEG block 0..{n_eeg - 1}")
        mask = np.zeros(n_eeg, dtype=bool)
        mask[contaminated_rows] = True
        return ArtifactColumnView(
            contaminated=column[:n_eeg][mask],
            uncontaminated=column[:n_eeg][~mask],
            reference=column[n_eeg:],
        )


def artifact_index(view: ArtifactColumnView) -> float:
    """Ratio of mean |coefficient| on contaminated vs uncontaminated EEG rows.

    Reference rows are excluded from both means. Higher means the component
    carries more artifact and less signal. A zero uncontaminated mean yields
    +inf.
    """
    if len(view.contaminated) < 1 or len(view.uncontaminated) < 1:
        raise MetricError("need at least one contaminated and one uncontaminated row")
    num = float(np.mean(np.abs(view.contaminated)))
    den = float(np.mean(np.abs(view.uncontaminated)))
    if den == 0:
        return float("inf")
    return num / den


def artifact_event(view: ArtifactColumnView) -> bool:
    """True iff the contaminated-row mean exceeds the uncontaminated-row mean
    by more than 5% of the largest reference coefficient (strict inequality).

    Serves as the false-positive predicate when the contaminant is
    independent of the references and as the sensitivity predicate when it is
    dependent on them.
    """
    if len(view.reference) < 1:
        raise MetricError("artifact_event requires at least one reference row")
    if len(view.contaminated) < 1 or len(view.uncontaminated) < 1:
        raise MetricError("need at least one contaminated and one uncontaminated row")
    diff = float(np.mean(np.abs(view.contaminated)) - np.mean(np.abs(view.uncontaminated)))
    return diff > EVENT_MARGIN * float(np.max(np.abs(view.reference)))


def rate_over_datasets(events) -> float:
    """Fraction of true values over a nonempty event list."""
    events = list(events)
    if not events:
        raise MetricError("need at least one dataset event")
    return sum(bool(e) for e in events) / len(events)


def percent_reduction(before: BandPowerSeries, after: BandPowerSeries) -> float:
    """Percent drop of summed movement-phase z-scored power after cleaning.

    |sum(before) - sum(after)| / sum(before) * 100, summed over channels and
    trials. Channels flagged as degenerate in either series are excluded from
    both sums.
    """
    if before.z_movement is None or after.z_movement is None:
        raise MetricError("both series must be z-scored (run zscore_to_idle first)")
    if before.z_movement.shape != after.z_movement.shape:
        raise MetricError("before/after series must share channel/trial structure")
    if before.channel_labels != after.channel_labels:
        raise MetricError("before/after series must cover the same channels")
    drop = set(before.flagged_channels) | set(after.flagged_channels)
    keep = [i for i in range(len(before.channel_labels)) if i not in drop]
    if not keep:
        raise SignalError("no channels with valid idle statistics")
    total_before = float(np.sum(before.z_movement[keep]))
    total_after = float(np.sum(after.z_movement[keep]))
    if total_before == 0:
        raise MetricError("zero baseline power sum; percent reduction undefined")
    return abs(total_before - total_after) / total_before * 100.0
