"""Reference-augmented ICA toolkit for removing EMG artifacts from EEG.

The package bundles a blind-source-separation engine (FastICA), biophysical
EMG and EEG simulators, the reference-channel artifact-rejection procedure,
its validation metrics, and Monte-Carlo experiment runners behind a batch CLI.
"""

from .recording import (
    KIND_EEG,
    KIND_EMG_REF,
    MultiChannelRecording,
    RecordingError,
    read_recording,
    write_recording,
)
from .signal_core import (
    HF_BAND,
    MU_BAND,
    BandPowerSeries,
    FrequencyBand,
    SignalError,
    TrialEpochs,
    TrialSchedule,
    band_power,
    band_power_series,
    bandpass_filter,
    concat_trials,
    extract_trials,
    resample,
    wilcoxon_rank_sum,
    zscore_to_idle,
)
from .fastica import (
    IcaDecomposition,
    IcaError,
    RankDeficiencyError,
    WhiteningTransform,
    center_and_whiten,
    fastica,
    reconstruct_without,
)

__version__ = "0.1.0"
