"""Batch command-line interface.

Subcommands cover the simulators (simulate-eeg, simulate-emg, contaminate),
single-recording cleaning (erase, ica-baseline), the Monte-Carlo experiments
(scenario1, scenario2, false-positive, sensitivity), the session pipeline
(session) and offline re-aggregation (report).

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .eeg_sim import (
    ContaminationGroundTruth,
    SimulationError as EegSimulationError,
    append_reference_channels,
    contaminate,
    draw_contamination_weights,
    simulate_eeg,
)
from .eeg_sim import ContaminationAssignment
from .emg_sim import (
    SimulationError as EmgSimulationError,
    muscle_specs_from_json,
    scenario_muscle_types,
    simulate_head_emg_set,
)
from .erase import (
    DEFAULT_HAT_BAND_64,
    EraseError,
    MODE_EXPERIMENTAL,
    MODE_SIMULATED,
    RejectionCriteria,
    run_conventional_ica,
    run_erase,
)
from .fastica import IcaError
from .metrics import MetricError
from .recording import RecordingError, read_recording, write_recording
from .signal_core import SignalError, TrialSchedule

VALIDATION_ERRORS = (RecordingError, SignalError, EraseError, MetricError,
                     EegSimulationError, ValueError)
NUMERICAL_ERRORS = (IcaError, EmgSimulationError, FloatingPointError)


def _load_schedule(path: str) -> TrialSchedule:
    doc = json.loads(Path(path).read_text())
    return TrialSchedule(tuple(tuple(t) for t in doc["trials"]))


def _default_schedule(args) -> TrialSchedule:
    return TrialSchedule.regular(args.trials, gap_s=args.trial_gap)


def _load_hat_band(path: str | None) -> frozenset:
    if path is None:
        return DEFAULT_HAT_BAND_64
    return frozenset(json.loads(Path(path).read_text()))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gain_value(text: str):
    if text == "auto":
        return None
    return float(text)


def _add_common(parser, datasets_default=20):
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--datasets", type=int, default=datasets_default,
                        help="Monte-Carlo datasets per grid point")
    parser.add_argument("--config", default=None,
                        help="JSON config document (command-specific)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erasebss",
        description="EMG-artifact removal for EEG via reference-augmented ICA: "
                    "simulators, batch cleaning, and validation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-eeg", help="generate simulated EEG")
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--duration", type=float, default=30.0, help="seconds")
    p.add_argument("--rate", type=float, default=500.0, help="sample rate (Hz)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")

    p = sub.add_parser("simulate-emg", help="generate simulated muscle EMG")
    p.add_argument("--types", type=int, default=3,
                   help="number of scenario muscle types (1..5)")
    p.add_argument("--config", default=None, help="muscle-spec JSON document")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--trial-gap", type=float, default=0.0)
    p.add_argument("--rate", type=float, default=500.0)
    p.add_argument("--amplitude", type=float, default=30.0, help="movement RMS (uV)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")

    p = sub.add_parser("contaminate", help="mix weighted EMG into EEG channels")
    p.add_argument("--eeg", required=True)
    p.add_argument("--emg", required=True)
    p.add_argument("--plan", default=None,
                   help="ground-truth JSON; omit to draw a random plan")
    p.add_argument("--per-type", type=int, default=2,
                   help="channels contaminated per EMG channel for random plans")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")

    p = sub.add_parser("erase", help="reference-augmented cleaning of one recording")
    p.add_argument("--eeg", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--gain", type=_gain_value, default="auto",
                   help="criterion-1 gain in [0.4, 3] or 'auto'")
    p.add_argument("--hat-band", default=None, help="JSON list of hat-band labels")
    p.add_argument("--mu-channel", default="C3")
    p.add_argument("--schedule", default=None,
                   help="trial-schedule JSON (needed for --gain auto)")
    p.add_argument("--ground-truth-mode", action="store_true",
                   help="flag per-reference argmax components instead of criteria")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")

    p = sub.add_parser("ica-baseline", help="conventional ICA cleaning (criterion 2 only)")
    p.add_argument("--eeg", required=True)
    p.add_argument("--hat-band", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")

    for name, help_text in (("scenario1", "effectiveness vs contaminated-channel count"),
                            ("scenario2", "effectiveness vs number of EMG types"),
                            ("false-positive", "independent-contaminant event rate"),
                            ("sensitivity", "dependent-contaminant event rate")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.add_argument("--grid", default=None,
                       help="comma-separated grid values (scenario1/scenario2)")
        p.add_argument("--full-scale", action="store_true",
                       help="publication-scale sizes (200 datasets, 300 s at 2 kHz)")

    p = sub.add_parser("session", help="experimental-style session pipeline")
    p.add_argument("--pseudo-real", type=int, default=10, metavar="N",
                   help="run N seeded pseudo-real sessions (default mode)")
    p.add_argument("--eeg", default=None, help="real session EEG recording")
    p.add_argument("--refs", default=None, help="real session reference EMG recording")
    p.add_argument("--schedule", default=None, help="trial-schedule JSON")
    p.add_argument("--condition", default=None,
                   choices=list(experiments.SESSION_CONDITIONS),
                   help="run a single condition (default: all three)")
    p.add_argument("--gain", type=_gain_value, default="auto")
    p.add_argument("--hat-band", default=None)
    p.add_argument("--mu-channel", default="C3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")

    p = sub.add_parser("report", help="rebuild aggregate tables from session trials")
    p.add_argument("--trials", nargs="+", required=True,
                   help="session_trials.csv files from session runs")
    p.add_argument("--out", default="out")
    return parser


def _cmd_simulate_eeg(args) -> int:
    rec = simulate_eeg(args.channels, args.duration, args.rate, rng_seed=args.seed)
    out = _out_dir(args)
    path = write_recording(out / "eeg.json", rec)
    print(f"wrote {path} ({rec.n_channels} ch x {rec.n_samples} samples)")
    return 0


def _cmd_simulate_emg(args) -> int:
    schedule = _default_schedule(args)
    if args.config:
        specs = muscle_specs_from_json(Path(args.config).read_text(), args.rate)
    else:
        specs = scenario_muscle_types(args.rate, args.types,
                                      amplitude_uv_rms=args.amplitude)
    rec = simulate_head_emg_set(specs, schedule, args.rate, rng_seed=args.seed)
    out = _out_dir(args)
    path = write_recording(out / "emg.json", rec)
    print(f"wrote {path} ({rec.n_channels} muscles, {rec.n_samples} samples)")
    return 0


def _cmd_contaminate(args) -> int:
    eeg = read_recording(args.eeg)
    emg = read_recording(args.emg)
    if args.plan:
        plan = ContaminationGroundTruth.from_json(Path(args.plan).read_text())
    else:
        rng = np.random.default_rng(args.seed)
        chans = rng.choice(eeg.n_channels, size=args.per_type * emg.n_channels,
                           replace=False)
        assignments = []
        for k, label in enumerate(emg.labels):
            idx = tuple(int(i) for i in chans[k * args.per_type:(k + 1) * args.per_type])
            weights = tuple(draw_contamination_weights(args.per_type, rng))
            assignments.append(ContaminationAssignment(label, idx, weights))
        plan = ContaminationGroundTruth(tuple(assignments), rng_seed=args.seed)
    dirty = contaminate(eeg, emg, plan)
    out = _out_dir(args)
    path = write_recording(out / "contaminated.json", dirty)
    plan.save(out / "ground_truth.json")
    print(f"wrote {path} and ground_truth.json")
    return 0


def _cmd_erase(args) -> int:
    eeg = read_recording(args.eeg)
    refs = read_recording(args.refs)
    mode = MODE_SIMULATED if args.ground_truth_mode else MODE_EXPERIMENTAL
    criteria = RejectionCriteria(gain=args.gain, hat_band_labels=_load_hat_band(args.hat_band),
                                 mode=mode)
    schedule = _load_schedule(args.schedule) if args.schedule else None
    cleaned, report, _ = run_erase(eeg, refs, criteria, rng_seed=args.seed,
                                   schedule=schedule, mu_channel_label=args.mu_channel)
    out = _out_dir(args)
    write_recording(out / "cleaned.json", cleaned)
    (out / "rejection_report.json").write_text(report.to_json())
    if report.gain_sweep:
        (out / "gain_sweep.csv").write_text(report.sweep_csv())
    print(f"rejected {len(report.artifact_ics)} components "
          f"(gain={report.gain}); wrote cleaned.json, rejection_report.json")
    return 0


def _cmd_ica_baseline(args) -> int:
    eeg = read_recording(args.eeg)
    criteria = RejectionCriteria(gain=0.4, hat_band_labels=_load_hat_band(args.hat_band))
    cleaned, report, _ = run_conventional_ica(eeg, criteria, rng_seed=args.seed)
    out = _out_dir(args)
    write_recording(out / "cleaned.json", cleaned)
    (out / "rejection_report.json").write_text(report.to_json())
    print(f"rejected {len(report.artifact_ics)} components; wrote cleaned.json")
    return 0


def _scenario_config(args) -> experiments.ScenarioConfig:
    kwargs = dict(n_datasets=args.datasets, master_seed=args.seed,
                  out_dir=_out_dir(args))
    if args.full_scale:
        kwargs.update(n_datasets=max(args.datasets, 200), sample_rate_hz=2000.0,
                      duration_s=300.0, max_iter=1000, tol=1e-6, n_restarts=5)
    return experiments.ScenarioConfig(**kwargs)


def _parse_grid(args):
    if args.grid is None:
        return None
    return tuple(int(v) for v in args.grid.split(","))


def _cmd_scenario(args, which: str) -> int:
    cfg = _scenario_config(args)
    if which == "S1":
        result = experiments.run_scenario1(cfg, grid=_parse_grid(args))
    else:
        result = experiments.run_scenario2(cfg, grid=_parse_grid(args))
    for row in result.summary_rows:
        print(",".join(experiments._fmt(v) for v in row))
    print(f"wrote {result.name}_metrics.csv, {result.name}_summary.csv to {cfg.out_dir}")
    return 0


def _cmd_event_experiment(args, sensitivity: bool) -> int:
    cfg = _scenario_config(args)
    result = (experiments.run_sensitivity(cfg) if sensitivity
              else experiments.run_false_positive(cfg))
    for row in result.summary_rows:
        print(",".join(experiments._fmt(v) for v in row))
    rates = [row[2] for row in result.summary_rows]
    print(f"rate over datasets: {rates}")
    return 0


def _cmd_session(args) -> int:
    out = _out_dir(args)
    if args.eeg is None:
        conditions = ((args.condition,) if args.condition
                      else experiments.SESSION_CONDITIONS)
        results = experiments.run_pseudo_real_batch(
            n_sessions=args.pseudo_real, master_seed=args.seed,
            conditions=conditions, out_dir=out)
        report = experiments.aggregate_report(results)
        print(report.table_csv())
        return 0
    if args.schedule is None:
        raise EraseError("a real session needs --schedule")
    eeg = read_recording(args.eeg)
    refs = read_recording(args.refs) if args.refs else None
    records = experiments.SessionRecordSet(
        eeg=eeg, real_refs=refs, schedule=_load_schedule(args.schedule),
        mu_channel_label=args.mu_channel, session_id=Path(args.eeg).stem)
    criteria = RejectionCriteria(gain=args.gain,
                                 hat_band_labels=_load_hat_band(args.hat_band))
    conditions = ((args.condition,) if args.condition
                  else experiments.SESSION_CONDITIONS)
    results = []
    for condition in conditions:
        if condition == experiments.CONDITION_ERASE_REAL and refs is None:
            print("skipping erase_real: no --refs recording given", file=sys.stderr)
            continue
        results.append(experiments.run_session_pipeline(
            records, condition, criteria=criteria, rng_seed=args.seed))
    experiments.write_session_outputs(results, out)
    print(experiments.aggregate_report(results).table_csv())
    return 0


def _cmd_report(args) -> int:
    rows = []
    for path in args.trials:
        lines = Path(path).read_text().strip().splitlines()
        header = lines[0].split(",")
        if tuple(header) != experiments.TRIAL_ROW_HEADER:
            raise RecordingError(f"{path}: not a session-trials CSV")
        for line in lines[1:]:
            session, cond, trial, hf_z, mu_z, pd = line.split(",")
            rows.append((session, cond, int(trial), float(hf_z), float(mu_z),
                         pd if pd == "" else float(pd)))
    report = experiments.aggregate_from_trial_rows(rows)
    out = _out_dir(args)
    report.write(out)
    print(report.table_csv())
    print(report.pairwise_csv())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate-eeg": _cmd_simulate_eeg,
        "simulate-emg": _cmd_simulate_emg,
        "contaminate": _cmd_contaminate,
        "erase": _cmd_erase,
        "ica-baseline": _cmd_ica_baseline,
        "scenario1": lambda a: _cmd_scenario(a, "S1"),
        "scenario2": lambda a: _cmd_scenario(a, "S2"),
        "false-positive": lambda a: _cmd_event_experiment(a, sensitivity=False),
        "sensitivity": lambda a: _cmd_event_experiment(a, sensitivity=True),
        "session": _cmd_session,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except NUMERICAL_ERRORS as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2
    except VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
