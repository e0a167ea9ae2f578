"""Brain vascular age estimation from cerebral blood flow velocity waveforms.

A thin layer over the compiled pipeline: synthetic cohort generation,
pulse-morphology and HRV feature extraction, feature ranking, age
regression models, and brain-age-gap analytics. All stages mirror the
`vascage` command-line tool and read and write the same file formats.
"""

from ._native import (
    ExtractionRecord,
    FeatureMatrix,
    GapRecord,
    Model,
    Ranking,
    Split,
    SubjectFeatures,
    analyze_pulse,
    build_report_json,
    canonical_feature,
    compute_gaps,
    detect_pulse_onsets,
    detect_qrs,
    extract_cohort,
    feature_names,
    headline_features,
    hrv_metrics,
    manifest_names,
    rank_features,
    rr_intervals,
    split_healthy,
    synth_cohort,
    synth_features,
    train_model,
    write_report_bundle,
)

__all__ = [
    "ExtractionRecord",
    "FeatureMatrix",
    "GapRecord",
    "Model",
    "Ranking",
    "Split",
    "SubjectFeatures",
    "analyze_pulse",
    "build_report_json",
    "canonical_feature",
    "compute_gaps",
    "detect_pulse_onsets",
    "detect_qrs",
    "extract_cohort",
    "feature_names",
    "headline_features",
    "hrv_metrics",
    "manifest_names",
    "rank_features",
    "rr_intervals",
    "split_healthy",
    "synth_cohort",
    "synth_features",
    "train_model",
    "write_report_bundle",
]
