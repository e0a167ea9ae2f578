//! Synthetic cohorts with exact ground truth: an analytic pulse model whose
//! landmark positions are closed-form, a beat-train synthesizer with a
//! matched ECG, and a cohort planner that scales the study shape to any
//! configuration.

mod cohort;
mod model;
mod recording;

pub use cohort::{plan_cohort, synth_cohort, CohortConfig, CohortTruth, GroupSpec};
pub use model::{
    landmark_truth, pulse_params, LandmarkTruth, PulseModelParams, LANDMARK_COUNT, T_REF,
};
pub use recording::{
    synth_ecg, synth_recording, RecordingTruth, Result, SubjectSpec, SynthError,
    ECG_NOISE_DIVISOR, LEAD_IN_S, QRS_LEAD_S, RIGHT_GAIN,
};
