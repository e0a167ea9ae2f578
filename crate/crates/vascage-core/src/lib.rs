//! Brain vascular age estimation from transcranial Doppler recordings.
//!
//! The pipeline runs in stages: load and resample bilateral cerebral blood
//! flow velocity (CBFV) recordings ([`ingest`]), detect heartbeats and pulse
//! onsets ([`beats`]), reduce each 360-beat entry to a dominant pulse
//! ([`pulse`]), evaluate a fixed manifest of morphological and heart rate
//! variability features ([`features`]), rank features by between-group
//! variance ([`ranking`]), fit age regressors with balanced sample weights
//! ([`models`]), and summarise predicted-minus-chronological age gaps
//! ([`analytics`]). The [`synth`] module generates cohorts with known ground
//! truth so every stage can be checked end to end.

pub mod analytics;
pub mod beats;
pub mod features;
pub mod fsio;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod pulse;
pub mod ranking;
pub mod report;
pub mod synth;

pub use ingest::{Recording, Side};
