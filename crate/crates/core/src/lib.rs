//! Articulatory coordination biomarkers from multichannel feature tracks.
//!
//! The pipeline windows each session's feature track into fixed-length
//! segments, builds channel-delay correlation matrices at several delay
//! spacings, and reduces each matrix to its descending eigenspectrum.
//! Healthy-control spectra are pooled into a reference; every other segment,
//! session, and subject is scored by the weighted sum with exponential decay
//! (WSED) of its difference from that reference.

pub mod cli;
pub mod coordination;
pub mod error;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod simulate;
pub mod spectra;

pub use error::{Error, Result};
pub use model::{
    Bprs, CoordinationMatrix, DelayConfig, DifferenceSpectrum, Eigenspectrum, FeatureTrack, Group,
    Level, Provenance, ScoreRecord, Trend,
};
