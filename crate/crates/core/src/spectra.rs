//! Eigenspectra, difference spectra, and WSED scoring.
//!
//! A WSED score is the exponentially weighted sum `sum_i v_i * alpha^(i-1)`
//! of a rank-ordered difference spectrum. Positive scores indicate a spectrum
//! more concentrated in its leading ranks than the reference (simpler
//! coordination); negative scores indicate a flatter one (more complex
//! coordination).

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoordinationMatrix, DifferenceSpectrum, Eigenspectrum, Trend};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsedConfig {
    pub alpha: f64,
    pub ambiguity_epsilon: f64,
    pub early_rank_count: usize,
}

impl Default for WsedConfig {
    fn default() -> Self {
        WsedConfig {
            alpha: 0.8,
            ambiguity_epsilon: 0.06,
            early_rank_count: 5,
        }
    }
}

impl WsedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.ambiguity_epsilon >= 0.0 && self.ambiguity_epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "ambiguity_epsilon must be non-negative, got {}",
                self.ambiguity_epsilon
            )));
        }
        if self.early_rank_count == 0 {
            return Err(Error::Config("early_rank_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Eigenvalues (descending) and matching unit eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigenpairs {
    /// Largest `||A q - lambda q||` over all pairs.
    pub fn max_residual(&self, a: &DMatrix<f64>) -> f64 {
        let mut worst = 0.0f64;
        for (k, &lambda) in self.values.iter().enumerate() {
            let q = self.vectors.column(k);
            let r: DVector<f64> = a * q - q * lambda;
            worst = worst.max(r.norm());
        }
        worst
    }
}

const MAX_SWEEPS: usize = 10_000;

/// Residual bound per matrix dimension accepted from the solver.
pub const RESIDUAL_TOL_PER_DIM: f64 = 1e-8;

/// Full symmetric eigendecomposition, sorted by descending eigenvalue.
pub fn symmetric_eigen(a: &DMatrix<f64>, label: &str) -> Result<Eigenpairs> {
    let n = a.nrows();
    let fail = |message: String| Error::EigenSolver {
        provenance: label.to_string(),
        message,
    };
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| fail(format!("no convergence within {MAX_SWEEPS} iterations")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let pairs = Eigenpairs { values, vectors };
    let residual = pairs.max_residual(a);
    if !(residual <= RESIDUAL_TOL_PER_DIM * n as f64) {
        return Err(fail(format!("eigenpair residual {residual:e} exceeds tolerance")));
    }
    Ok(pairs)
}

/// Eigenvalues of a coordination matrix, largest first.
pub fn eigenspectrum(m: &CoordinationMatrix) -> Result<Eigenspectrum> {
    let label = format!("{} spacing={}", m.provenance(), m.scale_spacing());
    let pairs = symmetric_eigen(m.entries(), &label)?;
    Eigenspectrum::new(pairs.values, label)
}

/// Joins per-scale spectra end to end, keeping each as its own block.
pub fn concat_scales(per_scale: &[Eigenspectrum]) -> Result<Eigenspectrum> {
    if per_scale.is_empty() {
        return Err(Error::Empty("no per-scale spectra to concatenate".into()));
    }
    if per_scale.len() == 1 {
        return Ok(per_scale[0].clone());
    }
    let mut values = Vec::new();
    let mut blocks = Vec::new();
    for s in per_scale {
        values.extend_from_slice(s.values());
        blocks.extend_from_slice(s.blocks());
    }
    let label = per_scale[0]
        .label()
        .split(" spacing=")
        .next()
        .unwrap_or_default()
        .to_string();
    Eigenspectrum::with_blocks(values, blocks, label)
}

/// Rank-wise mean, summed in input order.
pub fn average_spectra(spectra: &[Eigenspectrum]) -> Result<Eigenspectrum> {
    average_spectra_labeled(spectra, "mean")
}

pub fn average_spectra_labeled(spectra: &[Eigenspectrum], label: &str) -> Result<Eigenspectrum> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::Empty("cannot average zero spectra".into()))?;
    let mut sum = vec![0.0; first.len()];
    for (k, s) in spectra.iter().enumerate() {
        if s.len() != first.len() || s.blocks() != first.blocks() {
            return Err(Error::LengthMismatch(format!(
                "spectrum {k} has blocks {:?}, expected {:?}",
                s.blocks(),
                first.blocks()
            )));
        }
        for (acc, v) in sum.iter_mut().zip(s.values()) {
            *acc += v;
        }
    }
    let n = spectra.len() as f64;
    let values = sum.into_iter().map(|v| v / n).collect();
    Eigenspectrum::with_blocks(values, first.blocks().to_vec(), label)
}

/// `minuend - subtrahend`, rank by rank.
pub fn difference_spectrum(
    minuend: &Eigenspectrum,
    subtrahend: &Eigenspectrum,
) -> Result<DifferenceSpectrum> {
    if minuend.len() != subtrahend.len() {
        return Err(Error::LengthMismatch(format!(
            "{} has {} ranks, {} has {}",
            minuend.label(),
            minuend.len(),
            subtrahend.label(),
            subtrahend.len()
        )));
    }
    Ok(DifferenceSpectrum {
        values: minuend
            .values()
            .iter()
            .zip(subtrahend.values())
            .map(|(a, b)| a - b)
            .collect(),
        minuend: minuend.label().to_string(),
        subtrahend: subtrahend.label().to_string(),
    })
}

/// Weighted sum with exponential decay, accumulated from rank 1 upward.
pub fn wsed(v: &[f64], alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    let mut weight = 1.0;
    let mut acc = 0.0;
    for x in v {
        acc += x * weight;
        weight *= alpha;
    }
    acc
}

/// Divides by the largest absolute value. An all-zero input yields zeros
/// and a factor of 1.
pub fn normalize_scores(raw: &[f64]) -> (Vec<f64>, f64) {
    let max_abs = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let factor = if max_abs > 0.0 { max_abs } else { 1.0 };
    (raw.iter().map(|v| v / factor).collect(), factor)
}

/// Sign of the mean over the first `k` ranks. A zero mean counts as complex.
/// `k` is clamped to the spectrum length.
pub fn classify_trend_by_shape(d: &DifferenceSpectrum, k: usize) -> Trend {
    let k = k.min(d.len());
    if k == 0 {
        return Trend::Complex;
    }
    let mean = d.values[..k].iter().sum::<f64>() / k as f64;
    if mean > 0.0 {
        Trend::Simple
    } else {
        Trend::Complex
    }
}

pub fn classify_trend_by_wsed(normalized_wsed: f64, epsilon: f64) -> Trend {
    if normalized_wsed < -epsilon {
        Trend::Complex
    } else if normalized_wsed > epsilon {
        Trend::Simple
    } else {
        Trend::Ambiguous
    }
}

/// Segment scores of one session, in segment order.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionScores {
    pub session_id: String,
    pub segments: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectScores {
    pub subject_id: String,
    pub sessions: Vec<SessionScores>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionMean {
    pub subject_id: String,
    pub session_id: String,
    pub wsed: f64,
    pub n_segments: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectMean {
    pub subject_id: String,
    pub wsed: f64,
    pub n_sessions: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aggregate {
    pub sessions: Vec<SessionMean>,
    pub subjects: Vec<SubjectMean>,
    pub dropped_sessions: Vec<(String, String)>,
}

fn ordered_mean(values: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for v in values {
        sum += v;
        n += 1;
    }
    (sum / n as f64, n)
}

/// Session score = mean of its segments; subject score = mean of its
/// session scores. Sessions are visited in session_id order and segments in
/// segment-index order.
pub fn aggregate(subjects: &[SubjectScores]) -> Result<Aggregate> {
    let mut out = Aggregate::default();
    for subject in subjects {
        let mut sessions: Vec<&SessionScores> = subject.sessions.iter().collect();
        sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        let mut means = Vec::new();
        for session in sessions {
            if session.segments.is_empty() {
                warn!(
                    "{}/{}: no segments, session dropped",
                    subject.subject_id, session.session_id
                );
                out.dropped_sessions
                    .push((subject.subject_id.clone(), session.session_id.clone()));
                continue;
            }
            let mut segs = session.segments.clone();
            segs.sort_by_key(|&(i, _)| i);
            let (wsed, n_segments) = ordered_mean(segs.iter().map(|&(_, w)| w));
            means.push(wsed);
            out.sessions.push(SessionMean {
                subject_id: subject.subject_id.clone(),
                session_id: session.session_id.clone(),
                wsed,
                n_segments,
            });
        }
        if means.is_empty() {
            return Err(Error::Aggregation(format!(
                "subject {} has no session with segments",
                subject.subject_id
            )));
        }
        let (wsed, n_sessions) = ordered_mean(means);
        out.subjects.push(SubjectMean {
            subject_id: subject.subject_id.clone(),
            wsed,
            n_sessions,
        });
    }
    Ok(out)
}
