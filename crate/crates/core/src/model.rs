//! Domain types shared by every pipeline stage.
//!
//! Everything here is immutable once constructed; constructors validate and
//! reject rather than repair.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const DIAGONAL_TOL: f64 = 1e-12;
pub const RANGE_TOL: f64 = 1e-9;
/// Per-dimension slack on the smallest admissible eigenvalue.
pub const PSD_TOL_PER_DIM: f64 = 1e-8;

/// Cohort membership of a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "SZ")]
    Sz,
    #[serde(rename = "HC")]
    Hc,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Sz => "SZ",
            Group::Hc => "HC",
        })
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "SZ" => Ok(Group::Sz),
            "HC" => Ok(Group::Hc),
            other => Err(format!("unknown group '{other}' (expected SZ or HC)")),
        }
    }
}

/// BPRS ratings attached to a session, or averaged over a subject's sessions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Bprs {
    pub total: Option<f64>,
    pub positive: Option<f64>,
    pub negative: Option<f64>,
}

impl Bprs {
    pub fn pos_minus_neg(&self) -> Option<f64> {
        Some(self.positive? - self.negative?)
    }

    /// Field-wise mean; a field is present only if every input carries it.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Bprs>) -> Bprs {
        let items: Vec<&Bprs> = items.into_iter().collect();
        let field = |get: fn(&Bprs) -> Option<f64>| -> Option<f64> {
            if items.is_empty() {
                return None;
            }
            let mut sum = 0.0;
            for b in &items {
                sum += get(b)?;
            }
            Some(sum / items.len() as f64)
        };
        Bprs {
            total: field(|b| b.total),
            positive: field(|b| b.positive),
            negative: field(|b| b.negative),
        }
    }
}

/// One session's multichannel feature time series.
///
/// Samples are stored channel-major: channel `i` occupies
/// `samples[i * n_frames .. (i + 1) * n_frames]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureTrackRepr")]
pub struct FeatureTrack {
    subject_id: String,
    session_id: String,
    group: Group,
    sample_rate_hz: f64,
    channel_names: Vec<String>,
    n_frames: usize,
    samples: Vec<f64>,
}

#[derive(Deserialize)]
struct FeatureTrackRepr {
    subject_id: String,
    session_id: String,
    group: Group,
    sample_rate_hz: f64,
    channel_names: Vec<String>,
    n_frames: usize,
    samples: Vec<f64>,
}

impl TryFrom<FeatureTrackRepr> for FeatureTrack {
    type Error = Error;

    fn try_from(r: FeatureTrackRepr) -> Result<Self> {
        if r.n_frames == 0 || r.samples.len() != r.channel_names.len() * r.n_frames {
            return Err(Error::InvalidTrack(format!(
                "{} samples do not form {} channels of {} frames",
                r.samples.len(),
                r.channel_names.len(),
                r.n_frames
            )));
        }
        FeatureTrack::new(
            r.subject_id,
            r.session_id,
            r.group,
            r.sample_rate_hz,
            r.channel_names,
            r.samples
                .chunks(r.n_frames)
                .map(<[f64]>::to_vec)
                .collect(),
        )
    }
}

impl FeatureTrack {
    /// Builds a track from one sample vector per channel.
    pub fn new(
        subject_id: impl Into<String>,
        session_id: impl Into<String>,
        group: Group,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
        channels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let m = channel_names.len();
        if m < 2 {
            return Err(Error::InvalidTrack(format!(
                "M >= 2 required, got {m} channel(s)"
            )));
        }
        if channels.len() != m {
            return Err(Error::InvalidTrack(format!(
                "{} channel names but {} channels",
                m,
                channels.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidTrack(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        let mut seen = HashSet::new();
        for name in &channel_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidTrack(format!("duplicate channel name '{name}'")));
            }
        }
        let n_frames = channels[0].len();
        if n_frames == 0 {
            return Err(Error::InvalidTrack("T >= 1 required".into()));
        }
        let mut samples = Vec::with_capacity(m * n_frames);
        for (name, ch) in channel_names.iter().zip(&channels) {
            if ch.len() != n_frames {
                return Err(Error::InvalidTrack(format!(
                    "channel '{name}' has {} frames, expected {n_frames}",
                    ch.len()
                )));
            }
            if let Some(frame) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidTrack(format!(
                    "non-finite sample in channel '{name}' at frame {frame}"
                )));
            }
            samples.extend_from_slice(ch);
        }
        Ok(FeatureTrack {
            subject_id: subject_id.into(),
            session_id: session_id.into(),
            group,
            sample_rate_hz,
            channel_names,
            n_frames,
            samples,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.samples[i * self.n_frames..(i + 1) * self.n_frames]
    }

    /// Same samples under different identifiers.
    pub fn relabel(
        mut self,
        subject_id: impl Into<String>,
        session_id: impl Into<String>,
        group: Group,
    ) -> Self {
        self.subject_id = subject_id.into();
        self.session_id = session_id.into();
        self.group = group;
        self
    }
}

/// Delay-embedding structure shared by every coordination matrix of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayConfig {
    pub delays_per_channel: usize,
    pub scale_spacings: Vec<usize>,
    pub min_valid_window: usize,
}

impl Default for DelayConfig {
    fn default() -> Self {
        DelayConfig {
            delays_per_channel: 15,
            scale_spacings: vec![1, 3, 7, 15],
            min_valid_window: 100,
        }
    }
}

impl DelayConfig {
    pub fn new(
        delays_per_channel: usize,
        scale_spacings: Vec<usize>,
        min_valid_window: usize,
    ) -> Result<Self> {
        let cfg = DelayConfig {
            delays_per_channel,
            scale_spacings,
            min_valid_window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delays_per_channel == 0 {
            return Err(Error::InvalidDelayConfig("delays_per_channel must be >= 1".into()));
        }
        if self.scale_spacings.is_empty() {
            return Err(Error::InvalidDelayConfig("at least one scale spacing required".into()));
        }
        if self.scale_spacings.contains(&0) {
            return Err(Error::InvalidDelayConfig("scale spacings must be >= 1".into()));
        }
        if self.min_valid_window == 0 {
            return Err(Error::InvalidDelayConfig("min_valid_window must be >= 1".into()));
        }
        Ok(())
    }

    /// Frames spanned by the delays at one spacing, beyond the first copy.
    pub fn span(&self, spacing: usize) -> usize {
        (self.delays_per_channel - 1) * spacing
    }

    /// Common valid window `L - (D-1)*spacing` for a segment of `len` frames.
    pub fn valid_window(&self, len: usize, spacing: usize) -> Result<usize> {
        let required = self.span(spacing) + self.min_valid_window;
        if len < required {
            return Err(Error::WindowTooShort {
                spacing,
                required,
                available: len,
            });
        }
        Ok(len - self.span(spacing))
    }

    pub fn matrix_dim(&self, n_channels: usize) -> usize {
        n_channels * self.delays_per_channel
    }

    /// Length of a spectrum concatenated across all configured scales.
    pub fn spectrum_len(&self, n_channels: usize) -> usize {
        self.matrix_dim(n_channels) * self.scale_spacings.len()
    }
}

/// Where a matrix or spectrum came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub subject_id: String,
    pub session_id: String,
    pub segment_index: Option<usize>,
}

impl Provenance {
    pub fn new(
        subject_id: impl Into<String>,
        session_id: impl Into<String>,
        segment_index: Option<usize>,
    ) -> Self {
        Provenance {
            subject_id: subject_id.into(),
            session_id: session_id.into(),
            segment_index,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.subject_id, self.session_id)?;
        if let Some(i) = self.segment_index {
            write!(f, "#{i}")?;
        }
        Ok(())
    }
}

/// Symmetric channel-delay correlation matrix of one segment at one spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoordinationMatrixRepr")]
pub struct CoordinationMatrix {
    scale_spacing: usize,
    valid_frames: usize,
    entries: DMatrix<f64>,
    provenance: Provenance,
}

#[derive(Deserialize)]
struct CoordinationMatrixRepr {
    scale_spacing: usize,
    valid_frames: usize,
    entries: DMatrix<f64>,
    provenance: Provenance,
}

impl TryFrom<CoordinationMatrixRepr> for CoordinationMatrix {
    type Error = Error;

    fn try_from(r: CoordinationMatrixRepr) -> Result<Self> {
        CoordinationMatrix::new(r.entries, r.scale_spacing, r.valid_frames, r.provenance)
    }
}

impl CoordinationMatrix {
    /// Validates symmetry, unit diagonal, entry range, and positive
    /// semidefiniteness.
    pub fn new(
        entries: DMatrix<f64>,
        scale_spacing: usize,
        valid_frames: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let reject = |message: String| Error::InvalidMatrix {
            provenance: provenance.to_string(),
            message,
        };
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(reject(format!(
                "expected a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for i in 0..n {
            let d = entries[(i, i)];
            if !d.is_finite() || (d - 1.0).abs() > DIAGONAL_TOL {
                return Err(reject(format!("diagonal entry {i} is {d}, expected 1")));
            }
            for j in 0..n {
                let v = entries[(i, j)];
                if !v.is_finite() || v.abs() > 1.0 + RANGE_TOL {
                    return Err(reject(format!("entry ({i},{j}) = {v} outside [-1, 1]")));
                }
                if j > i && (v - entries[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(reject(format!(
                        "asymmetric at ({i},{j}): {v} vs {}",
                        entries[(j, i)]
                    )));
                }
            }
        }
        // PSD within tolerance iff the shifted matrix admits a Cholesky factor.
        let shift = PSD_TOL_PER_DIM * n as f64;
        let shifted = &entries + DMatrix::<f64>::identity(n, n) * shift;
        if Cholesky::new(shifted).is_none() {
            return Err(reject(format!(
                "not positive semidefinite (smallest eigenvalue below -{shift:e})"
            )));
        }
        Ok(CoordinationMatrix {
            scale_spacing,
            valid_frames,
            entries,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn scale_spacing(&self) -> usize {
        self.scale_spacing
    }

    /// Length of the common window the correlations were taken over.
    pub fn valid_frames(&self) -> usize {
        self.valid_frames
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

/// Eigenvalues in non-increasing order, one block per delay scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EigenspectrumRepr")]
pub struct Eigenspectrum {
    values: Vec<f64>,
    blocks: Vec<usize>,
    label: String,
}

#[derive(Deserialize)]
struct EigenspectrumRepr {
    values: Vec<f64>,
    blocks: Vec<usize>,
    label: String,
}

impl TryFrom<EigenspectrumRepr> for Eigenspectrum {
    type Error = Error;

    fn try_from(r: EigenspectrumRepr) -> Result<Self> {
        Eigenspectrum::with_blocks(r.values, r.blocks, r.label)
    }
}

impl Eigenspectrum {
    /// A single-block spectrum.
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let n = values.len();
        Self::with_blocks(values, vec![n], label)
    }

    /// A spectrum whose consecutive blocks (lengths in `blocks`) are each
    /// sorted non-increasing.
    pub fn with_blocks(values: Vec<f64>, blocks: Vec<usize>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        if blocks.iter().sum::<usize>() != values.len() || blocks.contains(&0) {
            return Err(Error::InvalidSpectrum(format!(
                "block lengths {blocks:?} do not partition {} values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("non-finite value at rank {}", i + 1)));
        }
        let mut start = 0;
        for &len in &blocks {
            let block = &values[start..start + len];
            if let Some(i) = block.windows(2).position(|w| w[1] > w[0]) {
                return Err(Error::InvalidSpectrum(format!(
                    "block starting at rank {} not sorted non-increasing at offset {}",
                    start + 1,
                    i + 1
                )));
            }
            start += len;
        }
        Ok(Eigenspectrum {
            values,
            blocks,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Rank-wise `minuend - subtrahend`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceSpectrum {
    pub values: Vec<f64>,
    pub minuend: String,
    pub subtrahend: String,
}

impl DifferenceSpectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Segment,
    Session,
    Subject,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Segment => "segment",
            Level::Session => "session",
            Level::Subject => "subject",
        })
    }
}

/// Coordination trend label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Complex,
    Simple,
    Ambiguous,
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::Complex => "complex",
            Trend::Simple => "simple",
            Trend::Ambiguous => "ambiguous",
        })
    }
}

impl FromStr for Trend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "complex" => Ok(Trend::Complex),
            "simple" => Ok(Trend::Simple),
            "ambiguous" => Ok(Trend::Ambiguous),
            other => Err(format!("unknown trend '{other}'")),
        }
    }
}

/// A WSED score at one aggregation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub level: Level,
    pub subject_id: String,
    pub session_id: Option<String>,
    pub segment_index: Option<usize>,
    pub wsed_raw: f64,
    pub wsed_normalized: f64,
    pub trend_shape: Trend,
    pub trend_wsed: Trend,
    pub bprs: Bprs,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn track_rejects_single_channel() {
        let err = FeatureTrack::new("s", "x", Group::Sz, 100.0, names(1), vec![vec![1.0]]).unwrap_err();
        assert!(err.to_string().contains("M >= 2"));
    }

    #[test]
    fn track_rejects_duplicate_names_and_nan() {
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(FeatureTrack::new("s", "x", Group::Sz, 100.0, dup, vec![vec![1.0], vec![2.0]]).is_err());
        let nan = FeatureTrack::new("s", "x", Group::Hc, 100.0, names(2), vec![vec![1.0], vec![f64::NAN]]);
        assert!(nan.is_err());
    }

    #[test]
    fn track_channel_access_preserves_order() {
        let t = FeatureTrack::new(
            "s",
            "x",
            Group::Hc,
            50.0,
            names(3),
            vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
        )
        .unwrap();
        assert_eq!(t.n_frames(), 2);
        assert_eq!(t.channel(1), &[3.0, 4.0]);
        assert_eq!(t.channel_names()[2], "c2");
    }

    #[test]
    fn matrix_constructor_rejects_each_violation() {
        let p = Provenance::default();
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(CoordinationMatrix::new(ok, 1, 10, p.clone()).is_ok());

        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(CoordinationMatrix::new(asym, 1, 10, p.clone()).is_err());

        let diag = DMatrix::from_row_slice(2, 2, &[1.1, 0.5, 0.5, 1.0]);
        assert!(CoordinationMatrix::new(diag, 1, 10, p.clone()).is_err());

        let range = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(CoordinationMatrix::new(range, 1, 10, p.clone()).is_err());

        // In range and symmetric, but (1,-1,1) is an eigenvector with eigenvalue -0.8.
        let indefinite = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0],
        );
        let err = CoordinationMatrix::new(indefinite, 1, 10, p).unwrap_err();
        assert!(err.to_string().contains("semidefinite"));
    }

    #[test]
    fn spectrum_blocks_must_be_sorted() {
        assert!(Eigenspectrum::with_blocks(vec![2.0, 0.0, 1.0, 1.0], vec![2, 2], "a").is_ok());
        assert!(Eigenspectrum::with_blocks(vec![2.0, 0.0, 0.5, 1.0], vec![2, 2], "a").is_err());
        assert!(Eigenspectrum::with_blocks(vec![2.0, 0.0], vec![3], "a").is_err());
        assert!(Eigenspectrum::new(vec![], "a").is_err());
    }

    #[test]
    fn group_parsing() {
        assert_eq!("SZ".parse::<Group>().unwrap(), Group::Sz);
        assert!("DEP".parse::<Group>().unwrap_err().contains("unknown group"));
    }

    #[test]
    fn bprs_mean_requires_every_field() {
        let a = Bprs { total: Some(30.0), positive: Some(10.0), negative: None };
        let b = Bprs { total: Some(40.0), positive: Some(6.0), negative: Some(4.0) };
        let m = Bprs::mean([&a, &b]);
        assert_eq!(m.total, Some(35.0));
        assert_eq!(m.positive, Some(8.0));
        assert_eq!(m.negative, None);
        assert_eq!(b.pos_minus_neg(), Some(2.0));
    }
}
