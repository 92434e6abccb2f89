//! Synthetic sine-wave coordination regimes and synthetic cohorts.
//!
//! Every channel is a sum of sinusoids at shared base frequencies with
//! per-channel phase offsets plus white noise:
//!
//! * simplified: each channel's phase is 0 or pi (channels are copies or
//!   inversions of one another);
//! * natural: each channel's phase is 0, pi/2, or pi;
//! * erratic: phases drawn uniformly from [0, 2pi) independently per channel
//!   and per frequency.
//!
//! All randomness flows from a ChaCha8 generator seeded by the spec's seed,
//! so a spec fully determines its output.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{self, CohortManifest, MANIFEST_COLUMNS};
use crate::model::{FeatureTrack, Group};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Simplified,
    Natural,
    Erratic,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Simplified, Regime::Natural, Regime::Erratic];
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Simplified => "simplified",
            Regime::Natural => "natural",
            Regime::Erratic => "erratic",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "simplified" => Ok(Regime::Simplified),
            "natural" => Ok(Regime::Natural),
            "erratic" => Ok(Regime::Erratic),
            other => Err(format!("unknown regime '{other}'")),
        }
    }
}

/// Four frequencies log-spaced over [0.5, 8] Hz.
pub fn default_base_freqs() -> Vec<f64> {
    let (lo, hi): (f64, f64) = (0.5, 8.0);
    (0..4)
        .map(|i| lo * (hi / lo).powf(i as f64 / 3.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub regime: Regime,
    pub n_channels: usize,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub base_freqs_hz: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl SimSpec {
    /// Eight channels, 40 s at 100 Hz, default frequencies, noise 0.05.
    pub fn new(regime: Regime, seed: u64) -> Self {
        SimSpec {
            regime,
            n_channels: 8,
            duration_s: 40.0,
            sample_rate_hz: 100.0,
            base_freqs_hz: default_base_freqs(),
            noise_std: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_channels < 2 {
            return bad(format!("n_channels must be >= 2, got {}", self.n_channels));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad(format!("sample rate must be positive, got {}", self.sample_rate_hz));
        }
        if self.base_freqs_hz.is_empty() || self.base_freqs_hz.iter().any(|f| !f.is_finite()) {
            return bad("at least one finite base frequency required".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be non-negative, got {}", self.noise_std));
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        ingest::window_frames(self.duration_s, self.sample_rate_hz)
    }
}

/// Phase offsets `[channel][frequency]` for one regime.
pub fn draw_phases<R: Rng + ?Sized>(
    regime: Regime,
    n_channels: usize,
    n_freqs: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n_channels)
        .map(|_| match regime {
            Regime::Simplified => vec![[0.0, PI][rng.random_range(0..2)]; n_freqs],
            Regime::Natural => vec![[0.0, FRAC_PI_2, PI][rng.random_range(0..3)]; n_freqs],
            Regime::Erratic => (0..n_freqs).map(|_| rng.random_range(0.0..TAU)).collect(),
        })
        .collect()
}

/// Sums of phase-shifted sinusoids plus Gaussian noise; noise is drawn
/// channel by channel, frame by frame.
pub fn synthesize<R: Rng + ?Sized>(
    phases: &[Vec<f64>],
    base_freqs_hz: &[f64],
    sample_rate_hz: f64,
    n_frames: usize,
    noise_std: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite noise std");
    phases
        .iter()
        .map(|channel_phases| {
            (0..n_frames)
                .map(|n| {
                    let t = n as f64 / sample_rate_hz;
                    let clean: f64 = base_freqs_hz
                        .iter()
                        .zip(channel_phases)
                        .map(|(f, phi)| (TAU * f * t + phi).sin())
                        .sum();
                    if noise_std > 0.0 {
                        clean + noise.sample(rng)
                    } else {
                        clean
                    }
                })
                .collect()
        })
        .collect()
}

pub fn channel_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("ch{i}")).collect()
}

/// One synthetic track. Natural-regime tracks are labelled HC, the others SZ.
pub fn generate_signals(spec: &SimSpec) -> Result<FeatureTrack> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phases = draw_phases(spec.regime, spec.n_channels, spec.base_freqs_hz.len(), &mut rng);
    let channels = synthesize(
        &phases,
        &spec.base_freqs_hz,
        spec.sample_rate_hz,
        spec.n_frames(),
        spec.noise_std,
        &mut rng,
    );
    let group = match spec.regime {
        Regime::Natural => Group::Hc,
        _ => Group::Sz,
    };
    FeatureTrack::new(
        format!("sim-{}", spec.regime),
        format!("seed{}", spec.seed),
        group,
        spec.sample_rate_hz,
        channel_names(spec.n_channels),
        channels,
    )
}

/// SplitMix64 finalizer over `root` and `index`; derives independent child
/// seeds from a root seed.
pub fn mix_seed(root: u64, index: u64) -> u64 {
    let mut z = root
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_hc: usize,
    pub n_complex: usize,
    pub n_simple: usize,
    pub segments_per_session: usize,
    pub sessions_per_subject: usize,
    pub seed: u64,
    pub window_seconds: f64,
    pub n_channels: usize,
    pub sample_rate_hz: f64,
    pub noise_std: f64,
}

impl CohortSpec {
    pub fn new(
        n_hc: usize,
        n_complex: usize,
        n_simple: usize,
        segments_per_session: usize,
        sessions_per_subject: usize,
        seed: u64,
    ) -> Self {
        CohortSpec {
            n_hc,
            n_complex,
            n_simple,
            segments_per_session,
            sessions_per_subject,
            seed,
            window_seconds: ingest::DEFAULT_WINDOW_SECONDS,
            n_channels: 8,
            sample_rate_hz: 100.0,
            noise_std: 0.05,
        }
    }
}

/// Ground truth for one generated subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub regime: Regime,
}

#[derive(Debug, Clone)]
pub struct GeneratedCohort {
    pub manifest: CohortManifest,
    pub truth: Vec<SubjectTruth>,
}

/// Synthetic BPRS (total, positive, negative) for one session. Totals rise
/// from natural to simplified to erratic; erratic subjects lean positive,
/// simplified subjects lean negative.
fn synthetic_bprs<R: Rng + ?Sized>(regime: Regime, rng: &mut R) -> (u32, u32, u32) {
    match regime {
        Regime::Natural => (rng.random_range(18..=24), rng.random_range(4..=6), rng.random_range(3..=5)),
        Regime::Simplified => (rng.random_range(28..=40), rng.random_range(4..=9), rng.random_range(10..=16)),
        Regime::Erratic => (rng.random_range(44..=62), rng.random_range(13..=20), rng.random_range(4..=8)),
    }
}

fn format_sample(v: f64) -> String {
    let s = format!("{v:.6}");
    // Avoid "-0.000000" so output depends only on the rounded value.
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Writes a track as a feature CSV.
pub fn write_feature_csv(track: &FeatureTrack, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", track.channel_names().join(",")).map_err(io)?;
    let mut line = String::new();
    for t in 0..track.n_frames() {
        line.clear();
        for c in 0..track.n_channels() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&format_sample(track.channel(c)[t]));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `manifest.csv`, `truth.csv`, and one feature CSV per session under
/// `out_dir/features/`.
pub fn generate_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<GeneratedCohort> {
    if spec.n_hc == 0
        || spec.n_complex == 0
        || spec.n_simple == 0
        || spec.segments_per_session == 0
        || spec.sessions_per_subject == 0
    {
        return Err(Error::Config("all cohort counts must be >= 1".into()));
    }
    let features = out_dir.join("features");
    fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;

    let mut subjects: Vec<(String, Regime)> = Vec::new();
    for i in 0..spec.n_hc {
        subjects.push((format!("HC{:03}", i + 1), Regime::Natural));
    }
    for i in 0..spec.n_complex + spec.n_simple {
        let regime = if i < spec.n_complex { Regime::Erratic } else { Regime::Simplified };
        subjects.push((format!("SZ{:03}", i + 1), regime));
    }

    let manifest_path = out_dir.join("manifest.csv");
    let mut manifest = MANIFEST_COLUMNS.join(",");
    manifest.push('\n');
    let mut truth_csv = String::from("subject_id,regime\n");
    let mut truth = Vec::new();
    let freqs = default_base_freqs();
    for (index, (subject_id, regime)) in subjects.iter().enumerate() {
        let subject_seed = mix_seed(spec.seed, index as u64);
        let group = if *regime == Regime::Natural { Group::Hc } else { Group::Sz };
        for s in 0..spec.sessions_per_subject {
            let session_id = format!("s{:02}", s + 1);
            let session_seed = mix_seed(subject_seed, s as u64);
            let sim = SimSpec {
                regime: *regime,
                n_channels: spec.n_channels,
                duration_s: spec.window_seconds * spec.segments_per_session as f64,
                sample_rate_hz: spec.sample_rate_hz,
                base_freqs_hz: freqs.clone(),
                noise_std: spec.noise_std,
                seed: session_seed,
            };
            let track = generate_signals(&sim)?.relabel(subject_id.clone(), session_id.clone(), group);
            let file_name = format!("{subject_id}_{session_id}.csv");
            write_feature_csv(&track, &features.join(&file_name))?;

            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(session_seed, u64::MAX));
            let (total, pos, neg) = synthetic_bprs(*regime, &mut rng);
            manifest.push_str(&format!(
                "{subject_id},{session_id},{group},{},features/{file_name},{total},{pos},{neg}\n",
                spec.sample_rate_hz
            ));
        }
        truth_csv.push_str(&format!("{subject_id},{regime}\n"));
        truth.push(SubjectTruth {
            subject_id: subject_id.clone(),
            regime: *regime,
        });
    }
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    let truth_path = out_dir.join("truth.csv");
    fs::write(&truth_path, truth_csv).map_err(|e| Error::io(&truth_path, e))?;

    Ok(GeneratedCohort {
        manifest: ingest::load_manifest(&manifest_path)?,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn antiphase_channels_are_negated() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ch = synthesize(&[vec![0.0], vec![PI]], &[2.0], 100.0, 500, 0.0, &mut rng);
        for (a, b) in ch[0].iter().zip(&ch[1]) {
            assert!((a + b).abs() < 1e-12);
        }
        assert!((pearson(&ch[0], &ch[1]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_pair_is_uncorrelated() {
        // 2 Hz over 5 s at 100 Hz: ten whole periods.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ch = synthesize(&[vec![0.0], vec![FRAC_PI_2]], &[2.0], 100.0, 500, 0.0, &mut rng);
        assert!(pearson(&ch[0], &ch[1]).abs() < 1e-6);
    }

    #[test]
    fn same_seed_same_track() {
        for regime in Regime::ALL {
            let spec = SimSpec { duration_s: 5.0, ..SimSpec::new(regime, 42) };
            let a = generate_signals(&spec).unwrap();
            let b = generate_signals(&spec).unwrap();
            assert_eq!(a, b);
            let c = generate_signals(&SimSpec { seed: 43, ..spec }).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn phase_sets_per_regime() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for row in draw_phases(Regime::Simplified, 50, 3, &mut rng) {
            assert!(row.iter().all(|p| *p == row[0] && (*p == 0.0 || *p == PI)));
        }
        for row in draw_phases(Regime::Natural, 50, 3, &mut rng) {
            assert!(row.iter().all(|p| *p == row[0] && [0.0, FRAC_PI_2, PI].contains(p)));
        }
        let erratic = draw_phases(Regime::Erratic, 50, 3, &mut rng);
        assert!(erratic.iter().flatten().all(|p| (0.0..TAU).contains(p)));
        assert!(erratic.iter().any(|row| row[0] != row[1]));
    }

    #[test]
    fn default_frequencies() {
        let f = default_base_freqs();
        assert_eq!(f.len(), 4);
        assert!((f[0] - 0.5).abs() < 1e-12 && (f[3] - 8.0).abs() < 1e-12);
        assert!((f[1] / f[0] - f[2] / f[1]).abs() < 1e-12);
    }

    #[test]
    fn seed_mixing_separates_children() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| mix_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(mix_seed(7, 0), mix_seed(8, 0));
    }

    #[test]
    fn sample_formatting_has_no_negative_zero() {
        assert_eq!(format_sample(-0.0000001), "0.000000");
        assert_eq!(format_sample(-0.5), "-0.500000");
    }

    #[test]
    fn cohort_cardinality() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CohortSpec {
            window_seconds: 4.0,
            ..CohortSpec::new(1, 1, 1, 1, 1, 7)
        };
        let cohort = generate_cohort(&spec, dir.path()).unwrap();
        assert_eq!(cohort.manifest.rows.len(), 3);
        assert_eq!(fs::read_dir(dir.path().join("features")).unwrap().count(), 3);
        let regimes: Vec<Regime> = cohort.truth.iter().map(|t| t.regime).collect();
        assert_eq!(regimes, vec![Regime::Natural, Regime::Erratic, Regime::Simplified]);
        assert!(cohort.manifest.rows.iter().all(|r| r.bprs_total.is_some()));
        assert!(matches!(generate_cohort(&CohortSpec::new(0, 1, 1, 1, 1, 7), dir.path()), Err(Error::Config(_))));
    }
}
