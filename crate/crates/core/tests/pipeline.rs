mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvcoord::cli::{cmd_reference, cmd_score, RunConfig};
use tvcoord::coordination::ChannelBlock;
use tvcoord::pipeline::segment_spectrum;
use tvcoord::report::{correlation, least_squares, SeverityField, SeverityPoint};
use tvcoord::simulate::{generate_signals, Regime, SimSpec};
use tvcoord::spectra::{aggregate, SessionScores, SubjectScores};
use tvcoord::{DelayConfig, FeatureTrack, Group, Trend};

use common::{bundled_cohort, counting_ranks, pearson_pairwise};

fn small_cfg() -> DelayConfig {
    DelayConfig::new(6, vec![1, 4], 100).unwrap()
}

fn channels_of(track: &FeatureTrack) -> Vec<Vec<f64>> {
    (0..track.n_channels()).map(|i| track.channel(i).to_vec()).collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "rank {i}: {x} vs {y}");
    }
}

#[test]
fn bundled_cohort_signs_follow_regime() {
    let dir = tempfile::tempdir().unwrap();
    let data = bundled_cohort();
    let cfg = RunConfig {
        output_dir: dir.path().to_path_buf(),
        ..RunConfig::load(&data.join("run.toml")).unwrap()
    };
    let manifest = data.join("manifest.csv");
    let reference = cmd_reference(&manifest, &cfg).unwrap();
    assert_eq!(reference.segments, 4);
    let summary = cmd_score(&manifest, &reference.path, &cfg).unwrap();
    assert!(summary.is_success());

    // truth.csv: SZ001-SZ002 erratic, SZ003-SZ004 simplified
    for rec in &summary.subject_records {
        let complex = rec.subject_id.as_str() <= "SZ002";
        assert_eq!(rec.wsed_raw < 0.0, complex, "{}", rec.subject_id);
        let want = if complex { Trend::Complex } else { Trend::Simple };
        assert_eq!(rec.trend_shape, want);
        assert_eq!(rec.trend_wsed, want);
    }
    let peak = summary
        .subject_records
        .iter()
        .fold(0.0f64, |m, r| m.max(r.wsed_normalized.abs()));
    assert_eq!(peak, 1.0);

    let points: Vec<SeverityPoint> = summary
        .subject_records
        .iter()
        .filter_map(SeverityPoint::from_record)
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.bprs_total).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.wsed_normalized).collect();
    let (_, slope) = least_squares(&xs, &ys).unwrap();
    assert!(slope < 0.0);
}

#[test]
fn equal_count_aggregation_matches_pooled_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let n_sessions = rng.random_range(1..5);
        let per_session = rng.random_range(1..6);
        let sessions: Vec<SessionScores> = (0..n_sessions)
            .map(|s| SessionScores {
                session_id: format!("s{s:02}"),
                segments: (0..per_session).map(|i| (i, rng.random_range(-3.0..3.0))).collect(),
            })
            .collect();
        let pooled: Vec<f64> = sessions.iter().flat_map(|s| s.segments.iter().map(|x| x.1)).collect();
        let mut want = 0.0;
        for v in &pooled {
            want += v;
        }
        want /= pooled.len() as f64;
        let agg = aggregate(&[SubjectScores {
            subject_id: "SZ001".into(),
            sessions,
        }])
        .unwrap();
        assert!((agg.subjects[0].wsed - want).abs() <= 1e-12);
    }
}

#[test]
fn spectrum_ignores_channel_order() {
    let cfg = small_cfg();
    for (k, regime) in Regime::ALL.into_iter().enumerate() {
        let spec = SimSpec {
            n_channels: 5,
            duration_s: 8.0,
            ..SimSpec::new(regime, 40 + k as u64)
        };
        let channels = channels_of(&generate_signals(&spec).unwrap());
        let mut permuted = channels.clone();
        permuted.rotate_left(2);
        permuted.swap(0, 4);
        let a = segment_spectrum(&ChannelBlock::new(channels), &cfg).unwrap();
        let b = segment_spectrum(&ChannelBlock::new(permuted), &cfg).unwrap();
        assert_close(a.values(), b.values(), 1e-9);
    }
}

#[test]
fn spectrum_ignores_time_reversal() {
    // Reversing time maps delay k onto delay D-1-k over the same frames.
    let cfg = small_cfg();
    for (k, regime) in Regime::ALL.into_iter().enumerate() {
        let spec = SimSpec {
            n_channels: 4,
            duration_s: 8.0,
            ..SimSpec::new(regime, 70 + k as u64)
        };
        let channels = channels_of(&generate_signals(&spec).unwrap());
        let reversed: Vec<Vec<f64>> = channels.iter().map(|c| c.iter().rev().copied().collect()).collect();
        let a = segment_spectrum(&ChannelBlock::new(channels), &cfg).unwrap();
        let b = segment_spectrum(&ChannelBlock::new(reversed), &cfg).unwrap();
        assert_close(a.values(), b.values(), 1e-9);
    }
}

#[test]
fn spectrum_ignores_affine_rescaling_of_channels() {
    let cfg = small_cfg();
    let spec = SimSpec {
        n_channels: 3,
        duration_s: 8.0,
        ..SimSpec::new(Regime::Natural, 91)
    };
    let channels = channels_of(&generate_signals(&spec).unwrap());
    let scaled: Vec<Vec<f64>> = channels
        .iter()
        .enumerate()
        .map(|(i, c)| c.iter().map(|v| (i as f64 + 0.5) * 40.0 * v - 7.0).collect())
        .collect();
    let a = segment_spectrum(&ChannelBlock::new(channels), &cfg).unwrap();
    let b = segment_spectrum(&ChannelBlock::new(scaled), &cfg).unwrap();
    assert_close(a.values(), b.values(), 1e-9);
}

#[test]
fn correlation_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points: Vec<SeverityPoint> = (0..50)
        .map(|i| {
            let total = rng.random_range(18.0..62.0);
            SeverityPoint {
                id: format!("SZ{i:03}"),
                wsed_normalized: -0.02 * total + rng.random_range(-0.5..0.5),
                bprs_total: total,
                bprs_pos_minus_neg: rng.random_range(-12.0..12.0f64).round(),
            }
        })
        .collect();
    for field in [SeverityField::BprsTotal, SeverityField::PosMinusNeg] {
        let stats = correlation(&points, field, SeverityField::Wsed).unwrap();
        let xs: Vec<f64> = points.iter().map(|p| field.get(p)).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.wsed_normalized).collect();
        assert_eq!(stats.n, 50);
        assert!((stats.pearson_r - pearson_pairwise(&xs, &ys)).abs() <= 1e-12);
        let rho = pearson_pairwise(&counting_ranks(&xs), &counting_ranks(&ys));
        assert!((stats.spearman_rho - rho).abs() <= 1e-12);
    }
}

fn small_track() -> impl Strategy<Value = (Vec<Vec<f64>>, f64)> {
    (2usize..5, 1usize..20).prop_flat_map(|(m, t)| {
        (
            prop::collection::vec(prop::collection::vec(-1e6..1e6f64, t), m),
            1.0..500.0f64,
        )
    })
}

proptest! {
    #[test]
    fn feature_track_json_round_trip((channels, rate) in small_track()) {
        let names = (0..channels.len()).map(|i| format!("tv{i}")).collect();
        let track = FeatureTrack::new("SZ001", "s01", Group::Sz, rate, names, channels).unwrap();
        let json = serde_json::to_string(&track).unwrap();
        let back: FeatureTrack = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, track);
    }
}

#[test]
fn feature_track_json_rejects_single_channel() {
    let json = r#"{"subject_id":"HC001","session_id":"s01","group":"HC","sample_rate_hz":100.0,
        "channel_names":["a"],"n_frames":3,"samples":[0.0,1.0,2.0]}"#;
    let err = serde_json::from_str::<FeatureTrack>(json).unwrap_err();
    assert!(err.to_string().contains("M >= 2"), "{err}");
}
