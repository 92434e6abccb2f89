//! Channel-delay correlation matrices.
//!
//! Each channel is expanded into `D` delayed copies spaced `spacing` frames
//! apart. Row `i * D + k` of the delayed ensemble is channel `i` read `k *
//! spacing` frames later, restricted to the window common to all copies. The
//! coordination matrix is the sample correlation matrix of that ensemble.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{CoordinationMatrix, DelayConfig, FeatureTrack, Provenance};

/// Read access to equally long channels.
pub trait MultiChannel {
    fn n_channels(&self) -> usize;
    fn n_frames(&self) -> usize;
    fn channel(&self, i: usize) -> &[f64];
    fn channel_name(&self, i: usize) -> &str;
    fn provenance(&self) -> Provenance;
}

/// Owned channels with no track invariants attached. Useful for
/// single-channel inputs and ad-hoc signals.
#[derive(Debug, Clone)]
pub struct ChannelBlock {
    pub names: Vec<String>,
    pub channels: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl ChannelBlock {
    /// Panics if the channels differ in length.
    pub fn new(channels: Vec<Vec<f64>>) -> Self {
        let n = channels.first().map_or(0, Vec::len);
        assert!(channels.iter().all(|c| c.len() == n), "ragged channels");
        ChannelBlock {
            names: (0..channels.len()).map(|i| format!("ch{i}")).collect(),
            channels,
            provenance: Provenance::default(),
        }
    }
}

impl MultiChannel for ChannelBlock {
    fn n_channels(&self) -> usize {
        self.channels.len()
    }

    fn n_frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    fn channel_name(&self, i: usize) -> &str {
        &self.names[i]
    }

    fn provenance(&self) -> Provenance {
        self.provenance.clone()
    }
}

impl MultiChannel for FeatureTrack {
    fn n_channels(&self) -> usize {
        FeatureTrack::n_channels(self)
    }

    fn n_frames(&self) -> usize {
        FeatureTrack::n_frames(self)
    }

    fn channel(&self, i: usize) -> &[f64] {
        FeatureTrack::channel(self, i)
    }

    fn channel_name(&self, i: usize) -> &str {
        &self.channel_names()[i]
    }

    fn provenance(&self) -> Provenance {
        Provenance::new(self.subject_id(), self.session_id(), None)
    }
}

/// Borrowed rows of the delayed ensemble, in (channel-major, delay-minor)
/// order, each `valid_window` frames long.
pub fn ensemble_rows<'a, S: MultiChannel + ?Sized>(
    segment: &'a S,
    cfg: &DelayConfig,
    spacing: usize,
) -> Result<Vec<&'a [f64]>> {
    let valid = cfg.valid_window(segment.n_frames(), spacing)?;
    let mut rows = Vec::with_capacity(cfg.matrix_dim(segment.n_channels()));
    for i in 0..segment.n_channels() {
        let ch = segment.channel(i);
        for k in 0..cfg.delays_per_channel {
            let off = k * spacing;
            rows.push(&ch[off..off + valid]);
        }
    }
    Ok(rows)
}

/// The `(M*D) x T'` delayed ensemble as a dense matrix.
pub fn delayed_ensemble<S: MultiChannel + ?Sized>(
    segment: &S,
    cfg: &DelayConfig,
    spacing: usize,
) -> Result<DMatrix<f64>> {
    let rows = ensemble_rows(segment, cfg, spacing)?;
    let cols = rows.first().map_or(0, |r| r.len());
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

/// Relative floor below which a row counts as constant.
const ZERO_VARIANCE_REL: f64 = 1e-10;

/// Correlation matrix of the delayed ensemble at one spacing.
///
/// Rows are standardized over the common window and the result is the Gram
/// product divided by `T' - 1`, so it is symmetric, unit-diagonal, and PSD up
/// to round-off.
pub fn build_fvtc<S: MultiChannel + ?Sized>(
    segment: &S,
    cfg: &DelayConfig,
    spacing: usize,
) -> Result<CoordinationMatrix> {
    let rows = ensemble_rows(segment, cfg, spacing)?;
    let valid = rows[0].len();
    let dim = rows.len();
    let provenance = segment.provenance();
    if valid < 2 {
        return Err(Error::WindowTooShort {
            spacing,
            required: cfg.span(spacing) + 2,
            available: segment.n_frames(),
        });
    }
    let denom = (valid - 1) as f64;

    // Column j of `z` is standardized ensemble row j, so z^T z is the Gram
    // matrix of the rows.
    let mut z = DMatrix::<f64>::zeros(valid, dim);
    for (j, row) in rows.iter().enumerate() {
        let mean = row.iter().sum::<f64>() / valid as f64;
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / denom).sqrt();
        if !(sd > ZERO_VARIANCE_REL * scale) {
            return Err(Error::ZeroVariance {
                provenance: provenance.to_string(),
                channel: segment
                    .channel_name(j / cfg.delays_per_channel)
                    .to_string(),
                delay: j % cfg.delays_per_channel,
            });
        }
        for (dst, v) in z.column_mut(j).iter_mut().zip(row.iter()) {
            *dst = (v - mean) / sd;
        }
    }

    let mut corr = (z.transpose() * &z) / denom;
    for a in 0..dim {
        for b in a + 1..dim {
            let v = 0.5 * (corr[(a, b)] + corr[(b, a)]);
            corr[(a, b)] = v;
            corr[(b, a)] = v;
        }
    }
    CoordinationMatrix::new(corr, spacing, valid, provenance)
}

/// One matrix per configured spacing, in configuration order.
pub fn build_all_scales<S: MultiChannel + ?Sized>(
    segment: &S,
    cfg: &DelayConfig,
) -> Result<Vec<CoordinationMatrix>> {
    cfg.scale_spacings
        .iter()
        .map(|&spacing| build_fvtc(segment, cfg, spacing))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(d: usize, min_valid: usize) -> DelayConfig {
        DelayConfig::new(d, vec![1], min_valid).unwrap()
    }

    #[test]
    fn ensemble_single_channel_unrolled() {
        let block = ChannelBlock::new(vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let e = delayed_ensemble(&block, &cfg(2, 1), 1).unwrap();
        assert_eq!(e.nrows(), 2);
        assert_eq!(e.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(e.row(1).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn ensemble_with_one_delay_is_identity() {
        let block = ChannelBlock::new(vec![vec![1.0, 5.0, 2.0], vec![0.0, -1.0, 7.0]]);
        let e = delayed_ensemble(&block, &DelayConfig::new(1, vec![9], 1).unwrap(), 9).unwrap();
        assert_eq!(e, DMatrix::from_row_slice(2, 3, &[1.0, 5.0, 2.0, 0.0, -1.0, 7.0]));
    }

    #[test]
    fn valid_window_arithmetic() {
        let c = DelayConfig::default();
        assert_eq!(c.valid_window(4000, 7).unwrap(), 3902);
        let err = c.valid_window(150, 7).unwrap_err();
        assert!(matches!(err, Error::WindowTooShort { required: 198, available: 150, .. }));
    }

    #[test]
    fn identical_channels_give_all_ones() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 11) as f64).collect();
        let block = ChannelBlock::new(vec![x.clone(), x]);
        let m = build_fvtc(&block, &cfg(1, 10), 1).unwrap();
        for v in m.entries().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_is_zero_variance() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        let block = ChannelBlock::new(vec![x, vec![0.1; 200]]);
        let err = build_fvtc(&block, &cfg(3, 10), 2).unwrap_err();
        match err {
            Error::ZeroVariance { channel, delay, .. } => {
                assert_eq!(channel, "ch1");
                assert_eq!(delay, 0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn sine_lag_one_correlation() {
        // 5 Hz at 100 Hz over exactly five periods of common window; the
        // frozen value comes from a scalar two-pass Pearson loop.
        let x: Vec<f64> = (0..101)
            .map(|n| (2.0 * std::f64::consts::PI * 5.0 * n as f64 / 100.0).sin())
            .collect();
        let block = ChannelBlock::new(vec![x]);
        let m = build_fvtc(&block, &cfg(2, 10), 1).unwrap();
        let r = m.entries()[(0, 1)];
        assert!((r - SINE_LAG1_PEARSON).abs() < 1e-12, "{r}");
        assert!((r - (0.1 * std::f64::consts::PI).cos()).abs() < 1e-3);
    }

    const SINE_LAG1_PEARSON: f64 = 0.951_056_516_295_153_4;

    #[test]
    fn matrix_invariants_on_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chans: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..600).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        let block = ChannelBlock::new(chans);
        let m = build_fvtc(&block, &DelayConfig::new(5, vec![3], 100).unwrap(), 3).unwrap();
        assert_eq!(m.dim(), 20);
        assert_eq!(m.valid_frames(), 600 - 12);
        let e = m.entries();
        for a in 0..20 {
            assert!((e[(a, a)] - 1.0).abs() < 1e-12);
            for b in 0..20 {
                assert_eq!(e[(a, b)], e[(b, a)]);
            }
        }
    }

    #[test]
    fn shift_structure_single_channel() {
        // White noise: entry (k, l) depends only on |k - l|, up to boundary
        // effects of order D*spacing/T'.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..3200).map(|_| rng.random::<f64>() - 0.5).collect();
        let c = DelayConfig::new(6, vec![2], 100).unwrap();
        let m = build_fvtc(&ChannelBlock::new(vec![x]), &c, 2).unwrap();
        let e = m.entries();
        for lag in 0..6 {
            let first = e[(0, lag)];
            for k in 0..6 - lag {
                assert!((e[(k, k + lag)] - first).abs() < 0.05);
            }
        }
    }
}
