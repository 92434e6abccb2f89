//! Segment-to-spectrum plumbing shared by the commands and the simulation
//! checks.
//!
//! Work is fanned out over (segment, scale) tasks on a rayon pool; results
//! are collected by task index, so output never depends on worker count.

use rayon::prelude::*;

use crate::coordination::{build_fvtc, MultiChannel};
use crate::error::{Error, Result};
use crate::ingest::Segment;
use crate::model::{DelayConfig, Eigenspectrum};
use crate::simulate::{generate_signals, mix_seed, Regime, SimSpec};
use crate::spectra::{average_spectra_labeled, concat_scales, eigenspectrum};

/// Runs `f` on a pool of `parallelism` workers (0 = one per core).
pub fn with_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Concatenated multi-scale eigenspectrum of one segment.
pub fn segment_spectrum<S: MultiChannel + Sync + ?Sized>(
    segment: &S,
    cfg: &DelayConfig,
) -> Result<Eigenspectrum> {
    let per_scale = cfg
        .scale_spacings
        .iter()
        .map(|&spacing| eigenspectrum(&build_fvtc(segment, cfg, spacing)?))
        .collect::<Result<Vec<_>>>()?;
    concat_scales(&per_scale)
}

/// Spectra for many segments, parallel over (segment, scale) pairs on the
/// current rayon pool. Entry `i` belongs to `segments[i]`.
pub fn spectra_for_segments(
    segments: &[Segment<'_>],
    cfg: &DelayConfig,
) -> Vec<Result<Eigenspectrum>> {
    let n_scales = cfg.scale_spacings.len();
    let per_task: Vec<Result<Eigenspectrum>> = (0..segments.len() * n_scales)
        .into_par_iter()
        .map(|task| {
            let segment = &segments[task / n_scales];
            let spacing = cfg.scale_spacings[task % n_scales];
            eigenspectrum(&build_fvtc(segment, cfg, spacing)?)
        })
        .collect();
    let mut out = Vec::with_capacity(segments.len());
    let mut tasks = per_task.into_iter();
    for _ in 0..segments.len() {
        let blocks: Result<Vec<Eigenspectrum>> = tasks.by_ref().take(n_scales).collect();
        out.push(blocks.and_then(|b| concat_scales(&b)));
    }
    out
}

/// Mean spectrum over `n_tracks` default-parameter tracks of one regime,
/// each treated as a single segment. Track seeds are derived from `seed`.
pub fn regime_mean_spectrum(
    regime: Regime,
    n_tracks: usize,
    seed: u64,
    cfg: &DelayConfig,
) -> Result<Eigenspectrum> {
    let regime_seed = mix_seed(seed, regime as u64);
    let spectra = (0..n_tracks)
        .map(|i| {
            let track = generate_signals(&SimSpec::new(regime, mix_seed(regime_seed, i as u64)))?;
            segment_spectrum(&track, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    average_spectra_labeled(&spectra, &format!("{regime} mean"))
}
