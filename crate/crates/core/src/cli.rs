//! Batch commands: `reference`, `score`, `simulate`, `version`.
//!
//! Exit codes: 0 success, 1 data or validation failure, 2 usage error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{self, ManifestRow, Segment};
use crate::model::{Bprs, DelayConfig, Eigenspectrum, FeatureTrack, Group, Level, ScoreRecord};
use crate::pipeline::{spectra_for_segments, with_pool};
use crate::report::{self, fmt6, SeverityField, SeverityPoint};
use crate::simulate::{self, CohortSpec, Regime, SimSpec};
use crate::spectra::{
    aggregate, average_spectra_labeled, classify_trend_by_shape, classify_trend_by_wsed,
    difference_spectrum, normalize_scores, wsed, SessionScores, SubjectScores, WsedConfig,
};

/// Share of failed segments above which a scoring run is reported as failed.
pub const MAX_SEGMENT_FAILURE_RATE: f64 = 0.10;

pub const REFERENCE_FILE: &str = "reference.csv";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub window_seconds: f64,
    /// Window advance; defaults to `window_seconds` (no overlap).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride_seconds: Option<f64>,
    pub delays_per_channel: usize,
    pub scale_spacings: Vec<usize>,
    pub min_valid_window: usize,
    pub alpha: f64,
    pub ambiguity_epsilon: f64,
    pub early_rank_count: usize,
    pub output_dir: PathBuf,
    /// Worker count; 0 picks one per core.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let delay = DelayConfig::default();
        let w = WsedConfig::default();
        RunConfig {
            window_seconds: ingest::DEFAULT_WINDOW_SECONDS,
            stride_seconds: None,
            delays_per_channel: delay.delays_per_channel,
            scale_spacings: delay.scale_spacings,
            min_valid_window: delay.min_valid_window,
            alpha: w.alpha,
            ambiguity_epsilon: w.ambiguity_epsilon,
            early_rank_count: w.early_rank_count,
            output_dir: PathBuf::from("out"),
            parallelism: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes")
    }

    /// The fields that determine results; location and worker count are
    /// left out so reruns elsewhere or with other worker counts match.
    pub fn analysis_toml(&self) -> String {
        let mut value = toml::Table::try_from(self).expect("RunConfig serializes");
        value.remove("output_dir");
        value.remove("parallelism");
        toml::to_string(&value).expect("table serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_seconds > 0.0 && self.window_seconds.is_finite()) {
            return Err(Error::Config(format!("window_seconds must be positive, got {}", self.window_seconds)));
        }
        if let Some(s) = self.stride_seconds {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("stride_seconds must be positive, got {s}")));
            }
        }
        self.delay_config()?;
        self.wsed_config().validate()
    }

    pub fn delay_config(&self) -> Result<DelayConfig> {
        DelayConfig::new(
            self.delays_per_channel,
            self.scale_spacings.clone(),
            self.min_valid_window,
        )
    }

    pub fn wsed_config(&self) -> WsedConfig {
        WsedConfig {
            alpha: self.alpha,
            ambiguity_epsilon: self.ambiguity_epsilon,
            early_rank_count: self.early_rank_count,
        }
    }

    fn segments<'a>(&self, track: &'a FeatureTrack) -> Vec<Segment<'a>> {
        ingest::segment_track_with_stride(
            track,
            self.window_seconds,
            self.stride_seconds.unwrap_or(self.window_seconds),
        )
    }
}

/// Writes a spectrum as `rank,value` rows; values use the shortest exact
/// decimal form so the file reloads bit-for-bit.
pub fn spectrum_csv(values: &[f64]) -> String {
    let mut out = String::from("rank,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, v);
    }
    out
}

pub fn read_spectrum_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let bad = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    match lines.next().map(str::trim) {
        Some("rank,value") => {}
        other => return Err(bad(format!("expected header 'rank,value', found {other:?}"))),
    }
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (rank, value) = line
            .trim()
            .split_once(',')
            .ok_or_else(|| bad(format!("line {}: expected 'rank,value'", i + 2)))?;
        if rank.parse::<usize>() != Ok(values.len() + 1) {
            return Err(bad(format!("line {}: ranks must run 1, 2, ...", i + 2)));
        }
        let v: f64 = value
            .parse()
            .map_err(|_| bad(format!("line {}: '{value}' is not a number", i + 2)))?;
        if !v.is_finite() {
            return Err(bad(format!("line {}: non-finite value", i + 2)));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(bad("no ranks".into()));
    }
    Ok(values)
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_tracks(rows: &[&ManifestRow]) -> Vec<Result<FeatureTrack>> {
    rows.par_iter().map(|row| ingest::load_track(row)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSummary {
    pub path: PathBuf,
    pub sessions: usize,
    pub segments: usize,
    pub dropped_frames: usize,
    pub ranks: usize,
}

/// Pools the eigenspectra of every healthy-control segment into one mean
/// reference and writes it to `<output_dir>/reference.csv`.
pub fn cmd_reference(manifest_path: &Path, cfg: &RunConfig) -> Result<ReferenceSummary> {
    cfg.validate()?;
    let delay = cfg.delay_config()?;
    let manifest = ingest::load_manifest(manifest_path)?;
    let rows: Vec<&ManifestRow> = manifest.rows_in_group(Group::Hc).collect();
    if rows.is_empty() {
        return Err(Error::NoHealthyControls);
    }

    let (spectra, dropped, n_segments) = with_pool(cfg.parallelism, || -> Result<_> {
        let tracks = load_tracks(&rows).into_iter().collect::<Result<Vec<_>>>()?;
        let mut segments = Vec::new();
        let mut dropped = 0;
        for track in &tracks {
            let segs = cfg.segments(track);
            dropped += ingest::dropped_frames(track, &segs);
            segments.extend(segs);
        }
        let spectra = spectra_for_segments(&segments, &delay)
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok((spectra, dropped, segments.len()))
    })??;
    if spectra.is_empty() {
        return Err(Error::Empty("no valid healthy-control segments".into()));
    }
    let reference = average_spectra_labeled(&spectra, "HC reference")?;

    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join(REFERENCE_FILE);
    write(&path, &spectrum_csv(reference.values()))?;
    write(&cfg.output_dir.join(EFFECTIVE_CONFIG_FILE), &cfg.analysis_toml())?;
    Ok(ReferenceSummary {
        path,
        sessions: rows.len(),
        segments: n_segments,
        dropped_frames: dropped,
        ranks: reference.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub level: Level,
    pub x_field: SeverityField,
    pub stats: report::CorrelationStats,
}

#[derive(Debug, Clone, Default)]
pub struct ScoreSummary {
    pub segment_records: Vec<ScoreRecord>,
    pub session_records: Vec<ScoreRecord>,
    pub subject_records: Vec<ScoreRecord>,
    pub correlations: Vec<CorrelationRow>,
    pub total_segments: usize,
    pub failed_segments: usize,
    pub sessions_without_segments: Vec<(String, String)>,
}

impl ScoreSummary {
    pub fn failure_rate(&self) -> f64 {
        if self.total_segments == 0 {
            0.0
        } else {
            self.failed_segments as f64 / self.total_segments as f64
        }
    }

    /// Every session scored at least one segment and failures stayed under
    /// the threshold.
    pub fn is_success(&self) -> bool {
        self.sessions_without_segments.is_empty() && self.failure_rate() <= MAX_SEGMENT_FAILURE_RATE
    }
}

struct ScoredSegment {
    index: usize,
    spectrum: Eigenspectrum,
    wsed: f64,
    trend_shape: crate::model::Trend,
}

struct SessionWork<'a> {
    row: &'a ManifestRow,
    scored: Vec<ScoredSegment>,
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Scores every SZ session against a healthy-control reference and writes
/// score tables, difference plots, severity scatters, and correlations.
pub fn cmd_score(manifest_path: &Path, reference_path: &Path, cfg: &RunConfig) -> Result<ScoreSummary> {
    cfg.validate()?;
    let delay = cfg.delay_config()?;
    let wcfg = cfg.wsed_config();
    let manifest = ingest::load_manifest(manifest_path)?;
    let mut rows: Vec<&ManifestRow> = manifest.rows_in_group(Group::Sz).collect();
    rows.sort_by(|a, b| (&a.subject_id, &a.session_id).cmp(&(&b.subject_id, &b.session_id)));
    let ref_values = read_spectrum_csv(reference_path)?;
    let ref_len = ref_values.len();
    let n_scales = delay.scale_spacings.len();
    let reference = Eigenspectrum::with_blocks(
        ref_values,
        vec![ref_len / n_scales; n_scales],
        "HC reference",
    );

    let mut summary = ScoreSummary::default();
    let sessions: Vec<SessionWork> = with_pool(cfg.parallelism, || -> Result<Vec<SessionWork>> {
        let tracks = load_tracks(&rows);
        let n_channels = tracks
            .iter()
            .find_map(|t| t.as_ref().ok().map(FeatureTrack::n_channels));
        if let Some(m) = n_channels {
            let expected = delay.spectrum_len(m);
            if expected != ref_len {
                return Err(Error::StructureMismatch {
                    reference: ref_len,
                    expected,
                });
            }
        }
        let reference = reference.as_ref().map_err(|e| Error::InvalidSpectrum(e.to_string()))?;

        let mut out = Vec::new();
        let mut all_segments = Vec::new();
        let mut owners = Vec::new();
        for (k, (row, track)) in rows.iter().zip(&tracks).enumerate() {
            out.push(SessionWork { row, scored: Vec::new() });
            match track {
                Ok(track) => {
                    let segs = cfg.segments(track);
                    owners.extend(std::iter::repeat_n(k, segs.len()));
                    all_segments.extend(segs);
                }
                Err(e) => warn!("{}/{}: track not loaded: {e}", row.subject_id, row.session_id),
            }
        }
        let spectra = spectra_for_segments(&all_segments, &delay);
        for ((segment, owner), spectrum) in all_segments.iter().zip(owners).zip(spectra) {
            let spectrum = spectrum.and_then(|s| {
                let d = difference_spectrum(&s, reference)?;
                Ok((s, d))
            });
            match spectrum {
                Ok((spectrum, diff)) => out[owner].scored.push(ScoredSegment {
                    index: segment.index(),
                    wsed: wsed(&diff.values, wcfg.alpha),
                    trend_shape: classify_trend_by_shape(&diff, wcfg.early_rank_count),
                    spectrum,
                }),
                Err(e) => warn!("{}: segment excluded: {e}", crate::coordination::MultiChannel::provenance(segment)),
            }
        }
        summary.total_segments = all_segments.len();
        summary.failed_segments = all_segments.len()
            - out.iter().map(|s| s.scored.len()).sum::<usize>();
        Ok(out)
    })??;

    let reference = reference?;

    // Segment level.
    let mut segment_records = Vec::new();
    for s in &sessions {
        if s.scored.is_empty() {
            summary
                .sessions_without_segments
                .push((s.row.subject_id.clone(), s.row.session_id.clone()));
        }
        for seg in &s.scored {
            segment_records.push(ScoreRecord {
                level: Level::Segment,
                subject_id: s.row.subject_id.clone(),
                session_id: Some(s.row.session_id.clone()),
                segment_index: Some(seg.index),
                wsed_raw: seg.wsed,
                wsed_normalized: 0.0,
                trend_shape: seg.trend_shape,
                trend_wsed: crate::model::Trend::Ambiguous,
                bprs: s.row.bprs(),
            });
        }
    }

    // Session and subject levels.
    let mut by_subject: BTreeMap<&str, Vec<&SessionWork>> = BTreeMap::new();
    for s in &sessions {
        by_subject.entry(s.row.subject_id.as_str()).or_default().push(s);
    }
    let grouped: Vec<SubjectScores> = by_subject
        .iter()
        .filter(|(_, ss)| ss.iter().any(|s| !s.scored.is_empty()))
        .map(|(subject, ss)| SubjectScores {
            subject_id: subject.to_string(),
            sessions: ss
                .iter()
                .map(|s| SessionScores {
                    session_id: s.row.session_id.clone(),
                    segments: s.scored.iter().map(|g| (g.index, g.wsed)).collect(),
                })
                .collect(),
        })
        .collect();
    let agg = aggregate(&grouped)?;

    let session_lookup: BTreeMap<(&str, &str), &SessionWork> = sessions
        .iter()
        .map(|s| ((s.row.subject_id.as_str(), s.row.session_id.as_str()), s))
        .collect();
    let mut session_records = Vec::new();
    for m in &agg.sessions {
        let work = session_lookup[&(m.subject_id.as_str(), m.session_id.as_str())];
        let spectra: Vec<Eigenspectrum> = work.scored.iter().map(|g| g.spectrum.clone()).collect();
        let mean = average_spectra_labeled(&spectra, &format!("{}/{}", m.subject_id, m.session_id))?;
        let diff = difference_spectrum(&mean, &reference)?;
        session_records.push(ScoreRecord {
            level: Level::Session,
            subject_id: m.subject_id.clone(),
            session_id: Some(m.session_id.clone()),
            segment_index: None,
            wsed_raw: m.wsed,
            wsed_normalized: 0.0,
            trend_shape: classify_trend_by_shape(&diff, wcfg.early_rank_count),
            trend_wsed: crate::model::Trend::Ambiguous,
            bprs: work.row.bprs(),
        });
    }

    let plots = cfg.output_dir.join("plots");
    let spectra_dir = cfg.output_dir.join("spectra");
    create_dir(&plots)?;
    create_dir(&spectra_dir)?;
    let mut subject_records = Vec::new();
    for m in &agg.subjects {
        let works: Vec<&&SessionWork> = by_subject[m.subject_id.as_str()]
            .iter()
            .filter(|s| !s.scored.is_empty())
            .collect();
        let spectra: Vec<Eigenspectrum> = works
            .iter()
            .flat_map(|s| s.scored.iter().map(|g| g.spectrum.clone()))
            .collect();
        let mean = average_spectra_labeled(&spectra, &m.subject_id)?;
        let diff = difference_spectrum(&mean, &reference)?;
        let bprs: Vec<Bprs> = works.iter().map(|s| s.row.bprs()).collect();
        let stem = file_stem(&m.subject_id);
        report::plot_difference_spectrum(
            &diff,
            &format!("Eigenspectrum difference: {}", m.subject_id),
            &plots.join(format!("{stem}_difference.svg")),
        )?;
        write(&spectra_dir.join(format!("{stem}_difference.csv")), &spectrum_csv(&diff.values))?;
        subject_records.push(ScoreRecord {
            level: Level::Subject,
            subject_id: m.subject_id.clone(),
            session_id: None,
            segment_index: None,
            wsed_raw: m.wsed,
            wsed_normalized: 0.0,
            trend_shape: classify_trend_by_shape(&diff, wcfg.early_rank_count),
            trend_wsed: crate::model::Trend::Ambiguous,
            bprs: Bprs::mean(&bprs),
        });
    }

    for records in [&mut segment_records, &mut session_records, &mut subject_records] {
        let raws: Vec<f64> = records.iter().map(|r| r.wsed_raw).collect();
        if raws.is_empty() {
            continue;
        }
        let (normalized, _factor) = normalize_scores(&raws);
        for (r, n) in records.iter_mut().zip(normalized) {
            r.wsed_normalized = n;
            r.trend_wsed = classify_trend_by_wsed(n, wcfg.ambiguity_epsilon);
        }
    }

    write(&cfg.output_dir.join("scores_segment.csv"), &report::detail_table(&segment_records))?;
    write(&cfg.output_dir.join("scores_session.csv"), &report::detail_table(&session_records))?;
    write(&cfg.output_dir.join("scores_subject.csv"), &report::score_table(&subject_records)?)?;

    let mut corr_csv = String::from("level,x_field,y_field,pearson_r,spearman_rho,n\n");
    for (level, records) in [(Level::Session, &session_records), (Level::Subject, &subject_records)] {
        let points: Vec<SeverityPoint> = records.iter().filter_map(SeverityPoint::from_record).collect();
        if points.len() < records.len() {
            warn!(
                "{level} level: {} record(s) without BPRS excluded from severity plots",
                records.len() - points.len()
            );
        }
        for field in [SeverityField::BprsTotal, SeverityField::PosMinusNeg] {
            if points.is_empty() {
                continue;
            }
            report::plot_scatter(
                &points,
                field,
                &format!("WSED vs {} ({level} level)", field.axis_label()),
                &plots.join(format!("scatter_{}_{level}.svg", field.key())),
            )?;
            match report::correlation(&points, field, SeverityField::Wsed) {
                Ok(stats) => {
                    let _ = writeln!(
                        corr_csv,
                        "{level},{},{},{},{},{}",
                        field.key(),
                        SeverityField::Wsed.key(),
                        fmt6(stats.pearson_r),
                        fmt6(stats.spearman_rho),
                        stats.n
                    );
                    summary.correlations.push(CorrelationRow { level, x_field: field, stats });
                }
                Err(e) => warn!("{level} level, {}: {e}", field.key()),
            }
        }
    }
    write(&cfg.output_dir.join("correlations.csv"), &corr_csv)?;
    write(&cfg.output_dir.join(EFFECTIVE_CONFIG_FILE), &cfg.analysis_toml())?;

    summary.segment_records = segment_records;
    summary.session_records = session_records;
    summary.subject_records = subject_records;
    info!(
        "scored {} of {} segments",
        summary.total_segments - summary.failed_segments,
        summary.total_segments
    );
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Simplified,
    Natural,
    Erratic,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Simplified => Regime::Simplified,
            RegimeArg::Natural => Regime::Natural,
            RegimeArg::Erratic => Regime::Erratic,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tvcoord", version, about = "Articulatory coordination eigenspectra and WSED scores")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 = one per core.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(p) = self.parallelism {
            cfg.parallelism = p;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the pooled healthy-control reference eigenspectrum.
    Reference {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score SZ sessions against a reference spectrum.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate one synthetic track or a synthetic cohort.
    Simulate(SimulateArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["regime", "cohort"]))]
pub struct SimulateArgs {
    /// Generate a single track of this regime.
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    /// Generate a cohort (manifest, truth table, feature files).
    #[arg(long)]
    pub cohort: bool,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "sim")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Track duration in seconds (single-track mode).
    #[arg(long, default_value_t = 40.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 100.0)]
    pub sample_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 1, requires = "cohort")]
    pub n_hc: usize,
    #[arg(long, default_value_t = 1, requires = "cohort")]
    pub n_complex: usize,
    #[arg(long, default_value_t = 1, requires = "cohort")]
    pub n_simple: usize,
    #[arg(long, default_value_t = 1, requires = "cohort")]
    pub segments_per_session: usize,
    #[arg(long, default_value_t = 1, requires = "cohort")]
    pub sessions_per_subject: usize,
    /// Segment length used to size cohort sessions.
    #[arg(long, default_value_t = ingest::DEFAULT_WINDOW_SECONDS, requires = "cohort")]
    pub window_seconds: f64,
}

/// Files written by `simulate`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    create_dir(&args.out)?;
    if let Some(regime) = args.regime {
        let spec = SimSpec {
            n_channels: args.channels,
            duration_s: args.duration,
            sample_rate_hz: args.sample_rate,
            noise_std: args.noise_std,
            ..SimSpec::new(regime.into(), args.seed)
        };
        let track = simulate::generate_signals(&spec)?;
        let path = args.out.join(format!("{}_seed{}.csv", spec.regime, spec.seed));
        simulate::write_feature_csv(&track, &path)?;
        return Ok(vec![path]);
    }
    let spec = CohortSpec {
        window_seconds: args.window_seconds,
        n_channels: args.channels,
        sample_rate_hz: args.sample_rate,
        noise_std: args.noise_std,
        ..CohortSpec::new(
            args.n_hc,
            args.n_complex,
            args.n_simple,
            args.segments_per_session,
            args.sessions_per_subject,
            args.seed,
        )
    };
    let cohort = simulate::generate_cohort(&spec, &args.out)?;
    let mut files = vec![args.out.join("manifest.csv"), args.out.join("truth.csv")];
    files.extend(cohort.manifest.rows.iter().map(|r| r.resolved_path.clone()));
    Ok(files)
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Version => {
            println!("tvcoord {}", env!("CARGO_PKG_VERSION"));
            Ok(0)
        }
        Command::Reference { manifest, common } => {
            let cfg = common.resolve()?;
            let s = cmd_reference(&manifest, &cfg)?;
            println!(
                "reference: {} ranks from {} segments over {} HC sessions ({} frames dropped) -> {}",
                s.ranks,
                s.segments,
                s.sessions,
                s.dropped_frames,
                s.path.display()
            );
            Ok(0)
        }
        Command::Score {
            manifest,
            reference,
            common,
        } => {
            let cfg = common.resolve()?;
            let s = cmd_score(&manifest, &reference, &cfg)?;
            println!(
                "scored {} subjects, {} sessions, {} segments ({} failed)",
                s.subject_records.len(),
                s.session_records.len(),
                s.total_segments - s.failed_segments,
                s.failed_segments
            );
            for c in &s.correlations {
                println!(
                    "{} level, WSED vs {}: pearson_r = {}, spearman_rho = {}, n = {}",
                    c.level,
                    c.x_field.key(),
                    fmt6(c.stats.pearson_r),
                    fmt6(c.stats.spearman_rho),
                    c.stats.n
                );
            }
            for (subject, session) in &s.sessions_without_segments {
                eprintln!("session {subject}/{session} produced no scored segment");
            }
            if s.failure_rate() > MAX_SEGMENT_FAILURE_RATE {
                eprintln!(
                    "{} of {} segments failed (limit {:.0}%)",
                    s.failed_segments,
                    s.total_segments,
                    MAX_SEGMENT_FAILURE_RATE * 100.0
                );
            }
            Ok(if s.is_success() { 0 } else { 1 })
        }
        Command::Simulate(args) => {
            for path in cmd_simulate(&args)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig {
            stride_seconds: Some(20.0),
            scale_spacings: vec![2, 5],
            parallelism: 3,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_toml_str(&d.to_toml_string()).unwrap(), d);
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = RunConfig::from_toml_str("alpha = 0.5\nscale_spacings = [1]\n").unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.window_seconds, 40.0);
        assert_eq!(cfg.delays_per_channel, 15);
        assert!(RunConfig::from_toml_str("alpha = 1.5\n").is_err());
        assert!(RunConfig::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn analysis_echo_omits_run_location() {
        let a = RunConfig { output_dir: "x".into(), parallelism: 1, ..RunConfig::default() };
        let b = RunConfig { output_dir: "y".into(), parallelism: 8, ..RunConfig::default() };
        assert_eq!(a.analysis_toml(), b.analysis_toml());
        let back = RunConfig::from_toml_str(&a.analysis_toml()).unwrap();
        assert_eq!(back.alpha, a.alpha);
    }

    #[test]
    fn spectrum_csv_reloads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let values = vec![12.5, 0.1 + 0.2, -1e-17, 3.0];
        let p = dir.path().join("s.csv");
        fs::write(&p, spectrum_csv(&values)).unwrap();
        assert_eq!(read_spectrum_csv(&p).unwrap(), values);
        fs::write(&p, "rank,value\n2,1.0\n").unwrap();
        assert!(read_spectrum_csv(&p).is_err());
    }

    #[test]
    fn simulate_requires_a_mode() {
        assert!(Cli::try_parse_from(["tvcoord", "simulate"]).is_err());
        let err = Cli::try_parse_from(["tvcoord", "simulate", "--regime", "chaotic"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(Cli::try_parse_from(["tvcoord", "simulate", "--regime", "erratic", "--cohort"]).is_err());
        assert!(Cli::try_parse_from(["tvcoord", "simulate", "--cohort", "--n-hc", "2"]).is_ok());
    }
}
