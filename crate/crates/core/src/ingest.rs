//! Cohort manifest and feature-track loading, plus fixed-length windowing.
//!
//! Manifest CSV header:
//! `subject_id,session_id,group,sample_rate_hz,feature_file,bprs_total,bprs_positive,bprs_negative`
//! with empty cells for absent BPRS values. Relative `feature_file` paths are
//! resolved against the manifest's directory.
//!
//! Feature CSV: a header of channel names, then one row of decimal floats per
//! frame.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use log::warn;

use crate::coordination::MultiChannel;
use crate::error::{Error, Result};
use crate::model::{Bprs, FeatureTrack, Group, Provenance};

pub const MANIFEST_COLUMNS: [&str; 8] = [
    "subject_id",
    "session_id",
    "group",
    "sample_rate_hz",
    "feature_file",
    "bprs_total",
    "bprs_positive",
    "bprs_negative",
];

pub const DEFAULT_WINDOW_SECONDS: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub subject_id: String,
    pub session_id: String,
    pub group: Group,
    pub sample_rate_hz: f64,
    /// As written in the manifest.
    pub feature_file: PathBuf,
    /// `feature_file` resolved against the manifest directory.
    pub resolved_path: PathBuf,
    pub bprs_total: Option<u32>,
    pub bprs_positive: Option<u32>,
    pub bprs_negative: Option<u32>,
}

impl ManifestRow {
    pub fn bprs(&self) -> Bprs {
        Bprs {
            total: self.bprs_total.map(f64::from),
            positive: self.bprs_positive.map(f64::from),
            negative: self.bprs_negative.map(f64::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub path: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl CohortManifest {
    pub fn rows_in_group(&self, group: Group) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.group == group)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Csv {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn parse_optional_u32(cell: &str) -> std::result::Result<Option<u32>, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<u32>()
        .map(Some)
        .map_err(|_| format!("'{cell}' is not a non-negative integer"))
}

/// Reads and validates a cohort manifest. Row numbers in errors count data
/// rows from 1, excluding the header.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CohortManifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let missing: Vec<String> = MANIFEST_COLUMNS
        .iter()
        .filter(|c| !index.contains_key(*c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns {
            path: path.to_path_buf(),
            missing,
        });
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    let mut subject_groups: HashMap<String, Group> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let fail = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            row: row_no,
            message,
        };
        let record = record.map_err(|e| fail(format!("unreadable row: {e}")))?;
        let cell = |name: &str| record.get(index[name]).unwrap_or("");

        let subject_id = cell("subject_id").to_string();
        let session_id = cell("session_id").to_string();
        if subject_id.is_empty() || session_id.is_empty() {
            return Err(fail("subject_id and session_id must be non-empty".into()));
        }
        let group: Group = cell("group").parse().map_err(fail)?;
        let sample_rate_hz: f64 = cell("sample_rate_hz")
            .parse()
            .map_err(|_| fail(format!("invalid sample_rate_hz '{}'", cell("sample_rate_hz"))))?;
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(fail(format!("sample_rate_hz must be positive, got {sample_rate_hz}")));
        }
        let feature_file = PathBuf::from(cell("feature_file"));
        if feature_file.as_os_str().is_empty() {
            return Err(fail("feature_file is empty".into()));
        }
        let resolved_path = if feature_file.is_absolute() {
            feature_file.clone()
        } else {
            base_dir.join(&feature_file)
        };
        if !resolved_path.is_file() {
            return Err(fail(format!(
                "feature file {} does not exist",
                resolved_path.display()
            )));
        }
        let bprs_total = parse_optional_u32(cell("bprs_total")).map_err(&fail)?;
        let bprs_positive = parse_optional_u32(cell("bprs_positive")).map_err(&fail)?;
        let bprs_negative = parse_optional_u32(cell("bprs_negative")).map_err(&fail)?;

        if !seen.insert((subject_id.clone(), session_id.clone())) {
            return Err(fail(format!(
                "duplicate (subject_id, session_id) = ({subject_id}, {session_id})"
            )));
        }
        match subject_groups.get(&subject_id) {
            Some(&g) if g != group => {
                return Err(fail(format!(
                    "subject {subject_id} listed as both {g} and {group}"
                )))
            }
            Some(_) => {}
            None => {
                subject_groups.insert(subject_id.clone(), group);
            }
        }
        rows.push(ManifestRow {
            subject_id,
            session_id,
            group,
            sample_rate_hz,
            feature_file,
            resolved_path,
            bprs_total,
            bprs_positive,
            bprs_negative,
        });
    }
    Ok(CohortManifest {
        path: path.to_path_buf(),
        rows,
    })
}

/// Loads the feature CSV referenced by one manifest row.
pub fn load_track(row: &ManifestRow) -> Result<FeatureTrack> {
    let path = row.resolved_path.as_path();
    let (names, channels) = read_feature_csv(path)?;
    FeatureTrack::new(
        row.subject_id.clone(),
        row.session_id.clone(),
        row.group,
        row.sample_rate_hz,
        names,
        channels,
    )
    .map_err(|e| match e {
        Error::InvalidTrack(msg) => Error::InvalidTrack(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses a feature CSV into channel names and per-channel samples.
pub fn read_feature_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::InvalidTrack(format!("{}: empty file", path.display())));
    }
    if names.len() < 2 {
        return Err(Error::InvalidTrack(format!(
            "{}: M >= 2 required, header has {} column",
            path.display(),
            names.len()
        )));
    }
    let mut channels = vec![Vec::new(); names.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != names.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: format!(
                    "ragged row {row}: {} fields, header has {}",
                    record.len(),
                    names.len()
                ),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Csv {
                path: path.to_path_buf(),
                message: format!("row {row}, channel '{}': '{cell}' is not a number", names[c]),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    path: path.to_path_buf(),
                    row,
                    frame: row - 1,
                    channel: names[c].clone(),
                });
            }
            channels[c].push(value);
        }
    }
    if channels[0].is_empty() {
        return Err(Error::InvalidTrack(format!(
            "{}: empty file (header only)",
            path.display()
        )));
    }
    Ok((names, channels))
}

/// A window of `len` frames of one track starting at `start`.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    track: &'a FeatureTrack,
    start: usize,
    len: usize,
    index: usize,
}

impl<'a> Segment<'a> {
    pub fn track(&self) -> &'a FeatureTrack {
        self.track
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

impl MultiChannel for Segment<'_> {
    fn n_channels(&self) -> usize {
        self.track.n_channels()
    }

    fn n_frames(&self) -> usize {
        self.len
    }

    fn channel(&self, i: usize) -> &[f64] {
        &self.track.channel(i)[self.frames()]
    }

    fn channel_name(&self, i: usize) -> &str {
        &self.track.channel_names()[i]
    }

    fn provenance(&self) -> Provenance {
        Provenance::new(
            self.track.subject_id(),
            self.track.session_id(),
            Some(self.index),
        )
    }
}

/// Frames per window at the track's sample rate.
pub fn window_frames(window_seconds: f64, sample_rate_hz: f64) -> usize {
    (window_seconds * sample_rate_hz).round().max(0.0) as usize
}

/// Non-overlapping windows of `window_seconds`, starting at frame 0. The
/// trailing remainder shorter than one window is dropped.
pub fn segment_track(track: &FeatureTrack, window_seconds: f64) -> Vec<Segment<'_>> {
    segment_track_with_stride(track, window_seconds, window_seconds)
}

/// Windows of `window_seconds` advancing by `stride_seconds`.
pub fn segment_track_with_stride(
    track: &FeatureTrack,
    window_seconds: f64,
    stride_seconds: f64,
) -> Vec<Segment<'_>> {
    let len = window_frames(window_seconds, track.sample_rate_hz());
    let stride = window_frames(stride_seconds, track.sample_rate_hz());
    let t = track.n_frames();
    let mut out = Vec::new();
    if len == 0 || stride == 0 || len > t {
        warn!(
            "{}/{}: no segments ({} frames, window {} frames)",
            track.subject_id(),
            track.session_id(),
            t,
            len
        );
        return out;
    }
    let mut start = 0;
    while start + len <= t {
        out.push(Segment {
            track,
            start,
            len,
            index: out.len(),
        });
        start += stride;
    }
    out
}

/// Frames after the last segment that no segment covers.
pub fn dropped_frames(track: &FeatureTrack, segments: &[Segment<'_>]) -> usize {
    let covered = segments.last().map_or(0, |s| s.start + s.len);
    track.n_frames() - covered
}
