//! Independent reference computations used by the integration and
//! acceptance tests. Nothing here calls into the library's numeric paths.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

/// Cyclic Jacobi eigenvalue iteration on a dense symmetric matrix
/// (row-major `n x n`). Returns eigenvalues sorted descending.
pub fn jacobi_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    values
}

/// Pearson correlation of two equal-length slices by the textbook two-pass
/// formula, one scalar at a time.
pub fn pearson_two_pass(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mut ma = 0.0;
    let mut mb = 0.0;
    for i in 0..a.len() {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Channel-delay correlation matrix, pair by pair, straight from the raw
/// channels: row `i*D + k` reads channel `i` from frame `k*spacing`.
pub fn pairwise_delay_correlation(
    channels: &[Vec<f64>],
    delays: usize,
    spacing: usize,
) -> (Vec<f64>, usize) {
    let len = channels[0].len();
    let valid = len - (delays - 1) * spacing;
    let dim = channels.len() * delays;
    let row = |r: usize| -> &[f64] {
        let (i, k) = (r / delays, r % delays);
        &channels[i][k * spacing..k * spacing + valid]
    };
    let mut out = vec![0.0; dim * dim];
    for a in 0..dim {
        for b in 0..dim {
            out[a * dim + b] = pearson_two_pass(row(a), row(b));
        }
    }
    (out, dim)
}

/// Sum of `v[i] * alpha^i` with each power computed directly.
pub fn naive_wsed(v: &[f64], alpha: f64) -> f64 {
    v.iter()
        .enumerate()
        .map(|(i, x)| x * alpha.powi(i as i32))
        .sum()
}

/// Pearson correlation via all pairwise differences; algebraically equal to
/// the covariance form but shares no intermediate quantities with it.
pub fn pearson_pairwise(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    sxy / (sxx * syy).sqrt()
}

/// Average ranks by counting smaller and equal values.
pub fn counting_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// The checked-in synthetic cohort.
pub fn bundled_cohort() -> PathBuf {
    manifest_dir().join("tests/data/cohort")
}

/// Every file under `dir`, as (relative path, bytes), sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                out.push((path.strip_prefix(base).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
