//! Synthetic datasets: Gaussian point sets labelled with the entropy of a
//! rotated marginal, and sequences labelled by whether they are sorted.
//!
//! Every sample draws from its own ChaCha stream (seed, index), so datasets
//! are reproducible and can be generated in any order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GENERATOR_VERSION: u32 = 1;

pub const SET_SIZE_RANGE: (usize, usize) = (300, 500);
pub const SEQUENCE_LENGTH_RANGE: (usize, usize) = (10, 50);

pub type Matrix2 = [[f64; 2]; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropySample {
    pub points: Vec<[f64; 2]>,
    pub alpha: f64,
    pub target: f64,
    /// Covariance before rotation; kept so the target can be recomputed.
    pub sigma: Matrix2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub values: Vec<f64>,
    pub label: u8,
}

/// `A·Aᵀ + 0.1·I` with `A` standard normal.
pub fn sample_covariance(rng: &mut impl Rng) -> Matrix2 {
    let a: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    covariance_from_factor([[a[0], a[1]], [a[2], a[3]]])
}

fn covariance_from_factor(a: Matrix2) -> Matrix2 {
    let s00 = a[0][0] * a[0][0] + a[0][1] * a[0][1] + 0.1;
    let s11 = a[1][0] * a[1][0] + a[1][1] * a[1][1] + 0.1;
    let s01 = a[0][0] * a[1][0] + a[0][1] * a[1][1];
    [[s00, s01], [s01, s11]]
}

pub fn rotation_matrix(alpha: f64) -> Matrix2 {
    let (s, c) = alpha.sin_cos();
    [[c, -s], [s, c]]
}

fn mat_mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

fn transpose(a: &Matrix2) -> Matrix2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Entropy in nats of the first coordinate of `N(0, R(α) Σ R(α)ᵀ)`:
/// `½(1 + ln(2π rᵀΣr))` with `r = (cos α, −sin α)`.
pub fn entropy_target(sigma: &Matrix2, alpha: f64) -> Result<f64> {
    let (s, c) = alpha.sin_cos();
    let r = [c, -s];
    let var = r[0] * (sigma[0][0] * r[0] + sigma[0][1] * r[1])
        + r[1] * (sigma[1][0] * r[0] + sigma[1][1] * r[1]);
    if !(var > 0.0) {
        return Err(Error::NonPositiveVariance(var));
    }
    Ok(0.5 * (1.0 + (2.0 * std::f64::consts::PI * var).ln()))
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn entropy_sample(rng: &mut ChaCha8Rng) -> Result<EntropySample> {
    let sigma = sample_covariance(rng);
    let alpha = rng.random_range(0.0..std::f64::consts::PI);
    let m = rng.random_range(SET_SIZE_RANGE.0..=SET_SIZE_RANGE.1);
    let rot = rotation_matrix(alpha);
    let cov = mat_mul(&mat_mul(&rot, &sigma), &transpose(&rot));
    // 2x2 Cholesky factor
    let l00 = cov[0][0].sqrt();
    let l10 = cov[1][0] / l00;
    let l11 = (cov[1][1] - l10 * l10).max(0.0).sqrt();
    let points = (0..m)
        .map(|_| {
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            [l00 * z0, l10 * z0 + l11 * z1]
        })
        .collect();
    Ok(EntropySample {
        points,
        alpha,
        target: entropy_target(&sigma, alpha)?,
        sigma,
    })
}

pub fn gen_entropy_dataset(count: usize, seed: u64) -> Result<Vec<EntropySample>> {
    (0..count)
        .map(|i| entropy_sample(&mut sample_rng(seed, i)))
        .collect()
}

pub fn is_sorted_non_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] <= w[1])
}

/// Even indices are sorted, so exactly `⌈count/2⌉` samples are sorted by
/// construction; odd indices keep their random order and their label is read
/// off the values.
pub fn gen_sorted_dataset(count: usize, seed: u64) -> Vec<SequenceSample> {
    (0..count)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let len = rng.random_range(SEQUENCE_LENGTH_RANGE.0..=SEQUENCE_LENGTH_RANGE.1);
            let mut values: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
            if i % 2 == 0 {
                values.sort_by(f64::total_cmp);
            }
            let label = u8::from(is_sorted_non_decreasing(&values));
            SequenceSample { values, label }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: String,
    pub version: u32,
    pub count: usize,
    pub seed: u64,
}

/// `<path>.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line)?);
    }
    Ok(items)
}

/// Writes the dataset and its sidecar manifest.
pub fn write_dataset<T: Serialize>(
    path: &Path,
    items: &[T],
    manifest: &DatasetManifest,
) -> Result<()> {
    write_jsonl(path, items)?;
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(manifest_path(path), text + "\n")?;
    Ok(())
}
