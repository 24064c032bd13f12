//! Repeated upload/retrieve measurements over mutated payloads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::api::{Service, ServiceError};
use crate::crypto::KeyPair;

pub const CSV_HEADER: [&str; 5] = ["iteration", "size", "op", "elapsed_ms", "vsz_mb"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SizeLabel {
    #[serde(rename = "1k")]
    K1,
    #[serde(rename = "10k")]
    K10,
    #[serde(rename = "100k")]
    K100,
    #[serde(rename = "1m")]
    M1,
}

impl SizeLabel {
    pub const ALL: [SizeLabel; 4] = [SizeLabel::K1, SizeLabel::K10, SizeLabel::K100, SizeLabel::M1];

    /// Binary units: 1k is 1024 bytes.
    pub fn bytes(self) -> usize {
        match self {
            SizeLabel::K1 => 1024,
            SizeLabel::K10 => 10 * 1024,
            SizeLabel::K100 => 100 * 1024,
            SizeLabel::M1 => 1024 * 1024,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SizeLabel::K1 => "1k",
            SizeLabel::K10 => "10k",
            SizeLabel::K100 => "100k",
            SizeLabel::M1 => "1m",
        }
    }

    /// Parses a comma-separated list such as `1k,10k`.
    pub fn parse_list(text: &str) -> Result<Vec<SizeLabel>, BenchError> {
        text.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
    }
}

impl fmt::Display for SizeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizeLabel {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1k" => Ok(SizeLabel::K1),
            "10k" => Ok(SizeLabel::K10),
            "100k" => Ok(SizeLabel::K100),
            "1m" => Ok(SizeLabel::M1),
            other => Err(BenchError::UnknownSize(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Upload,
    Retrieve,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Upload => "upload",
            Op::Retrieve => "retrieve",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub iteration: usize,
    pub size: SizeLabel,
    pub op: Op,
    pub elapsed_ms: f64,
    /// `None` where the platform has no per-process VSZ accounting.
    pub vsz_mb: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown size label {0:?} (expected 1k, 10k, 100k or 1m)")]
    UnknownSize(String),
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("{op} of {size} payload failed at iteration {iteration}: {source}")]
    Operation { size: SizeLabel, op: &'static str, iteration: usize, source: ServiceError },
    #[error("retrieved {size} payload at iteration {iteration} does not match the upload")]
    Mismatch { size: SizeLabel, iteration: usize },
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<SizeLabel>,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { sizes: SizeLabel::ALL.to_vec(), iters: 1000, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SizeSummary {
    pub size: SizeLabel,
    pub mean_upload_ms: f64,
    pub mean_retrieve_ms: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BenchReport {
    pub rows: usize,
    pub sizes: Vec<SizeSummary>,
}

/// Deterministic pseudorandom bytes. A zero size yields an empty vector.
pub fn generate_payload(size: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = vec![0u8; size];
    rng.fill_bytes(&mut out);
    out
}

/// Overwrites the first eight bytes (fewer for shorter payloads) with the
/// little-endian iteration number.
pub fn mutate_payload(payload: &[u8], iteration: u64) -> Vec<u8> {
    let mut out = payload.to_vec();
    let counter = iteration.to_le_bytes();
    let n = out.len().min(counter.len());
    out[..n].copy_from_slice(&counter[..n]);
    out
}

/// Current process virtual size in MB, from `/proc/self/status`.
pub fn sample_vsz() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmSize:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

/// Runs `iters` timed uploads then `iters` timed retrievals per size, strictly
/// sequentially, streaming one CSV row per operation to `out`.
pub fn run_benchmark(
    service: &Service,
    uploader: &KeyPair,
    config: &BenchConfig,
    out: impl Write,
) -> Result<BenchReport, BenchError> {
    if config.iters == 0 {
        return Err(BenchError::NoIterations);
    }
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(CSV_HEADER)?;
    let mut report = BenchReport::default();

    for (n, &size) in config.sizes.iter().enumerate() {
        let base = generate_payload(size.bytes(), config.seed.wrapping_add(n as u64));
        let mut cids = Vec::with_capacity(config.iters);
        let mut upload_total = 0.0;
        for iteration in 1..=config.iters {
            let payload = mutate_payload(&base, iteration as u64);
            let start = Instant::now();
            let block = service
                .upload_with(uploader, &payload)
                .map_err(|source| BenchError::Operation { size, op: "upload", iteration, source })?;
            let ms = elapsed_ms(start);
            upload_total += ms;
            cids.push(block.cid.expect("uploaded blocks carry a content id"));
            write_row(&mut csv, &BenchRecord { iteration, size, op: Op::Upload, elapsed_ms: ms, vsz_mb: sample_vsz() })?;
        }
        tracing::info!(size = %size, iters = config.iters, "uploads done");

        let mut retrieve_total = 0.0;
        for (i, cid) in cids.iter().enumerate() {
            let iteration = i + 1;
            let start = Instant::now();
            let (_, bytes) = service
                .file(cid)
                .map_err(|source| BenchError::Operation { size, op: "retrieve", iteration, source })?;
            let ms = elapsed_ms(start);
            retrieve_total += ms;
            if bytes.len() != base.len() || bytes[8.min(bytes.len())..] != base[8.min(base.len())..] {
                return Err(BenchError::Mismatch { size, iteration });
            }
            write_row(&mut csv, &BenchRecord { iteration, size, op: Op::Retrieve, elapsed_ms: ms, vsz_mb: sample_vsz() })?;
        }
        report.rows += 2 * config.iters;
        report.sizes.push(SizeSummary {
            size,
            mean_upload_ms: upload_total / config.iters as f64,
            mean_retrieve_ms: retrieve_total / config.iters as f64,
        });
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(report)
}

fn write_row<W: Write>(csv: &mut csv::Writer<W>, r: &BenchRecord) -> Result<(), csv::Error> {
    csv.write_record([
        r.iteration.to_string(),
        r.size.to_string(),
        r.op.as_str().to_string(),
        format!("{:.6}", r.elapsed_ms),
        r.vsz_mb.map(|v| format!("{v:.3}")).unwrap_or_default(),
    ])
}
