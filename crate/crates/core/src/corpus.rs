//! Synthetic benchmark corpus: generation, loading, filtering, windowing,
//! per-window normalization, transformed duplicates, and label manifests.
//!
//! Datasets are immutable after construction; every operation here is a pure
//! function of its inputs.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, RejectReason, Result};
use crate::util::{derive_seed, mean_std, Mat};

/// Minimum number of valid series a dataset must retain to be audited.
pub const MIN_SERIES: usize = 30;
/// Cap on retained series per dataset, bounding probe cost.
pub const MAX_SERIES: usize = 50;
/// Series below this standard deviation are treated as constant and dropped.
pub const STD_FLOOR_SERIES: f64 = 1e-6;
/// Floor applied to per-channel normalization std for degenerate windows.
pub const STD_FLOOR_WINDOW: f64 = 1e-8;

/// One named univariate series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub series_id: String,
    pub values: Vec<f64>,
}

impl SeriesRecord {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(AuditError::Config(format!(
                "series {} contains non-finite values",
                self.series_id
            )));
        }
        Ok(())
    }
}

/// A named collection of series with family/provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dataset_id: String,
    pub family: String,
    pub source_id: String,
    pub series: Vec<SeriesRecord>,
    /// Window count after `window_dataset`; 0 until windowed.
    pub n_windows: usize,
}

/// Windowing geometry: lookback, horizon, channels, and stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub context_len: usize,
    pub horizon: usize,
    pub channels: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(context_len: usize, horizon: usize) -> Self {
        WindowSpec {
            context_len,
            horizon,
            channels: 1,
            stride: horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_len == 0 || self.horizon == 0 || self.channels == 0 || self.stride == 0 {
            return Err(AuditError::Config(
                "window spec fields must all be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        self.context_len + self.horizon
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec::new(128, 24)
    }
}

/// One (context, target) sample with the context statistics used to
/// normalize both parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub context: Mat,
    pub target: Mat,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
}

/// Synthetic corpus description: one entry per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub source_id: String,
    pub family: String,
    pub generator: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub sources: Vec<SourceEntry>,
}

impl CorpusManifest {
    pub fn source_count(&self) -> usize {
        self.sources.len()
    }
}

/// Proxy contamination labels over the candidate x dataset grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelManifest {
    pub entries: BTreeMap<(String, String), u8>,
}

impl LabelManifest {
    pub fn label(&self, candidate_id: &str, dataset_id: &str) -> Result<u8> {
        self.entries
            .get(&(candidate_id.to_string(), dataset_id.to_string()))
            .copied()
            .ok_or_else(|| {
                AuditError::MissingPrerequisite(format!(
                    "label manifest missing grid cell ({candidate_id}, {dataset_id})"
                ))
            })
    }
}

/// Parameters controlling synthetic series generation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeriesParams {
    pub min_series: usize,
    pub max_series: usize,
    pub series_len: usize,
}

impl Default for SeriesParams {
    fn default() -> Self {
        SeriesParams {
            min_series: 30,
            max_series: 40,
            series_len: 512,
        }
    }
}

/// The generator families. Each family has a distinct signal class so
/// families differ in intrinsic forecasting difficulty.
const FAMILY_GENERATORS: [&str; 8] = [
    "seasonal_noise",
    "trend_ar",
    "regime_switch",
    "random_walk",
    "harmonic_mix",
    "ar2_oscillation",
    "sawtooth",
    "damped_seasonal",
];

fn gen_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generate one series for the given generator family.
fn generate_series(generator: &str, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = Vec::with_capacity(len);
    match generator {
        "seasonal_noise" => {
            let period = rng.gen_range(12.0..48.0);
            let amp = rng.gen_range(0.5..2.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let noise = rng.gen_range(0.05..0.20);
            for t in 0..len {
                let s = amp * (std::f64::consts::TAU * t as f64 / period + phase).sin();
                v.push(s + noise * gen_normal(rng));
            }
        }
        "trend_ar" => {
            let slope = rng.gen_range(-0.01..0.01);
            let phi = rng.gen_range(0.5..0.9);
            let noise = rng.gen_range(0.1..0.4);
            let mut ar = 0.0;
            for t in 0..len {
                ar = phi * ar + noise * gen_normal(rng);
                v.push(slope * t as f64 + ar);
            }
        }
        "regime_switch" => {
            let mu = [rng.gen_range(-2.0..-0.5), rng.gen_range(0.5..2.0)];
            let switch_p = rng.gen_range(0.01..0.05);
            let noise = rng.gen_range(0.2..0.5);
            let mut state = 0usize;
            for _ in 0..len {
                if rng.gen::<f64>() < switch_p {
                    state = 1 - state;
                }
                v.push(mu[state] + noise * gen_normal(rng));
            }
        }
        "random_walk" => {
            let step = rng.gen_range(0.05..0.3);
            let mut x = 0.0;
            for _ in 0..len {
                x += step * gen_normal(rng);
                v.push(x);
            }
        }
        "harmonic_mix" => {
            let k = rng.gen_range(2..4usize);
            let comps: Vec<(f64, f64, f64)> = (0..k)
                .map(|_| {
                    (
                        rng.gen_range(0.2..1.0),
                        rng.gen_range(8.0..64.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let noise = rng.gen_range(0.02..0.10);
            for t in 0..len {
                let mut s = 0.0;
                for &(a, p, ph) in &comps {
                    s += a * (std::f64::consts::TAU * t as f64 / p + ph).sin();
                }
                v.push(s + noise * gen_normal(rng));
            }
        }
        "ar2_oscillation" => {
            // AR(2) with complex roots: damped stochastic oscillation.
            let r = rng.gen_range(0.90..0.99);
            let omega: f64 = rng.gen_range(0.1..0.8);
            let a1 = 2.0 * r * omega.cos();
            let a2 = -r * r;
            let noise = rng.gen_range(0.1..0.3);
            let (mut y1, mut y2) = (0.0, 0.0);
            for _ in 0..len {
                let y = a1 * y1 + a2 * y2 + noise * gen_normal(rng);
                v.push(y);
                y2 = y1;
                y1 = y;
            }
        }
        "sawtooth" => {
            let period = rng.gen_range(16.0..64.0);
            let amp = rng.gen_range(0.5..2.0);
            let noise = rng.gen_range(0.05..0.25);
            let phase = rng.gen_range(0.0..period);
            for t in 0..len {
                let frac = ((t as f64 + phase) / period).fract();
                v.push(amp * (2.0 * frac - 1.0) + noise * gen_normal(rng));
            }
        }
        "damped_seasonal" => {
            let period = rng.gen_range(12.0..32.0);
            let amp = rng.gen_range(0.5..1.5);
            let sat = rng.gen_range(0.002..0.01);
            let noise = rng.gen_range(0.05..0.20);
            for t in 0..len {
                let trend = 2.0 * (1.0 - (-sat * t as f64).exp());
                let s = amp * (std::f64::consts::TAU * t as f64 / period).sin();
                v.push(trend + s + noise * gen_normal(rng));
            }
        }
        other => panic!("unknown generator family: {other}"),
    }
    v
}

/// Generate the synthetic corpus: `n_families` generator families with
/// `datasets_per_family` datasets each. Each dataset is its own source.
/// Deterministic given `seed` and the parameters.
pub fn generate_corpus(
    seed: u64,
    n_families: usize,
    datasets_per_family: usize,
    params: SeriesParams,
) -> Result<(CorpusManifest, Vec<Dataset>)> {
    if n_families < 2 {
        return Err(AuditError::Config("n_families must be >= 2".into()));
    }
    if datasets_per_family < 1 {
        return Err(AuditError::Config("datasets_per_family must be >= 1".into()));
    }
    if n_families > FAMILY_GENERATORS.len() {
        return Err(AuditError::Config(format!(
            "at most {} families supported",
            FAMILY_GENERATORS.len()
        )));
    }
    if params.min_series < MIN_SERIES || params.max_series < params.min_series {
        return Err(AuditError::Config(
            "series_per_dataset range must satisfy 30 <= min <= max".into(),
        ));
    }

    let mut sources = Vec::new();
    let mut datasets = Vec::new();
    for (fi, generator) in FAMILY_GENERATORS.iter().take(n_families).enumerate() {
        let family = format!("fam_{generator}");
        for di in 0..datasets_per_family {
            let dataset_id = format!("{generator}_{di:02}");
            let source_id = format!("src_{dataset_id}");
            let src_seed = derive_seed(seed, &format!("corpus/{fi}/{di}"));
            let mut rng = ChaCha8Rng::seed_from_u64(src_seed);
            let n_series = rng.gen_range(params.min_series..=params.max_series);
            let series = (0..n_series)
                .map(|si| SeriesRecord {
                    series_id: format!("{dataset_id}_s{si:03}"),
                    values: generate_series(generator, params.series_len, &mut rng),
                })
                .collect();
            sources.push(SourceEntry {
                source_id: source_id.clone(),
                family: family.clone(),
                generator: generator.to_string(),
                seed: src_seed,
            });
            datasets.push(Dataset {
                dataset_id,
                family: family.clone(),
                source_id,
                series,
                n_windows: 0,
            });
        }
    }
    Ok((CorpusManifest { sources }, datasets))
}

/// Apply the retention rules: drop series shorter than L+H or with std
/// below the constant-series floor, reject datasets with fewer than 30
/// survivors, and truncate to the first 50 in stable input order.
pub fn filter_dataset(d: &Dataset, spec: &WindowSpec) -> Result<Dataset> {
    spec.validate()?;
    let min_len = spec.window_len();
    let kept: Vec<SeriesRecord> = d
        .series
        .iter()
        .filter(|s| {
            if s.len() < min_len {
                return false;
            }
            let (_, std) = mean_std(&s.values);
            std >= STD_FLOOR_SERIES
        })
        .take(MAX_SERIES)
        .cloned()
        .collect();
    if kept.len() < MIN_SERIES {
        let reason = if d.series.iter().all(|s| {
            let (_, std) = mean_std(&s.values);
            std < STD_FLOOR_SERIES
        }) {
            RejectReason::AllDegenerate
        } else {
            RejectReason::TooFewSeries
        };
        return Err(AuditError::DatasetRejected {
            reason,
            detail: format!(
                "dataset {}: {} of {} series survive filtering (need {MIN_SERIES})",
                d.dataset_id,
                kept.len(),
                d.series.len()
            ),
        });
    }
    Ok(Dataset {
        dataset_id: d.dataset_id.clone(),
        family: d.family.clone(),
        source_id: d.source_id.clone(),
        series: kept,
        n_windows: 0,
    })
}

/// Slide windows of length L+H over every series at the configured stride
/// and split each into (context, target). Windows are normalized with
/// context statistics.
pub fn window_dataset(d: &Dataset, spec: &WindowSpec) -> Vec<WindowSample> {
    let wlen = spec.window_len();
    let mut out = Vec::new();
    for s in &d.series {
        if s.len() < wlen {
            continue;
        }
        let n_win = (s.len() - wlen) / spec.stride + 1;
        for w in 0..n_win {
            let start = w * spec.stride;
            let ctx = &s.values[start..start + spec.context_len];
            let tgt = &s.values[start + spec.context_len..start + wlen];
            let sample = WindowSample {
                context: Mat::column(ctx),
                target: Mat::column(tgt),
                norm_mean: vec![0.0],
                norm_std: vec![1.0],
            };
            out.push(normalize_window(&sample));
        }
    }
    out
}

/// Count of windows `window_dataset` would emit, recorded as the dataset's n.
pub fn window_count(d: &Dataset, spec: &WindowSpec) -> usize {
    let wlen = spec.window_len();
    d.series
        .iter()
        .filter(|s| s.len() >= wlen)
        .map(|s| (s.len() - wlen) / spec.stride + 1)
        .sum()
}

///// Context-wise z-score: each context channel is standardized by its own
/// population statistics and the target is transformed with the same
/// mean/std. Degenerate channels hit the 1e-8 std floor.
pub fn normalize_window(w: &WindowSample) -> WindowSample {
    let p = w.context.cols;
    let mut means = Vec::with_capacity(p);
    let mut stds = Vec::with_capacity(p);
    let mut ctx = w.context.clone();
    let mut tgt = w.target.clone();
    for c in 0..p {
        let col = w.context.col(c);
        let (mean, std) = mean_std(&col);
        let std = std.max(STD_FLOOR_WINDOW);
        for r in 0..ctx.rows {
            ctx.set(r, c, (w.context.get(r, c) - mean) / std);
        }
        for r in 0..tgt.rows {
            tgt.set(r, c, (w.target.get(r, c) - mean) / std);
        }
        means.push(mean);
        stds.push(std);
    }
    WindowSample {
        context: ctx,
        target: tgt,
        norm_mean: means,
        norm_std: stds,
    }
}

///// Value-normalized duplicate: per-series z-score, new id, same family and
/// source (so its contamination label always equals the original's).
pub fn make_normalized_duplicate(d: &Dataset, new_id: &str) -> Dataset {
    let series = d
        .series
        .iter()
        .map(|s| {
            let (mean, std) = mean_std(&s.values);
            let std = std.max(STD_FLOOR_WINDOW);
            SeriesRecord {
                series_id: s.series_id.clone(),
                values: s.values.iter().map(|v| (v - mean) / std).collect(),
            }
        })
        .collect();
    Dataset {
        dataset_id: new_id.to_string(),
        family: d.family.clone(),
        source_id: d.source_id.clone(),
        series,
        n_windows: d.n_windows,
    }
}

/// Simulation-mode labels: label(candidate, dataset) = 1 iff the dataset's
/// source is in the candidate's pretraining subset.
pub fn derive_labels(
    corpus: &CorpusManifest,
    datasets: &[Dataset],
    pretrain_assignments: &BTreeMap<String, Vec<String>>,
) -> Result<LabelManifest> {
    let known: std::collections::BTreeSet<&str> =
        corpus.sources.iter().map(|s| s.source_id.as_str()).collect();
    for (cand, srcs) in pretrain_assignments {
        for s in srcs {
            if !known.contains(s.as_str()) {
                return Err(AuditError::Config(format!(
                    "candidate {cand} references unknown source {s}"
                )));
            }
        }
    }
    let mut entries = BTreeMap::new();
    for (cand, srcs) in pretrain_assignments {
        let set: std::collections::BTreeSet<&str> = srcs.iter().map(|s| s.as_str()).collect();
        for d in datasets {
            let label = u8::from(set.contains(d.source_id.as_str()));
            entries.insert((cand.clone(), d.dataset_id.clone()), label);
        }
    }
    Ok(LabelManifest { entries })
}

/// Read an external label grid: CSV `candidate_id,dataset_id,label` with
/// label in {0,1,Y,N}.
pub fn load_labels(path: &Path) -> Result<LabelManifest> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| AuditError::Config(format!("cannot open label manifest: {e}")))?;
    let mut entries = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| AuditError::Serde(e.to_string()))?;
        if record.len() != 3 {
            return Err(AuditError::Config(format!(
                "label row must have 3 fields, got {}",
                record.len()
            )));
        }
        let label = match record[2].trim() {
            "1" | "Y" | "y" => 1u8,
            "0" | "N" | "n" => 0u8,
            other => {
                return Err(AuditError::Config(format!("invalid label value: {other}")));
            }
        };
        entries.insert((record[0].to_string(), record[1].to_string()), label);
    }
    Ok(LabelManifest { entries })
}

/// Write a label manifest in the same CSV schema `load_labels` reads.
pub fn save_labels(manifest: &LabelManifest, path: &Path) -> Result<()> {
    let mut out = String::from("candidate_id,dataset_id,label\n");
    for ((cand, ds), label) in &manifest.entries {
        out.push_str(&format!("{cand},{ds},{label}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write a dataset as JSON-lines (one series per line) plus a sidecar with
/// dataset-level metadata.
pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join(format!("{}.jsonl", d.dataset_id)))?;
    for s in &d.series {
        serde_json::to_writer(&mut f, s)?;
        f.write_all(b"\n")?;
    }
    let sidecar = serde_json::json!({
        "dataset_id": d.dataset_id,
        "family": d.family,
        "source_id": d.source_id,
    });
    std::fs::write(
        dir.join(format!("{}.meta.json", d.dataset_id)),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Load a dataset previously written by `save_dataset`. Rejects series with
/// non-finite values.
pub fn load_dataset(dir: &Path, dataset_id: &str) -> Result<Dataset> {
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(
        dir.join(format!("{dataset_id}.meta.json")),
    )?)?;
    let file = std::fs::File::open(dir.join(format!("{dataset_id}.jsonl")))?;
    let mut series = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SeriesRecord = serde_json::from_str(&line)?;
        s.validate()?;
        series.push(s);
    }
    Ok(Dataset {
        dataset_id: dataset_id.to_string(),
        family: meta["family"].as_str().unwrap_or_default().to_string(),
        source_id: meta["source_id"].as_str().unwrap_or_default().to_string(),
        series,
        n_windows: 0,
    })
}

pub fn save_corpus_manifest(m: &CorpusManifest, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(m)?)?;
    Ok(())
}

pub fn load_corpus_manifest(path: &Path) -> Result<CorpusManifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
