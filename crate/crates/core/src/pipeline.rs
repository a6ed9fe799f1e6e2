//! End-to-end orchestration: a declarative run configuration and the
//! file-mediated stages (corpus generation, candidate pretraining, probing,
//! auditing, evaluation, deployment, reporting). Every stage writes its
//! artifacts plus a manifest with the config hash and input hashes; reruns
//! with identical inputs produce byte-identical artifacts.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{
    calibrate_fpk, decide, save_decisions, AuditDecision, FrozenAudit,
};
use crate::baselines::{mink_fft_score, trace_baseline_score, Baseline};
use crate::corpus::{
    derive_labels, filter_dataset, generate_corpus, load_corpus_manifest, load_dataset,
    load_labels, save_corpus_manifest, save_dataset, save_labels, window_dataset,
    CorpusManifest, Dataset, LabelManifest, SeriesParams, WindowSample, WindowSpec,
};
use crate::error::{AuditError, Result};
use crate::eval::{
    aggregate, make_splits, model_macro, pair_micro, save_splits, MetricSet, Split, SplitConfig,
};
use crate::features::{
    assemble_design_matrix, load_features, DebiasMode, FeatureConfig, PairId, RefSelection,
};
use crate::forecaster::{
    pretrain, Architecture, Checkpoint, DisplacementScope, Forecaster, OptimizerConfig,
    OptimizerState, RngState,
};
use crate::probe::{hex_prefix, run_probe, ProbeConfig, TraceStore};
use crate::scorer::{fit_epoch_scorer, select_epoch, ScorerSelection};

/// Corpus generation parameters for a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusParams {
    pub n_families: usize,
    pub datasets_per_family: usize,
    pub series: SeriesParams,
    pub window: WindowSpec,
}

/// One candidate model: pretrained on a declared source subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub id: String,
    pub arch: Architecture,
    pub seed: u64,
    pub pretrain_sources: Vec<String>,
}

/// One reference model: never pretrained on corpus data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub id: String,
    pub arch: Architecture,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for PretrainParams {
    fn default() -> Self {
        PretrainParams {
            epochs: 3,
            batch_size: 8,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// The single declarative configuration driving every stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub corpus: CorpusParams,
    pub candidates: Vec<CandidateSpec>,
    pub references: Vec<ReferenceSpec>,
    pub pretrain: PretrainParams,
    pub probe: ProbeConfig,
    /// Feature configuration tag, e.g. "all_ref", "no_ref",
    /// "all_ref_det", "loss_only", "single_ref:<id>"; an optional
    /// "@diff" / "@ratio" / "@inter" / "@full" suffix selects the mode.
    pub feature_config: String,
    pub fp_budget: usize,
    pub split: SplitConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuditError::Config(format!("cannot read config {path:?}: {e}")))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| AuditError::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.window.validate()?;
        self.probe.validate()?;
        if self.candidates.is_empty() {
            return Err(AuditError::Config("at least one candidate required".into()));
        }
        if self.references.is_empty() {
            return Err(AuditError::Config("at least one reference required".into()));
        }
        let mut ids: Vec<&str> = self
            .candidates
            .iter()
            .map(|c| c.id.as_str())
            .chain(self.references.iter().map(|r| r.id.as_str()))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.candidates.len() + self.references.len() {
            return Err(AuditError::Config("model ids must be unique".into()));
        }
        parse_feature_config(&self.feature_config)?;
        if let RefSelection::Single(id) = &parse_feature_config(&self.feature_config)?.selection {
            if !self.references.iter().any(|r| &r.id == id) {
                return Err(AuditError::Config(format!(
                    "feature config references unknown model {id}"
                )));
            }
        }
        Ok(())
    }

    /// Canonical configuration hash; the output directory is excluded so a
    /// run can be relocated without invalidating its artifacts.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = String::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex_prefix(&Sha256::digest(json.as_bytes()), 16)
    }

    pub fn paths(&self) -> Paths {
        Paths::new(Path::new(&self.out_dir))
    }

    pub fn reference_ids(&self) -> Vec<String> {
        self.references.iter().map(|r| r.id.clone()).collect()
    }
}

/// Parse a feature configuration tag (see `RunConfig::feature_config`).
pub fn parse_feature_config(tag: &str) -> Result<FeatureConfig> {
    let (base, mode) = match tag.split_once('@') {
        Some((b, m)) => (b, Some(m)),
        None => (tag, None),
    };
    let mut cfg = if let Some(id) = base.strip_prefix("single_ref:") {
        FeatureConfig::single_ref(id)
    } else {
        match base {
            "no_ref" => FeatureConfig::no_ref(),
            "all_ref" => FeatureConfig::all_ref(),
            "all_ref_det" => FeatureConfig::all_ref_det(),
            "loss_only" => FeatureConfig::loss_only(),
            other => {
                return Err(AuditError::Config(format!(
                    "unknown feature config tag: {other}"
                )))
            }
        }
    };
    if let Some(m) = mode {
        cfg = cfg.with_mode(match m {
            "full" => DebiasMode::Full,
            "diff" => DebiasMode::Diff,
            "ratio" => DebiasMode::Ratio,
            "inter" => DebiasMode::Inter,
            other => {
                return Err(AuditError::Config(format!("unknown debias mode: {other}")))
            }
        });
    }
    Ok(cfg)
}

/// Artifact layout under the output directory.
#[derive(Debug, Clone)]
pub struct Paths {
    pub root: PathBuf,
    pub data_dir: PathBuf,
    pub models_dir: PathBuf,
    pub corpus_manifest: PathBuf,
    pub labels: PathBuf,
    pub traces: PathBuf,
    pub features: PathBuf,
    pub fft_scores: PathBuf,
    pub splits: PathBuf,
    pub decisions: PathBuf,
    pub frozen_audit: PathBuf,
    pub report: PathBuf,
    pub summary: PathBuf,
    pub deploy_decisions: PathBuf,
    pub deploy_summary: PathBuf,
}

impl Paths {
    pub fn new(root: &Path) -> Paths {
        Paths {
            root: root.to_path_buf(),
            data_dir: root.join("data"),
            models_dir: root.join("models"),
            corpus_manifest: root.join("corpus_manifest.json"),
            labels: root.join("labels.csv"),
            traces: root.join("traces.jsonl"),
            features: root.join("features.jsonl"),
            fft_scores: root.join("fft_scores.jsonl"),
            splits: root.join("splits.json"),
            decisions: root.join("decisions.csv"),
            frozen_audit: root.join("frozen_audit.json"),
            report: root.join("report.csv"),
            summary: root.join("summary.txt"),
            deploy_decisions: root.join("deploy_decisions.csv"),
            deploy_summary: root.join("deploy_summary.csv"),
        }
    }

    fn manifest(&self, stage: &str) -> PathBuf {
        self.root.join(format!("{stage}.manifest.json"))
    }
}

/// Write-temp-then-rename so readers never observe partial files.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex_prefix(&Sha256::digest(&bytes), 16))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(AuditError::MissingPrerequisite(format!(
            "{what} not found at {path:?}; run the producing stage first"
        )));
    }
    Ok(())
}

fn write_manifest(cfg: &RunConfig, stage: &str, inputs: &[&Path]) -> Result<()> {
    let paths = cfg.paths();
    let mut input_hashes = BTreeMap::new();
    for p in inputs {
        input_hashes.insert(
            p.file_name().unwrap_or_default().to_string_lossy().to_string(),
            file_hash(p)?,
        );
    }
    let manifest = serde_json::json!({
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "inputs": input_hashes,
    });
    atomic_write(
        &paths.manifest(stage),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )
}

/// Stage 1: generate, filter, and persist the corpus plus the label grid.
pub fn stage_gen_corpus(cfg: &RunConfig) -> Result<()> {
    let paths = cfg.paths();
    std::fs::create_dir_all(&paths.data_dir)?;
    let (manifest, raw) = generate_corpus(
        cfg.seed,
        cfg.corpus.n_families,
        cfg.corpus.datasets_per_family,
        cfg.corpus.series,
    )?;
    let mut datasets = Vec::with_capacity(raw.len());
    for d in &raw {
        datasets.push(filter_dataset(d, &cfg.corpus.window)?);
    }
    for d in &datasets {
        save_dataset(d, &paths.data_dir)?;
    }
    save_corpus_manifest(&manifest, &paths.corpus_manifest)?;

    let assignments: BTreeMap<String, Vec<String>> = cfg
        .candidates
        .iter()
        .map(|c| (c.id.clone(), c.pretrain_sources.clone()))
        .collect();
    let labels = derive_labels(&manifest, &datasets, &assignments)?;
    save_labels(&labels, &paths.labels)?;
    write_manifest(cfg, "gen-corpus", &[&paths.corpus_manifest, &paths.labels])
}

/// Load every dataset of the run's corpus, in manifest order.
pub fn load_corpus(cfg: &RunConfig) -> Result<(CorpusManifest, Vec<Dataset>)> {
    let paths = cfg.paths();
    require(&paths.corpus_manifest, "corpus manifest")?;
    let manifest = load_corpus_manifest(&paths.corpus_manifest)?;
    let mut datasets = Vec::new();
    for src in &manifest.sources {
        let dataset_id = src
            .source_id
            .strip_prefix("src_")
            .unwrap_or(&src.source_id)
            .to_string();
        datasets.push(load_dataset(&paths.data_dir, &dataset_id)?);
    }
    Ok((manifest, datasets))
}

fn build_model(id: &str, arch: Architecture, cfg: &RunConfig, scope: DisplacementScope) -> Forecaster {
    let seed = crate::util::derive_seed(cfg.seed, &format!("model/{id}"));
    Forecaster::new(id, arch, cfg.corpus.window, scope, seed)
}

fn checkpoint_path(paths: &Paths, id: &str) -> PathBuf {
    paths.models_dir.join(format!("{id}.ckpt.json"))
}

/// Stage 2: pretrain candidates on their assigned sources and snapshot
/// every model's probe origin checkpoint.
pub fn stage_pretrain(cfg: &RunConfig) -> Result<()> {
    let paths = cfg.paths();
    let (_, datasets) = load_corpus(cfg)?;
    std::fs::create_dir_all(&paths.models_dir)?;

    for cand in &cfg.candidates {
        let mut f = build_model(&cand.id, cand.arch, cfg, DisplacementScope::Backbone);
        if !f.is_trainable() {
            return Err(AuditError::Config(format!(
                "candidate {} must be a trainable architecture",
                cand.id
            )));
        }
        let mut pool: Vec<WindowSample> = Vec::new();
        for d in datasets
            .iter()
            .filter(|d| cand.pretrain_sources.contains(&d.source_id))
        {
            pool.extend(window_dataset(d, &cfg.corpus.window));
        }
        if pool.is_empty() {
            return Err(AuditError::Config(format!(
                "candidate {} has an empty pretraining pool",
                cand.id
            )));
        }
        let ck = pretrain(
            &mut f,
            &pool,
            cfg.pretrain.epochs,
            cfg.pretrain.batch_size,
            &cfg.pretrain.optimizer,
            cand.seed,
        )?;
        atomic_write(
            &checkpoint_path(&paths, &cand.id),
            serde_json::to_string(&ck)?.as_bytes(),
        )?;
    }
    for r in &cfg.references {
        let f = build_model(&r.id, r.arch, cfg, DisplacementScope::AllParams);
        let ck = f.snapshot(&OptimizerState::new(f.n_params()), &RngState::new(r.seed));
        atomic_write(
            &checkpoint_path(&paths, &r.id),
            serde_json::to_string(&ck)?.as_bytes(),
        )?;
    }
    write_manifest(cfg, "pretrain", &[&paths.corpus_manifest])
}

fn load_model(cfg: &RunConfig, id: &str, arch: Architecture, scope: DisplacementScope) -> Result<(Forecaster, Checkpoint)> {
    let paths = cfg.paths();
    let path = checkpoint_path(&paths, id);
    require(&path, "model checkpoint")?;
    let ck = Checkpoint::load(&path)?;
    let mut f = build_model(id, arch, cfg, scope);
    f.restore(&ck)?;
    Ok((f, ck))
}

/// Scalar scores that need the model itself (the frequency baseline),
/// computed once at probe time and persisted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarScores {
    pub config_hash: String,
    pub scores: BTreeMap<(String, String, String), f64>, // (method, candidate, dataset)
}

impl ScalarScores {
    pub fn get(&self, method: &str, candidate: &str, dataset: &str) -> Result<f64> {
        self.scores
            .get(&(method.to_string(), candidate.to_string(), dataset.to_string()))
            .copied()
            .ok_or_else(|| {
                AuditError::MissingPrerequisite(format!(
                    "no stored {method} score for ({candidate}, {dataset})"
                ))
            })
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for ((method, cand, ds), score) in &self.scores {
            let rec = serde_json::json!({
                "method": method,
                "candidate_id": cand,
                "dataset_id": ds,
                "score": score,
                "config_hash": self.config_hash,
            });
            serde_json::to_writer(&mut buf, &rec)?;
            buf.push(b'\n');
        }
        atomic_write(path, &buf)
    }

    pub fn load_jsonl(path: &Path) -> Result<ScalarScores> {
        let file = std::fs::File::open(path)?;
        let mut out = ScalarScores::default();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: serde_json::Value = serde_json::from_str(&line)?;
            out.config_hash = rec["config_hash"].as_str().unwrap_or_default().to_string();
            out.scores.insert(
                (
                    rec["method"].as_str().unwrap_or_default().to_string(),
                    rec["candidate_id"].as_str().unwrap_or_default().to_string(),
                    rec["dataset_id"].as_str().unwrap_or_default().to_string(),
                ),
                rec["score"].as_f64().unwrap_or(f64::NAN),
            );
        }
        Ok(out)
    }
}

pub const FFT_TOP_PCTS: [usize; 3] = [10, 20, 30];

/// Stage 3: probe every (model, dataset) pair and persist traces, plus the
/// frequency-baseline scores that need model forecasts. `workers` sizes a
/// thread pool over models; each worker owns its model instance.
pub fn stage_probe(cfg: &RunConfig, workers: usize) -> Result<()> {
    let paths = cfg.paths();
    let (_, datasets) = load_corpus(cfg)?;
    let mut models: Vec<(bool, Forecaster, Checkpoint)> = Vec::new();
    for c in &cfg.candidates {
        let (f, ck) = load_model(cfg, &c.id, c.arch, DisplacementScope::Backbone)?;
        models.push((true, f, ck));
    }
    for r in &cfg.references {
        let (f, ck) = load_model(cfg, &r.id, r.arch, DisplacementScope::AllParams)?;
        models.push((false, f, ck));
    }

    let probe_cfg = &cfg.probe;
    let hash = probe_cfg.config_hash();
    let workers = workers.max(1).min(models.len());
    let results: Vec<Result<(TraceStore, ScalarScores)>> = std::thread::scope(|scope| {
        let chunk = models.len().div_ceil(workers);
        let handles: Vec<_> = models
            .chunks_mut(chunk)
            .map(|part| {
                let datasets = &datasets;
                let hash = hash.clone();
                scope.spawn(move || -> Result<(TraceStore, ScalarScores)> {
                    let mut store = TraceStore::new(&hash);
                    let mut fft = ScalarScores {
                        config_hash: hash.clone(),
                        scores: BTreeMap::new(),
                    };
                    for (is_candidate, f, ck) in part.iter_mut() {
                        for d in datasets {
                            store.insert(run_probe(f, ck, d, probe_cfg)?);
                            if *is_candidate {
                                for pct in FFT_TOP_PCTS {
                                    let s = mink_fft_score(f, d, &f.window.clone(), pct)?;
                                    fft.scores.insert(
                                        (
                                            format!("ts_mink_fft_{pct}"),
                                            f.model_id.clone(),
                                            d.dataset_id.clone(),
                                        ),
                                        s,
                                    );
                                }
                            }
                        }
                    }
                    Ok((store, fft))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("probe worker")).collect()
    });

    let mut store = TraceStore::new(&hash);
    let mut fft = ScalarScores {
        config_hash: hash.clone(),
        scores: BTreeMap::new(),
    };
    for r in results {
        let (s, f) = r?;
        for t in s.traces.into_values() {
            store.insert(t);
        }
        fft.scores.extend(f.scores);
    }
    store.save_jsonl(&paths.traces)?;
    fft.save_jsonl(&paths.fft_scores)?;
    write_manifest(cfg, "probe", &[&paths.traces, &paths.fft_scores])
}

/// The full audited pair grid with family annotations, in deterministic
/// candidate-major, dataset-minor order.
pub fn audit_pairs(cfg: &RunConfig, datasets: &[Dataset]) -> (Vec<PairId>, Vec<String>) {
    let mut pairs = Vec::new();
    let mut families = Vec::new();
    for c in &cfg.candidates {
        for d in datasets {
            pairs.push(PairId::new(&c.id, &d.dataset_id));
            families.push(d.family.clone());
        }
    }
    (pairs, families)
}

/// Debiased per-epoch features for every pair, in pair order.
pub fn compute_pair_features(
    pairs: &[PairId],
    feature_cfg: &FeatureConfig,
    ref_ids: &[String],
    store: &TraceStore,
    probe_cfg: &ProbeConfig,
) -> Result<Vec<(PairId, crate::features::DebiasedFeatures)>> {
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let cand = crate::features::summarize_trace(
            store.get(&p.candidate_id, &p.dataset_id)?,
            probe_cfg,
        )?;
        let refs: Vec<(String, crate::features::TraceSummary)> = ref_ids
            .iter()
            .map(|r| {
                Ok((
                    r.clone(),
                    crate::features::summarize_trace(store.get(r, &p.dataset_id)?, probe_cfg)?,
                ))
            })
            .collect::<Result<_>>()?;
        out.push((
            p.clone(),
            crate::features::debias(&cand, &refs, probe_cfg, feature_cfg)?,
        ));
    }
    Ok(out)
}

fn probe_len(store: &TraceStore) -> Result<usize> {
    store
        .traces
        .values()
        .next()
        .map(|t| t.t_probe())
        .ok_or_else(|| AuditError::MissingPrerequisite("trace store is empty".into()))
}

/// Fit per-epoch scorers on calibration pairs and select the epoch by
/// calibration MCC at the FP-k threshold.
pub fn fit_and_select(
    cal_pairs: &[PairId],
    labels: &LabelManifest,
    feature_cfg: &FeatureConfig,
    ref_ids: &[String],
    store: &TraceStore,
    probe_cfg: &ProbeConfig,
    fp_budget: usize,
) -> Result<(ScorerSelection, Vec<Vec<Vec<f64>>>, Vec<u8>)> {
    let t_probe = probe_len(store)?;
    let mut scorers = Vec::with_capacity(t_probe);
    let mut x_by_epoch = Vec::with_capacity(t_probe);
    let mut y_cal = Vec::new();
    for t in 1..=t_probe {
        let (x, y) = assemble_design_matrix(
            cal_pairs, labels, t, feature_cfg, ref_ids, store, probe_cfg,
        )?;
        scorers.push(fit_epoch_scorer(&x, &y, t, 1.0, 1000, 1e-6)?);
        x_by_epoch.push(x);
        y_cal = y;
    }
    let sel = select_epoch(&scorers, &x_by_epoch, &y_cal, fp_budget)?;
    Ok((sel, x_by_epoch, y_cal))
}

/// One method under evaluation: the feature-based scorer path or a scalar
/// baseline sharing the FP-k decision path.
#[derive(Debug, Clone)]
pub enum Method {
    Features(FeatureConfig),
    Scalar(Baseline),
}

impl Method {
    pub fn tag(&self) -> String {
        match self {
            Method::Features(fc) => fc.tag(),
            Method::Scalar(b) => b.tag(),
        }
    }
}

fn scalar_score(
    b: &Baseline,
    pair: &PairId,
    store: &TraceStore,
    fft: &ScalarScores,
    ref_ids: &[String],
    probe_cfg: &ProbeConfig,
) -> Result<f64> {
    match b {
        Baseline::MinkFft { top_pct } => fft.get(
            &format!("ts_mink_fft_{top_pct}"),
            &pair.candidate_id,
            &pair.dataset_id,
        ),
        _ => {
            let cand = store.get(&pair.candidate_id, &pair.dataset_id)?;
            let refs: Vec<(String, crate::probe::ProbeTrace)> = ref_ids
                .iter()
                .map(|r| Ok((r.clone(), store.get(r, &pair.dataset_id)?.clone())))
                .collect::<Result<_>>()?;
            trace_baseline_score(b, cand, &refs, probe_cfg)
        }
    }
}

/// Per-repeat outcome of one method: pooled-pair and per-candidate metric
/// sets plus the evaluation-side decisions.
#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub micro: MetricSet,
    pub macro_: MetricSet,
    pub decisions: Vec<AuditDecision>,
}

/// Evaluate one method on one split.
pub fn run_method_on_split(
    method: &Method,
    split: &Split,
    pairs: &[PairId],
    labels: &LabelManifest,
    ref_ids: &[String],
    store: &TraceStore,
    fft: &ScalarScores,
    probe_cfg: &ProbeConfig,
    fp_budget: usize,
) -> Result<RepeatOutcome> {
    let cal_pairs: Vec<PairId> = split.calibration.iter().map(|&i| pairs[i].clone()).collect();
    let eval_pairs: Vec<PairId> = split.evaluation.iter().map(|&i| pairs[i].clone()).collect();
    let y_eval: Vec<u8> = eval_pairs
        .iter()
        .map(|p| labels.label(&p.candidate_id, &p.dataset_id))
        .collect::<Result<_>>()?;

    let (cal_scores, cal_y, eval_scores) = match method {
        Method::Features(fc) => {
            let (sel, x_by_epoch, cal_y) = fit_and_select(
                &cal_pairs, labels, fc, ref_ids, store, probe_cfg, fp_budget,
            )?;
            let cal_scores = sel.scorer.score_rows(&x_by_epoch[sel.epoch - 1])?;
            let (x_eval, _) = assemble_design_matrix(
                &eval_pairs, labels, sel.epoch, fc, ref_ids, store, probe_cfg,
            )?;
            (cal_scores, cal_y, sel.scorer.score_rows(&x_eval)?)
        }
        Method::Scalar(b) => {
            let cal_y: Vec<u8> = cal_pairs
                .iter()
                .map(|p| labels.label(&p.candidate_id, &p.dataset_id))
                .collect::<Result<_>>()?;
            let cal_scores: Vec<f64> = cal_pairs
                .iter()
                .map(|p| scalar_score(b, p, store, fft, ref_ids, probe_cfg))
                .collect::<Result<_>>()?;
            let eval_scores: Vec<f64> = eval_pairs
                .iter()
                .map(|p| scalar_score(b, p, store, fft, ref_ids, probe_cfg))
                .collect::<Result<_>>()?;
            (cal_scores, cal_y, eval_scores)
        }
    };

    let clean: Vec<f64> = cal_scores
        .iter()
        .zip(cal_y.iter())
        .filter(|(_, &l)| l == 0)
        .map(|(s, _)| *s)
        .collect();
    let cal = calibrate_fpk(&clean, fp_budget)?;
    let pred: Vec<u8> = eval_scores.iter().map(|&s| u8::from(decide(s, &cal))).collect();
    let cand_ids: Vec<String> = eval_pairs.iter().map(|p| p.candidate_id.clone()).collect();

    let decisions = eval_pairs
        .iter()
        .zip(eval_scores.iter())
        .map(|(p, &s)| AuditDecision {
            candidate_id: p.candidate_id.clone(),
            dataset_id: p.dataset_id.clone(),
            score: s,
            threshold: cal.threshold,
            flagged: decide(s, &cal),
        })
        .collect();
    Ok(RepeatOutcome {
        micro: pair_micro(&pred, &eval_scores, &y_eval),
        macro_: model_macro(&cand_ids, &pred, &eval_scores, &y_eval),
        decisions,
    })
}

/// Evaluate several methods over every split.
pub fn evaluate_methods(
    methods: &[Method],
    splits: &[Split],
    pairs: &[PairId],
    labels: &LabelManifest,
    ref_ids: &[String],
    store: &TraceStore,
    fft: &ScalarScores,
    probe_cfg: &ProbeConfig,
    fp_budget: usize,
) -> Result<BTreeMap<String, Vec<RepeatOutcome>>> {
    let mut out = BTreeMap::new();
    for method in methods {
        let mut repeats = Vec::with_capacity(splits.len());
        for split in splits {
            repeats.push(run_method_on_split(
                method, split, pairs, labels, ref_ids, store, fft, probe_cfg, fp_budget,
            )?);
        }
        out.insert(method.tag(), repeats);
    }
    Ok(out)
}

/// One aggregated report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub level: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

pub fn outcome_rows(tag: &str, repeats: &[RepeatOutcome]) -> Vec<ReportRow> {
    let metric_values = |pick: &dyn Fn(&MetricSet) -> f64, level: &str| -> Vec<(String, Vec<f64>)> {
        let values: Vec<f64> = repeats
            .iter()
            .map(|r| pick(if level == "pair_micro" { &r.micro } else { &r.macro_ }))
            .collect();
        vec![(level.to_string(), values)]
    };
    let mut rows = Vec::new();
    let metrics: [(&str, fn(&MetricSet) -> f64); 5] = [
        ("mcc", |m| m.mcc),
        ("macro_f1", |m| m.macro_f1),
        ("balanced_accuracy", |m| m.balanced_accuracy),
        ("auroc", |m| m.auroc),
        ("auprc", |m| m.auprc),
    ];
    for level in ["pair_micro", "model_macro"] {
        for (name, pick) in metrics {
            for (lvl, values) in metric_values(&pick, level) {
                let agg = aggregate(&values);
                rows.push(ReportRow {
                    method: tag.to_string(),
                    level: lvl,
                    metric: name.to_string(),
                    mean: agg.mean,
                    std: agg.std,
                });
            }
        }
    }
    rows
}

pub fn save_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut buf = String::from("method,level,metric,mean,std\n");
    for r in rows {
        buf.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method, r.level, r.metric, r.mean, r.std
        ));
    }
    atomic_write(path, buf.as_bytes())
}

pub fn load_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(ReportRow {
            method: rec.get(0).unwrap_or_default().to_string(),
            level: rec.get(1).unwrap_or_default().to_string(),
            metric: rec.get(2).unwrap_or_default().to_string(),
            mean: rec.get(3).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN),
            std: rec.get(4).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN),
        });
    }
    Ok(out)
}

fn load_run_inputs(cfg: &RunConfig) -> Result<(Vec<Dataset>, LabelManifest, TraceStore, ScalarScores)> {
    let paths = cfg.paths();
    require(&paths.traces, "probe traces")?;
    require(&paths.labels, "label manifest")?;
    require(&paths.fft_scores, "frequency-baseline scores")?;
    let (_, datasets) = load_corpus(cfg)?;
    let labels = load_labels(&paths.labels)?;
    let store = TraceStore::load_jsonl(&paths.traces)?;
    if store.config_hash != cfg.probe.config_hash() {
        return Err(AuditError::ConfigHashMismatch {
            expected: cfg.probe.config_hash(),
            found: store.config_hash,
        });
    }
    let fft = ScalarScores::load_jsonl(&paths.fft_scores)?;
    Ok((datasets, labels, store, fft))
}

/// Build (or reuse) the run's split manifests.
pub fn run_splits(cfg: &RunConfig, families: &[String], y: &[u8]) -> Result<Vec<Split>> {
    let paths = cfg.paths();
    if paths.splits.exists() {
        return crate::eval::load_splits(&paths.splits);
    }
    let splits = make_splits(families, y, &cfg.split)?;
    save_splits(&paths.splits, &splits)?;
    Ok(splits)
}

///// Stage 4: per-repeat audit decisions for the configured feature method,
/// plus the frozen audit fitted on the whole internal grid for deployment.
pub fn stage_audit(cfg: &RunConfig) -> Result<()> {
    let paths = cfg.paths();
    let (datasets, labels, store, fft) = load_run_inputs(cfg)?;
    let (pairs, families) = audit_pairs(cfg, &datasets);
    let y: Vec<u8> = pairs
        .iter()
        .map(|p| labels.label(&p.candidate_id, &p.dataset_id))
        .collect::<Result<_>>()?;
    let splits = run_splits(cfg, &families, &y)?;
    let feature_cfg = parse_feature_config(&cfg.feature_config)?;
    let ref_ids = cfg.reference_ids();
    let method = Method::Features(feature_cfg.clone());

    let mut buf = String::from("repeat,candidate_id,dataset_id,score,threshold,decision,label\n");
    for split in &splits {
        let outcome = run_method_on_split(
            &method, split, &pairs, &labels, &ref_ids, &store, &fft, &cfg.probe, cfg.fp_budget,
        )?;
        for d in &outcome.decisions {
            buf.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                split.repeat,
                d.candidate_id,
                d.dataset_id,
                d.score,
                d.threshold,
                u8::from(d.flagged),
                labels.label(&d.candidate_id, &d.dataset_id)?,
            ));
        }
    }
    atomic_write(&paths.decisions, buf.as_bytes())?;

    // per-pair debiased feature artifact (also the deployment input format)
    let records = compute_pair_features(&pairs, &feature_cfg, &ref_ids, &store, &cfg.probe)?;
    crate::features::save_features(&paths.features, &records, &store.config_hash)?;

    // frozen audit: fit on the full internal grid, calibrate on all clean
    // internal pairs, no external data enters scorer training
    let (sel, x_by_epoch, y_all) = fit_and_select(
        &pairs, &labels, &feature_cfg, &ref_ids, &store, &cfg.probe, cfg.fp_budget,
    )?;
    let all_scores = sel.scorer.score_rows(&x_by_epoch[sel.epoch - 1])?;
    let clean: Vec<f64> = all_scores
        .iter()
        .zip(y_all.iter())
        .filter(|(_, &l)| l == 0)
        .map(|(s, _)| *s)
        .collect();
    let calibration = calibrate_fpk(&clean, cfg.fp_budget)?;
    let frozen = FrozenAudit {
        scorer: sel.scorer,
        calibration,
        config_hash: store.config_hash.clone(),
    };
    atomic_write(&paths.frozen_audit, serde_json::to_string_pretty(&frozen)?.as_bytes())?;
    write_manifest(
        cfg,
        "audit",
        &[&paths.decisions, &paths.features, &paths.frozen_audit, &paths.splits],
    )
}

/// Default method roster for the evaluation stage: the configured feature
/// method, the candidate-only dynamics baseline, and all scalar baselines.
pub fn default_methods(cfg: &RunConfig) -> Result<Vec<Method>> {
    let mut methods = vec![
        Method::Features(parse_feature_config(&cfg.feature_config)?),
        Method::Features(FeatureConfig::no_ref()),
        Method::Scalar(Baseline::RawLoss),
        Method::Scalar(Baseline::LossDropRate),
    ];
    for r in &cfg.references {
        methods.push(Method::Scalar(Baseline::LiraRatio {
            reference_id: r.id.clone(),
        }));
    }
    for pct in FFT_TOP_PCTS {
        methods.push(Method::Scalar(Baseline::MinkFft { top_pct: pct }));
    }
    Ok(methods)
}

/// Stage 5: evaluate the configured method and every baseline over the
/// repeated splits and write the aggregated report.
pub fn stage_evaluate(cfg: &RunConfig) -> Result<()> {
    let paths = cfg.paths();
    let (datasets, labels, store, fft) = load_run_inputs(cfg)?;
    let (pairs, families) = audit_pairs(cfg, &datasets);
    let y: Vec<u8> = pairs
        .iter()
        .map(|p| labels.label(&p.candidate_id, &p.dataset_id))
        .collect::<Result<_>>()?;
    let splits = run_splits(cfg, &families, &y)?;
    let methods = default_methods(cfg)?;
    let outcomes = evaluate_methods(
        &methods, &splits, &pairs, &labels, &cfg.reference_ids(), &store, &fft, &cfg.probe,
        cfg.fp_budget,
    )?;
    let mut rows = Vec::new();
    for (tag, repeats) in &outcomes {
        rows.extend(outcome_rows(tag, repeats));
    }
    save_report(&paths.report, &rows)?;
    write_manifest(cfg, "evaluate", &[&paths.report, &paths.splits])
}

/// Probe-length sweep: truncate stored traces to each T and re-run the
/// configured method on the same splits. No re-probing occurs.
pub fn probe_length_sweep(cfg: &RunConfig, t_values: &[usize]) -> Result<Vec<(usize, Vec<ReportRow>)>> {
    let (datasets, labels, store, fft) = load_run_inputs(cfg)?;
    let (pairs, families) = audit_pairs(cfg, &datasets);
    let y: Vec<u8> = pairs
        .iter()
        .map(|p| labels.label(&p.candidate_id, &p.dataset_id))
        .collect::<Result<_>>()?;
    let splits = run_splits(cfg, &families, &y)?;
    let method = Method::Features(parse_feature_config(&cfg.feature_config)?);
    let mut out = Vec::new();
    for &t in t_values {
        let truncated = store.truncated(t);
        let outcomes = evaluate_methods(
            &[method.clone()], &splits, &pairs, &labels, &cfg.reference_ids(), &truncated, &fft,
            &cfg.probe, cfg.fp_budget,
        )?;
        let (tag, repeats) = outcomes.iter().next().unwrap();
        out.push((t, outcome_rows(tag, repeats)));
    }
    Ok(out)
}

/// Per-candidate deployment summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploySummaryRow {
    pub candidate_id: String,
    pub n_pairs: usize,
    pub n_flagged: usize,
    pub non_leak_rate: f64,
    pub cp_lower_95: f64,
}

/// Stage 6: apply the frozen audit to externally produced per-pair feature
/// files; nothing is re-fit. Writes decisions plus per-candidate non-leak
/// rates with exact binomial lower bounds.
pub fn stage_deploy(cfg: &RunConfig, features_path: &Path) -> Result<Vec<DeploySummaryRow>> {
    let paths = cfg.paths();
    require(&paths.frozen_audit, "frozen audit")?;
    require(features_path, "external feature file")?;
    let frozen = FrozenAudit::load(&paths.frozen_audit)?;
    let (records, feat_hash) = load_features(features_path)?;
    let epoch = frozen.scorer.epoch;
    let mut pair_keys = Vec::with_capacity(records.len());
    let mut rows = Vec::with_capacity(records.len());
    for (pair, feats) in &records {
        if epoch > feats.per_epoch.len() {
            return Err(AuditError::Shape(format!(
                "external features stop at epoch {}, scorer needs epoch {epoch}",
                feats.per_epoch.len()
            )));
        }
        pair_keys.push((pair.candidate_id.clone(), pair.dataset_id.clone()));
        rows.push(feats.per_epoch[epoch - 1].clone());
    }
    let decisions = frozen.deploy(&pair_keys, &rows, &feat_hash)?;
    save_decisions(&paths.deploy_decisions, &decisions)?;

    let mut by_candidate: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for d in &decisions {
        let e = by_candidate.entry(d.candidate_id.as_str()).or_insert((0, 0));
        e.0 += 1;
        if d.flagged {
            e.1 += 1;
        }
    }
    let mut summary = Vec::new();
    let mut buf = String::from("candidate_id,n_pairs,n_flagged,non_leak_rate,cp_lower_95\n");
    for (cand, (n, flagged)) in by_candidate {
        let non_leak = n - flagged;
        let rate = 100.0 * non_leak as f64 / n as f64;
        let bound = 100.0 * crate::eval::clopper_pearson_lower(non_leak, n, 0.05)?;
        buf.push_str(&format!("{cand},{n},{flagged},{rate},{bound}\n"));
        summary.push(DeploySummaryRow {
            candidate_id: cand.to_string(),
            n_pairs: n,
            n_flagged: flagged,
            non_leak_rate: rate,
            cp_lower_95: bound,
        });
    }
    atomic_write(&paths.deploy_summary, buf.as_bytes())?;
    write_manifest(
        cfg,
        "deploy",
        &[&paths.deploy_decisions, &paths.deploy_summary],
    )?;
    Ok(summary)
}

/// Stage 7: render the metric report as a fixed-width text table.
pub fn stage_report(cfg: &RunConfig) -> Result<()> {
    let paths = cfg.paths();
    require(&paths.report, "metric report")?;
    let rows = load_report(&paths.report)?;
    let mut buf = String::new();
    buf.push_str(&format!(
        "{:<28} {:<12} {:<18} {:>10} {:>10}\n",
        "method", "level", "metric", "mean", "std"
    ));
    buf.push_str(&"-".repeat(82));
    buf.push('\n');
    for r in &rows {
        buf.push_str(&format!(
            "{:<28} {:<12} {:<18} {:>10.4} {:>10.4}\n",
            r.method, r.level, r.metric, r.mean, r.std
        ));
    }
    atomic_write(&paths.summary, buf.as_bytes())?;
    write_manifest(cfg, "report", &[&paths.summary])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(out: &Path) -> RunConfig {
        RunConfig {
            seed: 0,
            out_dir: out.to_string_lossy().to_string(),
            corpus: CorpusParams {
                n_families: 3,
                datasets_per_family: 2,
                series: SeriesParams {
                    min_series: 30,
                    max_series: 30,
                    series_len: 120,
                },
                window: WindowSpec {
                    context_len: 24,
                    horizon: 8,
                    channels: 1,
                    stride: 8,
                },
            },
            candidates: vec![
                CandidateSpec {
                    id: "cand_a".into(),
                    arch: Architecture::ScratchMlp { hidden: 8 },
                    seed: 1,
                    pretrain_sources: vec![
                        "src_seasonal_noise_00".into(),
                        "src_trend_ar_00".into(),
                        "src_regime_switch_00".into(),
                    ],
                },
                CandidateSpec {
                    id: "cand_b".into(),
                    arch: Architecture::ScratchMlp { hidden: 8 },
                    seed: 2,
                    pretrain_sources: vec![
                        "src_seasonal_noise_01".into(),
                        "src_trend_ar_01".into(),
                        "src_regime_switch_01".into(),
                    ],
                },
            ],
            references: vec![
                ReferenceSpec {
                    id: "ref_stat".into(),
                    arch: Architecture::StatEnsemble,
                    seed: 0,
                },
                ReferenceSpec {
                    id: "ref_frozen".into(),
                    arch: Architecture::FrozenFeature { d_feat: 8 },
                    seed: 7,
                },
            ],
            pretrain: PretrainParams {
                epochs: 2,
                batch_size: 8,
                optimizer: OptimizerConfig::default(),
            },
            probe: ProbeConfig {
                t_probe: 2,
                ..Default::default()
            },
            feature_config: "all_ref".into(),
            fp_budget: 0,
            split: SplitConfig {
                n_repeats: 3,
                ..Default::default()
            },
        }
    }

    #[test]
    fn feature_config_tags_parse() {
        assert_eq!(parse_feature_config("no_ref").unwrap(), FeatureConfig::no_ref());
        assert_eq!(parse_feature_config("all_ref").unwrap(), FeatureConfig::all_ref());
        assert_eq!(
            parse_feature_config("all_ref_det").unwrap(),
            FeatureConfig::all_ref_det()
        );
        assert_eq!(
            parse_feature_config("loss_only").unwrap(),
            FeatureConfig::loss_only()
        );
        assert_eq!(
            parse_feature_config("single_ref:ref_stat").unwrap(),
            FeatureConfig::single_ref("ref_stat")
        );
        assert_eq!(
            parse_feature_config("all_ref@diff").unwrap(),
            FeatureConfig::all_ref().with_mode(DebiasMode::Diff)
        );
        assert!(parse_feature_config("bogus").is_err());
        assert!(parse_feature_config("all_ref@bogus").is_err());
    }

    #[test]
    fn config_roundtrip_and_hash_stability() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let toml_text = toml::to_string(&cfg).unwrap();
        let parsed: RunConfig = toml::from_str(&toml_text).unwrap();
        assert_eq!(cfg.config_hash(), parsed.config_hash());
        // the hash ignores the output directory
        let mut moved = cfg.clone();
        moved.out_dir = "/elsewhere".into();
        assert_eq!(cfg.config_hash(), moved.config_hash());
        // but not substantive fields
        let mut changed = cfg.clone();
        changed.fp_budget = 1;
        assert_ne!(cfg.config_hash(), changed.config_hash());
    }

    #[test]
    fn validation_catches_duplicate_ids_and_bad_tags() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        assert!(cfg.validate().is_ok());
        cfg.references[0].id = "cand_a".into();
        assert!(cfg.validate().is_err());
        let mut cfg2 = tiny_config(dir.path());
        cfg2.feature_config = "nonsense".into();
        assert!(cfg2.validate().is_err());
        let mut cfg3 = tiny_config(dir.path());
        cfg3.feature_config = "single_ref:ghost".into();
        assert!(cfg3.validate().is_err());
    }

    #[test]
    fn stages_require_prerequisites() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        // pretrain before gen-corpus: missing prerequisite
        let err = stage_pretrain(&cfg).unwrap_err();
        assert!(matches!(err, AuditError::MissingPrerequisite(_)));
        let err = stage_audit(&cfg).unwrap_err();
        assert!(matches!(err, AuditError::MissingPrerequisite(_)));
    }

    #[test]
    fn full_pipeline_smoke_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        stage_gen_corpus(&cfg).unwrap();
        stage_pretrain(&cfg).unwrap();
        stage_probe(&cfg, 1).unwrap();
        stage_audit(&cfg).unwrap();
        stage_evaluate(&cfg).unwrap();
        stage_report(&cfg).unwrap();
        let paths = cfg.paths();
        for p in [
            &paths.corpus_manifest,
            &paths.labels,
            &paths.traces,
            &paths.fft_scores,
            &paths.splits,
            &paths.decisions,
            &paths.features,
            &paths.frozen_audit,
            &paths.report,
            &paths.summary,
        ] {
            assert!(p.exists(), "{p:?} missing");
        }
        let traces1 = std::fs::read(&paths.traces).unwrap();
        let report1 = std::fs::read(&paths.report).unwrap();
        let decisions1 = std::fs::read(&paths.decisions).unwrap();
        let features1 = std::fs::read(&paths.features).unwrap();

        // a second run in a fresh directory produces byte-identical artifacts
        let dir2 = tempfile::tempdir().unwrap();
        let mut cfg2 = tiny_config(dir2.path());
        cfg2.out_dir = dir2.path().to_string_lossy().to_string();
        stage_gen_corpus(&cfg2).unwrap();
        stage_pretrain(&cfg2).unwrap();
        stage_probe(&cfg2, 1).unwrap();
        stage_audit(&cfg2).unwrap();
        stage_evaluate(&cfg2).unwrap();
        let paths2 = cfg2.paths();
        assert_eq!(traces1, std::fs::read(&paths2.traces).unwrap());
        assert_eq!(report1, std::fs::read(&paths2.report).unwrap());
        assert_eq!(decisions1, std::fs::read(&paths2.decisions).unwrap());
        assert_eq!(features1, std::fs::read(&paths2.features).unwrap());
    }

    #[test]
    fn deploy_refuses_mismatched_features_and_accepts_matching() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        stage_gen_corpus(&cfg).unwrap();
        stage_pretrain(&cfg).unwrap();
        stage_probe(&cfg, 1).unwrap();
        stage_audit(&cfg).unwrap();

        // build a matching external feature file from the run's own traces
        let (datasets, _, store, _) = load_run_inputs(&cfg).unwrap();
        let (pairs, _) = audit_pairs(&cfg, &datasets);
        let fc = parse_feature_config(&cfg.feature_config).unwrap();
        let records =
            compute_pair_features(&pairs, &fc, &cfg.reference_ids(), &store, &cfg.probe).unwrap();
        let good = dir.path().join("external_features.jsonl");
        crate::features::save_features(&good, &records, &store.config_hash).unwrap();
        let summary = stage_deploy(&cfg, &good).unwrap();
        assert!(!summary.is_empty());
        for row in &summary {
            assert!(row.non_leak_rate >= 0.0 && row.non_leak_rate <= 100.0);
            assert!(row.cp_lower_95 <= row.non_leak_rate + 1e-9);
        }

        // same features under a wrong hash are refused
        let bad = dir.path().join("bad_features.jsonl");
        crate::features::save_features(&bad, &records, "deadbeef").unwrap();
        let err = stage_deploy(&cfg, &bad).unwrap_err();
        assert!(matches!(err, AuditError::ConfigHashMismatch { .. }));
    }

    #[test]
    fn probe_workers_do_not_change_artifacts() {
        let dir1 = tempfile::tempdir().unwrap();
        let cfg1 = tiny_config(dir1.path());
        stage_gen_corpus(&cfg1).unwrap();
        stage_pretrain(&cfg1).unwrap();
        stage_probe(&cfg1, 1).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let cfg2 = tiny_config(dir2.path());
        stage_gen_corpus(&cfg2).unwrap();
        stage_pretrain(&cfg2).unwrap();
        stage_probe(&cfg2, 4).unwrap();
        assert_eq!(
            std::fs::read(&cfg1.paths().traces).unwrap(),
            std::fs::read(&cfg2.paths().traces).unwrap()
        );
    }

    #[test]
    fn scalar_score_store_roundtrip() {
        let mut s = ScalarScores {
            config_hash: "h".into(),
            scores: BTreeMap::new(),
        };
        s.scores
            .insert(("ts_mink_fft_10".into(), "c".into(), "d".into()), -1.25);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fft.jsonl");
        s.save_jsonl(&p).unwrap();
        let loaded = ScalarScores::load_jsonl(&p).unwrap();
        assert_eq!(s, loaded);
        assert_eq!(loaded.get("ts_mink_fft_10", "c", "d").unwrap(), -1.25);
        assert!(loaded.get("ts_mink_fft_10", "c", "missing").is_err());
    }
}
