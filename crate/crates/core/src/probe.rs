//! The shared fine-tuning probe: run a fixed number of gradient epochs on a
//! (model, dataset) pair from a common origin checkpoint and record the
//! optimization trace. The model is reset to the origin afterwards, so all
//! traces are measured from the same starting point.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{window_dataset, Dataset};
use crate::error::{AuditError, Result};
use crate::forecaster::{adamw_step, shuffle, Checkpoint, Forecaster, OptimizerConfig, OptimizerState};
use crate::util::derive_seed;

/// Probe protocol settings shared across every model in a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub t_probe: usize,
    pub batch_size: usize,
    pub eps_loss: f64,
    pub eps_ae: f64,
    pub eps_ref: f64,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            t_probe: 10,
            batch_size: 4,
            eps_loss: 1e-6,
            eps_ae: 1e-6,
            eps_ref: 1e-6,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_probe < 1 {
            return Err(AuditError::Config("t_probe must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(AuditError::Config("batch_size must be >= 1".into()));
        }
        if self.eps_loss <= 0.0 || self.eps_ae <= 0.0 || self.eps_ref <= 0.0 {
            return Err(AuditError::Config("probe epsilons must be > 0".into()));
        }
        // learning rate 0 is allowed (yields a flat trace); other optimizer
        // fields follow the optimizer's own validation
        if self.optimizer.learning_rate < 0.0 {
            return Err(AuditError::Config("learning rate must be >= 0".into()));
        }
        Ok(())
    }

    /// Canonical hash of the protocol; embedded in trace files to guard
    /// against mixing incompatible runs.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("probe config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex_prefix(&digest, 16)
    }
}

pub fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::with_capacity(chars);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

/// Per-epoch loss and backbone displacement for one (model, dataset) run.
/// Index 0 is the pre-probe state; `failed_epoch` marks a NaN mid-probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrace {
    pub model_id: String,
    pub dataset_id: String,
    pub losses: Vec<f64>,
    pub displacements: Vec<f64>,
    pub failed_epoch: Option<usize>,
}

impl ProbeTrace {
    pub fn t_probe(&self) -> usize {
        self.losses.len().saturating_sub(1)
    }

    pub fn is_failed(&self) -> bool {
        self.failed_epoch.is_some()
    }

    /// Copy of this trace truncated to the first `t` probe epochs.
    pub fn truncated(&self, t: usize) -> ProbeTrace {
        let keep = (t + 1).min(self.losses.len());
        ProbeTrace {
            model_id: self.model_id.clone(),
            dataset_id: self.dataset_id.clone(),
            losses: self.losses[..keep].to_vec(),
            displacements: self.displacements[..keep].to_vec(),
            failed_epoch: self.failed_epoch.filter(|&e| e <= t),
        }
    }
}

/// Run the probe on one (model, dataset) pair. The model must already be at
/// `origin`; it is restored to `origin` before and after the run.
pub fn run_probe(
    f: &mut Forecaster,
    origin: &Checkpoint,
    d: &Dataset,
    cfg: &ProbeConfig,
) -> Result<ProbeTrace> {
    cfg.validate()?;
    f.restore(origin)?;
    let windows = window_dataset(d, &f.window);
    if windows.is_empty() {
        return Err(AuditError::Config(format!(
            "dataset {} yields no probe windows",
            d.dataset_id
        )));
    }
    let l0 = f.mse_loss(&windows)?;
    let mut losses = vec![l0];
    let mut displacements = vec![0.0];
    let mut failed_epoch = None;

    if f.is_trainable() && cfg.optimizer.learning_rate > 0.0 {
        let mut state = OptimizerState::new(f.n_params());
        // per-dataset shuffle seed so every suite member sees the same order
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &d.dataset_id));
        let mut order: Vec<usize> = (0..windows.len()).collect();
        'epochs: for t in 1..=cfg.t_probe {
            shuffle(&mut order, &mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<_> = chunk.iter().map(|&i| windows[i].clone()).collect();
                let grad = f.backward(&batch)?;
                if adamw_step(&mut f.params, &f.layout, &grad, &cfg.optimizer, &mut state).is_err() {
                    failed_epoch = Some(t);
                    break 'epochs;
                }
            }
            let lt = f.mse_loss(&windows)?;
            if !lt.is_finite() {
                failed_epoch = Some(t);
                break;
            }
            losses.push(lt);
            displacements.push(f.backbone_displacement(origin)?);
        }
    } else {
        // flat trace: no updates occur
        for _ in 1..=cfg.t_probe {
            losses.push(l0);
            displacements.push(0.0);
        }
    }

    // per-dataset reset
    f.restore(origin)?;
    Ok(ProbeTrace {
        model_id: f.model_id.clone(),
        dataset_id: d.dataset_id.clone(),
        losses,
        displacements,
        failed_epoch,
    })
}

/// Completed traces for a run, keyed by (model_id, dataset_id), together
/// with the protocol hash they were produced under.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceStore {
    pub config_hash: String,
    pub traces: BTreeMap<(String, String), ProbeTrace>,
}

impl TraceStore {
    pub fn new(config_hash: &str) -> Self {
        TraceStore {
            config_hash: config_hash.to_string(),
            traces: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, trace: ProbeTrace) {
        self.traces
            .insert((trace.model_id.clone(), trace.dataset_id.clone()), trace);
    }

    pub fn get(&self, model_id: &str, dataset_id: &str) -> Result<&ProbeTrace> {
        self.traces
            .get(&(model_id.to_string(), dataset_id.to_string()))
            .ok_or_else(|| {
                AuditError::MissingPrerequisite(format!(
                    "no trace for pair ({model_id}, {dataset_id})"
                ))
            })
    }

    /// Store with every trace truncated to `t` probe epochs.
    pub fn truncated(&self, t: usize) -> TraceStore {
        TraceStore {
            config_hash: self.config_hash.clone(),
            traces: self
                .traces
                .iter()
                .map(|(k, v)| (k.clone(), v.truncated(t)))
                .collect(),
        }
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for trace in self.traces.values() {
            let rec = serde_json::json!({
                "model_id": trace.model_id,
                "dataset_id": trace.dataset_id,
                "losses": trace.losses,
                "displacements": trace.displacements,
                "failed_epoch": trace.failed_epoch,
                "config_hash": self.config_hash,
            });
            serde_json::to_writer(&mut f, &rec)?;
            f.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<TraceStore> {
        let file = std::fs::File::open(path)?;
        let mut store = TraceStore::default();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: serde_json::Value = serde_json::from_str(&line)?;
            let hash = rec["config_hash"].as_str().unwrap_or_default().to_string();
            if store.config_hash.is_empty() {
                store.config_hash = hash;
            } else if store.config_hash != hash {
                return Err(AuditError::ConfigHashMismatch {
                    expected: store.config_hash.clone(),
                    found: hash,
                });
            }
            let trace = ProbeTrace {
                model_id: rec["model_id"].as_str().unwrap_or_default().to_string(),
                dataset_id: rec["dataset_id"].as_str().unwrap_or_default().to_string(),
                losses: serde_json::from_value(rec["losses"].clone())?,
                displacements: serde_json::from_value(rec["displacements"].clone())?,
                failed_epoch: serde_json::from_value(rec["failed_epoch"].clone())?,
            };
            store.insert(trace);
        }
        Ok(store)
    }
}

/// Probe a candidate and its reference suite over a dataset list under one
/// shared protocol. Per-pair failures are recorded without aborting.
pub fn run_probe_suite(
    models: &mut [(Forecaster, Checkpoint)],
    datasets: &[Dataset],
    cfg: &ProbeConfig,
) -> Result<TraceStore> {
    cfg.validate()?;
    let mut store = TraceStore::new(&cfg.config_hash());
    for (f, origin) in models.iter_mut() {
        for d in datasets {
            let trace = run_probe(f, origin, d, cfg)?;
            store.insert(trace);
        }
    }
    Ok(store)
}
