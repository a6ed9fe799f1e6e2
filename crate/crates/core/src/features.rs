//! Audit features: per-epoch trace summaries [w, d, a] and the
//! reference-debiased difference/ratio representations fed to the scorers.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelManifest;
use crate::error::{AuditError, Result};
use crate::probe::{ProbeConfig, ProbeTrace, TraceStore};

/// Per-epoch [w_t, d_t, a_t] for t = 1..T_probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub per_epoch: Vec<[f64; 3]>,
}

impl TraceSummary {
    pub fn t_probe(&self) -> usize {
        self.per_epoch.len()
    }
}

/// Relative loss drop d_t = (l0 - l_t) / (l0 + eps_loss) and adaptation
/// efficiency a_t = d_t / (w_t + eps_ae), per probe epoch.
pub fn summarize_trace(tr: &ProbeTrace, cfg: &ProbeConfig) -> Result<TraceSummary> {
    if tr.is_failed() {
        return Err(AuditError::Numerical(format!(
            "trace ({}, {}) failed at epoch {}",
            tr.model_id,
            tr.dataset_id,
            tr.failed_epoch.unwrap()
        )));
    }
    let l0 = tr.losses[0];
    let per_epoch = (1..tr.losses.len())
        .map(|t| {
            let w = tr.displacements[t];
            let d = (l0 - tr.losses[t]) / (l0 + cfg.eps_loss);
            let a = d / (w + cfg.eps_ae);
            [w, d, a]
        })
        .collect();
    Ok(TraceSummary { per_epoch })
}

/// How candidate and reference summaries are combined per reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DebiasMode {
    /// Difference and ratio concatenated (the default representation).
    Full,
    /// Elementwise difference only.
    Diff,
    /// Stabilized elementwise ratio only.
    Ratio,
    /// Elementwise product only.
    Inter,
}

/// Which references contribute features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefSelection {
    None,
    Single(String),
    All,
}

/// Feature configuration tag: reference selection, debias mode, whether the
/// raw candidate summary is appended, and the loss-only restriction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub selection: RefSelection,
    pub mode: DebiasMode,
    pub append_candidate: bool,
    pub loss_only: bool,
}

impl FeatureConfig {
    pub fn no_ref() -> Self {
        FeatureConfig {
            selection: RefSelection::None,
            mode: DebiasMode::Full,
            append_candidate: true,
            loss_only: false,
        }
    }

    pub fn single_ref(ref_id: &str) -> Self {
        FeatureConfig {
            selection: RefSelection::Single(ref_id.to_string()),
            mode: DebiasMode::Full,
            append_candidate: false,
            loss_only: false,
        }
    }

    pub fn all_ref() -> Self {
        FeatureConfig {
            selection: RefSelection::All,
            mode: DebiasMode::Full,
            append_candidate: false,
            loss_only: false,
        }
    }

    /// All references plus the direct candidate dynamics appended.
    pub fn all_ref_det() -> Self {
        FeatureConfig {
            append_candidate: true,
            ..FeatureConfig::all_ref()
        }
    }

    /// Restriction to loss-derived coordinates (d and its debiased forms).
    pub fn loss_only() -> Self {
        FeatureConfig {
            loss_only: true,
            ..FeatureConfig::all_ref()
        }
    }

    pub fn with_mode(mut self, mode: DebiasMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn tag(&self) -> String {
        let base = match &self.selection {
            RefSelection::None => "no_ref".to_string(),
            RefSelection::Single(r) => format!("single_ref({r})"),
            RefSelection::All => {
                if self.append_candidate {
                    "all_ref_det".to_string()
                } else {
                    "all_ref".to_string()
                }
            }
        };
        let mode = match self.mode {
            DebiasMode::Full => "full",
            DebiasMode::Diff => "diff",
            DebiasMode::Ratio => "ratio",
            DebiasMode::Inter => "inter",
        };
        let lo = if self.loss_only { ",loss_only" } else { "" };
        format!("{base}[{mode}{lo}]")
    }

    /// Per-epoch feature dimension for `n_refs` selected references.
    pub fn dim(&self, n_refs: usize) -> usize {
        let per_ref_full = match self.mode {
            DebiasMode::Full => 6,
            _ => 3,
        };
        let per_ref = if self.loss_only {
            match self.mode {
                DebiasMode::Full => 2,
                _ => 1,
            }
        } else {
            per_ref_full
        };
        let cand = if self.append_candidate {
            if self.loss_only {
                1
            } else {
                3
            }
        } else {
            0
        };
        let refs = match self.selection {
            RefSelection::None => 0,
            RefSelection::Single(_) => per_ref,
            RefSelection::All => per_ref * n_refs,
        };
        refs + cand
    }
}

/// Debiased per-epoch feature vectors for one audit pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasedFeatures {
    pub tag: String,
    /// Lexicographic reference order fixing the feature layout.
    pub ref_order: Vec<String>,
    /// One vector per probe epoch (t = 1..T_probe).
    pub per_epoch: Vec<Vec<f64>>,
}

fn per_ref_block(
    cand: &[f64; 3],
    reference: &[f64; 3],
    mode: DebiasMode,
    eps_ref: f64,
    loss_only: bool,
    out: &mut Vec<f64>,
) {
    let coords: &[usize] = if loss_only { &[1] } else { &[0, 1, 2] };
    match mode {
        DebiasMode::Full => {
            for &i in coords {
                out.push(cand[i] - reference[i]);
            }
            for &i in coords {
                out.push(cand[i] / (reference[i] + eps_ref));
            }
        }
        DebiasMode::Diff => {
            for &i in coords {
                out.push(cand[i] - reference[i]);
            }
        }
        DebiasMode::Ratio => {
            for &i in coords {
                out.push(cand[i] / (reference[i] + eps_ref));
            }
        }
        DebiasMode::Inter => {
            for &i in coords {
                out.push(cand[i] * reference[i]);
            }
        }
    }
}

/// Combine a candidate summary with its reference summaries. References are
/// consumed in lexicographic ref_id order, which fixes the feature layout.
pub fn debias(
    cand: &TraceSummary,
    refs: &[(String, TraceSummary)],
    cfg: &ProbeConfig,
    feature_cfg: &FeatureConfig,
) -> Result<DebiasedFeatures> {
    let mut selected: Vec<&(String, TraceSummary)> = match &feature_cfg.selection {
        RefSelection::None => vec![],
        RefSelection::Single(id) => {
            let found = refs.iter().find(|(r, _)| r == id).ok_or_else(|| {
                AuditError::Config(format!("reference {id} not present in suite"))
            })?;
            vec![found]
        }
        RefSelection::All => refs.iter().collect(),
    };
    selected.sort_by(|a, b| a.0.cmp(&b.0));
    for (rid, summary) in &selected {
        if summary.t_probe() != cand.t_probe() {
            return Err(AuditError::Shape(format!(
                "reference {rid} has T={} but candidate has T={}",
                summary.t_probe(),
                cand.t_probe()
            )));
        }
    }

    let t_probe = cand.t_probe();
    let mut per_epoch = Vec::with_capacity(t_probe);
    for t in 0..t_probe {
        let mut v = Vec::new();
        for (_, summary) in &selected {
            per_ref_block(
                &cand.per_epoch[t],
                &summary.per_epoch[t],
                feature_cfg.mode,
                cfg.eps_ref,
                feature_cfg.loss_only,
                &mut v,
            );
        }
        if feature_cfg.append_candidate {
            if feature_cfg.loss_only {
                v.push(cand.per_epoch[t][1]);
            } else {
                v.extend_from_slice(&cand.per_epoch[t]);
            }
        }
        per_epoch.push(v);
    }
    Ok(DebiasedFeatures {
        tag: feature_cfg.tag(),
        ref_order: selected.iter().map(|(r, _)| r.clone()).collect(),
        per_epoch,
    })
}

/// An audit pair identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairId {
    pub candidate_id: String,
    pub dataset_id: String,
}

impl PairId {
    pub fn new(candidate_id: &str, dataset_id: &str) -> Self {
        PairId {
            candidate_id: candidate_id.to_string(),
            dataset_id: dataset_id.to_string(),
        }
    }
}

/// Build the design matrix for the given pairs at probe epoch `t`
/// (1-based). Row order matches pair order.
pub fn assemble_design_matrix(
    pairs: &[PairId],
    labels: &LabelManifest,
    epoch: usize,
    feature_cfg: &FeatureConfig,
    ref_ids: &[String],
    store: &TraceStore,
    cfg: &ProbeConfig,
) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    if epoch < 1 {
        return Err(AuditError::Config("epoch index is 1-based".into()));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    let mut y = Vec::with_capacity(pairs.len());
    let mut expected_t: Option<usize> = None;
    for pair in pairs {
        let cand_trace = store.get(&pair.candidate_id, &pair.dataset_id).map_err(|_| {
            AuditError::MissingPrerequisite(format!(
                "missing candidate trace for pair ({}, {})",
                pair.candidate_id, pair.dataset_id
            ))
        })?;
        match expected_t {
            None => expected_t = Some(cand_trace.t_probe()),
            Some(t) if t != cand_trace.t_probe() => {
                return Err(AuditError::Shape(format!(
                    "mixed probe lengths in trace store: {} vs {}",
                    t,
                    cand_trace.t_probe()
                )));
            }
            _ => {}
        }
        let cand = summarize_trace(cand_trace, cfg)?;
        let refs: Vec<(String, TraceSummary)> = ref_ids
            .iter()
            .map(|r| {
                let tr = store.get(r, &pair.dataset_id)?;
                Ok((r.clone(), summarize_trace(tr, cfg)?))
            })
            .collect::<Result<_>>()?;
        let feats = debias(&cand, &refs, cfg, feature_cfg)?;
        if epoch > feats.per_epoch.len() {
            return Err(AuditError::Config(format!(
                "epoch {epoch} exceeds probe length {}",
                feats.per_epoch.len()
            )));
        }
        rows.push(feats.per_epoch[epoch - 1].clone());
        y.push(labels.label(&pair.candidate_id, &pair.dataset_id)?);
    }
    Ok((rows, y))
}

/// Persist per-pair features as JSON-lines.
pub fn save_features(
    path: &Path,
    records: &[(PairId, DebiasedFeatures)],
    config_hash: &str,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for (pair, feats) in records {
        let rec = serde_json::json!({
            "candidate_id": pair.candidate_id,
            "dataset_id": pair.dataset_id,
            "tag": feats.tag,
            "ref_order": feats.ref_order,
            "per_epoch": feats.per_epoch,
            "config_hash": config_hash,
        });
        serde_json::to_writer(&mut f, &rec)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_features(path: &Path) -> Result<(Vec<(PairId, DebiasedFeatures)>, String)> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    let mut hash = String::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: serde_json::Value = serde_json::from_str(&line)?;
        hash = rec["config_hash"].as_str().unwrap_or_default().to_string();
        out.push((
            PairId::new(
                rec["candidate_id"].as_str().unwrap_or_default(),
                rec["dataset_id"].as_str().unwrap_or_default(),
            ),
            DebiasedFeatures {
                tag: rec["tag"].as_str().unwrap_or_default().to_string(),
                ref_order: serde_json::from_value(rec["ref_order"].clone())?,
                per_epoch: serde_json::from_value(rec["per_epoch"].clone())?,
            },
        ));
    }
    Ok((out, hash))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ProbeConfig {
        ProbeConfig::default()
    }

    fn trace(losses: &[f64], disps: &[f64]) -> ProbeTrace {
        ProbeTrace {
            model_id: "m".into(),
            dataset_id: "d".into(),
            losses: losses.to_vec(),
            displacements: disps.to_vec(),
            failed_epoch: None,
        }
    }

    #[test]
    fn summary_formulas() {
        let tr = trace(&[2.0, 1.0], &[0.0, 0.5]);
        let s = summarize_trace(&tr, &cfg()).unwrap();
        assert_eq!(s.t_probe(), 1);
        let [w, d, a] = s.per_epoch[0];
        assert_eq!(w, 0.5);
        assert!((d - 0.5).abs() < 1e-6);
        assert!((a - 1.0).abs() < 1e-5);
    }

    #[test]
    fn flat_trace_summary_is_zero() {
        let tr = trace(&[3.0, 3.0, 3.0], &[0.0, 0.0, 0.0]);
        let s = summarize_trace(&tr, &cfg()).unwrap();
        for [w, d, a] in s.per_epoch {
            assert_eq!(w, 0.0);
            assert_eq!(d, 0.0);
            assert_eq!(a, 0.0);
        }
    }

    #[test]
    fn failed_trace_errors() {
        let mut tr = trace(&[2.0, 1.0], &[0.0, 0.5]);
        tr.failed_epoch = Some(1);
        assert!(summarize_trace(&tr, &cfg()).is_err());
    }

    fn summary_of(rows: &[[f64; 3]]) -> TraceSummary {
        TraceSummary {
            per_epoch: rows.to_vec(),
        }
    }

    #[test]
    fn debias_hand_arithmetic() {
        let cand = summary_of(&[[1.0, 2.0, 3.0]]);
        let reference = summary_of(&[[1.0, 1.0, 1.0]]);
        let feats = debias(
            &cand,
            &[("r".into(), reference)],
            &cfg(),
            &FeatureConfig::single_ref("r"),
        )
        .unwrap();
        let v = &feats.per_epoch[0];
        assert_eq!(v.len(), 6);
        assert!((v[0] - 0.0).abs() < 1e-12);
        assert!((v[1] - 1.0).abs() < 1e-12);
        assert!((v[2] - 2.0).abs() < 1e-12);
        assert!((v[3] - 1.0).abs() < 1e-5);
        assert!((v[4] - 2.0).abs() < 1e-5);
        assert!((v[5] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn self_comparison_gives_zero_diff_unit_ratio() {
        let cand = summary_of(&[[0.5, 0.4, 0.8], [0.6, 0.5, 0.83]]);
        let feats = debias(
            &cand,
            &[("r".into(), cand.clone())],
            &cfg(),
            &FeatureConfig::single_ref("r"),
        )
        .unwrap();
        for epoch in &feats.per_epoch {
            for &d in &epoch[..3] {
                assert_eq!(d, 0.0);
            }
            for &r in &epoch[3..] {
                assert!((r - 1.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn feature_dimensions() {
        let cand = summary_of(&[[1.0, 0.5, 0.5]]);
        let refs: Vec<(String, TraceSummary)> = (0..4)
            .map(|i| (format!("r{i}"), summary_of(&[[1.0, 0.3, 0.3]])))
            .collect();
        let all = debias(&cand, &refs, &cfg(), &FeatureConfig::all_ref()).unwrap();
        assert_eq!(all.per_epoch[0].len(), 24);
        let det = debias(&cand, &refs, &cfg(), &FeatureConfig::all_ref_det()).unwrap();
        assert_eq!(det.per_epoch[0].len(), 27);
        let none = debias(&cand, &refs, &cfg(), &FeatureConfig::no_ref()).unwrap();
        assert_eq!(none.per_epoch[0].len(), 3);
        assert_eq!(FeatureConfig::all_ref().dim(4), 24);
        assert_eq!(FeatureConfig::all_ref_det().dim(4), 27);
        assert_eq!(FeatureConfig::no_ref().dim(0), 3);
    }

    #[test]
    fn diff_antisymmetry() {
        let a = summary_of(&[[0.3, 0.7, 1.1]]);
        let b = summary_of(&[[0.9, 0.2, 0.4]]);
        let cfg = cfg();
        let fc = FeatureConfig::single_ref("r").with_mode(DebiasMode::Diff);
        let ab = debias(&a, &[("r".into(), b.clone())], &cfg, &fc).unwrap();
        let ba = debias(&b, &[("r".into(), a.clone())], &cfg, &fc).unwrap();
        for (x, y) in ab.per_epoch[0].iter().zip(ba.per_epoch[0].iter()) {
            assert!((x + y).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_only_is_projection_of_full() {
        let cand = summary_of(&[[0.4, 0.6, 1.2]]);
        let refs = vec![
            ("ra".to_string(), summary_of(&[[0.5, 0.3, 0.55]])),
            ("rb".to_string(), summary_of(&[[0.7, 0.1, 0.14]])),
        ];
        let cfg = cfg();
        let full = debias(&cand, &refs, &cfg, &FeatureConfig::all_ref()).unwrap();
        let lo = debias(&cand, &refs, &cfg, &FeatureConfig::loss_only()).unwrap();
        // full layout per ref: [dw, dd, da, rw, rd, ra]; loss-only keeps
        // indices 1 and 4 of each per-ref block
        let f = &full.per_epoch[0];
        let l = &lo.per_epoch[0];
        assert_eq!(l.len(), 4);
        assert_eq!(l[0], f[1]);
        assert_eq!(l[1], f[4]);
        assert_eq!(l[2], f[7]);
        assert_eq!(l[3], f[10]);
    }

    #[test]
    fn t_probe_mismatch_errors() {
        let cand = summary_of(&[[0.1, 0.2, 0.3], [0.1, 0.2, 0.3]]);
        let reference = summary_of(&[[0.1, 0.2, 0.3]]);
        assert!(debias(
            &cand,
            &[("r".into(), reference)],
            &cfg(),
            &FeatureConfig::single_ref("r")
        )
        .is_err());
    }

    #[test]
    fn inter_mode_is_elementwise_product() {
        let cand = summary_of(&[[2.0, 3.0, 4.0]]);
        let reference = summary_of(&[[0.5, 2.0, 0.25]]);
        let fc = FeatureConfig::single_ref("r").with_mode(DebiasMode::Inter);
        let feats = debias(&cand, &[("r".into(), reference)], &cfg(), &fc).unwrap();
        assert_eq!(feats.per_epoch[0], vec![1.0, 6.0, 1.0]);
    }

    #[test]
    fn d_invariant_to_loss_scaling_with_zero_eps() {
        let mut pc = cfg();
        pc.eps_loss = 0.0;
        let tr1 = trace(&[2.0, 1.0, 0.5], &[0.0, 0.2, 0.3]);
        let tr2 = trace(&[20.0, 10.0, 5.0], &[0.0, 0.2, 0.3]);
        let s1 = summarize_trace(&tr1, &pc).unwrap();
        let s2 = summarize_trace(&tr2, &pc).unwrap();
        for (a, b) in s1.per_epoch.iter().zip(s2.per_epoch.iter()) {
            assert!((a[1] - b[1]).abs() < 1e-12);
        }
    }
}
