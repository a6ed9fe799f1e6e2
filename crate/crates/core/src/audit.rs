//! Conservative threshold calibration and frozen deployment decisions.
//!
//! The threshold is the (k+1)-st largest score among clean calibration
//! pairs; a candidate/dataset pair is flagged only when its score strictly
//! exceeds that threshold. With k = 0 this admits no calibration false
//! positives by construction, and the deployment false-positive rate is
//! controlled in distribution.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::scorer::EpochScorer;

/// A calibrated decision threshold together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCalibration {
    pub threshold: f64,
    pub fp_budget: usize,
    pub n_clean_calibration: usize,
}

/// Calibrate the FP-k threshold from clean calibration scores.
///
/// Requires at least k+1 clean scores. The threshold is the (k+1)-st
/// largest score; strictly-greater comparison then leaves at most k clean
/// calibration scores above it.
pub fn calibrate_fpk(clean_scores: &[f64], fp_budget: usize) -> Result<AuditCalibration> {
    if clean_scores.len() < fp_budget + 1 {
        return Err(AuditError::Config(format!(
            "FP-{} calibration needs at least {} clean scores, got {}",
            fp_budget,
            fp_budget + 1,
            clean_scores.len()
        )));
    }
    if clean_scores.iter().any(|s| !s.is_finite()) {
        return Err(AuditError::Numerical(
            "non-finite score in calibration set".into(),
        ));
    }
    let mut sorted = clean_scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(AuditCalibration {
        threshold: sorted[fp_budget],
        fp_budget,
        n_clean_calibration: clean_scores.len(),
    })
}

/// One flagged-or-clean verdict for a candidate/dataset pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditDecision {
    pub candidate_id: String,
    pub dataset_id: String,
    pub score: f64,
    pub threshold: f64,
    pub flagged: bool,
}

/// Apply the strict decision rule to a single score.
pub fn decide(score: f64, cal: &AuditCalibration) -> bool {
    score > cal.threshold
}

/// A frozen audit: scorer, threshold, and the configuration fingerprint of
/// the probe/feature setup it was calibrated under. Deployment refuses
/// inputs produced under a different configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenAudit {
    pub scorer: EpochScorer,
    pub calibration: AuditCalibration,
    pub config_hash: String,
}

impl FrozenAudit {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Score and decide for feature rows produced under `config_hash`.
    pub fn deploy(
        &self,
        pairs: &[(String, String)],
        rows: &[Vec<f64>],
        config_hash: &str,
    ) -> Result<Vec<AuditDecision>> {
        if config_hash != self.config_hash {
            return Err(AuditError::ConfigHashMismatch {
                expected: self.config_hash.clone(),
                found: config_hash.to_string(),
            });
        }
        if pairs.len() != rows.len() {
            return Err(AuditError::Shape(
                "pair list and feature rows must align".into(),
            ));
        }
        pairs
            .iter()
            .zip(rows.iter())
            .map(|((cand, ds), row)| {
                let score = self.scorer.score(row)?;
                Ok(AuditDecision {
                    candidate_id: cand.clone(),
                    dataset_id: ds.clone(),
                    score,
                    threshold: self.calibration.threshold,
                    flagged: decide(score, &self.calibration),
                })
            })
            .collect()
    }
}

/// Write decisions as CSV: candidate_id,dataset_id,score,threshold,flagged.
pub fn save_decisions(path: &Path, decisions: &[AuditDecision]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["candidate_id", "dataset_id", "score", "threshold", "flagged"])?;
    for d in decisions {
        w.write_record([
            d.candidate_id.as_str(),
            d.dataset_id.as_str(),
            &d.score.to_string(),
            &d.threshold.to_string(),
            if d.flagged { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_decisions(path: &Path) -> Result<Vec<AuditDecision>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| AuditError::Config(format!("bad decision row: {rec:?}")))
        };
        out.push(AuditDecision {
            candidate_id: rec.get(0).unwrap_or_default().to_string(),
            dataset_id: rec.get(1).unwrap_or_default().to_string(),
            score: parse(2)?,
            threshold: parse(3)?,
            flagged: rec.get(4) == Some("1"),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fp0_threshold_is_max_clean_score() {
        let clean = vec![0.1, 0.9, 0.4, 0.3];
        let cal = calibrate_fpk(&clean, 0).unwrap();
        assert_eq!(cal.threshold, 0.9);
        // no clean score strictly exceeds the threshold
        assert!(clean.iter().all(|&s| !decide(s, &cal)));
        assert!(decide(0.91, &cal));
    }

    #[test]
    fn fpk_admits_at_most_k_clean_positives() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let n = rng.gen_range(5..60);
            let k = rng.gen_range(0..n.min(5));
            let clean: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let cal = calibrate_fpk(&clean, k).unwrap();
            let fps = clean.iter().filter(|&&s| decide(s, &cal)).count();
            assert!(fps <= k, "trial {trial}: {fps} > budget {k}");
        }
    }

    #[test]
    fn larger_budget_is_a_superset_of_flags() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let clean: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..1.0)).collect();
        let eval: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..1.0)).collect();
        let c0 = calibrate_fpk(&clean, 0).unwrap();
        let c3 = calibrate_fpk(&clean, 3).unwrap();
        assert!(c3.threshold <= c0.threshold);
        for &s in &eval {
            if decide(s, &c0) {
                assert!(decide(s, &c3));
            }
        }
    }

    #[test]
    fn ties_at_threshold_are_not_flagged() {
        let clean = vec![0.5, 0.5, 0.5];
        let cal = calibrate_fpk(&clean, 1).unwrap();
        assert_eq!(cal.threshold, 0.5);
        assert!(!decide(0.5, &cal));
    }

    #[test]
    fn too_few_clean_scores_errors() {
        assert!(calibrate_fpk(&[0.5], 1).is_err());
        assert!(calibrate_fpk(&[], 0).is_err());
        assert!(calibrate_fpk(&[f64::NAN, 0.2], 0).is_err());
    }

    fn dummy_frozen(hash: &str) -> FrozenAudit {
        FrozenAudit {
            scorer: EpochScorer {
                epoch: 1,
                feature_means: vec![0.0],
                feature_scales: vec![1.0],
                weights: vec![1.0],
                intercept: 0.0,
            },
            calibration: AuditCalibration {
                threshold: 0.5,
                fp_budget: 0,
                n_clean_calibration: 10,
            },
            config_hash: hash.to_string(),
        }
    }

    #[test]
    fn deploy_refuses_config_hash_mismatch() {
        let frozen = dummy_frozen("hash_a");
        let pairs = vec![("m".to_string(), "d".to_string())];
        let rows = vec![vec![2.0]];
        let err = frozen.deploy(&pairs, &rows, "hash_b").unwrap_err();
        assert!(matches!(err, AuditError::ConfigHashMismatch { .. }));
        let ok = frozen.deploy(&pairs, &rows, "hash_a").unwrap();
        assert_eq!(ok.len(), 1);
        assert!(ok[0].flagged); // sigmoid(2) > 0.5
    }

    #[test]
    fn frozen_audit_and_decision_roundtrips() {
        let frozen = dummy_frozen("h");
        let dir = tempfile::tempdir().unwrap();
        let fpath = dir.path().join("frozen.json");
        frozen.save(&fpath).unwrap();
        assert_eq!(FrozenAudit::load(&fpath).unwrap(), frozen);

        let decisions = vec![AuditDecision {
            candidate_id: "m1".into(),
            dataset_id: "d1".into(),
            score: 0.75,
            threshold: 0.5,
            flagged: true,
        }];
        let dpath = dir.path().join("decisions.csv");
        save_decisions(&dpath, &decisions).unwrap();
        assert_eq!(load_decisions(&dpath).unwrap(), decisions);
    }
}
