//! Epochwise probabilistic scorers: standardized, class-weighted,
//! L2-regularized logistic regression fitted on calibration pairs, and
//! selection of the best probe epoch by calibration MCC.
//!
//! The solver is deterministic Newton descent with backtracking line
//! search, initialized at zero; convergence is a gradient-norm tolerance of
//! 1e-6 with a cap of 1000 iterations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::calibrate_fpk;
use crate::error::{AuditError, Result};
use crate::eval::metrics::{confusion, mcc};

/// Floor applied to per-feature standardization scales.
pub const SCALE_FLOOR: f64 = 1e-12;

/// A fitted scorer for one probe epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochScorer {
    pub epoch: usize,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl EpochScorer {
    /// Contamination probability for a raw (unstandardized) feature vector.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(AuditError::Shape(format!(
                "feature dimension {} does not match scorer dimension {}",
                x.len(),
                self.weights.len()
            )));
        }
        let mut z = self.intercept;
        for i in 0..x.len() {
            z += self.weights[i] * (x[i] - self.feature_means[i]) / self.feature_scales[i];
        }
        Ok(sigmoid(z))
    }

    pub fn score_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.score(r)).collect()
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        let rec = serde_json::json!({
            "epoch": self.epoch,
            "feature_means": self.feature_means,
            "feature_scales": self.feature_scales,
            "weights": self.weights,
            "intercept": self.intercept,
            "config_hash": config_hash,
        });
        std::fs::write(path, serde_json::to_string(&rec)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let rec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok((
            EpochScorer {
                epoch: rec["epoch"].as_u64().unwrap_or(0) as usize,
                feature_means: serde_json::from_value(rec["feature_means"].clone())?,
                feature_scales: serde_json::from_value(rec["feature_scales"].clone())?,
                weights: serde_json::from_value(rec["weights"].clone())?,
                intercept: rec["intercept"].as_f64().unwrap_or(0.0),
            },
            rec["config_hash"].as_str().unwrap_or_default().to_string(),
        ))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Balanced class weights: weight for class k is n_total / (2 * n_k).
pub fn balanced_class_weights(y: &[u8]) -> Result<(f64, f64)> {
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AuditError::Config(
            "both label classes must be present to fit a scorer".into(),
        ));
    }
    let n = y.len() as f64;
    Ok((n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64)))
}

/// Weighted regularized logistic objective on standardized rows (used by
/// the solver and by the grid-search oracle in tests).
pub fn logistic_objective(
    rows: &[Vec<f64>],
    y: &[u8],
    sample_weights: &[f64],
    weights: &[f64],
    intercept: f64,
    reg_lambda: f64,
) -> f64 {
    let mut obj = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let mut z = intercept;
        for j in 0..row.len() {
            z += weights[j] * row[j];
        }
        // log(1 + e^z) - y z, computed stably
        let log1pexp = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        obj += sample_weights[i] * (log1pexp - f64::from(y[i]) * z);
    }
    obj + 0.5 * reg_lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Cholesky solve of the symmetric positive definite system A x = b.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    // forward then back substitution
    let mut yv = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * yv[k];
        }
        yv[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = yv[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

/// Fit the epoch scorer: standardize columns, then minimize the weighted
/// L2-regularized logistic loss. `reg_strength` is the inverse
/// regularization strength (C); lambda = 1/C.
pub fn fit_epoch_scorer(
    x: &[Vec<f64>],
    y: &[u8],
    epoch: usize,
    reg_strength: f64,
    max_iters: usize,
    tol: f64,
) -> Result<EpochScorer> {
    if x.is_empty() || x.len() != y.len() {
        return Err(AuditError::Config(
            "design matrix and labels must be nonempty and aligned".into(),
        ));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(AuditError::Shape("ragged design matrix".into()));
    }
    let (w_neg, w_pos) = balanced_class_weights(y)?;
    let sample_weights: Vec<f64> = y
        .iter()
        .map(|&v| if v == 1 { w_pos } else { w_neg })
        .collect();

    // standardization fitted on calibration rows
    let n = x.len() as f64;
    let mut means = vec![0.0; p];
    let mut scales = vec![0.0; p];
    for j in 0..p {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
        means[j] = mean;
        scales[j] = var.sqrt().max(SCALE_FLOOR);
    }
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|r| (0..p).map(|j| (r[j] - means[j]) / scales[j]).collect())
        .collect();

    let lambda = 1.0 / reg_strength;
    // parameters: weights then intercept; intercept is unregularized
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut obj = logistic_objective(&rows, y, &sample_weights, &w, b, lambda);
    for _ in 0..max_iters {
        // gradient and Hessian
        let mut grad = vec![0.0; p + 1];
        let mut hess = vec![vec![0.0; p + 1]; p + 1];
        for (i, row) in rows.iter().enumerate() {
            let mut z = b;
            for j in 0..p {
                z += w[j] * row[j];
            }
            let mu = sigmoid(z);
            let g = sample_weights[i] * (mu - f64::from(y[i]));
            let h = (sample_weights[i] * mu * (1.0 - mu)).max(1e-12);
            for j in 0..p {
                grad[j] += g * row[j];
                for k in 0..=j {
                    hess[j][k] += h * row[j] * row[k];
                }
                hess[p][j] += h * row[j];
            }
            grad[p] += g;
            hess[p][p] += h;
        }
        for j in 0..p {
            grad[j] += lambda * w[j];
            hess[j][j] += lambda;
            for k in 0..j {
                hess[k][j] = hess[j][k];
            }
        }
        for j in 0..p {
            hess[j][p] = hess[p][j];
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < tol {
            break;
        }
        let step = cholesky_solve(&hess, &grad).ok_or_else(|| {
            AuditError::Numerical("logistic Hessian is not positive definite".into())
        })?;
        // backtracking line search on the objective
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let w_try: Vec<f64> = (0..p).map(|j| w[j] - alpha * step[j]).collect();
            let b_try = b - alpha * step[p];
            let obj_try = logistic_objective(&rows, y, &sample_weights, &w_try, b_try, lambda);
            if obj_try <= obj - 1e-4 * alpha * gnorm.min(1.0) * gnorm {
                w = w_try;
                b = b_try;
                obj = obj_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(EpochScorer {
        epoch,
        feature_means: means,
        feature_scales: scales,
        weights: w,
        intercept: b,
    })
}

/// Chosen epoch, per-epoch calibration MCCs, and the selected scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSelection {
    pub epoch: usize,
    pub calibration_mccs: Vec<f64>,
    pub scorer: EpochScorer,
}

/// Evaluate each epoch scorer on calibration with the FP-k threshold
/// applied (matching the deployment decision rule), compute MCC, and pick
/// the maximum; ties break toward the smaller epoch.
pub fn select_epoch(
    scorers: &[EpochScorer],
    x_by_epoch: &[Vec<Vec<f64>>],
    y: &[u8],
    fp_budget: usize,
) -> Result<ScorerSelection> {
    if scorers.is_empty() || scorers.len() != x_by_epoch.len() {
        return Err(AuditError::Config(
            "need one calibration design matrix per epoch scorer".into(),
        ));
    }
    let mut mccs = Vec::with_capacity(scorers.len());
    for (scorer, rows) in scorers.iter().zip(x_by_epoch.iter()) {
        let scores = scorer.score_rows(rows)?;
        let clean: Vec<f64> = scores
            .iter()
            .zip(y.iter())
            .filter(|(_, &label)| label == 0)
            .map(|(s, _)| *s)
            .collect();
        let cal = calibrate_fpk(&clean, fp_budget)?;
        let decisions: Vec<u8> = scores
            .iter()
            .map(|&s| u8::from(s > cal.threshold))
            .collect();
        let (tp, fp, tn, fn_) = confusion(&decisions, y);
        mccs.push(mcc(tp, fp, tn, fn_));
    }
    let mut best = 0;
    for (i, &m) in mccs.iter().enumerate() {
        if m > mccs[best] {
            best = i;
        }
    }
    Ok(ScorerSelection {
        epoch: scorers[best].epoch,
        calibration_mccs: mccs,
        scorer: scorers[best].clone(),
    })
}
