//! Evaluation protocol: repeated family-aware splits, classification
//! metrics, aggregation at pair and model granularity, and exact one-sided
//! binomial lower confidence bounds for deployment accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

pub mod metrics {
    //! Confusion-matrix and ranking metrics. Degenerate denominators map
    //! to 0 for MCC and per-class F1, and balanced accuracy treats an
    //! absent class as contributing 0 recall.

    /// (tp, fp, tn, fn) for binary predictions against binary labels.
    pub fn confusion(pred: &[u8], y: &[u8]) -> (usize, usize, usize, usize) {
        let mut tp = 0;
        let mut fp = 0;
        let mut tn = 0;
        let mut fn_ = 0;
        for (&p, &t) in pred.iter().zip(y.iter()) {
            match (p, t) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 0) => tn += 1,
                _ => fn_ += 1,
            }
        }
        (tp, fp, tn, fn_)
    }

    /// Matthews correlation coefficient; 0 when any marginal is empty.
    pub fn mcc(tp: usize, fp: usize, tn: usize, fn_: usize) -> f64 {
        let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
        let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / denom
        }
    }

    /// Macro-averaged F1 over the two classes; an undefined per-class F1
    /// (no predictions and no members) counts as 0.
    pub fn macro_f1(tp: usize, fp: usize, tn: usize, fn_: usize) -> f64 {
        let f1 = |tp: usize, fp: usize, fn_: usize| -> f64 {
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        };
        // positive class, then negative class with roles swapped
        0.5 * (f1(tp, fp, fn_) + f1(tn, fn_, fp))
    }

    /// Mean of the two class recalls; an absent class contributes 0.
    pub fn balanced_accuracy(tp: usize, fp: usize, tn: usize, fn_: usize) -> f64 {
        let tpr = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let tnr = if tn + fp == 0 {
            0.0
        } else {
            tn as f64 / (tn + fp) as f64
        };
        0.5 * (tpr + tnr)
    }

    /// AUROC via the rank-sum formulation with midranks for ties.
    pub fn auroc(scores: &[f64], y: &[u8]) -> f64 {
        let n_pos = y.iter().filter(|&&v| v == 1).count();
        let n_neg = y.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return 0.5;
        }
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
        let mut ranks = vec![0.0; scores.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
                j += 1;
            }
            let midrank = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                ranks[k] = midrank;
            }
            i = j + 1;
        }
        let rank_sum: f64 = (0..scores.len())
            .filter(|&k| y[k] == 1)
            .map(|k| ranks[k])
            .sum();
        (rank_sum - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0) / (n_pos as f64 * n_neg as f64)
    }

    /// Area under the precision-recall curve with step-wise (right-
    /// continuous) interpolation: sum of precision at each recall
    /// increment, descending score order, ties processed as a block.
    pub fn auprc(scores: &[f64], y: &[u8]) -> f64 {
        let n_pos = y.iter().filter(|&&v| v == 1).count();
        if n_pos == 0 {
            return 0.0;
        }
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                if y[k] == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            let recall = tp as f64 / n_pos as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
            i = j + 1;
        }
        area
    }
}

/// A single repeat: calibration and evaluation pair indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub repeat: usize,
    pub seed: u64,
    pub calibration: Vec<usize>,
    pub evaluation: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub n_repeats: usize,
    pub base_seed: u64,
    pub seed_stride: u64,
    pub clean_calibration_frac: f64,
    pub max_retries: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            n_repeats: 30,
            base_seed: 0,
            seed_stride: 10007,
            clean_calibration_frac: 0.8,
            max_retries: 1000,
        }
    }
}

/// Build repeated splits over (candidate, dataset) pairs.
///
/// Grouping is family-aware: all pairs whose dataset belongs to a family
/// go to the same side, so calibration and evaluation never share a data
/// family. Clean pairs drive the family assignment (a fraction of clean
/// pairs' families go to calibration); contaminated pairs follow their
/// family. A draw is retried with a perturbed seed until both label
/// classes appear on both sides.
pub fn make_splits(
    families: &[String], // family of each pair
    labels: &[u8],       // label of each pair
    cfg: &SplitConfig,
) -> Result<Vec<Split>> {
    if families.len() != labels.len() || families.is_empty() {
        return Err(AuditError::Config(
            "family and label lists must be nonempty and aligned".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.clean_calibration_frac) || cfg.clean_calibration_frac <= 0.0 {
        return Err(AuditError::Config(
            "clean calibration fraction must lie in (0, 1)".into(),
        ));
    }
    let family_set: Vec<String> = {
        let s: BTreeSet<&String> = families.iter().collect();
        s.into_iter().cloned().collect()
    };
    if family_set.len() < 2 {
        return Err(AuditError::Config(
            "need at least two families to form disjoint splits".into(),
        ));
    }

    let mut splits = Vec::with_capacity(cfg.n_repeats);
    for r in 0..cfg.n_repeats {
        let seed = cfg.base_seed + cfg.seed_stride * r as u64;
        let mut found = None;
        for attempt in 0..cfg.max_retries {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
            let mut fams = family_set.clone();
            fams.shuffle(&mut rng);
            let n_cal = ((fams.len() as f64) * cfg.clean_calibration_frac).round() as usize;
            let n_cal = n_cal.clamp(1, fams.len() - 1);
            let cal_fams: BTreeSet<&String> = fams[..n_cal].iter().collect();
            let mut cal = Vec::new();
            let mut eval = Vec::new();
            for (i, fam) in families.iter().enumerate() {
                if cal_fams.contains(fam) {
                    cal.push(i);
                } else {
                    eval.push(i);
                }
            }
            let has_both = |idx: &[usize]| {
                idx.iter().any(|&i| labels[i] == 0) && idx.iter().any(|&i| labels[i] == 1)
            };
            if has_both(&cal) && has_both(&eval) {
                found = Some(Split {
                    repeat: r,
                    seed,
                    calibration: cal,
                    evaluation: eval,
                });
                break;
            }
        }
        splits.push(found.ok_or_else(|| {
            AuditError::Config(format!(
                "could not draw a class-complete split for repeat {r} within {} retries",
                cfg.max_retries
            ))
        })?);
    }
    Ok(splits)
}

pub fn save_splits(path: &Path, splits: &[Split]) -> Result<()> {
    std::fs::write(path, serde_json::to_string(splits)?)?;
    Ok(())
}

pub fn load_splits(path: &Path) -> Result<Vec<Split>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Full metric set for one evaluation side of one repeat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mcc: f64,
    pub macro_f1: f64,
    pub balanced_accuracy: f64,
    pub auroc: f64,
    pub auprc: f64,
}

/// Pair-micro metrics: confusion over all pairs pooled.
pub fn pair_micro(pred: &[u8], scores: &[f64], y: &[u8]) -> MetricSet {
    let (tp, fp, tn, fn_) = metrics::confusion(pred, y);
    MetricSet {
        mcc: metrics::mcc(tp, fp, tn, fn_),
        macro_f1: metrics::macro_f1(tp, fp, tn, fn_),
        balanced_accuracy: metrics::balanced_accuracy(tp, fp, tn, fn_),
        auroc: metrics::auroc(scores, y),
        auprc: metrics::auprc(scores, y),
    }
}

/// Model-macro metrics: compute per candidate model, then average.
/// Candidates whose evaluation pairs contain a single class still
/// contribute (their degenerate metrics follow the 0 conventions, and
/// their ranking metrics fall back to 0.5 / 0).
pub fn model_macro(
    candidate_ids: &[String],
    pred: &[u8],
    scores: &[f64],
    y: &[u8],
) -> MetricSet {
    let mut groups: BTreeMap<&String, Vec<usize>> = BTreeMap::new();
    for (i, c) in candidate_ids.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let mut acc = MetricSet {
        mcc: 0.0,
        macro_f1: 0.0,
        balanced_accuracy: 0.0,
        auroc: 0.0,
        auprc: 0.0,
    };
    let n = groups.len() as f64;
    for idx in groups.values() {
        let p: Vec<u8> = idx.iter().map(|&i| pred[i]).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let t: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
        let m = pair_micro(&p, &s, &t);
        acc.mcc += m.mcc;
        acc.macro_f1 += m.macro_f1;
        acc.balanced_accuracy += m.balanced_accuracy;
        acc.auroc += m.auroc;
        acc.auprc += m.auprc;
    }
    MetricSet {
        mcc: acc.mcc / n,
        macro_f1: acc.macro_f1 / n,
        balanced_accuracy: acc.balanced_accuracy / n,
        auroc: acc.auroc / n,
        auprc: acc.auprc / n,
    }
}

/// Mean and population standard deviation across repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let (mean, std) = crate::util::mean_std(values);
    Aggregate { mean, std }
}

/// Positive-class prevalence as a percentage.
pub fn prevalence_pct(labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    100.0 * labels.iter().filter(|&&v| v == 1).count() as f64 / labels.len() as f64
}

/// Regularized incomplete beta function I_x(a, b) via its continued
/// fraction (Lentz's method).
fn betainc(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // ln B(a,b) via ln-gamma (Lanczos)
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta).exp();
    // use the symmetry that keeps the continued fraction convergent
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - (a * x.ln() + b * (1.0 - x).ln() - ln_beta).exp() * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let tiny = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let num = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 + num * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + num / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let num = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + num * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + num / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection formula
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Exact one-sided lower confidence bound for a binomial proportion at
/// confidence `1 - alpha`, given `k` successes out of `n` trials.
///
/// For k = n the bound is alpha^(1/n); for k = 0 it is 0; otherwise it is
/// the Beta(k, n-k+1) quantile at alpha, found by bisection on the
/// regularized incomplete beta function to 1e-9.
pub fn clopper_pearson_lower(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if n == 0 || k > n || !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(AuditError::Config(format!(
            "invalid binomial bound request: k={k}, n={n}, alpha={alpha}"
        )));
    }
    if k == 0 {
        return Ok(0.0);
    }
    if k == n {
        return Ok(alpha.powf(1.0 / n as f64));
    }
    let (a, b) = (k as f64, (n - k + 1) as f64);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if betainc(mid, a, b) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::metrics::*;
    use super::*;

    fn brute_force_mcc(pred: &[u8], y: &[u8]) -> f64 {
        let (tp, fp, tn, fn_) = confusion(pred, y);
        mcc(tp, fp, tn, fn_)
    }

    #[test]
    fn mcc_hand_cases() {
        // perfect, inverted, all-one-class
        assert!((brute_force_mcc(&[1, 1, 0, 0], &[1, 1, 0, 0]) - 1.0).abs() < 1e-12);
        assert!((brute_force_mcc(&[0, 0, 1, 1], &[1, 1, 0, 0]) + 1.0).abs() < 1e-12);
        assert_eq!(brute_force_mcc(&[1, 1, 1, 1], &[1, 1, 0, 0]), 0.0);
        // tp=1 fp=1 tn=1 fn=1 -> 0
        assert_eq!(brute_force_mcc(&[1, 1, 0, 0], &[1, 0, 1, 0]), 0.0);
    }

    #[test]
    fn macro_f1_hand_cases() {
        // perfect -> 1; one fn on 3 samples: f1_pos=2/3, f1_neg=4/5
        let (tp, fp, tn, fn_) = confusion(&[1, 0, 0], &[1, 1, 0]);
        assert_eq!((tp, fp, tn, fn_), (1, 0, 1, 1));
        let f = macro_f1(tp, fp, tn, fn_);
        assert!((f - 0.5 * (2.0 / 3.0 + 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(macro_f1(2, 0, 2, 0), 1.0);
        // empty positive class, nothing predicted positive: f1_pos = 0
        assert!((macro_f1(0, 0, 4, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn balanced_accuracy_hand_cases() {
        assert_eq!(balanced_accuracy(2, 0, 2, 0), 1.0);
        // tpr 0.5, tnr 1.0
        assert!((balanced_accuracy(1, 0, 2, 1) - 0.75).abs() < 1e-12);
        // absent positive class counts as recall 0
        assert_eq!(balanced_accuracy(0, 0, 4, 0), 0.5);
    }

    #[test]
    fn auroc_matches_pairwise_count() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(4..30);
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..8) as f64) / 8.0).collect();
            let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            if y.iter().all(|&v| v == 0) || y.iter().all(|&v| v == 1) {
                continue;
            }
            // oracle: P(s_pos > s_neg) + 0.5 P(tie)
            let mut wins = 0.0;
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if y[i] == 1 && y[j] == 0 {
                        total += 1.0;
                        if scores[i] > scores[j] {
                            wins += 1.0;
                        } else if scores[i] == scores[j] {
                            wins += 0.5;
                        }
                    }
                }
            }
            let oracle = wins / total;
            assert!((auroc(&scores, &y) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn auprc_hand_case() {
        // scores descending: pos, neg, pos -> precision steps 1, then 2/3
        let scores = vec![0.9, 0.8, 0.7];
        let y = vec![1, 0, 1];
        let expected = 0.5 * 1.0 + 0.5 * (2.0 / 3.0);
        assert!((auprc(&scores, &y) - expected).abs() < 1e-12);
        // perfect ranking -> 1
        assert!((auprc(&[0.9, 0.8, 0.1], &[1, 1, 0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // bounds for one-sided 95% confidence
        let cases = [
            (50usize, 50usize, 0.942),
            (48, 50, 0.879),
            (46, 50, 0.826),
            (292, 300, 0.9524),
        ];
        for (k, n, expected) in cases {
            let got = clopper_pearson_lower(k, n, 0.05).unwrap();
            assert!(
                (got - expected).abs() < 5e-4,
                "({k},{n}): got {got}, expected {expected}"
            );
        }
        assert_eq!(clopper_pearson_lower(0, 10, 0.05).unwrap(), 0.0);
        assert!(clopper_pearson_lower(5, 0, 0.05).is_err());
        assert!(clopper_pearson_lower(11, 10, 0.05).is_err());
    }

    #[test]
    fn clopper_pearson_bound_is_conservative() {
        // I_{bound}(k, n-k+1) == alpha at the returned bound
        for &(k, n) in &[(3usize, 10usize), (7, 20), (45, 50)] {
            let bound = clopper_pearson_lower(k, n, 0.05).unwrap();
            let cdf = betainc(bound, k as f64, (n - k + 1) as f64);
            assert!((cdf - 0.05).abs() < 1e-6, "({k},{n}): cdf {cdf}");
            assert!(bound < k as f64 / n as f64);
        }
    }

    #[test]
    fn betainc_matches_closed_forms() {
        // I_x(1, 1) = x; I_x(1, b) = 1 - (1-x)^b; I_x(a, 1) = x^a
        for &x in &[0.1, 0.37, 0.5, 0.9] {
            assert!((betainc(x, 1.0, 1.0) - x).abs() < 1e-12);
            assert!((betainc(x, 1.0, 3.0) - (1.0 - (1.0 - x).powi(3))).abs() < 1e-10);
            assert!((betainc(x, 4.0, 1.0) - x.powi(4)).abs() < 1e-10);
        }
    }

    fn demo_pairs() -> (Vec<String>, Vec<u8>) {
        // 4 families x 4 pairs; two positives per family
        let mut fams = Vec::new();
        let mut labels = Vec::new();
        for f in 0..4 {
            for p in 0..4 {
                fams.push(format!("fam{f}"));
                labels.push(u8::from(p < 2));
            }
        }
        (fams, labels)
    }

    #[test]
    fn splits_are_family_disjoint_and_class_complete() {
        let (fams, labels) = demo_pairs();
        let cfg = SplitConfig {
            n_repeats: 10,
            ..Default::default()
        };
        let splits = make_splits(&fams, &labels, &cfg).unwrap();
        assert_eq!(splits.len(), 10);
        for s in &splits {
            let cal_fams: BTreeSet<&String> = s.calibration.iter().map(|&i| &fams[i]).collect();
            let eval_fams: BTreeSet<&String> = s.evaluation.iter().map(|&i| &fams[i]).collect();
            assert!(cal_fams.is_disjoint(&eval_fams));
            for side in [&s.calibration, &s.evaluation] {
                assert!(side.iter().any(|&i| labels[i] == 0));
                assert!(side.iter().any(|&i| labels[i] == 1));
            }
            assert_eq!(s.calibration.len() + s.evaluation.len(), fams.len());
        }
    }

    #[test]
    fn split_seeds_follow_the_protocol() {
        let (fams, labels) = demo_pairs();
        let cfg = SplitConfig {
            n_repeats: 5,
            ..Default::default()
        };
        let splits = make_splits(&fams, &labels, &cfg).unwrap();
        for (r, s) in splits.iter().enumerate() {
            assert_eq!(s.seed, 10007 * r as u64);
        }
        // deterministic across invocations
        let again = make_splits(&fams, &labels, &cfg).unwrap();
        assert_eq!(splits, again);
    }

    #[test]
    fn impossible_split_errors() {
        // single family cannot be split
        let fams = vec!["only".to_string(); 4];
        let labels = vec![0, 0, 1, 1];
        assert!(make_splits(&fams, &labels, &SplitConfig::default()).is_err());
        // all-clean labels can never be class complete
        let (fams, _) = demo_pairs();
        let all_clean = vec![0u8; fams.len()];
        assert!(make_splits(&fams, &all_clean, &SplitConfig::default()).is_err());
    }

    #[test]
    fn split_roundtrip() {
        let (fams, labels) = demo_pairs();
        let cfg = SplitConfig {
            n_repeats: 3,
            ..Default::default()
        };
        let splits = make_splits(&fams, &labels, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("splits.json");
        save_splits(&path, &splits).unwrap();
        assert_eq!(load_splits(&path).unwrap(), splits);
    }

    #[test]
    fn model_macro_averages_per_candidate() {
        // candidate A perfect, candidate B inverted -> mcc averages to 0
        let cands = vec![
            "A".to_string(),
            "A".to_string(),
            "B".to_string(),
            "B".to_string(),
        ];
        let pred = vec![1, 0, 0, 1];
        let scores = vec![0.9, 0.1, 0.2, 0.8];
        let y = vec![1, 0, 1, 0];
        let m = model_macro(&cands, &pred, &scores, &y);
        assert!((m.mcc - 0.0).abs() < 1e-12);
        let micro = pair_micro(&pred, &scores, &y);
        assert!((micro.mcc - 0.0).abs() < 1e-12);
    }

    #[test]
    fn prevalence_reference_values() {
        let make = |pos: usize, n: usize| -> Vec<u8> {
            (0..n).map(|i| u8::from(i < pos)).collect()
        };
        assert!((prevalence_pct(&make(19, 137)) - 13.9).abs() < 0.05);
        assert!((prevalence_pct(&make(117, 137)) - 85.4).abs() < 0.05);
        assert!((prevalence_pct(&make(132, 137)) - 96.4).abs() < 0.05);
    }

    #[test]
    fn aggregate_mean_std() {
        let a = aggregate(&[1.0, 2.0, 3.0, 4.0]);
        assert!((a.mean - 2.5).abs() < 1e-12);
        assert!((a.std - (1.25f64).sqrt()).abs() < 1e-12);
    }
}
