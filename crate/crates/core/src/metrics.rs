//! Speller performance metrics: information transfer rate, ROC/AUC and paired
//! t-tests.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::scheduler::Paradigm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("single-class labels: ROC needs both targets and non-targets")]
    SingleClass,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate test: differences have zero variance")]
    DegenerateTest,
}

/// Wolpaw bits per selection:
/// `log₂m + p·log₂p + (1−p)·log₂((1−p)/(m−1))`, with `0·log₂0 = 0`.
pub fn bits_per_selection(p: f64, m: usize) -> Result<f64, MetricsError> {
    if m < 2 {
        return Err(MetricsError::Domain(format!("alphabet size {m} < 2")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(MetricsError::Domain(format!("accuracy {p} outside [0, 1]")));
    }
    let m = m as f64;
    let hit = if p > 0.0 { p * p.log2() } else { 0.0 };
    let miss = if p < 1.0 { (1.0 - p) * ((1.0 - p) / (m - 1.0)).log2() } else { 0.0 };
    Ok(m.log2() + hit + miss)
}

/// Time to spell one character: `reps · slots · isi`, with `2n` slots per
/// repetition for CP300 and `2n + 2` for XP300.
pub fn char_time_s(paradigm: Paradigm, reps: usize, isi_s: f64, n: usize) -> f64 {
    (reps * paradigm.slots_per_repetition(n)) as f64 * isi_s
}

/// Information transfer rate in bits per minute.
pub fn itr_bpm(p: f64, m: usize, paradigm: Paradigm, reps: usize, isi_s: f64, n: usize) -> Result<f64, MetricsError> {
    if reps < 1 {
        return Err(MetricsError::Domain("repetitions must be >= 1".into()));
    }
    if !(isi_s > 0.0) {
        return Err(MetricsError::Domain(format!("isi {isi_s} must be > 0")));
    }
    Ok(bits_per_selection(p, m)? * 60.0 / char_time_s(paradigm, reps, isi_s, n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(MetricsError::Domain(format!("score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

/// ROC curve from a threshold sweep over the distinct scores; the AUC is the
/// trapezoidal area, which gives tied pairs half credit.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, MetricsError> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// AUC as the normalized Mann–Whitney U statistic, from mid-ranks.
pub fn auc_mann_whitney(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let pos_f = pos as f64;
    let u = rank_sum - pos_f * (pos_f + 1.0) / 2.0;
    Ok(u / (pos_f * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Two-sided.
    pub p: f64,
    pub p_one_sided: f64,
    pub mean_diff: f64,
    /// Sample standard deviation of the differences.
    pub sd_diff: f64,
}

impl fmt::Display for TTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t({})={:.2}, sd={:.2}, p={:.2e}", self.df, self.t, self.sd_diff, self.p)
    }
}

/// Sample mean and standard deviation (`n − 1` denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Paired t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricsError::Domain("paired t-test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean_diff, sd_diff) = mean_sd(&diffs);
    let scale = diffs.iter().map(|d| d.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if !(sd_diff > 1e-12 * scale) {
        return Err(MetricsError::DegenerateTest);
    }
    let n = diffs.len();
    let t = mean_diff / (sd_diff / (n as f64).sqrt());
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| MetricsError::Domain(e.to_string()))?;
    let tail = dist.sf(t.abs());
    Ok(TTest { t, df, p: (2.0 * tail).min(1.0), p_one_sided: tail, mean_diff, sd_diff })
}
