//! AUC estimation, DeLong variance and paired comparison, bootstrap metrics.

mod bootstrap;
mod curve;
mod ppv;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub use bootstrap::{bootstrap_interval, BootstrapConfig, MIN_REPLICATES, BootstrapResult, Interval};
pub use curve::{roc_curve, trapezoid_area, RocPoint};
pub use ppv::{ppv_at_top_fraction, TopFractionPpv};

/// One evaluated unit (a patient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub unit_id: String,
    pub score: f64,
    pub label: bool,
}

impl ScoredSample {
    pub fn new(unit_id: impl Into<String>, score: f64, label: bool) -> Self {
        ScoredSample {
            unit_id: unit_id.into(),
            score,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucEstimate {
    pub auc: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub auc_a: f64,
    pub auc_b: f64,
    /// `auc_b - auc_a`.
    pub delta: f64,
    pub delta_variance: f64,
    pub delta_ci_low: f64,
    pub delta_ci_high: f64,
    pub z: f64,
    /// One-sided p-value for `auc_b > auc_a`.
    pub p_one_sided: f64,
}

/// DeLong structural components: one placement value per positive (`v10`)
/// and per negative (`v01`).
#[derive(Debug, Clone, PartialEq)]
pub struct DelongComponents {
    pub auc: f64,
    pub v10: Vec<f64>,
    pub v01: Vec<f64>,
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Two-sided normal quantile for a confidence level, e.g. 1.95996 for 0.95.
pub fn z_for_level(level: f64) -> f64 {
    standard_normal().inverse_cdf(0.5 + level / 2.0)
}

fn check_scores(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::invalid(format!("non-finite score for unit `{}`", s.unit_id)));
    }
    let m = samples.iter().filter(|s| s.label).count();
    let n = samples.len() - m;
    if m == 0 || n == 0 {
        return Err(Error::DegenerateLabels {
            positives: m,
            negatives: n,
        });
    }
    Ok((m, n))
}

/// 1-based mid-ranks (ties share the average rank).
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney AUC with ties counted one half, via mid-ranks in O(N log N).
pub fn auc_midrank(samples: &[ScoredSample]) -> Result<f64> {
    let (m, n) = check_scores(samples)?;
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let ranks = midranks(&scores);
    let pos_rank_sum: f64 = samples
        .iter()
        .zip(&ranks)
        .filter(|(s, _)| s.label)
        .map(|(_, r)| r)
        .sum();
    let (mf, nf) = (m as f64, n as f64);
    Ok((pos_rank_sum - mf * (mf + 1.0) / 2.0) / (mf * nf))
}

pub fn delong_components(samples: &[ScoredSample]) -> Result<DelongComponents> {
    let (m, n) = check_scores(samples)?;
    let all: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let pos: Vec<f64> = samples.iter().filter(|s| s.label).map(|s| s.score).collect();
    let neg: Vec<f64> = samples.iter().filter(|s| !s.label).map(|s| s.score).collect();
    let r_all = midranks(&all);
    let r_pos = midranks(&pos);
    let r_neg = midranks(&neg);

    let (mut v10, mut v01) = (Vec::with_capacity(m), Vec::with_capacity(n));
    let (mut ip, mut ineg) = (0, 0);
    for (s, &r) in samples.iter().zip(&r_all) {
        if s.label {
            v10.push((r - r_pos[ip]) / n as f64);
            ip += 1;
        } else {
            v01.push(1.0 - (r - r_neg[ineg]) / m as f64);
            ineg += 1;
        }
    }
    let auc = auc_midrank(samples)?;
    Ok(DelongComponents { auc, v10, v01 })
}

/// Sample covariance with the n-1 denominator.
fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len() as f64;
    let ma = a.iter().sum::<f64>() / k;
    let mb = b.iter().sum::<f64>() / k;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (k - 1.0)
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// DeLong variance and Wald interval clipped to [0, 1].
pub fn delong_variance_ci(samples: &[ScoredSample], level: f64) -> Result<AucEstimate> {
    let c = delong_components(samples)?;
    let (m, n) = (c.v10.len(), c.v01.len());
    if m < 2 || n < 2 {
        return Err(Error::invalid(format!(
            "DeLong variance needs at least 2 positives and 2 negatives, got {m} and {n}"
        )));
    }
    let variance = (covariance(&c.v10, &c.v10) / m as f64 + covariance(&c.v01, &c.v01) / n as f64).max(0.0);
    if variance == 0.0 {
        log::warn!("zero DeLong variance (AUC {}); interval collapses to the point", c.auc);
    }
    let half = z_for_level(level) * variance.sqrt();
    Ok(AucEstimate {
        auc: c.auc,
        variance,
        ci_low: clip01(c.auc - half),
        ci_high: clip01(c.auc + half),
        n_pos: m,
        n_neg: n,
    })
}

/// Paired DeLong test of `b` over `a` on the same units in the same order.
pub fn delong_paired_test(
    samples_a: &[ScoredSample],
    samples_b: &[ScoredSample],
    level: f64,
) -> Result<PairedComparison> {
    if samples_a.len() != samples_b.len() {
        return Err(Error::invalid(format!(
            "paired samples differ in length: {} vs {}",
            samples_a.len(),
            samples_b.len()
        )));
    }
    if let Some((a, b)) = samples_a
        .iter()
        .zip(samples_b)
        .find(|(a, b)| a.unit_id != b.unit_id || a.label != b.label)
    {
        return Err(Error::invalid(format!(
            "paired samples disagree at unit `{}` / `{}`",
            a.unit_id, b.unit_id
        )));
    }
    let ca = delong_components(samples_a)?;
    let cb = delong_components(samples_b)?;
    let (m, n) = (ca.v10.len(), ca.v01.len());
    if m < 2 || n < 2 {
        return Err(Error::invalid(format!(
            "paired DeLong test needs at least 2 positives and 2 negatives, got {m} and {n}"
        )));
    }
    // Var(V10_b - V10_a) equals S10_bb + S10_aa - 2 S10_ab.
    let d10: Vec<f64> = cb.v10.iter().zip(&ca.v10).map(|(b, a)| b - a).collect();
    let d01: Vec<f64> = cb.v01.iter().zip(&ca.v01).map(|(b, a)| b - a).collect();
    let var = (covariance(&d10, &d10) / m as f64 + covariance(&d01, &d01) / n as f64).max(0.0);
    let delta = cb.auc - ca.auc;

    let z = if var > 0.0 {
        delta / var.sqrt()
    } else if delta == 0.0 {
        0.0
    } else {
        return Err(Error::DegenerateComparison);
    };
    let half = z_for_level(level) * var.sqrt();
    Ok(PairedComparison {
        auc_a: ca.auc,
        auc_b: cb.auc,
        delta,
        delta_variance: var,
        delta_ci_low: delta - half,
        delta_ci_high: delta + half,
        z,
        p_one_sided: standard_normal().sf(z),
    })
}

/// Bonferroni-corrected significance level.
pub fn bonferroni_alpha(alpha: f64, m_tests: usize) -> Result<f64> {
    if m_tests == 0 {
        return Err(Error::invalid("Bonferroni correction needs at least one test"));
    }
    Ok(alpha / m_tests as f64)
}
