use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ScoredSample;
use crate::error::{Error, Result};
use crate::rng::{derive_seed_index, rng_from_seed};

pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 2000,
            seed: 0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub metric: Interval,
    /// Present when a paired baseline was supplied.
    pub baseline: Option<Interval>,
    /// `metric - baseline`, paired by resampled unit.
    pub improvement: Option<Interval>,
    /// Fraction of replicates whose improvement is <= 0.
    pub p_superiority: Option<f64>,
    /// Draws discarded because the metric was undefined.
    pub redraws: usize,
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn percentile(mut values: Vec<f64>, estimate: f64, level: f64) -> Interval {
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Interval {
        estimate,
        lo: quantile_sorted(&values, tail),
        hi: quantile_sorted(&values, 1.0 - tail),
    }
}

/// Percentile bootstrap over units, resampled with replacement.
///
/// Replicate `i`, attempt `j` draws from a stream seeded by `(seed, i, j)`, so
/// results do not depend on thread count. An undefined metric on a draw
/// triggers a redraw; more than `10 * replicates` total attempts is an error.
pub fn bootstrap_interval<M>(
    metric: M,
    samples: &[ScoredSample],
    paired_baseline: Option<&[ScoredSample]>,
    config: &BootstrapConfig,
) -> Result<BootstrapResult>
where
    M: Fn(&[ScoredSample]) -> Result<f64> + Sync,
{
    if config.replicates < MIN_REPLICATES {
        return Err(Error::invalid(format!(
            "at least {MIN_REPLICATES} bootstrap replicates required, got {}",
            config.replicates
        )));
    }
    if samples.is_empty() {
        return Err(Error::invalid("no samples to bootstrap"));
    }
    if let Some(base) = paired_baseline {
        if base.len() != samples.len()
            || base.iter().zip(samples).any(|(a, b)| a.unit_id != b.unit_id)
        {
            return Err(Error::invalid("paired baseline must cover the same units in the same order"));
        }
    }
    let point = metric(samples)?;
    let base_point = paired_baseline.map(&metric).transpose()?;

    let cap = 10 * config.replicates;
    let n = samples.len();
    let draws: Vec<Result<(f64, Option<f64>, usize)>> = (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            let rep_seed = derive_seed_index(config.seed, i as u64);
            let mut a = Vec::with_capacity(n);
            let mut b = Vec::with_capacity(n);
            for attempt in 0..cap {
                let mut rng = rng_from_seed(derive_seed_index(rep_seed, attempt as u64));
                a.clear();
                b.clear();
                for _ in 0..n {
                    let k = rng.random_range(0..n);
                    a.push(samples[k].clone());
                    if let Some(base) = paired_baseline {
                        b.push(base[k].clone());
                    }
                }
                let Ok(va) = metric(&a) else { continue };
                let vb = match paired_baseline {
                    Some(_) => match metric(&b) {
                        Ok(v) => Some(v),
                        Err(_) => continue,
                    },
                    None => None,
                };
                return Ok((va, vb, attempt));
            }
            Err(Error::BootstrapExhausted { attempts: cap })
        })
        .collect();

    let mut metric_vals = Vec::with_capacity(config.replicates);
    let mut base_vals = Vec::new();
    let mut redraws = 0;
    for d in draws {
        let (va, vb, extra) = d?;
        redraws += extra;
        metric_vals.push(va);
        if let Some(vb) = vb {
            base_vals.push(vb);
        }
    }
    if redraws + config.replicates > cap {
        return Err(Error::BootstrapExhausted { attempts: redraws + config.replicates });
    }

    let (baseline, improvement, p_superiority) = match base_point {
        Some(bp) => {
            let diffs: Vec<f64> = metric_vals.iter().zip(&base_vals).map(|(a, b)| a - b).collect();
            let p = diffs.iter().filter(|&&d| d <= 0.0).count() as f64 / diffs.len() as f64;
            (
                Some(percentile(base_vals, bp, config.level)),
                Some(percentile(diffs, point - bp, config.level)),
                Some(p),
            )
        }
        None => (None, None, None),
    };
    Ok(BootstrapResult {
        metric: percentile(metric_vals, point, config.level),
        baseline,
        improvement,
        p_superiority,
        redraws,
    })
}
