//! AUC with DeLong intervals, a paired comparison of two scores on the same
//! units, and PPV in the top 5% with a bootstrap interval.

use eyelab::rng::rng_from_seed;
use eyelab::roc::{
    auc_midrank, bootstrap_interval, delong_paired_test, delong_variance_ci, ppv_at_top_fraction, roc_curve,
    trapezoid_area, BootstrapConfig, ScoredSample,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> eyelab::Result<()> {
    let mut rng = rng_from_seed(42);
    let n = 1500;
    let mut weak = Vec::with_capacity(n);
    let mut strong = Vec::with_capacity(n);
    for i in 0..n {
        let y = rng.random::<f64>() < 0.12;
        let shift = if y { 1.0 } else { 0.0 };
        let shared: f64 = rng.sample(StandardNormal);
        let a = 0.55 * shift + 0.6 * shared + 0.8 * rng.sample::<f64, _>(StandardNormal);
        let b = 1.15 * shift + 0.6 * shared + 0.8 * rng.sample::<f64, _>(StandardNormal);
        weak.push(ScoredSample::new(format!("p{i:05}"), a, y));
        strong.push(ScoredSample::new(format!("p{i:05}"), b, y));
    }

    for (name, s) in [("weak", &weak), ("strong", &strong)] {
        let est = delong_variance_ci(s, 0.95)?;
        let curve = roc_curve(s)?;
        println!(
            "{name:<7} AUC {:.3} (95% CI {:.3}-{:.3}), {} ROC points, trapezoid {:.6} vs midrank {:.6}",
            est.auc,
            est.ci_low,
            est.ci_high,
            curve.len(),
            trapezoid_area(&curve),
            auc_midrank(s)?
        );
    }

    let paired = delong_paired_test(&weak, &strong, 0.95)?;
    println!(
        "delta {:.3} (95% CI {:.3} to {:.3}), z {:.2}, one-sided p {:.2e}",
        paired.delta, paired.delta_ci_low, paired.delta_ci_high, paired.z, paired.p_one_sided
    );

    let top = ppv_at_top_fraction(&strong, 0.05)?;
    let metric = |s: &[ScoredSample]| ppv_at_top_fraction(s, 0.05).map(|r| r.ppv);
    let boot = bootstrap_interval(metric, &strong, Some(&weak), &BootstrapConfig { replicates: 500, seed: 1, level: 0.95 })?;
    println!(
        "PPV top 5% (k = {}): strong {:.3} ({:.3}, {:.3}), improvement {:.3}, bootstrap p {:.4}",
        top.k,
        boot.metric.estimate,
        boot.metric.lo,
        boot.metric.hi,
        boot.improvement.map_or(f64::NAN, |i| i.estimate),
        boot.p_superiority.unwrap_or(f64::NAN)
    );
    Ok(())
}
