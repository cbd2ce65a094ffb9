//! Generates a synthetic cohort, fits per-target baselines on the
//! development split and compares them with the ensembled DLS scores on the
//! validation split.

use std::collections::BTreeMap;
use std::time::Instant;

use eyelab::cohort::{derive_cohort, DatasetId};
use eyelab::eval::{ensemble_scores, evaluate_targets, fit_baseline, BaselineConfig, EvalConfig};
use eyelab::synth::{generate, SynthConfig};
use eyelab::targets::TargetRegistry;

fn main() -> eyelab::Result<()> {
    let start = Instant::now();
    let n_patients = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let out = generate(&SynthConfig { seed: 7, n_patients, ..Default::default() })?;
    let cohort = &out.cohort;
    let derived = derive_cohort(cohort);
    let ensembled = ensemble_scores(cohort.scores())?;
    let registry = TargetRegistry::default();
    let specs = registry.select("primary")?;

    let bcfg = BaselineConfig { availability_slice: Some(DatasetId::ValA), ..Default::default() };
    let mut baselines = BTreeMap::new();
    for spec in &specs {
        baselines.insert(spec.name.clone(), fit_baseline(cohort, &derived, spec, &bcfg)?);
    }
    let cfg = EvalConfig { seed: 7, slice: Some(DatasetId::ValA), ..Default::default() };
    println!("{:<16} {:>12} {:>8} {:>8} {:>8} {:>8}", "target", "n / N", "base", "dls", "delta", "p");
    for (spec, r) in evaluate_targets(cohort, &derived, &specs, &ensembled, &baselines, &cfg) {
        match r {
            Ok(r) => println!(
                "{:<16} {:>12} {:>8.3} {:>8.3} {:>8.3} {:>8.4}{}",
                spec.name,
                format!("{} / {}", r.n, r.n_pos),
                r.baseline.auc,
                r.dls.auc,
                r.improvement,
                r.p_one_sided,
                if r.significant { " *" } else { "" }
            ),
            Err(e) => println!("{:<16} skipped: {e}", spec.name),
        }
    }
    println!("planted: {:?}", out.manifest.planted.iter().map(|p| (p.target.as_str(), p.baseline_auc, p.realized_prevalence)).collect::<Vec<_>>());
    println!("elapsed {:.2?}", start.elapsed());
    Ok(())
}
