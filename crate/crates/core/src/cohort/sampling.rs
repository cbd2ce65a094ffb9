use std::collections::BTreeMap;

use rand::Rng;

use super::{Cohort, DerivedTable};
use crate::rng::{derive_seed, rng_from_seed};
use crate::targets::TargetSpec;

/// Picks one visit per patient uniformly at random from `(patient_id, visit_id)`
/// candidates.
///
/// Each patient's candidates are sorted by visit id and indexed from a stream
/// seeded by `(seed, patient_id)`, so the result depends only on the set of
/// candidates and the seed, never on their order. Output is sorted by patient.
pub fn sample_one_per_patient<'a, I>(candidates: I, seed: u64) -> Vec<(String, String)>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut by_patient: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (p, v) in candidates {
        by_patient.entry(p).or_default().push(v);
    }
    by_patient
        .into_iter()
        .map(|(p, mut visits)| {
            visits.sort_unstable();
            visits.dedup();
            let pick = if visits.len() == 1 {
                0
            } else {
                rng_from_seed(derive_seed(seed, p)).random_range(0..visits.len())
            };
            (p.to_string(), visits[pick].to_string())
        })
        .collect()
}

/// Restricts to visits where the target's analyte has a matched value, then
/// samples one visit per patient.
pub fn sample_one_visit_per_patient(
    cohort: &Cohort,
    derived: &DerivedTable,
    target: &TargetSpec,
    seed: u64,
) -> Vec<(String, String)> {
    let candidates = cohort
        .visits()
        .filter(|v| {
            derived
                .get(&v.visit_id)
                .is_some_and(|d| d.get(target.analyte).is_some())
        })
        .map(|v| (v.patient_id.as_str(), v.visit_id.as_str()));
    sample_one_per_patient(candidates, seed)
}
