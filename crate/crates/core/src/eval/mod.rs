//! Study orchestration: score ensembling, per-target evaluation sets,
//! baseline-vs-DLS comparisons and the derived tables.

mod subgroup;

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{
    adjusted_analysis, fit_logistic, select_baseline_features, AdjustedCovariates, AdjustedOptions,
    AdjustedRow, BaselineFeature, BaselineModel, FeatureSchema, FeatureValue, LogisticOptions,
    TrainingMetadata,
};
use crate::cohort::{sample_one_per_patient, Cohort, DatasetId, DerivedTable, ScoreRecord, Sex};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::roc::{
    bonferroni_alpha, bootstrap_interval, delong_paired_test, delong_variance_ci, ppv_at_top_fraction,
    AucEstimate, BootstrapConfig, Interval, ScoredSample,
};
use crate::targets::{normalize_name, TargetSpec};

pub use subgroup::{
    subgroup_analysis, Bucket, BucketRule, SubgroupRow, SubgroupVariable, MIN_SUBGROUP_POSITIVES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembledScore {
    pub patient_id: String,
    pub visit_id: String,
    pub target: String,
    pub score: f64,
    pub n_models: usize,
    pub n_eyes: usize,
}

/// Ensembled scores keyed by `(visit_id, target)`.
#[derive(Debug, Clone, Default)]
pub struct EnsembleTable {
    scores: BTreeMap<(String, String), EnsembledScore>,
}

impl EnsembleTable {
    pub fn get(&self, visit_id: &str, target: &str) -> Option<&EnsembledScore> {
        self.scores.get(&(visit_id.to_string(), target.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &EnsembledScore> {
        self.scores.values()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Flat mean over every contributing (member, image) score of a visit and
/// target.
pub fn ensemble_scores(raw: &[ScoreRecord]) -> Result<EnsembleTable> {
    struct Acc<'a> {
        patient: &'a str,
        sum: f64,
        n: usize,
        members: BTreeSet<&'a str>,
        images: BTreeSet<&'a str>,
    }
    let mut groups: BTreeMap<(String, String), Acc> = BTreeMap::new();
    for r in raw {
        if !(0.0..=1.0).contains(&r.score) {
            return Err(Error::invalid(format!("score {} for image `{}` outside [0, 1]", r.score, r.image_id)));
        }
        let acc = groups
            .entry((r.visit_id.clone(), normalize_name(&r.target_name)))
            .or_insert_with(|| Acc {
                patient: &r.patient_id,
                sum: 0.0,
                n: 0,
                members: BTreeSet::new(),
                images: BTreeSet::new(),
            });
        acc.sum += r.score;
        acc.n += 1;
        acc.members.insert(&r.model_member);
        acc.images.insert(&r.image_id);
    }
    let scores = groups
        .into_iter()
        .map(|((visit_id, target), a)| {
            let e = EnsembledScore {
                patient_id: a.patient.to_string(),
                visit_id: visit_id.clone(),
                target: target.clone(),
                score: a.sum / a.n as f64,
                n_models: a.members.len(),
                n_eyes: a.images.len(),
            };
            ((visit_id, target), e)
        })
        .collect();
    Ok(EnsembleTable { scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seed: u64,
    pub level: f64,
    pub alpha: f64,
    /// Number of prespecified primary tests for the Bonferroni divisor.
    pub n_primary: usize,
    /// Evaluate only patients in this dataset; `None` keeps everyone.
    pub slice: Option<DatasetId>,
    /// Drop matched labs whose gap exceeds this many days.
    pub max_gap_days: Option<i64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            level: 0.95,
            alpha: 0.05,
            n_primary: 9,
            slice: None,
            max_gap_days: None,
        }
    }
}

impl EvalConfig {
    pub fn target_seed(&self, spec: &TargetSpec) -> u64 {
        derive_seed(self.seed, &spec.name)
    }

    pub fn threshold_for(&self, spec: &TargetSpec) -> Result<f64> {
        if spec.primary {
            bonferroni_alpha(self.alpha, self.n_primary)
        } else {
            Ok(self.alpha)
        }
    }
}

/// One sampled visit of one patient, with both scores and the label.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalUnit {
    pub patient_id: String,
    pub visit_id: String,
    pub value: f64,
    pub day_gap: i64,
    pub label: bool,
    pub dls: f64,
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub target: String,
    pub units: Vec<EvalUnit>,
}

impl EvalSet {
    pub fn n_pos(&self) -> usize {
        self.units.iter().filter(|u| u.label).count()
    }

    pub fn dls_samples(&self) -> Vec<ScoredSample> {
        self.units.iter().map(|u| ScoredSample::new(&u.patient_id, u.dls, u.label)).collect()
    }

    pub fn baseline_samples(&self) -> Result<Vec<ScoredSample>> {
        self.units
            .iter()
            .map(|u| {
                u.baseline
                    .map(|b| ScoredSample::new(&u.patient_id, b, u.label))
                    .ok_or_else(|| Error::invalid("evaluation set has no baseline predictions"))
            })
            .collect()
    }

    pub fn subset(&self, keep: impl Fn(&EvalUnit) -> bool) -> EvalSet {
        EvalSet {
            target: self.target.clone(),
            units: self.units.iter().filter(|u| keep(u)).cloned().collect(),
        }
    }
}

fn in_slice(cohort: &Cohort, patient_id: &str, slice: Option<&DatasetId>) -> bool {
    match slice {
        None => true,
        Some(d) => cohort.patient(patient_id).is_some_and(|p| &p.dataset_id == d),
    }
}

pub fn feature_row(
    cohort: &Cohort,
    derived: &DerivedTable,
    visit_id: &str,
    features: &[BaselineFeature],
) -> Vec<FeatureValue> {
    let visit = cohort.visit(visit_id).expect("visit ids come from the cohort");
    let d = derived.get(visit_id);
    features.iter().map(|f| f.value(cohort, visit, d)).collect()
}

/// Matches, labels and samples one visit per patient. Only visits with both
/// a matched value and an ensembled score qualify.
pub fn build_eval_set(
    cohort: &Cohort,
    derived: &DerivedTable,
    spec: &TargetSpec,
    ensembled: &EnsembleTable,
    baseline: Option<&BaselineModel>,
    config: &EvalConfig,
) -> Result<EvalSet> {
    let mut qualifying = BTreeMap::new();
    for visit in cohort.visits() {
        if !in_slice(cohort, &visit.patient_id, config.slice.as_ref()) {
            continue;
        }
        let Some(m) = derived.get(&visit.visit_id).and_then(|d| d.get(spec.analyte)) else {
            continue;
        };
        if config.max_gap_days.is_some_and(|w| m.day_gap > w) {
            continue;
        }
        let Some(score) = ensembled.get(&visit.visit_id, &spec.name) else {
            continue;
        };
        qualifying.insert(visit.visit_id.as_str(), (visit.patient_id.as_str(), m.value, m.day_gap, score.score));
    }
    let picked = sample_one_per_patient(
        qualifying.iter().map(|(v, (p, ..))| (*p, *v)),
        config.target_seed(spec),
    );
    let rows: Vec<Vec<FeatureValue>> = match baseline {
        Some(b) => picked.iter().map(|(_, v)| feature_row(cohort, derived, v, &b.features)).collect(),
        None => Vec::new(),
    };
    let preds = match baseline {
        Some(b) => Some(b.predict(&rows)?),
        None => None,
    };
    let mut units = Vec::with_capacity(picked.len());
    for (i, (patient_id, visit_id)) in picked.into_iter().enumerate() {
        let (_, value, day_gap, dls) = qualifying[visit_id.as_str()];
        units.push(EvalUnit {
            label: spec.is_positive(value)?,
            patient_id,
            visit_id,
            value,
            day_gap,
            dls,
            baseline: preds.as_ref().map(|p| p[i]),
        });
    }
    Ok(EvalSet { target: spec.name.clone(), units })
}

/// One row of the main comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub target: String,
    pub n: usize,
    pub n_pos: usize,
    pub baseline: AucEstimate,
    pub dls: AucEstimate,
    pub improvement: f64,
    pub improvement_ci_low: f64,
    pub improvement_ci_high: f64,
    pub p_one_sided: f64,
    pub primary: bool,
    pub alpha: f64,
    pub significant: bool,
}

fn insufficient(set: &EvalSet) -> Option<Error> {
    let pos = set.n_pos();
    let neg = set.units.len() - pos;
    (pos < 2 || neg < 2).then(|| Error::InsufficientCases { target: set.target.clone(), positives: pos, negatives: neg })
}

/// Paired DeLong comparison on an evaluation set.
pub fn compare_set(set: &EvalSet, spec: &TargetSpec, config: &EvalConfig) -> Result<EvalResult> {
    if let Some(e) = insufficient(set) {
        return Err(e);
    }
    let dls = set.dls_samples();
    let base = set.baseline_samples()?;
    let paired = delong_paired_test(&base, &dls, config.level)?;
    let alpha = config.threshold_for(spec)?;
    Ok(EvalResult {
        target: spec.name.clone(),
        n: set.units.len(),
        n_pos: set.n_pos(),
        baseline: delong_variance_ci(&base, config.level)?,
        dls: delong_variance_ci(&dls, config.level)?,
        improvement: paired.delta,
        improvement_ci_low: paired.delta_ci_low,
        improvement_ci_high: paired.delta_ci_high,
        p_one_sided: paired.p_one_sided,
        primary: spec.primary,
        alpha,
        significant: paired.p_one_sided < alpha,
    })
}

pub fn evaluate_target(
    cohort: &Cohort,
    derived: &DerivedTable,
    spec: &TargetSpec,
    ensembled: &EnsembleTable,
    baseline: &BaselineModel,
    config: &EvalConfig,
) -> Result<EvalResult> {
    let set = build_eval_set(cohort, derived, spec, ensembled, Some(baseline), config)?;
    compare_set(&set, spec, config)
}

/// Evaluates targets in parallel; results keep the input order.
pub fn evaluate_targets<'a>(
    cohort: &Cohort,
    derived: &DerivedTable,
    specs: &[&'a TargetSpec],
    ensembled: &EnsembleTable,
    baselines: &BTreeMap<String, BaselineModel>,
    config: &EvalConfig,
) -> Vec<(&'a TargetSpec, Result<EvalResult>)> {
    specs
        .par_iter()
        .map(|spec| {
            let r = match baselines.get(&spec.name) {
                Some(b) => evaluate_target(cohort, derived, spec, ensembled, b, config),
                None => Err(Error::invalid(format!("no baseline model for `{}`", spec.name))),
            };
            (*spec, r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub candidates: Vec<BaselineFeature>,
    pub availability: f64,
    pub train_slice: DatasetId,
    /// Slice whose feature availability decides the feature set.
    pub availability_slice: Option<DatasetId>,
    pub logistic: LogisticOptions,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            candidates: BaselineFeature::STANDARD.to_vec(),
            availability: 0.85,
            train_slice: DatasetId::DevTrain,
            availability_slice: None,
            logistic: LogisticOptions::default(),
            seed: 0,
        }
    }
}

/// Fits a per-target baseline on every training-slice visit with a matched
/// value for the target.
pub fn fit_baseline(
    cohort: &Cohort,
    derived: &DerivedTable,
    spec: &TargetSpec,
    config: &BaselineConfig,
) -> Result<BaselineModel> {
    let visits_in = |slice: Option<&DatasetId>| -> Vec<(&str, f64)> {
        cohort
            .visits()
            .filter(|v| in_slice(cohort, &v.patient_id, slice))
            .filter_map(|v| {
                derived
                    .get(&v.visit_id)
                    .and_then(|d| d.get(spec.analyte))
                    .map(|m| (v.visit_id.as_str(), m.value))
            })
            .collect()
    };
    let train = visits_in(Some(&config.train_slice));
    let avail_visits = match &config.availability_slice {
        Some(s) => visits_in(Some(s)),
        None => train.clone(),
    };
    let defs: Vec<_> = config.candidates.iter().map(|f| f.def()).collect();
    let avail_rows: Vec<Vec<FeatureValue>> = avail_visits
        .iter()
        .map(|(v, _)| feature_row(cohort, derived, v, &config.candidates))
        .collect();
    let kept = select_baseline_features(&avail_rows, &defs, config.availability)?;
    let features: Vec<BaselineFeature> = kept
        .iter()
        .map(|d| BaselineFeature::from_name(&d.name).expect("defs come from baseline features"))
        .collect();
    let rows: Vec<Vec<FeatureValue>> =
        train.iter().map(|(v, _)| feature_row(cohort, derived, v, &features)).collect();
    let y: Vec<bool> = train.iter().map(|(_, x)| spec.is_positive(*x)).collect::<Result<_>>()?;
    let pos = y.iter().filter(|v| **v).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::InsufficientCases { target: spec.name.clone(), positives: pos, negatives: y.len() - pos });
    }
    let schema = FeatureSchema::fit(&kept, &rows)?;
    let x = schema.encode(&rows)?;
    let model = fit_logistic(&x, &y, &config.logistic)?;
    let imputed = features
        .iter()
        .enumerate()
        .map(|(j, f)| (f.name().to_string(), rows.iter().filter(|r| r[j].is_missing()).count()))
        .collect();
    Ok(BaselineModel {
        features,
        schema,
        model,
        metadata: TrainingMetadata {
            target: spec.name.clone(),
            split: config.train_slice.as_str().to_string(),
            seed: config.seed,
            tolerance: config.logistic.tol,
            c: config.logistic.c,
            class_weight: config.logistic.class_weight,
            n_train: y.len(),
            n_positive: pos,
            imputed,
        },
    })
}

/// Temporal-sensitivity row: the evaluation restricted to gaps within `window_days`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub window_days: i64,
    pub label: String,
    pub result: EvalResult,
}

pub fn temporal_sensitivity(
    cohort: &Cohort,
    derived: &DerivedTable,
    spec: &TargetSpec,
    ensembled: &EnsembleTable,
    baseline: &BaselineModel,
    windows: &[i64],
    config: &EvalConfig,
) -> Result<Vec<SensitivityRow>> {
    if windows.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("sensitivity windows must be strictly descending"));
    }
    windows
        .iter()
        .map(|&w| {
            let cfg = EvalConfig { max_gap_days: Some(w), ..config.clone() };
            Ok(SensitivityRow {
                window_days: w,
                label: format!("Time delta < {w}"),
                result: evaluate_target(cohort, derived, spec, ensembled, baseline, &cfg)?,
            })
        })
        .collect()
}

/// PPV among the top fraction of patients, DLS against baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpvRow {
    pub target: String,
    pub n: usize,
    pub n_pos: usize,
    pub k: usize,
    pub baseline: Interval,
    pub dls: Interval,
    pub improvement: Interval,
    pub p: f64,
    pub redraws: usize,
}

pub fn ppv_analysis(
    set: &EvalSet,
    fraction: f64,
    bootstrap: &BootstrapConfig,
) -> Result<PpvRow> {
    let dls = set.dls_samples();
    let base = set.baseline_samples()?;
    let k = ppv_at_top_fraction(&dls, fraction)?.k;
    let metric = |s: &[ScoredSample]| ppv_at_top_fraction(s, fraction).map(|r| r.ppv);
    let cfg = BootstrapConfig { seed: derive_seed(bootstrap.seed, &set.target), ..*bootstrap };
    let b = bootstrap_interval(metric, &dls, Some(&base), &cfg)?;
    Ok(PpvRow {
        target: set.target.clone(),
        n: set.units.len(),
        n_pos: set.n_pos(),
        k,
        baseline: b.baseline.expect("paired run"),
        dls: b.metric,
        improvement: b.improvement.expect("paired run"),
        p: b.p_superiority.expect("paired run"),
        redraws: b.redraws,
    })
}

/// Adjusted odds ratios on the complete-case part of an evaluation set.
pub fn adjusted_for_set(cohort: &Cohort, set: &EvalSet, opts: &AdjustedOptions) -> Result<(usize, Vec<AdjustedRow>)> {
    let mut y = Vec::new();
    let mut cov = Vec::new();
    let mut dls = Vec::new();
    for u in &set.units {
        let visit = cohort.visit(&u.visit_id).expect("sampled visit exists");
        let Some(p) = cohort.patient(&u.patient_id) else { continue };
        let (Some(age), Some(yrs)) = (cohort.age_at_visit(visit), p.years_with_diabetes) else {
            continue;
        };
        if p.sex == Sex::Unknown {
            continue;
        }
        y.push(u.label);
        cov.push(AdjustedCovariates { age, sex: p.sex, race: p.race_ethnicity, years_with_diabetes: yrs });
        dls.push(u.dls);
    }
    let dropped = set.units.len() - y.len();
    if dropped > 0 {
        warn!("{}: {dropped} sampled visits lack covariates and were left out", set.target);
    }
    Ok((y.len(), adjusted_analysis(&y, &cov, &dls, opts)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Eye;

    fn rec(visit: &str, image: &str, member: &str, score: f64) -> ScoreRecord {
        ScoreRecord {
            image_id: image.into(),
            visit_id: visit.into(),
            patient_id: "p".into(),
            eye: Eye::Left,
            model_member: member.into(),
            target_name: "Hgb<11.0".into(),
            score,
        }
    }

    #[test]
    fn ensemble_means() {
        let t = ensemble_scores(&[rec("v", "i", "m0", 0.2), rec("v", "i", "m1", 0.4)]).unwrap();
        assert!((t.get("v", "Hgb<11.0").unwrap().score - 0.3).abs() < 1e-15);
        let mut all = Vec::new();
        for m in 0..5 {
            for e in ["l", "r"] {
                all.push(rec("v", e, &format!("m{m}"), 0.7));
            }
        }
        let t = ensemble_scores(&all).unwrap();
        let e = t.get("v", "Hgb<11.0").unwrap();
        assert!((e.score - 0.7).abs() < 1e-15);
        assert_eq!((e.n_models, e.n_eyes), (5, 2));
    }

    #[test]
    fn ensemble_is_flat_mean() {
        let raw: Vec<ScoreRecord> = [("l", "a", 0.1), ("l", "b", 0.5), ("r", "a", 0.9)]
            .iter()
            .map(|(e, m, s)| rec("v", e, m, *s))
            .collect();
        let t = ensemble_scores(&raw).unwrap();
        let flat = raw.iter().map(|r| r.score).sum::<f64>() / raw.len() as f64;
        assert_eq!(t.get("v", "Hgb<11.0").unwrap().score, flat);
        assert!(ensemble_scores(&[rec("v", "i", "m", 1.5)]).is_err());
    }
}
