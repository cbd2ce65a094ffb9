use serde::{Deserialize, Serialize};

use super::{compare_set, EvalConfig, EvalResult, EvalSet};
use crate::baseline::race_label;
use crate::cohort::{Analyte, Cohort, DerivedTable, RaceEthnicity, Sex};
use crate::error::Result;
use crate::targets::TargetSpec;

/// Subgroups with fewer positives than this carry no statistics.
pub const MIN_SUBGROUP_POSITIVES: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubgroupVariable {
    Age,
    Bmi,
    YearsWithDiabetes,
    PupilSize,
    Sex,
    Race,
    Cataract,
    Diabetic,
    Iol,
}

impl SubgroupVariable {
    pub const ALL: [SubgroupVariable; 9] = [
        SubgroupVariable::Age,
        SubgroupVariable::Sex,
        SubgroupVariable::Race,
        SubgroupVariable::Bmi,
        SubgroupVariable::YearsWithDiabetes,
        SubgroupVariable::PupilSize,
        SubgroupVariable::Cataract,
        SubgroupVariable::Diabetic,
        SubgroupVariable::Iol,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SubgroupVariable::Age => "Age",
            SubgroupVariable::Bmi => "BMI",
            SubgroupVariable::YearsWithDiabetes => "YrsDM",
            SubgroupVariable::PupilSize => "Pupil",
            SubgroupVariable::Sex => "Sex",
            SubgroupVariable::Race => "Race",
            SubgroupVariable::Cataract => "Cataract",
            SubgroupVariable::Diabetic => "Diabetic",
            SubgroupVariable::Iol => "IOL",
        }
    }

    /// Built-in bucket edges for the interval variables.
    pub fn edges(self) -> Option<&'static [f64]> {
        match self {
            SubgroupVariable::Age => Some(&[0.0, 50.0, 60.0, 70.0, f64::INFINITY]),
            SubgroupVariable::Bmi => Some(&[0.0, 25.0, 30.0, 35.0, f64::INFINITY]),
            SubgroupVariable::YearsWithDiabetes => Some(&[0.0, 5.0, 10.0, f64::INFINITY]),
            SubgroupVariable::PupilSize => Some(&[0.0, 0.4, 0.5, 1.0]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BucketRule {
    /// Half-open `(lo, hi]`.
    Interval { lo: f64, hi: f64 },
    Level(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub variable: SubgroupVariable,
    pub label: String,
    pub rule: BucketRule,
}

fn interval_label(variable: SubgroupVariable, lo: f64, hi: f64) -> String {
    let edge = |v: f64| match variable {
        SubgroupVariable::PupilSize => format!("{v:.1}"),
        _ => format!("{v:.0}"),
    };
    if hi.is_infinite() {
        format!("{} ({}, inf)", variable.label(), edge(lo))
    } else {
        format!("{} ({}, {}]", variable.label(), edge(lo), edge(hi))
    }
}

fn level_buckets(variable: SubgroupVariable, levels: &[(&str, &str)]) -> Vec<Bucket> {
    levels
        .iter()
        .map(|(label, key)| Bucket { variable, label: label.to_string(), rule: BucketRule::Level(key.to_string()) })
        .collect()
}

impl Bucket {
    pub fn builtin(variable: SubgroupVariable) -> Vec<Bucket> {
        if let Some(edges) = variable.edges() {
            return edges
                .windows(2)
                .map(|w| Bucket {
                    variable,
                    label: interval_label(variable, w[0], w[1]),
                    rule: BucketRule::Interval { lo: w[0], hi: w[1] },
                })
                .collect();
        }
        match variable {
            SubgroupVariable::Sex => level_buckets(variable, &[("Sex=Female", "Female"), ("Sex=Male", "Male")]),
            SubgroupVariable::Race => RaceEthnicity::ALL
                .iter()
                .filter(|r| **r != RaceEthnicity::Unknown)
                .map(|r| Bucket {
                    variable,
                    label: format!("Race={}", race_label(*r)),
                    rule: BucketRule::Level(r.as_str().to_string()),
                })
                .collect(),
            SubgroupVariable::Cataract => level_buckets(variable, &[("Cataract", "yes"), ("No cataract", "no")]),
            SubgroupVariable::Diabetic => level_buckets(variable, &[("Diabetic", "yes"), ("Not diabetic", "no")]),
            SubgroupVariable::Iol => level_buckets(variable, &[("IOL", "yes"), ("No IOL", "no")]),
            _ => unreachable!("interval variables handled above"),
        }
    }

    pub fn builtin_all() -> Vec<Bucket> {
        SubgroupVariable::ALL.into_iter().flat_map(Bucket::builtin).collect()
    }

    fn contains(&self, value: &UnitValue) -> bool {
        match (&self.rule, value) {
            (BucketRule::Interval { lo, hi }, UnitValue::Num(v)) => v > lo && v <= hi,
            (BucketRule::Level(l), UnitValue::Text(t)) => l == t,
            _ => false,
        }
    }
}

enum UnitValue {
    Num(f64),
    Text(String),
    Missing,
}

fn yes_no(v: Option<bool>) -> UnitValue {
    match v {
        Some(true) => UnitValue::Text("yes".into()),
        Some(false) => UnitValue::Text("no".into()),
        None => UnitValue::Missing,
    }
}

fn unit_value(cohort: &Cohort, derived: &DerivedTable, variable: SubgroupVariable, visit_id: &str) -> UnitValue {
    let visit = cohort.visit(visit_id).expect("sampled visit exists");
    let patient = cohort.patient(&visit.patient_id);
    let num = |v: Option<f64>| v.map_or(UnitValue::Missing, UnitValue::Num);
    match variable {
        SubgroupVariable::Age => num(cohort.age_at_visit(visit)),
        SubgroupVariable::Bmi => num(derived.get(visit_id).and_then(|d| d.get(Analyte::Bmi)).map(|m| m.value)),
        SubgroupVariable::YearsWithDiabetes => num(patient.and_then(|p| p.years_with_diabetes)),
        SubgroupVariable::PupilSize => num(visit.pupil_size()),
        SubgroupVariable::Sex => match patient.map(|p| p.sex) {
            Some(s) if s != Sex::Unknown => UnitValue::Text(s.as_str().into()),
            _ => UnitValue::Missing,
        },
        SubgroupVariable::Race => match patient.map(|p| p.race_ethnicity) {
            Some(r) if r != RaceEthnicity::Unknown => UnitValue::Text(r.as_str().into()),
            _ => UnitValue::Missing,
        },
        SubgroupVariable::Cataract => yes_no(visit.cataract_present),
        SubgroupVariable::Diabetic => yes_no(patient.and_then(|p| p.diabetic)),
        SubgroupVariable::Iol => yes_no(visit.intraocular_lens),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub target: String,
    pub label: String,
    pub n: usize,
    pub n_pos: usize,
    /// `None` when omitted or when the comparison is undefined.
    pub result: Option<EvalResult>,
    pub omitted_small: bool,
    pub drop_gt_5pct: bool,
    pub p_above_0_05: bool,
    pub note: Option<String>,
}

impl SubgroupRow {
    /// Flag rules relative to the full-set improvement.
    pub fn flags(full_improvement: f64, improvement: f64, p: f64) -> (bool, bool) {
        (full_improvement - improvement > 0.05, p > 0.05)
    }
}

/// Evaluates fixed models within buckets of the already-sampled evaluation
/// set; the first row is the full set (`All`). Buckets whose variable is
/// absent for every unit are skipped.
pub fn subgroup_analysis(
    cohort: &Cohort,
    derived: &DerivedTable,
    spec: &TargetSpec,
    full: &EvalSet,
    buckets: &[Bucket],
    config: &EvalConfig,
) -> Result<Vec<SubgroupRow>> {
    let full_result = compare_set(full, spec, config)?;
    let mut rows = vec![SubgroupRow {
        target: spec.name.clone(),
        label: "All".to_string(),
        n: full.units.len(),
        n_pos: full.n_pos(),
        result: Some(full_result.clone()),
        omitted_small: false,
        drop_gt_5pct: false,
        p_above_0_05: full_result.p_one_sided > 0.05,
        note: None,
    }];
    let mut variables: Vec<SubgroupVariable> = Vec::new();
    for b in buckets {
        if !variables.contains(&b.variable) {
            variables.push(b.variable);
        }
    }
    for var in variables {
        let values: Vec<UnitValue> =
            full.units.iter().map(|u| unit_value(cohort, derived, var, &u.visit_id)).collect();
        if values.iter().all(|v| matches!(v, UnitValue::Missing)) {
            continue;
        }
        for bucket in buckets.iter().filter(|b| b.variable == var) {
            let mut sub = full.subset(|_| false);
            sub.units = full
                .units
                .iter()
                .zip(&values)
                .filter(|(_, v)| bucket.contains(v))
                .map(|(u, _)| u.clone())
                .collect();
            let n_pos = sub.n_pos();
            let mut row = SubgroupRow {
                target: spec.name.clone(),
                label: bucket.label.clone(),
                n: sub.units.len(),
                n_pos,
                result: None,
                omitted_small: n_pos < MIN_SUBGROUP_POSITIVES,
                drop_gt_5pct: false,
                p_above_0_05: false,
                note: None,
            };
            if !row.omitted_small {
                match compare_set(&sub, spec, config) {
                    Ok(r) => {
                        let (drop, p_hi) = SubgroupRow::flags(full_result.improvement, r.improvement, r.p_one_sided);
                        row.drop_gt_5pct = drop;
                        row.p_above_0_05 = p_hi;
                        row.result = Some(r);
                    }
                    Err(e) => row.note = Some(e.to_string()),
                }
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_labels() {
        let age: Vec<String> = Bucket::builtin(SubgroupVariable::Age).into_iter().map(|b| b.label).collect();
        assert_eq!(age, ["Age (0, 50]", "Age (50, 60]", "Age (60, 70]", "Age (70, inf)"]);
        let pupil: Vec<String> = Bucket::builtin(SubgroupVariable::PupilSize).into_iter().map(|b| b.label).collect();
        assert_eq!(pupil, ["Pupil (0.0, 0.4]", "Pupil (0.4, 0.5]", "Pupil (0.5, 1.0]"]);
    }

    #[test]
    fn intervals_partition_the_line() {
        for var in [SubgroupVariable::Age, SubgroupVariable::Bmi, SubgroupVariable::YearsWithDiabetes] {
            let buckets = Bucket::builtin(var);
            for i in 1..2000 {
                let v = UnitValue::Num(i as f64 * 0.05);
                assert_eq!(buckets.iter().filter(|b| b.contains(&v)).count(), 1);
            }
        }
    }

    #[test]
    fn flag_rules() {
        assert_eq!(SubgroupRow::flags(0.10, 0.04, 0.01), (true, false));
        assert_eq!(SubgroupRow::flags(0.10, 0.06, 0.2), (false, true));
        assert_eq!(SubgroupRow::flags(0.10, 0.05, 0.05), (false, false));
    }
}
