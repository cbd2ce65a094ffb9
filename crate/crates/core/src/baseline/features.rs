use std::collections::BTreeSet;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cohort::{Analyte, Cohort, DerivedVisit, Visit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Scalar(f64),
    Level(String),
    Missing,
}

impl FeatureValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    Scalar,
    Categorical { reference: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureDef {
    pub fn scalar(name: &str) -> Self {
        FeatureDef { name: name.to_string(), kind: FeatureKind::Scalar }
    }

    pub fn categorical(name: &str, reference: Option<&str>) -> Self {
        FeatureDef {
            name: name.to_string(),
            kind: FeatureKind::Categorical { reference: reference.map(str::to_string) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedKind {
    Scalar { mean: f64, std: f64 },
    /// `levels` are the one-hot columns; the reference level has none.
    Categorical { reference: String, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFeature {
    pub name: String,
    pub kind: FittedKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FittedFeature>,
}

fn check_row(row: &[FeatureValue], n: usize) -> Result<()> {
    if row.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: row.len() });
    }
    Ok(())
}

impl FeatureSchema {
    /// Learns scalar means/stds (population) and categorical levels from
    /// training rows aligned with `defs`.
    pub fn fit(defs: &[FeatureDef], rows: &[Vec<FeatureValue>]) -> Result<Self> {
        for row in rows {
            check_row(row, defs.len())?;
        }
        let mut features = Vec::with_capacity(defs.len());
        for (j, def) in defs.iter().enumerate() {
            let kind = match &def.kind {
                FeatureKind::Scalar => {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter_map(|r| match &r[j] {
                            FeatureValue::Scalar(v) => Some(*v),
                            FeatureValue::Missing => None,
                            FeatureValue::Level(_) => None,
                        })
                        .collect();
                    if rows.iter().any(|r| matches!(r[j], FeatureValue::Level(_))) {
                        return Err(Error::invalid(format!("feature `{}` is scalar but got a level", def.name)));
                    }
                    if vals.is_empty() {
                        return Err(Error::invalid(format!("feature `{}` has no training values", def.name)));
                    }
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                    if !(std > 0.0) {
                        return Err(Error::invalid(format!("feature `{}` is constant on the training set", def.name)));
                    }
                    FittedKind::Scalar { mean, std }
                }
                FeatureKind::Categorical { reference } => {
                    let mut seen = BTreeSet::new();
                    for r in rows {
                        match &r[j] {
                            FeatureValue::Level(l) => {
                                seen.insert(l.clone());
                            }
                            FeatureValue::Missing => {}
                            FeatureValue::Scalar(_) => {
                                return Err(Error::invalid(format!(
                                    "feature `{}` is categorical but got a number",
                                    def.name
                                )))
                            }
                        }
                    }
                    let reference = match reference {
                        Some(r) => r.clone(),
                        None => seen
                            .iter()
                            .next()
                            .cloned()
                            .ok_or_else(|| Error::invalid(format!("feature `{}` has no training levels", def.name)))?,
                    };
                    let levels: Vec<String> = seen.into_iter().filter(|l| *l != reference).collect();
                    if levels.is_empty() {
                        return Err(Error::invalid(format!("feature `{}` is constant on the training set", def.name)));
                    }
                    FittedKind::Categorical { reference, levels }
                }
            };
            features.push(FittedFeature { name: def.name.clone(), kind });
        }
        Ok(FeatureSchema { features })
    }

    pub fn n_columns(&self) -> usize {
        self.features
            .iter()
            .map(|f| match &f.kind {
                FittedKind::Scalar { .. } => 1,
                FittedKind::Categorical { levels, .. } => levels.len(),
            })
            .sum()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for f in &self.features {
            match &f.kind {
                FittedKind::Scalar { .. } => out.push(f.name.clone()),
                FittedKind::Categorical { levels, .. } => {
                    out.extend(levels.iter().map(|l| format!("{}={l}", f.name)))
                }
            }
        }
        out
    }

    /// Design matrix with one row per input row. Missing scalars encode as 0
    /// (the training mean); missing or unseen levels as an all-zero block.
    pub fn encode(&self, rows: &[Vec<FeatureValue>]) -> Result<DMatrix<f64>> {
        let p = self.n_columns();
        let mut x = DMatrix::zeros(rows.len(), p);
        let mut unseen = BTreeSet::new();
        for (i, row) in rows.iter().enumerate() {
            check_row(row, self.features.len())?;
            let mut col = 0;
            for (f, v) in self.features.iter().zip(row) {
                match (&f.kind, v) {
                    (FittedKind::Scalar { mean, std }, FeatureValue::Scalar(val)) => {
                        if !val.is_finite() {
                            return Err(Error::invalid(format!("non-finite value for `{}`", f.name)));
                        }
                        x[(i, col)] = (val - mean) / std;
                        col += 1;
                    }
                    (FittedKind::Scalar { .. }, FeatureValue::Missing) => col += 1,
                    (FittedKind::Categorical { reference, levels }, v) => {
                        if let FeatureValue::Level(l) = v {
                            match levels.iter().position(|x| x == l) {
                                Some(k) => x[(i, col + k)] = 1.0,
                                None if l == reference => {}
                                None => {
                                    unseen.insert(format!("{}={l}", f.name));
                                }
                            }
                        } else if let FeatureValue::Scalar(_) = v {
                            return Err(Error::invalid(format!("feature `{}` expects a level", f.name)));
                        }
                        col += levels.len();
                    }
                    (FittedKind::Scalar { .. }, FeatureValue::Level(_)) => {
                        return Err(Error::invalid(format!("feature `{}` expects a number", f.name)))
                    }
                }
            }
        }
        if !unseen.is_empty() {
            warn!("levels unseen in training encoded as reference: {:?}", unseen);
        }
        Ok(x)
    }
}

/// Keeps candidates whose non-missing fraction over `rows` is at least
/// `threshold`, in candidate order.
pub fn select_baseline_features(
    rows: &[Vec<FeatureValue>],
    candidates: &[FeatureDef],
    threshold: f64,
) -> Result<Vec<FeatureDef>> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate features"));
    }
    for row in rows {
        check_row(row, candidates.len())?;
    }
    let n = rows.len() as f64;
    let kept: Vec<FeatureDef> = candidates
        .iter()
        .enumerate()
        .filter(|(j, _)| {
            let avail = if rows.is_empty() {
                0.0
            } else {
                rows.iter().filter(|r| !r[*j].is_missing()).count() as f64 / n
            };
            avail >= threshold
        })
        .map(|(_, d)| d.clone())
        .collect();
    if kept.is_empty() {
        return Err(Error::NoUsableFeatures);
    }
    Ok(kept)
}

/// Clinicodemographic inputs available to the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineFeature {
    Age,
    Sex,
    Race,
    YearsWithDiabetes,
    SystolicBp,
    DiastolicBp,
    Bmi,
    PupilSize,
}

impl BaselineFeature {
    pub const STANDARD: [BaselineFeature; 4] = [
        BaselineFeature::Age,
        BaselineFeature::Sex,
        BaselineFeature::Race,
        BaselineFeature::YearsWithDiabetes,
    ];

    pub const AUGMENTED: [BaselineFeature; 8] = [
        BaselineFeature::Age,
        BaselineFeature::Sex,
        BaselineFeature::Race,
        BaselineFeature::YearsWithDiabetes,
        BaselineFeature::SystolicBp,
        BaselineFeature::DiastolicBp,
        BaselineFeature::Bmi,
        BaselineFeature::PupilSize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineFeature::Age => "age",
            BaselineFeature::Sex => "sex",
            BaselineFeature::Race => "race",
            BaselineFeature::YearsWithDiabetes => "years_with_diabetes",
            BaselineFeature::SystolicBp => "systolic_bp",
            BaselineFeature::DiastolicBp => "diastolic_bp",
            BaselineFeature::Bmi => "bmi",
            BaselineFeature::PupilSize => "pupil_size",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::AUGMENTED.into_iter().find(|f| f.name() == name)
    }

    pub fn def(self) -> FeatureDef {
        match self {
            BaselineFeature::Sex => FeatureDef::categorical("sex", Some("Female")),
            BaselineFeature::Race => FeatureDef::categorical("race", Some("White")),
            other => FeatureDef::scalar(other.name()),
        }
    }

    pub fn value(self, cohort: &Cohort, visit: &Visit, derived: Option<&DerivedVisit>) -> FeatureValue {
        let patient = cohort.patient(&visit.patient_id);
        let scalar = |v: Option<f64>| v.map_or(FeatureValue::Missing, FeatureValue::Scalar);
        let lab = |a: Analyte| scalar(derived.and_then(|d| d.get(a)).map(|m| m.value));
        match self {
            BaselineFeature::Age => scalar(cohort.age_at_visit(visit)),
            BaselineFeature::Sex => match patient.map(|p| p.sex) {
                Some(s) if s != crate::cohort::Sex::Unknown => FeatureValue::Level(s.as_str().to_string()),
                _ => FeatureValue::Missing,
            },
            BaselineFeature::Race => match patient.map(|p| p.race_ethnicity) {
                Some(r) if r != crate::cohort::RaceEthnicity::Unknown => {
                    FeatureValue::Level(r.as_str().to_string())
                }
                _ => FeatureValue::Missing,
            },
            BaselineFeature::YearsWithDiabetes => scalar(patient.and_then(|p| p.years_with_diabetes)),
            BaselineFeature::SystolicBp => lab(Analyte::SystolicBp),
            BaselineFeature::DiastolicBp => lab(Analyte::DiastolicBp),
            BaselineFeature::Bmi => lab(Analyte::Bmi),
            BaselineFeature::PupilSize => scalar(visit.pupil_size()),
        }
    }
}
