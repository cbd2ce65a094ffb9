//! Patients, visits, timestamped measurements and the derived per-visit values.

mod clinical;
mod derive;
mod export;
mod ingest;
mod matching;
mod sampling;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ablation::EllipseAnnotation;
use crate::error::{Error, Result};

pub use clinical::{
    compute_bmi, compute_egfr_2021, invert_egfr_2021, mean_arterial_pressure, pulse_pressure,
};
pub use export::write_cohort;
pub use derive::{derive_cohort, DerivedTable, DerivedVisit, ExclusionReport};
pub use ingest::{
    ingest_cohort, read_annotations, CohortFiles, ANNOTATIONS_FILE, MEASUREMENTS_FILE, PATIENTS_FILE, SCORES_FILE, VISITS_FILE,
};
pub use matching::{
    averaging_window_days, match_measurement, matching_window_days, window_average,
};
pub use sampling::{sample_one_per_patient, sample_one_visit_per_patient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RaceEthnicity {
    Hispanic,
    White,
    Black,
    AsianPacificIslander,
    NativeAmerican,
    Other,
    Unknown,
}

impl RaceEthnicity {
    pub const ALL: [RaceEthnicity; 7] = [
        RaceEthnicity::Hispanic,
        RaceEthnicity::White,
        RaceEthnicity::Black,
        RaceEthnicity::AsianPacificIslander,
        RaceEthnicity::NativeAmerican,
        RaceEthnicity::Other,
        RaceEthnicity::Unknown,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    DevTrain,
    DevTune,
    ValA,
    ValB,
    ValC,
    Custom(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Eye {
    Left,
    Right,
    Unknown,
}

macro_rules! simple_enum_text {
    ($ty:ty, $what:literal, { $($variant:path => $name:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $($variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                let lower = s.trim().to_ascii_lowercase();
                $(
                    if lower == $name.to_ascii_lowercase() $(|| lower == $alias)* {
                        return Ok($variant);
                    }
                )+
                Err(Error::invalid(format!(concat!("unknown ", $what, " `{}`"), s)))
            }
        }
    };
}

simple_enum_text!(Sex, "sex", {
    Sex::Female => "Female" | "f",
    Sex::Male => "Male" | "m",
    Sex::Unknown => "Unknown" | "",
});

simple_enum_text!(RaceEthnicity, "race/ethnicity", {
    RaceEthnicity::Hispanic => "Hispanic",
    RaceEthnicity::White => "White",
    RaceEthnicity::Black => "Black",
    RaceEthnicity::AsianPacificIslander => "AsianPacificIslander",
    RaceEthnicity::NativeAmerican => "NativeAmerican",
    RaceEthnicity::Other => "Other",
    RaceEthnicity::Unknown => "Unknown" | "",
});

simple_enum_text!(Eye, "eye", {
    Eye::Left => "Left" | "l" | "os",
    Eye::Right => "Right" | "r" | "od",
    Eye::Unknown => "Unknown" | "",
});

impl DatasetId {
    pub fn as_str(&self) -> &str {
        match self {
            DatasetId::DevTrain => "DevTrain",
            DatasetId::DevTune => "DevTune",
            DatasetId::ValA => "ValA",
            DatasetId::ValB => "ValB",
            DatasetId::ValC => "ValC",
            DatasetId::Custom(s) => s,
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::invalid("empty dataset id"));
        }
        Ok(match s {
            "DevTrain" => DatasetId::DevTrain,
            "DevTune" => DatasetId::DevTune,
            "ValA" => DatasetId::ValA,
            "ValB" => DatasetId::ValB,
            "ValC" => DatasetId::ValC,
            other => DatasetId::Custom(other.to_string()),
        })
    }
}

/// Labs and vitals, each with exactly one accepted unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Analyte {
    Acr,
    Albumin,
    Alt,
    Ast,
    Bmi,
    Bun,
    Calcium,
    Creatinine,
    DiastolicBp,
    Egfr,
    Hba1c,
    Hct,
    Hdl,
    Hgb,
    Inr,
    Ldl,
    MeanArterialPressure,
    NonHdl,
    Platelet,
    Potassium,
    PulsePressure,
    Rdw,
    Sodium,
    SystolicBp,
    TotalBilirubin,
    TotalCholesterol,
    Triglycerides,
    Tsh,
    Wbc,
    Weight,
    Height,
}

impl Analyte {
    pub const ALL: [Analyte; 31] = [
        Analyte::Acr,
        Analyte::Albumin,
        Analyte::Alt,
        Analyte::Ast,
        Analyte::Bmi,
        Analyte::Bun,
        Analyte::Calcium,
        Analyte::Creatinine,
        Analyte::DiastolicBp,
        Analyte::Egfr,
        Analyte::Hba1c,
        Analyte::Hct,
        Analyte::Hdl,
        Analyte::Hgb,
        Analyte::Inr,
        Analyte::Ldl,
        Analyte::MeanArterialPressure,
        Analyte::NonHdl,
        Analyte::Platelet,
        Analyte::Potassium,
        Analyte::PulsePressure,
        Analyte::Rdw,
        Analyte::Sodium,
        Analyte::SystolicBp,
        Analyte::TotalBilirubin,
        Analyte::TotalCholesterol,
        Analyte::Triglycerides,
        Analyte::Tsh,
        Analyte::Wbc,
        Analyte::Weight,
        Analyte::Height,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analyte::Acr => "ACR",
            Analyte::Albumin => "Albumin",
            Analyte::Alt => "ALT",
            Analyte::Ast => "AST",
            Analyte::Bmi => "BMI",
            Analyte::Bun => "BUN",
            Analyte::Calcium => "Calcium",
            Analyte::Creatinine => "Creatinine",
            Analyte::DiastolicBp => "DiastolicBP",
            Analyte::Egfr => "eGFR",
            Analyte::Hba1c => "HbA1c",
            Analyte::Hct => "HCT",
            Analyte::Hdl => "HDL",
            Analyte::Hgb => "Hgb",
            Analyte::Inr => "INR",
            Analyte::Ldl => "LDL",
            Analyte::MeanArterialPressure => "MeanArterialPressure",
            Analyte::NonHdl => "NonHDL",
            Analyte::Platelet => "Platelet",
            Analyte::Potassium => "Potassium",
            Analyte::PulsePressure => "PulsePressure",
            Analyte::Rdw => "RDW",
            Analyte::Sodium => "Sodium",
            Analyte::SystolicBp => "SystolicBP",
            Analyte::TotalBilirubin => "TotalBilirubin",
            Analyte::TotalCholesterol => "TotalCholesterol",
            Analyte::Triglycerides => "Triglycerides",
            Analyte::Tsh => "TSH",
            Analyte::Wbc => "WBC",
            Analyte::Weight => "Weight",
            Analyte::Height => "Height",
        }
    }

    /// The single accepted unit.
    pub fn unit(self) -> &'static str {
        match self {
            Analyte::Acr => "mg/g",
            Analyte::Albumin | Analyte::Hgb => "g/dL",
            Analyte::Alt | Analyte::Ast => "U/L",
            Analyte::Bmi => "kg/m²",
            Analyte::Bun
            | Analyte::Calcium
            | Analyte::Creatinine
            | Analyte::Hdl
            | Analyte::Ldl
            | Analyte::NonHdl
            | Analyte::TotalBilirubin
            | Analyte::TotalCholesterol
            | Analyte::Triglycerides => "mg/dL",
            Analyte::DiastolicBp
            | Analyte::SystolicBp
            | Analyte::MeanArterialPressure
            | Analyte::PulsePressure => "mmHg",
            Analyte::Egfr => "mL/min/1.73 m²",
            Analyte::Hba1c | Analyte::Hct | Analyte::Rdw => "%",
            Analyte::Inr => "ratio",
            Analyte::Platelet | Analyte::Wbc => "10³/μL",
            Analyte::Potassium | Analyte::Sodium => "mEq/L",
            Analyte::Tsh => "mU/L",
            Analyte::Weight => "kg",
            Analyte::Height => "m",
        }
    }

    /// ASCII spellings accepted for the canonical unit; these are spellings, not conversions.
    fn unit_matches(self, text: &str) -> bool {
        let t = text.trim();
        if t == self.unit() {
            return true;
        }
        let ascii = match self {
            Analyte::Bmi => "kg/m2",
            Analyte::Egfr => "mL/min/1.73 m2",
            Analyte::Platelet | Analyte::Wbc => "10^3/uL",
            _ => return false,
        };
        t.eq_ignore_ascii_case(ascii)
    }

    pub fn valid_names() -> String {
        Analyte::ALL.iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Analyte {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Analyte {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Analyte::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::invalid(format!("unknown analyte `{s}` (valid: {})", Analyte::valid_names())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: String,
    pub sex: Sex,
    pub race_ethnicity: RaceEthnicity,
    /// Age in fractional years at the patient's earliest visit.
    pub age: Option<f64>,
    pub years_with_diabetes: Option<f64>,
    pub diabetic: Option<bool>,
    pub dataset_id: DatasetId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub eye: Eye,
    /// Not part of the tabular inputs; filled when pixel data is loaded.
    pub dims: Option<ImageDims>,
    pub annotation: Option<EllipseAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub visit_id: String,
    pub patient_id: String,
    pub visit_date: NaiveDate,
    pub images: Vec<ImageRecord>,
    pub cataract_present: Option<bool>,
    pub intraocular_lens: Option<bool>,
}

impl Visit {
    /// Mean normalized pupil size over the visit's annotated images.
    pub fn pupil_size(&self) -> Option<f64> {
        let sizes: Vec<f64> = self
            .images
            .iter()
            .filter_map(|im| im.annotation.as_ref())
            .filter_map(|a| a.normalized_pupil_size().ok())
            .collect();
        if sizes.is_empty() {
            None
        } else {
            Some(sizes.iter().sum::<f64>() / sizes.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub patient_id: String,
    pub analyte: Analyte,
    pub value: f64,
    pub measured_date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMethod {
    Closest,
    WindowAverage,
}

impl MatchMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMethod::Closest => "Closest",
            MatchMethod::WindowAverage => "WindowAverage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedValue {
    pub analyte: Analyte,
    pub value: f64,
    pub day_gap: i64,
    pub method: MatchMethod,
}

/// One per-image model score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_id: String,
    pub visit_id: String,
    pub patient_id: String,
    pub eye: Eye,
    pub model_member: String,
    pub target_name: String,
    pub score: f64,
}

/// An ingested, cross-linked cohort. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Cohort {
    patients: BTreeMap<String, Patient>,
    visits: BTreeMap<String, Visit>,
    measurements: BTreeMap<String, BTreeMap<Analyte, Vec<Measurement>>>,
    scores: Vec<ScoreRecord>,
    first_visit: BTreeMap<String, NaiveDate>,
}

impl Cohort {
    /// Builds a cohort from already-parsed records, enforcing the same
    /// referential rules as file ingestion.
    pub fn from_parts(
        patients: Vec<Patient>,
        visits: Vec<Visit>,
        measurements: Vec<Measurement>,
        scores: Vec<ScoreRecord>,
    ) -> Result<Self> {
        let mut cohort = Cohort::default();
        for p in patients {
            validate_patient(&p)?;
            if cohort.patients.contains_key(&p.patient_id) {
                return Err(Error::invalid(format!("duplicate patient `{}`", p.patient_id)));
            }
            cohort.patients.insert(p.patient_id.clone(), p);
        }
        for v in visits {
            if !cohort.patients.contains_key(&v.patient_id) {
                return Err(Error::invalid(format!(
                    "visit `{}` references unknown patient `{}`",
                    v.visit_id, v.patient_id
                )));
            }
            if cohort.visits.contains_key(&v.visit_id) {
                return Err(Error::invalid(format!("duplicate visit `{}`", v.visit_id)));
            }
            cohort.visits.insert(v.visit_id.clone(), v);
        }
        for m in measurements {
            cohort.push_measurement(m)?;
        }
        for s in &scores {
            cohort.check_score(s)?;
        }
        cohort.scores = scores;
        cohort.finish();
        Ok(cohort)
    }

    pub(crate) fn push_measurement(&mut self, m: Measurement) -> Result<()> {
        if !self.patients.contains_key(&m.patient_id) {
            return Err(Error::invalid(format!(
                "measurement references unknown patient `{}`",
                m.patient_id
            )));
        }
        if !m.value.is_finite() {
            return Err(Error::invalid(format!("non-finite {} value", m.analyte)));
        }
        self.measurements
            .entry(m.patient_id.clone())
            .or_default()
            .entry(m.analyte)
            .or_default()
            .push(m);
        Ok(())
    }

    fn check_score(&self, s: &ScoreRecord) -> Result<()> {
        let visit = self.visits.get(&s.visit_id).ok_or_else(|| {
            Error::invalid(format!("score references unknown visit `{}`", s.visit_id))
        })?;
        if visit.patient_id != s.patient_id {
            return Err(Error::invalid(format!(
                "score for image `{}` names patient `{}` but visit `{}` belongs to `{}`",
                s.image_id, s.patient_id, s.visit_id, visit.patient_id
            )));
        }
        if !(0.0..=1.0).contains(&s.score) {
            return Err(Error::invalid(format!("score {} outside [0, 1]", s.score)));
        }
        Ok(())
    }

    /// Sorts measurement series, attaches image records implied by scores,
    /// and records each patient's reference (earliest) visit date.
    pub(crate) fn finish(&mut self) {
        for by_analyte in self.measurements.values_mut() {
            for series in by_analyte.values_mut() {
                series.sort_by(|a, b| {
                    a.measured_date
                        .cmp(&b.measured_date)
                        .then(a.value.total_cmp(&b.value))
                });
            }
        }
        for s in &self.scores {
            if let Some(v) = self.visits.get_mut(&s.visit_id) {
                if !v.images.iter().any(|im| im.image_id == s.image_id) {
                    v.images.push(ImageRecord {
                        image_id: s.image_id.clone(),
                        eye: s.eye,
                        dims: None,
                        annotation: None,
                    });
                }
            }
        }
        for v in self.visits.values_mut() {
            v.images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        }
        self.first_visit.clear();
        for v in self.visits.values() {
            self.first_visit
                .entry(v.patient_id.clone())
                .and_modify(|d| *d = (*d).min(v.visit_date))
                .or_insert(v.visit_date);
        }
    }

    pub(crate) fn attach_annotation(&mut self, image_id: &str, ann: EllipseAnnotation) -> bool {
        for v in self.visits.values_mut() {
            if let Some(im) = v.images.iter_mut().find(|im| im.image_id == image_id) {
                im.annotation = Some(ann);
                return true;
            }
        }
        false
    }

    pub fn patients(&self) -> impl Iterator<Item = &Patient> {
        self.patients.values()
    }

    pub fn patient(&self, id: &str) -> Option<&Patient> {
        self.patients.get(id)
    }

    pub fn visits(&self) -> impl Iterator<Item = &Visit> {
        self.visits.values()
    }

    pub fn visit(&self, id: &str) -> Option<&Visit> {
        self.visits.get(id)
    }

    pub fn scores(&self) -> &[ScoreRecord] {
        &self.scores
    }

    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn n_visits(&self) -> usize {
        self.visits.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.measurements
            .values()
            .flat_map(|m| m.values())
            .map(Vec::len)
            .sum()
    }

    pub fn measurements(&self) -> impl Iterator<Item = &Measurement> {
        self.measurements.values().flat_map(|m| m.values()).flatten()
    }

    /// Date-sorted series for one patient and analyte (empty when absent).
    pub fn series(&self, patient_id: &str, analyte: Analyte) -> &[Measurement] {
        self.measurements
            .get(patient_id)
            .and_then(|m| m.get(&analyte))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Age at a given visit: the recorded reference age plus elapsed time
    /// since the patient's earliest visit.
    pub fn age_at_visit(&self, visit: &Visit) -> Option<f64> {
        let p = self.patients.get(&visit.patient_id)?;
        let base = p.age?;
        let first = self.first_visit.get(&visit.patient_id)?;
        let days = (visit.visit_date - *first).num_days() as f64;
        Some(base + days / 365.25)
    }
}

fn validate_patient(p: &Patient) -> Result<()> {
    if p.patient_id.trim().is_empty() {
        return Err(Error::invalid("empty patient_id"));
    }
    if let Some(age) = p.age {
        if !(age.is_finite() && age >= 0.0) {
            return Err(Error::invalid(format!("patient `{}`: invalid age {age}", p.patient_id)));
        }
    }
    if let Some(y) = p.years_with_diabetes {
        if !(y.is_finite() && y >= 0.0) {
            return Err(Error::invalid(format!(
                "patient `{}`: invalid years_with_diabetes {y}",
                p.patient_id
            )));
        }
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analyte_names_round_trip() {
        for a in Analyte::ALL {
            assert_eq!(a.name().parse::<Analyte>().unwrap(), a);
        }
        assert!("XYZ".parse::<Analyte>().is_err());
    }

    #[test]
    fn unit_spellings() {
        assert!(Analyte::Platelet.unit_matches("10³/μL"));
        assert!(Analyte::Platelet.unit_matches("10^3/uL"));
        assert!(!Analyte::Acr.unit_matches("mg/mmol"));
        assert!(Analyte::Acr.unit_matches("mg/g"));
    }

    #[test]
    fn enum_text_parsing() {
        assert_eq!("male".parse::<Sex>().unwrap(), Sex::Male);
        assert_eq!("".parse::<Sex>().unwrap(), Sex::Unknown);
        assert_eq!("ValC".parse::<DatasetId>().unwrap(), DatasetId::ValC);
        assert_eq!(
            "site9".parse::<DatasetId>().unwrap(),
            DatasetId::Custom("site9".into())
        );
        assert!("purple".parse::<RaceEthnicity>().is_err());
    }
}
