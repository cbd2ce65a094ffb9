use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::clinical::{compute_bmi, compute_egfr_2021, mean_arterial_pressure, pulse_pressure};
use super::matching::{match_measurement, window_average};
use super::{Analyte, Cohort, MatchMethod, MatchedValue, Sex, Visit};

/// Matched and derived values for one visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedVisit {
    pub visit_id: String,
    pub patient_id: String,
    pub values: BTreeMap<Analyte, MatchedValue>,
}

impl DerivedVisit {
    pub fn get(&self, analyte: Analyte) -> Option<&MatchedValue> {
        self.values.get(&analyte)
    }
}

/// Counts of records dropped from derived quantities.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    /// Visits with a matched creatinine but no usable sex or age.
    pub egfr_missing_sex_or_age: usize,
    /// Visits with weight and height but a non-positive value among them.
    pub bmi_invalid_inputs: usize,
}

#[derive(Debug, Clone, Default)]
pub struct DerivedTable {
    pub visits: BTreeMap<String, DerivedVisit>,
    pub exclusions: ExclusionReport,
}

impl DerivedTable {
    pub fn get(&self, visit_id: &str) -> Option<&DerivedVisit> {
        self.visits.get(visit_id)
    }
}

/// Matches every analyte to every visit and computes eGFR, BMI, mean
/// arterial pressure, pulse pressure and non-HDL where they can be derived.
///
/// eGFR is always recomputed from creatinine; a directly reported eGFR is
/// used only when no creatinine matches. BMI, MAP, pulse pressure and non-HDL
/// prefer the derived value and fall back to a direct measurement.
pub fn derive_cohort(cohort: &Cohort) -> DerivedTable {
    let mut table = DerivedTable::default();
    for visit in cohort.visits() {
        let dv = derive_visit(cohort, visit, &mut table.exclusions);
        table.visits.insert(visit.visit_id.clone(), dv);
    }
    table
}

fn closest(cohort: &Cohort, visit: &Visit, analyte: Analyte) -> Option<MatchedValue> {
    match_measurement(visit.visit_date, cohort.series(&visit.patient_id, analyte), analyte)
        .expect("cohort series are single-analyte")
}

fn averaged(cohort: &Cohort, visit: &Visit, analyte: Analyte) -> Option<MatchedValue> {
    window_average(visit.visit_date, cohort.series(&visit.patient_id, analyte), analyte)
        .expect("averaged analytes are known")
}

fn derive_visit(cohort: &Cohort, visit: &Visit, excl: &mut ExclusionReport) -> DerivedVisit {
    let mut values = BTreeMap::new();
    for analyte in Analyte::ALL {
        let direct = match analyte {
            Analyte::SystolicBp | Analyte::DiastolicBp | Analyte::Weight | Analyte::Height => {
                averaged(cohort, visit, analyte)
            }
            Analyte::Egfr
            | Analyte::Bmi
            | Analyte::MeanArterialPressure
            | Analyte::PulsePressure
            | Analyte::NonHdl => None,
            _ => closest(cohort, visit, analyte),
        };
        if let Some(m) = direct {
            values.insert(analyte, m);
        }
    }

    // eGFR from creatinine.
    let patient = cohort.patient(&visit.patient_id);
    let egfr = match values.get(&Analyte::Creatinine) {
        Some(cr) => {
            let sex = patient.map(|p| p.sex).unwrap_or(Sex::Unknown);
            match cohort.age_at_visit(visit) {
                Some(age) if sex != Sex::Unknown => compute_egfr_2021(cr.value, age, sex)
                    .ok()
                    .map(|v| MatchedValue {
                        analyte: Analyte::Egfr,
                        value: v,
                        day_gap: cr.day_gap,
                        method: MatchMethod::Closest,
                    }),
                _ => {
                    excl.egfr_missing_sex_or_age += 1;
                    None
                }
            }
        }
        None => closest(cohort, visit, Analyte::Egfr),
    };
    if let Some(v) = egfr {
        values.insert(Analyte::Egfr, v);
    }

    let bmi = match (values.get(&Analyte::Weight), values.get(&Analyte::Height)) {
        (Some(w), Some(h)) => match compute_bmi(w.value, h.value) {
            Ok(b) => Some(MatchedValue {
                analyte: Analyte::Bmi,
                value: b,
                day_gap: w.day_gap.max(h.day_gap),
                method: MatchMethod::WindowAverage,
            }),
            Err(_) => {
                excl.bmi_invalid_inputs += 1;
                None
            }
        },
        _ => None,
    }
    .or_else(|| closest(cohort, visit, Analyte::Bmi));
    if let Some(v) = bmi {
        values.insert(Analyte::Bmi, v);
    }

    let bp = match (values.get(&Analyte::SystolicBp), values.get(&Analyte::DiastolicBp)) {
        (Some(s), Some(d)) => Some((s.value, d.value, s.day_gap.max(d.day_gap))),
        _ => None,
    };
    for (analyte, f) in [
        (Analyte::MeanArterialPressure, mean_arterial_pressure as fn(f64, f64) -> f64),
        (Analyte::PulsePressure, pulse_pressure),
    ] {
        let v = bp
            .map(|(s, d, g)| MatchedValue {
                analyte,
                value: f(s, d),
                day_gap: g,
                method: MatchMethod::WindowAverage,
            })
            .or_else(|| closest(cohort, visit, analyte));
        if let Some(v) = v {
            values.insert(analyte, v);
        }
    }

    let non_hdl = match (values.get(&Analyte::TotalCholesterol), values.get(&Analyte::Hdl)) {
        (Some(tc), Some(hdl)) => Some(MatchedValue {
            analyte: Analyte::NonHdl,
            value: tc.value - hdl.value,
            day_gap: tc.day_gap.max(hdl.day_gap),
            method: MatchMethod::Closest,
        }),
        _ => None,
    }
    .or_else(|| closest(cohort, visit, Analyte::NonHdl));
    if let Some(v) = non_hdl {
        values.insert(Analyte::NonHdl, v);
    }

    DerivedVisit {
        visit_id: visit.visit_id.clone(),
        patient_id: visit.patient_id.clone(),
        values,
    }
}
