use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cohort::{Analyte, RaceEthnicity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginal {
    /// `value = mean + sd · L`
    Normal,
    /// `value = exp(mean + sd · L)`
    LogNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyteConfig {
    pub analyte: Analyte,
    pub marginal: Marginal,
    pub mean: f64,
    pub sd: f64,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    /// Correlation of the latent with the demographic index when no planted
    /// baseline AUC sets it.
    #[serde(default)]
    pub demographic_corr: f64,
    /// Share of visits with no measurement at all.
    #[serde(default = "default_missing")]
    pub missing_fraction: f64,
}

fn default_missing() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedEffect {
    pub target: String,
    /// Population AUC of the ensembled DLS score against the derived label.
    pub dls_auc: f64,
    /// Population AUC of the demographic index; sets the analyte's
    /// demographic correlation.
    #[serde(default)]
    pub baseline_auc: Option<f64>,
    /// Recenters the analyte marginal to this label prevalence.
    #[serde(default)]
    pub prevalence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Share<T> {
    pub group: T,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    /// Share of measurements placed beyond the analyte's window.
    pub beyond_window_fraction: f64,
    /// Beyond-window gaps fall in `(window, window + beyond_extra_days]`.
    pub beyond_extra_days: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_patients: usize,
    /// Weights for 1, 2, 3, ... visits.
    pub visits_per_patient: Vec<f64>,
    pub visit_spacing_days: i64,
    pub start_date: NaiveDate,
    pub enrollment_span_days: i64,
    pub age_mean: f64,
    pub age_sd: f64,
    pub female_fraction: f64,
    pub race: Vec<Share<RaceEthnicity>>,
    pub datasets: Vec<Share<String>>,
    pub diabetic_fraction: f64,
    pub years_with_diabetes_mean: f64,
    pub years_with_diabetes_available: f64,
    pub cataract_fraction: f64,
    pub iol_fraction: f64,
    /// Loading of every analyte latent on the shared severity factor.
    pub severity_corr: f64,
    pub n_members: usize,
    pub gaps: GapConfig,
    pub analytes: Vec<AnalyteConfig>,
    pub planted: Vec<PlantedEffect>,
}

fn normal(analyte: Analyte, mean: f64, sd: f64, min: f64) -> AnalyteConfig {
    AnalyteConfig {
        analyte,
        marginal: Marginal::Normal,
        mean,
        sd,
        min: Some(min),
        max: None,
        demographic_corr: 0.0,
        missing_fraction: default_missing(),
    }
}

fn lognormal(analyte: Analyte, median: f64, sd: f64) -> AnalyteConfig {
    AnalyteConfig {
        analyte,
        marginal: Marginal::LogNormal,
        mean: median.ln(),
        sd,
        min: None,
        max: None,
        demographic_corr: 0.0,
        missing_fraction: default_missing(),
    }
}

fn planted(target: &str, prevalence: f64) -> PlantedEffect {
    PlantedEffect { target: target.to_string(), dls_auc: 0.75, baseline_auc: Some(0.62), prevalence: Some(prevalence) }
}

impl Default for SynthConfig {
    fn default() -> Self {
        let share = |g: RaceEthnicity, f: f64| Share { group: g, fraction: f };
        SynthConfig {
            seed: 0,
            n_patients: 5000,
            visits_per_patient: vec![0.6, 0.25, 0.15],
            visit_spacing_days: 1000,
            start_date: NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date"),
            enrollment_span_days: 1500,
            age_mean: 57.0,
            age_sd: 11.0,
            female_fraction: 0.55,
            race: vec![
                share(RaceEthnicity::Hispanic, 0.45),
                share(RaceEthnicity::White, 0.25),
                share(RaceEthnicity::Black, 0.15),
                share(RaceEthnicity::AsianPacificIslander, 0.12),
                share(RaceEthnicity::NativeAmerican, 0.01),
                share(RaceEthnicity::Other, 0.02),
            ],
            datasets: vec![
                Share { group: "DevTrain".into(), fraction: 0.5 },
                Share { group: "ValA".into(), fraction: 0.5 },
            ],
            diabetic_fraction: 0.9,
            years_with_diabetes_mean: 9.0,
            years_with_diabetes_available: 0.9,
            cataract_fraction: 0.2,
            iol_fraction: 0.1,
            severity_corr: 0.3,
            n_members: 3,
            gaps: GapConfig { beyond_window_fraction: 0.1, beyond_extra_days: 90 },
            analytes: vec![
                lognormal(Analyte::Acr, 25.0, 1.6),
                normal(Analyte::Albumin, 4.1, 0.45, 1.0),
                lognormal(Analyte::Ast, 22.0, 0.45),
                normal(Analyte::Calcium, 9.3, 0.5, 5.0),
                normal(Analyte::Egfr, 82.0, 24.0, 5.0),
                normal(Analyte::Hgb, 13.6, 1.6, 5.0),
                normal(Analyte::Platelet, 245.0, 65.0, 10.0),
                lognormal(Analyte::Tsh, 1.8, 0.6),
                normal(Analyte::Wbc, 7.4, 2.0, 0.5),
                normal(Analyte::Hba1c, 7.8, 1.6, 4.0),
                normal(Analyte::SystolicBp, 132.0, 17.0, 70.0),
                normal(Analyte::DiastolicBp, 76.0, 11.0, 40.0),
                normal(Analyte::Bmi, 31.0, 6.5, 14.0),
                normal(Analyte::Height, 1.68, 0.1, 1.3),
            ],
            planted: vec![
                planted("Albumin<3.5", 0.10),
                planted("AST>36.0", 0.12),
                planted("Calcium<8.6", 0.09),
                planted("eGFR<60.0", 0.22),
                planted("Hgb<11.0", 0.06),
                planted("Platelet<150.0", 0.08),
                planted("TSH>4.0", 0.07),
                planted("ACR>=300.0", 0.092),
                planted("WBC<4.0", 0.05),
            ],
        }
    }
}

impl SynthConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn analyte(&self, a: Analyte) -> Option<&AnalyteConfig> {
        self.analytes.iter().find(|c| c.analyte == a)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_patients == 0 {
            return bad("n_patients must be positive".into());
        }
        if self.visits_per_patient.is_empty() || self.visits_per_patient.iter().any(|w| *w < 0.0) {
            return bad("visits_per_patient needs non-negative weights".into());
        }
        if self.visits_per_patient.iter().sum::<f64>() <= 0.0 {
            return bad("visits_per_patient weights sum to zero".into());
        }
        for (name, shares) in [
            ("race", self.race.iter().map(|s| s.fraction).collect::<Vec<_>>()),
            ("datasets", self.datasets.iter().map(|s| s.fraction).collect()),
        ] {
            let total: f64 = shares.iter().sum();
            if (total - 1.0).abs() > 1e-9 || shares.iter().any(|f| *f < 0.0) {
                return bad(format!("{name} fractions must be non-negative and sum to 1, got {total}"));
            }
        }
        for (name, f) in [
            ("female_fraction", self.female_fraction),
            ("diabetic_fraction", self.diabetic_fraction),
            ("years_with_diabetes_available", self.years_with_diabetes_available),
            ("cataract_fraction", self.cataract_fraction),
            ("iol_fraction", self.iol_fraction),
            ("gaps.beyond_window_fraction", self.gaps.beyond_window_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} must lie in [0, 1], got {f}"));
            }
        }
        if !(self.age_sd > 0.0) || self.n_members == 0 || self.gaps.beyond_extra_days < 1 {
            return bad("age_sd, n_members and gaps.beyond_extra_days must be positive".into());
        }
        if !(0.0..1.0).contains(&self.severity_corr) {
            return bad("severity_corr must lie in [0, 1)".into());
        }
        for a in &self.analytes {
            if !(a.sd > 0.0) || !(0.0..=1.0).contains(&a.missing_fraction) {
                return bad(format!("{}: sd must be positive and missing_fraction in [0, 1]", a.analyte.name()));
            }
        }
        for p in &self.planted {
            if !(0.5..1.0).contains(&p.dls_auc) || p.baseline_auc.is_some_and(|b| !(0.5..1.0).contains(&b)) {
                return bad(format!("{}: planted AUCs must lie in [0.5, 1)", p.target));
            }
            if p.prevalence.is_some_and(|v| !(v > 0.0 && v < 1.0)) {
                return bad(format!("{}: prevalence must lie in (0, 1)", p.target));
            }
        }
        Ok(())
    }
}
