use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::logistic::{newton, LogisticOptions, LogisticProblem};
use crate::cohort::{RaceEthnicity, Sex};
use crate::error::{Error, Result};
use crate::roc::z_for_level;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedRow {
    pub variable: String,
    pub odds_ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
}

/// Complete-case covariates for one evaluated visit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedCovariates {
    pub age: f64,
    pub sex: Sex,
    pub race: RaceEthnicity,
    pub years_with_diabetes: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedOptions {
    pub sex_reference: Sex,
    pub race_reference: RaceEthnicity,
    /// Groups below this prevalence join `Other`.
    pub pool_below: f64,
    pub level: f64,
}

impl Default for AdjustedOptions {
    fn default() -> Self {
        AdjustedOptions {
            sex_reference: Sex::Female,
            race_reference: RaceEthnicity::White,
            pool_below: 0.02,
            level: 0.95,
        }
    }
}

const RACE_ORDER: [RaceEthnicity; 6] = [
    RaceEthnicity::Black,
    RaceEthnicity::AsianPacificIslander,
    RaceEthnicity::Hispanic,
    RaceEthnicity::NativeAmerican,
    RaceEthnicity::White,
    RaceEthnicity::Other,
];

pub fn race_label(r: RaceEthnicity) -> &'static str {
    match r {
        RaceEthnicity::Hispanic => "Hispanic",
        RaceEthnicity::White => "White",
        RaceEthnicity::Black => "Black",
        RaceEthnicity::AsianPacificIslander => "Asian / Pacific islander",
        RaceEthnicity::NativeAmerican => "Native American",
        RaceEthnicity::Other | RaceEthnicity::Unknown => "Other",
    }
}

/// Maps groups under `threshold` prevalence (and `Unknown`) to `Other`.
/// The reference group is never pooled.
pub fn pool_races(races: &[RaceEthnicity], threshold: f64, reference: RaceEthnicity) -> Vec<RaceEthnicity> {
    let mut counts: BTreeMap<RaceEthnicity, usize> = BTreeMap::new();
    for &r in races {
        *counts.entry(r).or_default() += 1;
    }
    let n = races.len() as f64;
    races
        .iter()
        .map(|&r| {
            if r == RaceEthnicity::Unknown {
                RaceEthnicity::Other
            } else if r != reference && (counts[&r] as f64) / n < threshold {
                RaceEthnicity::Other
            } else {
                r
            }
        })
        .collect()
}

/// Names of columns that are linear combinations of earlier ones.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    let n = x.nrows();
    for j in 0..x.ncols() {
        let mut cols = kept.clone();
        cols.push(j);
        let sub = DMatrix::from_fn(n, cols.len() + 1, |i, k| if k == 0 { 1.0 } else { x[(i, cols[k - 1])] });
        let gram = sub.transpose() * &sub;
        let sv = gram.clone().symmetric_eigenvalues();
        let max = sv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = sv.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if min <= 1e-10 * max.max(1.0) {
            bad.push(names[j].clone());
        } else {
            kept.push(j);
        }
    }
    bad
}

/// Unweighted, unpenalized maximum-likelihood logistic regression of the
/// outcome on the covariates plus the z-scored DLS score.
pub fn adjusted_analysis(
    outcome: &[bool],
    covariates: &[AdjustedCovariates],
    dls_scores: &[f64],
    opts: &AdjustedOptions,
) -> Result<Vec<AdjustedRow>> {
    let n = outcome.len();
    if covariates.len() != n || dls_scores.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: covariates.len().min(dls_scores.len()) });
    }
    if covariates.iter().any(|c| c.sex == Sex::Unknown) {
        return Err(Error::invalid("adjusted analysis needs known sex on every row"));
    }
    let races = pool_races(
        &covariates.iter().map(|c| c.race).collect::<Vec<_>>(),
        opts.pool_below,
        opts.race_reference,
    );
    let sex_other = if opts.sex_reference == Sex::Female { Sex::Male } else { Sex::Female };
    let race_levels: Vec<RaceEthnicity> = RACE_ORDER
        .into_iter()
        .filter(|r| *r != opts.race_reference && races.contains(r))
        .collect();

    let mean = dls_scores.iter().sum::<f64>() / n as f64;
    let sd = (dls_scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::invalid("DLS scores are constant"));
    }

    let mut names = vec!["Age".to_string(), format!("Sex={}", sex_other.as_str())];
    names.extend(race_levels.iter().map(|r| format!("Race={}", race_label(*r))));
    names.push("YrsDM".to_string());
    names.push("DLS".to_string());
    let p = names.len();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let c = &covariates[i];
        x[(i, 0)] = c.age;
        x[(i, 1)] = if c.sex == sex_other { 1.0 } else { 0.0 };
        for (k, r) in race_levels.iter().enumerate() {
            if races[i] == *r {
                x[(i, 2 + k)] = 1.0;
            }
        }
        x[(i, p - 2)] = c.years_with_diabetes;
        x[(i, p - 1)] = (dls_scores[i] - mean) / sd;
    }

    let bad = collinear_columns(&x, &names);
    if !bad.is_empty() {
        return Err(Error::SingularInformation(bad));
    }
    let lopts = LogisticOptions { max_iter: 100, ..LogisticOptions::unpenalized() };
    let problem = LogisticProblem::new(&x, outcome, &lopts)?;
    let model = newton(&problem, &lopts)?;
    let theta = model.theta();
    let eta_max = (0..n)
        .map(|i| (theta[0] + (0..p).map(|j| x[(i, j)] * theta[j + 1]).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    if !model.converged || eta_max > 30.0 {
        return Err(Error::QuasiSeparation);
    }
    let info = problem.hessian(&theta);
    let cov = info
        .cholesky()
        .ok_or_else(|| Error::SingularInformation(names.clone()))?
        .inverse();
    let z = z_for_level(opts.level);
    let normal = Normal::standard();
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(j, variable)| {
            let beta = theta[j + 1];
            let se = cov[(j + 1, j + 1)].sqrt();
            AdjustedRow {
                variable,
                odds_ratio: beta.exp(),
                ci_low: (beta - z * se).exp(),
                ci_high: (beta + z * se).exp(),
                p: (2.0 * normal.sf((beta / se).abs())).min(1.0),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn pooling_small_groups() {
        let mut races = vec![RaceEthnicity::White; 90];
        races.extend(vec![RaceEthnicity::Black; 9]);
        races.push(RaceEthnicity::NativeAmerican);
        let pooled = pool_races(&races, 0.02, RaceEthnicity::White);
        assert_eq!(pooled[99], RaceEthnicity::Other);
        assert_eq!(pooled[95], RaceEthnicity::Black);
    }

    fn cohort(n: usize, seed: u64, dls_beta: f64) -> (Vec<bool>, Vec<AdjustedCovariates>, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let mut y = Vec::new();
        let mut cov = Vec::new();
        let mut dls = Vec::new();
        for _ in 0..n {
            let age = 40.0 + 15.0 * rng.sample::<f64, _>(StandardNormal);
            let sex = if rng.random_bool(0.5) { Sex::Male } else { Sex::Female };
            let race = match rng.random_range(0..10) {
                0..=5 => RaceEthnicity::White,
                6 | 7 => RaceEthnicity::Hispanic,
                _ => RaceEthnicity::Black,
            };
            let yrs = rng.random_range(0.0..20.0);
            let d: f64 = rng.sample(StandardNormal);
            let eta = -0.5 + 0.01 * (age - 40.0) + dls_beta * d;
            y.push(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()));
            cov.push(AdjustedCovariates { age, sex, race, years_with_diabetes: yrs });
            dls.push(d);
        }
        (y, cov, dls)
    }

    #[test]
    fn row_layout() {
        let (y, c, d) = cohort(2000, 1, 0.7);
        let rows = adjusted_analysis(&y, &c, &d, &AdjustedOptions::default()).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.variable.as_str()).collect();
        assert_eq!(names, ["Age", "Sex=Male", "Race=Black", "Race=Hispanic", "YrsDM", "DLS"]);
        for r in &rows {
            assert!(r.ci_low <= r.odds_ratio && r.odds_ratio <= r.ci_high && r.ci_low > 0.0);
        }
    }

    #[test]
    fn dls_row_ignores_other_references() {
        let (y, c, d) = cohort(3000, 2, 0.5);
        let a = adjusted_analysis(&y, &c, &d, &AdjustedOptions::default()).unwrap();
        let opts = AdjustedOptions {
            sex_reference: Sex::Male,
            race_reference: RaceEthnicity::Hispanic,
            ..Default::default()
        };
        let b = adjusted_analysis(&y, &c, &d, &opts).unwrap();
        let dls = |rows: &[AdjustedRow]| rows.iter().find(|r| r.variable == "DLS").unwrap().odds_ratio;
        assert!((dls(&a) - dls(&b)).abs() < 1e-9);
    }

    #[test]
    fn collinear_columns_are_named() {
        let (y, mut c, d) = cohort(500, 3, 0.5);
        for row in c.iter_mut() {
            row.years_with_diabetes = row.age * 2.0;
        }
        match adjusted_analysis(&y, &c, &d, &AdjustedOptions::default()) {
            Err(Error::SingularInformation(cols)) => assert_eq!(cols, vec!["YrsDM".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn separation_detected() {
        let (_, c, d) = cohort(400, 4, 0.0);
        let y: Vec<bool> = d.iter().map(|v| *v > 0.0).collect();
        assert!(matches!(
            adjusted_analysis(&y, &c, &d, &AdjustedOptions::default()),
            Err(Error::QuasiSeparation)
        ));
    }
}
