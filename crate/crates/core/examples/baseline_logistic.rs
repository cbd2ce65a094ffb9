//! Penalized class-weighted logistic fit on a planted design, then the
//! unpenalized adjusted odds-ratio analysis used to test DLS independence.

use eyelab::baseline::{
    adjusted_analysis, fit_logistic, predict_proba, AdjustedCovariates, AdjustedOptions, LogisticOptions,
};
use eyelab::cohort::{RaceEthnicity, Sex};
use eyelab::rng::rng_from_seed;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> eyelab::Result<()> {
    let mut rng = rng_from_seed(5);
    let n = 4000;
    let truth = [0.9, -0.6, 0.0];
    let x = DMatrix::from_fn(n, truth.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<bool> = (0..n)
        .map(|i| {
            let eta = -2.0 + (0..truth.len()).map(|j| truth[j] * x[(i, j)]).sum::<f64>();
            rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())
        })
        .collect();

    let model = fit_logistic(&x, &y, &LogisticOptions::default())?;
    println!(
        "balanced L2 fit: intercept {:.3}, coefficients {:?}, {} Newton steps, gradient {:.1e}",
        model.intercept,
        model.coefficients.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>(),
        model.iterations,
        model.gradient_max_norm
    );
    let p = predict_proba(&model, &x)?;
    println!("mean predicted probability {:.3} (positives {:.3})", p.iter().sum::<f64>() / n as f64, y.iter().filter(|&&v| v).count() as f64 / n as f64);

    let races = [RaceEthnicity::White, RaceEthnicity::Hispanic, RaceEthnicity::Black, RaceEthnicity::AsianPacificIslander];
    let cov: Vec<AdjustedCovariates> = (0..n)
        .map(|i| AdjustedCovariates {
            age: 58.0 + 10.0 * x[(i, 1)],
            sex: if rng.random::<bool>() { Sex::Male } else { Sex::Female },
            race: races[rng.random_range(0..races.len())],
            years_with_diabetes: 8.0 + 3.0 * x[(i, 2)],
        })
        .collect();
    let dls: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    for row in adjusted_analysis(&y, &cov, &dls, &AdjustedOptions::default())? {
        println!("{:<32} OR {:.3} ({:.3}-{:.3}) p {:.4}", row.variable, row.odds_ratio, row.ci_low, row.ci_high, row.p);
    }
    Ok(())
}
