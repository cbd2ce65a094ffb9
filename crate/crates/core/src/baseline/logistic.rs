use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassWeight {
    Balanced,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    /// Data-loss weight against `½‖w‖²`; `None` fits without a penalty.
    pub c: Option<f64>,
    pub class_weight: ClassWeight,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            c: Some(1.0),
            class_weight: ClassWeight::Balanced,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl LogisticOptions {
    pub fn unpenalized() -> Self {
        LogisticOptions { c: None, class_weight: ClassWeight::None, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_norm: f64,
    /// Objective after each accepted step, starting from the zero model.
    pub objective_trace: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `N / (2 N_class)` per sample for balanced weighting, otherwise 1.
pub fn sample_weights(y: &[bool], mode: ClassWeight) -> Vec<f64> {
    match mode {
        ClassWeight::None => vec![1.0; y.len()],
        ClassWeight::Balanced => {
            let n = y.len() as f64;
            let pos = y.iter().filter(|&&v| v).count() as f64;
            let neg = n - pos;
            y.iter().map(|&v| if v { n / (2.0 * pos) } else { n / (2.0 * neg) }).collect()
        }
    }
}

/// Fitting problem in stacked form: parameter 0 is the intercept.
pub struct LogisticProblem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [bool],
    s: Vec<f64>,
    c: f64,
    penalty: f64,
}

impl<'a> LogisticProblem<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a [bool], opts: &LogisticOptions) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix contains non-finite values"));
        }
        let pos = y.iter().filter(|&&v| v).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::DegenerateLabels { positives: pos, negatives: y.len() - pos });
        }
        let (c, penalty) = match opts.c {
            Some(c) if c > 0.0 && c.is_finite() => (c, 1.0),
            Some(c) => return Err(Error::invalid(format!("C must be positive, got {c}"))),
            None => (1.0, 0.0),
        };
        Ok(LogisticProblem { x, y, s: sample_weights(y, opts.class_weight), c, penalty })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    fn eta(&self, theta: &DVector<f64>) -> DVector<f64> {
        let w = theta.rows(1, self.x.ncols());
        let mut eta = self.x * w;
        eta.add_scalar_mut(theta[0]);
        eta
    }

    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        let eta = self.eta(theta);
        let loss: f64 = eta
            .iter()
            .zip(self.y)
            .zip(&self.s)
            .map(|((&e, &y), &s)| s * softplus(if y { -e } else { e }))
            .sum();
        let w2 = theta.rows(1, self.x.ncols()).norm_squared();
        0.5 * self.penalty * w2 + self.c * loss
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let eta = self.eta(theta);
        let mut g = DVector::zeros(self.dim());
        for i in 0..self.y.len() {
            let r = self.c * self.s[i] * (sigmoid(eta[i]) - if self.y[i] { 1.0 } else { 0.0 });
            g[0] += r;
            for j in 0..self.x.ncols() {
                g[j + 1] += r * self.x[(i, j)];
            }
        }
        for j in 1..self.dim() {
            g[j] += self.penalty * theta[j];
        }
        g
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.eta(theta);
        let d = self.dim();
        let p = self.x.ncols();
        let mut h = DMatrix::zeros(d, d);
        let mut row = vec![0.0; d];
        for i in 0..self.y.len() {
            let pr = sigmoid(eta[i]);
            let w = self.c * self.s[i] * pr * (1.0 - pr);
            row[0] = 1.0;
            for j in 0..p {
                row[j + 1] = self.x[(i, j)];
            }
            for a in 0..d {
                let wa = w * row[a];
                for b in a..d {
                    h[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        for j in 1..d {
            h[(j, j)] += self.penalty;
        }
        h
    }
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

pub(crate) fn newton(problem: &LogisticProblem, opts: &LogisticOptions) -> Result<LogisticModel> {
    let mut theta = DVector::zeros(problem.dim());
    let mut obj = problem.objective(&theta);
    let mut trace = vec![obj];
    let mut grad = problem.gradient(&theta);
    let mut iterations = 0;
    let mut converged = max_norm(&grad) <= opts.tol;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let h = problem.hessian(&theta);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                let mut damped = h;
                let bump = 1e-10 * damped.diagonal().max().max(1.0);
                for j in 0..damped.nrows() {
                    damped[(j, j)] += bump;
                }
                match damped.cholesky() {
                    Some(ch) => ch.solve(&grad),
                    None => return Err(Error::SingularInformation(Vec::new())),
                }
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        let gnorm = max_norm(&grad);
        for _ in 0..60 {
            let cand = &theta - t * &step;
            let cand_obj = problem.objective(&cand);
            // Near the optimum the decrease drops below the objective's
            // rounding; there a full step is kept if it shrinks the gradient.
            let ok = cand_obj < obj
                || (t == 1.0
                    && cand_obj <= obj + ROUNDOFF * obj.abs().max(1.0)
                    && max_norm(&problem.gradient(&cand)) < gnorm);
            if cand_obj.is_finite() && ok {
                theta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        grad = problem.gradient(&theta);
        if !accepted {
            // No representable descent left; the gradient decides convergence.
            converged = max_norm(&grad) <= opts.tol;
            break;
        }
        trace.push(obj);
        converged = max_norm(&grad) <= opts.tol;
    }
    let gnorm = max_norm(&grad);
    if !converged {
        warn!("logistic fit stopped after {iterations} iterations with gradient max-norm {gnorm:.3e}");
    }
    Ok(LogisticModel {
        coefficients: theta.rows(1, problem.dim() - 1).iter().copied().collect(),
        intercept: theta[0],
        objective: obj,
        converged,
        iterations,
        gradient_max_norm: gnorm,
        objective_trace: trace,
    })
}

/// Minimizes `½‖w‖² + C Σ sᵢ log(1 + exp(−ŷᵢ(xᵢ·w + b)))` by damped Newton.
/// The intercept is not penalized.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[bool], opts: &LogisticOptions) -> Result<LogisticModel> {
    let problem = LogisticProblem::new(x, y, opts)?;
    newton(&problem, opts)
}

pub fn predict_proba(model: &LogisticModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.coefficients.len() {
        return Err(Error::DimensionMismatch { expected: model.coefficients.len(), got: x.ncols() });
    }
    Ok(x.row_iter()
        .map(|r| sigmoid(model.intercept + r.iter().zip(&model.coefficients).map(|(a, b)| a * b).sum::<f64>()))
        .collect())
}

impl LogisticModel {
    pub fn theta(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.coefficients.len() + 1,
            std::iter::once(self.intercept).chain(self.coefficients.iter().copied()),
        )
    }
}
