use std::collections::BTreeMap;

use chrono::Duration;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::config::{AnalyteConfig, Marginal, Share, SynthConfig};
use crate::ablation::{Ellipse, EllipseAnnotation};
use crate::cohort::{
    averaging_window_days, derive_cohort, invert_egfr_2021, matching_window_days, Analyte, Cohort,
    DatasetId, Eye, ImageRecord, Measurement, Patient, ScoreRecord, Sex, Visit,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, GENERATOR_NAME};
use crate::targets::{Direction, TargetRegistry};

/// Per-analyte latent parameters after prevalence recentering and
/// baseline-AUC calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedAnalyte {
    pub analyte: Analyte,
    pub marginal: Marginal,
    pub mean: f64,
    pub sd: f64,
    pub demographic_corr: f64,
    pub severity_corr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub target: String,
    pub analyte: Analyte,
    pub dls_auc: f64,
    /// Binormal separation `√2·Φ⁻¹(dls_auc)`.
    pub delta: f64,
    pub baseline_auc: f64,
    pub latent_cutoff: f64,
    pub population_prevalence: f64,
    pub labelled_visits: usize,
    pub realized_prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub generator: String,
    pub rng: String,
    pub config: SynthConfig,
    pub analytes: Vec<ResolvedAnalyte>,
    pub planted: Vec<PlantedTruth>,
    pub n_patients: usize,
    pub n_visits: usize,
    pub n_measurements: usize,
    pub n_scores: usize,
}

pub struct SynthOutput {
    pub cohort: Cohort,
    pub manifest: SynthManifest,
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Separation of unit-variance normals with population AUC `auc`.
pub fn binormal_delta(auc: f64) -> f64 {
    std::f64::consts::SQRT_2 * std_normal().inverse_cdf(auc)
}

/// AUC of a standard-normal index `D` for the label `L > c`, where `(D, L)`
/// is bivariate standard normal with correlation `rho ≥ 0`.
pub fn threshold_auc(rho: f64, c: f64) -> f64 {
    if rho == 0.0 {
        return 0.5;
    }
    let nd = std_normal();
    let s = (1.0 - rho * rho).sqrt();
    let (lo, hi, steps) = (-9.0, 9.0, 12_000usize);
    let h = (hi - lo) / steps as f64;
    let grid: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let d = lo + k as f64 * h;
            (nd.pdf(d), nd.cdf((rho * d - c) / s))
        })
        .collect();
    let trap = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
        grid.windows(2).map(|w| 0.5 * h * (f(w[0].0, w[0].1) + f(w[1].0, w[1].1))).sum()
    };
    let pi = trap(&|p, q| p * q);
    // ∫ f1(d) F0(d) dd with F0 accumulated on the same grid.
    let mut f0_cum = 0.0;
    let mut acc = 0.0;
    for w in grid.windows(2) {
        let f0a = w[0].0 * (1.0 - w[0].1) / (1.0 - pi);
        let f0b = w[1].0 * (1.0 - w[1].1) / (1.0 - pi);
        let before = f0_cum;
        f0_cum += 0.5 * h * (f0a + f0b);
        let f1a = w[0].0 * w[0].1 / pi;
        let f1b = w[1].0 * w[1].1 / pi;
        acc += 0.5 * h * (f1a * before + f1b * f0_cum);
    }
    acc
}

/// Demographic correlation giving baseline AUC `target` for cutoff `c`.
pub fn calibrate_demographic_corr(target: f64, c: f64, rho_max: f64) -> Result<f64> {
    if target <= 0.5 {
        return Ok(0.0);
    }
    if threshold_auc(rho_max, c) < target {
        return Err(Error::Config(format!(
            "baseline AUC {target} unreachable with demographic correlation ≤ {rho_max:.3}"
        )));
    }
    let (mut lo, mut hi) = (0.0, rho_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if threshold_auc(mid, c) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, shares: &'a [Share<T>]) -> &'a T {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for s in shares {
        acc += s.fraction;
        if u < acc {
            return &s.group;
        }
    }
    &shares.last().expect("validated non-empty").group
}

fn pick_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn measured_analyte(a: Analyte) -> Analyte {
    match a {
        Analyte::Egfr => Analyte::Creatinine,
        Analyte::Bmi => Analyte::Weight,
        other => other,
    }
}

fn gap_window(a: Analyte) -> i64 {
    averaging_window_days(a).unwrap_or_else(|| matching_window_days(a))
}

fn draw_gap(rng: &mut ChaCha8Rng, window: i64, cfg: &SynthConfig) -> i64 {
    let gap = if rng.random_bool(cfg.gaps.beyond_window_fraction) {
        window + rng.random_range(1..=cfg.gaps.beyond_extra_days)
    } else {
        rng.random_range(0..=window)
    };
    if gap > 0 && rng.random_bool(0.5) {
        -gap
    } else {
        gap
    }
}

fn to_value(a: &ResolvedAnalyte, cfg: &AnalyteConfig, latent: f64) -> f64 {
    let v = match a.marginal {
        Marginal::Normal => a.mean + a.sd * latent,
        Marginal::LogNormal => (a.mean + a.sd * latent).exp(),
    };
    let v = cfg.min.map_or(v, |m| v.max(m));
    cfg.max.map_or(v, |m| v.min(m))
}

fn latent_cutoff(a: &ResolvedAnalyte, cutoff: f64) -> f64 {
    match a.marginal {
        Marginal::Normal => (cutoff - a.mean) / a.sd,
        Marginal::LogNormal => (cutoff.ln() - a.mean) / a.sd,
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    generate_with(config, &TargetRegistry::default())
}

pub fn generate_with(config: &SynthConfig, registry: &TargetRegistry) -> Result<SynthOutput> {
    config.validate()?;
    let rho_s = config.severity_corr;
    let direct = [Analyte::MeanArterialPressure, Analyte::PulsePressure, Analyte::NonHdl];
    if let Some(a) = config.analytes.iter().find(|a| direct.contains(&a.analyte)) {
        return Err(Error::Config(format!("{} is derived from other analytes and cannot be generated", a.analyte.name())));
    }
    for a in [Analyte::Weight, Analyte::Creatinine] {
        if config.analyte(a).is_some() {
            return Err(Error::Config(format!(
                "{} is generated from {}; configure that instead",
                a.name(),
                if a == Analyte::Weight { "BMI" } else { "eGFR" }
            )));
        }
    }
    if config.analyte(Analyte::Bmi).is_some() && config.analyte(Analyte::Height).is_none() {
        return Err(Error::Config("BMI generation needs a Height marginal".into()));
    }
    let mut resolved: Vec<ResolvedAnalyte> = config
        .analytes
        .iter()
        .map(|a| ResolvedAnalyte {
            analyte: a.analyte,
            marginal: a.marginal,
            mean: a.mean,
            sd: a.sd,
            demographic_corr: a.demographic_corr,
            severity_corr: rho_s,
        })
        .collect();

    let nd = std_normal();
    let mut plans = Vec::new();
    let mut corr_set: BTreeMap<Analyte, String> = BTreeMap::new();
    let mut mean_set: BTreeMap<Analyte, String> = BTreeMap::new();
    for p in &config.planted {
        let spec = registry
            .get(&p.target)
            .ok_or_else(|| Error::Config(format!("planted target `{}` not in the registry", p.target)))?;
        let idx = resolved
            .iter()
            .position(|r| r.analyte == spec.analyte)
            .ok_or_else(|| Error::Config(format!("planted target `{}` has no {} marginal", p.target, spec.analyte.name())))?;
        let above = spec.direction == Direction::AboveIsPositive;
        if let Some(prev) = p.prevalence {
            if let Some(other) = mean_set.insert(spec.analyte, p.target.clone()) {
                return Err(Error::Config(format!("prevalence for {} set by both `{other}` and `{}`", spec.analyte.name(), p.target)));
            }
            let c = if above { nd.inverse_cdf(1.0 - prev) } else { nd.inverse_cdf(prev) };
            let r = &mut resolved[idx];
            let h = match r.marginal {
                Marginal::Normal => spec.headline_cutoff(),
                Marginal::LogNormal => spec.headline_cutoff().ln(),
            };
            r.mean = h - r.sd * c;
        }
        if let Some(b) = p.baseline_auc {
            if let Some(other) = corr_set.insert(spec.analyte, p.target.clone()) {
                return Err(Error::Config(format!("baseline AUC for {} set by both `{other}` and `{}`", spec.analyte.name(), p.target)));
            }
            let c = latent_cutoff(&resolved[idx], spec.headline_cutoff());
            let c_up = if above { c } else { -c };
            let rho_max = (1.0 - rho_s * rho_s).sqrt() - 1e-6;
            let rho = calibrate_demographic_corr(b, c_up, rho_max)?;
            resolved[idx].demographic_corr = if above { rho } else { -rho };
        }
        plans.push((idx, spec, p.dls_auc));
    }
    for r in &resolved {
        if r.demographic_corr.powi(2) + rho_s * rho_s >= 1.0 {
            return Err(Error::Config(format!("{}: latent loadings exceed unit variance", r.analyte.name())));
        }
    }

    // Patients, visits and measurements.
    let mut patients = Vec::with_capacity(config.n_patients);
    let mut visits = Vec::new();
    let mut measurements = Vec::new();
    let width = (config.n_patients as f64).log10().floor() as usize + 1;
    let datasets: Vec<Share<DatasetId>> = config
        .datasets
        .iter()
        .map(|s| Ok(Share { group: s.group.parse::<DatasetId>()?, fraction: s.fraction }))
        .collect::<Result<_>>()?;
    let ydm = Exp::new(1.0 / config.years_with_diabetes_mean.max(1e-9))
        .map_err(|e| Error::Config(e.to_string()))?;
    let height_cfg = config.analyte(Analyte::Height);
    let height_res = resolved.iter().find(|r| r.analyte == Analyte::Height).cloned();

    for i in 0..config.n_patients {
        let pid = format!("P{:0width$}", i + 1);
        let mut rng = rng_from_seed(derive_seed(config.seed, &format!("patient/{pid}")));
        let d: f64 = rng.sample(StandardNormal);
        let age = (config.age_mean + config.age_sd * d).clamp(18.0, 100.0);
        let sex = if rng.random_bool(config.female_fraction) { Sex::Female } else { Sex::Male };
        let race = *pick(&mut rng, &config.race);
        let dataset = pick(&mut rng, &datasets).clone();
        let diabetic = rng.random_bool(config.diabetic_fraction);
        let yrs = rng.random_bool(config.years_with_diabetes_available).then(|| {
            if diabetic {
                (ydm.sample(&mut rng) * 10.0).round() / 10.0
            } else {
                0.0
            }
        });
        let severity: f64 = rng.sample(StandardNormal);
        let height_latent = height_res.as_ref().map(|r| {
            let e: f64 = rng.sample(StandardNormal);
            r.demographic_corr * d + r.severity_corr * severity
                + (1.0 - r.demographic_corr.powi(2) - r.severity_corr.powi(2)).sqrt() * e
        });
        let height = height_res
            .as_ref()
            .zip(height_cfg)
            .zip(height_latent)
            .map(|((r, c), l)| (to_value(r, c, l) * 100.0).round() / 100.0);
        patients.push(Patient {
            patient_id: pid.clone(),
            sex,
            race_ethnicity: race,
            age: Some(age),
            years_with_diabetes: yrs,
            diabetic: Some(diabetic),
            dataset_id: dataset,
        });

        let n_visits = pick_index(&mut rng, &config.visits_per_patient) + 1;
        let mut date = config.start_date + Duration::days(rng.random_range(0..=config.enrollment_span_days));
        let first = date;
        for j in 0..n_visits {
            if j > 0 {
                date += Duration::days(config.visit_spacing_days + rng.random_range(0..=200));
            }
            let vid = format!("{pid}-V{}", j + 1);
            let age_here = age + (date - first).num_days() as f64 / 365.25;
            let mut images = Vec::with_capacity(2);
            for (eye, tag) in [(Eye::Left, "L"), (Eye::Right, "R")] {
                images.push(ImageRecord {
                    image_id: format!("{vid}-{tag}"),
                    eye,
                    dims: None,
                    annotation: Some(draw_annotation(&mut rng)),
                });
            }
            visits.push(Visit {
                visit_id: vid.clone(),
                patient_id: pid.clone(),
                visit_date: date,
                images,
                cataract_present: Some(rng.random_bool(config.cataract_fraction)),
                intraocular_lens: Some(rng.random_bool(config.iol_fraction)),
            });
            for (res, acfg) in resolved.iter().zip(&config.analytes) {
                if rng.random_bool(acfg.missing_fraction) {
                    continue;
                }
                let e: f64 = rng.sample(StandardNormal);
                let latent = res.demographic_corr * d
                    + res.severity_corr * severity
                    + (1.0 - res.demographic_corr.powi(2) - res.severity_corr.powi(2)).sqrt() * e;
                let out = measured_analyte(res.analyte);
                let value = match res.analyte {
                    Analyte::Height => match height {
                        Some(h) => h,
                        None => continue,
                    },
                    Analyte::Egfr => invert_egfr_2021(to_value(res, acfg, latent), age_here, sex)?,
                    Analyte::Bmi => {
                        let h = height.expect("height configured with BMI");
                        to_value(res, acfg, latent) * h * h
                    }
                    _ => to_value(res, acfg, latent),
                };
                let gap = draw_gap(&mut rng, gap_window(out), config);
                measurements.push(Measurement {
                    patient_id: pid.clone(),
                    analyte: out,
                    value,
                    measured_date: date + Duration::days(gap),
                });
            }
        }
    }

    let base = Cohort::from_parts(patients.clone(), visits.clone(), measurements.clone(), Vec::new())?;
    let derived = derive_cohort(&base);

    // Scores conditional on the derived labels.
    let mut scores = Vec::new();
    let mut truths = Vec::new();
    let members: Vec<String> = (0..config.n_members).map(|m| format!("m{m}")).collect();
    let offsets: Vec<f64> = (0..config.n_members)
        .map(|m| 0.25 * (m as f64 - (config.n_members as f64 - 1.0) / 2.0))
        .collect();
    for (idx, spec, dls_auc) in &plans {
        let delta = binormal_delta(*dls_auc);
        let (mut labelled, mut positives) = (0usize, 0usize);
        for v in base.visits() {
            let label = match derived.get(&v.visit_id).and_then(|d| d.get(spec.analyte)) {
                Some(m) => Some(spec.is_positive(m.value)?),
                None => None,
            };
            if let Some(l) = label {
                labelled += 1;
                positives += l as usize;
            }
            let mut rng = rng_from_seed(derive_seed(config.seed, &format!("scores/{}/{}", spec.name, v.visit_id)));
            let noise: f64 = rng.sample(StandardNormal);
            let z = noise + if label == Some(true) { delta } else { 0.0 } - delta / 2.0;
            for im in &v.images {
                for (member, off) in members.iter().zip(&offsets) {
                    scores.push(ScoreRecord {
                        image_id: im.image_id.clone(),
                        visit_id: v.visit_id.clone(),
                        patient_id: v.patient_id.clone(),
                        eye: im.eye,
                        model_member: member.clone(),
                        target_name: spec.name.clone(),
                        score: nd.cdf(z + off),
                    });
                }
            }
        }
        let r = &resolved[*idx];
        let c = latent_cutoff(r, spec.headline_cutoff());
        let above = spec.direction == Direction::AboveIsPositive;
        truths.push(PlantedTruth {
            target: spec.name.clone(),
            analyte: spec.analyte,
            dls_auc: *dls_auc,
            delta,
            baseline_auc: threshold_auc(r.demographic_corr.abs(), if above { c } else { -c }),
            latent_cutoff: c,
            population_prevalence: if above { 1.0 - nd.cdf(c) } else { nd.cdf(c) },
            labelled_visits: labelled,
            realized_prevalence: if labelled > 0 { positives as f64 / labelled as f64 } else { 0.0 },
        });
        if positives == 0 {
            return Err(Error::Config(format!("planted target `{}` produced no positive visits", spec.name)));
        }
    }

    let cohort = Cohort::from_parts(patients, visits, measurements, scores)?;
    let manifest = SynthManifest {
        generator: GENERATOR_NAME.to_string(),
        rng: "ChaCha8".to_string(),
        config: config.clone(),
        analytes: resolved,
        planted: truths,
        n_patients: cohort.n_patients(),
        n_visits: cohort.n_visits(),
        n_measurements: cohort.n_measurements(),
        n_scores: cohort.scores().len(),
    };
    Ok(SynthOutput { cohort, manifest })
}

fn draw_annotation(rng: &mut ChaCha8Rng) -> EllipseAnnotation {
    let iw = rng.random_range(180.0..240.0);
    let ih = iw * rng.random_range(0.95..1.05);
    let (cx, cy) = (293.5 + rng.random_range(-20.0..20.0), 293.5 + rng.random_range(-20.0..20.0));
    let ratio = rng.random_range(0.25..0.7);
    let pw = iw * ratio;
    let ph = pw * rng.random_range(0.95..1.05);
    let round = |v: f64| (v * 10.0).round() / 10.0;
    EllipseAnnotation {
        pupil: Ellipse::new(round(cx + rng.random_range(-3.0..3.0)), round(cy + rng.random_range(-3.0..3.0)), round(pw), round(ph)),
        iris: Ellipse::new(round(cx), round(cy), round(iw), round(ih)),
    }
}
