use super::Sex;
use crate::error::{Error, Result};

/// Race-free 2021 CKD-EPI creatinine equation (Inker et al., NEJM 2021).
///
/// `serum_creatinine` in mg/dL, `age` in years; result in mL/min/1.73 m².
pub fn compute_egfr_2021(serum_creatinine: f64, age: f64, sex: Sex) -> Result<f64> {
    if !(serum_creatinine.is_finite() && serum_creatinine > 0.0) {
        return Err(Error::invalid(format!(
            "creatinine must be positive, got {serum_creatinine}"
        )));
    }
    if !(age.is_finite() && age > 0.0) {
        return Err(Error::invalid(format!("age must be positive, got {age}")));
    }
    let (kappa, alpha, sex_factor) = egfr_constants(sex)?;
    let ratio = serum_creatinine / kappa;
    Ok(142.0
        * ratio.min(1.0).powf(alpha)
        * ratio.max(1.0).powf(-1.200)
        * 0.9938_f64.powf(age)
        * sex_factor)
}

fn egfr_constants(sex: Sex) -> Result<(f64, f64, f64)> {
    match sex {
        Sex::Female => Ok((0.7, -0.241, 1.012)),
        Sex::Male => Ok((0.9, -0.302, 1.0)),
        Sex::Unknown => Err(Error::invalid("eGFR requires sex")),
    }
}

/// Creatinine (mg/dL) that yields `egfr` under [`compute_egfr_2021`].
pub fn invert_egfr_2021(egfr: f64, age: f64, sex: Sex) -> Result<f64> {
    if !(egfr.is_finite() && egfr > 0.0) {
        return Err(Error::invalid(format!("eGFR must be positive, got {egfr}")));
    }
    let (kappa, alpha, _) = egfr_constants(sex)?;
    let at_kappa = compute_egfr_2021(kappa, age, sex)?;
    let r = egfr / at_kappa;
    let ratio = if r >= 1.0 { r.powf(1.0 / alpha) } else { r.powf(-1.0 / 1.200) };
    Ok(kappa * ratio)
}

/// Body-mass index in kg/m² from weight (kg) and height (m).
pub fn compute_bmi(weight_kg: f64, height_m: f64) -> Result<f64> {
    if !(weight_kg.is_finite() && weight_kg > 0.0 && height_m.is_finite() && height_m > 0.0) {
        return Err(Error::invalid(format!(
            "weight and height must be positive, got {weight_kg} kg, {height_m} m"
        )));
    }
    Ok(weight_kg / (height_m * height_m))
}

pub fn mean_arterial_pressure(systolic: f64, diastolic: f64) -> f64 {
    diastolic + (systolic - diastolic) / 3.0
}

pub fn pulse_pressure(systolic: f64, diastolic: f64) -> f64 {
    systolic - diastolic
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn egfr_age_factor_is_exact() {
        let young = compute_egfr_2021(0.7, 40.0, Sex::Female).unwrap();
        let old = compute_egfr_2021(0.7, 41.0, Sex::Female).unwrap();
        assert!((old / young - 0.9938).abs() < 1e-12);
    }

    #[test]
    fn egfr_power_law_above_kappa() {
        let a = compute_egfr_2021(1.5, 60.0, Sex::Male).unwrap();
        let b = compute_egfr_2021(3.0, 60.0, Sex::Male).unwrap();
        assert!((b / a - 2f64.powf(-1.2)).abs() < 1e-12);
    }

    #[test]
    fn egfr_reference_point() {
        // 50-year-old male, Scr 0.9 sits at kappa: 142 * 0.9938^50
        let v = compute_egfr_2021(0.9, 50.0, Sex::Male).unwrap();
        assert!((v - 142.0 * 0.9938f64.powi(50)).abs() < 1e-9);
        assert_eq!(v.round(), 104.0);
    }

    #[test]
    fn egfr_rejects_bad_inputs() {
        assert!(compute_egfr_2021(1.0, 50.0, Sex::Unknown).is_err());
        assert!(compute_egfr_2021(0.0, 50.0, Sex::Male).is_err());
        assert!(compute_egfr_2021(1.0, 0.0, Sex::Male).is_err());
        assert!(compute_egfr_2021(f64::NAN, 50.0, Sex::Male).is_err());
    }

    #[test]
    fn inversion_round_trips() {
        for sex in [Sex::Female, Sex::Male] {
            for egfr in [8.0, 45.0, 90.0, 130.0] {
                let scr = invert_egfr_2021(egfr, 52.0, sex).unwrap();
                assert!((compute_egfr_2021(scr, 52.0, sex).unwrap() - egfr).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bmi_examples() {
        assert_eq!(compute_bmi(80.0, 2.0).unwrap(), 20.0);
        assert!((compute_bmi(75.0, 1.5).unwrap() - 33.333_333_333_333_336).abs() < 1e-12);
        assert!(compute_bmi(0.0, 1.7).is_err());
        assert!(compute_bmi(70.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn egfr_decreasing_in_creatinine_and_age(
            scr in 0.2f64..8.0, d in 0.01f64..2.0, age in 18f64..95.0, female in any::<bool>()
        ) {
            let sex = if female { Sex::Female } else { Sex::Male };
            let base = compute_egfr_2021(scr, age, sex).unwrap();
            prop_assert!(compute_egfr_2021(scr + d, age, sex).unwrap() < base);
            prop_assert!(compute_egfr_2021(scr, age + d, sex).unwrap() < base);
        }
    }
}
