//! Derived clinical values and how registry targets turn them into labels.

use eyelab::cohort::{compute_bmi, compute_egfr_2021, mean_arterial_pressure, pulse_pressure, Sex};
use eyelab::targets::TargetRegistry;

fn main() -> eyelab::Result<()> {
    let registry = TargetRegistry::default();
    println!("{} targets, {} primary", registry.specs().len(), registry.n_primary());

    for (scr, age, sex) in [(0.8, 34.0, Sex::Female), (1.3, 61.0, Sex::Male), (2.4, 72.0, Sex::Female)] {
        let egfr = compute_egfr_2021(scr, age, sex)?;
        let spec = registry.get("eGFR<60.0").expect("builtin target");
        let label = spec.label_value(egfr)?;
        println!(
            "creatinine {scr} mg/dL, {age} y, {sex:?}: eGFR {egfr:.1} -> {} positive={} class={} of {}",
            spec.name,
            label.binary_positive,
            label.class_index,
            spec.n_classes()
        );
    }

    let bmi = compute_bmi(92.0, 1.74)?;
    let (sbp, dbp) = (146.0, 88.0);
    let map = mean_arterial_pressure(sbp, dbp);
    let pp = pulse_pressure(sbp, dbp);
    for (name, value) in [("BMI>=30.0", bmi), ("MeanArterialPressure>=110.0", map), ("PulsePressure>=55.0", pp)] {
        let spec = registry.get(name).expect("builtin target");
        println!("{name:<28} value {value:>6.1} {}  positive={}", spec.unit, spec.is_positive(value)?);
    }

    println!("primary targets:");
    for spec in registry.primary() {
        println!("  {:<16} {} {} {}", spec.name, spec.operator(), spec.headline_cutoff(), spec.unit);
    }
    Ok(())
}
