use chrono::NaiveDate;

use super::{Analyte, MatchMethod, MatchedValue, Measurement};
use crate::error::{Error, Result};

/// Maximum |measured - visit| in days for closest-in-time matching.
pub fn matching_window_days(analyte: Analyte) -> i64 {
    match analyte {
        Analyte::Inr => 30,
        Analyte::Hba1c => 90,
        _ => 180,
    }
}

/// Averaging window for vitals that are averaged rather than matched.
pub fn averaging_window_days(analyte: Analyte) -> Option<i64> {
    match analyte {
        Analyte::SystolicBp | Analyte::DiastolicBp | Analyte::Weight => Some(90),
        Analyte::Height => Some(365),
        _ => None,
    }
}

fn gap(visit_date: NaiveDate, m: &Measurement) -> i64 {
    (m.measured_date - visit_date).num_days().abs()
}

fn check_series(series: &[Measurement], analyte: Analyte) -> Result<()> {
    match series.iter().find(|m| m.analyte != analyte) {
        Some(m) => Err(Error::invalid(format!(
            "series for {analyte} contains a {} measurement",
            m.analyte
        ))),
        None => Ok(()),
    }
}

/// The measurement closest in time to the visit, if within the analyte's
/// window (gap <= window qualifies). Equidistant candidates resolve to the
/// earlier date.
pub fn match_measurement(
    visit_date: NaiveDate,
    series: &[Measurement],
    analyte: Analyte,
) -> Result<Option<MatchedValue>> {
    check_series(series, analyte)?;
    let window = matching_window_days(analyte);
    Ok(series
        .iter()
        .map(|m| (gap(visit_date, m), m))
        .filter(|(g, _)| *g <= window)
        .min_by(|(ga, a), (gb, b)| {
            ga.cmp(gb)
                .then(a.measured_date.cmp(&b.measured_date))
                .then(a.value.total_cmp(&b.value))
        })
        .map(|(g, m)| MatchedValue {
            analyte,
            value: m.value,
            day_gap: g,
            method: MatchMethod::Closest,
        }))
}

/// Arithmetic mean of every measurement within the averaging window. The
/// reported gap is the smallest gap among the included points.
pub fn window_average(
    visit_date: NaiveDate,
    series: &[Measurement],
    analyte: Analyte,
) -> Result<Option<MatchedValue>> {
    let window = averaging_window_days(analyte)
        .ok_or_else(|| Error::invalid(format!("{analyte} is not a window-averaged analyte")))?;
    check_series(series, analyte)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut min_gap = i64::MAX;
    for m in series {
        let g = gap(visit_date, m);
        if g <= window {
            sum += m.value;
            n += 1;
            min_gap = min_gap.min(g);
        }
    }
    Ok((n > 0).then(|| MatchedValue {
        analyte,
        value: sum / n as f64,
        day_gap: min_gap,
        method: MatchMethod::WindowAverage,
    }))
}
