use serde::{Deserialize, Serialize};

use super::ScoredSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopFractionPpv {
    pub ppv: f64,
    pub k: usize,
    /// Score of the k-th ranked unit.
    pub threshold: f64,
}

/// Positive predictive value among the `round(fraction * N)` highest-scoring
/// units (half-up rounding). Ties at the boundary are ordered by unit id.
pub fn ppv_at_top_fraction(samples: &[ScoredSample], fraction: f64) -> Result<TopFractionPpv> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1), got {fraction}")));
    }
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let k = (fraction * samples.len() as f64 + 0.5).floor() as usize;
    if k == 0 {
        return Err(Error::invalid(format!(
            "top {fraction} of {} units selects nobody",
            samples.len()
        )));
    }
    let mut ranked: Vec<&ScoredSample> = samples.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.unit_id.cmp(&b.unit_id)));
    let hits = ranked[..k].iter().filter(|s| s.label).count();
    Ok(TopFractionPpv {
        ppv: hits as f64 / k as f64,
        k,
        threshold: ranked[k - 1].score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn units(v: &[(f64, bool)]) -> Vec<ScoredSample> {
        v.iter()
            .enumerate()
            .map(|(i, &(s, l))| ScoredSample::new(format!("u{i:03}"), s, l))
            .collect()
    }

    #[test]
    fn all_positive_top() {
        let v: Vec<(f64, bool)> = (0..100).map(|i| (i as f64, i >= 95)).collect();
        let r = ppv_at_top_fraction(&units(&v), 0.05).unwrap();
        assert_eq!((r.ppv, r.k), (1.0, 5));
    }

    #[test]
    fn forty_units_pick_two() {
        let mut v: Vec<(f64, bool)> = (0..40).map(|i| (i as f64 / 100.0, false)).collect();
        v[39].1 = true; // highest
        v[10].1 = true;
        let r = ppv_at_top_fraction(&units(&v), 0.05).unwrap();
        assert_eq!(r.k, 2);
        assert_eq!(r.ppv, 0.5);
        assert_eq!(r.threshold, 0.38);
    }

    #[test]
    fn boundary_ties_use_unit_id() {
        // k = 2; three units tie at the top, the two smallest ids win.
        let mut s = units(&[(0.9, false), (0.9, true), (0.9, true), (0.1, false)]);
        s.extend(units(&[(0.0, false); 36]).into_iter().enumerate().map(|(i, mut x)| {
            x.unit_id = format!("z{i:03}");
            x
        }));
        let r = ppv_at_top_fraction(&s, 0.05).unwrap();
        assert_eq!(r.k, 2);
        assert_eq!(r.ppv, 0.5);
        let mut rev = s.clone();
        rev.reverse();
        assert_eq!(ppv_at_top_fraction(&rev, 0.05).unwrap(), r);
    }

    #[test]
    fn rejects_empty_selection() {
        assert!(ppv_at_top_fraction(&units(&[(0.3, true); 5]), 0.05).is_err());
        assert!(ppv_at_top_fraction(&units(&[(0.3, true); 5]), 1.0).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(v in proptest::collection::vec((0u8..5, any::<bool>()), 20..80), rot in 0usize..80) {
            let s = units(&v.iter().map(|&(x, l)| (x as f64, l)).collect::<Vec<_>>());
            let mut t = s.clone();
            let r = rot % t.len();
            t.rotate_left(r);
            t.reverse();
            prop_assert_eq!(ppv_at_top_fraction(&s, 0.05).unwrap(), ppv_at_top_fraction(&t, 0.05).unwrap());
        }
    }
}
