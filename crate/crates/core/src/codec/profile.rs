use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{exponent, OutlierEntry, OutlierMap, RegularMap};
use crate::error::{bail, Result};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentProfile {
    pub map: RegularMap,
    /// In-window weights over all weights.
    pub coverage: f64,
    pub outliers: Vec<OutlierEntry>,
}

impl ExponentProfile {
    pub fn outlier_map(&self) -> OutlierMap {
        self.outliers.iter().map(|o| (o.address, o.exp_high)).collect()
    }
}

/// Regular weights covered by each window start `0..=240`. Exponents 0 and
/// 255 never count.
pub fn window_counts(weights: &[u16]) -> [u64; 241] {
    let mut hist = [0u64; 256];
    for &w in weights {
        hist[exponent(w) as usize] += 1;
    }
    hist[0] = 0;
    hist[255] = 0;
    let mut out = [0u64; 241];
    for (start, slot) in out.iter_mut().enumerate() {
        *slot = hist[start..start + 16].iter().sum();
    }
    out
}

/// Picks the 16-exponent window covering the most weights; ties go to the
/// lowest start. Starts 0 and 240 only add an exponent that never counts,
/// so they can tie but never win.
pub fn profile_exponents(weights: &[u16]) -> Result<ExponentProfile> {
    if weights.is_empty() {
        bail!(Profiling, "no weights to profile");
    }
    let counts = window_counts(weights);
    let mut best = 1usize;
    for start in 1..=239 {
        if counts[start] > counts[best] {
            best = start;
        }
    }
    let map = RegularMap::from_window(best as u8);
    let outliers = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| !map.is_regular(exponent(w)))
        .map(|(i, &w)| OutlierEntry { address: i as u64, exp_high: exponent(w) >> 4 })
        .collect();
    Ok(ExponentProfile { map, coverage: counts[best] as f64 / weights.len() as f64, outliers })
}

/// `n` BF16 weights from N(0, sigma), truncated from f32.
pub fn synthetic_gaussian_weights(n: usize, sigma: f64, seed: u64) -> Result<Vec<u16>> {
    let Ok(normal) = Normal::new(0.0f32, sigma as f32) else {
        bail!(Config, "invalid standard deviation {sigma}");
    };
    let mut rng = stream(&[tag::SYNTH_WEIGHTS, seed]);
    Ok((0..n).map(|_| (normal.sample(&mut rng).to_bits() >> 16) as u16).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(profile_exponents(&[]), Err(crate::Error::Profiling(_))));
    }

    #[test]
    fn single_exponent() {
        let w: Vec<u16> = (0..100).map(|i| (127u16 << 7) | (i % 128)).collect();
        let p = profile_exponents(&w).unwrap();
        assert_eq!(p.coverage, 1.0);
        assert_eq!(p.map.exp_min, 112);
        assert!(p.outliers.is_empty());
    }

    #[test]
    fn gaussian_coverage() {
        let w = synthetic_gaussian_weights(1_000_000, 0.02, 1).unwrap();
        let p = profile_exponents(&w).unwrap();
        assert!(p.coverage >= 0.998, "coverage {}", p.coverage);
    }

    proptest! {
        #[test]
        fn window_is_maximal(w in proptest::collection::vec(any::<u16>(), 1..300)) {
            let p = profile_exponents(&w).unwrap();
            let covered = |lo: u32| {
                w.iter().filter(|&&x| {
                    let e = exponent(x) as u32;
                    e != 0 && e != 255 && e >= lo && e <= lo + 15
                }).count()
            };
            let chosen = covered(p.map.exp_min as u32);
            prop_assert_eq!(chosen as f64 / w.len() as f64, p.coverage);
            for lo in 0..=240 {
                prop_assert!(chosen >= covered(lo));
            }
            prop_assert_eq!(p.outliers.len(), w.len() - chosen);
        }
    }
}
