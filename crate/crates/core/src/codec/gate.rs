use crate::error::{bail, Result};
use crate::memory::Precision;

pub const DEFAULT_THRESHOLD: f64 = 0.45;

/// FP8 strictly below `threshold`; shared experts always stay BF16.
pub fn gate_precision(score: f64, threshold: f64, shared: bool) -> Result<Precision> {
    if !(0.0..=1.0).contains(&score) {
        bail!(Contract, "normalized score {score} outside [0, 1]");
    }
    Ok(if !shared && score < threshold { Precision::Fp8 } else { Precision::Bf16 })
}

/// Fetch precision of an expert serving several tokens in one step: FP8 only
/// when every token gates to FP8.
pub fn expert_precision(scores: &[f64], threshold: f64, shared: bool) -> Result<Precision> {
    let mut out = Precision::Fp8;
    for &s in scores {
        if gate_precision(s, threshold, shared)? == Precision::Bf16 {
            out = Precision::Bf16;
        }
    }
    if scores.is_empty() && shared {
        out = Precision::Bf16;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary() {
        assert_eq!(gate_precision(0.44, DEFAULT_THRESHOLD, false).unwrap(), Precision::Fp8);
        assert_eq!(gate_precision(0.45, DEFAULT_THRESHOLD, false).unwrap(), Precision::Bf16);
        assert_eq!(gate_precision(1.0, DEFAULT_THRESHOLD, false).unwrap(), Precision::Bf16);
        assert_eq!(gate_precision(0.0, DEFAULT_THRESHOLD, true).unwrap(), Precision::Bf16);
        assert_eq!(gate_precision(0.0, 0.0, false).unwrap(), Precision::Bf16);
        assert!(matches!(gate_precision(1.5, 0.45, false), Err(crate::Error::Contract(_))));
        assert!(gate_precision(f64::NAN, 0.45, false).is_err());
    }

    #[test]
    fn all_or_nothing() {
        assert_eq!(expert_precision(&[0.1, 0.2], 0.45, false).unwrap(), Precision::Fp8);
        assert_eq!(expert_precision(&[0.1, 0.9], 0.45, false).unwrap(), Precision::Bf16);
        assert_eq!(expert_precision(&[0.1], 0.45, true).unwrap(), Precision::Bf16);
    }
}
