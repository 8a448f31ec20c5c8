//! Split-precision BF16 codec: FP8 byte on odd DRAM rows, residual byte on
//! even rows, and per-layer exponent maps to rebuild the 8-bit exponent from
//! the 4 bits kept in the FP8 byte.

mod gate;
mod profile;

use alloc::collections::BTreeMap;
use serde::{Deserialize, Serialize};

pub use gate::{expert_precision, gate_precision, DEFAULT_THRESHOLD};
pub use profile::{profile_exponents, synthetic_gaussian_weights, window_counts, ExponentProfile};

pub const fn sign(bits: u16) -> u8 {
    (bits >> 15) as u8
}

pub const fn exponent(bits: u16) -> u8 {
    ((bits >> 7) & 0xFF) as u8
}

pub const fn mantissa(bits: u16) -> u8 {
    (bits & 0x7F) as u8
}

const fn pack(sign: u8, exp: u8, mant: u8) -> u16 {
    ((sign as u16) << 15) | ((exp as u16) << 7) | (mant as u16 & 0x7F)
}

/// `fp8 = [sign | exp_low(4) | mant_hi(3)]`, `residual = [exp_high(4) | mant_lo(4)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bf16Split {
    pub fp8: u8,
    pub residual: u8,
}

impl Bf16Split {
    pub const fn new(bits: u16) -> Self {
        let e = exponent(bits);
        let m = mantissa(bits);
        Self {
            fp8: (sign(bits) << 7) | ((e & 0xF) << 3) | (m >> 4),
            residual: ((e >> 4) << 4) | (m & 0xF),
        }
    }

    pub const fn reassemble(self) -> u16 {
        let s = self.fp8 >> 7;
        let exp = ((self.residual >> 4) << 4) | ((self.fp8 >> 3) & 0xF);
        let mant = ((self.fp8 & 0x7) << 4) | (self.residual & 0xF);
        pack(s, exp, mant)
    }

    pub const fn exp_low(self) -> u8 {
        (self.fp8 >> 3) & 0xF
    }
}

/// A 16-exponent window `[exp_min, exp_min + 15]` and the rule that rebuilds
/// the high exponent nibble from the low one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularMap {
    pub exp_min: u8,
    pub exp_max: u8,
    pub pivot: u8,
    /// High nibble for `exp_low < pivot`.
    pub high_below: u8,
    /// High nibble for `exp_low >= pivot`.
    pub high_geq: u8,
}

impl RegularMap {
    pub const fn from_window(exp_min: u8) -> Self {
        let high_geq = exp_min >> 4;
        let pivot = exp_min & 0xF;
        let high_below = if pivot == 0 { high_geq } else { high_geq + 1 };
        Self { exp_min, exp_max: exp_min.saturating_add(15), pivot, high_below, high_geq }
    }

    pub const fn reconstruct(&self, exp_low: u8) -> u8 {
        if exp_low >= self.pivot {
            self.high_geq
        } else {
            self.high_below
        }
    }

    /// Exponents 0 (zero, subnormal) and 255 (Inf, NaN) are never regular.
    pub const fn is_regular(&self, exp: u8) -> bool {
        exp != 0 && exp != 255 && exp >= self.exp_min && exp <= self.exp_max
    }
}

/// Exact high nibbles for weights outside the regular window, by address.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierMap {
    entries: BTreeMap<u64, u8>,
}

impl OutlierMap {
    pub fn insert(&mut self, address: u64, exp_high: u8) {
        self.entries.insert(address, exp_high & 0xF);
    }

    pub fn get(&self, address: u64) -> Option<u8> {
        self.entries.get(&address).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u8)> + '_ {
        self.entries.iter().map(|(&a, &h)| (a, h))
    }
}

impl FromIterator<(u64, u8)> for OutlierMap {
    fn from_iter<I: IntoIterator<Item = (u64, u8)>>(iter: I) -> Self {
        let mut m = Self::default();
        for (a, h) in iter {
            m.insert(a, h);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierEntry {
    pub address: u64,
    pub exp_high: u8,
}

/// Splits `bits`; weights outside the window also yield their true high nibble.
pub fn encode(address: u64, bits: u16, map: &RegularMap) -> (Bf16Split, Option<OutlierEntry>) {
    let split = Bf16Split::new(bits);
    let e = exponent(bits);
    let outlier = (!map.is_regular(e)).then_some(OutlierEntry { address, exp_high: e >> 4 });
    (split, outlier)
}

/// Rebuilds a BF16 value from the FP8 byte alone; the low four mantissa bits
/// come back as zero.
pub fn decode_fp8(fp8: u8, map: &RegularMap, outliers: &OutlierMap, address: u64) -> u16 {
    let exp_low = (fp8 >> 3) & 0xF;
    let high = outliers.get(address).unwrap_or_else(|| map.reconstruct(exp_low));
    pack(fp8 >> 7, (high << 4) | exp_low, (fp8 & 0x7) << 4)
}

/// Per-layer regular and outlier maps of one model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecMaps {
    pub layers: alloc::vec::Vec<(RegularMap, OutlierMap)>,
}
