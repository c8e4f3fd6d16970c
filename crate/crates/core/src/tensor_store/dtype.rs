//! Storage dtypes and their little-endian codecs.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dtype {
    F64,
    F32,
    F16,
    BF16,
}

impl Dtype {
    pub const fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
            Dtype::F16 | Dtype::BF16 => 2,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Dtype::F64 => "F64",
            Dtype::F32 => "F32",
            Dtype::F16 => "F16",
            Dtype::BF16 => "BF16",
        }
    }

    /// Decodes a little-endian payload into `f64` values. `bytes.len()` must be a multiple of
    /// [`Dtype::size`].
    pub fn decode(self, bytes: &[u8]) -> Vec<f64> {
        match self {
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F16 => bytes
                .chunks_exact(2)
                .map(|c| f16_to_f64(u16::from_le_bytes([c[0], c[1]])))
                .collect(),
            Dtype::BF16 => bytes
                .chunks_exact(2)
                .map(|c| bf16_to_f64(u16::from_le_bytes([c[0], c[1]])))
                .collect(),
        }
    }

    /// Encodes values with round-to-nearest-even, appending little-endian bytes to `out`.
    pub fn encode_into(self, values: &[f64], out: &mut Vec<u8>) {
        out.reserve(values.len() * self.size());
        for &v in values {
            match self {
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                // `as f32` is IEEE round-to-nearest-even.
                Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F16 => out.extend_from_slice(&f64_to_f16(v).to_le_bytes()),
                Dtype::BF16 => out.extend_from_slice(&f64_to_bf16(v).to_le_bytes()),
            }
        }
    }

    /// Value after a round trip through this dtype.
    pub fn quantize(self, v: f64) -> f64 {
        match self {
            Dtype::F64 => v,
            Dtype::F32 => v as f32 as f64,
            Dtype::F16 => f16_to_f64(f64_to_f16(v)),
            Dtype::BF16 => bf16_to_f64(f64_to_bf16(v)),
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dtype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F64" => Ok(Dtype::F64),
            "F32" => Ok(Dtype::F32),
            "F16" => Ok(Dtype::F16),
            "BF16" => Ok(Dtype::BF16),
            other => Err(other.to_string()),
        }
    }
}

// binary16: 5 exponent bits, 10 mantissa bits. bfloat16: 8 exponent bits, 7 mantissa bits.
const F16_LAYOUT: (u32, u32) = (5, 10);
const BF16_LAYOUT: (u32, u32) = (8, 7);

pub fn f64_to_f16(v: f64) -> u16 {
    encode_small(v, F16_LAYOUT.0, F16_LAYOUT.1) as u16
}

pub fn f64_to_bf16(v: f64) -> u16 {
    encode_small(v, BF16_LAYOUT.0, BF16_LAYOUT.1) as u16
}

pub fn f16_to_f64(bits: u16) -> f64 {
    decode_small(bits as u32, F16_LAYOUT.0, F16_LAYOUT.1)
}

pub fn bf16_to_f64(bits: u16) -> f64 {
    decode_small(bits as u32, BF16_LAYOUT.0, BF16_LAYOUT.1)
}

fn decode_small(bits: u32, exp_bits: u32, man_bits: u32) -> f64 {
    let sign = if bits >> (exp_bits + man_bits) & 1 == 1 {
        -1.0
    } else {
        1.0
    };
    let exp_mask = (1u32 << exp_bits) - 1;
    let e = (bits >> man_bits) & exp_mask;
    let m = bits & ((1u32 << man_bits) - 1);
    let bias = (1i32 << (exp_bits - 1)) - 1;
    if e == exp_mask {
        return if m == 0 {
            sign * f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let (mant, exp) = if e == 0 {
        (m as f64, 1 - bias - man_bits as i32)
    } else {
        (
            (m | (1 << man_bits)) as f64,
            e as i32 - bias - man_bits as i32,
        )
    };
    sign * mant * 2f64.powi(exp)
}

/// Rounds an `f64` to a narrower IEEE-style binary format, round-to-nearest-even on the full
/// 53-bit significand, with gradual underflow and overflow to infinity.
fn encode_small(v: f64, exp_bits: u32, man_bits: u32) -> u32 {
    let bits = v.to_bits();
    let sign = ((bits >> 63) as u32) << (exp_bits + man_bits);
    let exp_max = (1u32 << exp_bits) - 1;
    if v.is_nan() {
        return sign | (exp_max << man_bits) | (1 << (man_bits - 1));
    }
    if v.is_infinite() {
        return sign | (exp_max << man_bits);
    }
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if raw_exp == 0 && frac == 0 {
        return sign;
    }
    // |v| = mant · 2^exp with mant a 53-bit integer.
    let (mant, exp) = if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    };
    let bias = (1i32 << (exp_bits - 1)) - 1;
    let top = exp + 63 - mant.leading_zeros() as i32;
    let quantum = top.max(1 - bias) - man_bits as i32;
    let shift = quantum - exp;
    let mut n: u64 = if shift <= 0 {
        mant << (-shift) as u32
    } else if shift >= 64 {
        0
    } else {
        let kept = mant >> shift;
        let rem = mant & ((1u64 << shift) - 1);
        let half = 1u64 << (shift - 1);
        if rem > half || (rem == half && kept & 1 == 1) {
            kept + 1
        } else {
            kept
        }
    };
    let mut q = quantum;
    if n >> (man_bits + 1) != 0 {
        n >>= 1;
        q += 1;
    }
    if n < (1u64 << man_bits) {
        return sign | n as u32;
    }
    let biased = q + man_bits as i32 + bias;
    if biased >= exp_max as i32 {
        return sign | (exp_max << man_bits);
    }
    sign | ((biased as u32) << man_bits) | (n as u32 & ((1 << man_bits) - 1))
}
