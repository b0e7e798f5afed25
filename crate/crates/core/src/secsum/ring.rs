//! Ring elements and fixed-point encoding.

use std::num::Wrapping;

use crate::error::{ensure, Error, Result};
use crate::rng::SeededRng;

/// Element of `Z_L` with `L = 2^64`; arithmetic wraps.
pub type RingElem = Wrapping<u64>;

/// Unsigned machine words usable as a ring `Z_{2^bits}`.
pub trait RingWord: Copy + Eq + std::fmt::Debug + Send + Sync + 'static
where
    Wrapping<Self>: std::ops::Add<Output = Wrapping<Self>> + std::ops::Sub<Output = Wrapping<Self>>,
{
    const ZERO: Self;
    fn random(rng: &mut SeededRng) -> Self;
}

macro_rules! ring_word {
    ($($t:ty),*) => {$(
        impl RingWord for $t {
            const ZERO: Self = 0;
            fn random(rng: &mut SeededRng) -> Self {
                rng.next_u128() as $t
            }
        }
    )*};
}
ring_word!(u8, u16, u32, u64, u128);

/// A ring element read as two's-complement fixed point with `frac_bits`
/// fractional bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedPoint {
    pub raw: RingElem,
    pub frac_bits: u32,
}

impl FixedPoint {
    pub fn to_f64(self) -> f64 {
        self.raw.0 as i64 as f64 / (1u64 << self.frac_bits) as f64
    }
}

/// Encoder between reals and `Z_{2^64}` fixed point, guarded by a declared
/// magnitude bound.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FixedCodec {
    pub frac_bits: u32,
    /// Largest magnitude any encoded input may have.
    pub bound: f64,
}

impl FixedCodec {
    pub fn new(frac_bits: u32, bound: f64) -> Result<Self> {
        ensure!(frac_bits < 62, Parameter, "at most 61 fractional bits fit a 64-bit ring, got {frac_bits}");
        ensure!(bound.is_finite() && bound > 0.0, Parameter, "bound must be positive, got {bound}");
        let codec = Self { frac_bits, bound };
        ensure!(
            bound < codec.capacity(),
            Range,
            "bound {bound} exceeds capacity {} at {frac_bits} fractional bits",
            codec.capacity()
        );
        Ok(codec)
    }

    /// Largest magnitude representable: `2^(63 - f)`.
    pub fn capacity(&self) -> f64 {
        2f64.powi(63 - self.frac_bits as i32)
    }

    pub fn scale(&self) -> f64 {
        2f64.powi(self.frac_bits as i32)
    }

    /// Checks that a sum of `terms` bounded inputs cannot wrap.
    pub fn check_sum(&self, terms: usize) -> Result<()> {
        ensure!(
            self.bound * (terms as f64) < self.capacity(),
            Range,
            "sum of {terms} values bounded by {} can overflow {} fractional bits",
            self.bound,
            self.frac_bits
        );
        Ok(())
    }

    pub fn encode(&self, x: f64) -> Result<FixedPoint> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("cannot encode non-finite value {x}")));
        }
        ensure!(x.abs() <= self.bound, Range, "|{x}| exceeds declared bound {}", self.bound);
        let raw = (x * self.scale()).round() as i64;
        Ok(FixedPoint { raw: Wrapping(raw as u64), frac_bits: self.frac_bits })
    }

    pub fn encode_slice(&self, xs: &[f64]) -> Result<Vec<RingElem>> {
        xs.iter().map(|&x| self.encode(x).map(|f| f.raw)).collect()
    }

    pub fn decode(&self, r: RingElem) -> f64 {
        FixedPoint { raw: r, frac_bits: self.frac_bits }.to_f64()
    }

    pub fn decode_slice(&self, rs: &[RingElem]) -> Vec<f64> {
        rs.iter().map(|&r| self.decode(r)).collect()
    }
}
