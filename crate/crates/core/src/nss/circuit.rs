//! The normalization circuit: sum of squares, Babylonian square root with a
//! branch-free decade guess, Newton reciprocal, and rescaling.

use std::num::Wrapping;

use super::dealer::{NssBudget, Word};
use super::engine::{compare_triples, Engine, TRUNC_RANGE_BITS};
use crate::error::{ensure, Error, Result};

/// Newton reciprocal refinements inside each Babylonian iteration.
pub const NEWTON_STEPS: usize = 2;
/// Extra reciprocal refinements before the final division.
pub const FINAL_NEWTON_STEPS: usize = 2;
/// Largest argument the square root is specified for.
pub const SQRT_CAPACITY: f64 = 4.0;
/// Extra fractional bits the square root and reciprocal carry beyond the
/// input precision, capped at [`MAX_WORKING_BITS`].
pub const GUARD_BITS: u32 = 20;
pub const MAX_WORKING_BITS: u32 = 40;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Circuit {
    /// Fractional bits of inputs and outputs.
    pub f: u32,
    /// Fractional bits of the norm, its square and its reciprocal.
    pub g: u32,
    pub iters: usize,
}

/// One decade boundary `10^j` with the guess increments it switches on.
struct Decade {
    threshold: i128,
    guess_step: i128,
    recip_step: i128,
}

impl Circuit {
    /// The normalization circuit for `f`-bit inputs.
    pub fn new(f: u32, iters: usize) -> Result<Self> {
        let c = Self::exact(f, iters)?;
        Ok(Self { g: (f + GUARD_BITS).min(MAX_WORKING_BITS), ..c })
    }

    /// A circuit whose square root works at the input precision.
    pub fn exact(f: u32, iters: usize) -> Result<Self> {
        ensure!((4..=MAX_WORKING_BITS).contains(&f), Parameter, "fractional bits must be in 4..={MAX_WORKING_BITS}, got {f}");
        ensure!(iters >= 1, Parameter, "need at least one Babylonian iteration");
        Ok(Self { f, g: f, iters })
    }

    fn one(&self) -> i128 {
        1i128 << self.g
    }

    fn raw(&self, x: f64) -> i128 {
        (x * self.one() as f64).round() as i128
    }

    /// Initial guess for `S` in `[10^j, 10^{j+1})`: writing `S = a·10^{2n}`
    /// with `1 <= a < 100`, the guess is `2·10^n` if `a < 10`, else `6·10^n`.
    fn decade_guess(j: i32) -> f64 {
        let n = j.div_euclid(2);
        let lead = if j.rem_euclid(2) == 0 { 2.0 } else { 6.0 };
        lead * 10f64.powi(n)
    }

    /// Representable thresholds from the smallest positive decade to the
    /// capacity, and the guess pair used below the first one.
    fn decades(&self) -> (i128, i128, Vec<Decade>) {
        let mut j = 0;
        while self.raw(10f64.powi(j - 1)) >= 1 {
            j -= 1;
        }
        let lowest = j;
        let base = Self::decade_guess(lowest - 1);
        let mut out = Vec::new();
        let mut prev = base;
        while 10f64.powi(j) <= SQRT_CAPACITY {
            let g = Self::decade_guess(j);
            out.push(Decade {
                threshold: self.raw(10f64.powi(j)),
                guess_step: self.raw(g) - self.raw(prev),
                recip_step: self.raw(1.0 / g) - self.raw(1.0 / prev),
            });
            prev = g;
            j += 1;
        }
        (self.raw(base), self.raw(1.0 / base), out)
    }

    /// Rounded fixed-point product; the result has the precision of `a`
    /// when `b` carries `g` fractional bits.
    fn mul_fx<E: Engine>(&self, e: &mut E, a: &[Word], b: &[Word]) -> Result<Vec<Word>> {
        let half = e.constant(1i128 << (self.g - 1));
        let p: Vec<Word> = e.mul(a, b)?.into_iter().map(|v| v + half).collect();
        e.trunc(&p, self.g)
    }

    /// `y <- y·(2 − x·y)`.
    fn newton<E: Engine>(&self, e: &mut E, x: &[Word], y: &[Word]) -> Result<Vec<Word>> {
        let two = e.constant(2 * self.one());
        let t = self.mul_fx(e, x, y)?;
        let u: Vec<Word> = t.into_iter().map(|t| two - t).collect();
        self.mul_fx(e, y, &u)
    }

    /// `[q >= t]` for each pair, as 0/1 ring values.
    fn at_least<E: Engine>(&self, e: &mut E, q: &[Word], t: &[i128]) -> Result<Vec<Word>> {
        let diff: Vec<Word> = q.iter().zip(t).map(|(&q, &t)| q - e.constant(t)).collect();
        let one = e.constant(1);
        Ok(e.trunc(&diff, TRUNC_RANGE_BITS)?.into_iter().map(|v| one + v).collect())
    }

    /// Square roots of `q` plus a reciprocal estimate of the last iterate
    /// and the indicator `[q > 0]`.
    pub fn sqrt<E: Engine>(&self, e: &mut E, q: &[Word]) -> Result<(Vec<Word>, Vec<Word>, Vec<Word>)> {
        let (base_g, base_y, decades) = self.decades();
        let per = decades.len() + 1;
        let mut lhs = Vec::with_capacity(q.len() * per);
        let mut thresholds = Vec::with_capacity(q.len() * per);
        for &v in q {
            lhs.push(v);
            thresholds.push(1);
            for d in &decades {
                lhs.push(v);
                thresholds.push(d.threshold);
            }
        }
        let bits = self.at_least(e, &lhs, &thresholds)?;
        let mut nz = Vec::with_capacity(q.len());
        let mut x = Vec::with_capacity(q.len());
        let mut y = Vec::with_capacity(q.len());
        for chunk in bits.chunks_exact(per) {
            nz.push(chunk[0]);
            let mut g = e.constant(base_g);
            let mut r = e.constant(base_y);
            for (b, d) in chunk[1..].iter().zip(&decades) {
                g += b * Wrapping(d.guess_step as u128);
                r += b * Wrapping(d.recip_step as u128);
            }
            x.push(g);
            y.push(r);
        }
        let shift_up = Wrapping(self.one() as u128);
        for _ in 0..self.iters {
            for _ in 0..NEWTON_STEPS {
                y = self.newton(e, &x, &y)?;
            }
            let round = e.constant(self.one());
            let p: Vec<Word> =
                e.mul(q, &y)?.into_iter().zip(&x).map(|(qy, &x)| qy + x * shift_up + round).collect();
            x = e.trunc(&p, self.g + 1)?;
        }
        let x = e.mul(&nz, &x)?;
        Ok((x, y, nz))
    }

    /// Normalizes each of the vectors laid end to end in `s` (lengths
    /// `dims`) and opens the results. Fails with a degenerate-input error,
    /// revealing only that fact, if any vector is zero.
    pub fn normalize<E: Engine>(&self, e: &mut E, s: &[Word], dims: &[usize]) -> Result<Vec<u128>> {
        ensure!(dims.iter().sum::<usize>() == s.len(), Shape, "dims do not cover the input");
        let sq = e.mul(s, s)?;
        let mut sums = Vec::with_capacity(dims.len());
        let mut at = 0;
        for &d in dims {
            sums.push(sq[at..at + d].iter().fold(Wrapping(0), |acc, v| acc + v));
            at += d;
        }
        let q = if 2 * self.f > self.g {
            let half = e.constant(1i128 << (2 * self.f - self.g - 1));
            let rounded: Vec<Word> = sums.into_iter().map(|v| v + half).collect();
            e.trunc(&rounded, 2 * self.f - self.g)?
        } else {
            let up = Wrapping(1u128 << (self.g - 2 * self.f));
            sums.into_iter().map(|v| v * up).collect()
        };
        let (n, mut y, nz) = self.sqrt(e, &q)?;
        let nonzero = e.open(&nz)?;
        if let Some(k) = nonzero.iter().position(|&b| b != 1) {
            return Err(Error::Degenerate(format!("vector {k} of the normalized sum is zero")));
        }
        for _ in 0..FINAL_NEWTON_STEPS {
            y = self.newton(e, &n, &y)?;
        }
        let spread: Vec<Word> = dims.iter().zip(&y).flat_map(|(&d, &r)| std::iter::repeat_n(r, d)).collect();
        let out = self.mul_fx(e, s, &spread)?;
        e.open_output(&out)
    }

    /// Offline material one [`Circuit::normalize`] call consumes.
    pub fn budget(&self, dims: &[usize]) -> NssBudget {
        let k = dims.len();
        let total: usize = dims.iter().sum();
        let per_decade = self.decades().2.len() + 1;
        let tf = compare_triples(self.g);
        let mut b = NssBudget::default();
        let mul_fx = |b: &mut NssBudget, n: usize| {
            b.triples += n * (1 + tf);
            b.add_masks(self.g, n);
        };
        b.triples += total;
        if 2 * self.f > self.g {
            b.triples += k * compare_triples(2 * self.f - self.g);
            b.add_masks(2 * self.f - self.g, k);
        }
        b.add_masks(TRUNC_RANGE_BITS, k * per_decade);
        b.triples += k * per_decade * compare_triples(TRUNC_RANGE_BITS);
        for _ in 0..self.iters {
            for _ in 0..NEWTON_STEPS {
                mul_fx(&mut b, 2 * k);
            }
            b.triples += k * (1 + compare_triples(self.g + 1));
            b.add_masks(self.g + 1, k);
        }
        b.triples += k;
        for _ in 0..FINAL_NEWTON_STEPS {
            mul_fx(&mut b, 2 * k);
        }
        mul_fx(&mut b, total);
        b
    }
}
