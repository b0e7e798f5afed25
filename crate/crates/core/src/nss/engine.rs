//! Evaluators for arithmetic circuits over `Z_{2^128}`.
//!
//! [`IdealEngine`] holds clear values, [`SharedEngine`] holds additive shares
//! and uses the network for every non-linear step. Both compute exact
//! results, so a circuit evaluated by either yields the same ring elements.

use std::num::Wrapping;

use super::dealer::{NssBudget, TripleStore, Word};
use crate::error::{ensure, Error, Result};
use crate::net::{decode_u128s, encode_u128s, topics, PartyHandle};

/// Largest magnitude a value may have before truncation.
pub(crate) const TRUNC_RANGE_BITS: u32 = 126;

pub(crate) trait Engine {
    /// Whether this evaluator's value carries public constants. Exactly one
    /// party's share does in the shared engine.
    fn holds_constants(&self) -> bool;

    /// Raw ring products `a_i·b_i`.
    fn mul(&mut self, a: &[Word], b: &[Word]) -> Result<Vec<Word>>;

    /// `floor(x / 2^shift)` for `|x| < 2^126`, reading `x` as signed.
    fn trunc(&mut self, x: &[Word], shift: u32) -> Result<Vec<Word>>;

    /// Reveals the values to every party.
    fn open(&mut self, x: &[Word]) -> Result<Vec<u128>>;

    /// Reveals the circuit's final output.
    fn open_output(&mut self, x: &[Word]) -> Result<Vec<u128>> {
        self.open(x)
    }

    fn constant(&self, c: i128) -> Word {
        if self.holds_constants() {
            Wrapping(c as u128)
        } else {
            Wrapping(0)
        }
    }
}

/// Triples consumed by one bitwise comparison of a `shift`-bit public value
/// against shared bits: pairwise `(less, equal)` merges up a binary tree,
/// two products per merge except at the root, where `equal` is not needed.
pub(crate) fn compare_triples(shift: u32) -> usize {
    let mut n = shift as usize;
    let mut total = 0;
    while n > 1 {
        let pairs = n / 2;
        total += if n == 2 { 1 } else { 2 * pairs };
        n -= pairs;
    }
    total
}

/// Clear-value evaluation that tallies the offline material a shared run
/// would use.
#[derive(Debug, Default)]
pub(crate) struct IdealEngine {
    pub usage: NssBudget,
}

impl Engine for IdealEngine {
    fn holds_constants(&self) -> bool {
        true
    }

    fn mul(&mut self, a: &[Word], b: &[Word]) -> Result<Vec<Word>> {
        check_pair(a, b)?;
        self.usage.triples += a.len();
        Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
    }

    fn trunc(&mut self, x: &[Word], shift: u32) -> Result<Vec<Word>> {
        check_shift(shift)?;
        self.usage.add_masks(shift, x.len());
        self.usage.triples += x.len() * compare_triples(shift);
        let offset = 1u128 << TRUNC_RANGE_BITS;
        Ok(x.iter().map(|v| Wrapping(((v.0.wrapping_add(offset)) >> shift).wrapping_sub(offset >> shift))).collect())
    }

    fn open(&mut self, x: &[Word]) -> Result<Vec<u128>> {
        Ok(x.iter().map(|v| v.0).collect())
    }
}

/// Share-holding evaluation for one party.
pub(crate) struct SharedEngine<'a> {
    net: &'a mut PartyHandle,
    store: &'a mut TripleStore,
}

impl<'a> SharedEngine<'a> {
    pub fn new(net: &'a mut PartyHandle, store: &'a mut TripleStore) -> Self {
        Self { net, store }
    }
}

impl Engine for SharedEngine<'_> {
    fn holds_constants(&self) -> bool {
        self.net.id().index() == 0
    }

    fn mul(&mut self, a: &[Word], b: &[Word]) -> Result<Vec<Word>> {
        check_pair(a, b)?;
        if a.is_empty() {
            return Ok(Vec::new());
        }
        let triples = self.store.take_triples(a.len())?;
        let mut masked: Vec<Word> = Vec::with_capacity(2 * a.len());
        for ((x, y), t) in a.iter().zip(b).zip(&triples) {
            masked.push(x - Wrapping(t.a));
            masked.push(y - Wrapping(t.b));
        }
        let opened = self.open(&masked)?;
        let lead = self.holds_constants();
        Ok(triples
            .iter()
            .zip(opened.chunks_exact(2))
            .map(|(t, de)| {
                let (d, e) = (Wrapping(de[0]), Wrapping(de[1]));
                let mut z = Wrapping(t.c) + d * Wrapping(t.b) + e * Wrapping(t.a);
                if lead {
                    z += d * e;
                }
                z
            })
            .collect())
    }

    /// Opens `x + 2^126 + r` for a dealer mask `r`, then removes `r >> shift`
    /// under shares, correcting for the wrap-around of the masked sum and for
    /// the borrow out of the low `shift` bits.
    fn trunc(&mut self, x: &[Word], shift: u32) -> Result<Vec<Word>> {
        check_shift(shift)?;
        if x.is_empty() {
            return Ok(Vec::new());
        }
        let s = shift as usize;
        let masks = self.store.take_masks(shift, x.len())?;
        let offset = self.constant(1i128 << TRUNC_RANGE_BITS);
        let masked: Vec<Word> = x.iter().zip(&masks).map(|(v, m)| v + offset + Wrapping(m.r)).collect();
        let c = self.open(&masked)?;

        // Per bit, [c_i < r_i] and [c_i == r_i]; both are linear in the
        // shared bit since c is public.
        let one = self.constant(1);
        let mut lt: Vec<Vec<Word>> = Vec::with_capacity(x.len());
        let mut eq: Vec<Vec<Word>> = Vec::with_capacity(x.len());
        for (ci, m) in c.iter().zip(&masks) {
            let (mut l, mut q) = (Vec::with_capacity(s), Vec::with_capacity(s));
            for (i, &bit) in m.bits.iter().enumerate() {
                let bit = Wrapping(bit);
                if (ci >> i) & 1 == 1 {
                    l.push(Wrapping(0));
                    q.push(bit);
                } else {
                    l.push(bit);
                    q.push(one - bit);
                }
            }
            lt.push(l);
            eq.push(q);
        }
        // Merge neighbours, low half first: lt = lt_hi + eq_hi·lt_lo and
        // eq = eq_hi·eq_lo.
        let mut n = s;
        while n > 1 {
            let pairs = n / 2;
            let root = n == 2;
            let mut lhs = Vec::new();
            let mut rhs = Vec::new();
            for e in 0..x.len() {
                for j in 0..pairs {
                    lhs.push(eq[e][2 * j + 1]);
                    rhs.push(lt[e][2 * j]);
                    if !root {
                        lhs.push(eq[e][2 * j + 1]);
                        rhs.push(eq[e][2 * j]);
                    }
                }
            }
            let prod = self.mul(&lhs, &rhs)?;
            let mut it = prod.into_iter();
            for e in 0..x.len() {
                let (mut l, mut q) = (Vec::with_capacity(n - pairs), Vec::with_capacity(n - pairs));
                for j in 0..pairs {
                    l.push(lt[e][2 * j + 1] + it.next().expect("one product per pair"));
                    q.push(if root { Wrapping(0) } else { it.next().expect("two products per pair") });
                }
                if n % 2 == 1 {
                    l.push(lt[e][n - 1]);
                    q.push(eq[e][n - 1]);
                }
                lt[e] = l;
                eq[e] = q;
            }
            n -= pairs;
        }

        let hi_offset = self.constant(1i128 << (TRUNC_RANGE_BITS - shift));
        Ok(c.iter()
            .zip(&masks)
            .zip(&lt)
            .map(|((&ci, m), borrow)| {
                let wrap = if ci >> 127 == 0 { Wrapping(m.msb) } else { Wrapping(0) };
                self.constant((ci >> shift) as i128) + wrap * Wrapping(1u128 << (128 - shift))
                    - Wrapping(m.r_hi)
                    - borrow[0]
                    - hi_offset
            })
            .collect())
    }

    fn open(&mut self, x: &[Word]) -> Result<Vec<u128>> {
        self.open_under(topics::NSS_OPEN, x)
    }

    fn open_output(&mut self, x: &[Word]) -> Result<Vec<u128>> {
        self.open_under(topics::NSS_OUTPUT, x)
    }
}

impl SharedEngine<'_> {
    fn open_under(&mut self, topic: u16, x: &[Word]) -> Result<Vec<u128>> {
        let round = self.net.next_round();
        let mine: Vec<u128> = x.iter().map(|v| v.0).collect();
        let all = self.net.all_gather(round, topic, encode_u128s(&mine))?;
        let mut total = vec![0u128; x.len()];
        for (p, payload) in all.iter().enumerate() {
            let v = decode_u128s(payload)?;
            if v.len() != x.len() {
                return Err(Error::Protocol(format!("party p{p} opened {} values, expected {}", v.len(), x.len())));
            }
            for (t, w) in total.iter_mut().zip(v) {
                *t = t.wrapping_add(w);
            }
        }
        Ok(total)
    }
}

fn check_pair(a: &[Word], b: &[Word]) -> Result<()> {
    ensure!(a.len() == b.len(), Shape, "multiplying {} values by {}", a.len(), b.len());
    Ok(())
}

fn check_shift(shift: u32) -> Result<()> {
    ensure!((1..=TRUNC_RANGE_BITS).contains(&shift), Parameter, "truncation shift {shift} outside 1..=126");
    Ok(())
}
