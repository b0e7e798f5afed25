//! Trusted-dealer offline material: Beaver triples and truncation masks.
//!
//! The dealer stands in for a cryptographic preprocessing phase. It knows
//! every secret it generates and must not take part in the online protocol.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};
use std::num::Wrapping;

use crate::error::{ensure, Error, Result};
use crate::rng::SeededRng;

pub(crate) type Word = Wrapping<u128>;

/// One party's shares of `(a, b, c)` with `c = a·b` in `Z_{2^128}`.
///
/// Triples are raw ring products; fixed-point rescaling is a separate
/// truncation step driven by [`TruncMask`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeaverTriple {
    pub a: u128,
    pub b: u128,
    pub c: u128,
}

/// One party's shares of a random mask `r` used to truncate by `shift` bits:
/// `r` itself, `r >> shift`, the top bit of `r`, and the low `shift` bits of
/// `r` one by one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncMask {
    pub shift: u32,
    pub r: u128,
    pub r_hi: u128,
    pub msb: u128,
    pub bits: Vec<u128>,
}

/// Offline material needed by a circuit, per kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NssBudget {
    pub triples: usize,
    /// Truncation masks keyed by shift.
    pub masks: BTreeMap<u32, usize>,
}

impl NssBudget {
    pub fn add_masks(&mut self, shift: u32, count: usize) {
        *self.masks.entry(shift).or_default() += count;
    }

    pub fn merge(&mut self, other: &NssBudget) {
        self.triples += other.triples;
        for (&s, &n) in &other.masks {
            self.add_masks(s, n);
        }
    }

    /// The budget for `times` repetitions.
    pub fn times(&self, times: usize) -> NssBudget {
        NssBudget {
            triples: self.triples * times,
            masks: self.masks.iter().map(|(&s, &n)| (s, n * times)).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triples == 0 && self.masks.values().all(|&n| n == 0)
    }
}

/// A party's private supply of offline material, consumed in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripleStore {
    frac_bits: u32,
    triples: VecDeque<BeaverTriple>,
    masks: BTreeMap<u32, VecDeque<TruncMask>>,
    consumed: NssBudget,
}

impl TripleStore {
    pub fn empty(frac_bits: u32) -> Self {
        Self { frac_bits, triples: VecDeque::new(), masks: BTreeMap::new(), consumed: NssBudget::default() }
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Material still available.
    pub fn remaining(&self) -> NssBudget {
        NssBudget {
            triples: self.triples.len(),
            masks: self.masks.iter().map(|(&s, q)| (s, q.len())).collect(),
        }
    }

    /// Appends `other`'s material after this store's.
    pub fn append(&mut self, mut other: TripleStore) {
        self.triples.append(&mut other.triples);
        for (shift, mut q) in other.masks {
            self.masks.entry(shift).or_default().append(&mut q);
        }
    }

    /// Material handed out so far.
    pub fn consumed(&self) -> &NssBudget {
        &self.consumed
    }

    pub(crate) fn take_triples(&mut self, n: usize) -> Result<Vec<BeaverTriple>> {
        if self.triples.len() < n {
            return Err(Error::Offline(format!(
                "need {n} Beaver triples, {} left in store",
                self.triples.len()
            )));
        }
        self.consumed.triples += n;
        Ok(self.triples.drain(..n).collect())
    }

    pub(crate) fn take_masks(&mut self, shift: u32, n: usize) -> Result<Vec<TruncMask>> {
        let have = self.masks.get(&shift).map_or(0, |q| q.len());
        if have < n {
            return Err(Error::Offline(format!("need {n} truncation masks for shift {shift}, {have} left in store")));
        }
        self.consumed.add_masks(shift, n);
        Ok(self.masks.get_mut(&shift).expect("checked above").drain(..n).collect())
    }

    /// Serializes as little-endian `u64` words: header `(f, triple count,
    /// mask group count)`, then each triple as `(a, b, c)` in `(lo, hi)`
    /// pairs, then per mask group `(shift, count)` followed by each mask's
    /// `r, r_hi, msb, bits...` in `(lo, hi)` pairs.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let mut words = vec![self.frac_bits as u64, self.triples.len() as u64, self.masks.len() as u64];
        for t in &self.triples {
            push_u128s(&mut words, &[t.a, t.b, t.c]);
        }
        for (&shift, q) in &self.masks {
            words.push(shift as u64);
            words.push(q.len() as u64);
            for m in q {
                push_u128s(&mut words, &[m.r, m.r_hi, m.msb]);
                push_u128s(&mut words, &m.bits);
            }
        }
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        w.write_all(&bytes)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::Offline(format!("reading triple store: {e}")))?;
        ensure!(bytes.len() % 8 == 0, Offline, "triple store length {} is not a multiple of 8", bytes.len());
        let words: Vec<u64> =
            bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let mut cur = WordCursor { words: &words, pos: 0 };
        let frac_bits = cur.next()? as u32;
        let n_triples = cur.next()? as usize;
        let n_groups = cur.next()? as usize;
        let mut store = TripleStore::empty(frac_bits);
        for _ in 0..n_triples {
            let (a, b, c) = (cur.next_u128()?, cur.next_u128()?, cur.next_u128()?);
            store.triples.push_back(BeaverTriple { a, b, c });
        }
        for _ in 0..n_groups {
            let shift = cur.next()? as u32;
            ensure!((1..=126).contains(&shift), Offline, "invalid truncation shift {shift} in store");
            let count = cur.next()? as usize;
            let q = store.masks.entry(shift).or_default();
            for _ in 0..count {
                let (r, r_hi, msb) = (cur.next_u128()?, cur.next_u128()?, cur.next_u128()?);
                let bits = (0..shift).map(|_| cur.next_u128()).collect::<Result<Vec<_>>>()?;
                q.push_back(TruncMask { shift, r, r_hi, msb, bits });
            }
        }
        ensure!(cur.pos == words.len(), Offline, "{} trailing words in triple store", words.len() - cur.pos);
        Ok(store)
    }
}

fn push_u128s(words: &mut Vec<u64>, values: &[u128]) {
    for &v in values {
        words.push(v as u64);
        words.push((v >> 64) as u64);
    }
}

struct WordCursor<'a> {
    words: &'a [u64],
    pos: usize,
}

impl WordCursor<'_> {
    fn next(&mut self) -> Result<u64> {
        let w = self.words.get(self.pos).copied().ok_or_else(|| Error::Offline("truncated triple store".into()))?;
        self.pos += 1;
        Ok(w)
    }

    fn next_u128(&mut self) -> Result<u128> {
        let lo = self.next()? as u128;
        let hi = self.next()? as u128;
        Ok(hi << 64 | lo)
    }
}

/// Generates `budget` worth of offline material for `parties` parties at
/// `frac_bits`, returning one store per party.
pub fn dealer_offline(budget: &NssBudget, frac_bits: u32, parties: usize, rng: &mut SeededRng) -> Result<Vec<TripleStore>> {
    ensure!(parties >= 1, Parameter, "need at least one party");
    let mut stores = vec![TripleStore::empty(frac_bits); parties];
    for _ in 0..budget.triples {
        let a = rng.next_u128();
        let b = rng.next_u128();
        let c = a.wrapping_mul(b);
        let (sa, sb, sc) = (split(a, parties, rng), split(b, parties, rng), split(c, parties, rng));
        for (p, store) in stores.iter_mut().enumerate() {
            store.triples.push_back(BeaverTriple { a: sa[p], b: sb[p], c: sc[p] });
        }
    }
    for (&shift, &count) in &budget.masks {
        ensure!((1..=126).contains(&shift), Parameter, "truncation shift must be in 1..=126, got {shift}");
        for _ in 0..count {
            let r = rng.next_u128();
            let r_hi = split(r >> shift, parties, rng);
            let msb = split(r >> 127, parties, rng);
            let rs = split(r, parties, rng);
            let bits: Vec<Vec<u128>> = (0..shift).map(|i| split((r >> i) & 1, parties, rng)).collect();
            for (p, store) in stores.iter_mut().enumerate() {
                store.masks.entry(shift).or_default().push_back(TruncMask {
                    shift,
                    r: rs[p],
                    r_hi: r_hi[p],
                    msb: msb[p],
                    bits: bits.iter().map(|b| b[p]).collect(),
                });
            }
        }
    }
    Ok(stores)
}

fn split(x: u128, parties: usize, rng: &mut SeededRng) -> Vec<u128> {
    let mut shares = vec![0u128; parties];
    let mut acc = 0u128;
    for s in shares.iter_mut().skip(1) {
        *s = rng.next_u128();
        acc = acc.wrapping_add(*s);
    }
    shares[0] = x.wrapping_sub(acc);
    shares
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> NssBudget {
        let mut b = NssBudget { triples: 50, ..Default::default() };
        b.add_masks(20, 7);
        b.add_masks(126, 2);
        b
    }

    #[test]
    fn triples_reconstruct_to_products() {
        let stores = dealer_offline(&budget(), 20, 3, &mut SeededRng::new(1, 0)).unwrap();
        for i in 0..50 {
            let sum = |f: fn(&BeaverTriple) -> u128| {
                stores.iter().fold(0u128, |acc, s| acc.wrapping_add(f(&s.triples[i])))
            };
            assert_eq!(sum(|t| t.c), sum(|t| t.a).wrapping_mul(sum(|t| t.b)));
        }
    }

    #[test]
    fn masks_are_consistent() {
        let stores = dealer_offline(&budget(), 20, 4, &mut SeededRng::new(2, 0)).unwrap();
        for shift in [20u32, 126] {
            for i in 0..stores[0].masks[&shift].len() {
                let m: Vec<&TruncMask> = stores.iter().map(|s| &s.masks[&shift][i]).collect();
                let open = |f: &dyn Fn(&TruncMask) -> u128| m.iter().fold(0u128, |a, t| a.wrapping_add(f(t)));
                let r = open(&|t| t.r);
                assert_eq!(open(&|t| t.r_hi), r >> shift);
                assert_eq!(open(&|t| t.msb), r >> 127);
                for b in 0..shift as usize {
                    assert_eq!(open(&|t| t.bits[b]), (r >> b) & 1);
                }
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let stores = dealer_offline(&budget(), 20, 2, &mut SeededRng::new(3, 0)).unwrap();
        let mut buf = Vec::new();
        stores[1].write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], &20u64.to_le_bytes());
        let back = TripleStore::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, stores[1]);
        assert!(TripleStore::read_from(&mut &buf[..buf.len() - 8]).is_err());
    }

    #[test]
    fn exhaustion_is_an_offline_error() {
        let mut store = dealer_offline(&NssBudget::default(), 20, 2, &mut SeededRng::new(4, 0)).unwrap().remove(0);
        assert!(store.remaining().is_empty());
        assert!(matches!(store.take_triples(1), Err(Error::Offline(_))));
        assert!(matches!(store.take_masks(20, 1), Err(Error::Offline(_))));
    }
}
