//! M-out-of-M additive secret sharing.

use std::num::Wrapping;

use super::ring::RingWord;
use crate::error::{ensure, Result};
use crate::net::PartyId;
use crate::rng::SeededRng;

/// One party's additive share of a vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareVector<R = u64> {
    pub owner: PartyId,
    pub elements: Vec<Wrapping<R>>,
}

/// Splits `secret` into `parties` shares that sum to it componentwise.
///
/// Shares for parties `1..M` are uniform; party 0 receives the correction
/// term, so any proper subset of shares is uniform and independent of the
/// secret.
pub fn share<R>(secret: &[Wrapping<R>], parties: usize, rng: &mut SeededRng) -> Result<Vec<ShareVector<R>>>
where
    R: RingWord,
    Wrapping<R>: std::ops::Add<Output = Wrapping<R>> + std::ops::Sub<Output = Wrapping<R>>,
{
    ensure!(parties >= 1, Parameter, "need at least one party");
    let mut out: Vec<ShareVector<R>> = (0..parties)
        .map(|p| ShareVector { owner: PartyId(p as u16), elements: Vec::with_capacity(secret.len()) })
        .collect();
    for &x in secret {
        let mut acc = Wrapping(R::ZERO);
        for sv in out.iter_mut().skip(1) {
            let r = Wrapping(R::random(rng));
            acc = acc + r;
            sv.elements.push(r);
        }
        out[0].elements.push(x - acc);
    }
    Ok(out)
}

/// Componentwise wrapping sum of all shares.
pub fn reconstruct<R>(shares: &[ShareVector<R>]) -> Result<Vec<Wrapping<R>>>
where
    R: RingWord,
    Wrapping<R>: std::ops::Add<Output = Wrapping<R>> + std::ops::Sub<Output = Wrapping<R>>,
{
    ensure!(!shares.is_empty(), Shape, "no shares to reconstruct");
    let dim = shares[0].elements.len();
    ensure!(
        shares.iter().all(|s| s.elements.len() == dim),
        Shape,
        "share vectors have differing dimensions"
    );
    Ok((0..dim)
        .map(|i| shares.iter().fold(Wrapping(R::ZERO), |acc, s| acc + s.elements[i]))
        .collect())
}
