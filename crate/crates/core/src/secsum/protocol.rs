//! The SecSum protocol and its reference float path.

use std::num::Wrapping;

use super::prf::PrfShareSchedule;
use super::ring::{FixedCodec, RingElem};
use super::sharing::share;
use crate::error::{Error, Result};
use crate::net::{decode_f64s, decode_u64s, encode_f64s, encode_u64s, topics, PartyHandle};

/// How a sum is computed across parties.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SumPath {
    /// Plaintext float contributions summed in party order. Exact reference
    /// for equivalence testing; provides no privacy.
    Float,
    /// Additive secret sharing over `Z_{2^64}` fixed point.
    Fixed(FixedCodec),
}

/// Sums `input` across parties using `path`, publishing the result under
/// `label`.
pub fn secure_sum(net: &mut PartyHandle, label: &str, input: &[f64], path: &SumPath) -> Result<Vec<f64>> {
    match path {
        SumPath::Float => float_sum(net, label, input),
        SumPath::Fixed(codec) => secsum(net, label, input, codec),
    }
}

/// Reference path: every party broadcasts its contribution in the clear.
pub fn float_sum(net: &mut PartyHandle, label: &str, input: &[f64]) -> Result<Vec<f64>> {
    let round = net.next_round();
    let all = net.all_gather(round, topics::SUM_FLOAT, encode_f64s(input))?;
    let mut total = vec![0.0; input.len()];
    for (p, payload) in all.iter().enumerate() {
        let v = decode_f64s(payload)?;
        check_len(p, v.len(), input.len())?;
        for (t, x) in total.iter_mut().zip(&v) {
            *t += x;
        }
    }
    net.publish(label, total.clone());
    Ok(total)
}

/// SecSum: each party secret-shares its fixed-point input, adds the shares
/// it holds and announces that sum-share; the announcements sum to the
/// total. Envelopes carry only uniform shares and sum-shares.
pub fn secsum(net: &mut PartyHandle, label: &str, input: &[f64], codec: &FixedCodec) -> Result<Vec<f64>> {
    codec.check_sum(net.parties())?;
    let encoded = codec.encode_slice(input)?;
    let round = net.next_round();
    let me = net.id();
    let shares = share(&encoded, net.parties(), net.rng())?;
    let peers: Vec<_> = net.peers().collect();
    let mut mine = Vec::new();
    for sv in shares {
        if sv.owner == me {
            mine = sv.elements;
        } else {
            net.send(round, sv.owner, topics::SECSUM_SHARE, encode_ring(&sv.elements))?;
        }
    }
    for &p in &peers {
        let theirs = decode_u64s(&net.recv(round, p, topics::SECSUM_SHARE)?)?;
        check_len(p.index(), theirs.len(), input.len())?;
        for (m, t) in mine.iter_mut().zip(theirs) {
            *m += Wrapping(t);
        }
    }
    let total = announce(net, round, topics::SECSUM_ANNOUNCE, &mine, None)?;
    let out = codec.decode_slice(&total);
    net.publish(label, out.clone());
    Ok(out)
}

/// SecSum with pairwise PRF-derived shares: one announcement per party per
/// invocation and no share messages.
pub fn secsum_prf(
    net: &mut PartyHandle,
    label: &str,
    input: &[f64],
    codec: &FixedCodec,
    schedule: &mut PrfShareSchedule,
) -> Result<Vec<f64>> {
    codec.check_sum(net.parties())?;
    if schedule.party() != net.id() {
        return Err(Error::Protocol(format!("schedule belongs to {}, not {}", schedule.party(), net.id())));
    }
    let mut mine = codec.encode_slice(input)?;
    let j = schedule.advance();
    for prf in schedule.outgoing() {
        for (m, r) in mine.iter_mut().zip(prf.derive(j, input.len())) {
            *m -= Wrapping(r);
        }
    }
    for prf in schedule.incoming() {
        for (m, r) in mine.iter_mut().zip(prf.derive(j, input.len())) {
            *m += Wrapping(r);
        }
    }
    let round = net.next_round();
    let total = announce(net, round, topics::SECSUM_PRF_ANNOUNCE, &mine, Some(j))?;
    let out = codec.decode_slice(&total);
    net.publish(label, out.clone());
    Ok(out)
}

fn announce(net: &mut PartyHandle, round: u64, topic: u16, mine: &[RingElem], counter: Option<u64>) -> Result<Vec<RingElem>> {
    let mut words: Vec<u64> = counter.into_iter().collect();
    words.extend(mine.iter().map(|w| w.0));
    let all = net.all_gather(round, topic, encode_u64s(&words))?;
    let mut total = vec![Wrapping(0u64); mine.len()];
    for (p, payload) in all.iter().enumerate() {
        let mut w = decode_u64s(payload)?;
        if let Some(j) = counter {
            let theirs = if w.is_empty() { None } else { Some(w.remove(0)) };
            if theirs != Some(j) {
                return Err(Error::Protocol(format!(
                    "PRF counter desync: party p{p} is at {theirs:?}, expected {j}"
                )));
            }
        }
        check_len(p, w.len(), mine.len())?;
        for (t, x) in total.iter_mut().zip(w) {
            *t += Wrapping(x);
        }
    }
    Ok(total)
}

fn encode_ring(v: &[RingElem]) -> Vec<u8> {
    encode_u64s(&v.iter().map(|w| w.0).collect::<Vec<_>>())
}

fn check_len(party: usize, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Protocol(format!("party p{party} contributed {got} values, expected {want}")));
    }
    Ok(())
}
