//! NormedSecSum: parties learn `s / ‖s‖₂` for `s = Σ_m x_m` and nothing
//! about `‖s‖₂`.
//!
//! The shared-circuit backend evaluates a fixed-point circuit over additive
//! shares in `Z_{2^128}`, multiplying with Beaver triples and truncating
//! with dealer-provided masks. The ideal backend evaluates the same circuit
//! on clear values and produces bit-identical outputs. Offline material comes
//! from [`dealer_offline`], a trusted dealer that substitutes for a
//! cryptographic preprocessing phase, or for long simulations from
//! [`NssContext::simulated_dealer`].

mod circuit;
mod dealer;
mod engine;

use std::num::Wrapping;

pub use circuit::{FINAL_NEWTON_STEPS, GUARD_BITS, MAX_WORKING_BITS, NEWTON_STEPS, SQRT_CAPACITY};
pub use dealer::{dealer_offline, BeaverTriple, NssBudget, TripleStore, TruncMask};

use circuit::Circuit;
use dealer::Word;
use engine::{IdealEngine, SharedEngine};

use crate::error::{ensure, Error, Result};
use crate::net::{decode_f64s, decode_u128s, encode_f64s, encode_u128s, topics, PartyHandle};
use crate::secsum::{share, FixedPoint};
use crate::rng::SeededRng;

/// Default Babylonian iteration count.
pub const BABYLONIAN_ITERS: usize = 16;

/// Largest input magnitude accepted by the fixed-point backends.
pub const INPUT_BOUND: f64 = 256.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NssMode {
    /// Plaintext float normalization. A reference for exactness tests only;
    /// inputs travel in the clear.
    Float,
    /// The fixed-point circuit evaluated on clear values.
    Ideal,
    /// The fixed-point circuit evaluated on secret shares.
    SharedCircuit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NssBackend {
    pub mode: NssMode,
    pub frac_bits: u32,
    pub babylonian_iters: usize,
}

impl Default for NssBackend {
    fn default() -> Self {
        Self { mode: NssMode::SharedCircuit, frac_bits: 31, babylonian_iters: BABYLONIAN_ITERS }
    }
}

impl NssBackend {
    pub fn new(mode: NssMode, frac_bits: u32) -> Self {
        Self { mode, frac_bits, ..Self::default() }
    }

    /// Offline material for one batched call normalizing vectors of lengths
    /// `dims`. Zero for the float and ideal modes.
    pub fn budget(&self, dims: &[usize]) -> Result<NssBudget> {
        match self.mode {
            NssMode::SharedCircuit => Ok(self.circuit()?.budget(dims)),
            _ => Ok(NssBudget::default()),
        }
    }

    fn circuit(&self) -> Result<Circuit> {
        Circuit::new(self.frac_bits, self.babylonian_iters)
    }
}

/// A party's backend choice together with its offline material.
#[derive(Clone, Debug)]
pub struct NssContext {
    pub backend: NssBackend,
    pub store: TripleStore,
    dealer: Option<OnDemandDealer>,
}

/// Deals each call's material from a seed every party knows. Each party
/// regenerates the whole deal and keeps its own shares, so any party could
/// reconstruct the others' material: a simulation convenience for long runs
/// whose full budget would not fit in memory, not a private preprocessing.
#[derive(Clone, Copy, Debug)]
struct OnDemandDealer {
    seed: u64,
    calls: u64,
}

impl NssContext {
    pub fn new(backend: NssBackend, store: TripleStore) -> Self {
        Self { backend, store, dealer: None }
    }

    /// A context with no offline material; sufficient for the float and
    /// ideal modes.
    pub fn without_store(backend: NssBackend) -> Self {
        Self::new(backend, TripleStore::empty(backend.frac_bits))
    }

    /// A context that deals the material for every shared-circuit call just
    /// before it runs, from `seed`. All parties must use the same seed. Not
    /// private; see the module docs.
    pub fn simulated_dealer(backend: NssBackend, seed: u64) -> Self {
        Self { dealer: Some(OnDemandDealer { seed, calls: 0 }), ..Self::without_store(backend) }
    }

    fn deal(&mut self, budget: &NssBudget, parties: usize, me: usize) -> Result<()> {
        if let Some(d) = &mut self.dealer {
            let mut rng = SeededRng::new(d.seed, d.calls);
            d.calls += 1;
            let mine = dealer_offline(budget, self.store.frac_bits(), parties, &mut rng)?.swap_remove(me);
            self.store.append(mine);
        }
        Ok(())
    }
}

/// Normalizes the sum of every party's `input`, publishing the result under
/// `label`.
pub fn normed_secsum(net: &mut PartyHandle, label: &str, input: &[f64], ctx: &mut NssContext) -> Result<Vec<f64>> {
    Ok(normed_secsum_batch(net, label, &[input.to_vec()], ctx)?.remove(0))
}

/// Normalizes several sums in one circuit evaluation. Each output vector is
/// published under `label` in order.
pub fn normed_secsum_batch(
    net: &mut PartyHandle,
    label: &str,
    inputs: &[Vec<f64>],
    ctx: &mut NssContext,
) -> Result<Vec<Vec<f64>>> {
    ensure!(!inputs.is_empty(), Shape, "nothing to normalize");
    ensure!(inputs.iter().all(|v| !v.is_empty()), Shape, "cannot normalize an empty vector");
    let dims: Vec<usize> = inputs.iter().map(Vec::len).collect();
    let flat: Vec<f64> = inputs.concat();
    let out = match ctx.backend.mode {
        NssMode::Float => float_normalize(net, &flat, &dims)?,
        NssMode::Ideal => {
            let circuit = ctx.backend.circuit()?;
            let encoded = encode_inputs(&flat, circuit.f)?;
            let round = net.next_round();
            let all = net.all_gather(round, topics::NSS_IDEAL_INPUT, encode_u128s(&encoded))?;
            let mut sum = vec![Wrapping(0u128); flat.len()];
            for (p, payload) in all.iter().enumerate() {
                add_into(&mut sum, &decode_u128s(payload)?, p)?;
            }
            let raw = circuit.normalize(&mut IdealEngine::default(), &sum, &dims)?;
            decode_outputs(&raw, circuit.f)
        }
        NssMode::SharedCircuit => {
            let circuit = ctx.backend.circuit()?;
            ensure!(
                ctx.store.frac_bits() == circuit.f,
                Offline,
                "triple store was dealt for f = {}, backend uses f = {}",
                ctx.store.frac_bits(),
                circuit.f
            );
            ctx.deal(&circuit.budget(&dims), net.parties(), net.id().index())?;
            let encoded: Vec<Word> = encode_inputs(&flat, circuit.f)?.into_iter().map(Wrapping).collect();
            let mine = share_inputs(net, &encoded)?;
            let raw = circuit.normalize(&mut SharedEngine::new(net, &mut ctx.store), &mine, &dims)?;
            decode_outputs(&raw, circuit.f)
        }
    };
    let mut vectors = Vec::with_capacity(dims.len());
    let mut at = 0;
    for &d in &dims {
        let v = out[at..at + d].to_vec();
        net.publish(label, v.clone());
        vectors.push(v);
        at += d;
    }
    Ok(vectors)
}

fn float_normalize(net: &mut PartyHandle, flat: &[f64], dims: &[usize]) -> Result<Vec<f64>> {
    let round = net.next_round();
    let all = net.all_gather(round, topics::SUM_FLOAT, encode_f64s(flat))?;
    let mut sum = vec![0.0; flat.len()];
    for (p, payload) in all.iter().enumerate() {
        let v = decode_f64s(payload)?;
        ensure!(v.len() == flat.len(), Protocol, "party p{p} contributed {} values, expected {}", v.len(), flat.len());
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let mut at = 0;
    for (k, &d) in dims.iter().enumerate() {
        let part = &mut sum[at..at + d];
        let norm = crate::norm2(part);
        ensure!(norm > 0.0, Degenerate, "vector {k} of the normalized sum is zero");
        part.iter_mut().for_each(|x| *x /= norm);
        at += d;
    }
    Ok(sum)
}

/// Sends every peer a share of `encoded` and returns the sum of the shares
/// this party holds.
fn share_inputs(net: &mut PartyHandle, encoded: &[Word]) -> Result<Vec<Word>> {
    let round = net.next_round();
    let me = net.id();
    let shares = share(encoded, net.parties(), net.rng())?;
    let mut mine = Vec::new();
    for sv in shares {
        if sv.owner == me {
            mine = sv.elements;
        } else {
            let words: Vec<u128> = sv.elements.iter().map(|w| w.0).collect();
            net.send(round, sv.owner, topics::NSS_INPUT_SHARE, encode_u128s(&words))?;
        }
    }
    let peers: Vec<_> = net.peers().collect();
    for p in peers {
        let theirs = decode_u128s(&net.recv(round, p, topics::NSS_INPUT_SHARE)?)?;
        add_into(&mut mine, &theirs, p.index())?;
    }
    Ok(mine)
}

fn add_into(acc: &mut [Word], values: &[u128], party: usize) -> Result<()> {
    if values.len() != acc.len() {
        return Err(Error::Protocol(format!(
            "party p{party} contributed {} values, expected {}",
            values.len(),
            acc.len()
        )));
    }
    for (a, &v) in acc.iter_mut().zip(values) {
        *a += Wrapping(v);
    }
    Ok(())
}

fn encode_inputs(xs: &[f64], f: u32) -> Result<Vec<u128>> {
    let scale = (1u64 << f) as f64;
    xs.iter()
        .map(|&x| {
            ensure!(x.is_finite(), Domain, "non-finite input {x}");
            ensure!(x.abs() <= INPUT_BOUND, Range, "|{x}| exceeds the input bound {INPUT_BOUND}");
            Ok((x * scale).round() as i128 as u128)
        })
        .collect()
}

fn decode_outputs(raw: &[u128], f: u32) -> Vec<f64> {
    let scale = (1u64 << f) as f64;
    raw.iter().map(|&r| r as i128 as f64 / scale).collect()
}

/// Fixed-point square root by the same branch-free circuit the protocol
/// uses, with [`BABYLONIAN_ITERS`] iterations.
pub fn fixed_sqrt(s: FixedPoint) -> Result<FixedPoint> {
    fixed_sqrt_with(s, BABYLONIAN_ITERS)
}

pub fn fixed_sqrt_with(s: FixedPoint, iters: usize) -> Result<FixedPoint> {
    let circuit = Circuit::exact(s.frac_bits, iters)?;
    let v = s.raw.0 as i64;
    ensure!(v >= 0, Domain, "square root of negative value {}", s.to_f64());
    ensure!(s.to_f64() <= SQRT_CAPACITY, Range, "{} exceeds the square root capacity {SQRT_CAPACITY}", s.to_f64());
    let (x, _, _) = circuit.sqrt(&mut IdealEngine::default(), &[Wrapping(v as u128)])?;
    Ok(FixedPoint { raw: Wrapping(x[0].0 as u64), frac_bits: s.frac_bits })
}
