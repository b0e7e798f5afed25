//! Pairwise PRF share derivation.
//!
//! Party `m` and party `i` share a 128-bit key `k_mi`. For the `j`-th
//! invocation both derive the share `m` would otherwise have sent `i` as
//! `F_{k_mi}(j)`, instantiated as AES-128 over the block `(j, component)`.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;

use crate::error::{Error, Result};
use crate::net::{decode_u64s, encode_u64s, topics, PartyHandle, PartyId};

pub struct Prf {
    cipher: Aes128,
}

impl Prf {
    pub fn new(key: u128) -> Self {
        Self { cipher: Aes128::new(&GenericArray::from(key.to_le_bytes())) }
    }

    /// `len` pseudo-random ring words for invocation `counter`.
    pub fn derive(&self, counter: u64, len: usize) -> Vec<u64> {
        (0..len as u64)
            .map(|idx| {
                let mut block = [0u8; 16];
                block[..8].copy_from_slice(&counter.to_le_bytes());
                block[8..].copy_from_slice(&idx.to_le_bytes());
                let mut b = GenericArray::from(block);
                self.cipher.encrypt_block(&mut b);
                u64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
            })
            .collect()
    }
}

/// One party's pairwise keys and invocation counter.
pub struct PrfShareSchedule {
    me: PartyId,
    /// `k_{me,i}`: keys this party chose, indexed by peer.
    outgoing: Vec<Option<Prf>>,
    /// `k_{i,me}`: keys peers chose for this party.
    incoming: Vec<Option<Prf>>,
    counter: u64,
}

impl PrfShareSchedule {
    /// Builds a schedule from explicit keys (`outgoing[i] = k_{me,i}`,
    /// `incoming[i] = k_{i,me}`).
    pub fn from_keys(me: PartyId, outgoing: Vec<Option<u128>>, incoming: Vec<Option<u128>>) -> Self {
        Self {
            me,
            outgoing: outgoing.into_iter().map(|k| k.map(Prf::new)).collect(),
            incoming: incoming.into_iter().map(|k| k.map(Prf::new)).collect(),
            counter: 0,
        }
    }

    /// One-time key exchange: every party sends a fresh key to every peer.
    pub fn setup(net: &mut PartyHandle) -> Result<Self> {
        let m = net.parties();
        let me = net.id();
        let round = net.next_round();
        let mut outgoing = vec![None; m];
        let peers: Vec<PartyId> = net.peers().collect();
        for &p in &peers {
            let key = net.rng().next_u128();
            outgoing[p.index()] = Some(key);
            net.send(round, p, topics::SECSUM_PRF_SETUP, encode_u64s(&[key as u64, (key >> 64) as u64]))?;
        }
        let mut incoming = vec![None; m];
        for &p in &peers {
            let words = decode_u64s(&net.recv(round, p, topics::SECSUM_PRF_SETUP)?)?;
            if words.len() != 2 {
                return Err(Error::Protocol(format!("malformed PRF key from {p}")));
            }
            incoming[p.index()] = Some(((words[1] as u128) << 64) | words[0] as u128);
        }
        Ok(Self::from_keys(me, outgoing, incoming))
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn party(&self) -> PartyId {
        self.me
    }

    /// Overrides the counter; only useful to provoke desync in tests.
    pub fn set_counter(&mut self, counter: u64) {
        self.counter = counter;
    }

    pub(crate) fn advance(&mut self) -> u64 {
        let j = self.counter;
        self.counter += 1;
        j
    }

    pub(crate) fn outgoing(&self) -> impl Iterator<Item = &Prf> {
        self.outgoing.iter().flatten()
    }

    pub(crate) fn incoming(&self) -> impl Iterator<Item = &Prf> {
        self.incoming.iter().flatten()
    }
}
