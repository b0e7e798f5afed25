//! Topic-tag registry.
//!
//! A topic tag names the payload type carried by an envelope so receivers can
//! key messages as `(round, sender, topic)`. Ring payloads are little-endian
//! `u64` arrays (128-bit circuit elements as `lo, hi` pairs); real payloads
//! are little-endian IEEE `f64` arrays.

/// Party-to-party additive share of a SecSum input (`u64` ring).
pub const SECSUM_SHARE: u16 = 0x0101;
/// Broadcast sum-share announcement (`u64` ring).
pub const SECSUM_ANNOUNCE: u16 = 0x0102;
/// PRF-mode announcement: invocation counter followed by the sum-share.
pub const SECSUM_PRF_ANNOUNCE: u16 = 0x0103;
/// One-time pairwise PRF key exchange (two `u64` words per key).
pub const SECSUM_PRF_SETUP: u16 = 0x0104;
/// Float reference path: plaintext contribution (`f64`).
pub const SUM_FLOAT: u16 = 0x0105;

/// NormedSecSum input share (`u128` ring).
pub const NSS_INPUT_SHARE: u16 = 0x0201;
/// Opening of masked values inside the circuit (`u128` ring).
pub const NSS_OPEN: u16 = 0x0202;
/// Opening of the final normalized vector (`u128` ring).
pub const NSS_OUTPUT: u16 = 0x0203;
/// Reference paths: fixed-point or float plaintext contribution.
pub const NSS_IDEAL_INPUT: u16 = 0x0204;

/// Feature-list hash agreement before PD-NMF.
pub const FEATURE_HASH: u16 = 0x0301;

/// Free-form tag for tests and examples.
pub const USER: u16 = 0x7000;

/// Payload element kind carried under a tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayloadKind {
    Ring64,
    Ring128,
    Real64,
    Opaque,
}

pub fn payload_kind(topic: u16) -> PayloadKind {
    match topic {
        SECSUM_SHARE | SECSUM_ANNOUNCE | SECSUM_PRF_ANNOUNCE | SECSUM_PRF_SETUP | FEATURE_HASH => {
            PayloadKind::Ring64
        }
        NSS_INPUT_SHARE | NSS_OPEN | NSS_OUTPUT => PayloadKind::Ring128,
        SUM_FLOAT => PayloadKind::Real64,
        _ => PayloadKind::Opaque,
    }
}
