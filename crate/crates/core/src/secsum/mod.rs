//! Additive secret sharing over `Z_{2^64}` and the SecSum protocol.

mod prf;
mod protocol;
mod ring;
mod sharing;

pub use prf::{Prf, PrfShareSchedule};
pub use protocol::{float_sum, secsum, secsum_prf, secure_sum, SumPath};
pub use ring::{FixedCodec, FixedPoint, RingElem, RingWord};
pub use sharing::{reconstruct, share, ShareVector};
