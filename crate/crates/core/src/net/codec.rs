//! Little-endian payload encoding.

use crate::error::{ensure, Result};

pub fn encode_u64s(values: &[u64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_u64s(bytes: &[u8]) -> Result<Vec<u64>> {
    ensure!(bytes.len() % 8 == 0, Protocol, "payload of {} bytes is not a u64 array", bytes.len());
    Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub fn encode_f64s(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    ensure!(bytes.len() % 8 == 0, Protocol, "payload of {} bytes is not an f64 array", bytes.len());
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

/// 128-bit elements as `(lo, hi)` little-endian word pairs.
pub fn encode_u128s(values: &[u128]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|v| {
            let mut b = [0u8; 16];
            b[..8].copy_from_slice(&(*v as u64).to_le_bytes());
            b[8..].copy_from_slice(&((*v >> 64) as u64).to_le_bytes());
            b
        })
        .collect()
}

pub fn decode_u128s(bytes: &[u8]) -> Result<Vec<u128>> {
    ensure!(bytes.len() % 16 == 0, Protocol, "payload of {} bytes is not a u128 array", bytes.len());
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let lo = u64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let hi = u64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            ((hi as u128) << 64) | lo as u128
        })
        .collect())
}
