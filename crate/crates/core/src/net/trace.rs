use serde::{Deserialize, Serialize};

/// Ordered record of values announced to every party.
///
/// Only public outputs belong here (sums, normalized iterates, final
/// models); shares and party-local data never do.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableTrace {
    entries: Vec<(String, Vec<f64>)>,
}

impl ObservableTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<f64>) {
        self.entries.push((label.into(), values));
    }

    pub fn entries(&self) -> &[(String, Vec<f64>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    /// Most recent entry with the given label.
    pub fn last(&self, label: &str) -> Option<&[f64]> {
        self.entries.iter().rev().find(|(l, _)| l == label).map(|(_, v)| v.as_slice())
    }

    pub fn all(&self, label: &str) -> impl Iterator<Item = &[f64]> {
        let label = label.to_owned();
        self.entries.iter().filter(move |(l, _)| *l == label).map(|(_, v)| v.as_slice())
    }

    /// Byte encoding used for equality checks and digests: label length,
    /// label bytes, value count and little-endian IEEE values per entry.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (label, values) in &self.entries {
            out.extend_from_slice(&(label.len() as u64).to_le_bytes());
            out.extend_from_slice(label.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn extend(&mut self, other: ObservableTrace) {
        self.entries.extend(other.entries);
    }
}
