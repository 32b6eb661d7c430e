//! JSON interchange format for filtration trees and ring families.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeTag {
    Binary,
    Nary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSpec {
    pub id: u64,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub parent: u64,
    pub children: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomAttrs {
    pub diag: f64,
}

/// Serialized form of a [`FiltrationTree`](super::FiltrationTree).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationSpec {
    pub mode: ModeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<usize>,
    pub leaves: Vec<LeafSpec>,
    pub splits: Vec<SplitSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<u64, AtomAttrs>,
}

impl FiltrationSpec {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// One member of a ring family, by external atom id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingSpec {
    pub outer: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<u64>,
}
