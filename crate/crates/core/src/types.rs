use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The six activity classes, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Activity {
    Cleaning,
    Climbing,
    FloorWork,
    Painting,
    Walking,
    HandsUp,
}

impl Activity {
    pub const COUNT: usize = 6;

    pub const ALL: [Activity; Activity::COUNT] = [
        Activity::Cleaning,
        Activity::Climbing,
        Activity::FloorWork,
        Activity::Painting,
        Activity::Walking,
        Activity::HandsUp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Activity> {
        Activity::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Activity::Cleaning => "Cleaning",
            Activity::Climbing => "Climbing",
            Activity::FloorWork => "FloorWork",
            Activity::Painting => "Painting",
            Activity::Walking => "Walking",
            Activity::HandsUp => "HandsUp",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Activity::ALL
            .into_iter()
            .find(|a| a.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Parameter(format!("unknown activity label {s:?}")))
    }
}

/// Opaque subject identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub String);

impl SubjectId {
    pub fn new(id: impl Into<String>) -> Self {
        SubjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SubjectId {
    fn from(s: &str) -> Self {
        SubjectId(s.to_owned())
    }
}

/// Where an acceleration track came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RealImu,
    VideoDerived,
    Generated,
}

impl Provenance {
    pub fn code(self) -> u8 {
        match self {
            Provenance::RealImu => 0,
            Provenance::VideoDerived => 1,
            Provenance::Generated => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Provenance> {
        match code {
            0 => Some(Provenance::RealImu),
            1 => Some(Provenance::VideoDerived),
            2 => Some(Provenance::Generated),
            _ => None,
        }
    }
}

/// Derives independent, reproducible seeds from a master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
