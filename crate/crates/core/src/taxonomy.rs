//! Two-level fragment taxonomy.
//!
//! Every fragment belongs to one of three bones and carries a size-ordered
//! index within that bone (1 = largest). The pair packs into a single id
//! `10 * code(anatomy) + index`, so ids 1-10 are sacrum, 11-20 left hip and
//! 21-30 right hip. Id 0 is background; 31 and 32 are reserved.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of fragment slots per bone.
pub const SLOTS_PER_BONE: u8 = 10;
/// Largest valid encoded label id.
pub const MAX_LABEL_ID: u8 = 30;
/// Bits a 2D pixel word may carry.
pub const VALID_BITS: u32 = (1 << MAX_LABEL_ID) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnatomyClass {
    Sacrum,
    LeftHip,
    RightHip,
}

impl AnatomyClass {
    pub const ALL: [AnatomyClass; 3] = [Self::Sacrum, Self::LeftHip, Self::RightHip];

    pub const fn code(self) -> u8 {
        match self {
            Self::Sacrum => 0,
            Self::LeftHip => 1,
            Self::RightHip => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Pixel-word bits occupied by this bone's ten fragment slots.
    pub const fn bit_mask(self) -> u32 {
        0x3FF << (10 * self.code() as u32)
    }

    pub const fn name(self) -> &'static str {
        match self {
            Self::Sacrum => "sacrum",
            Self::LeftHip => "left_hip",
            Self::RightHip => "right_hip",
        }
    }
}

impl fmt::Display for AnatomyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FragmentLabel {
    pub anatomy: AnatomyClass,
    pub index: u8,
}

impl FragmentLabel {
    pub fn new(anatomy: AnatomyClass, index: u8) -> Result<Self> {
        if !(1..=SLOTS_PER_BONE).contains(&index) {
            return Err(Error::InvalidLabel(10 * anatomy.code() as u32 + index as u32));
        }
        Ok(Self { anatomy, index })
    }

    /// Iterates all 30 labels in id order.
    pub fn all() -> impl Iterator<Item = FragmentLabel> {
        (1..=MAX_LABEL_ID).map(|id| decode_label(id as u32).expect("id in range"))
    }

    pub fn id(self) -> u8 {
        10 * self.anatomy.code() + self.index
    }

    /// Bit carried in a 2D multi-label pixel word.
    pub fn bit(self) -> u32 {
        1 << (self.id() - 1)
    }
}

impl fmt::Display for FragmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.anatomy, self.index)
    }
}

pub fn encode_label(label: FragmentLabel) -> Result<u8> {
    if !(1..=SLOTS_PER_BONE).contains(&label.index) {
        return Err(Error::InvalidLabel(
            10 * label.anatomy.code() as u32 + label.index as u32,
        ));
    }
    Ok(label.id())
}

pub fn decode_label(id: u32) -> Result<FragmentLabel> {
    if id == 0 || id > MAX_LABEL_ID as u32 {
        return Err(Error::InvalidLabel(id));
    }
    let code = ((id - 1) / 10) as u8;
    let index = ((id - 1) % 10 + 1) as u8;
    Ok(FragmentLabel {
        anatomy: AnatomyClass::from_code(code).expect("code < 3"),
        index,
    })
}

/// Collapses a label bitset onto the three bones (bit k = anatomy code k).
pub fn anatomy_bits(labels: u32) -> u32 {
    AnatomyClass::ALL
        .iter()
        .filter(|a| labels & a.bit_mask() != 0)
        .fold(0, |acc, a| acc | 1 << a.code())
}
