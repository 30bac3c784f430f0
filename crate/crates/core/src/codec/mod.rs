//! Bit-exact MAC PDU codec.
//!
//! Wire layout of every PDU, most-significant bit first within each field:
//!
//! ```text
//! FrameControl 32 | Transmitter 48 | Receiver 48 | SequenceControl 16 | body | zero fill | FCS 32
//! ```
//!
//! FrameControl is `Type 2 | Subtype 3 | MoreFrag 1 | CycleType 2 |
//! FrameIndex 3 | SlotIdInCycle 9 | SlotIdInFrame 9 | EncapsulatedSDUs 3`.
//! The header fields plus the FCS account for 176 bits. Every PDU is
//! serialised to the full data capacity of its slot, so the FCS always sits
//! in the last 32 bits.

mod crc;
mod listing;
mod pdu;
mod wire;

use bitvec::prelude::*;
use thiserror::Error;

pub use crc::{bits_lsb_first, crc32, fcs32, FCS_RESIDUE};
pub use listing::field_listing;
pub use pdu::{
    BeDataBody, BitmapCode, CodecId, CodingRate, FrameControl, MacAddr, MacHeader, MacPdu, MgmtBody, PduBody, PduType,
    Piggyback, PttSigBody, RtDataBody, SequenceControl, SessionId, SlotAddress, SlotBitmap,
};
pub use wire::{decode, encode};

/// Serialised PDU.
pub type Bits = BitVec<u8, Msb0>;

/// Header fields in front of the body.
pub const PRE_BODY_BITS: usize = 32 + 48 + 48 + 16;
pub const FCS_BITS: usize = 32;
/// Header budget including the FCS.
pub const HEADER_BITS: usize = PRE_BODY_BITS + FCS_BITS;
/// Width of the PTT-Res piggyback inside the MGMT padding.
pub const PTT_RES_BITS: usize = 16;
/// Width of the coding rate field leading an RT-DATA body.
pub const RATE_FIELD_BITS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("frame has {actual} bits but the slot carries {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("FCS mismatch: computed {computed:#010x}, received {received:#010x}")]
    FcsMismatch { computed: u32, received: u32 },
    #[error("malformed field `{field}`: {detail}")]
    MalformedField { field: &'static str, detail: String },
    #[error("`{field}` needs {needed} bits but only {available} are available")]
    BodyTooLarge { field: &'static str, needed: usize, available: usize },
    #[error("invalid field `{field}`: {detail}")]
    InvalidField { field: &'static str, detail: String },
}

impl CodecError {
    pub(crate) fn malformed(field: &'static str, detail: impl Into<String>) -> Self {
        CodecError::MalformedField { field, detail: detail.into() }
    }

    pub(crate) fn invalid(field: &'static str, detail: impl Into<String>) -> Self {
        CodecError::InvalidField { field, detail: detail.into() }
    }
}

/// Packs a bit string into bytes, first bit in the MSB of byte 0, zero tail.
pub fn bits_to_bytes(bits: &BitSlice<u8, Msb0>) -> Vec<u8> {
    let mut owned = bits.to_bitvec();
    owned.set_uninitialized(false);
    owned.into_vec()
}

/// Inverse of [`bits_to_bytes`] for a frame of `len` bits. Extra tail bits
/// must be zero.
pub fn bits_from_bytes(bytes: &[u8], len: usize) -> Result<Bits, CodecError> {
    let expected_bytes = len.div_ceil(8);
    if bytes.len() != expected_bytes {
        return Err(CodecError::LengthMismatch { expected: len, actual: bytes.len() * 8 });
    }
    let mut bits = Bits::from_slice(bytes);
    if bits[len..].any() {
        return Err(CodecError::malformed("byte_padding", "non-zero bits after the frame end"));
    }
    bits.truncate(len);
    Ok(bits)
}
