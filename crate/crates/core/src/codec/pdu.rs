use std::fmt;
use std::str::FromStr;

use bitvec::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::tdma::SlotKind;

/// 48-bit MAC address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(u64);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr(0xFFFF_FFFF_FFFF);

    /// Keeps the low 48 bits of `raw`.
    pub const fn new(raw: u64) -> Self {
        MacAddr(raw & 0xFFFF_FFFF_FFFF)
    }

    /// Locally administered unicast address for simulated node `index`.
    pub const fn node(index: usize) -> Self {
        MacAddr::new(0x0200_0000_0000 | (index as u64 + 1))
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    pub fn is_broadcast(self) -> bool {
        self == MacAddr::BROADCAST
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0.to_be_bytes();
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[2], b[3], b[4], b[5], b[6], b[7])
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(format!("`{s}` is not a colon-separated 6-octet address"));
        }
        let mut raw = 0u64;
        for p in parts {
            let octet = u8::from_str_radix(p, 16).map_err(|e| format!("`{s}`: {e}"))?;
            raw = (raw << 8) | octet as u64;
        }
        Ok(MacAddr(raw))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 15-bit PTT session identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionId(u16);

impl SessionId {
    pub const MAX: u16 = 0x7FFF;

    pub fn new(raw: u16) -> Option<Self> {
        (raw <= Self::MAX).then_some(SessionId(raw))
    }

    /// Wraps into the 15-bit range.
    pub fn wrapping(raw: u32) -> Self {
        SessionId((raw & Self::MAX as u32) as u16)
    }

    pub fn raw(self) -> u16 {
        self.0
    }

    pub fn next(self) -> Self {
        SessionId::wrapping(self.0 as u32 + 1)
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// 2-bit Type field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PduType {
    Mgmt = 0,
    RtData = 1,
    BeData = 2,
    PttSig = 3,
}

impl PduType {
    pub fn from_code(code: u64) -> Option<Self> {
        Some(match code {
            0 => PduType::Mgmt,
            1 => PduType::RtData,
            2 => PduType::BeData,
            3 => PduType::PttSig,
            _ => return None,
        })
    }

    /// The slot family that carries this PDU type.
    pub fn slot_kind(self) -> SlotKind {
        match self {
            PduType::Mgmt => SlotKind::Mgmt,
            PduType::RtData | PduType::PttSig => SlotKind::Rt,
            PduType::BeData => SlotKind::Be,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PduType::Mgmt => "MGMT",
            PduType::RtData => "RT_DATA",
            PduType::BeData => "BE_DATA",
            PduType::PttSig => "PTT_SIG",
        }
    }
}

pub(crate) fn cycle_type_code(kind: SlotKind) -> u64 {
    match kind {
        SlotKind::Mgmt => 0,
        SlotKind::Rt => 1,
        SlotKind::Be => 2,
    }
}

pub(crate) fn cycle_type_from_code(code: u64) -> Option<SlotKind> {
    Some(match code {
        0 => SlotKind::Mgmt,
        1 => SlotKind::Rt,
        2 => SlotKind::Be,
        _ => return None,
    })
}

/// The modified 802.11 Frame Control field (32 bits).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameControl {
    pub pdu_type: PduType,
    pub subtype: u8,
    pub more_fragment: bool,
    pub cycle_type: SlotKind,
    pub frame_index: u8,
    pub slot_id_in_cycle: u16,
    pub slot_id_in_frame: u16,
    pub encapsulated_sdus: u8,
}

/// 12-bit sequence number and 4-bit fragment number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SequenceControl {
    pub sequence: u16,
    pub fragment: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MacHeader {
    pub frame_control: FrameControl,
    pub transmitter: MacAddr,
    pub receiver: MacAddr,
    pub sequence: SequenceControl,
}

/// Per-slot usage code of the MGMT bitmap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitmapCode {
    #[default]
    Idle = 0,
    Transmitting = 1,
    NeighbourTransmitting = 2,
    Collision = 3,
}

impl BitmapCode {
    pub fn from_code(code: u64) -> Self {
        match code & 0b11 {
            0 => BitmapCode::Idle,
            1 => BitmapCode::Transmitting,
            2 => BitmapCode::NeighbourTransmitting,
            _ => BitmapCode::Collision,
        }
    }

    pub fn is_idle(self) -> bool {
        self == BitmapCode::Idle
    }

    pub fn letter(self) -> char {
        match self {
            BitmapCode::Idle => '.',
            BitmapCode::Transmitting => 'T',
            BitmapCode::NeighbourTransmitting => 'N',
            BitmapCode::Collision => 'X',
        }
    }
}

/// One 2-bit code per data slot: RT cycle slots first, then BE, ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SlotBitmap(Vec<BitmapCode>);

impl SlotBitmap {
    pub fn idle(entries: usize) -> Self {
        SlotBitmap(vec![BitmapCode::Idle; entries])
    }

    pub fn from_codes(codes: Vec<BitmapCode>) -> Self {
        SlotBitmap(codes)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, slot: u16) -> BitmapCode {
        self.0.get(slot as usize).copied().unwrap_or_default()
    }

    pub fn set(&mut self, slot: u16, code: BitmapCode) {
        self.0[slot as usize] = code;
    }

    pub fn codes(&self) -> &[BitmapCode] {
        &self.0
    }

    /// Slots carrying `code`.
    pub fn slots_with(&self, code: BitmapCode) -> Vec<u16> {
        self.0.iter().enumerate().filter(|(_, c)| **c == code).map(|(i, _)| i as u16).collect()
    }
}

impl fmt::Display for SlotBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|c| write!(f, "{}", c.letter()))
    }
}

/// What rides in the padding bits behind the MGMT bitmap.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Piggyback {
    Beacon,
    PttRes {
        positive: bool,
        session_id: SessionId,
    },
    /// Queue load level. The coding is unspecified, so the padding region is
    /// carried verbatim.
    Qll {
        raw: BitVec<u8, Msb0>,
    },
}

impl Piggyback {
    pub fn subtype(&self) -> u8 {
        match self {
            Piggyback::Beacon => 0,
            Piggyback::PttRes { .. } => 1,
            Piggyback::Qll { .. } => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MgmtBody {
    pub bitmap: SlotBitmap,
    pub piggyback: Piggyback,
}

/// 4-bit codec identifier of a Session Request; also the RT-DATA subtype.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CodecId(pub u8);

impl CodecId {
    pub const MELPE: CodecId = CodecId(0);
}

/// 3-bit coding rate code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodingRate {
    Bps2400 = 0,
    Bps1200 = 1,
    Bps600 = 2,
}

impl CodingRate {
    pub fn from_code(code: u64) -> Option<Self> {
        Some(match code {
            0 => CodingRate::Bps2400,
            1 => CodingRate::Bps1200,
            2 => CodingRate::Bps600,
            _ => return None,
        })
    }

    pub fn bps(self) -> u32 {
        match self {
            CodingRate::Bps2400 => 2400,
            CodingRate::Bps1200 => 1200,
            CodingRate::Bps600 => 600,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PttSigBody {
    Request {
        session_id: SessionId,
        codec: CodecId,
        rate: CodingRate,
    },
    Release {
        session_id: SessionId,
    },
    /// Reserved: recognised, never interpreted.
    Relay,
}

impl PttSigBody {
    pub fn subtype(&self) -> u8 {
        match self {
            PttSigBody::Request { .. } => 0,
            PttSigBody::Release { .. } => 1,
            PttSigBody::Relay => 2,
        }
    }
}

/// Aggregated coded voice frames. Each frame is the low `voice_frame_bits`
/// bits of its `u64`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RtDataBody {
    pub rate: CodingRate,
    pub voice_frames: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BeDataBody {
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PduBody {
    Mgmt(MgmtBody),
    PttSig(PttSigBody),
    RtData(RtDataBody),
    BeData(BeDataBody),
}

impl PduBody {
    pub fn pdu_type(&self) -> PduType {
        match self {
            PduBody::Mgmt(_) => PduType::Mgmt,
            PduBody::PttSig(_) => PduType::PttSig,
            PduBody::RtData(_) => PduType::RtData,
            PduBody::BeData(_) => PduType::BeData,
        }
    }
}

/// A decoded MAC frame.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MacPdu {
    pub header: MacHeader,
    pub body: PduBody,
}

/// Where a PDU is sent: the header indexing fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotAddress {
    pub cycle_type: SlotKind,
    pub frame_index: u8,
    pub slot_id_in_cycle: u16,
    pub slot_id_in_frame: u16,
}

impl From<&crate::tdma::SlotOccurrence> for SlotAddress {
    fn from(occ: &crate::tdma::SlotOccurrence) -> Self {
        SlotAddress {
            cycle_type: occ.kind,
            frame_index: occ.frame_index,
            slot_id_in_cycle: occ.slot_id_in_cycle,
            slot_id_in_frame: occ.slot_id_in_frame,
        }
    }
}

impl MacPdu {
    /// Builds a PDU whose type, subtype and SDU count follow from `body`.
    pub fn new(transmitter: MacAddr, receiver: MacAddr, sequence: u16, slot: SlotAddress, body: PduBody) -> Self {
        let subtype = match &body {
            PduBody::Mgmt(m) => m.piggyback.subtype(),
            PduBody::PttSig(p) => p.subtype(),
            PduBody::RtData(_) => CodecId::MELPE.0,
            PduBody::BeData(_) => 0,
        };
        let encapsulated_sdus = match &body {
            PduBody::RtData(r) => r.voice_frames.len() as u8,
            _ => 0,
        };
        MacPdu {
            header: MacHeader {
                frame_control: FrameControl {
                    pdu_type: body.pdu_type(),
                    subtype,
                    more_fragment: false,
                    cycle_type: slot.cycle_type,
                    frame_index: slot.frame_index,
                    slot_id_in_cycle: slot.slot_id_in_cycle,
                    slot_id_in_frame: slot.slot_id_in_frame,
                    encapsulated_sdus,
                },
                transmitter,
                receiver,
                sequence: SequenceControl { sequence: sequence & 0x0FFF, fragment: 0 },
            },
            body,
        }
    }

    pub fn pdu_type(&self) -> PduType {
        self.header.frame_control.pdu_type
    }

    pub fn transmitter(&self) -> MacAddr {
        self.header.transmitter
    }
}
