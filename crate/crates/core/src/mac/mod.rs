//! Per-node MAC protocol machine.
//!
//! Each node sends a MGMT PDU in its fixed MGMT slot every MGMT cycle. The
//! PDU carries a 2-bit usage code for every data slot as the node perceives
//! it. Nodes fuse their neighbours' bitmaps with their own to find free slots
//! and to detect hidden-node collisions. Data slots are taken in unconfirmed
//! mode: the slot is used and announced at once, and retracted only if a
//! neighbour reports a collision while it is still being allocated.

mod engine;
mod views;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{MacAddr, SessionId};
use crate::tdma::DataKind;

pub use engine::{NodeMac, SlotAction, SlotPerception};
pub use views::{merge_views, own_view_entry, select_tsa, Perceived};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MacError {
    #[error("no idle {0:?} slot in the merged view")]
    NoFreeSlot(DataKind),
    #[error("session limit of {0} reached")]
    SessionLimitReached(usize),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {session} is {phase:?}, operation needs {needed:?}")]
    WrongPhase { session: SessionId, phase: PttPhase, needed: PttPhase },
    #[error("node is sleeping")]
    Sleeping,
}

/// Main protocol state, refreshed at every slot boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MainState {
    Idle,
    Tx,
    Rx,
    Sleep,
    SearchRt,
    SearchBe,
    SearchBoth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocState {
    Allocating,
    InUse,
}

/// A data slot held by this node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OwnedSlot {
    pub kind: DataKind,
    pub state: AllocState,
    /// Delivery time of the first MGMT PDU announcing the slot.
    pub announced_at: Option<u64>,
    /// No transmission in occurrences starting before this time.
    pub hold_until: u64,
    /// At least one PDU has been sent in the slot.
    pub used: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PttPhase {
    Requesting,
    WaitResponses,
    Speech,
    Releasing,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PttSessionState {
    pub session_id: SessionId,
    pub role: Role,
    pub phase: PttPhase,
    /// Peer for responder records, destination for initiator records.
    pub peer: MacAddr,
    pub rt_slot: Option<u16>,
    pub responses: std::collections::BTreeMap<MacAddr, bool>,
    /// Response deadline while waiting, inactivity deadline for responders.
    pub deadline: Option<u64>,
    /// The Session Request goes out in the next usable slot occurrence.
    pub request_pending: bool,
}

/// Tunables of the protocol machine.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    /// Neighbour bitmaps older than this many MGMT cycles are ignored.
    pub freshness_cycles: u32,
    /// MGMT cycles after the announcement before a slot is IN_USE.
    pub confirm_cycles: u32,
    /// Responder records expire after this many atomic frames without traffic.
    pub rx_timeout_frames: u32,
    pub max_sessions: usize,
    /// Retry delay after NoFreeSlot, in MGMT cycles.
    pub no_free_backoff_cycles: u32,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            freshness_cycles: 1,
            confirm_cycles: 1,
            rx_timeout_frames: 4,
            max_sessions: 1,
            no_free_backoff_cycles: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    NegativeResponse,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoSession,
    Duplicate,
}

/// Observable protocol events, in the order they happen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MacEvent {
    TsaSelect { slot_kind: DataKind, data_slot: u16, reselect: bool },
    TsaNoFree { slot_kind: DataKind },
    TsaCollide { data_slot: u16, reporter: MacAddr, state: AllocState },
    TsaConfirm { data_slot: u16 },
    TsaRelease { data_slot: u16 },
    PttPhase { session: SessionId, phase: PttPhase },
    SessionEstablished { session: SessionId },
    SessionFailed { session: SessionId, reason: FailReason },
    SessionClosed { session: SessionId },
    RxSessionOpened { from: MacAddr, session: SessionId },
    RxSessionClosed { from: MacAddr, session: SessionId, timeout: bool },
    PttResQueued { to: MacAddr, session: SessionId, positive: bool },
    PttResUnsendable { to: MacAddr, session: SessionId },
    PttResUnmatched { from: MacAddr, session: SessionId },
    VoiceDelivered { from: MacAddr, session: SessionId, generated_us: Vec<u64> },
    PduDropped { from: MacAddr, reason: DropReason },
}

impl MacEvent {
    pub fn name(&self) -> &'static str {
        match self {
            MacEvent::TsaSelect { .. } => "tsa_select",
            MacEvent::TsaNoFree { .. } => "tsa_no_free",
            MacEvent::TsaCollide { .. } => "tsa_collide",
            MacEvent::TsaConfirm { .. } => "tsa_confirm",
            MacEvent::TsaRelease { .. } => "tsa_release",
            MacEvent::PttPhase { .. } => "ptt_phase",
            MacEvent::SessionEstablished { .. } => "session_established",
            MacEvent::SessionFailed { .. } => "session_failed",
            MacEvent::SessionClosed { .. } => "session_closed",
            MacEvent::RxSessionOpened { .. } => "rx_session_opened",
            MacEvent::RxSessionClosed { .. } => "rx_session_closed",
            MacEvent::PttResQueued { .. } => "ptt_res_queued",
            MacEvent::PttResUnsendable { .. } => "ptt_res_unsendable",
            MacEvent::PttResUnmatched { .. } => "ptt_res_unmatched",
            MacEvent::VoiceDelivered { .. } => "voice_delivered",
            MacEvent::PduDropped { .. } => "pdu_dropped",
        }
    }
}
