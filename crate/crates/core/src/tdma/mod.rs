//! TDMA frame planning.
//!
//! An atomic TDMA frame is a MGMT frame followed by a RT frame and a BE frame,
//! each made of equally sized slots. A slot is a whole number of OFDM symbols:
//! the MAC PDU rounded up to full symbols plus a fixed preamble/guard overhead.

mod doc;
mod planner;
mod schedule;

use serde::{Deserialize, Serialize};
use std::fmt;

pub use doc::{config_from_doc, config_to_doc, DocError};
pub use planner::{
    plan_configurations, plan_configurations_with, reference_plans, slot_symbols_for_payload, validate_config, Check,
    ValidationReport,
};
pub use schedule::{slot_schedule, DataKind, ScheduledSlot, SlotOccurrence, Timeline};

/// Largest index a 9-bit slot field can carry, plus one.
pub const MAX_INDEXABLE_SLOTS: u32 = 512;
/// Largest frame count a 3-bit frame index can carry.
pub const MAX_CYCLE_FRAMES: u32 = 8;
/// Width of a bitmap entry.
pub const BITMAP_ENTRY_BITS: u32 = 2;

/// The three slot families of an atomic frame, in frame order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Mgmt,
    Rt,
    Be,
}

impl SlotKind {
    pub const ALL: [SlotKind; 3] = [SlotKind::Mgmt, SlotKind::Rt, SlotKind::Be];

    pub fn name(self) -> &'static str {
        match self {
            SlotKind::Mgmt => "MGMT",
            SlotKind::Rt => "RT",
            SlotKind::Be => "BE",
        }
    }
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mgmt" => Ok(SlotKind::Mgmt),
            "rt" => Ok(SlotKind::Rt),
            "be" => Ok(SlotKind::Be),
            other => Err(format!("unknown slot kind `{other}` (expected mgmt, rt or be)")),
        }
    }
}

/// Inputs of the frame planner.
///
/// The first block of fields is the PHY/MAC/voice parameterisation; the
/// second block bounds the iterative search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerInput {
    /// Physical bit rate in bits per second.
    pub phy_bit_rate: u64,
    pub mac_header_bits: u32,
    pub ofdm_symbol_duration_us: u64,
    pub bits_per_symbol: u32,
    /// Preamble plus guard, in OFDM symbols, added to every slot.
    pub slot_overhead_symbols: u32,
    pub voice_frame_bits: u32,
    pub voice_frame_interval_us: u64,
    pub candidate_frame_lengths_ms: Vec<u64>,
    /// Upper bound of the MGMT slot counts (node counts) searched.
    pub max_nodes_target: u32,

    /// Largest BE payload considered, in bytes.
    pub max_be_payload_bytes: u32,
    /// Only keep BE payloads that fill their slot's symbols without padding.
    pub be_exact_fit: bool,
    /// The MGMT frame must cover a whole multiple of this percentage of the
    /// atomic frame. Zero disables the constraint.
    pub mgmt_weight_step_percent: u32,
    pub mgmt_cycle_frames: u32,
    pub rt_cycle_frames: u32,
    pub be_cycle_frames: u32,
}

impl Default for PlannerInput {
    fn default() -> Self {
        PlannerInput {
            phy_bit_rate: 1_625_000,
            mac_header_bits: 176,
            ofdm_symbol_duration_us: 16,
            bits_per_symbol: 26,
            slot_overhead_symbols: 8,
            voice_frame_bits: 54,
            voice_frame_interval_us: 22_500,
            candidate_frame_lengths_ms: vec![80, 128],
            max_nodes_target: 256,
            max_be_payload_bytes: 1280,
            be_exact_fit: true,
            mgmt_weight_step_percent: 1,
            mgmt_cycle_frames: 1,
            rt_cycle_frames: 1,
            be_cycle_frames: 1,
        }
    }
}

impl PlannerInput {
    /// Planner input whose PHY, header and voice parameters are those of `cfg`,
    /// for validating configurations that did not come from the planner.
    pub fn for_config(cfg: &TdmaConfig) -> Self {
        PlannerInput {
            phy_bit_rate: cfg.bits_per_symbol as u64 * 1_000_000 / cfg.symbol_duration_us.max(1),
            mac_header_bits: cfg.mac_header_bits,
            ofdm_symbol_duration_us: cfg.symbol_duration_us,
            bits_per_symbol: cfg.bits_per_symbol,
            slot_overhead_symbols: cfg.slot_overhead_symbols,
            voice_frame_bits: cfg.voice_frame_bits,
            voice_frame_interval_us: cfg.voice_frame_interval_us,
            candidate_frame_lengths_ms: vec![cfg.frame_length_us.div_ceil(1000)],
            mgmt_cycle_frames: cfg.mgmt_cycle_frames.clamp(1, MAX_CYCLE_FRAMES),
            rt_cycle_frames: cfg.rt_cycle_frames.clamp(1, MAX_CYCLE_FRAMES),
            be_cycle_frames: cfg.be_cycle_frames.clamp(1, MAX_CYCLE_FRAMES),
            ..PlannerInput::default()
        }
    }

    /// Checks the timing consistency and positivity invariants.
    pub fn check(&self) -> Result<(), String> {
        let positives = [
            ("phy_bit_rate", self.phy_bit_rate),
            ("mac_header_bits", self.mac_header_bits as u64),
            ("ofdm_symbol_duration_us", self.ofdm_symbol_duration_us),
            ("bits_per_symbol", self.bits_per_symbol as u64),
            ("slot_overhead_symbols", self.slot_overhead_symbols as u64),
            ("voice_frame_bits", self.voice_frame_bits as u64),
            ("voice_frame_interval_us", self.voice_frame_interval_us),
            ("max_nodes_target", self.max_nodes_target as u64),
            ("max_be_payload_bytes", self.max_be_payload_bytes as u64),
        ];
        for (name, value) in positives {
            if value == 0 {
                return Err(format!("{name} must be strictly positive"));
            }
        }
        if self.phy_bit_rate * self.ofdm_symbol_duration_us != self.bits_per_symbol as u64 * 1_000_000 {
            return Err(format!(
                "phy_bit_rate x ofdm_symbol_duration = {} bits, but bits_per_symbol = {}",
                self.phy_bit_rate as f64 * self.ofdm_symbol_duration_us as f64 / 1e6,
                self.bits_per_symbol
            ));
        }
        if self.candidate_frame_lengths_ms.is_empty() {
            return Err("candidate_frame_lengths_ms is empty".into());
        }
        if self.candidate_frame_lengths_ms.contains(&0) {
            return Err("candidate frame lengths must be strictly positive".into());
        }
        for (name, frames) in [
            ("mgmt_cycle_frames", self.mgmt_cycle_frames),
            ("rt_cycle_frames", self.rt_cycle_frames),
            ("be_cycle_frames", self.be_cycle_frames),
        ] {
            if !(1..=MAX_CYCLE_FRAMES).contains(&frames) {
                return Err(format!("{name} must be in 1..=8, got {frames}"));
            }
        }
        Ok(())
    }
}

/// A complete timing plan: slot counts and geometry of one atomic frame.
///
/// All durations are integers in microseconds; slot sizes are in OFDM symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdmaConfig {
    pub frame_length_us: u64,
    pub symbol_duration_us: u64,
    pub bits_per_symbol: u32,
    pub mac_header_bits: u32,
    pub slot_overhead_symbols: u32,
    pub mgmt_slots: u32,
    pub rt_slots: u32,
    pub be_slots: u32,
    pub mgmt_slot_symbols: u32,
    pub rt_slot_symbols: u32,
    pub be_slot_symbols: u32,
    pub mgmt_pdu_bits: u32,
    pub mgmt_padded_bits: u32,
    pub voice_frame_bits: u32,
    pub voice_frame_interval_us: u64,
    pub rt_voice_frames_per_slot: u32,
    pub be_payload_bytes: u32,
    pub mgmt_cycle_frames: u32,
    pub rt_cycle_frames: u32,
    pub be_cycle_frames: u32,
}

impl TdmaConfig {
    pub fn slots(&self, kind: SlotKind) -> u32 {
        match kind {
            SlotKind::Mgmt => self.mgmt_slots,
            SlotKind::Rt => self.rt_slots,
            SlotKind::Be => self.be_slots,
        }
    }

    pub fn slot_symbols(&self, kind: SlotKind) -> u32 {
        match kind {
            SlotKind::Mgmt => self.mgmt_slot_symbols,
            SlotKind::Rt => self.rt_slot_symbols,
            SlotKind::Be => self.be_slot_symbols,
        }
    }

    pub fn cycle_frames(&self, kind: SlotKind) -> u32 {
        match kind {
            SlotKind::Mgmt => self.mgmt_cycle_frames,
            SlotKind::Rt => self.rt_cycle_frames,
            SlotKind::Be => self.be_cycle_frames,
        }
    }

    pub fn slot_duration_us(&self, kind: SlotKind) -> u64 {
        self.slot_symbols(kind) as u64 * self.symbol_duration_us
    }

    /// Bits a slot of `kind` can carry once the preamble/guard is removed.
    /// Every PDU is serialised to exactly this length.
    pub fn slot_capacity_bits(&self, kind: SlotKind) -> usize {
        (self.slot_symbols(kind).saturating_sub(self.slot_overhead_symbols) * self.bits_per_symbol) as usize
    }

    pub fn slots_per_frame(&self) -> u32 {
        self.mgmt_slots + self.rt_slots + self.be_slots
    }

    /// Slots of `kind` indexed in one cycle of that kind.
    pub fn slots_per_cycle(&self, kind: SlotKind) -> u32 {
        self.slots(kind) * self.cycle_frames(kind)
    }

    /// Number of bitmap entries: every RT then every BE slot of the data cycles.
    pub fn data_slots_per_cycle(&self) -> u32 {
        self.slots_per_cycle(SlotKind::Rt) + self.slots_per_cycle(SlotKind::Be)
    }

    pub fn mgmt_cycle_us(&self) -> u64 {
        self.mgmt_cycle_frames as u64 * self.frame_length_us
    }

    pub fn cycle_us(&self, kind: SlotKind) -> u64 {
        self.cycle_frames(kind) as u64 * self.frame_length_us
    }

    /// Frame share of a slot family in percent.
    pub fn weight_percent(&self, kind: SlotKind) -> f64 {
        (self.slots(kind) as u64 * self.slot_duration_us(kind)) as f64 * 100.0 / self.frame_length_us as f64
    }

    pub fn frame_length_ms(&self) -> f64 {
        self.frame_length_us as f64 / 1000.0
    }

    /// Padding bits left in the MGMT slot after the bitmap (the piggyback area).
    pub fn mgmt_piggyback_bits(&self) -> u32 {
        self.mgmt_padded_bits
    }

    /// One of the three frame plans of the reference design, `n` in 1..=3.
    pub fn solution(n: usize) -> Option<TdmaConfig> {
        reference_plans().into_iter().nth(n.checked_sub(1)?)
    }
}
