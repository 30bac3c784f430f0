use serde::{Deserialize, Serialize};

use super::{SlotKind, TdmaConfig};

/// One slot of the atomic frame layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduledSlot {
    pub kind: SlotKind,
    pub slot_id_in_frame: u16,
    pub start_us: u64,
    pub duration_us: u64,
}

impl ScheduledSlot {
    pub fn end_us(&self) -> u64 {
        self.start_us + self.duration_us
    }
}

/// Gap-free layout of one atomic frame: MGMT slots, then RT, then BE.
pub fn slot_schedule(cfg: &TdmaConfig) -> Vec<ScheduledSlot> {
    let mut out = Vec::with_capacity(cfg.slots_per_frame() as usize);
    let mut start = 0;
    for kind in SlotKind::ALL {
        let duration = cfg.slot_duration_us(kind);
        for _ in 0..cfg.slots(kind) {
            out.push(ScheduledSlot {
                kind,
                slot_id_in_frame: out.len() as u16,
                start_us: start,
                duration_us: duration,
            });
            start += duration;
        }
    }
    out
}

/// Data slot families (the ones a node allocates for traffic).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Rt,
    Be,
}

impl DataKind {
    pub fn slot_kind(self) -> SlotKind {
        match self {
            DataKind::Rt => SlotKind::Rt,
            DataKind::Be => SlotKind::Be,
        }
    }
}

/// A concrete slot in simulation time, with every index the PDU header needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotOccurrence {
    /// Atomic frame number since time zero.
    pub frame: u64,
    pub slot_id_in_frame: u16,
    pub kind: SlotKind,
    /// Position of this frame inside the cycle of `kind`.
    pub frame_index: u8,
    pub slot_id_in_cycle: u16,
    /// Bitmap index for RT and BE slots.
    pub data_slot: Option<u16>,
    pub start_us: u64,
    pub end_us: u64,
}

impl SlotOccurrence {
    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }
}

/// Maps between simulation time and slot indices for one configuration.
#[derive(Clone, Debug)]
pub struct Timeline {
    cfg: TdmaConfig,
    schedule: Vec<ScheduledSlot>,
}

impl Timeline {
    pub fn new(cfg: TdmaConfig) -> Self {
        let schedule = slot_schedule(&cfg);
        Timeline { cfg, schedule }
    }

    pub fn config(&self) -> &TdmaConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &[ScheduledSlot] {
        &self.schedule
    }

    pub fn frame_length_us(&self) -> u64 {
        self.cfg.frame_length_us
    }

    fn first_slot(&self, kind: SlotKind) -> u32 {
        match kind {
            SlotKind::Mgmt => 0,
            SlotKind::Rt => self.cfg.mgmt_slots,
            SlotKind::Be => self.cfg.mgmt_slots + self.cfg.rt_slots,
        }
    }

    /// Occurrence of slot `slot_id_in_frame` in atomic frame `frame`.
    pub fn occurrence(&self, frame: u64, slot_id_in_frame: u16) -> SlotOccurrence {
        let slot = self.schedule[slot_id_in_frame as usize];
        let kind = slot.kind;
        let frame_index = (frame % self.cfg.cycle_frames(kind) as u64) as u32;
        let within = slot_id_in_frame as u32 - self.first_slot(kind);
        let slot_id_in_cycle = frame_index * self.cfg.slots(kind) + within;
        let data_slot = match kind {
            SlotKind::Mgmt => None,
            SlotKind::Rt => Some(slot_id_in_cycle as u16),
            SlotKind::Be => Some((self.cfg.slots_per_cycle(SlotKind::Rt) + slot_id_in_cycle) as u16),
        };
        let base = frame * self.cfg.frame_length_us;
        SlotOccurrence {
            frame,
            slot_id_in_frame,
            kind,
            frame_index: frame_index as u8,
            slot_id_in_cycle: slot_id_in_cycle as u16,
            data_slot,
            start_us: base + slot.start_us,
            end_us: base + slot.end_us(),
        }
    }

    /// The occurrence covering time `t`.
    pub fn occurrence_at(&self, t: u64) -> SlotOccurrence {
        let frame = t / self.cfg.frame_length_us;
        let offset = t % self.cfg.frame_length_us;
        let idx = self.schedule.partition_point(|s| s.start_us <= offset) - 1;
        self.occurrence(frame, idx as u16)
    }

    /// The occurrence right after `occ`.
    pub fn next(&self, occ: &SlotOccurrence) -> SlotOccurrence {
        let next = occ.slot_id_in_frame as usize + 1;
        if next == self.schedule.len() {
            self.occurrence(occ.frame + 1, 0)
        } else {
            self.occurrence(occ.frame, next as u16)
        }
    }

    /// Kind, frame index within its cycle, and slot id in frame of a bitmap index.
    pub fn data_slot_position(&self, data_slot: u16) -> (DataKind, u32, u16) {
        let rt_cycle = self.cfg.slots_per_cycle(SlotKind::Rt);
        let (kind, in_cycle) = if (data_slot as u32) < rt_cycle {
            (DataKind::Rt, data_slot as u32)
        } else {
            (DataKind::Be, data_slot as u32 - rt_cycle)
        };
        let per_frame = self.cfg.slots(kind.slot_kind());
        let frame_index = in_cycle / per_frame;
        let slot = self.first_slot(kind.slot_kind()) + in_cycle % per_frame;
        (kind, frame_index, slot as u16)
    }

    pub fn data_kind(&self, data_slot: u16) -> DataKind {
        self.data_slot_position(data_slot).0
    }

    /// First occurrence of a slot that starts at or after `t`, given its
    /// frame index within a cycle of `cycle` frames and its slot id in frame.
    fn next_start(&self, cycle: u64, frame_index: u64, slot: u16, t: u64) -> SlotOccurrence {
        let offset = self.schedule[slot as usize].start_us;
        let f = self.cfg.frame_length_us;
        // smallest frame n >= 0 with n % cycle == frame_index and n*f + offset >= t
        let min_frame = t.saturating_sub(offset).div_ceil(f);
        let rem = min_frame % cycle;
        let frame =
            if rem <= frame_index { min_frame - rem + frame_index } else { min_frame - rem + cycle + frame_index };
        self.occurrence(frame, slot)
    }

    /// First occurrence of data slot `data_slot` starting at or after `t`.
    pub fn next_data_occurrence(&self, data_slot: u16, t: u64) -> SlotOccurrence {
        let (kind, frame_index, slot) = self.data_slot_position(data_slot);
        let cycle = self.cfg.cycle_frames(kind.slot_kind()) as u64;
        self.next_start(cycle, frame_index as u64, slot, t)
    }

    /// Frame index and slot id in frame of a MGMT slot index.
    pub fn mgmt_slot_position(&self, mgmt_slot: u16) -> (u32, u16) {
        let per_frame = self.cfg.mgmt_slots;
        (mgmt_slot as u32 / per_frame, (mgmt_slot as u32 % per_frame) as u16)
    }

    /// First occurrence of MGMT slot `mgmt_slot` starting at or after `t`.
    pub fn next_mgmt_occurrence(&self, mgmt_slot: u16, t: u64) -> SlotOccurrence {
        let (frame_index, slot) = self.mgmt_slot_position(mgmt_slot);
        self.next_start(self.cfg.mgmt_cycle_frames as u64, frame_index as u64, slot, t)
    }
}
