use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::views::{merge_views, own_view_entry, select_tsa, Perceived};
use super::*;
use crate::codec::{
    BitmapCode, CodecId, CodingRate, MacPdu, MgmtBody, PduBody, Piggyback, PttSigBody, RtDataBody, SlotAddress,
    SlotBitmap,
};
use crate::tdma::{SlotKind, SlotOccurrence, TdmaConfig, Timeline};
use crate::traffic::VoiceFrame;

/// What the node does during a slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotAction {
    Transmit(MacPdu),
    Listen,
    Sleep,
}

/// What the medium let a listening node observe in one data slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SlotPerception {
    /// Frames whose energy was above the sensing threshold.
    pub sensed: usize,
    /// One of them was decoded.
    pub decoded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum InFlight {
    Mgmt,
    Request(SessionId),
    Voice,
    Release(SessionId),
}

#[derive(Clone, Debug)]
struct NeighbourView {
    bitmap: SlotBitmap,
    heard_at: u64,
}

/// Protocol state of one node.
#[derive(Clone, Debug)]
pub struct NodeMac {
    id: MacAddr,
    mgmt_slot: u16,
    timeline: Timeline,
    params: EngineParams,
    rng: ChaCha8Rng,
    main_state: MainState,
    sleeping: bool,
    perceptions: Vec<Perceived>,
    neighbours: BTreeMap<MacAddr, NeighbourView>,
    owned: BTreeMap<u16, OwnedSlot>,
    sessions: BTreeMap<SessionId, PttSessionState>,
    rx_sessions: BTreeMap<MacAddr, PttSessionState>,
    voice_queue: VecDeque<VoiceFrame>,
    sequence: u16,
    next_session: SessionId,
    pending_responses: VecDeque<(MacAddr, SessionId, bool)>,
    last_sequence: BTreeMap<MacAddr, u16>,
    retry_at: BTreeMap<SessionId, u64>,
    last_boundary: Option<u64>,
    in_flight: Option<InFlight>,
    events: Vec<MacEvent>,
}

impl NodeMac {
    /// `rng` drives slot choice and session numbering.
    pub fn new(id: MacAddr, mgmt_slot: u16, cfg: TdmaConfig, params: EngineParams, mut rng: ChaCha8Rng) -> Self {
        let entries = cfg.data_slots_per_cycle() as usize;
        let next_session = SessionId::wrapping(rng.random::<u32>());
        NodeMac {
            id,
            mgmt_slot,
            timeline: Timeline::new(cfg),
            params,
            rng,
            main_state: MainState::Idle,
            sleeping: false,
            perceptions: vec![Perceived::Nothing; entries],
            neighbours: BTreeMap::new(),
            owned: BTreeMap::new(),
            sessions: BTreeMap::new(),
            rx_sessions: BTreeMap::new(),
            voice_queue: VecDeque::new(),
            sequence: 0,
            next_session,
            pending_responses: VecDeque::new(),
            last_sequence: BTreeMap::new(),
            retry_at: BTreeMap::new(),
            last_boundary: None,
            in_flight: None,
            events: Vec::new(),
        }
    }

    /// Convenience constructor seeding the node stream from `seed`.
    pub fn with_seed(id: MacAddr, mgmt_slot: u16, cfg: TdmaConfig, seed: u64) -> Self {
        NodeMac::new(id, mgmt_slot, cfg, EngineParams::default(), ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn id(&self) -> MacAddr {
        self.id
    }

    pub fn mgmt_slot(&self) -> u16 {
        self.mgmt_slot
    }

    pub fn config(&self) -> &TdmaConfig {
        self.timeline.config()
    }

    pub fn main_state(&self) -> MainState {
        self.main_state
    }

    pub fn owned_slots(&self) -> &BTreeMap<u16, OwnedSlot> {
        &self.owned
    }

    pub fn sessions(&self) -> &BTreeMap<SessionId, PttSessionState> {
        &self.sessions
    }

    pub fn session(&self, id: SessionId) -> Option<&PttSessionState> {
        self.sessions.get(&id)
    }

    pub fn rx_sessions(&self) -> &BTreeMap<MacAddr, PttSessionState> {
        &self.rx_sessions
    }

    pub fn voice_queue_len(&self) -> usize {
        self.voice_queue.len()
    }

    /// Queued voice frames of session `id`.
    pub fn voice_queued(&self, id: SessionId) -> usize {
        self.voice_queue.iter().filter(|f| f.session_id == id).count()
    }

    pub fn is_sleeping(&self) -> bool {
        self.sleeping
    }

    pub fn drain_events(&mut self) -> Vec<MacEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn sleep(&mut self) {
        self.sleeping = true;
        self.main_state = MainState::Sleep;
    }

    pub fn wake(&mut self) {
        self.sleeping = false;
        self.main_state = MainState::Idle;
    }

    fn mgmt_cycle_us(&self) -> u64 {
        self.config().mgmt_cycle_us()
    }

    fn fresh(&self, heard_at: u64, now: u64) -> bool {
        now.saturating_sub(heard_at) <= self.params.freshness_cycles as u64 * self.mgmt_cycle_us()
    }

    /// Local view: own slots, own perception and direct neighbour claims.
    pub fn own_view(&self, now: u64) -> SlotBitmap {
        let entries = self.perceptions.len();
        let mut claims = vec![0usize; entries];
        for view in self.neighbours.values().filter(|v| self.fresh(v.heard_at, now)) {
            for d in view.bitmap.slots_with(BitmapCode::Transmitting) {
                if let Some(c) = claims.get_mut(d as usize) {
                    *c += 1;
                }
            }
        }
        SlotBitmap::from_codes(
            (0..entries)
                .map(|d| own_view_entry(self.owned.contains_key(&(d as u16)), self.perceptions[d], claims[d]))
                .collect(),
        )
    }

    /// Own view fused with every fresh neighbour bitmap.
    pub fn merged_view(&self, now: u64) -> SlotBitmap {
        let own = self.own_view(now);
        merge_views(&own, self.neighbours.values().filter(|v| self.fresh(v.heard_at, now)).map(|v| &v.bitmap))
    }

    fn next_sequence(&mut self) -> u16 {
        let s = self.sequence;
        self.sequence = (self.sequence + 1) & 0x0FFF;
        s
    }

    fn candidates(&self, kind: DataKind) -> std::ops::Range<u16> {
        let rt = self.config().slots_per_cycle(SlotKind::Rt) as u16;
        match kind {
            DataKind::Rt => 0..rt,
            DataKind::Be => rt..self.config().data_slots_per_cycle() as u16,
        }
    }

    /// Picks an idle slot of `kind`, preferring slots whose current
    /// occurrence is not already under way.
    pub fn select_tsa(&mut self, kind: DataKind, now: u64) -> Result<u16, MacError> {
        let merged = self.merged_view(now);
        let current = self.timeline.occurrence_at(now);
        let busy_now = current.data_slot.filter(|_| current.start_us < now || self.last_boundary == Some(now));
        let pick = select_tsa(&merged, self.candidates(kind).filter(|d| Some(*d) != busy_now), &mut self.rng)
            .or_else(|| select_tsa(&merged, self.candidates(kind), &mut self.rng));
        pick.ok_or(MacError::NoFreeSlot(kind))
    }

    fn allocate(&mut self, session: SessionId, now: u64, hold_until: u64, reselect: bool) {
        match self.select_tsa(DataKind::Rt, now) {
            Ok(d) => {
                self.owned.insert(
                    d,
                    OwnedSlot {
                        kind: DataKind::Rt,
                        state: AllocState::Allocating,
                        announced_at: None,
                        hold_until,
                        used: false,
                    },
                );
                if let Some(s) = self.sessions.get_mut(&session) {
                    s.rt_slot = Some(d);
                }
                self.retry_at.remove(&session);
                self.events.push(MacEvent::TsaSelect { slot_kind: DataKind::Rt, data_slot: d, reselect });
            }
            Err(_) => {
                let backoff = self.params.no_free_backoff_cycles.max(1) as u64 * self.mgmt_cycle_us();
                self.retry_at.insert(session, now + backoff);
                self.events.push(MacEvent::TsaNoFree { slot_kind: DataKind::Rt });
            }
        }
    }

    fn release_slot(&mut self, d: u16) {
        if self.owned.remove(&d).is_some() {
            self.perceptions[d as usize] = Perceived::Nothing;
            self.events.push(MacEvent::TsaRelease { data_slot: d });
        }
    }

    fn set_phase(&mut self, id: SessionId, phase: PttPhase) {
        if let Some(s) = self.sessions.get_mut(&id) {
            s.phase = phase;
            self.events.push(MacEvent::PttPhase { session: id, phase });
        }
    }

    fn end_session(&mut self, id: SessionId, event: MacEvent) {
        self.set_phase(id, PttPhase::Closed);
        if let Some(s) = self.sessions.remove(&id) {
            if let Some(d) = s.rt_slot {
                self.release_slot(d);
            }
        }
        self.retry_at.remove(&id);
        self.voice_queue.retain(|f| f.session_id != id);
        self.events.push(event);
    }

    /// Opens a PTT session towards `destination` and starts the RT slot search.
    pub fn ptt_request(&mut self, destination: MacAddr, now: u64) -> Result<SessionId, MacError> {
        if self.sleeping {
            return Err(MacError::Sleeping);
        }
        if self.sessions.len() >= self.params.max_sessions {
            return Err(MacError::SessionLimitReached(self.params.max_sessions));
        }
        let id = self.next_session;
        self.next_session = id.next();
        self.sessions.insert(
            id,
            PttSessionState {
                session_id: id,
                role: Role::Initiator,
                phase: PttPhase::Requesting,
                peer: destination,
                rt_slot: None,
                responses: BTreeMap::new(),
                deadline: None,
                request_pending: true,
            },
        );
        self.events.push(MacEvent::PttPhase { session: id, phase: PttPhase::Requesting });
        self.main_state = MainState::SearchRt;
        self.allocate(id, now, now, false);
        Ok(id)
    }

    /// Moves a speaking session to RELEASING. Returns the number of queued
    /// voice frames discarded.
    pub fn ptt_release(&mut self, id: SessionId, _now: u64) -> Result<usize, MacError> {
        let phase = self.sessions.get(&id).ok_or(MacError::UnknownSession(id))?.phase;
        if phase != PttPhase::Speech {
            return Err(MacError::WrongPhase { session: id, phase, needed: PttPhase::Speech });
        }
        self.set_phase(id, PttPhase::Releasing);
        let before = self.voice_queue.len();
        self.voice_queue.retain(|f| f.session_id != id);
        Ok(before - self.voice_queue.len())
    }

    /// Queues a coded voice frame of a speaking session.
    pub fn enqueue_voice(&mut self, frame: VoiceFrame) -> Result<(), MacError> {
        let phase = self.sessions.get(&frame.session_id).ok_or(MacError::UnknownSession(frame.session_id))?.phase;
        if phase != PttPhase::Speech {
            return Err(MacError::WrongPhase { session: frame.session_id, phase, needed: PttPhase::Speech });
        }
        self.voice_queue.push_back(frame);
        Ok(())
    }

    fn housekeeping(&mut self, now: u64) {
        let confirm_after = self.params.confirm_cycles as u64 * self.mgmt_cycle_us();
        let mut confirmed = Vec::new();
        for (d, slot) in self.owned.iter_mut() {
            if slot.state == AllocState::Allocating && slot.announced_at.is_some_and(|a| now >= a + confirm_after) {
                slot.state = AllocState::InUse;
                confirmed.push(*d);
            }
        }
        self.events.extend(confirmed.into_iter().map(|d| MacEvent::TsaConfirm { data_slot: d }));

        let expired: Vec<SessionId> = self
            .sessions
            .values()
            .filter(|s| s.phase == PttPhase::WaitResponses && s.deadline.is_some_and(|t| now > t))
            .map(|s| s.session_id)
            .collect();
        for id in expired {
            self.end_session(id, MacEvent::SessionFailed { session: id, reason: FailReason::Timeout });
        }

        let stale: Vec<MacAddr> =
            self.rx_sessions.iter().filter(|(_, s)| s.deadline.is_some_and(|t| now > t)).map(|(a, _)| *a).collect();
        for from in stale {
            let s = self.rx_sessions.remove(&from).expect("listed above");
            self.events.push(MacEvent::RxSessionClosed { from, session: s.session_id, timeout: true });
        }

        let due: Vec<SessionId> = self.retry_at.iter().filter(|(_, t)| **t <= now).map(|(id, _)| *id).collect();
        for id in due {
            self.allocate(id, now, now, false);
        }
    }

    /// Called at the start of every slot.
    pub fn on_slot_boundary(&mut self, occ: &SlotOccurrence, now: u64) -> SlotAction {
        self.last_boundary = Some(now);
        self.in_flight = None;
        if self.sleeping {
            self.main_state = MainState::Sleep;
            return SlotAction::Sleep;
        }
        self.housekeeping(now);
        let action = match occ.kind {
            SlotKind::Mgmt if occ.slot_id_in_cycle == self.mgmt_slot => {
                SlotAction::Transmit(self.build_mgmt_pdu(occ, now))
            }
            SlotKind::Mgmt => SlotAction::Listen,
            SlotKind::Rt | SlotKind::Be => self.data_slot_action(occ),
        };
        self.main_state = match &action {
            SlotAction::Transmit(_) => MainState::Tx,
            SlotAction::Sleep => MainState::Sleep,
            SlotAction::Listen if !self.retry_at.is_empty() => MainState::SearchRt,
            SlotAction::Listen => MainState::Rx,
        };
        action
    }

    /// The network-beat PDU. Announces every owned slot not yet announced.
    pub fn build_mgmt_pdu(&mut self, occ: &SlotOccurrence, now: u64) -> MacPdu {
        let bitmap = self.own_view(now);
        for slot in self.owned.values_mut() {
            slot.announced_at.get_or_insert(occ.end_us);
        }
        let mut piggyback = Piggyback::Beacon;
        while let Some((to, session, positive)) = self.pending_responses.pop_front() {
            if (self.config().mgmt_padded_bits as usize) < crate::codec::PTT_RES_BITS {
                self.events.push(MacEvent::PttResUnsendable { to, session });
                continue;
            }
            piggyback = Piggyback::PttRes { positive, session_id: session };
            break;
        }
        self.in_flight = Some(InFlight::Mgmt);
        let seq = self.next_sequence();
        MacPdu::new(
            self.id,
            MacAddr::BROADCAST,
            seq,
            SlotAddress::from(occ),
            PduBody::Mgmt(MgmtBody { bitmap, piggyback }),
        )
    }

    fn data_slot_action(&mut self, occ: &SlotOccurrence) -> SlotAction {
        let Some(d) = occ.data_slot else { return SlotAction::Listen };
        match self.owned.get(&d) {
            Some(slot) if occ.start_us >= slot.hold_until => {}
            _ => return SlotAction::Listen,
        }
        let Some(session) = self.sessions.values().find(|s| s.rt_slot == Some(d)).cloned() else {
            return SlotAction::Listen;
        };
        let (body, flight) = if session.phase == PttPhase::Releasing {
            (
                PduBody::PttSig(PttSigBody::Release { session_id: session.session_id }),
                InFlight::Release(session.session_id),
            )
        } else if session.request_pending {
            (
                PduBody::PttSig(PttSigBody::Request {
                    session_id: session.session_id,
                    codec: CodecId::MELPE,
                    rate: CodingRate::Bps2400,
                }),
                InFlight::Request(session.session_id),
            )
        } else if session.phase == PttPhase::Speech && !self.voice_queue.is_empty() {
            let n = self.voice_queue.len().min(self.config().rt_voice_frames_per_slot as usize);
            let mask = (1u64 << self.config().voice_frame_bits) - 1;
            let voice_frames = self.voice_queue.drain(..n).map(|f| f.payload & mask).collect();
            (PduBody::RtData(RtDataBody { rate: CodingRate::Bps2400, voice_frames }), InFlight::Voice)
        } else {
            return SlotAction::Listen;
        };
        self.owned.get_mut(&d).expect("checked above").used = true;
        self.in_flight = Some(flight);
        let seq = self.next_sequence();
        SlotAction::Transmit(MacPdu::new(self.id, session.peer, seq, SlotAddress::from(occ), body))
    }

    /// Called at the end of a slot in which this node transmitted.
    pub fn on_transmit_complete(&mut self, now: u64) {
        match self.in_flight.take() {
            Some(InFlight::Request(id)) => {
                let Some(s) = self.sessions.get_mut(&id) else { return };
                s.request_pending = false;
                if s.phase != PttPhase::Requesting {
                    return;
                }
                if s.peer.is_broadcast() {
                    self.set_phase(id, PttPhase::Speech);
                    self.events.push(MacEvent::SessionEstablished { session: id });
                } else {
                    s.deadline = Some(now + self.timeline.frame_length_us());
                    self.set_phase(id, PttPhase::WaitResponses);
                }
            }
            Some(InFlight::Release(id)) => {
                self.end_session(id, MacEvent::SessionClosed { session: id });
            }
            Some(InFlight::Mgmt) | Some(InFlight::Voice) | None => {}
        }
    }

    /// Records what was observed while listening in data slot `data_slot`.
    pub fn on_slot_perceived(&mut self, data_slot: u16, p: SlotPerception) {
        let Some(entry) = self.perceptions.get_mut(data_slot as usize) else { return };
        *entry = if p.decoded {
            Perceived::Decoded
        } else if p.sensed == 0 {
            Perceived::Nothing
        } else if p.sensed >= 2 {
            Perceived::Collision
        } else {
            *entry
        };
    }

    /// Handles a PDU decoded by this node.
    pub fn on_frame_received(&mut self, pdu: &MacPdu, now: u64) {
        let from = pdu.transmitter();
        if from == self.id || self.sleeping {
            return;
        }
        let seq = pdu.header.sequence.sequence;
        if self.last_sequence.insert(from, seq) == Some(seq) {
            self.events.push(MacEvent::PduDropped { from, reason: DropReason::Duplicate });
            return;
        }
        match &pdu.body {
            PduBody::Mgmt(m) => self.on_mgmt_received(from, m, now),
            PduBody::PttSig(sig) => {
                let to_me = pdu.header.receiver.is_broadcast() || pdu.header.receiver == self.id;
                if to_me {
                    self.on_ptt_sig(from, pdu.header.receiver, sig, now);
                }
            }
            PduBody::RtData(rt) => {
                if pdu.header.receiver.is_broadcast() || pdu.header.receiver == self.id {
                    self.on_rt_data_received(from, rt, now);
                }
            }
            PduBody::BeData(_) => {}
        }
    }

    fn on_mgmt_received(&mut self, from: MacAddr, body: &MgmtBody, now: u64) {
        self.neighbours.insert(from, NeighbourView { bitmap: body.bitmap.clone(), heard_at: now });

        if let Piggyback::PttRes { positive, session_id } = body.piggyback {
            if !self.sessions.contains_key(&session_id) {
                return;
            }
            let waiting =
                self.sessions.get(&session_id).is_some_and(|s| s.phase == PttPhase::WaitResponses && s.peer == from);
            if !waiting {
                self.events.push(MacEvent::PttResUnmatched { from, session: session_id });
            } else {
                let s = self.sessions.get_mut(&session_id).expect("checked");
                s.responses.insert(from, positive);
                s.deadline = None;
                if positive {
                    self.set_phase(session_id, PttPhase::Speech);
                    self.events.push(MacEvent::SessionEstablished { session: session_id });
                } else {
                    self.end_session(
                        session_id,
                        MacEvent::SessionFailed { session: session_id, reason: FailReason::NegativeResponse },
                    );
                }
            }
        }

        let owned: Vec<(u16, OwnedSlot)> = self.owned.iter().map(|(d, s)| (*d, s.clone())).collect();
        for (d, slot) in owned {
            let reported = body.bitmap.get(d);
            let must_yield = match reported {
                BitmapCode::Collision => slot.state == AllocState::Allocating || !slot.used,
                // the sender claims the same slot directly
                BitmapCode::Transmitting => {
                    slot.state == AllocState::Allocating && slot.announced_at.is_none_or(|_| self.id > from)
                }
                _ => continue,
            };
            if reported == BitmapCode::Transmitting && !must_yield {
                continue;
            }
            self.events.push(MacEvent::TsaCollide { data_slot: d, reporter: from, state: slot.state });
            let session = self.sessions.values().find(|s| s.rt_slot == Some(d)).map(|s| s.session_id);
            if must_yield {
                self.release_slot(d);
                if let Some(id) = session {
                    let s = self.sessions.get_mut(&id).expect("found above");
                    s.rt_slot = None;
                    s.request_pending = true;
                    let hold = self.timeline.next_mgmt_occurrence(self.mgmt_slot, now).end_us;
                    self.allocate(id, now, hold, true);
                }
            } else if let Some(id) = session {
                // the slot stays; repeat the request for receivers that lost it
                self.sessions.get_mut(&id).expect("found above").request_pending = true;
            }
        }
    }

    fn rx_deadline(&self, now: u64) -> u64 {
        now + self.params.rx_timeout_frames as u64 * self.timeline.frame_length_us()
    }

    fn on_ptt_sig(&mut self, from: MacAddr, receiver: MacAddr, sig: &PttSigBody, now: u64) {
        match sig {
            PttSigBody::Request { session_id, .. } => {
                let deadline = self.rx_deadline(now);
                let known = self.rx_sessions.get(&from).map(|s| s.session_id);
                if known != Some(*session_id) {
                    if let Some(old) = known {
                        self.rx_sessions.remove(&from);
                        self.events.push(MacEvent::RxSessionClosed { from, session: old, timeout: false });
                    }
                    self.rx_sessions.insert(
                        from,
                        PttSessionState {
                            session_id: *session_id,
                            role: Role::Responder,
                            phase: PttPhase::Speech,
                            peer: from,
                            rt_slot: None,
                            responses: BTreeMap::new(),
                            deadline: Some(deadline),
                            request_pending: false,
                        },
                    );
                    self.events.push(MacEvent::RxSessionOpened { from, session: *session_id });
                } else if let Some(s) = self.rx_sessions.get_mut(&from) {
                    s.deadline = Some(deadline);
                }
                if receiver == self.id
                    && !self.pending_responses.iter().any(|(to, s, _)| *to == from && s == session_id)
                {
                    let positive = self.sessions.is_empty();
                    self.pending_responses.push_back((from, *session_id, positive));
                    self.events.push(MacEvent::PttResQueued { to: from, session: *session_id, positive });
                }
            }
            PttSigBody::Release { session_id } => {
                if self.rx_sessions.get(&from).is_some_and(|s| s.session_id == *session_id) {
                    self.rx_sessions.remove(&from);
                    self.events.push(MacEvent::RxSessionClosed { from, session: *session_id, timeout: false });
                }
            }
            PttSigBody::Relay => {}
        }
    }

    /// Hands voice frames of an open session to the application.
    pub fn on_rt_data_received(&mut self, from: MacAddr, body: &RtDataBody, now: u64) {
        let deadline = self.rx_deadline(now);
        match self.rx_sessions.get_mut(&from) {
            Some(s) => {
                s.deadline = Some(deadline);
                let session = s.session_id;
                self.events.push(MacEvent::VoiceDelivered { from, session, generated_us: body.voice_frames.clone() });
            }
            None => self.events.push(MacEvent::PduDropped { from, reason: DropReason::NoSession }),
        }
    }
}
