use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::metrics::{MetricsReport, NetworkMetrics, ReceiverMetrics, SessionMetrics, Utilization};
use super::queue::EventQueue;
use super::scenario::{Destination, Scenario};
use super::trace::TraceRecord;
use super::SimError;
use crate::codec::{self, Bits, MacAddr, MacPdu, PduBody, Piggyback, PttSigBody, SessionId, SlotAddress};
use crate::mac::{DropReason, MacEvent, NodeMac, SlotAction, SlotPerception};
use crate::phy::{self, LinkSample, Reception};
use crate::tdma::{SlotKind, SlotOccurrence, Timeline};
use crate::traffic::{percentile, PttUser, UserAction};

pub const HARNESS_STREAM: u64 = 0;
const MAC_TAG: u64 = 1;
const RX_TAG: u64 = 2;

const CLASS_SLOT_END: u8 = 0;
const CLASS_OTHER: u8 = 1;

/// Random stream `tag` of node `node` under the root `seed`.
pub fn node_rng(seed: u64, node: usize, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((node as u64) << 8) | tag);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Collect the event trace. Metrics are computed either way.
    pub keep_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { keep_trace: true }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: MetricsReport,
    pub trace: Vec<super::TraceRecord>,
}

pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    run_with(scenario, RunOptions::default())
}

pub fn run_with(scenario: &Scenario, options: RunOptions) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    let mut sim = Sim::new(scenario, options);
    sim.run()?;
    Ok(sim.finish())
}

#[derive(Clone, Copy, Debug)]
enum Ev {
    SlotStart(SlotOccurrence),
    SlotEnd(SlotOccurrence),
    Press(usize),
    Release(usize),
    VoiceTick { node: usize, session: SessionId },
    Sleep(usize),
    Wake(usize),
}

#[derive(Clone, Copy, Debug)]
struct Link {
    sample: LinkSample,
    delay_us: f64,
}

struct Transmission {
    node: usize,
    bits: Bits,
}

struct SessionAcc {
    metrics: SessionMetrics,
    receivers: BTreeMap<usize, Vec<u64>>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    timeline: Timeline,
    macs: Vec<NodeMac>,
    users: Vec<PttUser>,
    rx_rngs: Vec<ChaCha8Rng>,
    queue: EventQueue<Ev>,
    links: Vec<Vec<Link>>,
    guard_us: f64,
    addr_index: BTreeMap<MacAddr, usize>,
    keep_trace: bool,
    trace: Vec<TraceRecord>,
    ledger: Vec<BTreeSet<u16>>,
    on_air: Vec<Transmission>,
    listening: Vec<bool>,
    sessions: Vec<SessionAcc>,
    session_index: BTreeMap<(usize, u16), usize>,
    press_session: Vec<Option<SessionId>>,
    net: NetworkMetrics,
    occurrences: [u64; 3],
    busy: [u64; 3],
}

fn kind_index(kind: SlotKind) -> usize {
    match kind {
        SlotKind::Mgmt => 0,
        SlotKind::Rt => 1,
        SlotKind::Be => 2,
    }
}

fn violation(time_us: u64, node: usize, detail: String) -> SimError {
    SimError::ProtocolViolation { time_us, node, detail }
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario, options: RunOptions) -> Self {
        let n = sc.nodes.len();
        let macs = sc
            .nodes
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                NodeMac::new(spec.id, spec.mgmt_slot, sc.tdma.clone(), sc.engine.clone(), node_rng(sc.seed, i, MAC_TAG))
            })
            .collect();
        let links = sc
            .nodes
            .iter()
            .map(|tx| {
                sc.nodes
                    .iter()
                    .map(|rx| {
                        // coincident positions are rejected by validation; the diagonal is never read
                        let d = tx.distance_to(rx).max(1.0);
                        let sample = phy::link_sample(d, 0, &sc.channel).expect("positive distance");
                        Link { sample, delay_us: phy::propagation_delay_us(d) }
                    })
                    .collect()
            })
            .collect();
        let mut harness = ChaCha8Rng::seed_from_u64(sc.seed);
        harness.set_stream(HARNESS_STREAM);
        Sim {
            sc,
            timeline: Timeline::new(sc.tdma.clone()),
            macs,
            users: (0..n).map(|_| PttUser::new(sc.tdma.voice_frame_interval_us)).collect(),
            rx_rngs: (0..n).map(|i| node_rng(sc.seed, i, RX_TAG)).collect(),
            queue: EventQueue::new(sc.tie_break, harness),
            links,
            guard_us: (sc.tdma.slot_overhead_symbols as u64 * sc.tdma.symbol_duration_us) as f64,
            addr_index: sc.nodes.iter().enumerate().map(|(i, s)| (s.id, i)).collect(),
            keep_trace: options.keep_trace,
            trace: Vec::new(),
            ledger: vec![BTreeSet::new(); n],
            on_air: Vec::new(),
            listening: vec![false; n],
            sessions: Vec::new(),
            session_index: BTreeMap::new(),
            press_session: vec![None; sc.ptt.len()],
            net: NetworkMetrics::default(),
            occurrences: [0; 3],
            busy: [0; 3],
        }
    }

    fn record(&mut self, r: TraceRecord) {
        if self.keep_trace {
            self.trace.push(r);
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        for (i, spec) in self.sc.nodes.iter().enumerate() {
            self.record(
                TraceRecord::new(0, Some(i), "node")
                    .with("id", spec.id.to_string())
                    .with("x", spec.x)
                    .with("y", spec.y)
                    .with("mgmt_slot", spec.mgmt_slot),
            );
        }
        self.queue.push(0, CLASS_OTHER, Ev::SlotStart(self.timeline.occurrence(0, 0)));
        for (k, a) in self.sc.ptt.iter().enumerate() {
            self.queue.push(a.press_us, CLASS_OTHER, Ev::Press(k));
            self.queue.push(a.press_us + a.talk_us, CLASS_OTHER, Ev::Release(k));
        }
        for s in &self.sc.sleep {
            self.queue.push(s.from_us, CLASS_OTHER, Ev::Sleep(s.node));
            self.queue.push(s.to_us, CLASS_OTHER, Ev::Wake(s.node));
        }
        while let Some((t, ev)) = self.queue.pop() {
            if t >= self.sc.duration_us && !matches!(ev, Ev::SlotEnd(_)) {
                continue;
            }
            match ev {
                Ev::SlotStart(occ) => self.slot_start(occ, t)?,
                Ev::SlotEnd(occ) => self.slot_end(occ, t)?,
                Ev::Press(k) => self.press(k, t)?,
                Ev::Release(k) => self.release(k, t)?,
                Ev::VoiceTick { node, session } => self.voice_tick(node, session, t),
                Ev::Sleep(i) => {
                    self.macs[i].sleep();
                    self.record(TraceRecord::new(t, Some(i), "sleep"));
                }
                Ev::Wake(i) => {
                    self.macs[i].wake();
                    self.record(TraceRecord::new(t, Some(i), "wake"));
                }
            }
        }
        Ok(())
    }

    fn node_order(&mut self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.macs.len()).collect();
        self.queue.shuffle(&mut order);
        order
    }

    fn slot_start(&mut self, occ: SlotOccurrence, t: u64) -> Result<(), SimError> {
        self.queue.push(occ.end_us, CLASS_SLOT_END, Ev::SlotEnd(occ));
        let next = self.timeline.next(&occ);
        self.queue.push(next.start_us, CLASS_OTHER, Ev::SlotStart(next));
        self.occurrences[kind_index(occ.kind)] += 1;
        self.listening.iter_mut().for_each(|l| *l = false);
        for i in self.node_order() {
            let action = self.macs[i].on_slot_boundary(&occ, t);
            self.drain(i, t)?;
            match action {
                SlotAction::Transmit(pdu) => self.transmit(i, &occ, pdu, t)?,
                SlotAction::Listen => self.listening[i] = true,
                SlotAction::Sleep => {}
            }
        }
        if !self.on_air.is_empty() {
            self.busy[kind_index(occ.kind)] += 1;
        }
        Ok(())
    }

    /// Slot discipline oracle.
    fn check_discipline(&self, i: usize, occ: &SlotOccurrence, pdu: &MacPdu, t: u64) -> Result<(), SimError> {
        let spec = &self.sc.nodes[i];
        if pdu.transmitter() != spec.id {
            return Err(violation(
                t,
                i,
                format!("transmitter field {} is not the node address {}", pdu.transmitter(), spec.id),
            ));
        }
        let fc = &pdu.header.frame_control;
        let addr = SlotAddress {
            cycle_type: fc.cycle_type,
            frame_index: fc.frame_index,
            slot_id_in_cycle: fc.slot_id_in_cycle,
            slot_id_in_frame: fc.slot_id_in_frame,
        };
        if addr != SlotAddress::from(occ) {
            return Err(violation(t, i, format!("header addresses {addr:?}, slot is {:?}", SlotAddress::from(occ))));
        }
        if pdu.pdu_type().slot_kind() != occ.kind {
            return Err(violation(t, i, format!("{} PDU in a {} slot", pdu.pdu_type().name(), occ.kind.name())));
        }
        match occ.data_slot {
            None if occ.slot_id_in_cycle != spec.mgmt_slot => Err(violation(
                t,
                i,
                format!(
                    "transmission in MGMT slot {} owned by another node (own slot {})",
                    occ.slot_id_in_cycle, spec.mgmt_slot
                ),
            )),
            Some(d) if !self.ledger[i].contains(&d) => {
                Err(violation(t, i, format!("transmission in data slot {d} not allocated to the node")))
            }
            _ => Ok(()),
        }
    }

    fn transmit(&mut self, i: usize, occ: &SlotOccurrence, pdu: MacPdu, t: u64) -> Result<(), SimError> {
        self.check_discipline(i, occ, &pdu, t)?;
        let bits =
            codec::encode(&pdu, &self.sc.tdma).map_err(|source| SimError::Encode { time_us: t, node: i, source })?;
        let mut rec = TraceRecord::new(t, Some(i), "tx")
            .with("slot_kind", occ.kind.name())
            .with("slot_id_in_cycle", occ.slot_id_in_cycle)
            .with("pdu", pdu.pdu_type().name())
            .with("receiver", pdu.header.receiver.to_string())
            .with("seq", pdu.header.sequence.sequence)
            .with("bits", bits.len());
        if let Some(d) = occ.data_slot {
            rec = rec.with("data_slot", d);
        }
        match &pdu.body {
            PduBody::Mgmt(m) => {
                let piggyback = match m.piggyback {
                    Piggyback::Beacon => json!("beacon"),
                    Piggyback::PttRes { positive, session_id } => {
                        json!({"ptt_res": {"positive": positive, "session": session_id.raw()}})
                    }
                    Piggyback::Qll { .. } => json!("qll"),
                };
                rec = rec
                    .with("bitmap", m.bitmap.to_string())
                    .with("collision_slots", m.bitmap.slots_with(codec::BitmapCode::Collision))
                    .with("piggyback", piggyback);
            }
            PduBody::PttSig(sig) => {
                let (name, session) = match sig {
                    PttSigBody::Request { session_id, .. } => ("request", Some(session_id.raw())),
                    PttSigBody::Release { session_id } => ("release", Some(session_id.raw())),
                    PttSigBody::Relay => ("relay", None),
                };
                rec = rec.with("signal", name).with("session", session);
            }
            PduBody::RtData(rt) => {
                let session =
                    self.macs[i].sessions().values().find(|s| s.rt_slot == occ.data_slot).map(|s| s.session_id);
                if let Some(acc) = session.and_then(|s| self.session_index.get(&(i, s.raw()))) {
                    self.sessions[*acc].metrics.transmitted += rt.voice_frames.len() as u64;
                }
                rec = rec
                    .with("session", session.map(SessionId::raw))
                    .with("frames", rt.voice_frames.len())
                    .with("generated_us", rt.voice_frames.clone());
            }
            PduBody::BeData(_) => {}
        }
        self.record(rec);
        self.on_air.push(Transmission { node: i, bits });
        Ok(())
    }

    fn slot_end(&mut self, occ: SlotOccurrence, t: u64) -> Result<(), SimError> {
        let on_air = std::mem::take(&mut self.on_air);
        let params = &self.sc.channel;
        for i in self.node_order() {
            if !self.listening[i] {
                continue;
            }
            let sensed = on_air.iter().filter(|tx| self.links[tx.node][i].sample.snr_db >= params.sense_snr_db).count();
            let mut decoded = false;
            if sensed > 0 {
                let strongest = on_air
                    .iter()
                    .enumerate()
                    .max_by(|(a, x), (b, y)| {
                        let px = self.links[x.node][i].sample.rx_power_dbm;
                        let py = self.links[y.node][i].sample.rx_power_dbm;
                        px.total_cmp(&py).then(b.cmp(a))
                    })
                    .map(|(k, _)| k)
                    .expect("sensed implies a transmission");
                let wanted = &on_air[strongest];
                let link = self.links[wanted.node][i];
                let interference: Vec<f64> = on_air
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != strongest)
                    .map(|(_, tx)| self.links[tx.node][i].sample.rx_power_dbm)
                    .collect();
                let sinr = phy::sinr_with_interference(&link.sample, &interference);
                let per = if link.delay_us > self.guard_us {
                    1.0
                } else {
                    phy::frame_error_probability(sinr, wanted.bits.len(), params)
                };
                let draw: f64 = self.rx_rngs[i].random();
                let pdu = match phy::receive_decision(per, draw) {
                    Reception::Delivered => codec::decode(&wanted.bits, &self.sc.tdma, occ.kind).ok(),
                    Reception::Lost => None,
                };
                decoded = pdu.is_some();
                if decoded {
                    self.net.frames_decoded += 1;
                } else {
                    self.net.frames_lost += 1;
                }
                let rec = TraceRecord::new(t, Some(i), "rx")
                    .with("from", wanted.node)
                    .with("slot_kind", occ.kind.name())
                    .with("slot_id_in_cycle", occ.slot_id_in_cycle)
                    .with("ok", decoded)
                    .with("sensed", sensed)
                    .with("sinr_db", (sinr * 1e6).round() / 1e6);
                self.record(rec);
                if let Some(pdu) = pdu {
                    self.macs[i].on_frame_received(&pdu, t);
                    self.drain(i, t)?;
                }
            }
            if sensed >= 2 && !decoded {
                self.net.collisions_perceived += 1;
                self.net.convergence_time_us = self.net.convergence_time_us.max(t);
                let mut rec = TraceRecord::new(t, Some(i), "collision_perceived").with("sensed", sensed);
                if let Some(d) = occ.data_slot {
                    rec = rec.with("data_slot", d);
                }
                self.record(rec);
            }
            if let Some(d) = occ.data_slot {
                self.macs[i].on_slot_perceived(d, SlotPerception { sensed, decoded });
            }
        }
        for tx in &on_air {
            self.macs[tx.node].on_transmit_complete(t);
            self.drain(tx.node, t)?;
        }
        Ok(())
    }

    fn acc(&mut self, node: usize, session: SessionId) -> Option<&mut SessionAcc> {
        let k = *self.session_index.get(&(node, session.raw()))?;
        self.sessions.get_mut(k)
    }

    fn drain(&mut self, i: usize, t: u64) -> Result<(), SimError> {
        for ev in self.macs[i].drain_events() {
            self.record(TraceRecord::from_tagged(t, Some(i), &ev));
            match ev {
                MacEvent::TsaSelect { data_slot, reselect, .. } => {
                    self.ledger[i].insert(data_slot);
                    self.net.tsa_attempts += 1;
                    self.net.tsa_reselections += reselect as u64;
                }
                MacEvent::TsaNoFree { .. } => {
                    self.net.tsa_attempts += 1;
                    self.net.tsa_no_free += 1;
                }
                MacEvent::TsaCollide { .. } => {
                    self.net.tsa_collisions += 1;
                    self.net.convergence_time_us = self.net.convergence_time_us.max(t);
                }
                MacEvent::TsaConfirm { .. } => self.net.tsa_confirms += 1,
                MacEvent::TsaRelease { data_slot } => {
                    self.ledger[i].remove(&data_slot);
                }
                MacEvent::SessionEstablished { session } => {
                    self.net.sessions_established += 1;
                    if let Some(acc) = self.acc(i, session) {
                        acc.metrics.established = true;
                        acc.metrics.establishment_latency_us = Some(t - acc.metrics.press_us);
                    }
                    self.established(i, session, t)?;
                }
                MacEvent::SessionFailed { session, .. } => {
                    self.net.sessions_failed += 1;
                    if let Some(acc) = self.acc(i, session) {
                        acc.metrics.failed = true;
                    }
                    if self.users[i].active_session() == Some(session) {
                        self.users[i].on_session_failed();
                    }
                }
                MacEvent::SessionClosed { session } => {
                    if let Some(acc) = self.acc(i, session) {
                        acc.metrics.closed = true;
                    }
                    if self.users[i].active_session() == Some(session) {
                        self.users[i].on_session_closed();
                    }
                }
                MacEvent::PttResUnmatched { .. } => self.net.ptt_res_unmatched += 1,
                MacEvent::PttResUnsendable { .. } => self.net.ptt_res_unsendable += 1,
                MacEvent::PduDropped { reason: DropReason::NoSession, .. } => self.net.rt_data_dropped += 1,
                MacEvent::PduDropped { reason: DropReason::Duplicate, .. } => self.net.duplicates_dropped += 1,
                MacEvent::VoiceDelivered { from, session, generated_us } => {
                    let Some(&j) = self.addr_index.get(&from) else { continue };
                    if let Some(acc) = self.acc(j, session) {
                        if let Some(lat) = acc.receivers.get_mut(&i) {
                            lat.extend(generated_us.iter().map(|g| t.saturating_sub(*g)));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn established(&mut self, i: usize, session: SessionId, t: u64) -> Result<(), SimError> {
        if self.users[i].active_session() != Some(session) {
            return Ok(());
        }
        match self.users[i].on_session_established(t) {
            Ok(UserAction::StartVoice { .. }) => self.voice_tick(i, session, t),
            Ok(UserAction::Release) => self.mac_release(i, session, t)?,
            Ok(UserAction::None) | Err(_) => {}
        }
        Ok(())
    }

    fn voice_tick(&mut self, i: usize, session: SessionId, t: u64) {
        if self.users[i].active_session() != Some(session) {
            return;
        }
        let Some((frame, next)) = self.users[i].on_voice_tick(t) else { return };
        match self.macs[i].enqueue_voice(frame) {
            Ok(()) => {
                if let Some(acc) = self.acc(i, session) {
                    acc.metrics.generated += 1;
                }
                self.record(TraceRecord::new(t, Some(i), "voice_generated").with("session", session.raw()));
            }
            Err(e) => self.record(TraceRecord::new(t, Some(i), "voice_rejected").with("error", e.to_string())),
        }
        self.queue.push(next, CLASS_OTHER, Ev::VoiceTick { node: i, session });
    }

    fn mac_release(&mut self, i: usize, session: SessionId, t: u64) -> Result<(), SimError> {
        match self.macs[i].ptt_release(session, t) {
            Ok(flushed) => {
                if let Some(acc) = self.acc(i, session) {
                    acc.metrics.dropped_at_release += flushed as u64;
                }
            }
            Err(e) => self.record(TraceRecord::new(t, Some(i), "release_rejected").with("error", e.to_string())),
        }
        self.drain(i, t)
    }

    fn receivers(&self, i: usize, dest: Destination) -> BTreeMap<usize, Vec<u64>> {
        match dest {
            Destination::Node(j) => BTreeMap::from([(j, Vec::new())]),
            Destination::Broadcast => (0..self.macs.len())
                .filter(|j| *j != i && self.links[i][*j].sample.snr_db >= self.sc.channel.min_sinr_db)
                .map(|j| (j, Vec::new()))
                .collect(),
        }
    }

    fn press(&mut self, k: usize, t: u64) -> Result<(), SimError> {
        let a = self.sc.ptt[k];
        let i = a.node;
        let (dest_addr, dest_name) = match a.destination {
            Destination::Broadcast => (MacAddr::BROADCAST, "broadcast".to_owned()),
            Destination::Node(j) => (self.sc.nodes[j].id, j.to_string()),
        };
        self.record(TraceRecord::new(t, Some(i), "ptt_press").with("action", k).with("destination", dest_name.clone()));
        if let Err(e) = self.users[i].on_press() {
            self.record(TraceRecord::new(t, Some(i), "ptt_ignored").with("action", k).with("error", e.to_string()));
            return Ok(());
        }
        match self.macs[i].ptt_request(dest_addr, t) {
            Ok(session) => {
                self.users[i].bind_session(session);
                self.press_session[k] = Some(session);
                let acc = SessionAcc {
                    metrics: SessionMetrics {
                        node: i,
                        session_id: session.raw(),
                        destination: dest_name,
                        press_us: t,
                        ..Default::default()
                    },
                    receivers: self.receivers(i, a.destination),
                };
                self.session_index.insert((i, session.raw()), self.sessions.len());
                self.sessions.push(acc);
                self.drain(i, t)
            }
            Err(e) => {
                self.users[i].on_session_failed();
                self.record(
                    TraceRecord::new(t, Some(i), "ptt_rejected").with("action", k).with("error", e.to_string()),
                );
                Ok(())
            }
        }
    }

    fn release(&mut self, k: usize, t: u64) -> Result<(), SimError> {
        let i = self.sc.ptt[k].node;
        let Some(session) = self.press_session[k] else { return Ok(()) };
        if self.users[i].active_session() != Some(session) {
            return Ok(());
        }
        self.record(TraceRecord::new(t, Some(i), "ptt_release").with("action", k).with("session", session.raw()));
        match self.users[i].on_release() {
            UserAction::Release => self.mac_release(i, session, t),
            _ => Ok(()),
        }
    }

    fn finish(mut self) -> RunOutput {
        let t = self.sc.duration_us;
        for acc in &mut self.sessions {
            let m = &mut acc.metrics;
            let id = SessionId::new(m.session_id).expect("15-bit id");
            m.queued_at_end = self.macs[m.node].voice_queued(id) as u64;
            let mut all = Vec::new();
            m.receivers = acc
                .receivers
                .iter()
                .map(|(node, lat)| {
                    all.extend_from_slice(lat);
                    let delivered = lat.len() as u64;
                    ReceiverMetrics {
                        node: *node,
                        delivered,
                        lost: m.transmitted.saturating_sub(delivered),
                        latency_p50_us: percentile(lat, 50.0),
                        latency_p95_us: percentile(lat, 95.0),
                        latency_max_us: lat.iter().copied().max(),
                    }
                })
                .collect();
            m.delivered = m.receivers.iter().map(|r| r.delivered).sum();
            m.lost = m.receivers.iter().map(|r| r.lost).sum();
            let expected = m.transmitted * m.receivers.len() as u64;
            m.delivery_ratio = (expected > 0).then(|| m.delivered as f64 / expected as f64);
            m.latency_p50_us = percentile(&all, 50.0);
            m.latency_p95_us = percentile(&all, 95.0);
            m.latency_max_us = all.iter().copied().max();
        }
        let ratio =
            |k: usize| if self.occurrences[k] == 0 { 0.0 } else { self.busy[k] as f64 / self.occurrences[k] as f64 };
        let utilization = Utilization { mgmt: ratio(0), rt: ratio(1), be: ratio(2) };
        let queued: Vec<usize> = self.macs.iter().map(NodeMac::voice_queue_len).collect();
        let end = TraceRecord::new(t, None, "run_end")
            .with(
                "occurrences",
                json!({"mgmt": self.occurrences[0], "rt": self.occurrences[1], "be": self.occurrences[2]}),
            )
            .with("busy", json!({"mgmt": self.busy[0], "rt": self.busy[1], "be": self.busy[2]}))
            .with("queued", queued);
        self.record(end);
        let metrics = MetricsReport {
            seed: self.sc.seed,
            duration_us: self.sc.duration_us,
            nodes: self.sc.nodes.len(),
            network: self.net,
            utilization,
            sessions: self.sessions.into_iter().map(|a| a.metrics).collect(),
        };
        RunOutput { metrics, trace: self.trace }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{NodeSpec, PttAction};
    use crate::tdma::TdmaConfig;

    fn two_nodes(duration_us: u64) -> Scenario {
        let mut s = Scenario::new(
            TdmaConfig::solution(3).unwrap(),
            vec![NodeSpec::at(0, 0.0, 0.0), NodeSpec::at(1, 100.0, 0.0)],
            duration_us,
            7,
        );
        s.channel.ideal = true;
        s
    }

    #[test]
    fn idle_network_only_beacons() {
        let out = run(&two_nodes(1_280_000)).unwrap();
        let m = &out.metrics;
        assert!(m.sessions.is_empty());
        assert_eq!(m.utilization.rt, 0.0);
        assert_eq!(m.utilization.be, 0.0);
        // 2 of 148 MGMT slots per frame are occupied
        assert!((m.utilization.mgmt - 2.0 / 148.0).abs() < 1e-12);
        assert_eq!(m.network.frames_decoded, 20);
        assert_eq!(out.trace.iter().filter(|r| r.kind == "tx").count(), 20);
    }

    #[test]
    fn broadcast_session_delivers_voice() {
        let mut s = two_nodes(2_500_000);
        s.ptt.push(PttAction { node: 0, press_us: 1_000, talk_us: 2_000_000, destination: Destination::Broadcast });
        let m = run(&s).unwrap().metrics;
        let sm = &m.sessions[0];
        assert!(sm.established);
        assert!(sm.establishment_latency_us.unwrap() <= 128_000);
        assert!(sm.generated > 80);
        assert_eq!(sm.generated, sm.transmitted + sm.dropped_at_release + sm.queued_at_end);
        assert_eq!(sm.delivery_ratio, Some(1.0));
        assert!(sm.latency_max_us.unwrap() <= 250_000);
        assert!(sm.closed);
    }

    #[test]
    fn streams_are_independent_of_node_count() {
        let a: f64 = node_rng(5, 3, RX_TAG).random();
        let b: f64 = node_rng(5, 3, RX_TAG).random();
        let c: f64 = node_rng(5, 3, MAC_TAG).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
