#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use bitvec::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use wbwf_core::codec::{
    BeDataBody, BitmapCode, Bits, CodecId, CodingRate, MacAddr, MacPdu, MgmtBody, PduBody, PduType, Piggyback,
    PttSigBody, RtDataBody, SessionId, SlotAddress, SlotBitmap, HEADER_BITS,
};
use wbwf_core::sim::{Destination, MetricsReport, NodeSpec, PttAction, Scenario, SleepAction, TieBreak, TraceRecord};
use wbwf_core::tdma::{SlotKind, TdmaConfig};

pub const ALL_TYPES: [PduType; 4] = [PduType::Mgmt, PduType::PttSig, PduType::RtData, PduType::BeData];

pub fn random_slot<R: Rng>(rng: &mut R, cfg: &TdmaConfig, kind: SlotKind) -> SlotAddress {
    SlotAddress {
        cycle_type: kind,
        frame_index: rng.random_range(0..cfg.cycle_frames(kind)) as u8,
        slot_id_in_cycle: rng.random_range(0..cfg.slots_per_cycle(kind).min(512)) as u16,
        slot_id_in_frame: rng.random_range(0..cfg.slots_per_frame().min(512)) as u16,
    }
}

fn random_session<R: Rng>(rng: &mut R) -> SessionId {
    SessionId::new(rng.random_range(0..=0x7FFF)).unwrap()
}

/// Padding bits behind the MGMT bitmap, derived from the slot capacity.
pub fn mgmt_padding(cfg: &TdmaConfig) -> usize {
    cfg.slot_capacity_bits(SlotKind::Mgmt) - HEADER_BITS - 2 * cfg.data_slots_per_cycle() as usize
}

pub fn random_body<R: Rng>(rng: &mut R, cfg: &TdmaConfig, ty: PduType) -> PduBody {
    match ty {
        PduType::Mgmt => {
            let n = cfg.data_slots_per_cycle() as usize;
            let codes = (0..n).map(|_| BitmapCode::from_code(rng.random_range(0..4))).collect();
            let padding = mgmt_padding(cfg);
            let piggyback = match rng.random_range(0..3) {
                1 if padding >= 16 => Piggyback::PttRes { positive: rng.random(), session_id: random_session(rng) },
                2 => Piggyback::Qll { raw: (0..padding).map(|_| rng.random::<bool>()).collect() },
                _ => Piggyback::Beacon,
            };
            PduBody::Mgmt(MgmtBody { bitmap: SlotBitmap::from_codes(codes), piggyback })
        }
        PduType::PttSig => PduBody::PttSig(match rng.random_range(0..3) {
            0 => PttSigBody::Request {
                session_id: random_session(rng),
                codec: CodecId(rng.random_range(0..16)),
                rate: CodingRate::from_code(rng.random_range(0..3)).unwrap(),
            },
            1 => PttSigBody::Release { session_id: random_session(rng) },
            _ => PttSigBody::Relay,
        }),
        PduType::RtData => {
            let n = rng.random_range(1..=cfg.rt_voice_frames_per_slot as usize);
            let mask = (1u64 << cfg.voice_frame_bits) - 1;
            PduBody::RtData(RtDataBody {
                rate: CodingRate::from_code(rng.random_range(0..3)).unwrap(),
                voice_frames: (0..n).map(|_| rng.random::<u64>() & mask).collect(),
            })
        }
        PduType::BeData => {
            let payload = (0..cfg.be_payload_bytes).map(|_| rng.random()).collect();
            PduBody::BeData(BeDataBody { payload })
        }
    }
}

pub fn random_pdu<R: Rng>(rng: &mut R, cfg: &TdmaConfig, ty: PduType) -> MacPdu {
    let body = random_body(rng, cfg, ty);
    let slot = random_slot(rng, cfg, ty.slot_kind());
    let mut pdu =
        MacPdu::new(MacAddr::new(rng.random()), MacAddr::new(rng.random()), rng.random_range(0..4096), slot, body);
    if let PduBody::RtData(_) = pdu.body {
        // the RT subtype carries the codec id
        pdu.header.frame_control.subtype = rng.random_range(0..8);
    }
    pdu
}

/// Bytes whose LSB-first transmission is `bits`.
pub fn lsb_first_bytes(bits: &BitSlice<u8, Msb0>) -> Vec<u8> {
    assert_eq!(bits.len() % 8, 0);
    bits.chunks(8).map(|c| c.iter().by_vals().enumerate().fold(0u8, |b, (i, v)| b | ((v as u8) << i))).collect()
}

/// FCS check with an external CRC-32 implementation.
pub fn external_fcs_ok(frame: &Bits) -> bool {
    let (body, fcs) = frame.split_at(frame.len() - 32);
    let expected = crc32fast::hash(&lsb_first_bytes(body));
    let received = fcs.iter().by_vals().enumerate().fold(0u32, |v, (i, b)| v | ((b as u32) << i));
    expected == received
}

pub fn two_node_broadcast(talk_us: u64, duration_us: u64, seed: u64) -> Scenario {
    let mut s = Scenario::new(
        TdmaConfig::solution(3).unwrap(),
        vec![NodeSpec::at(0, 0.0, 0.0), NodeSpec::at(1, 100.0, 0.0)],
        duration_us,
        seed,
    );
    s.channel.ideal = true;
    s.ptt.push(PttAction { node: 0, press_us: 5_000, talk_us, destination: Destination::Broadcast });
    s
}

/// A-B-C chain, 700 m hops: A and C are out of each other's sensing range.
/// A presses at `press_a`, C at `press_c`.
pub fn hidden_chain(seed: u64, press_a: u64, press_c: u64) -> Scenario {
    let mut s = Scenario::new(
        TdmaConfig::solution(3).unwrap(),
        vec![NodeSpec::at(0, 0.0, 0.0), NodeSpec::at(1, 700.0, 0.0), NodeSpec::at(2, 1400.0, 0.0)],
        3_000_000,
        seed,
    );
    s.channel.ideal = true;
    for (node, press_us) in [(0, press_a), (2, press_c)] {
        s.ptt.push(PttAction { node, press_us, talk_us: 2_500_000, destination: Destination::Broadcast });
    }
    s
}

/// Ten nodes scattered over 1.8 km, random talk spurts, calls and one nap.
pub fn fuzz_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF0F0);
    let cfg = TdmaConfig::solution(rng.random_range(1..=3)).unwrap();
    let nodes =
        (0..10).map(|i| NodeSpec::at(i, rng.random_range(0.0..1800.0), rng.random_range(0.0..1800.0))).collect();
    let duration = 2_000_000;
    let mut s = Scenario::new(cfg, nodes, duration, seed);
    s.tie_break = TieBreak::Shuffled;
    for _ in 0..rng.random_range(5..20) {
        let node = rng.random_range(0..10);
        let destination = if rng.random_bool(0.3) {
            Destination::Node((node + rng.random_range(1..10)) % 10)
        } else {
            Destination::Broadcast
        };
        s.ptt.push(PttAction {
            node,
            press_us: rng.random_range(0..duration),
            talk_us: rng.random_range(1_000..800_000),
            destination,
        });
    }
    if rng.random_bool(0.5) {
        let from = rng.random_range(0..duration);
        s.sleep.push(SleepAction {
            node: rng.random_range(0..10),
            from_us: from,
            to_us: from + rng.random_range(1..500_000),
        });
    }
    s
}

pub fn jsonl(trace: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    wbwf_core::sim::write_jsonl(trace, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

pub fn metrics_csv(m: &MetricsReport) -> String {
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

/// Slots owned by each node at time `t`, from select/release records.
pub fn allocation_at(trace: &[TraceRecord], t: u64) -> BTreeMap<usize, BTreeSet<u64>> {
    let mut owned: BTreeMap<usize, BTreeSet<u64>> = BTreeMap::new();
    for r in trace.iter().take_while(|r| r.time_us <= t) {
        let Some(node) = r.node else { continue };
        match r.kind.as_str() {
            "tsa_select" => {
                owned.entry(node).or_default().insert(r.u64("data_slot").unwrap());
            }
            "tsa_release" => {
                owned.entry(node).or_default().remove(&r.u64("data_slot").unwrap());
            }
            _ => {}
        }
    }
    owned
}

/// Metrics recomputed from nothing but the trace.
#[derive(Debug, Default, PartialEq)]
pub struct Recount {
    pub tsa_attempts: u64,
    pub tsa_reselections: u64,
    pub tsa_collisions: u64,
    pub frames_decoded: u64,
    pub frames_lost: u64,
    pub collisions_perceived: u64,
    pub convergence_time_us: u64,
    pub sessions_established: u64,
    pub sessions_failed: u64,
    pub busy: [u64; 3],
    pub occurrences: [u64; 3],
    /// (node, session) -> (generated, transmitted, delivered per receiver, max latency)
    pub sessions: BTreeMap<(usize, u64), SessionRecount>,
}

#[derive(Debug, Default, PartialEq)]
pub struct SessionRecount {
    pub press_us: Option<u64>,
    pub established_us: Option<u64>,
    pub generated: u64,
    pub transmitted: u64,
    pub delivered: BTreeMap<usize, u64>,
    pub latencies: Vec<u64>,
}

fn kind_slot(name: &str) -> usize {
    match name {
        "MGMT" => 0,
        "RT" => 1,
        "BE" => 2,
        other => panic!("unknown slot kind {other}"),
    }
}

pub fn recount(trace: &[TraceRecord]) -> Recount {
    let mut rc = Recount::default();
    let mut addr_to_node = BTreeMap::new();
    let mut busy: BTreeSet<(u64, usize, u64)> = BTreeSet::new();
    let mut pending_press: BTreeMap<usize, u64> = BTreeMap::new();
    for r in trace {
        let node = r.node;
        match r.kind.as_str() {
            "node" => {
                addr_to_node.insert(r.str("id").unwrap().to_owned(), node.unwrap());
            }
            "tsa_select" => {
                rc.tsa_attempts += 1;
                rc.tsa_reselections += r.get("reselect").and_then(Value::as_bool).unwrap() as u64;
            }
            "tsa_no_free" => rc.tsa_attempts += 1,
            "tsa_collide" => {
                rc.tsa_collisions += 1;
                rc.convergence_time_us = rc.convergence_time_us.max(r.time_us);
            }
            "collision_perceived" => {
                rc.collisions_perceived += 1;
                rc.convergence_time_us = rc.convergence_time_us.max(r.time_us);
            }
            "rx" => {
                if r.get("ok").and_then(Value::as_bool).unwrap() {
                    rc.frames_decoded += 1;
                } else {
                    rc.frames_lost += 1;
                }
            }
            "ptt_press" => {
                pending_press.insert(node.unwrap(), r.time_us);
            }
            "ptt_phase" if r.str("phase") == Some("requesting") => {
                let n = node.unwrap();
                let s = rc.sessions.entry((n, r.u64("session").unwrap())).or_default();
                s.press_us = pending_press.remove(&n);
            }
            "session_established" => {
                rc.sessions_established += 1;
                let s = rc.sessions.entry((node.unwrap(), r.u64("session").unwrap())).or_default();
                s.established_us = Some(r.time_us);
            }
            "session_failed" => rc.sessions_failed += 1,
            "voice_generated" => {
                rc.sessions.entry((node.unwrap(), r.u64("session").unwrap())).or_default().generated += 1;
            }
            "tx" => {
                let k = kind_slot(r.str("slot_kind").unwrap());
                busy.insert((r.time_us, k, r.u64("slot_id_in_cycle").unwrap()));
                if r.str("pdu") == Some("RT_DATA") {
                    if let Some(sid) = r.u64("session") {
                        rc.sessions.entry((node.unwrap(), sid)).or_default().transmitted += r.u64("frames").unwrap();
                    }
                }
            }
            "voice_delivered" => {
                let from = addr_to_node[r.str("from").unwrap()];
                let s = rc.sessions.entry((from, r.u64("session").unwrap())).or_default();
                let gens = r.get("generated_us").and_then(Value::as_array).unwrap();
                *s.delivered.entry(node.unwrap()).or_default() += gens.len() as u64;
                s.latencies.extend(gens.iter().map(|g| r.time_us - g.as_u64().unwrap()));
            }
            "run_end" => {
                let occ = r.get("occurrences").unwrap();
                for (k, name) in ["mgmt", "rt", "be"].iter().enumerate() {
                    rc.occurrences[k] = occ[name].as_u64().unwrap();
                }
            }
            _ => {}
        }
    }
    for (_, k, _) in busy {
        rc.busy[k] += 1;
    }
    rc
}

/// Compares a report with the recount; returns the first mismatch.
pub fn check_against_trace(m: &MetricsReport, trace: &[TraceRecord]) -> Result<(), String> {
    let rc = recount(trace);
    let n = &m.network;
    let pairs = [
        ("tsa_attempts", n.tsa_attempts, rc.tsa_attempts),
        ("tsa_reselections", n.tsa_reselections, rc.tsa_reselections),
        ("tsa_collisions", n.tsa_collisions, rc.tsa_collisions),
        ("frames_decoded", n.frames_decoded, rc.frames_decoded),
        ("frames_lost", n.frames_lost, rc.frames_lost),
        ("collisions_perceived", n.collisions_perceived, rc.collisions_perceived),
        ("convergence_time_us", n.convergence_time_us, rc.convergence_time_us),
        ("sessions_established", n.sessions_established, rc.sessions_established),
        ("sessions_failed", n.sessions_failed, rc.sessions_failed),
    ];
    for (name, reported, recounted) in pairs {
        if reported != recounted {
            return Err(format!("{name}: report {reported}, trace {recounted}"));
        }
    }
    let util = [m.utilization.mgmt, m.utilization.rt, m.utilization.be];
    for (k, reported) in util.iter().enumerate() {
        let expect = if rc.occurrences[k] == 0 { 0.0 } else { rc.busy[k] as f64 / rc.occurrences[k] as f64 };
        if (reported - expect).abs() > 1e-12 {
            return Err(format!("utilization[{k}]: report {reported}, trace {expect}"));
        }
    }
    for s in &m.sessions {
        let key = (s.node, s.session_id as u64);
        let r = rc.sessions.get(&key).ok_or_else(|| format!("session {key:?} missing from trace"))?;
        if r.generated != s.generated || r.transmitted != s.transmitted {
            return Err(format!(
                "session {key:?}: generated/transmitted {}/{} vs {}/{}",
                s.generated, s.transmitted, r.generated, r.transmitted
            ));
        }
        let latency = match (r.press_us, r.established_us) {
            (Some(p), Some(e)) => Some(e - p),
            _ => None,
        };
        if latency != s.establishment_latency_us {
            return Err(format!("session {key:?}: establishment {:?} vs {latency:?}", s.establishment_latency_us));
        }
        for recv in &s.receivers {
            let d = r.delivered.get(&recv.node).copied().unwrap_or(0);
            if d != recv.delivered {
                return Err(format!("session {key:?} receiver {}: delivered {} vs {d}", recv.node, recv.delivered));
            }
        }
        if s.latency_max_us != r.latencies.iter().copied().max() && s.receivers.len() == r.delivered.len() {
            return Err(format!(
                "session {key:?}: max latency {:?} vs {:?}",
                s.latency_max_us,
                r.latencies.iter().max()
            ));
        }
    }
    Ok(())
}
