use std::fmt;

use super::{PlannerInput, TdmaConfig, BITMAP_ENTRY_BITS, MAX_CYCLE_FRAMES, MAX_INDEXABLE_SLOTS};
use crate::par::{self, Execution};

/// Width of the coding-rate field that leads every RT-DATA body.
pub(crate) const RT_RATE_FIELD_BITS: u32 = 3;
/// Largest value of the 3-bit Encapsulated SDUs field.
const MAX_ENCAPSULATED_SDUS: u32 = 7;

/// OFDM symbols needed by a slot carrying `payload_bits` behind the MAC header.
///
/// The PDU is rounded up to whole symbols and the per-slot preamble/guard
/// overhead is added on top.
pub fn slot_symbols_for_payload(payload_bits: u32, input: &PlannerInput) -> u32 {
    (input.mac_header_bits + payload_bits).div_ceil(input.bits_per_symbol) + input.slot_overhead_symbols
}

fn voice_frames_per_slot(frame_length_us: u64, input: &PlannerInput) -> u32 {
    frame_length_us.div_ceil(input.voice_frame_interval_us) as u32
}

/// Derives every dependent field of a plan from its slot counts.
fn assemble(
    input: &PlannerInput,
    frame_length_us: u64,
    mgmt_slots: u32,
    rt_slots: u32,
    be_slots: u32,
    be_payload_bytes: u32,
) -> TdmaConfig {
    let data_slots = rt_slots * input.rt_cycle_frames + be_slots * input.be_cycle_frames;
    let bitmap_bits = BITMAP_ENTRY_BITS * data_slots;
    let mgmt_slot_symbols = slot_symbols_for_payload(bitmap_bits, input);
    let mgmt_pdu_bits = input.mac_header_bits + bitmap_bits;
    let mgmt_capacity = (mgmt_slot_symbols - input.slot_overhead_symbols) * input.bits_per_symbol;
    let voice_frames = voice_frames_per_slot(frame_length_us, input);
    TdmaConfig {
        frame_length_us,
        symbol_duration_us: input.ofdm_symbol_duration_us,
        bits_per_symbol: input.bits_per_symbol,
        mac_header_bits: input.mac_header_bits,
        slot_overhead_symbols: input.slot_overhead_symbols,
        mgmt_slots,
        rt_slots,
        be_slots,
        mgmt_slot_symbols,
        rt_slot_symbols: slot_symbols_for_payload(voice_frames * input.voice_frame_bits, input),
        be_slot_symbols: slot_symbols_for_payload(be_payload_bytes * 8, input),
        mgmt_pdu_bits,
        mgmt_padded_bits: mgmt_capacity - mgmt_pdu_bits,
        voice_frame_bits: input.voice_frame_bits,
        voice_frame_interval_us: input.voice_frame_interval_us,
        rt_voice_frames_per_slot: voice_frames,
        be_payload_bytes,
        mgmt_cycle_frames: input.mgmt_cycle_frames,
        rt_cycle_frames: input.rt_cycle_frames,
        be_cycle_frames: input.be_cycle_frames,
    }
}

/// The three frame plans of the reference design, in order.
///
/// Built through the same derivation as the planner output, so they double as
/// a regression oracle for it.
pub fn reference_plans() -> Vec<TdmaConfig> {
    let input = PlannerInput::default();
    vec![
        assemble(&input, 80_000, 90, 16, 44, 160),
        assemble(&input, 80_000, 90, 24, 41, 160),
        assemble(&input, 128_000, 148, 36, 21, 576),
    ]
}

/// Enumerates every frame plan that satisfies the design rules.
///
/// For each candidate frame length and BE payload the search walks RT and BE
/// slot counts exhaustively; the MGMT slot count then follows from the time
/// left in the frame and must be an even node count no larger than
/// `max_nodes_target`. Output is sorted by frame length, then MGMT slots.
pub fn plan_configurations(input: &PlannerInput) -> Result<Vec<TdmaConfig>, String> {
    plan_configurations_with(input, Execution::Parallel)
}

pub fn plan_configurations_with(input: &PlannerInput, exec: Execution) -> Result<Vec<TdmaConfig>, String> {
    input.check()?;
    let mut jobs = Vec::new();
    for &frame_ms in &input.candidate_frame_lengths_ms {
        for payload in (8..=input.max_be_payload_bytes).step_by(8) {
            jobs.push((frame_ms * 1000, payload));
        }
    }
    let mut out = par::flat_map(exec, jobs, |(frame_us, payload)| search_frame(input, frame_us, payload));
    out.sort_by_key(|c| (c.frame_length_us, c.mgmt_slots, c.rt_slots, c.be_slots, c.be_payload_bytes));
    out.dedup();
    Ok(out)
}

fn search_frame(input: &PlannerInput, frame_us: u64, be_payload: u32) -> Vec<TdmaConfig> {
    let mut found = Vec::new();
    if !frame_us.is_multiple_of(input.ofdm_symbol_duration_us) {
        return found;
    }
    let total = frame_us / input.ofdm_symbol_duration_us;
    let voice_frames = voice_frames_per_slot(frame_us, input);
    if voice_frames > MAX_ENCAPSULATED_SDUS {
        return found;
    }
    let be_bits = be_payload * 8;
    if input.be_exact_fit && !(input.mac_header_bits + be_bits).is_multiple_of(input.bits_per_symbol) {
        return found;
    }
    let rt_sym = slot_symbols_for_payload(voice_frames * input.voice_frame_bits, input) as u64;
    let be_sym = slot_symbols_for_payload(be_bits, input) as u64;
    let max_slots = MAX_INDEXABLE_SLOTS as u64;

    let mut rt = 1u64;
    while rt * rt_sym < total && rt * input.rt_cycle_frames as u64 <= max_slots {
        let mut be = 1u64;
        while rt * rt_sym + be * be_sym < total && be * input.be_cycle_frames as u64 <= max_slots {
            let data = rt * input.rt_cycle_frames as u64 + be * input.be_cycle_frames as u64;
            let mgmt_sym = slot_symbols_for_payload(BITMAP_ENTRY_BITS * data as u32, input) as u64;
            let rest = total - rt * rt_sym - be * be_sym;
            if rest.is_multiple_of(mgmt_sym) {
                let mgmt = rest / mgmt_sym;
                let weight_ok = input.mgmt_weight_step_percent == 0
                    || (mgmt * mgmt_sym * 100).is_multiple_of(total * input.mgmt_weight_step_percent as u64);
                if mgmt >= 2 && mgmt.is_multiple_of(2) && mgmt <= input.max_nodes_target as u64 && weight_ok {
                    let cfg = assemble(input, frame_us, mgmt as u32, rt as u32, be as u32, be_payload);
                    if validate_config(&cfg, input).is_ok() {
                        found.push(cfg);
                    }
                }
            }
            be += 1;
        }
        rt += 1;
    }
    found
}

/// Outcome of one validation rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail per design rule, with the offending quantity on failure.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{:<24} {}  {}", c.name, if c.passed { "ok  " } else { "FAIL" }, c.detail)?;
        }
        Ok(())
    }
}

/// Checks a plan against every design rule and indexing limit.
pub fn validate_config(cfg: &TdmaConfig, input: &PlannerInput) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| checks.push(Check { name, passed, detail });

    let phy_match = cfg.symbol_duration_us == input.ofdm_symbol_duration_us
        && cfg.bits_per_symbol == input.bits_per_symbol
        && cfg.mac_header_bits == input.mac_header_bits
        && cfg.slot_overhead_symbols == input.slot_overhead_symbols
        && cfg.voice_frame_bits == input.voice_frame_bits
        && cfg.voice_frame_interval_us == input.voice_frame_interval_us;
    push(
        "phy_parameters",
        phy_match,
        format!(
            "symbol {} us, {} bits/symbol, header {} bits, overhead {} symbols",
            cfg.symbol_duration_us, cfg.bits_per_symbol, cfg.mac_header_bits, cfg.slot_overhead_symbols
        ),
    );

    let counts = [cfg.mgmt_slots, cfg.rt_slots, cfg.be_slots];
    let sizes = [cfg.mgmt_slot_symbols, cfg.rt_slot_symbols, cfg.be_slot_symbols];
    let positive = counts.iter().all(|&n| n > 0)
        && sizes.iter().all(|&s| s > cfg.slot_overhead_symbols)
        && cfg.frame_length_us > 0
        && cfg.symbol_duration_us > 0
        && cfg.bits_per_symbol > 0;
    push("positive_counts", positive, format!("slots {counts:?}, symbols per slot {sizes:?}"));

    let used_symbols: u64 = counts.iter().zip(sizes).map(|(&n, s)| n as u64 * s as u64).sum();
    let used_us = used_symbols * cfg.symbol_duration_us;
    push(
        "symbol_tiling",
        used_us == cfg.frame_length_us,
        format!("{used_symbols} symbols = {used_us} us for a {} us frame", cfg.frame_length_us),
    );

    let data_slots = cfg.data_slots_per_cycle();
    let expected_pdu = cfg.mac_header_bits + BITMAP_ENTRY_BITS * data_slots;
    push(
        "mgmt_pdu_bits",
        cfg.mgmt_pdu_bits == expected_pdu,
        format!("{} bits, rule gives {expected_pdu} for {data_slots} data slots", cfg.mgmt_pdu_bits),
    );

    let mgmt_cap = cfg.slot_capacity_bits(super::SlotKind::Mgmt) as u32;
    push(
        "mgmt_capacity",
        mgmt_cap >= cfg.mgmt_pdu_bits && cfg.mgmt_padded_bits == mgmt_cap - cfg.mgmt_pdu_bits,
        format!("{mgmt_cap} bits carry {} + {} padded", cfg.mgmt_pdu_bits, cfg.mgmt_padded_bits),
    );

    let required_frames = voice_frames_per_slot(cfg.frame_length_us, input);
    let rt_cap = cfg.slot_capacity_bits(super::SlotKind::Rt) as u32;
    let rt_need = cfg.mac_header_bits + RT_RATE_FIELD_BITS + cfg.rt_voice_frames_per_slot * cfg.voice_frame_bits;
    push(
        "rt_voice_frames",
        cfg.rt_voice_frames_per_slot == required_frames
            && cfg.rt_voice_frames_per_slot <= MAX_ENCAPSULATED_SDUS
            && rt_need <= rt_cap,
        format!(
            "{} frames per slot (frame needs {required_frames}), {rt_need} of {rt_cap} bits",
            cfg.rt_voice_frames_per_slot
        ),
    );

    push(
        "be_payload_multiple_of_8",
        cfg.be_payload_bytes > 0 && cfg.be_payload_bytes.is_multiple_of(8),
        format!("{} bytes", cfg.be_payload_bytes),
    );

    let be_cap = cfg.slot_capacity_bits(super::SlotKind::Be) as u32;
    let be_need = cfg.mac_header_bits + cfg.be_payload_bytes * 8;
    push("be_payload_fits", be_need <= be_cap, format!("{be_need} of {be_cap} bits"));

    let cycles = [cfg.mgmt_cycle_frames, cfg.rt_cycle_frames, cfg.be_cycle_frames];
    push(
        "cycle_frames",
        cycles.iter().all(|c| (1..=MAX_CYCLE_FRAMES).contains(c)),
        format!("frames per cycle {cycles:?}"),
    );

    let per_cycle = [
        cfg.mgmt_slots * cfg.mgmt_cycle_frames,
        cfg.rt_slots * cfg.rt_cycle_frames,
        cfg.be_slots * cfg.be_cycle_frames,
    ];
    let per_frame = cfg.slots_per_frame();
    push(
        "slot_index_bound",
        per_frame <= MAX_INDEXABLE_SLOTS && per_cycle.iter().all(|&n| n <= MAX_INDEXABLE_SLOTS),
        format!("{per_frame} slots per frame, per cycle {per_cycle:?}, limit {MAX_INDEXABLE_SLOTS}"),
    );

    ValidationReport { checks }
}
