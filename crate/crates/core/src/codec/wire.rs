use bitvec::prelude::*;

use super::crc::{fcs32, push_fcs, read_fcs};
use super::pdu::{cycle_type_code, cycle_type_from_code};
use super::*;
use crate::tdma::{SlotKind, TdmaConfig, MAX_INDEXABLE_SLOTS};

fn push_uint(bits: &mut Bits, value: u64, width: usize) {
    for i in (0..width).rev() {
        bits.push((value >> i) & 1 == 1);
    }
}

struct Reader<'a> {
    bits: &'a BitSlice<u8, Msb0>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn uint(&mut self, width: usize) -> u64 {
        let v = self.bits[self.pos..self.pos + width].iter().by_vals().fold(0u64, |acc, b| (acc << 1) | b as u64);
        self.pos += width;
        v
    }

    fn slice(&mut self, width: usize) -> &'a BitSlice<u8, Msb0> {
        let s = &self.bits[self.pos..self.pos + width];
        self.pos += width;
        s
    }
}

fn fits(value: u64, width: usize) -> bool {
    value >> width == 0
}

fn check_width(field: &'static str, value: u64, width: usize) -> Result<(), CodecError> {
    if fits(value, width) {
        Ok(())
    } else {
        Err(CodecError::invalid(field, format!("{value} does not fit in {width} bits")))
    }
}

/// Index limits every header must respect for `kind` slots under `cfg`.
fn check_indices(
    fc: &FrameControl,
    cfg: &TdmaConfig,
    err: fn(&'static str, String) -> CodecError,
) -> Result<(), CodecError> {
    let kind = fc.cycle_type;
    if fc.frame_index as u32 >= cfg.cycle_frames(kind) {
        return Err(err(
            "frame_index",
            format!("{} but the {kind} cycle has {} frames", fc.frame_index, cfg.cycle_frames(kind)),
        ));
    }
    if fc.slot_id_in_cycle as u32 >= cfg.slots_per_cycle(kind).min(MAX_INDEXABLE_SLOTS) {
        return Err(err(
            "slot_id_in_cycle",
            format!("{} but the {kind} cycle has {} slots", fc.slot_id_in_cycle, cfg.slots_per_cycle(kind)),
        ));
    }
    if fc.slot_id_in_frame as u32 >= cfg.slots_per_frame().min(MAX_INDEXABLE_SLOTS) {
        return Err(err(
            "slot_id_in_frame",
            format!("{} but the frame has {} slots", fc.slot_id_in_frame, cfg.slots_per_frame()),
        ));
    }
    Ok(())
}

fn body_subtype(body: &PduBody) -> Option<u8> {
    match body {
        PduBody::Mgmt(m) => Some(m.piggyback.subtype()),
        PduBody::PttSig(p) => Some(p.subtype()),
        PduBody::RtData(_) | PduBody::BeData(_) => None,
    }
}

fn check_header(pdu: &MacPdu, cfg: &TdmaConfig) -> Result<(), CodecError> {
    let fc = &pdu.header.frame_control;
    if fc.pdu_type != pdu.body.pdu_type() {
        return Err(CodecError::invalid(
            "pdu_type",
            format!("header says {} but body is {}", fc.pdu_type.name(), pdu.body.pdu_type().name()),
        ));
    }
    if fc.cycle_type != fc.pdu_type.slot_kind() {
        return Err(CodecError::invalid(
            "cycle_type",
            format!("{} PDUs travel in {} slots, not {}", fc.pdu_type.name(), fc.pdu_type.slot_kind(), fc.cycle_type),
        ));
    }
    check_width("subtype", fc.subtype as u64, 3)?;
    if let Some(expected) = body_subtype(&pdu.body) {
        if fc.subtype != expected {
            return Err(CodecError::invalid("subtype", format!("{} but the body needs {expected}", fc.subtype)));
        }
    }
    check_width("frame_index", fc.frame_index as u64, 3)?;
    check_width("slot_id_in_cycle", fc.slot_id_in_cycle as u64, 9)?;
    check_width("slot_id_in_frame", fc.slot_id_in_frame as u64, 9)?;
    check_indices(fc, cfg, CodecError::invalid)?;
    let sdus = match &pdu.body {
        PduBody::RtData(r) => r.voice_frames.len(),
        _ => 0,
    };
    if fc.encapsulated_sdus as usize != sdus {
        return Err(CodecError::invalid(
            "encapsulated_sdus",
            format!("{} but the body carries {sdus} frames", fc.encapsulated_sdus),
        ));
    }
    check_width("sequence", pdu.header.sequence.sequence as u64, 12)?;
    check_width("fragment", pdu.header.sequence.fragment as u64, 4)?;
    Ok(())
}

fn encode_body(body: &PduBody, cfg: &TdmaConfig, out: &mut Bits, room: usize) -> Result<(), CodecError> {
    match body {
        PduBody::Mgmt(m) => {
            let entries = cfg.data_slots_per_cycle() as usize;
            if m.bitmap.len() != entries {
                return Err(CodecError::invalid(
                    "bitmap",
                    format!("{} entries but the data cycle has {entries} slots", m.bitmap.len()),
                ));
            }
            let padding = room.checked_sub(2 * entries).ok_or(CodecError::BodyTooLarge {
                field: "bitmap",
                needed: 2 * entries,
                available: room,
            })?;
            for code in m.bitmap.codes() {
                push_uint(out, *code as u64, 2);
            }
            match &m.piggyback {
                Piggyback::Beacon => {}
                Piggyback::PttRes { positive, session_id } => {
                    if padding < PTT_RES_BITS {
                        return Err(CodecError::BodyTooLarge {
                            field: "ptt_res",
                            needed: PTT_RES_BITS,
                            available: padding,
                        });
                    }
                    out.push(*positive);
                    push_uint(out, session_id.raw() as u64, 15);
                }
                Piggyback::Qll { raw } => {
                    if raw.len() != padding {
                        return Err(CodecError::invalid(
                            "qll",
                            format!("{} raw bits but the padding region is {padding}", raw.len()),
                        ));
                    }
                    out.extend_from_bitslice(raw);
                }
            }
        }
        PduBody::PttSig(sig) => match sig {
            PttSigBody::Request { session_id, codec, rate } => {
                check_width("codec", codec.0 as u64, 4)?;
                push_uint(out, session_id.raw() as u64, 15);
                push_uint(out, codec.0 as u64, 4);
                push_uint(out, *rate as u64, 3);
                push_uint(out, 0, 2);
            }
            PttSigBody::Release { session_id } => {
                push_uint(out, session_id.raw() as u64, 15);
                push_uint(out, 0, 1);
            }
            PttSigBody::Relay => {}
        },
        PduBody::RtData(rt) => {
            let n = rt.voice_frames.len();
            if n == 0 || n > cfg.rt_voice_frames_per_slot as usize {
                return Err(CodecError::invalid(
                    "voice_frames",
                    format!("{n} frames, expected 1..={}", cfg.rt_voice_frames_per_slot),
                ));
            }
            let width = cfg.voice_frame_bits as usize;
            let needed = RATE_FIELD_BITS + n * width;
            if needed > room {
                return Err(CodecError::BodyTooLarge { field: "voice_frames", needed, available: room });
            }
            push_uint(out, rt.rate as u64, RATE_FIELD_BITS);
            for (i, frame) in rt.voice_frames.iter().enumerate() {
                if !fits(*frame, width) {
                    return Err(CodecError::invalid("voice_frames", format!("frame {i} does not fit in {width} bits")));
                }
                push_uint(out, *frame, width);
            }
        }
        PduBody::BeData(be) => {
            let max = cfg.be_payload_bytes as usize;
            if be.payload.len() > max {
                return Err(CodecError::BodyTooLarge {
                    field: "payload",
                    needed: be.payload.len() * 8,
                    available: max * 8,
                });
            }
            if max * 8 > room {
                return Err(CodecError::BodyTooLarge { field: "payload", needed: max * 8, available: room });
            }
            for byte in be.payload.iter().copied().chain(std::iter::repeat(0)).take(max) {
                push_uint(out, byte as u64, 8);
            }
        }
    }
    Ok(())
}

/// Serialises `pdu` to the full data capacity of its slot kind under `cfg`.
pub fn encode(pdu: &MacPdu, cfg: &TdmaConfig) -> Result<Bits, CodecError> {
    check_header(pdu, cfg)?;
    let kind = pdu.header.frame_control.cycle_type;
    let capacity = cfg.slot_capacity_bits(kind);
    let room = capacity.checked_sub(HEADER_BITS).ok_or(CodecError::BodyTooLarge {
        field: "header",
        needed: HEADER_BITS,
        available: capacity,
    })?;

    let mut out = Bits::with_capacity(capacity);
    let fc = &pdu.header.frame_control;
    push_uint(&mut out, fc.pdu_type as u64, 2);
    push_uint(&mut out, fc.subtype as u64, 3);
    out.push(fc.more_fragment);
    push_uint(&mut out, cycle_type_code(fc.cycle_type), 2);
    push_uint(&mut out, fc.frame_index as u64, 3);
    push_uint(&mut out, fc.slot_id_in_cycle as u64, 9);
    push_uint(&mut out, fc.slot_id_in_frame as u64, 9);
    push_uint(&mut out, fc.encapsulated_sdus as u64, 3);
    push_uint(&mut out, pdu.header.transmitter.raw(), 48);
    push_uint(&mut out, pdu.header.receiver.raw(), 48);
    push_uint(&mut out, pdu.header.sequence.sequence as u64, 12);
    push_uint(&mut out, pdu.header.sequence.fragment as u64, 4);

    encode_body(&pdu.body, cfg, &mut out, room)?;
    debug_assert!(out.len() <= capacity - FCS_BITS);
    out.resize(capacity - FCS_BITS, false);
    let fcs = fcs32(&out);
    push_fcs(&mut out, fcs);
    Ok(out)
}

fn require_zero(field: &'static str, bits: &BitSlice<u8, Msb0>) -> Result<(), CodecError> {
    if bits.any() {
        Err(CodecError::malformed(field, "reserved bits are not zero"))
    } else {
        Ok(())
    }
}

/// Parses a frame received in a slot of `expected_kind`.
///
/// The length is checked first, then the FCS, then the fields.
pub fn decode(bits: &BitSlice<u8, Msb0>, cfg: &TdmaConfig, expected_kind: SlotKind) -> Result<MacPdu, CodecError> {
    let capacity = cfg.slot_capacity_bits(expected_kind);
    if bits.len() != capacity || capacity < HEADER_BITS {
        return Err(CodecError::LengthMismatch { expected: capacity, actual: bits.len() });
    }
    let (protected, fcs_field) = bits.split_at(capacity - FCS_BITS);
    let computed = fcs32(protected);
    let received = read_fcs(fcs_field);
    if computed != received {
        return Err(CodecError::FcsMismatch { computed, received });
    }

    let mut r = Reader { bits: protected, pos: 0 };
    let pdu_type = PduType::from_code(r.uint(2)).expect("2-bit code");
    let subtype = r.uint(3) as u8;
    let more_fragment = r.uint(1) == 1;
    let cycle_code = r.uint(2);
    let cycle_type = cycle_type_from_code(cycle_code)
        .ok_or_else(|| CodecError::malformed("cycle_type", format!("reserved code {cycle_code}")))?;
    if cycle_type != expected_kind {
        return Err(CodecError::malformed(
            "cycle_type",
            format!("{cycle_type} frame received in a {expected_kind} slot"),
        ));
    }
    if pdu_type.slot_kind() != expected_kind {
        return Err(CodecError::malformed(
            "pdu_type",
            format!("{} PDU received in a {expected_kind} slot", pdu_type.name()),
        ));
    }
    let frame_control = FrameControl {
        pdu_type,
        subtype,
        more_fragment,
        cycle_type,
        frame_index: r.uint(3) as u8,
        slot_id_in_cycle: r.uint(9) as u16,
        slot_id_in_frame: r.uint(9) as u16,
        encapsulated_sdus: r.uint(3) as u8,
    };
    check_indices(&frame_control, cfg, CodecError::malformed)?;
    let transmitter = MacAddr::new(r.uint(48));
    let receiver = MacAddr::new(r.uint(48));
    let sequence = SequenceControl { sequence: r.uint(12) as u16, fragment: r.uint(4) as u8 };

    let room = capacity - HEADER_BITS;
    let sdus = frame_control.encapsulated_sdus as usize;
    if pdu_type != PduType::RtData && sdus != 0 {
        return Err(CodecError::malformed("encapsulated_sdus", format!("{sdus} on a {} PDU", pdu_type.name())));
    }
    let body = match pdu_type {
        PduType::Mgmt => {
            let entries = cfg.data_slots_per_cycle() as usize;
            if 2 * entries > room {
                return Err(CodecError::malformed("bitmap", "does not fit the MGMT slot"));
            }
            let codes = (0..entries).map(|_| BitmapCode::from_code(r.uint(2))).collect();
            let padding = room - 2 * entries;
            let piggyback = match subtype {
                0 => {
                    require_zero("padding", r.slice(padding))?;
                    Piggyback::Beacon
                }
                1 => {
                    if padding < PTT_RES_BITS {
                        return Err(CodecError::malformed("ptt_res", "padding region is shorter than 16 bits"));
                    }
                    let positive = r.uint(1) == 1;
                    let session_id = SessionId::wrapping(r.uint(15) as u32);
                    require_zero("padding", r.slice(padding - PTT_RES_BITS))?;
                    Piggyback::PttRes { positive, session_id }
                }
                2 => Piggyback::Qll { raw: r.slice(padding).to_bitvec() },
                other => return Err(CodecError::malformed("subtype", format!("{other} is not a MGMT subtype"))),
            };
            PduBody::Mgmt(MgmtBody { bitmap: SlotBitmap::from_codes(codes), piggyback })
        }
        PduType::PttSig => {
            let sig = match subtype {
                0 => {
                    let session_id = SessionId::wrapping(r.uint(15) as u32);
                    let codec = CodecId(r.uint(4) as u8);
                    let rate_code = r.uint(3);
                    let rate = CodingRate::from_code(rate_code)
                        .ok_or_else(|| CodecError::malformed("rate", format!("reserved code {rate_code}")))?;
                    require_zero("request_pad", r.slice(2))?;
                    PttSigBody::Request { session_id, codec, rate }
                }
                1 => {
                    let session_id = SessionId::wrapping(r.uint(15) as u32);
                    require_zero("release_pad", r.slice(1))?;
                    PttSigBody::Release { session_id }
                }
                2 => PttSigBody::Relay,
                other => return Err(CodecError::malformed("subtype", format!("{other} is not a PTT-SIG subtype"))),
            };
            PduBody::PttSig(sig)
        }
        PduType::RtData => {
            if sdus == 0 || sdus > cfg.rt_voice_frames_per_slot as usize {
                return Err(CodecError::malformed(
                    "encapsulated_sdus",
                    format!("{sdus}, expected 1..={}", cfg.rt_voice_frames_per_slot),
                ));
            }
            let width = cfg.voice_frame_bits as usize;
            if RATE_FIELD_BITS + sdus * width > room {
                return Err(CodecError::malformed("encapsulated_sdus", "frames exceed the RT slot"));
            }
            let rate_code = r.uint(RATE_FIELD_BITS);
            let rate = CodingRate::from_code(rate_code)
                .ok_or_else(|| CodecError::malformed("rate", format!("reserved code {rate_code}")))?;
            let voice_frames = (0..sdus).map(|_| r.uint(width)).collect();
            PduBody::RtData(RtDataBody { rate, voice_frames })
        }
        PduType::BeData => {
            let bytes = cfg.be_payload_bytes as usize;
            if bytes * 8 > room {
                return Err(CodecError::malformed("payload", "configured payload exceeds the BE slot"));
            }
            let payload = (0..bytes).map(|_| r.uint(8) as u8).collect();
            PduBody::BeData(BeDataBody { payload })
        }
    };
    require_zero("fill", &protected[r.pos..])?;
    Ok(MacPdu { header: MacHeader { frame_control, transmitter, receiver, sequence }, body })
}
