mod common;

use std::fs;
use std::path::{Path, PathBuf};

use bitvec::prelude::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wbwf_core::codec::{
    self, bits_from_bytes, bits_to_bytes, decode, encode, fcs32, field_listing, BeDataBody, BitmapCode, Bits,
    CodecError, CodecId, CodingRate, MacAddr, MacPdu, MgmtBody, PduBody, PduType, Piggyback, PttSigBody, RtDataBody,
    SessionId, SlotAddress, SlotBitmap, FCS_RESIDUE, HEADER_BITS,
};
use wbwf_core::tdma::{SlotKind, TdmaConfig};

use common::*;

/// MSB-first polynomial division, one input bit at a time.
fn crc32_msb_reference(bits: &BitSlice<u8, Msb0>) -> u32 {
    let mut reg = 0xFFFF_FFFFu32;
    for bit in bits.iter().by_vals() {
        let top = (reg >> 31) & 1 == 1;
        reg <<= 1;
        if top ^ bit {
            reg ^= 0x04C1_1DB7;
        }
    }
    !reg.reverse_bits()
}

#[test]
fn crc_check_value_and_empty_input() {
    assert_eq!(codec::crc32(b"123456789"), 0xCBF4_3926);
    assert_eq!(crc32fast::hash(b"123456789"), 0xCBF4_3926);
    assert_eq!(fcs32(&codec::bits_lsb_first(b"123456789")), 0xCBF4_3926);
    assert_eq!(crc32_msb_reference(&codec::bits_lsb_first(b"123456789")), 0xCBF4_3926);
    assert_eq!(fcs32(BitSlice::empty()), 0);
    assert_eq!(crc32_msb_reference(BitSlice::empty()), 0);
}

proptest! {
    #[test]
    fn fcs_matches_reference_on_any_bit_string(bits in prop::collection::vec(any::<bool>(), 0..700)) {
        let bv: Bits = bits.iter().copied().collect();
        prop_assert_eq!(fcs32(&bv), crc32_msb_reference(&bv));
    }

    #[test]
    fn fcs_matches_crc32fast_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        prop_assert_eq!(fcs32(&codec::bits_lsb_first(&bytes)), crc32fast::hash(&bytes));
    }

    #[test]
    fn frame_followed_by_its_fcs_has_constant_residue(bits in prop::collection::vec(any::<bool>(), 1..500)) {
        let mut bv: Bits = bits.iter().copied().collect();
        let fcs = fcs32(&bv);
        for i in 0..32 {
            bv.push((fcs >> i) & 1 == 1);
        }
        prop_assert_eq!(fcs32(&bv), FCS_RESIDUE);
    }
}

fn config() -> impl Strategy<Value = TdmaConfig> {
    (1usize..=3).prop_map(|n| TdmaConfig::solution(n).unwrap())
}

fn pdu_type() -> impl Strategy<Value = PduType> {
    prop::sample::select(ALL_TYPES.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn encode_decode_round_trip(cfg in config(), ty in pdu_type(), seed in any::<u64>()) {
        let pdu = random_pdu(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, ty);
        let bits = encode(&pdu, &cfg).unwrap();
        prop_assert_eq!(bits.len(), cfg.slot_capacity_bits(ty.slot_kind()));
        prop_assert_eq!(decode(&bits, &cfg, ty.slot_kind()).unwrap(), pdu);
        let bytes = bits_to_bytes(&bits);
        prop_assert_eq!(bits_from_bytes(&bytes, bits.len()).unwrap(), bits);
    }

    #[test]
    fn any_single_bit_flip_is_an_fcs_mismatch(cfg in config(), ty in pdu_type(), seed in any::<u64>(), pos in any::<prop::sample::Index>()) {
        let pdu = random_pdu(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, ty);
        let mut bits = encode(&pdu, &cfg).unwrap();
        let i = pos.index(bits.len());
        let flipped = !bits[i];
        bits.set(i, flipped);
        let is_fcs_mismatch = matches!(decode(&bits, &cfg, ty.slot_kind()), Err(CodecError::FcsMismatch { .. }));
        prop_assert!(is_fcs_mismatch);
    }

    #[test]
    fn wrong_length_is_rejected_before_anything_else(cfg in config(), ty in pdu_type(), seed in any::<u64>(), cut in 1usize..64) {
        let pdu = random_pdu(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, ty);
        let mut bits = encode(&pdu, &cfg).unwrap();
        let full = bits.len();
        bits.truncate(full - cut);
        let truncated = decode(&bits, &cfg, ty.slot_kind());
        prop_assert_eq!(truncated, Err(CodecError::LengthMismatch { expected: full, actual: full - cut }));
        bits.resize(full + cut, false);
        let padded = matches!(decode(&bits, &cfg, ty.slot_kind()), Err(CodecError::LengthMismatch { .. }));
        prop_assert!(padded);
    }

    #[test]
    fn fcs_agrees_with_external_crc(cfg in config(), ty in pdu_type(), seed in any::<u64>()) {
        let pdu = random_pdu(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, ty);
        let bits = encode(&pdu, &cfg).unwrap();
        let (body, fcs) = bits.split_at(bits.len() - 32);
        let received = fcs.iter().by_vals().enumerate().fold(0u32, |v, (i, b)| v | ((b as u32) << i));
        prop_assert_eq!(received, crc32_msb_reference(body));
        if body.len() % 8 == 0 {
            prop_assert!(external_fcs_ok(&bits));
        }
    }
}

#[test]
fn bitmap_length_follows_the_data_cycle() {
    for (n, entries) in [(1, 60), (2, 65), (3, 57)] {
        let cfg = TdmaConfig::solution(n).unwrap();
        assert_eq!(cfg.data_slots_per_cycle(), entries);
        let occ = wbwf_core::tdma::Timeline::new(cfg.clone()).occurrence_at(0);
        let make = |len| {
            MacPdu::new(
                MacAddr::node(0),
                MacAddr::BROADCAST,
                1,
                SlotAddress::from(&occ),
                PduBody::Mgmt(MgmtBody { bitmap: SlotBitmap::idle(len), piggyback: Piggyback::Beacon }),
            )
        };
        assert!(encode(&make(entries as usize), &cfg).is_ok());
        assert!(matches!(
            encode(&make(entries as usize + 1), &cfg),
            Err(CodecError::InvalidField { field: "bitmap", .. })
        ));
    }
}

#[test]
fn every_bitmap_code_round_trips() {
    let cfg = TdmaConfig::solution(3).unwrap();
    let codes = [BitmapCode::Idle, BitmapCode::Transmitting, BitmapCode::NeighbourTransmitting, BitmapCode::Collision];
    let bitmap = SlotBitmap::from_codes((0..57).map(|i| codes[i % 4]).collect());
    let occ = wbwf_core::tdma::Timeline::new(cfg.clone()).occurrence_at(0);
    let pdu = MacPdu::new(
        MacAddr::node(0),
        MacAddr::BROADCAST,
        1,
        SlotAddress::from(&occ),
        PduBody::Mgmt(MgmtBody { bitmap, piggyback: Piggyback::Beacon }),
    );
    let bits = encode(&pdu, &cfg).unwrap();
    for i in 0..57 {
        let at = HEADER_BITS - 32 + 2 * i;
        let code = bits[at..at + 2].load_be::<u8>();
        assert_eq!(code, i as u8 % 4);
    }
    assert_eq!(decode(&bits, &cfg, SlotKind::Mgmt).unwrap(), pdu);
}

// Golden vectors: `<name>.hex` holds the frame, `<name>.fields` the expected
// field listing. Set WBWF_BLESS=1 to rewrite them from `golden()`.

fn vectors_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/vectors")
}

fn slot(cfg: &TdmaConfig, kind: SlotKind, frame_index: u8, in_cycle: u16) -> SlotAddress {
    let in_frame = match kind {
        SlotKind::Mgmt => in_cycle,
        SlotKind::Rt => (cfg.mgmt_slots + in_cycle as u32 % cfg.rt_slots) as u16,
        SlotKind::Be => (cfg.mgmt_slots + cfg.rt_slots + in_cycle as u32 % cfg.be_slots) as u16,
    };
    SlotAddress { cycle_type: kind, frame_index, slot_id_in_cycle: in_cycle, slot_id_in_frame: in_frame }
}

fn golden() -> Vec<(&'static str, usize, MacPdu)> {
    let s1 = TdmaConfig::solution(1).unwrap();
    let s2 = TdmaConfig::solution(2).unwrap();
    let s3 = TdmaConfig::solution(3).unwrap();
    let mut bitmap = SlotBitmap::idle(57);
    bitmap.set(0, BitmapCode::Transmitting);
    bitmap.set(5, BitmapCode::NeighbourTransmitting);
    bitmap.set(6, BitmapCode::Collision);
    bitmap.set(56, BitmapCode::NeighbourTransmitting);
    let mut beacon_bitmap = SlotBitmap::idle(60);
    beacon_bitmap.set(17, BitmapCode::Collision);
    vec![
        (
            "mgmt_ptt_res_s3",
            3,
            MacPdu::new(
                MacAddr::node(3),
                MacAddr::BROADCAST,
                0x123,
                slot(&s3, SlotKind::Mgmt, 0, 3),
                PduBody::Mgmt(MgmtBody {
                    bitmap,
                    piggyback: Piggyback::PttRes { positive: true, session_id: SessionId::new(0x2AB5).unwrap() },
                }),
            ),
        ),
        (
            "mgmt_beacon_s1",
            1,
            MacPdu::new(
                MacAddr::new(0x0A0B_0C0D_0E0F),
                MacAddr::BROADCAST,
                4095,
                slot(&s1, SlotKind::Mgmt, 0, 89),
                PduBody::Mgmt(MgmtBody { bitmap: beacon_bitmap, piggyback: Piggyback::Beacon }),
            ),
        ),
        (
            "ptt_request_s3",
            3,
            MacPdu::new(
                MacAddr::node(0),
                MacAddr::node(1),
                7,
                slot(&s3, SlotKind::Rt, 0, 11),
                PduBody::PttSig(PttSigBody::Request {
                    session_id: SessionId::new(1000).unwrap(),
                    codec: CodecId(5),
                    rate: CodingRate::Bps1200,
                }),
            ),
        ),
        (
            "ptt_release_s2",
            2,
            MacPdu::new(
                MacAddr::node(8),
                MacAddr::BROADCAST,
                8,
                slot(&s2, SlotKind::Rt, 0, 23),
                PduBody::PttSig(PttSigBody::Release { session_id: SessionId::new(0x7FFF).unwrap() }),
            ),
        ),
        (
            "rt_data_s3",
            3,
            MacPdu::new(
                MacAddr::node(2),
                MacAddr::BROADCAST,
                300,
                slot(&s3, SlotKind::Rt, 0, 35),
                PduBody::RtData(RtDataBody {
                    rate: CodingRate::Bps2400,
                    voice_frames: vec![0x0012_3456_789A_BCDE & ((1 << 54) - 1), 0, (1 << 54) - 1],
                }),
            ),
        ),
        (
            "be_data_s1",
            1,
            MacPdu::new(
                MacAddr::node(4),
                MacAddr::node(5),
                2048,
                slot(&s1, SlotKind::Be, 0, 43),
                PduBody::BeData(BeDataBody { payload: (0..160u32).map(|i| (i * 37 + 11) as u8).collect() }),
            ),
        ),
    ]
}

fn wrap_hex(bytes: &[u8]) -> String {
    hex_string(bytes).as_bytes().chunks(64).map(|c| format!("{}\n", std::str::from_utf8(c).unwrap())).collect()
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(text: &str) -> Vec<u8> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap()).collect()
}

/// Field listing read straight off the wire with the documented layout.
fn reference_listing(bytes: &[u8], cfg: &TdmaConfig, kind: SlotKind) -> String {
    let capacity = cfg.slot_capacity_bits(kind);
    let bits = &bytes.view_bits::<Msb0>()[..capacity];
    let mut pos = 0;
    let mut take = |w: usize| {
        let v = bits[pos..pos + w].iter().by_vals().fold(0u64, |a, b| (a << 1) | b as u64);
        pos += w;
        v
    };
    let mut out = String::new();
    let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
    let mac = |v: u64| {
        let b = v.to_be_bytes();
        format!("{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[2], b[3], b[4], b[5], b[6], b[7])
    };
    let ty = take(2);
    put("pdu_type", ["MGMT", "RT_DATA", "BE_DATA", "PTT_SIG"][ty as usize].to_string());
    let subtype = take(3);
    put("subtype", subtype.to_string());
    put("more_fragment", (take(1) == 1).to_string());
    put("cycle_type", ["MGMT", "RT", "BE"][take(2) as usize].to_string());
    for (k, w) in [("frame_index", 3), ("slot_id_in_cycle", 9), ("slot_id_in_frame", 9)] {
        put(k, take(w).to_string());
    }
    let sdus = take(3);
    put("encapsulated_sdus", sdus.to_string());
    put("transmitter", mac(take(48)));
    put("receiver", mac(take(48)));
    put("sequence", take(12).to_string());
    put("fragment", take(4).to_string());
    let rates = [2400, 1200, 600];
    match ty {
        0 => {
            let entries = cfg.data_slots_per_cycle() as usize;
            let letters: String = (0..entries).map(|_| ['.', 'T', 'N', 'X'][take(2) as usize]).collect();
            put("bitmap", letters);
            match subtype {
                0 => put("piggyback", "beacon".into()),
                1 => {
                    put("piggyback", "ptt_res".into());
                    put("response", (take(1) == 1).to_string());
                    put("session_id", take(15).to_string());
                }
                _ => unreachable!("no QLL vector"),
            }
        }
        3 => match subtype {
            0 => {
                put("signal", "request".into());
                put("session_id", take(15).to_string());
                put("codec", take(4).to_string());
                put("rate_bps", rates[take(3) as usize].to_string());
            }
            1 => {
                put("signal", "release".into());
                put("session_id", take(15).to_string());
            }
            _ => put("signal", "relay".into()),
        },
        1 => {
            put("rate_bps", rates[take(3) as usize].to_string());
            for i in 0..sdus {
                put(&format!("voice_frame[{i}]"), format!("{:#016x}", take(54)));
            }
        }
        _ => {
            let n = cfg.be_payload_bytes as usize;
            put("payload_bytes", n.to_string());
            put("payload", (0..n).map(|_| format!("{:02x}", take(8))).collect());
        }
    }
    out
}

#[test]
fn golden_vectors() {
    let dir = vectors_dir();
    let bless = std::env::var_os("WBWF_BLESS").is_some();
    for (name, n, pdu) in golden() {
        let cfg = TdmaConfig::solution(n).unwrap();
        let kind = pdu.pdu_type().slot_kind();
        let hex_path = dir.join(format!("{name}.hex"));
        let fields_path = dir.join(format!("{name}.fields"));
        let bits = encode(&pdu, &cfg).unwrap();
        let bytes = bits_to_bytes(&bits);
        if bless {
            fs::write(&hex_path, wrap_hex(&bytes)).unwrap();
            fs::write(&fields_path, format!("config = {n}\n{}", field_listing(&pdu))).unwrap();
        }
        let frozen = unhex(&fs::read_to_string(&hex_path).unwrap());
        assert_eq!(hex_string(&frozen), hex_string(&bytes), "{name}: encoder output changed");

        let fields = fs::read_to_string(&fields_path).unwrap();
        let (header, expected) = fields.split_once('\n').unwrap();
        assert_eq!(header, format!("config = {n}"));

        let decoded = decode(&bits_from_bytes(&frozen, cfg.slot_capacity_bits(kind)).unwrap(), &cfg, kind).unwrap();
        assert_eq!(decoded, pdu, "{name}");
        assert_eq!(field_listing(&decoded), expected, "{name}: decoder listing");
        assert_eq!(reference_listing(&frozen, &cfg, kind), expected, "{name}: wire layout");
        assert!(frozen.len() * 8 - cfg.slot_capacity_bits(kind) < 8);

        let frame = bits_from_bytes(&frozen, cfg.slot_capacity_bits(kind)).unwrap();
        let (body, fcs) = frame.split_at(frame.len() - 32);
        let received = fcs.iter().by_vals().enumerate().fold(0u32, |v, (i, b)| v | ((b as u32) << i));
        assert_eq!(received, crc32_msb_reference(body), "{name}: FCS");
    }
}

#[test]
fn golden_frames_catch_every_single_bit_error() {
    for (name, n, pdu) in golden() {
        let cfg = TdmaConfig::solution(n).unwrap();
        let kind = pdu.pdu_type().slot_kind();
        let bits = encode(&pdu, &cfg).unwrap();
        for i in 0..bits.len() {
            let mut b = bits.clone();
            let flipped = !b[i];
            b.set(i, flipped);
            assert!(
                matches!(decode(&b, &cfg, kind), Err(CodecError::FcsMismatch { .. })),
                "{name}: flip at bit {i} not caught"
            );
        }
    }
}

#[test]
fn ptt_res_sits_at_the_start_of_the_padding() {
    let (_, _, pdu) = golden().into_iter().find(|g| g.0 == "mgmt_ptt_res_s3").unwrap();
    let cfg = TdmaConfig::solution(3).unwrap();
    let bits = encode(&pdu, &cfg).unwrap();
    let start = HEADER_BITS - 32 + 2 * 57;
    let piggy = &bits[start..start + 16];
    assert!(piggy[0], "response flag is the MSB");
    assert_eq!(piggy[1..].load_be::<u16>(), 0x2AB5);
    assert!(bits[start + 16..bits.len() - 32].not_any());
}

#[test]
fn malformed_fields_are_typed_errors() {
    let cfg = TdmaConfig::solution(3).unwrap();
    let (_, _, pdu) = golden().into_iter().find(|g| g.0 == "rt_data_s3").unwrap();
    let bits = encode(&pdu, &cfg).unwrap();

    // RT frame presented in a BE slot
    let err = decode(&bits, &cfg, SlotKind::Be).unwrap_err();
    assert!(matches!(err, CodecError::LengthMismatch { .. }));

    // reserved cycle type code 3, FCS recomputed
    let mut b = bits.clone();
    b.set(6, true);
    b.set(7, true);
    let n = b.len();
    let fcs = fcs32(&b[..n - 32]);
    for i in 0..32 {
        b.set(n - 32 + i, (fcs >> i) & 1 == 1);
    }
    assert!(matches!(decode(&b, &cfg, SlotKind::Rt), Err(CodecError::MalformedField { field: "cycle_type", .. })));
}
