use std::fmt::Write;

use super::*;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// `name = value` lines describing every field of a PDU, header first.
pub fn field_listing(pdu: &MacPdu) -> String {
    let fc = &pdu.header.frame_control;
    let mut out = String::new();
    let mut line = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(out, "{k} = {v}");
    };
    line("pdu_type", &fc.pdu_type.name());
    line("subtype", &fc.subtype);
    line("more_fragment", &fc.more_fragment);
    line("cycle_type", &fc.cycle_type);
    line("frame_index", &fc.frame_index);
    line("slot_id_in_cycle", &fc.slot_id_in_cycle);
    line("slot_id_in_frame", &fc.slot_id_in_frame);
    line("encapsulated_sdus", &fc.encapsulated_sdus);
    line("transmitter", &pdu.header.transmitter);
    line("receiver", &pdu.header.receiver);
    line("sequence", &pdu.header.sequence.sequence);
    line("fragment", &pdu.header.sequence.fragment);
    match &pdu.body {
        PduBody::Mgmt(m) => {
            line("bitmap", &m.bitmap);
            match &m.piggyback {
                Piggyback::Beacon => line("piggyback", &"beacon"),
                Piggyback::PttRes { positive, session_id } => {
                    line("piggyback", &"ptt_res");
                    line("response", &positive);
                    line("session_id", &session_id);
                }
                Piggyback::Qll { raw } => {
                    line("piggyback", &"qll");
                    let bits: String = raw.iter().by_vals().map(|b| if b { '1' } else { '0' }).collect();
                    line("qll_bits", &bits);
                }
            }
        }
        PduBody::PttSig(sig) => match sig {
            PttSigBody::Request { session_id, codec, rate } => {
                line("signal", &"request");
                line("session_id", &session_id);
                line("codec", &codec.0);
                line("rate_bps", &rate.bps());
            }
            PttSigBody::Release { session_id } => {
                line("signal", &"release");
                line("session_id", &session_id);
            }
            PttSigBody::Relay => line("signal", &"relay"),
        },
        PduBody::RtData(rt) => {
            line("rate_bps", &rt.rate.bps());
            for (i, f) in rt.voice_frames.iter().enumerate() {
                line(&format!("voice_frame[{i}]"), &format_args!("{f:#016x}"));
            }
        }
        PduBody::BeData(be) => {
            line("payload_bytes", &be.payload.len());
            line("payload", &hex(&be.payload));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tdma::SlotKind;

    #[test]
    fn listing_names_every_header_field() {
        let pdu = MacPdu::new(
            MacAddr::node(2),
            MacAddr::BROADCAST,
            17,
            SlotAddress { cycle_type: SlotKind::Rt, frame_index: 0, slot_id_in_cycle: 1, slot_id_in_frame: 149 },
            PduBody::RtData(RtDataBody { rate: CodingRate::Bps2400, voice_frames: vec![0x2A] }),
        );
        let text = field_listing(&pdu);
        assert!(text.contains("pdu_type = RT_DATA\n"));
        assert!(text.contains("transmitter = 02:00:00:00:00:03\n"));
        assert!(text.contains("sequence = 17\n"));
        assert!(text.contains("voice_frame[0] = 0x0000000000002a\n"));
    }
}
