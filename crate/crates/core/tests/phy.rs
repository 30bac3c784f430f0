use proptest::prelude::*;
use wbwf_core::phy::{self, BerTable, ChannelParams, Reception};
use wbwf_core::Execution;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn vehicular_path_loss_hand_evaluated() {
    // 40(1 - 4e-3 * 15) log10(1) - 18 log10(15) + 21 log10(2000) + 80
    let hand = 0.0 - 18.0 * 1.176_091_259 + 21.0 * 3.301_029_996 + 80.0;
    let params = ChannelParams { carrier_freq_mhz: 2000.0, base_height_delta_m: 15.0, ..ChannelParams::default() };
    let pl = phy::path_loss_db(1000.0, &params).unwrap();
    assert!(close(pl, hand, 1e-6), "{pl} vs {hand}");
    assert!(close(pl, 128.15, 0.005));
}

#[test]
fn link_budget_at_the_hidden_node_spacing() {
    let p = ChannelParams::default();
    assert!(close(p.noise_floor_dbm(), -174.0 + 70.0 + 7.0, 1e-9));
    // 37.6 log10(0.7) - 18 log10(15) + 21 log10(2412) + 80
    let pl_700 = 37.6 * (-0.154_901_960) - 21.169_642_66 + 21.0 * 3.382_377_326 + 80.0;
    let snr_700 = 36.99 - pl_700 + 97.0;
    assert!(close(phy::snr_db(700.0, &p).unwrap(), snr_700, 1e-6));
    assert!(close(snr_700, 9.95, 0.01));
    let snr_1400 = phy::snr_db(1400.0, &p).unwrap();
    assert!(snr_1400 < p.sense_snr_db, "far end of the chain is not even sensed: {snr_1400}");
}

#[test]
fn bpsk_table_from_csv_matches_the_bundled_copy() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ber_bpsk_r12.csv");
    assert_eq!(BerTable::from_csv_path(path).unwrap(), BerTable::bpsk_rate_half());
}

#[test]
fn monte_carlo_tracks_the_analytic_per() {
    for per in [0.0, 0.01, 0.3, 1.0] {
        let n = 200_000;
        let f = phy::monte_carlo_loss_fraction(per, n, 99, Execution::Parallel);
        let sigma = (per * (1.0 - per) / n as f64).sqrt();
        assert!((f - per).abs() <= 5.0 * sigma + 1e-12, "{per}: {f}");
        assert_eq!(f, phy::monte_carlo_loss_fraction(per, n, 99, Execution::Sequential));
    }
}

proptest! {
    #[test]
    fn per_never_decreases_with_distance(d in 1.0f64..5_000.0, step in 0.0f64..2_000.0, bits in 100usize..6_000) {
        let p = ChannelParams::default();
        let near = phy::link_sample(d, bits, &p).unwrap();
        let far = phy::link_sample(d + step, bits, &p).unwrap();
        prop_assert!(far.snr_db <= near.snr_db);
        prop_assert!(far.per >= near.per);
        prop_assert!((0.0..=1.0).contains(&near.per));
    }

    #[test]
    fn per_grows_with_frame_length(snr in -5.0f64..15.0, a in 1usize..5_000, extra in 0usize..5_000) {
        let p = ChannelParams::default();
        prop_assert!(phy::per(snr, a + extra, &p) >= phy::per(snr, a, &p));
    }

    #[test]
    fn per_from_ber_matches_direct_formula(ber in 1e-6f64..0.2, bits in 1usize..2_000) {
        let direct = 1.0 - (1.0 - ber).powi(bits as i32);
        prop_assert!(close(phy::per_from_ber(ber, bits), direct, 1e-9));
    }

    #[test]
    fn interference_only_hurts(d in 10.0f64..3_000.0, interferers in prop::collection::vec(-140.0f64..-40.0, 0..5)) {
        let p = ChannelParams::default();
        let s = phy::link_sample(d, 500, &p).unwrap();
        let sinr = phy::sinr_with_interference(&s, &interferers);
        prop_assert!(sinr <= s.snr_db + 1e-12);
        if let Some(strongest) = interferers.iter().copied().reduce(f64::max) {
            prop_assert!(sinr <= s.rx_power_dbm - strongest + 1e-9);
        }
    }

    #[test]
    fn ber_lookup_is_monotone_and_bounded(a in -20.0f64..20.0, b in -20.0f64..20.0) {
        let t = BerTable::bpsk_rate_half();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(t.ber(hi) <= t.ber(lo));
        let pts = t.points();
        prop_assert!(t.ber(lo) <= pts[0].1 && t.ber(hi) >= pts[pts.len() - 1].1);
    }

    #[test]
    fn decision_is_a_threshold(per in 0.0f64..=1.0, draw in 0.0f64..1.0) {
        let expected = if draw < per { Reception::Lost } else { Reception::Delivered };
        prop_assert_eq!(phy::receive_decision(per, draw), expected);
    }
}
