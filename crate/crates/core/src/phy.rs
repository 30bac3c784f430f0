//! Outdoor link model: ITU-R M.1225 vehicular path loss, link budget, coded
//! BER lookup and Bernoulli packet errors.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};

/// Allowed channel bandwidths in MHz.
pub const BANDWIDTHS_MHZ: [f64; 5] = [20.0, 10.0, 5.0, 2.5, 1.25];

const SPEED_OF_LIGHT_M_PER_US: f64 = 299.792_458;
const THERMAL_NOISE_DBM_HZ: f64 = -174.0;
const DEFAULT_BER_CSV: &str = include_str!("../data/ber_bpsk_r12.csv");

#[derive(Debug, Error)]
pub enum PhyError {
    #[error("distance must be strictly positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("BER table is empty")]
    EmptyBerTable,
    #[error("invalid BER table: {0}")]
    InvalidBerTable(String),
    #[error("cannot read BER table: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot read BER table: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid channel parameter `{field}`: {detail}")]
    InvalidParam { field: &'static str, detail: String },
}

/// Monotone SNR to coded BER lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct BerTable {
    points: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct BerRow {
    snr_db: f64,
    ber: f64,
}

impl BerTable {
    /// Requires strictly increasing SNR and non-increasing BER in [0, 1].
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, PhyError> {
        if points.is_empty() {
            return Err(PhyError::EmptyBerTable);
        }
        for (i, &(snr, ber)) in points.iter().enumerate() {
            if !snr.is_finite() || !(0.0..=1.0).contains(&ber) {
                return Err(PhyError::InvalidBerTable(format!("row {i}: ({snr}, {ber}) out of range")));
            }
            if i > 0 {
                let (prev_snr, prev_ber) = points[i - 1];
                if snr <= prev_snr {
                    return Err(PhyError::InvalidBerTable(format!("row {i}: snr_db not strictly increasing")));
                }
                if ber > prev_ber {
                    return Err(PhyError::InvalidBerTable(format!("row {i}: ber increases with snr")));
                }
            }
        }
        Ok(BerTable { points })
    }

    /// Parses CSV text with header `snr_db,ber`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, PhyError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["snr_db", "ber"] {
            return Err(PhyError::InvalidBerTable(format!(
                "expected header `snr_db,ber`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let row: BerRow = row?;
            points.push((row.snr_db, row.ber));
        }
        BerTable::new(points)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, PhyError> {
        BerTable::from_csv_reader(std::fs::File::open(path)?)
    }

    /// BPSK, rate 1/2, K = 7 soft-decision curve shipped with the crate.
    pub fn bpsk_rate_half() -> Self {
        BerTable::from_csv_reader(DEFAULT_BER_CSV.as_bytes()).expect("bundled BER table is valid")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Interpolates linearly in (dB, log10 BER), clamping at the table edges.
    pub fn ber(&self, snr_db: f64) -> f64 {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if snr_db.is_nan() {
            return first.1;
        }
        if snr_db <= first.0 {
            return first.1;
        }
        if snr_db >= last.0 {
            return last.1;
        }
        let i = pts.partition_point(|p| p.0 <= snr_db);
        let (x0, y0) = pts[i - 1];
        let (x1, y1) = pts[i];
        let t = (snr_db - x0) / (x1 - x0);
        if y0 > 0.0 && y1 > 0.0 {
            10f64.powf(y0.log10() + t * (y1.log10() - y0.log10()))
        } else {
            y0 + t * (y1 - y0)
        }
    }
}

impl Default for BerTable {
    fn default() -> Self {
        BerTable::bpsk_rate_half()
    }
}

/// Radio and propagation parameters shared by every link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub tx_power_dbm: f64,
    pub carrier_freq_mhz: f64,
    pub bandwidth_mhz: f64,
    /// Base station antenna height above the average rooftop (M.1225 Δhb).
    pub base_height_delta_m: f64,
    pub noise_figure_db: f64,
    /// Below this SINR the receiver never synchronises to a frame.
    pub min_sinr_db: f64,
    /// Energy above this SNR is sensed as slot activity even if undecodable.
    pub sense_snr_db: f64,
    /// Zero bit errors on every link that reaches `min_sinr_db`.
    pub ideal: bool,
    #[serde(skip)]
    pub ber_table: BerTable,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            tx_power_dbm: 36.99,
            carrier_freq_mhz: 2412.0,
            bandwidth_mhz: 10.0,
            base_height_delta_m: 15.0,
            noise_figure_db: 7.0,
            min_sinr_db: 3.0,
            sense_snr_db: 0.0,
            ideal: false,
            ber_table: BerTable::default(),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), PhyError> {
        let bad = |field, detail: String| Err(PhyError::InvalidParam { field, detail });
        if !BANDWIDTHS_MHZ.contains(&self.bandwidth_mhz) {
            return bad("bandwidth_mhz", format!("{} not in {BANDWIDTHS_MHZ:?}", self.bandwidth_mhz));
        }
        if !(self.carrier_freq_mhz > 0.0 && self.carrier_freq_mhz.is_finite()) {
            return bad("carrier_freq_mhz", format!("{} must be positive", self.carrier_freq_mhz));
        }
        if !(self.base_height_delta_m > 0.0 && self.base_height_delta_m.is_finite()) {
            return bad("base_height_delta_m", format!("{} must be positive", self.base_height_delta_m));
        }
        for (field, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_figure_db", self.noise_figure_db),
            ("min_sinr_db", self.min_sinr_db),
            ("sense_snr_db", self.sense_snr_db),
        ] {
            if !v.is_finite() {
                return bad(field, format!("{v} is not finite"));
            }
        }
        Ok(())
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_HZ + 10.0 * (self.bandwidth_mhz * 1e6).log10() + self.noise_figure_db
    }
}

pub fn free_space_loss_db(distance_m: f64, freq_mhz: f64) -> f64 {
    20.0 * distance_m.log10() + 20.0 * freq_mhz.log10() - 27.55
}

/// M.1225 vehicular path loss, never below free-space loss.
pub fn path_loss_db(distance_m: f64, params: &ChannelParams) -> Result<f64, PhyError> {
    if distance_m.is_nan() || distance_m <= 0.0 {
        return Err(PhyError::NonPositiveDistance(distance_m));
    }
    let dh = params.base_height_delta_m;
    let vehicular = 40.0 * (1.0 - 4e-3 * dh) * (distance_m / 1000.0).log10() - 18.0 * dh.log10()
        + 21.0 * params.carrier_freq_mhz.log10()
        + 80.0;
    Ok(vehicular.max(free_space_loss_db(distance_m, params.carrier_freq_mhz)))
}

pub fn rx_power_dbm(distance_m: f64, params: &ChannelParams) -> Result<f64, PhyError> {
    Ok(params.tx_power_dbm - path_loss_db(distance_m, params)?)
}

pub fn snr_db(distance_m: f64, params: &ChannelParams) -> Result<f64, PhyError> {
    Ok(rx_power_dbm(distance_m, params)? - params.noise_floor_dbm())
}

/// `1 - (1 - ber)^bits`, evaluated without cancellation for tiny `ber`.
pub fn per_from_ber(ber: f64, frame_bits: usize) -> f64 {
    if ber >= 1.0 {
        return 1.0;
    }
    (-(frame_bits as f64 * (-ber).ln_1p()).exp_m1()).clamp(0.0, 1.0)
}

/// Packet error probability from the BER table.
pub fn per(snr_db: f64, frame_bits: usize, params: &ChannelParams) -> f64 {
    per_from_ber(params.ber_table.ber(snr_db), frame_bits)
}

/// Packet error probability including the sync threshold and the ideal mode.
pub fn frame_error_probability(sinr_db: f64, frame_bits: usize, params: &ChannelParams) -> f64 {
    if sinr_db < params.min_sinr_db {
        1.0
    } else if params.ideal {
        0.0
    } else {
        per(sinr_db, frame_bits, params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reception {
    Delivered,
    Lost,
}

pub fn receive_decision(per: f64, draw: f64) -> Reception {
    if draw >= per {
        Reception::Delivered
    } else {
        Reception::Lost
    }
}

/// One evaluated link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinkSample {
    pub distance_m: f64,
    pub rx_power_dbm: f64,
    pub snr_db: f64,
    pub ber: f64,
    pub per: f64,
    pub noise_floor_dbm: f64,
}

pub fn link_sample(distance_m: f64, frame_bits: usize, params: &ChannelParams) -> Result<LinkSample, PhyError> {
    let rx = rx_power_dbm(distance_m, params)?;
    let noise = params.noise_floor_dbm();
    let snr = rx - noise;
    let ber = params.ber_table.ber(snr);
    Ok(LinkSample {
        distance_m,
        rx_power_dbm: rx,
        snr_db: snr,
        ber,
        per: per_from_ber(ber, frame_bits),
        noise_floor_dbm: noise,
    })
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Wanted power over noise plus the linear sum of interferer powers.
pub fn sinr_with_interference(wanted: &LinkSample, interferers_dbm: &[f64]) -> f64 {
    if interferers_dbm.is_empty() {
        return wanted.snr_db;
    }
    let denom = dbm_to_mw(wanted.noise_floor_dbm) + interferers_dbm.iter().map(|p| dbm_to_mw(*p)).sum::<f64>();
    wanted.rx_power_dbm - mw_to_dbm(denom)
}

pub fn propagation_delay_us(distance_m: f64) -> f64 {
    distance_m / SPEED_OF_LIGHT_M_PER_US
}

const MC_CHUNK: u64 = 1 << 16;

/// Fraction of `draws` seeded uniform draws that lose a frame at `per`.
///
/// Draws are split into fixed chunks, each with its own stream, so the
/// result does not depend on `exec`.
pub fn monte_carlo_loss_fraction(per: f64, draws: u64, seed: u64, exec: Execution) -> f64 {
    if draws == 0 {
        return 0.0;
    }
    let chunks: Vec<u64> = (0..draws.div_ceil(MC_CHUNK)).collect();
    let lost = par::map(exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c);
        let n = MC_CHUNK.min(draws - c * MC_CHUNK);
        (0..n).filter(|_| receive_decision(per, rng.random::<f64>()) == Reception::Lost).count() as u64
    });
    lost.iter().sum::<u64>() as f64 / draws as f64
}
