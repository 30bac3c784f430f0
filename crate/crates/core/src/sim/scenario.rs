//! Scenario files.
//!
//! ```toml
//! schema = 1
//! duration_s = 2.0
//! seed = 7
//!
//! [tdma]
//! solution = 3            # or every TdmaConfig key
//!
//! [channel]
//! ideal = true            # any ChannelParams key, plus ber_table = "file.csv"
//!
//! [engine]
//! tie_break = "fifo"      # or "shuffled"
//!
//! [[nodes]]
//! x = 0.0
//! y = 0.0                 # optional: id = "02:00:00:00:00:01", mgmt_slot = 0
//!
//! [[ptt]]
//! node = 0
//! press_ms = 0.0
//! talk_ms = 2000.0
//! destination = "broadcast"   # or a node index
//!
//! [[sleep]]
//! node = 1
//! from_ms = 500.0
//! to_ms = 900.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::queue::TieBreak;
use crate::codec::MacAddr;
use crate::mac::EngineParams;
use crate::phy::{BerTable, ChannelParams};
use crate::tdma::{validate_config, PlannerInput, TdmaConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario field `{field}`: {detail}")]
    Invalid { field: String, detail: String },
}

fn invalid(field: impl Into<String>, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), detail: detail.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Broadcast,
    Node(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: MacAddr,
    pub x: f64,
    pub y: f64,
    pub mgmt_slot: u16,
}

impl NodeSpec {
    /// Node `index` at (x, y) with the default address and MGMT slot.
    pub fn at(index: usize, x: f64, y: f64) -> Self {
        NodeSpec { id: MacAddr::node(index), x, y, mgmt_slot: index as u16 }
    }

    pub fn distance_to(&self, other: &NodeSpec) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PttAction {
    pub node: usize,
    pub press_us: u64,
    pub talk_us: u64,
    pub destination: Destination,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SleepAction {
    pub node: usize,
    pub from_us: u64,
    pub to_us: u64,
}

/// A validated, ready-to-run scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub tdma: TdmaConfig,
    pub channel: ChannelParams,
    pub engine: EngineParams,
    pub tie_break: TieBreak,
    pub nodes: Vec<NodeSpec>,
    pub ptt: Vec<PttAction>,
    pub sleep: Vec<SleepAction>,
    pub duration_us: u64,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: u32,
    duration_s: f64,
    #[serde(default)]
    seed: u64,
    tdma: toml::Table,
    #[serde(default)]
    channel: RawChannel,
    #[serde(default)]
    engine: RawEngine,
    nodes: Vec<RawNode>,
    #[serde(default)]
    ptt: Vec<RawPtt>,
    #[serde(default)]
    sleep: Vec<RawSleep>,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawChannel {
    tx_power_dbm: f64,
    carrier_freq_mhz: f64,
    bandwidth_mhz: f64,
    base_height_delta_m: f64,
    noise_figure_db: f64,
    min_sinr_db: f64,
    sense_snr_db: f64,
    ideal: bool,
    ber_table: Option<String>,
}

impl Default for RawChannel {
    fn default() -> Self {
        let d = ChannelParams::default();
        RawChannel {
            tx_power_dbm: d.tx_power_dbm,
            carrier_freq_mhz: d.carrier_freq_mhz,
            bandwidth_mhz: d.bandwidth_mhz,
            base_height_delta_m: d.base_height_delta_m,
            noise_figure_db: d.noise_figure_db,
            min_sinr_db: d.min_sinr_db,
            sense_snr_db: d.sense_snr_db,
            ideal: d.ideal,
            ber_table: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawEngine {
    tie_break: TieBreak,
    freshness_cycles: u32,
    confirm_cycles: u32,
    rx_timeout_frames: u32,
    max_sessions: usize,
    no_free_backoff_cycles: u32,
}

impl Default for RawEngine {
    fn default() -> Self {
        let d = EngineParams::default();
        RawEngine {
            tie_break: TieBreak::default(),
            freshness_cycles: d.freshness_cycles,
            confirm_cycles: d.confirm_cycles,
            rx_timeout_frames: d.rx_timeout_frames,
            max_sessions: d.max_sessions,
            no_free_backoff_cycles: d.no_free_backoff_cycles,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    x: f64,
    y: f64,
    id: Option<MacAddr>,
    mgmt_slot: Option<u16>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawDestination {
    Name(String),
    Index(usize),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPtt {
    node: usize,
    press_ms: f64,
    talk_ms: f64,
    destination: RawDestination,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSleep {
    node: usize,
    from_ms: f64,
    to_ms: f64,
}

fn ms_to_us(field: String, ms: f64) -> Result<u64, ScenarioError> {
    if !ms.is_finite() || ms < 0.0 {
        return Err(invalid(field, format!("{ms} must be a finite non-negative time")));
    }
    Ok((ms * 1000.0).round() as u64)
}

fn tdma_from_table(table: toml::Table) -> Result<TdmaConfig, ScenarioError> {
    if let Some(value) = table.get("solution") {
        if table.len() != 1 {
            return Err(invalid("tdma", "`solution` cannot be combined with explicit config keys"));
        }
        let n = value
            .as_integer()
            .filter(|n| (1..=3).contains(n))
            .ok_or_else(|| invalid("tdma.solution", format!("{value} is not 1, 2 or 3")))?;
        return Ok(TdmaConfig::solution(n as usize).expect("range checked"));
    }
    TdmaConfig::deserialize(toml::Value::Table(table)).map_err(|e| invalid("tdma", e.to_string()))
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Scenario::from_toml_str(&text, path.parent())
    }

    /// Parses and validates a scenario. Relative BER table paths resolve
    /// against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text)?;
        if raw.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("unsupported version {}, expected {SCHEMA_VERSION}", raw.schema)));
        }
        if !(raw.duration_s.is_finite() && raw.duration_s > 0.0) {
            return Err(invalid("duration_s", format!("{} must be positive", raw.duration_s)));
        }
        let tdma = tdma_from_table(raw.tdma)?;

        let c = raw.channel;
        let ber_table = match c.ber_table {
            None => BerTable::default(),
            Some(p) => {
                let full = base_dir.map(|d| d.join(&p)).unwrap_or_else(|| p.clone().into());
                BerTable::from_csv_path(&full).map_err(|e| invalid("channel.ber_table", e.to_string()))?
            }
        };
        let channel = ChannelParams {
            tx_power_dbm: c.tx_power_dbm,
            carrier_freq_mhz: c.carrier_freq_mhz,
            bandwidth_mhz: c.bandwidth_mhz,
            base_height_delta_m: c.base_height_delta_m,
            noise_figure_db: c.noise_figure_db,
            min_sinr_db: c.min_sinr_db,
            sense_snr_db: c.sense_snr_db,
            ideal: c.ideal,
            ber_table,
        };

        let e = raw.engine;
        let engine = EngineParams {
            freshness_cycles: e.freshness_cycles,
            confirm_cycles: e.confirm_cycles,
            rx_timeout_frames: e.rx_timeout_frames,
            max_sessions: e.max_sessions,
            no_free_backoff_cycles: e.no_free_backoff_cycles,
        };

        let nodes = raw
            .nodes
            .into_iter()
            .enumerate()
            .map(|(i, n)| NodeSpec {
                id: n.id.unwrap_or(MacAddr::node(i)),
                x: n.x,
                y: n.y,
                mgmt_slot: n.mgmt_slot.unwrap_or(i as u16),
            })
            .collect();
        let ptt = raw
            .ptt
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let destination = match p.destination {
                    RawDestination::Name(s) if s == "broadcast" => Destination::Broadcast,
                    RawDestination::Name(s) => {
                        return Err(invalid(
                            format!("ptt[{i}].destination"),
                            format!("`{s}` is neither \"broadcast\" nor a node index"),
                        ))
                    }
                    RawDestination::Index(n) => Destination::Node(n),
                };
                Ok(PttAction {
                    node: p.node,
                    press_us: ms_to_us(format!("ptt[{i}].press_ms"), p.press_ms)?,
                    talk_us: ms_to_us(format!("ptt[{i}].talk_ms"), p.talk_ms)?,
                    destination,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sleep = raw
            .sleep
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(SleepAction {
                    node: s.node,
                    from_us: ms_to_us(format!("sleep[{i}].from_ms"), s.from_ms)?,
                    to_us: ms_to_us(format!("sleep[{i}].to_ms"), s.to_ms)?,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;

        let scenario = Scenario {
            tdma,
            channel,
            engine,
            tie_break: e.tie_break,
            nodes,
            ptt,
            sleep,
            duration_us: (raw.duration_s * 1e6).round() as u64,
            seed: raw.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Checks every cross-field constraint.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let report = validate_config(&self.tdma, &PlannerInput::for_config(&self.tdma));
        if let Some(fail) = report.failures().next() {
            return Err(invalid(format!("tdma.{}", fail.name), fail.detail.clone()));
        }
        self.channel.validate().map_err(|e| invalid("channel", e.to_string()))?;
        if self.duration_us == 0 {
            return Err(invalid("duration_s", "must be positive"));
        }
        for (field, v) in [
            ("engine.freshness_cycles", self.engine.freshness_cycles as usize),
            ("engine.confirm_cycles", self.engine.confirm_cycles as usize),
            ("engine.rx_timeout_frames", self.engine.rx_timeout_frames as usize),
            ("engine.max_sessions", self.engine.max_sessions),
            ("engine.no_free_backoff_cycles", self.engine.no_free_backoff_cycles as usize),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if self.nodes.is_empty() {
            return Err(invalid("nodes", "at least one node is required"));
        }
        let capacity = self.tdma.mgmt_slots * self.tdma.mgmt_cycle_frames;
        if self.nodes.len() > capacity as usize {
            return Err(invalid("nodes", format!("{} nodes but only {capacity} MGMT slots", self.nodes.len())));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(invalid(format!("nodes[{i}]"), "position must be finite"));
            }
            if n.mgmt_slot as u32 >= capacity {
                return Err(invalid(format!("nodes[{i}].mgmt_slot"), format!("{} >= {capacity}", n.mgmt_slot)));
            }
            if n.id.is_broadcast() {
                return Err(invalid(format!("nodes[{i}].id"), "broadcast address"));
            }
            for (j, m) in self.nodes.iter().enumerate().take(i) {
                if m.mgmt_slot == n.mgmt_slot {
                    return Err(invalid(
                        format!("nodes[{i}].mgmt_slot"),
                        format!("{} already used by nodes[{j}]", n.mgmt_slot),
                    ));
                }
                if m.x == n.x && m.y == n.y {
                    return Err(invalid(format!("nodes[{i}]"), format!("same position as nodes[{j}]")));
                }
                if m.id == n.id {
                    return Err(invalid(format!("nodes[{i}].id"), format!("{} already used by nodes[{j}]", n.id)));
                }
            }
        }
        for (i, p) in self.ptt.iter().enumerate() {
            if p.node >= self.nodes.len() {
                return Err(invalid(format!("ptt[{i}].node"), format!("no node {}", p.node)));
            }
            if let Destination::Node(d) = p.destination {
                if d >= self.nodes.len() || d == p.node {
                    return Err(invalid(format!("ptt[{i}].destination"), format!("{d} is not another node")));
                }
            }
        }
        for (i, s) in self.sleep.iter().enumerate() {
            if s.node >= self.nodes.len() {
                return Err(invalid(format!("sleep[{i}].node"), format!("no node {}", s.node)));
            }
            if s.to_us <= s.from_us {
                return Err(invalid(format!("sleep[{i}]"), "to_ms must follow from_ms"));
            }
        }
        Ok(())
    }

    /// A minimal scenario over `nodes`, no traffic.
    pub fn new(tdma: TdmaConfig, nodes: Vec<NodeSpec>, duration_us: u64, seed: u64) -> Self {
        Scenario {
            tdma,
            channel: ChannelParams::default(),
            engine: EngineParams::default(),
            tie_break: TieBreak::Fifo,
            nodes,
            ptt: Vec::new(),
            sleep: Vec::new(),
            duration_us,
            seed,
        }
    }
}
