//! Plain-text `key = value` form of a [`TdmaConfig`].
//!
//! One key per line, integer values, `#` comments. The document is a flat
//! TOML table, so the same text can be embedded as the `[tdma]` section of a
//! scenario file.

use thiserror::Error;

use super::TdmaConfig;

#[derive(Debug, Error)]
pub enum DocError {
    #[error("malformed config document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialise config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

pub fn config_to_doc(cfg: &TdmaConfig) -> Result<String, DocError> {
    let body = toml::to_string(cfg)?;
    Ok(format!(
        "# TDMA frame plan: {} ms frame, {}/{}/{} MGMT/RT/BE slots\n{body}",
        cfg.frame_length_ms(),
        cfg.mgmt_slots,
        cfg.rt_slots,
        cfg.be_slots
    ))
}

pub fn config_from_doc(text: &str) -> Result<TdmaConfig, DocError> {
    Ok(toml::from_str(text)?)
}
