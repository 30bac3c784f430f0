//! Model of a TDMA wideband tactical waveform built on an 802.11n OFDM PHY.
//!
//! The crate is organised bottom-up:
//!
//! * [`tdma`] plans and validates frame configurations and lays out the slot
//!   schedule of one atomic frame.
//! * [`codec`] serialises MAC PDUs bit-exactly, including the 32-bit FCS.
//! * [`phy`] turns geometry into path loss, SNR, bit and packet error rates.
//! * [`mac`] is the per-node protocol machine: network-beat, bitmap fusion,
//!   unconfirmed slot allocation and PTT session signalling.
//! * [`traffic`] is the push-to-talk user model and voice frame accounting.
//! * [`sim`] wires everything into a deterministic discrete-event simulator.
//!
//! Data-parallel work (planner search, Monte Carlo draws, seed sweeps) goes
//! through [`par`], which uses rayon when the `parallel` feature is enabled
//! and plain iterators otherwise.

pub mod codec;
pub mod mac;
pub mod par;
pub mod phy;
pub mod sim;
pub mod tdma;
pub mod traffic;

pub use codec::{MacAddr, MacPdu};
pub use par::Execution;
pub use tdma::{PlannerInput, SlotKind, TdmaConfig};
