//! Push-to-talk user model and voice frame accounting.
//!
//! A user presses the button, waits for the MAC to establish the session,
//! talks (one coded frame every voice interval, the first one immediately)
//! and releases. Talk behaviour is scripted; [`synthetic_talk_schedule`] is a
//! synthetic on/off generator for load experiments only.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::SessionId;

/// One coded voice frame. The payload carries the generation time in
/// microseconds so receivers can measure latency from the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VoiceFrame {
    pub payload: u64,
    pub generation_us: u64,
    pub session_id: SessionId,
}

impl VoiceFrame {
    pub fn stamped(generation_us: u64, session_id: SessionId) -> Self {
        VoiceFrame { payload: generation_us, generation_us, session_id }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UserPhase {
    Silent,
    PressedWaiting,
    Talking,
    Releasing,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrafficError {
    #[error("button already pressed ({0:?})")]
    AlreadyActive(UserPhase),
    #[error("operation not valid in phase {0:?}")]
    WrongPhase(UserPhase),
}

/// What the harness must do after a user callback.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UserAction {
    None,
    /// Issue the MAC release primitive now.
    Release,
    /// Generate a frame now and call back at the given time.
    StartVoice {
        next_frame_us: u64,
    },
}

/// State of one PTT user.
#[derive(Clone, Debug)]
pub struct PttUser {
    phase: UserPhase,
    active_session: Option<SessionId>,
    release_requested: bool,
    interval_us: u64,
}

impl PttUser {
    pub fn new(voice_interval_us: u64) -> Self {
        PttUser {
            phase: UserPhase::Silent,
            active_session: None,
            release_requested: false,
            interval_us: voice_interval_us,
        }
    }

    pub fn phase(&self) -> UserPhase {
        self.phase
    }

    pub fn active_session(&self) -> Option<SessionId> {
        self.active_session
    }

    /// Button down. The caller issues the MAC request primitive.
    pub fn on_press(&mut self) -> Result<(), TrafficError> {
        if self.phase != UserPhase::Silent {
            return Err(TrafficError::AlreadyActive(self.phase));
        }
        self.phase = UserPhase::PressedWaiting;
        self.release_requested = false;
        Ok(())
    }

    pub fn bind_session(&mut self, id: SessionId) {
        self.active_session = Some(id);
    }

    /// The MAC reached SPEECH. Coding starts, unless the button was already
    /// released, in which case the session is torn down with no frames.
    pub fn on_session_established(&mut self, now: u64) -> Result<UserAction, TrafficError> {
        if self.phase != UserPhase::PressedWaiting {
            return Err(TrafficError::WrongPhase(self.phase));
        }
        if self.release_requested {
            self.phase = UserPhase::Releasing;
            return Ok(UserAction::Release);
        }
        self.phase = UserPhase::Talking;
        Ok(UserAction::StartVoice { next_frame_us: now + self.interval_us })
    }

    pub fn on_session_failed(&mut self) {
        self.phase = UserPhase::Silent;
        self.active_session = None;
        self.release_requested = false;
    }

    /// Periodic coder tick; returns the frame and the next tick time.
    pub fn on_voice_tick(&mut self, now: u64) -> Option<(VoiceFrame, u64)> {
        match (self.phase, self.active_session) {
            (UserPhase::Talking, Some(id)) => Some((VoiceFrame::stamped(now, id), now + self.interval_us)),
            _ => None,
        }
    }

    /// Button up.
    pub fn on_release(&mut self) -> UserAction {
        match self.phase {
            UserPhase::Talking => {
                self.phase = UserPhase::Releasing;
                UserAction::Release
            }
            UserPhase::PressedWaiting => {
                self.release_requested = true;
                UserAction::None
            }
            UserPhase::Silent | UserPhase::Releasing => UserAction::None,
        }
    }

    pub fn on_session_closed(&mut self) {
        self.phase = UserPhase::Silent;
        self.active_session = None;
    }
}

/// Scripted talk spurt.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TalkSpurt {
    pub press_us: u64,
    pub talk_us: u64,
}

/// Synthetic exponential on/off talk pattern. Not a speaker model.
pub fn synthetic_talk_schedule<R: Rng + ?Sized>(
    rng: &mut R,
    mean_talk_us: f64,
    mean_silence_us: f64,
    horizon_us: u64,
) -> Vec<TalkSpurt> {
    let mut exp = |mean: f64| (-(1.0 - rng.random::<f64>()).ln() * mean).round() as u64;
    let mut out = Vec::new();
    let mut t = exp(mean_silence_us);
    while t < horizon_us {
        let talk = exp(mean_talk_us).max(1);
        out.push(TalkSpurt { press_us: t, talk_us: talk });
        t += talk + exp(mean_silence_us).max(1);
    }
    out
}

/// Nearest-rank percentile of `values` (`q` in 0..=100). `None` when empty.
pub fn percentile(values: &[u64], q: f64) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((q / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}
