//! Mid-negotiation pricing shifts.
//!
//! A schedule is drawn once per `(S, load, repetition)` and replayed against
//! every strategy, so all brokers face the same repricing.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::Load;
use crate::error::{Error, Result};
use crate::seeding::{Purpose, StreamKey};

pub const MIN_SHIFT_MAGNITUDE: f64 = 0.05;
pub const MAX_SHIFT_MAGNITUDE: f64 = 0.40;
pub const FIRST_SHIFT_ROUND: u32 = 2;
pub const LAST_SHIFT_ROUND: u32 = 7;

/// A repricing at the start of `round`, scaling the target by `multiplier`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEvent {
    pub round: u32,
    pub multiplier: f64,
}

impl ShiftEvent {
    pub fn new(round: u32, multiplier: f64) -> Result<Self> {
        let event = ShiftEvent { round, multiplier };
        event.validate()?;
        Ok(event)
    }

    pub fn validate(&self) -> Result<()> {
        let magnitude = (self.multiplier - 1.0).abs();
        // Small tolerance so decimal literals like 0.95 pass.
        let tol = 1e-12;
        if !(magnitude >= MIN_SHIFT_MAGNITUDE - tol && magnitude <= MAX_SHIFT_MAGNITUDE + tol) {
            return Err(Error::InvalidConfig(format!(
                "shift multiplier {} outside ±[{MIN_SHIFT_MAGNITUDE}, {MAX_SHIFT_MAGNITUDE}]",
                self.multiplier
            )));
        }
        if self.round < FIRST_SHIFT_ROUND {
            return Err(Error::InvalidConfig(format!("shift round {} before round 2", self.round)));
        }
        Ok(())
    }

    pub fn is_downward(&self) -> bool {
        self.multiplier < 1.0
    }
}

/// What a shift multiplier scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftBasis {
    /// The concession range: `r_target' = r_min + m·(r_target - r_min)`.
    #[default]
    Range,
    /// The target rate itself: `r_target' = m·r_target`.
    Rate,
}

impl FromStr for ShiftBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "range" => Ok(ShiftBasis::Range),
            "rate" => Ok(ShiftBasis::Rate),
            other => Err(Error::UnknownKey { what: "shift basis", key: other.to_string() }),
        }
    }
}

impl fmt::Display for ShiftBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftBasis::Range => "range",
            ShiftBasis::Rate => "rate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleKey {
    pub spread_pct: f64,
    pub load_index: u64,
    pub repetition: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSchedule {
    pub key: ScheduleKey,
    pub events: Vec<ShiftEvent>,
}

impl ShiftSchedule {
    /// A schedule with no shifts, for static-pricing runs.
    pub fn empty(key: ScheduleKey) -> Self {
        ShiftSchedule { key, events: Vec::new() }
    }

    pub fn new(key: ScheduleKey, events: Vec<ShiftEvent>) -> Result<Self> {
        let schedule = ShiftSchedule { key, events };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.events {
            e.validate()?;
        }
        if self.events.windows(2).any(|w| w[0].round >= w[1].round) {
            return Err(Error::InvalidConfig("shift rounds must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn event_at(&self, round: u32) -> Option<&ShiftEvent> {
        self.events.iter().find(|e| e.round == round)
    }

    /// SHA-256 over the canonical JSON form, used to prove strategies shared a schedule.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schedules serialize");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedules serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schedule: ShiftSchedule = serde_json::from_str(text)?;
        schedule.validate()?;
        Ok(schedule)
    }
}

fn draw_multiplier<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let magnitude = rng.random_range(MIN_SHIFT_MAGNITUDE..=MAX_SHIFT_MAGNITUDE);
    if rng.random_bool(0.5) {
        1.0 + magnitude
    } else {
        1.0 - magnitude
    }
}

fn schedule_rng(key: &ScheduleKey, master_seed: u64) -> rand_chacha::ChaCha8Rng {
    StreamKey {
        master_seed,
        spread_pct: key.spread_pct,
        load_index: key.load_index,
        repetition: key.repetition,
        purpose: Purpose::Schedule,
        lane: 0,
    }
    .rng()
}

/// One shift, round uniform on 2..=7, direction a fair coin, magnitude
/// uniform on [0.05, 0.40].
pub fn gen_shift_schedule(key: ScheduleKey, master_seed: u64) -> ShiftSchedule {
    let mut rng = schedule_rng(&key, master_seed);
    let round = rng.random_range(FIRST_SHIFT_ROUND..=LAST_SHIFT_ROUND);
    let multiplier = draw_multiplier(&mut rng);
    ShiftSchedule { key, events: vec![ShiftEvent { round, multiplier }] }
}

/// `count` shifts at distinct rounds drawn from `2..=last_round`.
pub fn gen_multi_shift_schedule(
    key: ScheduleKey,
    master_seed: u64,
    count: usize,
    last_round: u32,
) -> Result<ShiftSchedule> {
    let available = (FIRST_SHIFT_ROUND..=last_round).count();
    if count > available {
        return Err(Error::InvalidConfig(format!(
            "{count} shifts do not fit in rounds {FIRST_SHIFT_ROUND}..={last_round}"
        )));
    }
    let mut rng = schedule_rng(&key, master_seed);
    let rounds: Vec<u32> = (FIRST_SHIFT_ROUND..=last_round).collect();
    let mut picked: Vec<u32> =
        rand::seq::index::sample(&mut rng, rounds.len(), count).into_iter().map(|i| rounds[i]).collect();
    picked.sort_unstable();
    let events = picked.into_iter().map(|round| ShiftEvent { round, multiplier: draw_multiplier(&mut rng) }).collect();
    Ok(ShiftSchedule { key, events })
}

/// The load as the broker sees it after `event`. The target stays inside
/// `[r_min, r_max]`; the band itself never moves.
pub fn apply_shift(load: &Load, event: &ShiftEvent, basis: ShiftBasis) -> Load {
    let lo = load.r_min.value();
    let hi = load.r_max.value();
    let raw = match basis {
        ShiftBasis::Range => lo + event.multiplier * load.range(),
        ShiftBasis::Rate => load.r_target.value() * event.multiplier,
    };
    load.with_target(raw.clamp(lo, hi)).expect("clamped target is inside the band")
}
