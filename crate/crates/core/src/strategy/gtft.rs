use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Proposal;
use crate::domain::Load;
use crate::error::{Error, Result};

/// Generous tit-for-tat tuning, all as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtftParams {
    /// A carrier concession below this share of the broker's remaining room counts as a stall.
    pub stall_threshold_frac: f64,
    /// Share of remaining room conceded unilaterally when generosity fires.
    pub generosity_frac: f64,
    pub generosity_prob: f64,
}

impl Default for GtftParams {
    fn default() -> Self {
        GtftParams { stall_threshold_frac: 0.05, generosity_frac: 0.15, generosity_prob: 0.30 }
    }
}

impl GtftParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stall_threshold_frac", self.stall_threshold_frac),
            ("generosity_frac", self.generosity_frac),
            ("generosity_prob", self.generosity_prob),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Mirror the carrier's dollar concession; when the carrier stalls, concede
/// a share of the remaining room with some probability. The result never
/// falls below `prev_offer` or rises above `ceiling`.
pub fn gtft_offer<R: Rng + ?Sized>(
    prev_offer: f64,
    carrier_concession: f64,
    ceiling: f64,
    params: &GtftParams,
    rng: &mut R,
) -> f64 {
    let room = (ceiling - prev_offer).max(0.0);
    let mut candidate = prev_offer + carrier_concession;
    if carrier_concession < params.stall_threshold_frac * room && rng.random::<f64>() < params.generosity_prob {
        candidate += params.generosity_frac * room;
    }
    candidate.clamp(prev_offer, ceiling.max(prev_offer))
}

/// Behaviour-dependent broker. Opens at the floor; its ceiling is the current target.
#[derive(Debug, Clone)]
pub struct GtftBroker {
    params: GtftParams,
    rng: ChaCha8Rng,
    r_min: f64,
    ceiling: f64,
    prev_offer: Option<f64>,
    hold_count: u32,
}

impl GtftBroker {
    pub fn new(load: &Load, params: GtftParams, rng: ChaCha8Rng) -> Self {
        GtftBroker {
            params,
            rng,
            r_min: load.r_min.value(),
            ceiling: load.r_target.value(),
            prev_offer: None,
            hold_count: 0,
        }
    }

    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn hold_count(&self) -> u32 {
        self.hold_count
    }

    pub fn apply_shift(&mut self, new_target: f64) -> Result<()> {
        if new_target < self.r_min {
            return Err(Error::TargetBelowFloor { target: new_target, floor: self.r_min });
        }
        self.ceiling = new_target;
        Ok(())
    }

    pub fn propose(&mut self, _round: u32, carrier_demands: &[f64]) -> Proposal {
        let offer = match self.prev_offer {
            None => self.r_min,
            // Ceiling moved below the last offer: hold rather than retract.
            Some(prev) if prev > self.ceiling => {
                self.hold_count += 1;
                return Proposal { offer: prev, tau: None, held: true };
            }
            Some(prev) => {
                let concession = match carrier_demands {
                    [.., before, last] => (before - last).max(0.0),
                    _ => 0.0,
                };
                gtft_offer(prev, concession, self.ceiling, &self.params, &mut self.rng)
            }
        };
        self.prev_offer = Some(offer);
        Proposal { offer, tau: None, held: false }
    }
}
