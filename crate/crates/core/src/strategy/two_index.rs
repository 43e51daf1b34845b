//! The two-index anchor-and-resume broker.
//!
//! The broker keeps two counters. `t` is the real round. `τ` is the position
//! on the current concession curve, equal to `t` until the first pricing
//! shift. When the target moves at round `k`, the curve is rebuilt from the
//! new spread (new β, new range) and `τ` is re-anchored at the first integer
//! position whose offer is not below the last one sent:
//!
//! ```text
//! α₀ = (offer(k-1) - r_min) / R_new
//! τ₀ = ⌈T · α₀^β_new⌉
//! τ(t) = τ₀ + (t - k)
//! offer(t) = min(f(τ(t)), r_target_new)
//! ```
//!
//! If the new target sits below the last offer the broker holds that offer
//! until the next shift instead.

use serde::{Deserialize, Serialize};

use super::{adaptive_beta, ConcessionCurve, Proposal};
use crate::domain::Load;
use crate::error::{Error, Result};

/// Where the virtual index was re-anchored after a shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub shift_round: u32,
    pub tau0: u32,
}

/// How a shift was absorbed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum ShiftCase {
    /// Shift arrived before any offer was made; the curve is simply replaced.
    BeforeFirstOffer,
    /// Case 1: the new target is below the last offer; offers freeze.
    Hold,
    /// Case 2: resume on the new curve from the anchored position.
    Resume { tau0: u32 },
}

/// Smallest curve position whose offer is at least `last_offer`, computed in
/// closed form as `⌈T·α₀^β⌉`.
///
/// `last_offer` must lie in `[r_min, r_target]` of `curve`. When `T·α₀^β` is
/// within rounding of an integer the closed form can land one step off in
/// either direction; both are corrected against the curve itself.
pub fn anchor_index(curve: &ConcessionCurve, last_offer: f64) -> u32 {
    let range = curve.range();
    if range <= 0.0 {
        return curve.rounds;
    }
    let alpha0 = ((last_offer - curve.r_min) / range).clamp(0.0, 1.0);
    let raw = curve.rounds as f64 * alpha0.powf(curve.beta);
    let mut tau0 = (raw.ceil() as u32).max(1);
    while tau0 < curve.rounds && curve.value_at(tau0 as f64) < last_offer {
        tau0 += 1;
    }
    while tau0 > 1 && curve.value_at((tau0 - 1) as f64) >= last_offer {
        tau0 -= 1;
    }
    tau0
}

/// State of one two-index negotiation from the broker's side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoIndexState {
    t: u32,
    tau: f64,
    curve: ConcessionCurve,
    r_max: f64,
    last_offer: Option<f64>,
    hold_active: bool,
    hold_count: u32,
    anchor: Option<Anchor>,
}

impl TwoIndexState {
    pub fn new(load: &Load, c: f64, rounds: u32) -> Result<Self> {
        let spread = load.spread();
        let beta = adaptive_beta(spread.target_spread_frac, c)?;
        let curve = ConcessionCurve::new(beta, load.r_min.value(), load.r_target.value(), rounds)?;
        Ok(TwoIndexState {
            t: 0,
            tau: 0.0,
            curve,
            r_max: load.r_max.value(),
            last_offer: None,
            hold_active: false,
            hold_count: 0,
            anchor: None,
        })
    }

    pub fn round(&self) -> u32 {
        self.t
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn curve(&self) -> &ConcessionCurve {
        &self.curve
    }

    pub fn last_offer(&self) -> Option<f64> {
        self.last_offer
    }

    pub fn hold_active(&self) -> bool {
        self.hold_active
    }

    pub fn hold_count(&self) -> u32 {
        self.hold_count
    }

    pub fn anchor(&self) -> Option<Anchor> {
        self.anchor
    }

    /// Absorbs a new target at the start of round `shift_round`, before that
    /// round's offer is computed.
    pub fn apply_shift(&mut self, shift_round: u32, new_target: f64, c: f64) -> Result<ShiftCase> {
        let r_min = self.curve.r_min;
        if new_target < r_min {
            return Err(Error::TargetBelowFloor { target: new_target, floor: r_min });
        }
        let new_range = new_target - r_min;
        // β is only defined for a positive range; a zero range keeps the old shape.
        let beta = if new_range > 0.0 { adaptive_beta(new_range / r_min, c)? } else { self.curve.beta };
        let curve = ConcessionCurve::new(beta, r_min, new_target, self.curve.rounds)?;

        let case = match self.last_offer {
            None => {
                self.anchor = None;
                self.hold_active = false;
                ShiftCase::BeforeFirstOffer
            }
            Some(prev) if prev > new_target => {
                self.hold_active = true;
                ShiftCase::Hold
            }
            Some(prev) => {
                let tau0 = anchor_index(&curve, prev);
                self.anchor = Some(Anchor { shift_round, tau0 });
                self.hold_active = false;
                ShiftCase::Resume { tau0 }
            }
        };
        self.curve = curve;
        Ok(case)
    }

    /// Offer for round `t`. Rounds must be requested in increasing order.
    pub fn next_offer(&mut self, t: u32) -> Proposal {
        self.t = t;
        if self.hold_active {
            if let Some(prev) = self.last_offer {
                self.hold_count += 1;
                return Proposal { offer: prev, tau: Some(self.tau), held: true };
            }
        }
        self.tau = match self.anchor {
            Some(a) => a.tau0 as f64 + (t as f64 - a.shift_round as f64),
            None => t as f64,
        };
        let offer = self.curve.value_at(self.tau).min(self.r_max);
        self.last_offer = Some(offer);
        Proposal { offer, tau: Some(self.tau), held: false }
    }
}
