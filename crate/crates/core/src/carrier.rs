//! Scripted carrier archetypes.
//!
//! Demands are tracked as fractions of the band `[r_min, r_max]`: 0 is the
//! broker's floor, 1 its ceiling. Every archetype concedes downward only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::Load;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarrierKind {
    Cooperative,
    Hardliner,
    #[serde(rename = "tft")]
    TitForTat,
    #[serde(rename = "deadline")]
    DeadlineExploiter,
    Anchoring,
}

impl CarrierKind {
    pub const ALL: [CarrierKind; 5] = [
        CarrierKind::Cooperative,
        CarrierKind::Hardliner,
        CarrierKind::TitForTat,
        CarrierKind::DeadlineExploiter,
        CarrierKind::Anchoring,
    ];

    pub fn key(self) -> &'static str {
        match self {
            CarrierKind::Cooperative => "cooperative",
            CarrierKind::Hardliner => "hardliner",
            CarrierKind::TitForTat => "tft",
            CarrierKind::DeadlineExploiter => "deadline",
            CarrierKind::Anchoring => "anchoring",
        }
    }

    pub fn index(self) -> u64 {
        CarrierKind::ALL.iter().position(|k| *k == self).unwrap() as u64
    }
}

impl fmt::Display for CarrierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for CarrierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        CarrierKind::ALL
            .into_iter()
            .find(|k| k.key() == key)
            .or(match key.as_str() {
                "tit-for-tat" => Some(CarrierKind::TitForTat),
                "deadline-exploiter" => Some(CarrierKind::DeadlineExploiter),
                _ => None,
            })
            .ok_or_else(|| Error::UnknownKey { what: "carrier", key: s.to_string() })
    }
}

/// Persona settings. Fractions are of the band above `r_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierParams {
    pub kind: CarrierKind,
    pub open_frac: f64,
    pub floor_frac: f64,
    /// Exponent `p` of the power-curve personas, `α(x) = x^p`.
    pub curve_exponent: f64,
    /// First round at which the walk-away test applies.
    pub walkaway_round: Option<u32>,
    /// Walk away while the broker's offer is strictly below this band fraction.
    pub walkaway_broker_frac: Option<f64>,
    /// Anchoring only: the drop at round 2.
    pub anchor_drop_frac: f64,
    /// Anchoring only: the per-round concession after the drop.
    pub anchor_step_frac: f64,
}

impl CarrierParams {
    pub fn for_kind(kind: CarrierKind) -> Self {
        let base = CarrierParams {
            kind,
            open_frac: 0.0,
            floor_frac: 0.0,
            curve_exponent: 1.0,
            walkaway_round: None,
            walkaway_broker_frac: None,
            anchor_drop_frac: 0.30,
            anchor_step_frac: 0.02,
        };
        match kind {
            CarrierKind::Cooperative => CarrierParams { open_frac: 0.30, floor_frac: 0.02, ..base },
            CarrierKind::Hardliner => CarrierParams {
                open_frac: 0.90,
                curve_exponent: 3.0,
                walkaway_round: Some(8),
                walkaway_broker_frac: Some(0.60),
                ..base
            },
            CarrierKind::TitForTat => CarrierParams { open_frac: 0.60, ..base },
            CarrierKind::DeadlineExploiter => CarrierParams { open_frac: 0.70, curve_exponent: 5.0, ..base },
            CarrierKind::Anchoring => {
                CarrierParams { open_frac: 0.95, walkaway_round: Some(9), walkaway_broker_frac: Some(0.50), ..base }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.floor_frac && self.floor_frac <= self.open_frac && self.open_frac <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "{}: need 0 <= floor_frac <= open_frac <= 1, got {} / {}",
                self.kind, self.floor_frac, self.open_frac
            )));
        }
        if !(self.curve_exponent > 0.0) {
            return Err(Error::InvalidConfig(format!("{}: curve_exponent must be positive", self.kind)));
        }
        if self.anchor_drop_frac < 0.0 || self.anchor_step_frac < 0.0 {
            return Err(Error::InvalidConfig(format!("{}: anchoring steps must be non-negative", self.kind)));
        }
        Ok(())
    }

    fn walks_away(&self, round: u32, broker_frac: f64) -> bool {
        match (self.walkaway_round, self.walkaway_broker_frac) {
            (Some(from), Some(threshold)) => round >= from && broker_frac < threshold,
            _ => false,
        }
    }
}

/// Planned demand, as a band fraction, for `round`.
///
/// `broker_fracs` holds the broker's offers as band fractions for rounds
/// `1..=round`; only tit-for-tat reads it.
pub fn demand_fraction(params: &CarrierParams, round: u32, rounds: u32, broker_fracs: &[f64]) -> f64 {
    let open = params.open_frac;
    let floor = params.floor_frac;
    let frac = match params.kind {
        CarrierKind::Cooperative | CarrierKind::Hardliner | CarrierKind::DeadlineExploiter => {
            let x = (round as f64 / rounds as f64).min(1.0);
            if round >= rounds {
                floor
            } else {
                open - x.powf(params.curve_exponent) * (open - floor)
            }
        }
        CarrierKind::Anchoring => match round {
            0 | 1 => open,
            r => open - params.anchor_drop_frac - params.anchor_step_frac * (r - 2) as f64,
        },
        CarrierKind::TitForTat => {
            let upto = (round as usize).min(broker_fracs.len());
            let conceded: f64 = broker_fracs[..upto].windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum();
            open - conceded
        }
    };
    frac.clamp(floor, open)
}

/// Planned demand in dollars.
pub fn carrier_demand(params: &CarrierParams, round: u32, rounds: u32, load: &Load, broker_history: &[f64]) -> f64 {
    let fracs: Vec<f64> = broker_history.iter().map(|&o| load.band_fraction(o)).collect();
    load.rate_at_fraction(demand_fraction(params, round, rounds, &fracs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "rate", rename_all = "snake_case")]
pub enum CarrierResponse {
    Accept,
    Counter(f64),
    WalkAway,
}

/// Running state of a scripted carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierState {
    pub current_demand: f64,
    pub last_broker_offer: Option<f64>,
    pub round: u32,
    broker_fracs: Vec<f64>,
}

impl CarrierState {
    pub fn new(params: &CarrierParams, load: &Load) -> Self {
        CarrierState {
            current_demand: load.rate_at_fraction(params.open_frac),
            last_broker_offer: None,
            round: 0,
            broker_fracs: Vec::new(),
        }
    }
}

/// One carrier turn: walk away if the persona's test fires, accept if the
/// offer meets the planned demand (or, for the cooperative persona, its
/// floor), otherwise counter with the planned demand.
pub fn carrier_respond(
    params: &CarrierParams,
    state: &mut CarrierState,
    load: &Load,
    rounds: u32,
    broker_offer: f64,
) -> CarrierResponse {
    state.round += 1;
    let round = state.round;
    let broker_frac = load.band_fraction(broker_offer);
    state.broker_fracs.push(broker_frac);
    state.last_broker_offer = Some(broker_offer);

    let planned = demand_fraction(params, round, rounds, &state.broker_fracs);
    // Demands never go back up, whatever the broker did.
    let planned_rate = load.rate_at_fraction(planned).min(state.current_demand);
    state.current_demand = planned_rate;

    if params.walks_away(round, broker_frac) {
        return CarrierResponse::WalkAway;
    }
    let floor_rate = load.rate_at_fraction(params.floor_frac);
    if broker_offer >= planned_rate || (params.kind == CarrierKind::Cooperative && broker_offer >= floor_rate) {
        return CarrierResponse::Accept;
    }
    CarrierResponse::Counter(planned_rate)
}
