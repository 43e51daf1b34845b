//! Broker strategies.
//!
//! Three fixed-β time-dependent baselines, the spread-adaptive two-index
//! broker and generous tit-for-tat. Every strategy exposes the same
//! [`Broker`] interface to the protocol loop: take a pricing shift, propose
//! an offer for a round.

mod gtft;
mod two_index;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{Load, ProtocolConfig, Rate};
use crate::error::{Error, Result};

pub use gtft::{gtft_offer, GtftBroker, GtftParams};
pub use two_index::{anchor_index, Anchor, ShiftCase, TwoIndexState};

pub const BOULWARE_BETA: f64 = 0.6;
pub const LINEAR_BETA: f64 = 1.0;
pub const CONCEDER_BETA: f64 = 2.0;

/// Spread-derived concession shape: `β = c / (100·s)`.
///
/// `c` is the spread percentage where the broker flips from Conceder
/// (β > 1) to Boulware (β < 1).
pub fn adaptive_beta(target_spread_frac: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidConfig(format!("calibration constant must be positive, got {c}")));
    }
    if target_spread_frac == 0.0 {
        return Err(Error::DegenerateSpread);
    }
    if !(target_spread_frac > 0.0 && target_spread_frac.is_finite()) {
        return Err(Error::InvalidConfig(format!("target spread must be positive, got {target_spread_frac}")));
    }
    Ok(c / (target_spread_frac * 100.0))
}

/// Time-dependent concession from `r_min` toward `r_target` over `rounds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcessionCurve {
    pub beta: f64,
    pub r_min: f64,
    pub r_target: f64,
    pub rounds: u32,
}

impl ConcessionCurve {
    pub fn new(beta: f64, r_min: f64, r_target: f64, rounds: u32) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")));
        }
        if r_target < r_min {
            return Err(Error::TargetBelowFloor { target: r_target, floor: r_min });
        }
        if rounds == 0 {
            return Err(Error::InvalidConfig("curve needs at least one round".into()));
        }
        Ok(ConcessionCurve { beta, r_min, r_target, rounds })
    }

    /// Concession range `R = r_target - r_min`.
    pub fn range(&self) -> f64 {
        self.r_target - self.r_min
    }

    /// The curve at a (possibly virtual) position without the target clamp.
    pub fn unclamped(&self, position: f64) -> f64 {
        let alpha = (position / self.rounds as f64).powf(1.0 / self.beta);
        self.r_min + alpha * self.range()
    }

    /// The curve at `position`, capped at the target. Positions at or past
    /// the deadline return the target exactly.
    pub fn value_at(&self, position: f64) -> f64 {
        if position >= self.rounds as f64 {
            return self.r_target;
        }
        self.unclamped(position).min(self.r_target)
    }
}

/// Classical time-dependent offer for an integer round.
pub fn faratin_offer(curve: &ConcessionCurve, round: u32) -> Rate {
    Rate::new(curve.value_at(round as f64)).expect("curve values are non-negative")
}

/// Broker utility of a rate: `(r_target - x) / R`. Higher is better for the broker.
pub fn broker_score(x: f64, r_target: f64, range: f64) -> Result<f64> {
    if range == 0.0 {
        return Err(Error::DegenerateSpread);
    }
    Ok((r_target - x) / range)
}

/// Accept the standing carrier offer when it scores at least as well as the
/// broker's own counter. With a zero range the score is undefined; the
/// ordering it would induce (lower rate is better) is used instead.
pub fn accepts_carrier_offer(carrier_offer: f64, own_counter: f64, r_target: f64, range: f64) -> bool {
    match (broker_score(carrier_offer, r_target, range), broker_score(own_counter, r_target, range)) {
        (Ok(theirs), Ok(ours)) => theirs >= ours,
        _ => carrier_offer <= own_counter,
    }
}

/// Which broker strategy to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BrokerStrategyKind {
    FixedBeta {
        beta: f64,
    },
    /// Spread-adaptive β with anchor-and-resume; `c` comes from [`ProtocolConfig`].
    TwoIndex,
    GenerousTft,
}

impl BrokerStrategyKind {
    pub const BOULWARE: Self = BrokerStrategyKind::FixedBeta { beta: BOULWARE_BETA };
    pub const LINEAR: Self = BrokerStrategyKind::FixedBeta { beta: LINEAR_BETA };
    pub const CONCEDER: Self = BrokerStrategyKind::FixedBeta { beta: CONCEDER_BETA };

    /// The five rule-based strategies of the evaluation grid.
    pub fn standard_set() -> Vec<Self> {
        vec![
            Self::BOULWARE,
            Self::LINEAR,
            Self::CONCEDER,
            BrokerStrategyKind::GenerousTft,
            BrokerStrategyKind::TwoIndex,
        ]
    }

    pub fn key(&self) -> String {
        match *self {
            BrokerStrategyKind::FixedBeta { beta } if beta == BOULWARE_BETA => "boulware".into(),
            BrokerStrategyKind::FixedBeta { beta } if beta == LINEAR_BETA => "linear".into(),
            BrokerStrategyKind::FixedBeta { beta } if beta == CONCEDER_BETA => "conceder".into(),
            BrokerStrategyKind::FixedBeta { beta } => format!("fixed-{beta}"),
            BrokerStrategyKind::TwoIndex => "two-index".into(),
            BrokerStrategyKind::GenerousTft => "gtft".into(),
        }
    }

    pub fn is_fixed_beta(&self) -> bool {
        matches!(self, BrokerStrategyKind::FixedBeta { .. })
    }
}

impl fmt::Display for BrokerStrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for BrokerStrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        match key.as_str() {
            "boulware" => Ok(Self::BOULWARE),
            "linear" => Ok(Self::LINEAR),
            "conceder" => Ok(Self::CONCEDER),
            "gtft" | "generous-tft" => Ok(BrokerStrategyKind::GenerousTft),
            "two-index" | "two_index" => Ok(BrokerStrategyKind::TwoIndex),
            other => {
                let beta = other
                    .strip_prefix("fixed-")
                    .or_else(|| other.strip_prefix("fixed:"))
                    .and_then(|b| b.parse::<f64>().ok())
                    .filter(|b| *b > 0.0 && b.is_finite());
                match beta {
                    Some(beta) => Ok(BrokerStrategyKind::FixedBeta { beta }),
                    None => Err(Error::UnknownKey { what: "strategy", key: s.to_string() }),
                }
            }
        }
    }
}

impl Serialize for BrokerStrategyKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for BrokerStrategyKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let key = String::deserialize(deserializer)?;
        key.parse().map_err(serde::de::Error::custom)
    }
}

/// What a broker puts on the table in a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub offer: f64,
    /// Virtual curve position, two-index broker only.
    pub tau: Option<f64>,
    /// The offer is frozen at the pre-shift value because the target fell below it.
    pub held: bool,
}

/// Fixed-β time-dependent broker. A shift moves the range endpoint and
/// leaves β alone.
#[derive(Debug, Clone)]
pub struct FixedBetaBroker {
    curve: ConcessionCurve,
    r_max: f64,
}

impl FixedBetaBroker {
    pub fn new(beta: f64, load: &Load, rounds: u32) -> Result<Self> {
        let curve = ConcessionCurve::new(beta, load.r_min.value(), load.r_target.value(), rounds)?;
        Ok(FixedBetaBroker { curve, r_max: load.r_max.value() })
    }

    pub fn curve(&self) -> &ConcessionCurve {
        &self.curve
    }

    pub fn apply_shift(&mut self, new_target: f64) -> Result<()> {
        if new_target < self.curve.r_min {
            return Err(Error::TargetBelowFloor { target: new_target, floor: self.curve.r_min });
        }
        self.curve.r_target = new_target;
        Ok(())
    }

    pub fn propose(&mut self, round: u32) -> Proposal {
        let offer = faratin_offer(&self.curve, round).value().min(self.r_max);
        Proposal { offer, tau: None, held: false }
    }
}

/// A broker of any kind, as driven by the protocol loop.
#[derive(Debug, Clone)]
pub enum Broker {
    FixedBeta(FixedBetaBroker),
    TwoIndex(TwoIndexState),
    Gtft(GtftBroker),
}

impl Broker {
    /// `rng` feeds the generosity draws of tit-for-tat and is ignored otherwise.
    pub fn new(kind: BrokerStrategyKind, load: &Load, config: &ProtocolConfig, rng: ChaCha8Rng) -> Result<Self> {
        Ok(match kind {
            BrokerStrategyKind::FixedBeta { beta } => {
                Broker::FixedBeta(FixedBetaBroker::new(beta, load, config.max_rounds)?)
            }
            BrokerStrategyKind::TwoIndex => {
                Broker::TwoIndex(TwoIndexState::new(load, config.calibration_constant, config.max_rounds)?)
            }
            BrokerStrategyKind::GenerousTft => Broker::Gtft(GtftBroker::new(load, GtftParams::default(), rng)),
        })
    }

    pub fn current_target(&self) -> f64 {
        match self {
            Broker::FixedBeta(b) => b.curve.r_target,
            Broker::TwoIndex(s) => s.curve().r_target,
            Broker::Gtft(g) => g.ceiling(),
        }
    }

    pub fn r_min(&self) -> f64 {
        match self {
            Broker::FixedBeta(b) => b.curve.r_min,
            Broker::TwoIndex(s) => s.curve().r_min,
            Broker::Gtft(g) => g.r_min(),
        }
    }

    /// Current concession range `r_target - r_min`.
    pub fn current_range(&self) -> f64 {
        self.current_target() - self.r_min()
    }

    /// A pricing update that takes effect before the broker's offer this round.
    pub fn apply_shift(&mut self, round: u32, new_target: f64, c: f64) -> Result<Option<ShiftCase>> {
        match self {
            Broker::FixedBeta(b) => b.apply_shift(new_target).map(|_| None),
            Broker::TwoIndex(s) => s.apply_shift(round, new_target, c).map(Some),
            Broker::Gtft(g) => g.apply_shift(new_target).map(|_| None),
        }
    }

    /// `carrier_demands` holds the carrier's counters so far, oldest first.
    pub fn propose(&mut self, round: u32, carrier_demands: &[f64]) -> Proposal {
        match self {
            Broker::FixedBeta(b) => b.propose(round),
            Broker::TwoIndex(s) => s.next_offer(round),
            Broker::Gtft(g) => g.propose(round, carrier_demands),
        }
    }

    pub fn hold_count(&self) -> u32 {
        match self {
            Broker::TwoIndex(s) => s.hold_count(),
            Broker::Gtft(g) => g.hold_count(),
            Broker::FixedBeta(_) => 0,
        }
    }
}
