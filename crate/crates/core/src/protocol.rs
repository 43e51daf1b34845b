//! The alternating-offers loop.
//!
//! Each round: apply a scheduled shift to the broker's view, let the broker
//! compute its counter, accept a standing carrier offer if it scores at
//! least as well as that counter, otherwise send the counter and let the
//! carrier answer. The loop ends on acceptance, walk-away or the deadline.

use serde::{Deserialize, Serialize};

use crate::carrier::{carrier_respond, CarrierKind, CarrierParams, CarrierResponse, CarrierState};
use crate::domain::{Load, ProtocolConfig, Rate};
use crate::error::{Error, Result};
use crate::pricing::{apply_shift, ShiftBasis, ShiftEvent, ShiftSchedule};
use crate::strategy::{accepts_carrier_offer, Broker, BrokerStrategyKind};
use rand_chacha::ChaCha8Rng;

/// The carrier side of a negotiation.
pub trait Counterparty {
    fn label(&self) -> String;

    /// Answer the broker's offer for `round`.
    fn respond(&mut self, round: u32, broker_offer: f64) -> Result<CarrierResponse>;
}

/// A scripted archetype bound to one load.
#[derive(Debug, Clone)]
pub struct ScriptedCarrier {
    params: CarrierParams,
    state: CarrierState,
    load: Load,
    rounds: u32,
}

impl ScriptedCarrier {
    pub fn new(params: CarrierParams, load: &Load, rounds: u32) -> Self {
        ScriptedCarrier { state: CarrierState::new(&params, load), params, load: load.clone(), rounds }
    }

    pub fn params(&self) -> &CarrierParams {
        &self.params
    }
}

impl Counterparty for ScriptedCarrier {
    fn label(&self) -> String {
        self.params.kind.key().to_string()
    }

    fn respond(&mut self, _round: u32, broker_offer: f64) -> Result<CarrierResponse> {
        Ok(carrier_respond(&self.params, &mut self.state, &self.load, self.rounds, broker_offer))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrokerAction {
    /// The broker sent its computed counter.
    Counter,
    /// The broker took the carrier's standing offer instead of countering.
    AcceptCarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CarrierReply {
    Accept,
    Counter { rate: Rate },
    WalkAway,
}

impl From<CarrierResponse> for CarrierReply {
    fn from(r: CarrierResponse) -> Self {
        match r {
            CarrierResponse::Accept => CarrierReply::Accept,
            CarrierResponse::Counter(rate) => {
                CarrierReply::Counter { rate: Rate::new(rate).expect("carrier demands are non-negative") }
            }
            CarrierResponse::WalkAway => CarrierReply::WalkAway,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u32,
    /// The counter sent, or the carrier rate accepted when `broker_action` is `AcceptCarrier`.
    pub broker_offer: Rate,
    pub broker_action: BrokerAction,
    /// Absent when the broker closed the round by accepting.
    pub carrier_response: Option<CarrierReply>,
    pub shift_applied: Option<ShiftEvent>,
    /// Broker's target in force for this round.
    pub r_target: Rate,
    pub case1_hold: bool,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegotiationStatus {
    Agreed,
    WalkedAway,
    DeadlineExpired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: NegotiationStatus,
    pub agreed_rate: Option<Rate>,
    pub rounds_used: u32,
    pub retraction_count: u32,
    pub hold_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub load: Load,
    pub strategy: BrokerStrategyKind,
    pub carrier: String,
    pub carrier_params: Option<CarrierParams>,
    pub calibration_constant: f64,
    pub schedule: ShiftSchedule,
    pub rounds: Vec<RoundRecord>,
    pub outcome: Outcome,
}

impl Transcript {
    /// Offers the broker actually sent, in round order.
    pub fn counter_offers(&self) -> Vec<f64> {
        self.rounds
            .iter()
            .filter(|r| r.broker_action == BrokerAction::Counter)
            .map(|r| r.broker_offer.value())
            .collect()
    }

    pub fn carrier_kind(&self) -> Option<CarrierKind> {
        self.carrier_params.map(|p| p.kind)
    }

    pub fn hold_affected(&self) -> bool {
        self.outcome.hold_count > 0
    }

    pub fn had_downward_shift(&self) -> bool {
        self.rounds.iter().any(|r| r.shift_applied.is_some_and(|e| e.is_downward()))
    }
}

/// Rounds where the sent offer fell more than `epsilon` below the previous one.
pub fn count_retractions(offers: &[f64], epsilon: f64) -> u32 {
    offers.windows(2).filter(|w| w[1] < w[0] - epsilon).count() as u32
}

pub fn detect_retractions(transcript: &Transcript, epsilon: f64) -> Result<u32> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig("retraction epsilon must be positive".into()));
    }
    Ok(count_retractions(&transcript.counter_offers(), epsilon))
}

/// Runs one negotiation of `broker` against `counterparty`.
///
/// `strategy` and `carrier_params` are only recorded; the behaviour comes
/// from the two agents passed in.
#[allow(clippy::too_many_arguments)]
pub fn negotiate(
    load: &Load,
    strategy: BrokerStrategyKind,
    mut broker: Broker,
    counterparty: &mut dyn Counterparty,
    carrier_params: Option<CarrierParams>,
    schedule: &ShiftSchedule,
    config: &ProtocolConfig,
    basis: ShiftBasis,
) -> Result<Transcript> {
    config.validate()?;
    load.validate()?;
    schedule.validate()?;

    let mut view = load.clone();
    let mut rounds = Vec::with_capacity(config.max_rounds as usize);
    let mut demands: Vec<f64> = Vec::new();
    let mut standing: Option<f64> = None;
    let mut terminal: Option<(NegotiationStatus, Option<f64>, u32)> = None;

    for t in 1..=config.max_rounds {
        let shift = schedule.event_at(t).copied();
        if let Some(event) = shift {
            view = apply_shift(&view, &event, basis);
            broker.apply_shift(t, view.r_target.value(), config.calibration_constant)?;
        }
        let proposal = broker.propose(t, &demands);
        let target = broker.current_target();
        let record = |offer: f64, action, reply| RoundRecord {
            t,
            broker_offer: Rate::new(offer).expect("offers are non-negative"),
            broker_action: action,
            carrier_response: reply,
            shift_applied: shift,
            r_target: Rate::new(target).expect("targets are non-negative"),
            case1_hold: proposal.held,
            tau: proposal.tau,
        };

        if let Some(carrier_offer) = standing {
            if accepts_carrier_offer(carrier_offer, proposal.offer, target, broker.current_range()) {
                rounds.push(record(carrier_offer, BrokerAction::AcceptCarrier, None));
                terminal = Some((NegotiationStatus::Agreed, Some(carrier_offer), t));
                break;
            }
        }

        let response = counterparty.respond(t, proposal.offer)?;
        let response = match response {
            CarrierResponse::Counter(d) => CarrierResponse::Counter(d.clamp(load.r_min.value(), load.r_max.value())),
            other => other,
        };
        rounds.push(record(proposal.offer, BrokerAction::Counter, Some(response.into())));
        match response {
            CarrierResponse::Accept => {
                terminal = Some((NegotiationStatus::Agreed, Some(proposal.offer), t));
                break;
            }
            CarrierResponse::WalkAway => {
                terminal = Some((NegotiationStatus::WalkedAway, None, t));
                break;
            }
            CarrierResponse::Counter(d) => {
                standing = Some(d);
                demands.push(d);
            }
        }
    }

    let (status, agreed, rounds_used) =
        terminal.unwrap_or((NegotiationStatus::DeadlineExpired, None, config.max_rounds));
    let offers: Vec<f64> =
        rounds.iter().filter(|r| r.broker_action == BrokerAction::Counter).map(|r| r.broker_offer.value()).collect();
    let outcome = Outcome {
        status,
        agreed_rate: agreed.map(|a| Rate::new(a).expect("agreed rates are non-negative")),
        rounds_used,
        retraction_count: count_retractions(&offers, config.retraction_epsilon),
        hold_count: broker.hold_count(),
    };
    Ok(Transcript {
        load: load.clone(),
        strategy,
        carrier: counterparty.label(),
        carrier_params,
        calibration_constant: config.calibration_constant,
        schedule: schedule.clone(),
        rounds,
        outcome,
    })
}

/// Runs a broker strategy against a scripted carrier archetype.
///
/// `gtft_rng` drives tit-for-tat generosity and is unused by other strategies.
pub fn run_negotiation(
    load: &Load,
    strategy: BrokerStrategyKind,
    carrier: &CarrierParams,
    schedule: &ShiftSchedule,
    config: &ProtocolConfig,
    basis: ShiftBasis,
    gtft_rng: ChaCha8Rng,
) -> Result<Transcript> {
    carrier.validate()?;
    let broker = Broker::new(strategy, load, config, gtft_rng)?;
    let mut counterparty = ScriptedCarrier::new(*carrier, load, config.max_rounds);
    negotiate(load, strategy, broker, &mut counterparty, Some(*carrier), schedule, config, basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::ScheduleKey;
    use rand::SeedableRng;

    fn load() -> Load {
        Load::new("L1", "a", "b", 1800.0, 2400.0, 2100.0).unwrap()
    }

    fn key() -> ScheduleKey {
        ScheduleKey { spread_pct: 33.3, load_index: 0, repetition: 0 }
    }

    /// S = 2%: β = 3 for the two-index broker.
    fn narrow() -> Load {
        crate::domain::make_synthetic_load("N1", 2000.0, 2.0).unwrap()
    }

    fn run(strategy: BrokerStrategyKind, carrier: CarrierParams, schedule: &ShiftSchedule) -> Transcript {
        run_on(&load(), strategy, carrier, schedule)
    }

    fn run_on(
        load: &Load,
        strategy: BrokerStrategyKind,
        carrier: CarrierParams,
        schedule: &ShiftSchedule,
    ) -> Transcript {
        run_negotiation(
            load,
            strategy,
            &carrier,
            schedule,
            &ProtocolConfig::default(),
            ShiftBasis::Range,
            ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap()
    }

    /// Never concedes and never accepts.
    struct Wall;

    impl Counterparty for Wall {
        fn label(&self) -> String {
            "wall".into()
        }
        fn respond(&mut self, _round: u32, _offer: f64) -> Result<CarrierResponse> {
            Ok(CarrierResponse::Counter(2400.0))
        }
    }

    #[test]
    fn retraction_counting() {
        assert_eq!(count_retractions(&[1900.0, 1950.0, 1949.997], 0.005), 0);
        assert_eq!(count_retractions(&[1900.0, 1950.0, 1940.0], 0.005), 1);
        assert_eq!(count_retractions(&[1900.0, 1890.0, 1950.0, 1940.0], 0.005), 2);
        assert_eq!(count_retractions(&[], 0.005), 0);
    }

    #[test]
    fn deadline_against_a_wall() {
        let load = load();
        let config = ProtocolConfig::default();
        let broker = Broker::new(BrokerStrategyKind::LINEAR, &load, &config, ChaCha8Rng::seed_from_u64(0)).unwrap();
        let t = negotiate(
            &load,
            BrokerStrategyKind::LINEAR,
            broker,
            &mut Wall,
            None,
            &ShiftSchedule::empty(key()),
            &config,
            ShiftBasis::Range,
        )
        .unwrap();
        assert_eq!(t.outcome.status, NegotiationStatus::DeadlineExpired);
        assert_eq!(t.outcome.rounds_used, 10);
        assert_eq!(t.rounds.len(), 10);
        assert!(t.outcome.agreed_rate.is_none());
    }

    #[test]
    fn two_index_closes_round_one_against_cooperative() {
        let t = run_on(
            &narrow(),
            BrokerStrategyKind::TwoIndex,
            CarrierParams::for_kind(CarrierKind::Cooperative),
            &ShiftSchedule::empty(key()),
        );
        assert_eq!(t.outcome.status, NegotiationStatus::Agreed);
        assert_eq!(t.outcome.rounds_used, 1);
    }

    #[test]
    fn boulware_never_agrees_with_hardliner() {
        for i in 0..200 {
            let k = ScheduleKey { load_index: i, ..key() };
            let schedule = crate::pricing::gen_shift_schedule(k, 99);
            let t = run(BrokerStrategyKind::BOULWARE, CarrierParams::for_kind(CarrierKind::Hardliner), &schedule);
            assert_ne!(t.outcome.status, NegotiationStatus::Agreed);
        }
    }

    #[test]
    fn fixed_beta_retracts_after_downward_shift() {
        let schedule = ShiftSchedule::new(key(), vec![ShiftEvent::new(6, 0.6).unwrap()]).unwrap();
        let t = run(BrokerStrategyKind::CONCEDER, CarrierParams::for_kind(CarrierKind::Hardliner), &schedule);
        assert_eq!(t.outcome.retraction_count, 1);
        assert_eq!(detect_retractions(&t, 0.005).unwrap(), 1);
        let offers = t.counter_offers();
        assert!(offers[5] < offers[4]);
    }

    #[test]
    fn two_index_holds_instead_of_retracting() {
        let schedule = ShiftSchedule::new(key(), vec![ShiftEvent::new(6, 0.6).unwrap()]).unwrap();
        let t =
            run_on(&narrow(), BrokerStrategyKind::TwoIndex, CarrierParams::for_kind(CarrierKind::Hardliner), &schedule);
        assert_eq!(t.outcome.retraction_count, 0);
        assert!(t.outcome.hold_count > 0);
        assert!(t.rounds[5].case1_hold);
        assert_eq!(t.rounds[5].shift_applied.unwrap().round, 6);
    }

    #[test]
    fn broker_accepts_standing_offer_that_beats_its_counter() {
        // TFT carrier vs linear broker converges through the standing offer or a carrier accept.
        let t = run(
            BrokerStrategyKind::CONCEDER,
            CarrierParams::for_kind(CarrierKind::TitForTat),
            &ShiftSchedule::empty(key()),
        );
        assert_eq!(t.outcome.status, NegotiationStatus::Agreed);
        let rate = t.outcome.agreed_rate.unwrap().value();
        assert!((1800.0..=2400.0).contains(&rate));
    }

    #[test]
    fn shift_only_on_scheduled_round() {
        let schedule = ShiftSchedule::new(key(), vec![ShiftEvent::new(4, 1.2).unwrap()]).unwrap();
        let t = run(BrokerStrategyKind::LINEAR, CarrierParams::for_kind(CarrierKind::Anchoring), &schedule);
        for r in &t.rounds {
            assert_eq!(r.shift_applied.is_some(), r.t == 4);
        }
    }

    #[test]
    fn invalid_epsilon_rejected() {
        let t = run(
            BrokerStrategyKind::LINEAR,
            CarrierParams::for_kind(CarrierKind::Cooperative),
            &ShiftSchedule::empty(key()),
        );
        assert!(detect_retractions(&t, 0.0).is_err());
    }
}
