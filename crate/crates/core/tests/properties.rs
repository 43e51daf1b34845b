use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use anchorneg::carrier::{CarrierKind, CarrierParams};
use anchorneg::domain::{Load, ProtocolConfig, Rate};
use anchorneg::llm::{dollar_amounts, format_dollars};
use anchorneg::metrics::wald_ci;
use anchorneg::pricing::{apply_shift, ScheduleKey, ShiftBasis, ShiftEvent, ShiftSchedule};
use anchorneg::protocol::{count_retractions, run_negotiation, NegotiationStatus};
use anchorneg::strategy::{anchor_index, BrokerStrategyKind, ConcessionCurve, TwoIndexState};

fn load_strategy() -> impl Strategy<Value = Load> {
    (100u32..8000, 0.3f64..40.0, 0.01f64..=1.0).prop_map(|(r_min, spread_pct, pos)| {
        let r_min = r_min as f64;
        let r_max = r_min * (1.0 + spread_pct / 100.0);
        Load::new("P", "A", "B", r_min, r_max, r_min + pos * (r_max - r_min)).unwrap()
    })
}

fn shifts_strategy() -> impl Strategy<Value = Vec<ShiftEvent>> {
    proptest::collection::btree_map(2u32..=10, (0.05f64..=0.40, any::<bool>()), 1..=5).prop_map(|m| {
        m.into_iter()
            .map(|(round, (mag, up))| ShiftEvent::new(round, if up { 1.0 + mag } else { 1.0 - mag }).unwrap())
            .collect()
    })
}

fn basis_strategy() -> impl Strategy<Value = ShiftBasis> {
    prop_oneof![Just(ShiftBasis::Range), Just(ShiftBasis::Rate)]
}

fn carrier_strategy() -> impl Strategy<Value = CarrierKind> {
    prop_oneof![
        Just(CarrierKind::Cooperative),
        Just(CarrierKind::Hardliner),
        Just(CarrierKind::TitForTat),
        Just(CarrierKind::DeadlineExploiter),
        Just(CarrierKind::Anchoring),
    ]
}

fn strategy_kind() -> impl Strategy<Value = BrokerStrategyKind> {
    prop_oneof![
        Just(BrokerStrategyKind::BOULWARE),
        Just(BrokerStrategyKind::LINEAR),
        Just(BrokerStrategyKind::CONCEDER),
        Just(BrokerStrategyKind::GenerousTft),
        Just(BrokerStrategyKind::TwoIndex),
    ]
}

proptest! {
    #[test]
    fn two_index_offers_never_fall(load in load_strategy(), shifts in shifts_strategy(), basis in basis_strategy(), c in 0.5f64..8.0) {
        let mut state = TwoIndexState::new(&load, c, 10).unwrap();
        let mut view = load.clone();
        let mut prev = f64::NEG_INFINITY;
        for t in 1..=10 {
            if let Some(e) = shifts.iter().find(|e| e.round == t) {
                view = apply_shift(&view, e, basis);
                state.apply_shift(t, view.r_target.value(), c).unwrap();
            }
            let p = state.next_offer(t);
            prop_assert!(p.offer >= prev);
            prop_assert!(p.offer >= load.r_min.value() && p.offer <= load.r_max.value());
            if !p.held {
                prop_assert!(p.offer <= view.r_target.value());
            }
            prev = p.offer;
        }
    }

    #[test]
    fn anchor_is_smallest_position_not_below(beta in 0.05f64..15.0, r_min in 100.0f64..5000.0, width in 1.0f64..2000.0, pos in 0.0f64..=1.0) {
        let curve = ConcessionCurve::new(beta, r_min, r_min + width, 10).unwrap();
        let last = r_min + pos * width;
        let tau = anchor_index(&curve, last);
        prop_assert!((1..=10).contains(&tau));
        prop_assert!(curve.value_at(tau as f64) >= last || tau == 10);
        if tau > 1 {
            prop_assert!(curve.value_at((tau - 1) as f64) < last);
        }
    }

    #[test]
    fn negotiation_outcomes_stay_in_band(
        load in load_strategy(),
        shifts in shifts_strategy(),
        kind in strategy_kind(),
        carrier in carrier_strategy(),
        seed in any::<u64>(),
    ) {
        let schedule = ShiftSchedule::new(ScheduleKey { spread_pct: 1.0, load_index: 0, repetition: 0 }, shifts).unwrap();
        let config = ProtocolConfig::default();
        let t = run_negotiation(
            &load, kind, &CarrierParams::for_kind(carrier), &schedule, &config, ShiftBasis::Range,
            ChaCha8Rng::seed_from_u64(seed),
        ).unwrap();
        prop_assert!(t.outcome.rounds_used >= 1 && t.outcome.rounds_used <= config.max_rounds);
        prop_assert_eq!(t.rounds.len() as u32, t.outcome.rounds_used);
        match t.outcome.status {
            NegotiationStatus::Agreed => {
                let r = t.outcome.agreed_rate.unwrap().value();
                prop_assert!(r >= load.r_min.value() && r <= load.r_max.value());
            }
            _ => prop_assert!(t.outcome.agreed_rate.is_none()),
        }
        if kind == BrokerStrategyKind::TwoIndex || kind == BrokerStrategyKind::GenerousTft {
            prop_assert_eq!(t.outcome.retraction_count, 0);
        }
    }

    #[test]
    fn schedules_round_trip(shifts in shifts_strategy(), s in 1.0f64..20.0, i in 0u64..1000) {
        let schedule = ShiftSchedule::new(ScheduleKey { spread_pct: s, load_index: i, repetition: 0 }, shifts).unwrap();
        let back = ShiftSchedule::from_json(&schedule.to_json()).unwrap();
        prop_assert_eq!(back.fingerprint(), schedule.fingerprint());
        prop_assert_eq!(back, schedule);
    }

    #[test]
    fn dollar_text_round_trips(cents in 0u64..100_000_000) {
        let rate = Rate::new(cents as f64 / 100.0).unwrap();
        let text = format!("I can do ${} today.", format_dollars(rate));
        let parsed = dollar_amounts(&text);
        prop_assert_eq!(parsed.len(), 1);
        prop_assert_eq!(Rate::new(parsed[0]).unwrap().cents(), cents as i128);
    }

    #[test]
    fn sorted_offers_have_no_retractions(mut offers in proptest::collection::vec(0.0f64..1e5, 0..20)) {
        offers.sort_by(f64::total_cmp);
        prop_assert_eq!(count_retractions(&offers, 0.005), 0);
    }

    #[test]
    fn wald_is_symmetric(p in 0.0f64..=1.0, n in 1u64..100_000) {
        let a = wald_ci(p, n, 0.95).unwrap();
        let b = wald_ci(1.0 - p, n, 0.95).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-12);
    }
}
