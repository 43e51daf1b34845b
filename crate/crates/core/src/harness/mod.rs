//! Experiment orchestration.
//!
//! A grid run draws one load and one shift schedule per
//! `(S, load index, repetition)` unit, plays every strategy against every
//! carrier on that unit, and aggregates the results. All randomness comes
//! from [`StreamKey`](crate::seeding::StreamKey) streams, so output depends
//! only on the config, never on thread count or scheduling.

mod config;
mod output;
mod replay;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carrier::CarrierKind;
use crate::domain::{make_synthetic_load, Load, SpreadRegime};
use crate::error::{Error, Result};
use crate::metrics::{two_prop_z, welch_t, CellMetrics, NegotiationSummary, StatTest};
use crate::pricing::{gen_multi_shift_schedule, gen_shift_schedule, ScheduleKey, ShiftSchedule};
use crate::protocol::{run_negotiation, Transcript};
use crate::seeding::{Purpose, StreamKey};
use crate::strategy::BrokerStrategyKind;

pub use config::{CarrierOverride, ExperimentConfig, DESK_LOADS_PER_CELL, FULL_LOADS_PER_CELL, GRID_SPREADS};
pub use output::{
    emit_results, emit_sweep, read_results_csv, summarize_results_csv, ResultRow, StrategyTotals, TranscriptLine,
};
pub use replay::{replay_file, replay_line, ReplayReport};

const LANES: [&str; 12] = [
    "Atlanta, GA",
    "Dallas, TX",
    "Chicago, IL",
    "Memphis, TN",
    "Columbus, OH",
    "Phoenix, AZ",
    "Denver, CO",
    "Charlotte, NC",
    "Kansas City, MO",
    "Indianapolis, IN",
    "Savannah, GA",
    "Reno, NV",
];

/// One draw of the experimental environment, shared by every strategy and carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub spread_pct: f64,
    pub load_index: u64,
    pub repetition: u64,
    pub load: Load,
    pub schedule: ShiftSchedule,
}

/// The synthetic load for a unit: floor uniform in whole dollars, band `S`
/// percent wide, target at the midpoint.
pub fn generate_load(config: &ExperimentConfig, spread_pct: f64, load_index: u64, repetition: u64) -> Result<Load> {
    let mut rng = StreamKey {
        master_seed: config.master_seed,
        spread_pct,
        load_index,
        repetition,
        purpose: Purpose::LoadGen,
        lane: 0,
    }
    .rng();
    let (lo, hi) = config.r_min_range;
    let r_min = rng.random_range(lo.round() as i64..=hi.round() as i64) as f64;
    let origin = rng.random_range(0..LANES.len());
    let destination = (origin + rng.random_range(1..LANES.len())) % LANES.len();
    let mut load = make_synthetic_load(format!("S{spread_pct}-L{load_index:04}-R{repetition}"), r_min, spread_pct)?;
    load.origin = LANES[origin].to_string();
    load.destination = LANES[destination].to_string();
    Ok(load)
}

pub fn generate_schedule(config: &ExperimentConfig, key: ScheduleKey) -> Result<ShiftSchedule> {
    match config.shifts_per_negotiation {
        0 => Ok(ShiftSchedule::empty(key)),
        1 => Ok(gen_shift_schedule(key, config.master_seed)),
        n => gen_multi_shift_schedule(key, config.master_seed, n, 7),
    }
}

pub fn generate_unit(config: &ExperimentConfig, spread_pct: f64, load_index: u64, repetition: u64) -> Result<Unit> {
    let load = generate_load(config, spread_pct, load_index, repetition)?;
    let schedule = generate_schedule(config, ScheduleKey { spread_pct, load_index, repetition })?;
    Ok(Unit { spread_pct, load_index, repetition, load, schedule })
}

pub fn gtft_stream(config: &ExperimentConfig, unit: &Unit, carrier: CarrierKind) -> rand_chacha::ChaCha8Rng {
    StreamKey {
        master_seed: config.master_seed,
        spread_pct: unit.spread_pct,
        load_index: unit.load_index,
        repetition: unit.repetition,
        purpose: Purpose::Gtft,
        lane: carrier.index(),
    }
    .rng()
}

/// Plays one strategy against one carrier on a unit.
pub fn play(
    config: &ExperimentConfig,
    unit: &Unit,
    strategy: BrokerStrategyKind,
    carrier: CarrierKind,
) -> Result<Transcript> {
    run_negotiation(
        &unit.load,
        strategy,
        &config.carrier_params(carrier),
        &unit.schedule,
        &config.protocol,
        config.shift_basis,
        gtft_stream(config, unit, carrier),
    )
    .map_err(|e| Error::Cell {
        strategy: strategy.key(),
        carrier: carrier.key().to_string(),
        spread: unit.spread_pct,
        source: Box::new(e),
    })
}

/// A played negotiation with the coordinates that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Played {
    pub load_index: u64,
    pub repetition: u64,
    pub transcript: Transcript,
}

impl Played {
    pub fn summary(&self) -> NegotiationSummary {
        NegotiationSummary::from_transcript(&self.transcript, self.load_index, self.repetition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub strategy: BrokerStrategyKind,
    pub carrier: CarrierKind,
    pub spread_pct: f64,
    pub metrics: CellMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub strategy: BrokerStrategyKind,
    /// `"all"`, a regime name, a carrier key or a spread value.
    pub group: String,
    pub metrics: CellMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub strategy: BrokerStrategyKind,
    pub against: BrokerStrategyKind,
    pub metric: String,
    pub test: Option<StatTest>,
}

/// Aggregated metrics of a grid run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub calibration_constant: f64,
    pub negotiations: u64,
    pub cells: Vec<CellResult>,
    /// One row per strategy over the whole grid.
    pub strategies: Vec<GroupResult>,
    pub by_regime: Vec<GroupResult>,
    pub by_carrier: Vec<GroupResult>,
    pub by_spread: Vec<GroupResult>,
    /// Every strategy compared with the two-index broker, when both ran.
    pub pairwise: Vec<PairwiseComparison>,
}

impl GridResult {
    pub fn strategy(&self, strategy: BrokerStrategyKind) -> Option<&CellMetrics> {
        self.strategies.iter().find(|g| g.strategy == strategy).map(|g| &g.metrics)
    }

    pub fn regime(&self, strategy: BrokerStrategyKind, regime: SpreadRegime) -> Option<&CellMetrics> {
        self.by_regime.iter().find(|g| g.strategy == strategy && g.group == regime.as_str()).map(|g| &g.metrics)
    }

    pub fn carrier(&self, strategy: BrokerStrategyKind, carrier: CarrierKind) -> Option<&CellMetrics> {
        self.by_carrier.iter().find(|g| g.strategy == strategy && g.group == carrier.key()).map(|g| &g.metrics)
    }

    pub fn spread(&self, strategy: BrokerStrategyKind, spread_pct: f64) -> Option<&CellMetrics> {
        let key = spread_pct.to_string();
        self.by_spread.iter().find(|g| g.strategy == strategy && g.group == key).map(|g| &g.metrics)
    }

    pub fn cell(&self, strategy: BrokerStrategyKind, carrier: CarrierKind, spread_pct: f64) -> Option<&CellMetrics> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.carrier == carrier && c.spread_pct == spread_pct)
            .map(|c| &c.metrics)
    }
}

/// A grid run: every transcript plus the aggregates.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub config: ExperimentConfig,
    pub played: Vec<Played>,
    pub result: GridResult,
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// All units of the grid, in `(S, load, repetition)` order.
pub fn generate_units(config: &ExperimentConfig) -> Result<Vec<Unit>> {
    let mut units = Vec::new();
    for &spread in &config.spread_values {
        for load_index in 0..config.loads_per_cell {
            for repetition in 0..config.repetitions {
                units.push(generate_unit(config, spread, load_index, repetition)?);
            }
        }
    }
    Ok(units)
}

/// Runs every strategy against every carrier on every unit.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridRun> {
    config.validate()?;
    let units = generate_units(config)?;
    let played: Vec<Played> = with_pool(config.threads, || {
        units
            .par_iter()
            .map(|unit| {
                let mut out = Vec::with_capacity(config.strategies.len() * config.carriers.len());
                for &strategy in &config.strategies {
                    for &carrier in &config.carriers {
                        out.push(Played {
                            load_index: unit.load_index,
                            repetition: unit.repetition,
                            transcript: play(config, unit, strategy, carrier)?,
                        });
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<Vec<Played>>>>()
    })??
    .into_iter()
    .flatten()
    .collect();
    log::info!("grid finished: {} negotiations", played.len());
    let summaries: Vec<NegotiationSummary> = played.iter().map(Played::summary).collect();
    let result = aggregate(config, &summaries);
    Ok(GridRun { config: config.clone(), played, result })
}

/// Re-runs the two-index strategy once per calibration constant over the same
/// loads and schedules.
pub fn run_c_sweep(config: &ExperimentConfig) -> Result<Vec<(f64, GridRun)>> {
    let cs = config
        .c_values
        .clone()
        .filter(|cs| !cs.is_empty())
        .ok_or_else(|| Error::InvalidConfig("c sweep needs a non-empty c_values list".into()))?;
    cs.into_iter()
        .map(|c| {
            let mut cfg = config.clone();
            cfg.strategies = vec![BrokerStrategyKind::TwoIndex];
            cfg.protocol.calibration_constant = c;
            run_grid(&cfg).map(|run| (c, run))
        })
        .collect()
}

fn group_by<K: Ord>(
    items: &[NegotiationSummary],
    key: impl Fn(&NegotiationSummary) -> Option<K>,
) -> BTreeMap<K, Vec<&NegotiationSummary>> {
    let mut map: BTreeMap<K, Vec<&NegotiationSummary>> = BTreeMap::new();
    for s in items {
        if let Some(k) = key(s) {
            map.entry(k).or_default().push(s);
        }
    }
    map
}

/// Builds every aggregate of a grid from per-negotiation summaries.
pub fn aggregate(config: &ExperimentConfig, summaries: &[NegotiationSummary]) -> GridResult {
    let mut cells = Vec::new();
    let mut strategies = Vec::new();
    let mut by_regime = Vec::new();
    let mut by_carrier = Vec::new();
    let mut by_spread = Vec::new();

    for &strategy in &config.strategies {
        let own: Vec<NegotiationSummary> = summaries.iter().filter(|s| s.strategy == strategy).cloned().collect();
        for &carrier in &config.carriers {
            for &spread in &config.spread_values {
                let metrics = CellMetrics::compute(
                    own.iter().filter(|s| s.carrier_kind == Some(carrier) && s.spread_pct == spread),
                );
                cells.push(CellResult { strategy, carrier, spread_pct: spread, metrics });
            }
        }
        strategies.push(GroupResult { strategy, group: "all".into(), metrics: CellMetrics::compute(&own) });
        let regimes = group_by(&own, |s| crate::domain::classify_regime(s.spread_pct).ok());
        for (regime, items) in regimes {
            by_regime.push(GroupResult {
                strategy,
                group: regime.as_str().into(),
                metrics: CellMetrics::compute(items),
            });
        }
        for (carrier, items) in group_by(&own, |s| s.carrier_kind) {
            by_carrier.push(GroupResult {
                strategy,
                group: carrier.key().into(),
                metrics: CellMetrics::compute(items),
            });
        }
        for &spread in &config.spread_values {
            by_spread.push(GroupResult {
                strategy,
                group: spread.to_string(),
                metrics: CellMetrics::compute(own.iter().filter(|s| s.spread_pct == spread)),
            });
        }
    }

    let pairwise = pairwise_vs_two_index(config, summaries);
    GridResult {
        calibration_constant: config.protocol.calibration_constant,
        negotiations: summaries.len() as u64,
        cells,
        strategies,
        by_regime,
        by_carrier,
        by_spread,
        pairwise,
    }
}

fn pairwise_vs_two_index(config: &ExperimentConfig, summaries: &[NegotiationSummary]) -> Vec<PairwiseComparison> {
    let reference = BrokerStrategyKind::TwoIndex;
    if !config.strategies.contains(&reference) {
        return Vec::new();
    }
    let pick = |strategy: BrokerStrategyKind| -> Vec<&NegotiationSummary> {
        summaries.iter().filter(|s| s.strategy == strategy).collect()
    };
    let base = pick(reference);
    let savings = |v: &[&NegotiationSummary]| -> Vec<f64> { v.iter().filter_map(|s| s.savings).collect() };
    let rounds = |v: &[&NegotiationSummary]| -> Vec<f64> {
        v.iter().filter(|s| s.agreed()).map(|s| s.rounds_used as f64).collect()
    };
    let agreed = |v: &[&NegotiationSummary]| v.iter().filter(|s| s.agreed()).count() as u64;

    let mut out = Vec::new();
    for &strategy in config.strategies.iter().filter(|s| **s != reference) {
        let other = pick(strategy);
        out.push(PairwiseComparison {
            strategy,
            against: reference,
            metric: "agreement_rate".into(),
            test: two_prop_z(agreed(&other), other.len() as u64, agreed(&base), base.len() as u64).ok(),
        });
        out.push(PairwiseComparison {
            strategy,
            against: reference,
            metric: "mean_savings".into(),
            test: welch_t(&savings(&other), &savings(&base)).ok(),
        });
        out.push(PairwiseComparison {
            strategy,
            against: reference,
            metric: "mean_rounds".into(),
            test: welch_t(&rounds(&other), &rounds(&base)).ok(),
        });
    }
    out
}
