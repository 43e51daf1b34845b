use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::carrier::{CarrierKind, CarrierParams};
use crate::domain::ProtocolConfig;
use crate::error::{Error, Result};
use crate::pricing::ShiftBasis;
use crate::strategy::BrokerStrategyKind;

/// The twelve spread values of the full evaluation grid, in percent.
pub const GRID_SPREADS: [f64; 12] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 15.0, 20.0];
pub const FULL_LOADS_PER_CELL: u64 = 350;
pub const DESK_LOADS_PER_CELL: u64 = 50;

/// Partial persona settings layered over the archetype defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierOverride {
    pub open_frac: Option<f64>,
    pub floor_frac: Option<f64>,
    pub curve_exponent: Option<f64>,
    pub walkaway_round: Option<u32>,
    pub walkaway_broker_frac: Option<f64>,
    pub anchor_drop_frac: Option<f64>,
    pub anchor_step_frac: Option<f64>,
}

impl CarrierOverride {
    pub fn apply(&self, mut p: CarrierParams) -> CarrierParams {
        if let Some(v) = self.open_frac {
            p.open_frac = v;
        }
        if let Some(v) = self.floor_frac {
            p.floor_frac = v;
        }
        if let Some(v) = self.curve_exponent {
            p.curve_exponent = v;
        }
        if let Some(v) = self.walkaway_round {
            p.walkaway_round = Some(v);
        }
        if let Some(v) = self.walkaway_broker_frac {
            p.walkaway_broker_frac = Some(v);
        }
        if let Some(v) = self.anchor_drop_frac {
            p.anchor_drop_frac = v;
        }
        if let Some(v) = self.anchor_step_frac {
            p.anchor_step_frac = v;
        }
        p
    }
}

/// Everything a grid run depends on. Loaded from TOML; see the README for
/// an annotated example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategies: Vec<BrokerStrategyKind>,
    pub carriers: Vec<CarrierKind>,
    pub spread_values: Vec<f64>,
    pub loads_per_cell: u64,
    pub repetitions: u64,
    pub master_seed: u64,
    /// Calibration constants for the sensitivity sweep.
    pub c_values: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    pub protocol: ProtocolConfig,
    pub shift_basis: ShiftBasis,
    /// Shifts per negotiation; the evaluation grid uses exactly one.
    pub shifts_per_negotiation: usize,
    /// Synthetic floors are drawn uniformly from this range, whole dollars.
    pub r_min_range: (f64, f64),
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub carrier_overrides: BTreeMap<CarrierKind, CarrierOverride>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategies: BrokerStrategyKind::standard_set(),
            carriers: CarrierKind::ALL.to_vec(),
            spread_values: GRID_SPREADS.to_vec(),
            loads_per_cell: DESK_LOADS_PER_CELL,
            repetitions: 1,
            master_seed: 20_240_917,
            c_values: None,
            output_dir: PathBuf::from("results"),
            protocol: ProtocolConfig::default(),
            shift_basis: ShiftBasis::Range,
            shifts_per_negotiation: 1,
            r_min_range: (1000.0, 3000.0),
            threads: 0,
            carrier_overrides: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    /// Full-scale grid: 350 loads per cell, 105,000 negotiations.
    pub fn full_scale() -> Self {
        ExperimentConfig { loads_per_cell: FULL_LOADS_PER_CELL, ..Default::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn carrier_params(&self, kind: CarrierKind) -> CarrierParams {
        let base = CarrierParams::for_kind(kind);
        match self.carrier_overrides.get(&kind) {
            Some(o) => o.apply(base),
            None => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if let Some(bad) = self.spread_values.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::NonPositiveSpread(*bad));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        let (lo, hi) = self.r_min_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidConfig(format!("r_min_range ({lo}, {hi}) is invalid")));
        }
        if self.shifts_per_negotiation > 6 {
            return Err(Error::InvalidConfig("at most 6 shifts fit in rounds 2..=7".into()));
        }
        if let Some(cs) = &self.c_values {
            if let Some(bad) = cs.iter().find(|c| !(**c > 0.0)) {
                return Err(Error::InvalidConfig(format!("calibration constant {bad} must be positive")));
            }
        }
        for kind in &self.carriers {
            self.carrier_params(*kind).validate()?;
        }
        Ok(())
    }

    pub fn negotiation_count(&self) -> u64 {
        (self.strategies.len() * self.carriers.len() * self.spread_values.len()) as u64
            * self.loads_per_cell
            * self.repetitions
    }
}
