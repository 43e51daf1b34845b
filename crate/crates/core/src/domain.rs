//! Value types shared across the engine: rates, loads, spreads and protocol
//! settings.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A non-negative dollar amount.
///
/// Arithmetic stays in full floating precision; cents only appear when a
/// rate is written out, where it is rounded half-up to two decimals.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Rate(f64);

impl Rate {
    pub const ZERO: Rate = Rate(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Rate(value))
        } else {
            Err(Error::InvalidRate(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Whole cents, rounded half-up on the shortest decimal form of the value.
    pub fn cents(self) -> i128 {
        round_cents_half_up(self.0)
    }

    /// The two-decimal string used at every I/O boundary.
    pub fn to_decimal_string(self) -> String {
        let cents = self.cents();
        format!("{}.{:02}", cents / 100, cents % 100)
    }
}

fn round_cents_half_up(value: f64) -> i128 {
    // `Display` for f64 yields the shortest round-trip decimal without an
    // exponent, so rounding on its digits is rounding on the decimal value.
    let text = value.to_string();
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text.as_str(), ""),
    };
    let whole: i128 = int_part.parse().unwrap_or(0);
    let digits: Vec<u32> = frac_part.chars().filter_map(|c| c.to_digit(10)).collect();
    let digit = |i: usize| digits.get(i).copied().unwrap_or(0) as i128;
    let mut cents = whole * 100 + digit(0) * 10 + digit(1);
    if digit(2) >= 5 {
        cents += 1;
    }
    cents
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string())
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string())
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct RateVisitor;

        impl Visitor<'_> for RateVisitor {
            type Value = Rate;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative decimal rate as string or number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Rate, E> {
                let value: f64 = v.trim().parse().map_err(E::custom)?;
                Rate::new(value).map_err(E::custom)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Rate, E> {
                Rate::new(v).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Rate, E> {
                Rate::new(v as f64).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Rate, E> {
                Rate::new(v as f64).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(RateVisitor)
    }
}

/// A negotiable freight load and its price band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: String,
    pub origin: String,
    pub destination: String,
    pub r_min: Rate,
    pub r_max: Rate,
    pub r_target: Rate,
}

impl Load {
    pub fn new(
        id: impl Into<String>,
        origin: impl Into<String>,
        destination: impl Into<String>,
        r_min: f64,
        r_max: f64,
        r_target: f64,
    ) -> Result<Self> {
        let load = Load {
            id: id.into(),
            origin: origin.into(),
            destination: destination.into(),
            r_min: Rate::new(r_min)?,
            r_max: Rate::new(r_max)?,
            r_target: Rate::new(r_target)?,
        };
        load.validate()?;
        Ok(load)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi, target) = (self.r_min.0, self.r_max.0, self.r_target.0);
        if lo >= hi {
            return Err(Error::InvalidLoad(format!("r_min {lo} must be below r_max {hi}")));
        }
        if target < lo || target > hi {
            return Err(Error::InvalidLoad(format!("r_target {target} outside [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn band_width(&self) -> f64 {
        self.r_max.0 - self.r_min.0
    }

    /// Concession range `r_target - r_min`.
    pub fn range(&self) -> f64 {
        self.r_target.0 - self.r_min.0
    }

    /// Position of `rate` inside the band, 0 at `r_min` and 1 at `r_max`.
    pub fn band_fraction(&self, rate: f64) -> f64 {
        (rate - self.r_min.0) / self.band_width()
    }

    pub fn rate_at_fraction(&self, frac: f64) -> f64 {
        self.r_min.0 + frac * self.band_width()
    }

    pub fn spread(&self) -> Spread {
        Spread::of(self)
    }

    pub fn with_target(&self, r_target: f64) -> Result<Load> {
        let mut next = self.clone();
        next.r_target = Rate::new(r_target)?;
        next.validate()?;
        Ok(next)
    }
}

/// Creates a load whose band is `S` percent wide with the target at its midpoint.
pub fn make_synthetic_load(id: impl Into<String>, r_min: f64, spread_pct: f64) -> Result<Load> {
    if !(r_min > 0.0 && r_min.is_finite()) {
        return Err(Error::InvalidRate(r_min));
    }
    if !(spread_pct > 0.0 && spread_pct.is_finite()) {
        return Err(Error::NonPositiveSpread(spread_pct));
    }
    let r_max = r_min * (1.0 + spread_pct / 100.0);
    let r_target = (r_min + r_max) / 2.0;
    Load::new(id, "Origin", "Destination", r_min, r_max, r_target)
}

/// Both spread measures of a load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    /// `S`: full band width relative to the floor, in percent.
    pub full_spread_pct: f64,
    /// `s`: target-to-floor distance relative to the floor, as a fraction.
    pub target_spread_frac: f64,
}

impl Spread {
    pub fn of(load: &Load) -> Spread {
        let lo = load.r_min.value();
        Spread {
            full_spread_pct: 100.0 * (load.r_max.value() - lo) / lo,
            target_spread_frac: (load.r_target.value() - lo) / lo,
        }
    }

    pub fn regime(&self) -> Result<SpreadRegime> {
        classify_regime(self.full_spread_pct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpreadRegime {
    Narrow,
    Medium,
    Wide,
}

impl SpreadRegime {
    pub const ALL: [SpreadRegime; 3] = [SpreadRegime::Narrow, SpreadRegime::Medium, SpreadRegime::Wide];

    pub fn as_str(self) -> &'static str {
        match self {
            SpreadRegime::Narrow => "narrow",
            SpreadRegime::Medium => "medium",
            SpreadRegime::Wide => "wide",
        }
    }
}

impl fmt::Display for SpreadRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Narrow up to 4%, Medium up to 8%, Wide beyond. Upper bounds are inclusive.
pub fn classify_regime(spread_pct: f64) -> Result<SpreadRegime> {
    if !(spread_pct > 0.0) {
        return Err(Error::NonPositiveSpread(spread_pct));
    }
    Ok(if spread_pct <= 4.0 {
        SpreadRegime::Narrow
    } else if spread_pct <= 8.0 {
        SpreadRegime::Medium
    } else {
        SpreadRegime::Wide
    })
}

/// Round limit, retraction tolerance and the β calibration constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub max_rounds: u32,
    pub retraction_epsilon: f64,
    pub calibration_constant: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig { max_rounds: 10, retraction_epsilon: 0.005, calibration_constant: 3.0 }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds < 2 {
            return Err(Error::InvalidConfig(format!("max_rounds must be at least 2, got {}", self.max_rounds)));
        }
        if !(self.retraction_epsilon > 0.0) {
            return Err(Error::InvalidConfig("retraction_epsilon must be positive".into()));
        }
        if !(self.calibration_constant > 0.0) {
            return Err(Error::InvalidConfig("calibration_constant must be positive".into()));
        }
        Ok(())
    }
}

impl FromStr for SpreadRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "narrow" => Ok(SpreadRegime::Narrow),
            "medium" => Ok(SpreadRegime::Medium),
            "wide" => Ok(SpreadRegime::Wide),
            other => Err(Error::UnknownKey { what: "regime", key: other.to_string() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_boundaries() {
        assert_eq!(classify_regime(4.0).unwrap(), SpreadRegime::Narrow);
        assert_eq!(classify_regime(8.0).unwrap(), SpreadRegime::Medium);
        assert_eq!(classify_regime(8.0001).unwrap(), SpreadRegime::Wide);
        assert_eq!(classify_regime(4.0001).unwrap(), SpreadRegime::Medium);
        assert_eq!(classify_regime(0.5).unwrap(), SpreadRegime::Narrow);
        assert!(classify_regime(0.0).is_err());
        assert!(classify_regime(-2.0).is_err());
    }

    #[test]
    fn synthetic_load_figure_example() {
        let load = make_synthetic_load("L1", 1800.0, 100.0 / 3.0).unwrap();
        assert!((load.r_max.value() - 2400.0).abs() < 1e-9);
        assert!((load.r_target.value() - 2100.0).abs() < 1e-9);
    }

    #[test]
    fn synthetic_load_six_percent() {
        let load = make_synthetic_load("L2", 2000.0, 6.0).unwrap();
        assert_eq!(load.r_max.to_decimal_string(), "2120.00");
        assert_eq!(load.r_target.to_decimal_string(), "2060.00");
        let spread = load.spread();
        assert!((spread.full_spread_pct - 6.0).abs() < 1e-9);
        assert!((spread.target_spread_frac - 0.03).abs() < 1e-12);
    }

    #[test]
    fn synthetic_load_rejects_degenerate_spread() {
        assert!(matches!(make_synthetic_load("L", 1000.0, 0.0), Err(Error::NonPositiveSpread(_))));
        assert!(make_synthetic_load("L", 0.0, 5.0).is_err());
    }

    #[test]
    fn load_invariants_enforced() {
        assert!(Load::new("a", "x", "y", 2000.0, 1900.0, 1950.0).is_err());
        assert!(Load::new("a", "x", "y", 1800.0, 2400.0, 2500.0).is_err());
        assert!(Load::new("a", "x", "y", 1800.0, 2400.0, 1800.0).is_ok());
    }

    #[test]
    fn rate_rounds_half_up_to_cents() {
        assert_eq!(Rate::new(1006.005).unwrap().to_decimal_string(), "1006.01");
        assert_eq!(Rate::new(1006.004).unwrap().to_decimal_string(), "1006.00");
        assert_eq!(Rate::new(0.125).unwrap().to_decimal_string(), "0.13");
        assert_eq!(Rate::new(2100.0).unwrap().to_decimal_string(), "2100.00");
        assert_eq!(Rate::new(1939.2659).unwrap().to_decimal_string(), "1939.27");
        assert!(Rate::new(-0.01).is_err());
        assert!(Rate::new(f64::NAN).is_err());
    }

    #[test]
    fn load_json_uses_two_decimal_strings() {
        let load = Load::new("L7", "Atlanta, GA", "Dallas, TX", 1800.0, 2400.0, 2100.5).unwrap();
        let json = serde_json::to_value(&load).unwrap();
        assert_eq!(json["r_min"], "1800.00");
        assert_eq!(json["r_target"], "2100.50");
        assert_eq!(json["origin"], "Atlanta, GA");
        let back: Load = serde_json::from_value(json).unwrap();
        assert_eq!(back, load);
    }

    #[test]
    fn protocol_defaults() {
        let cfg = ProtocolConfig::default();
        assert_eq!(cfg.max_rounds, 10);
        assert_eq!(cfg.retraction_epsilon, 0.005);
        assert_eq!(cfg.calibration_constant, 3.0);
        assert!(cfg.validate().is_ok());
        assert!(ProtocolConfig { max_rounds: 1, ..cfg }.validate().is_err());
        assert!(ProtocolConfig { calibration_constant: 0.0, ..cfg }.validate().is_err());
    }
}
