//! Outcome metrics, confidence intervals and significance tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::carrier::CarrierKind;
use crate::domain::Load;
use crate::error::{Error, Result};
use crate::protocol::{NegotiationStatus, Transcript};
use crate::strategy::BrokerStrategyKind;

/// Share of the band left on the table: `(r_max - agreed) / (r_max - r_min)`.
/// 1.0 means the broker paid its floor.
pub fn broker_savings(agreed: Option<f64>, load: &Load) -> Result<f64> {
    let agreed = agreed.ok_or(Error::NotAgreed)?;
    Ok((load.r_max.value() - agreed) / load.band_width())
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided critical value of the standard normal for a confidence `level`.
pub fn z_critical(level: f64) -> f64 {
    standard_normal().inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Wald interval half-width for a proportion.
pub fn wald_ci(p: f64, n: u64, level: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Statistics(format!("proportion {p} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::Statistics("sample size must be positive".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Statistics(format!("confidence level {level} outside (0, 1)")));
    }
    Ok(z_critical(level) * (p * (1.0 - p) / n as f64).sqrt())
}

/// Mean, unbiased sample variance.
pub fn mean_var(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    if sample.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = sample.iter().sum::<f64>() / n;
    if sample.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = sample.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Normal-approximation interval half-width for a sample mean.
pub fn mean_ci(sample: &[f64], level: f64) -> f64 {
    if sample.len() < 2 {
        return 0.0;
    }
    let (_, var) = mean_var(sample);
    z_critical(level) * (var / sample.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatTestKind {
    WelchT,
    TwoProportionZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTest {
    pub kind: StatTestKind,
    pub statistic: f64,
    pub p_value: f64,
    /// Welch–Satterthwaite degrees of freedom, Welch only.
    pub df: Option<f64>,
}

/// Two-sided Welch t-test of `a` against `b`.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<StatTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Statistics("Welch t needs at least two observations per sample".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let qa = va / a.len() as f64;
    let qb = vb / b.len() as f64;
    let se2 = qa + qb;
    if !(se2 > 0.0) {
        return Err(Error::Statistics("both samples have zero variance".into()));
    }
    let statistic = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (a.len() as f64 - 1.0) + qb * qb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Statistics(e.to_string()))?;
    let p_value = (2.0 * dist.sf(statistic.abs())).min(1.0);
    Ok(StatTest { kind: StatTestKind::WelchT, statistic, p_value, df: Some(df) })
}

/// Two-sided pooled two-proportion z-test of `k1/n1` against `k2/n2`.
pub fn two_prop_z(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<StatTest> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Statistics("proportion samples must be non-empty".into()));
    }
    if k1 > n1 || k2 > n2 {
        return Err(Error::Statistics("successes exceed sample size".into()));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let p1 = k1 as f64 / n1f;
    let p2 = k2 as f64 / n2f;
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 {
        return Ok(StatTest { kind: StatTestKind::TwoProportionZ, statistic: 0.0, p_value: 1.0, df: None });
    }
    let statistic = (p1 - p2) / se;
    let p_value = (2.0 * standard_normal().sf(statistic.abs())).min(1.0);
    Ok(StatTest { kind: StatTestKind::TwoProportionZ, statistic, p_value, df: None })
}

/// The per-negotiation facts every aggregate is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationSummary {
    pub strategy: BrokerStrategyKind,
    pub carrier: String,
    pub carrier_kind: Option<CarrierKind>,
    pub spread_pct: f64,
    pub load_index: u64,
    pub repetition: u64,
    pub status: NegotiationStatus,
    pub savings: Option<f64>,
    pub rounds_used: u32,
    pub retractions: u32,
    pub holds: u32,
    pub downward_shift: bool,
}

impl NegotiationSummary {
    pub fn from_transcript(t: &Transcript, load_index: u64, repetition: u64) -> Self {
        let agreed = t.outcome.agreed_rate.map(|r| r.value());
        NegotiationSummary {
            strategy: t.strategy,
            carrier: t.carrier.clone(),
            carrier_kind: t.carrier_kind(),
            spread_pct: t.schedule.key.spread_pct,
            load_index,
            repetition,
            status: t.outcome.status,
            savings: broker_savings(agreed, &t.load).ok(),
            rounds_used: t.outcome.rounds_used,
            retractions: t.outcome.retraction_count,
            holds: t.outcome.hold_count,
            downward_shift: t.had_downward_shift(),
        }
    }

    pub fn agreed(&self) -> bool {
        self.status == NegotiationStatus::Agreed
    }
}

/// A value with its 95% interval half-width and the sample it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_half_width: f64,
    pub n: u64,
}

impl Estimate {
    fn proportion(k: u64, n: u64) -> Estimate {
        if n == 0 {
            return Estimate { value: f64::NAN, ci_half_width: f64::NAN, n };
        }
        let p = k as f64 / n as f64;
        Estimate { value: p, ci_half_width: wald_ci(p, n, 0.95).unwrap_or(f64::NAN), n }
    }

    fn mean(sample: &[f64]) -> Estimate {
        let n = sample.len() as u64;
        if n == 0 {
            return Estimate { value: f64::NAN, ci_half_width: f64::NAN, n };
        }
        Estimate { value: mean_var(sample).0, ci_half_width: mean_ci(sample, 0.95), n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldStats {
    /// Share of negotiations with at least one held round.
    pub share: Estimate,
    /// Mean held rounds among those negotiations.
    pub mean_holds_affected: f64,
    /// Agreement rate among those negotiations.
    pub agreement_affected: f64,
    pub affected: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub n: u64,
    pub agreed: u64,
    pub agreement_rate: Estimate,
    /// Over agreed negotiations only.
    pub mean_savings: Estimate,
    /// Over agreed negotiations only.
    pub mean_rounds: Estimate,
    /// Retraction events per negotiation.
    pub retraction_rate: Estimate,
    pub hold_stats: HoldStats,
}

impl CellMetrics {
    pub fn compute<'a>(items: impl IntoIterator<Item = &'a NegotiationSummary>) -> CellMetrics {
        let items: Vec<&NegotiationSummary> = items.into_iter().collect();
        let n = items.len() as u64;
        let agreed: Vec<&&NegotiationSummary> = items.iter().filter(|s| s.agreed()).collect();
        let savings: Vec<f64> = agreed.iter().filter_map(|s| s.savings).collect();
        let rounds: Vec<f64> = agreed.iter().map(|s| s.rounds_used as f64).collect();
        let retractions: Vec<f64> = items.iter().map(|s| s.retractions as f64).collect();
        let affected: Vec<&&NegotiationSummary> = items.iter().filter(|s| s.holds > 0).collect();
        let affected_n = affected.len() as u64;
        let hold_stats = HoldStats {
            share: Estimate::proportion(affected_n, n),
            mean_holds_affected: if affected_n == 0 {
                0.0
            } else {
                affected.iter().map(|s| s.holds as f64).sum::<f64>() / affected_n as f64
            },
            agreement_affected: if affected_n == 0 {
                f64::NAN
            } else {
                affected.iter().filter(|s| s.agreed()).count() as f64 / affected_n as f64
            },
            affected: affected_n,
        };
        CellMetrics {
            n,
            agreed: agreed.len() as u64,
            agreement_rate: Estimate::proportion(agreed.len() as u64, n),
            mean_savings: Estimate::mean(&savings),
            mean_rounds: Estimate::mean(&rounds),
            retraction_rate: Estimate::mean(&retractions),
            hold_stats,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn savings_endpoints() {
        let load = Load::new("L", "a", "b", 1800.0, 2400.0, 2100.0).unwrap();
        assert_eq!(broker_savings(Some(1800.0), &load).unwrap(), 1.0);
        assert_eq!(broker_savings(Some(2400.0), &load).unwrap(), 0.0);
        assert!((broker_savings(Some(1950.0), &load).unwrap() - 0.75).abs() < 1e-12);
        assert!(matches!(broker_savings(None, &load), Err(Error::NotAgreed)));
    }

    #[test]
    fn wald_examples() {
        let hw = wald_ci(0.66, 21_000, 0.95).unwrap();
        assert!((0.0063..=0.0065).contains(&hw), "{hw}");
        assert_eq!(wald_ci(0.0, 50, 0.95).unwrap(), 0.0);
        assert!((wald_ci(0.5, 100, 0.95).unwrap() - 0.098).abs() < 5e-5);
        assert!(wald_ci(1.2, 10, 0.95).is_err());
        assert!(wald_ci(0.5, 0, 0.95).is_err());
    }

    #[test]
    fn welch_identical_samples() {
        let a = [0.61, 0.72, 0.69, 0.75, 0.58];
        let t = welch_t(&a, &a).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        assert!(welch_t(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn welch_small_difference_not_significant() {
        // Two samples whose means differ by 0.001 with a spread typical of savings.
        let a: Vec<f64> = (0..2000).map(|i| 0.690 + 0.15 * ((i as f64 * 0.7).sin())).collect();
        let b: Vec<f64> = (0..2000).map(|i| 0.691 + 0.15 * ((i as f64 * 1.3).cos())).collect();
        let t = welch_t(&a, &b).unwrap();
        assert!(t.p_value > 0.05, "{t:?}");
    }

    #[test]
    fn two_proportion_examples() {
        let eq = two_prop_z(30, 100, 60, 200).unwrap();
        assert_eq!(eq.statistic, 0.0);
        assert!((eq.p_value - 1.0).abs() < 1e-12);
        let z = two_prop_z(5117, 6750, 145, 225).unwrap();
        assert!((z.statistic - 3.9).abs() < 0.05, "{z:?}");
        assert!(z.p_value < 0.001);
        let degenerate = two_prop_z(0, 10, 0, 20).unwrap();
        assert_eq!(degenerate.p_value, 1.0);
        assert!(two_prop_z(1, 0, 1, 2).is_err());
    }
}
