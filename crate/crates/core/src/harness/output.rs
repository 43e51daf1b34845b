//! Result files: `results.csv`, `summary.json`, `transcripts.jsonl` and
//! `offer_curves.csv`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, GridResult, GridRun, PairwiseComparison};
use crate::domain::ProtocolConfig;
use crate::error::Result;
use crate::metrics::{wald_ci, z_critical, CellMetrics, Estimate};
use crate::pricing::ShiftBasis;
use crate::protocol::{BrokerAction, CarrierReply, Transcript};
use crate::strategy::BrokerStrategyKind;

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TRANSCRIPTS_JSONL: &str = "transcripts.jsonl";
pub const OFFER_CURVES_CSV: &str = "offer_curves.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";

/// One metric of one `(strategy, carrier, S)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: String,
    pub carrier: String,
    pub spread_pct: f64,
    pub metric: String,
    pub value: f64,
    pub ci_half_width: Option<f64>,
    pub n: u64,
}

fn cell_rows(strategy: &str, carrier: &str, spread_pct: f64, m: &CellMetrics) -> Vec<ResultRow> {
    let row = |metric: &str, e: &Estimate| ResultRow {
        strategy: strategy.to_string(),
        carrier: carrier.to_string(),
        spread_pct,
        metric: metric.to_string(),
        value: e.value,
        ci_half_width: Some(e.ci_half_width),
        n: e.n,
    };
    vec![
        row("agreement_rate", &m.agreement_rate),
        row("mean_savings", &m.mean_savings),
        row("mean_rounds", &m.mean_rounds),
        row("retraction_rate", &m.retraction_rate),
        row("hold_share", &m.hold_stats.share),
        ResultRow {
            strategy: strategy.to_string(),
            carrier: carrier.to_string(),
            spread_pct,
            metric: "mean_holds_affected".into(),
            value: m.hold_stats.mean_holds_affected,
            ci_half_width: None,
            n: m.hold_stats.affected,
        },
    ]
}

/// A transcript with everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub master_seed: u64,
    pub spread_pct: f64,
    pub load_index: u64,
    pub repetition: u64,
    pub shift_basis: ShiftBasis,
    pub shifts_per_negotiation: usize,
    pub r_min_range: (f64, f64),
    pub protocol: ProtocolConfig,
    pub schedule_fingerprint: String,
    pub transcript: Transcript,
}

impl TranscriptLine {
    pub fn new(config: &ExperimentConfig, load_index: u64, repetition: u64, transcript: &Transcript) -> Self {
        TranscriptLine {
            master_seed: config.master_seed,
            spread_pct: transcript.schedule.key.spread_pct,
            load_index,
            repetition,
            shift_basis: config.shift_basis,
            shifts_per_negotiation: config.shifts_per_negotiation,
            r_min_range: config.r_min_range,
            protocol: config.protocol,
            schedule_fingerprint: transcript.schedule.fingerprint(),
            transcript: transcript.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transcript lines serialize")
    }
}

#[derive(Debug, Serialize)]
struct OfferCurveRow<'a> {
    strategy: &'a str,
    carrier: &'a str,
    spread_pct: f64,
    load_index: u64,
    repetition: u64,
    t: u32,
    broker_offer: f64,
    broker_action: &'static str,
    carrier_demand: Option<f64>,
    carrier_response: &'static str,
    r_target: f64,
    shift: bool,
    shift_multiplier: Option<f64>,
    case1_hold: bool,
    retraction: bool,
}

fn write_offer_curve<W: Write>(
    w: &mut csv::Writer<W>,
    strategy: &str,
    load_index: u64,
    repetition: u64,
    t: &Transcript,
    epsilon: f64,
) -> Result<()> {
    let mut previous: Option<f64> = None;
    for r in &t.rounds {
        let offer = r.broker_offer.value();
        let counter = r.broker_action == BrokerAction::Counter;
        let (demand, response) = match r.carrier_response {
            Some(CarrierReply::Counter { rate }) => (Some(rate.value()), "counter"),
            Some(CarrierReply::Accept) => (None, "accept"),
            Some(CarrierReply::WalkAway) => (None, "walk_away"),
            None => (None, ""),
        };
        let retraction = counter && previous.is_some_and(|p| offer < p - epsilon);
        if counter {
            previous = Some(offer);
        }
        w.serialize(OfferCurveRow {
            strategy,
            carrier: &t.carrier,
            spread_pct: t.schedule.key.spread_pct,
            load_index,
            repetition,
            t: r.t,
            broker_offer: offer,
            broker_action: if counter { "counter" } else { "accept_carrier" },
            carrier_demand: demand,
            carrier_response: response,
            r_target: r.r_target.value(),
            shift: r.shift_applied.is_some(),
            shift_multiplier: r.shift_applied.map(|e| e.multiplier),
            case1_hold: r.case1_hold,
            retraction,
        })?;
    }
    Ok(())
}

const OFFER_CURVE_HEADER: [&str; 15] = [
    "strategy",
    "carrier",
    "spread_pct",
    "load_index",
    "repetition",
    "t",
    "broker_offer",
    "broker_action",
    "carrier_demand",
    "carrier_response",
    "r_target",
    "shift",
    "shift_multiplier",
    "case1_hold",
    "retraction",
];

const RESULTS_HEADER: [&str; 7] = ["strategy", "carrier", "spread_pct", "metric", "value", "ci_half_width", "n"];

/// One Table-1 style row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTotals {
    pub strategy: String,
    pub n: u64,
    pub agreement_rate: Estimate,
    pub mean_savings: Estimate,
    pub mean_rounds: Estimate,
    pub retraction_rate: Estimate,
    pub hold_share: Estimate,
}

impl StrategyTotals {
    fn from_metrics(strategy: &str, m: &CellMetrics) -> Self {
        StrategyTotals {
            strategy: strategy.to_string(),
            n: m.n,
            agreement_rate: m.agreement_rate,
            mean_savings: m.mean_savings,
            mean_rounds: m.mean_rounds,
            retraction_rate: m.retraction_rate,
            hold_share: m.hold_stats.share,
        }
    }

    pub fn header() -> String {
        format!("{:<14} {:>7} {:>16} {:>16} {:>14} {:>7}", "Strategy", "n", "Agree (%)", "Savings", "Rounds", "Retr.")
    }

    pub fn table_line(&self) -> String {
        format!(
            "{:<14} {:>7} {:>16} {:>16} {:>14} {:>7.3}",
            self.strategy,
            self.n,
            format!("{:.1} ± {:.1}", 100.0 * self.agreement_rate.value, 100.0 * self.agreement_rate.ci_half_width),
            format!("{:.3} ± {:.3}", self.mean_savings.value, self.mean_savings.ci_half_width),
            format!("{:.2} ± {:.2}", self.mean_rounds.value, self.mean_rounds.ci_half_width),
            self.retraction_rate.value,
        )
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    master_seed: u64,
    shift_basis: ShiftBasis,
    calibration_constant: f64,
    negotiations: u64,
    table: Vec<StrategyTotals>,
    pairwise: &'a [PairwiseComparison],
    grid: &'a GridResult,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes the four result files into `dir`, creating it if needed.
pub fn emit_results(run: &GridRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let result = &run.result;
    let config = &run.config;

    let mut results = csv::Writer::from_writer(create(dir, RESULTS_CSV)?);
    if result.cells.is_empty() {
        results.write_record(RESULTS_HEADER)?;
    }
    for cell in &result.cells {
        for row in cell_rows(&cell.strategy.key(), cell.carrier.key(), cell.spread_pct, &cell.metrics) {
            results.serialize(row)?;
        }
    }
    results.flush()?;

    let summary = Summary {
        master_seed: config.master_seed,
        shift_basis: config.shift_basis,
        calibration_constant: config.protocol.calibration_constant,
        negotiations: result.negotiations,
        table: result.strategies.iter().map(|g| StrategyTotals::from_metrics(&g.strategy.key(), &g.metrics)).collect(),
        pairwise: &result.pairwise,
        grid: result,
    };
    let mut f = create(dir, SUMMARY_JSON)?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    f.flush()?;

    let mut transcripts = create(dir, TRANSCRIPTS_JSONL)?;
    let mut curves = csv::WriterBuilder::new().has_headers(false).from_writer(create(dir, OFFER_CURVES_CSV)?);
    curves.write_record(OFFER_CURVE_HEADER)?;
    for p in &run.played {
        writeln!(transcripts, "{}", TranscriptLine::new(config, p.load_index, p.repetition, &p.transcript).to_json())?;
        write_offer_curve(
            &mut curves,
            &p.transcript.strategy.key(),
            p.load_index,
            p.repetition,
            &p.transcript,
            config.protocol.retraction_epsilon,
        )?;
    }
    transcripts.flush()?;
    curves.flush()?;

    Ok([RESULTS_CSV, SUMMARY_JSON, TRANSCRIPTS_JSONL, OFFER_CURVES_CSV].iter().map(|n| dir.join(n)).collect())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    c: f64,
    n: u64,
    agreement_rate: f64,
    agreement_ci: f64,
    mean_savings: f64,
    savings_ci: f64,
    mean_rounds: f64,
    rounds_ci: f64,
    retraction_rate: f64,
    hold_share: f64,
}

/// Writes one row per calibration constant to `sweep.csv` and the full
/// aggregates to `sweep.json`.
pub fn emit_sweep(sweep: &[(f64, GridRun)], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(create(dir, SWEEP_CSV)?);
    let mut grids = Vec::new();
    for (c, run) in sweep {
        if let Some(m) = run.result.strategy(BrokerStrategyKind::TwoIndex) {
            w.serialize(SweepRow {
                c: *c,
                n: m.n,
                agreement_rate: m.agreement_rate.value,
                agreement_ci: m.agreement_rate.ci_half_width,
                mean_savings: m.mean_savings.value,
                savings_ci: m.mean_savings.ci_half_width,
                mean_rounds: m.mean_rounds.value,
                rounds_ci: m.mean_rounds.ci_half_width,
                retraction_rate: m.retraction_rate.value,
                hold_share: m.hold_stats.share.value,
            })?;
        }
        grids.push(&run.result);
    }
    w.flush()?;
    let mut f = create(dir, SWEEP_JSON)?;
    serde_json::to_writer_pretty(&mut f, &grids)?;
    writeln!(f)?;
    f.flush()?;
    Ok(vec![dir.join(SWEEP_CSV), dir.join(SWEEP_JSON)])
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows = reader.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

#[derive(Default)]
struct Pool {
    n: u64,
    sum: f64,
    // Within-cell sum of squares, recovered from each cell's interval.
    ss_within: f64,
    cells: Vec<(u64, f64)>,
}

impl Pool {
    fn add_mean(&mut self, row: &ResultRow) {
        if row.n == 0 || !row.value.is_finite() {
            return;
        }
        let n = row.n as f64;
        let hw = row.ci_half_width.unwrap_or(0.0);
        let sd = if hw.is_finite() { hw * n.sqrt() / z_critical(0.95) } else { 0.0 };
        self.n += row.n;
        self.sum += n * row.value;
        self.ss_within += (n - 1.0) * sd * sd;
        self.cells.push((row.n, row.value));
    }

    fn mean_estimate(&self) -> Estimate {
        if self.n == 0 {
            return Estimate { value: f64::NAN, ci_half_width: f64::NAN, n: 0 };
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        if self.n < 2 {
            return Estimate { value: mean, ci_half_width: 0.0, n: self.n };
        }
        let between: f64 = self.cells.iter().map(|(k, m)| *k as f64 * (m - mean).powi(2)).sum();
        let var = (self.ss_within + between) / (n - 1.0);
        Estimate { value: mean, ci_half_width: z_critical(0.95) * (var / n).sqrt(), n: self.n }
    }

    fn proportion_estimate(&self) -> Estimate {
        if self.n == 0 {
            return Estimate { value: f64::NAN, ci_half_width: f64::NAN, n: 0 };
        }
        let p = self.sum / self.n as f64;
        Estimate { value: p, ci_half_width: wald_ci(p.clamp(0.0, 1.0), self.n, 0.95).unwrap_or(f64::NAN), n: self.n }
    }
}

/// Pools the per-cell rows of a results file into one row per strategy.
///
/// Proportions are pooled by count; means by sample size, with the pooled
/// variance rebuilt from each cell's interval width.
pub fn summarize_results_csv(rows: &[ResultRow]) -> Vec<StrategyTotals> {
    let mut order: Vec<String> = Vec::new();
    let mut pools: BTreeMap<(String, String), Pool> = BTreeMap::new();
    for row in rows {
        if !order.contains(&row.strategy) {
            order.push(row.strategy.clone());
        }
        let pool = pools.entry((row.strategy.clone(), row.metric.clone())).or_default();
        match row.metric.as_str() {
            "agreement_rate" | "hold_share" => {
                if row.n > 0 && row.value.is_finite() {
                    pool.n += row.n;
                    pool.sum += (row.value * row.n as f64).round();
                }
            }
            _ => pool.add_mean(row),
        }
    }
    let get = |s: &str, metric: &str, proportion: bool| -> Estimate {
        match pools.get(&(s.to_string(), metric.to_string())) {
            Some(p) if proportion => p.proportion_estimate(),
            Some(p) => p.mean_estimate(),
            None => Estimate { value: f64::NAN, ci_half_width: f64::NAN, n: 0 },
        }
    };
    order
        .iter()
        .map(|s| {
            let agreement = get(s, "agreement_rate", true);
            StrategyTotals {
                strategy: s.clone(),
                n: agreement.n,
                agreement_rate: agreement,
                mean_savings: get(s, "mean_savings", false),
                mean_rounds: get(s, "mean_rounds", false),
                retraction_rate: get(s, "retraction_rate", false),
                hold_share: get(s, "hold_share", true),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::CarrierKind;
    use crate::harness::run_grid;

    fn config() -> ExperimentConfig {
        ExperimentConfig {
            strategies: vec![BrokerStrategyKind::TwoIndex, BrokerStrategyKind::LINEAR],
            carriers: vec![CarrierKind::TitForTat, CarrierKind::Anchoring],
            spread_values: vec![2.0, 10.0],
            loads_per_cell: 20,
            ..Default::default()
        }
    }

    #[test]
    fn empty_grid_writes_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { strategies: vec![], ..config() };
        let run = run_grid(&cfg).unwrap();
        emit_results(&run, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap();
        assert_eq!(text.trim(), RESULTS_HEADER.join(","));
    }

    #[test]
    fn pooled_csv_matches_direct_aggregate() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_grid(&config()).unwrap();
        emit_results(&run, dir.path()).unwrap();
        let rows = read_results_csv(&dir.path().join(RESULTS_CSV)).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2 * 6);
        let pooled = summarize_results_csv(&rows);
        assert_eq!(pooled.len(), 2);
        for p in &pooled {
            let direct = run.result.strategy(p.strategy.parse().unwrap()).unwrap();
            assert_eq!(p.n, direct.n);
            for (a, b) in [
                (p.agreement_rate, direct.agreement_rate),
                (p.mean_savings, direct.mean_savings),
                (p.mean_rounds, direct.mean_rounds),
                (p.retraction_rate, direct.retraction_rate),
                (p.hold_share, direct.hold_stats.share),
            ] {
                assert_eq!(a.n, b.n);
                assert!((a.value - b.value).abs() < 1e-9, "{a:?} vs {b:?}");
                assert!((a.ci_half_width - b.ci_half_width).abs() < 1e-9, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn offer_curves_bounded_by_deadline() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { loads_per_cell: 1, ..config() };
        let run = run_grid(&cfg).unwrap();
        emit_results(&run, dir.path()).unwrap();
        let mut reader = csv::Reader::from_path(dir.path().join(OFFER_CURVES_CSV)).unwrap();
        let mut per_negotiation: BTreeMap<(String, String, String, String), usize> = BTreeMap::new();
        for rec in reader.records() {
            let rec = rec.unwrap();
            let key = (rec[0].to_string(), rec[1].to_string(), rec[2].to_string(), rec[3].to_string());
            *per_negotiation.entry(key).or_default() += 1;
        }
        assert_eq!(per_negotiation.len(), run.played.len());
        assert!(per_negotiation.values().all(|&n| (1..=10).contains(&n)));
        let lines = fs::read_to_string(dir.path().join(TRANSCRIPTS_JSONL)).unwrap();
        assert_eq!(lines.lines().count(), run.played.len());
    }
}
