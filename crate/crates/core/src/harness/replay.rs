//! Regenerating recorded negotiations from their seeds.

use std::path::Path;

use serde::Serialize;

use super::{generate_unit, ExperimentConfig, TranscriptLine};
use crate::error::{Error, Result};
use crate::protocol::run_negotiation;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub line: usize,
    pub strategy: String,
    pub carrier: String,
    pub spread_pct: f64,
    pub load_index: u64,
    pub repetition: u64,
    pub load_matches: bool,
    pub schedule_matches: bool,
    /// The regenerated line serializes to exactly the recorded bytes.
    pub identical: bool,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.load_matches && self.schedule_matches && self.identical
    }
}

/// Re-runs the negotiation recorded in one `transcripts.jsonl` line.
pub fn replay_line(text: &str, line: usize) -> Result<ReplayReport> {
    let text = text.trim_end_matches(['\r', '\n']);
    let recorded: TranscriptLine = serde_json::from_str(text)?;
    let t = &recorded.transcript;
    let params = t.carrier_params.ok_or_else(|| {
        Error::InvalidConfig(format!("line {line}: carrier `{}` is not a scripted archetype", t.carrier))
    })?;
    let config = ExperimentConfig {
        master_seed: recorded.master_seed,
        shift_basis: recorded.shift_basis,
        shifts_per_negotiation: recorded.shifts_per_negotiation,
        r_min_range: recorded.r_min_range,
        protocol: recorded.protocol,
        ..Default::default()
    };
    let unit = generate_unit(&config, recorded.spread_pct, recorded.load_index, recorded.repetition)?;
    let transcript = run_negotiation(
        &unit.load,
        t.strategy,
        &params,
        &unit.schedule,
        &config.protocol,
        config.shift_basis,
        super::gtft_stream(&config, &unit, params.kind),
    )?;
    let regenerated = TranscriptLine::new(&config, recorded.load_index, recorded.repetition, &transcript);
    Ok(ReplayReport {
        line,
        strategy: t.strategy.key(),
        carrier: t.carrier.clone(),
        spread_pct: recorded.spread_pct,
        load_index: recorded.load_index,
        repetition: recorded.repetition,
        load_matches: serde_json::to_string(&unit.load)? == serde_json::to_string(&t.load)?,
        schedule_matches: unit.schedule.fingerprint() == recorded.schedule_fingerprint,
        identical: regenerated.to_json() == text,
    })
}

/// Replays every line of a transcript file.
pub fn replay_file(path: &Path) -> Result<Vec<ReplayReport>> {
    let text = std::fs::read_to_string(path)?;
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| replay_line(l, i + 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::CarrierKind;
    use crate::harness::{emit_results, run_grid};
    use crate::strategy::BrokerStrategyKind;

    #[test]
    fn recorded_transcripts_replay_identically() {
        let cfg = ExperimentConfig {
            strategies: vec![BrokerStrategyKind::TwoIndex, BrokerStrategyKind::GenerousTft],
            carriers: vec![CarrierKind::TitForTat, CarrierKind::DeadlineExploiter],
            spread_values: vec![3.0, 12.0],
            loads_per_cell: 4,
            master_seed: 77,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        emit_results(&run_grid(&cfg).unwrap(), dir.path()).unwrap();
        let reports = replay_file(&dir.path().join("transcripts.jsonl")).unwrap();
        assert_eq!(reports.len(), 2 * 2 * 2 * 4);
        assert!(reports.iter().all(ReplayReport::ok), "{reports:?}");
    }

    #[test]
    fn tampered_line_is_detected() {
        let cfg = ExperimentConfig {
            strategies: vec![BrokerStrategyKind::BOULWARE],
            carriers: vec![CarrierKind::Cooperative],
            spread_values: vec![5.0],
            loads_per_cell: 1,
            ..Default::default()
        };
        let run = run_grid(&cfg).unwrap();
        let p = &run.played[0];
        let mut line = TranscriptLine::new(&cfg, p.load_index, p.repetition, &p.transcript);
        line.master_seed += 1;
        let report = replay_line(&line.to_json(), 1).unwrap();
        assert!(!report.ok());
    }
}
