//! Prompt templates for the broker and carrier personas.

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::carrier::CarrierKind;
use crate::domain::{Load, Rate};

/// The unconstrained broker's system prompt. Placeholders are
/// `{load_id}`, `{origin}`, `{destination}`, `{min_rate}`, `{max_rate}`
/// and `{target_rate}`; each rate placeholder already follows a `$`.
pub const BROKER_PROMPT_TEMPLATE: &str = include_str!("broker_prompt.txt");

const PLACEHOLDERS: [&str; 6] = ["load_id", "origin", "destination", "min_rate", "max_rate", "target_rate"];

/// Formats a rate as `1,450`, or `1,450.25` when it has cents. The `$` is
/// left to the caller.
pub fn format_dollars(rate: Rate) -> String {
    let cents = rate.cents();
    let whole = (cents / 100).to_string();
    let mut grouped = String::with_capacity(whole.len() + whole.len() / 3);
    for (i, ch) in whole.chars().enumerate() {
        if i > 0 && (whole.len() - i).is_multiple_of(3) {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    match cents % 100 {
        0 => grouped,
        c => format!("{grouped}.{c:02}"),
    }
}

/// The note injected ahead of each turn so the model can pace itself.
pub fn round_note(round: u32, max_rounds: u32) -> String {
    format!("[Round {round} of {max_rounds}. You have {} round(s) remaining.]", max_rounds.saturating_sub(round))
}

/// The broker system prompt and per-turn note for one negotiation length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub max_rounds: u32,
}

impl Default for PromptBundle {
    fn default() -> Self {
        PromptBundle { system_prompt: BROKER_PROMPT_TEMPLATE.to_string(), max_rounds: 10 }
    }
}

impl PromptBundle {
    pub fn round_note(&self, round: u32) -> String {
        round_note(round, self.max_rounds)
    }
}

/// Fills the broker template for `load`. Fails on an empty field or any
/// placeholder left unresolved.
pub fn render_broker_prompt(load: &Load, bundle: &PromptBundle) -> Result<String, LlmError> {
    let text_fields = [("load_id", &load.id), ("origin", &load.origin), ("destination", &load.destination)];
    let mut out = bundle.system_prompt.clone();
    for (name, value) in text_fields {
        if value.trim().is_empty() {
            return Err(LlmError::MissingField(name));
        }
        out = out.replace(&format!("{{{name}}}"), value);
    }
    for (name, rate) in [("min_rate", load.r_min), ("max_rate", load.r_max), ("target_rate", load.r_target)] {
        out = out.replace(&format!("{{{name}}}"), &format_dollars(rate));
    }
    if let Some(left) = PLACEHOLDERS.iter().find(|p| out.contains(&format!("{{{p}}}"))) {
        return Err(LlmError::MissingField(left));
    }
    Ok(out)
}

/// How a persona decides to leave the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WalkawayRule {
    Never,
    AfterStalls { stalls: u32 },
    AtRound { round: u32 },
}

/// Per-round concession budget, in percent of the range above cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ConcessionRule {
    Fixed { pct: f64 },
    Mirror,
    EarlyLate { early_pct: f64, late_pct: f64 },
}

/// Calibrated parameters of one LLM carrier persona.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonaPrompt {
    pub persona: CarrierKind,
    /// Opening ask, percent of the range above the floor.
    pub opening_pct: f64,
    /// Lowest acceptable rate, percent of the range above the floor.
    pub floor_pct: f64,
    pub walkaway_rule: WalkawayRule,
    pub max_concession_rule: ConcessionRule,
    pub temperature: f64,
}

pub const CARRIER_TEMPERATURE: f64 = 0.3;
pub const BROKER_TEMPERATURE: f64 = 0.7;

impl PersonaPrompt {
    pub fn for_kind(persona: CarrierKind) -> Self {
        let (opening_pct, floor_pct, walkaway_rule, max_concession_rule) = match persona {
            CarrierKind::Cooperative => (30.0, 2.0, WalkawayRule::Never, ConcessionRule::Fixed { pct: 8.0 }),
            CarrierKind::TitForTat => (60.0, 0.0, WalkawayRule::AfterStalls { stalls: 3 }, ConcessionRule::Mirror),
            CarrierKind::DeadlineExploiter => {
                (70.0, 0.0, WalkawayRule::Never, ConcessionRule::EarlyLate { early_pct: 0.5, late_pct: 12.0 })
            }
            CarrierKind::Anchoring => {
                (95.0, 0.0, WalkawayRule::AtRound { round: 9 }, ConcessionRule::Fixed { pct: 2.0 })
            }
            CarrierKind::Hardliner => (
                90.0,
                0.0,
                WalkawayRule::AtRound { round: 8 },
                ConcessionRule::EarlyLate { early_pct: 1.0, late_pct: 8.0 },
            ),
        };
        PersonaPrompt {
            persona,
            opening_pct,
            floor_pct,
            walkaway_rule,
            max_concession_rule,
            temperature: CARRIER_TEMPERATURE,
        }
    }

    pub fn opening_rate(&self, load: &Load) -> Rate {
        Rate::new(load.rate_at_fraction(self.opening_pct / 100.0)).expect("band rates are non-negative")
    }

    pub fn floor_rate(&self, load: &Load) -> Rate {
        Rate::new(load.rate_at_fraction(self.floor_pct / 100.0)).expect("band rates are non-negative")
    }

    /// The carrier's system prompt for `load`.
    pub fn render(&self, load: &Load, max_rounds: u32) -> Result<String, LlmError> {
        for (name, value) in [("load_id", &load.id), ("origin", &load.origin), ("destination", &load.destination)] {
            if value.trim().is_empty() {
                return Err(LlmError::MissingField(name));
            }
        }
        let style = match self.persona {
            CarrierKind::Cooperative => "You value a quick, friendly close and move toward the broker readily.",
            CarrierKind::Hardliner => "You hold firm and concede very little until late in the negotiation.",
            CarrierKind::TitForTat => {
                "You match the broker's moves: concede as much as they concede, stall when they stall."
            }
            CarrierKind::DeadlineExploiter => "You barely move early and make your real concessions near the deadline.",
            CarrierKind::Anchoring => "You open very high and come down in small, steady steps.",
        };
        let walkaway = match self.walkaway_rule {
            WalkawayRule::Never => "You never walk away.".to_string(),
            WalkawayRule::AfterStalls { stalls } => {
                format!("Walk away if the broker fails to improve their offer {stalls} times in a row.")
            }
            WalkawayRule::AtRound { round } => {
                format!("From round {round} on, walk away if the broker's offer is still far from your floor.")
            }
        };
        let concession = match self.max_concession_rule {
            ConcessionRule::Fixed { pct } => format!("Concede at most {pct}% of the rate range per round."),
            ConcessionRule::Mirror => "Concede no more per round than the broker conceded in their last move.".to_string(),
            ConcessionRule::EarlyLate { early_pct, late_pct } => format!(
                "Concede at most {early_pct}% of the rate range per round early on and at most {late_pct}% in the last rounds."
            ),
        };
        let cost = format_dollars(load.r_min);
        let top = format_dollars(load.r_max);
        Ok(format!(
            "You are a carrier dispatcher negotiating the rate for a load with a freight broker.\n\
             \n\
             Load {id}: {origin} to {destination}.\n\
             Rates are discussed within ${cost} to ${top}.\n\
             \n\
             {style}\n\
             \n\
             Rules:\n\
             - Open at exactly ${open}.\n\
             - Never accept or propose less than ${floor}.\n\
             - {concession}\n\
             - {walkaway}\n\
             - The negotiation lasts at most {max_rounds} rounds.\n\
             \n\
             Format:\n\
             - Before each counter-offer, think briefly about the broker's last move.\n\
             - State every rate as a dollar amount, e.g. \"$1,450\".\n\
             - Keep replies to 1-3 sentences.\n\
             - To agree, say \"I accept\" or \"deal\". To leave, say \"I'll have to pass\".",
            id = load.id,
            origin = load.origin,
            destination = load.destination,
            open = format_dollars(self.opening_rate(load)),
            floor = format_dollars(self.floor_rate(load)),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load() -> Load {
        Load::new("L1", "Atlanta, GA", "Dallas, TX", 1800.0, 2400.0, 2100.0).unwrap()
    }

    #[test]
    fn dollars_grouping() {
        let r = |v: f64| format_dollars(Rate::new(v).unwrap());
        assert_eq!(r(1800.0), "1,800");
        assert_eq!(r(1450.0), "1,450");
        assert_eq!(r(999.0), "999");
        assert_eq!(r(1234567.5), "1,234,567.50");
        assert_eq!(r(1926.255), "1,926.26");
        assert_eq!(r(0.0), "0");
    }

    #[test]
    fn broker_prompt_fields() {
        let text = render_broker_prompt(&load(), &PromptBundle::default()).unwrap();
        assert!(text.contains("- Minimum rate (floor): $1,800\n"));
        assert!(text.contains("- Maximum rate (budget ceiling): $2,400\n"));
        assert!(text.contains("- Target rate (ideal settlement): $2,100\n"));
        assert!(text.contains("- Route: Atlanta, GA to Dallas, TX\n"));
        assert!(!text.contains('{'));
        assert_eq!(text, render_broker_prompt(&load(), &PromptBundle::default()).unwrap());
    }

    #[test]
    fn empty_field_rejected() {
        let mut l = load();
        l.origin.clear();
        assert!(matches!(render_broker_prompt(&l, &PromptBundle::default()), Err(LlmError::MissingField("origin"))));
        let bundle = PromptBundle { system_prompt: "{load_id} {carrier_name} {lane_id}".into(), max_rounds: 10 };
        assert!(render_broker_prompt(&load(), &bundle).is_ok());
        let bundle = PromptBundle { system_prompt: "{load_id} {{min_rate}}".into(), max_rounds: 10 };
        assert!(render_broker_prompt(&load(), &bundle).is_ok());
    }

    #[test]
    fn notes() {
        assert_eq!(round_note(9, 10), "[Round 9 of 10. You have 1 round(s) remaining.]");
        assert_eq!(round_note(1, 10), "[Round 1 of 10. You have 9 round(s) remaining.]");
    }

    #[test]
    fn persona_table() {
        let open: Vec<f64> = [
            CarrierKind::Cooperative,
            CarrierKind::TitForTat,
            CarrierKind::DeadlineExploiter,
            CarrierKind::Anchoring,
            CarrierKind::Hardliner,
        ]
        .iter()
        .map(|k| PersonaPrompt::for_kind(*k).opening_pct)
        .collect();
        assert_eq!(open, vec![30.0, 60.0, 70.0, 95.0, 90.0]);
        let coop = PersonaPrompt::for_kind(CarrierKind::Cooperative);
        assert_eq!(coop.floor_pct, 2.0);
        assert_eq!(coop.temperature, 0.3);
        let text = coop.render(&load(), 10).unwrap();
        assert!(text.contains("Open at exactly $1,980."));
        assert!(text.contains("less than $1,812."));
    }
}
