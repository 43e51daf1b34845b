//! Negotiations with a language model on one side of the table.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::client::{ChatClient, ChatMessage};
use super::parse::{parse_turn, Intent, ParsedTurn};
use super::prompt::{format_dollars, render_broker_prompt, round_note, PersonaPrompt, PromptBundle};
use super::LlmError;
use crate::carrier::{CarrierParams, CarrierResponse};
use crate::domain::{Load, ProtocolConfig, Rate};
use crate::error::Result;
use crate::pricing::{ShiftBasis, ShiftSchedule};
use crate::protocol::{negotiate, Counterparty, ScriptedCarrier, Transcript};
use crate::strategy::{Broker, BrokerStrategyKind};

/// One message crossing the adapter boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterEntry {
    pub round: u32,
    pub direction: Direction,
    pub text: String,
    /// The rate the engine supplied for an outbound message.
    pub engine_rate: Option<Rate>,
    /// What an inbound message was reduced to.
    pub parsed: Option<ParsedTurn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToModel,
    FromModel,
}

/// Shared, append-only record of adapter traffic.
#[derive(Debug, Clone, Default)]
pub struct AdapterLog(Arc<Mutex<Vec<AdapterEntry>>>);

impl AdapterLog {
    pub fn push(&self, entry: AdapterEntry) {
        self.0.lock().expect("log lock").push(entry);
    }

    pub fn entries(&self) -> Vec<AdapterEntry> {
        self.0.lock().expect("log lock").clone()
    }

    /// Outbound rates that did not come from the engine. Empty when every
    /// dollar amount the broker side sent was an engine offer.
    pub fn foreign_outbound_rates(&self) -> Vec<f64> {
        self.entries()
            .iter()
            .filter(|e| e.direction == Direction::ToModel)
            .flat_map(|e| {
                let engine = e.engine_rate.map(Rate::cents);
                super::parse::dollar_amounts(&e.text)
                    .into_iter()
                    .filter(move |v| Rate::new(*v).map(Rate::cents).ok() != engine)
            })
            .collect()
    }
}

/// Text the broker side sends for an engine offer.
pub fn broker_message(round: u32, max_rounds: u32, offer: Rate) -> String {
    format!("{}\nWe can offer ${} for this load.", round_note(round, max_rounds), format_dollars(offer))
}

/// A carrier played by a language model. The engine only ever sees the
/// parsed action, never the model's text.
pub struct LlmCarrier {
    client: ChatClient,
    persona: PersonaPrompt,
    load: Load,
    max_rounds: u32,
    messages: Vec<ChatMessage>,
    /// Extra attempts when a reply cannot be parsed.
    pub parse_retries: u32,
    log: AdapterLog,
}

impl LlmCarrier {
    pub fn new(
        client: ChatClient,
        persona: PersonaPrompt,
        load: &Load,
        max_rounds: u32,
        log: AdapterLog,
    ) -> Result<Self> {
        let system = persona.render(load, max_rounds)?;
        let client = client.with_temperature(persona.temperature);
        Ok(LlmCarrier {
            client,
            persona,
            load: load.clone(),
            max_rounds,
            messages: vec![ChatMessage::system(system)],
            parse_retries: 1,
            log,
        })
    }

    fn ask(&mut self, round: u32) -> std::result::Result<ParsedTurn, LlmError> {
        let mut last = None;
        for _ in 0..=self.parse_retries {
            let reply = self.client.chat_complete(&self.messages)?;
            let parsed = parse_turn(&reply);
            self.log.push(AdapterEntry {
                round,
                direction: Direction::FromModel,
                text: reply.clone(),
                engine_rate: None,
                parsed: parsed.as_ref().ok().copied(),
            });
            match parsed {
                Ok(turn) => {
                    self.messages.push(ChatMessage::assistant(reply));
                    return Ok(turn);
                }
                Err(e) => {
                    log::warn!("round {round}: unparseable carrier reply, retrying");
                    self.messages.push(ChatMessage::assistant(reply));
                    self.messages.push(ChatMessage::user(
                        "Please restate your position with a single dollar amount, or say \"I accept\" or \"I'll have to pass\".",
                    ));
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

impl Counterparty for LlmCarrier {
    fn label(&self) -> String {
        format!("llm-{}", self.persona.persona.key())
    }

    fn respond(&mut self, round: u32, broker_offer: f64) -> Result<CarrierResponse> {
        let offer = Rate::new(broker_offer)?;
        let text = broker_message(round, self.max_rounds, offer);
        self.log.push(AdapterEntry {
            round,
            direction: Direction::ToModel,
            text: text.clone(),
            engine_rate: Some(offer),
            parsed: None,
        });
        self.messages.push(ChatMessage::user(text));
        let turn = self.ask(round)?;
        Ok(match turn.intent {
            Intent::Accept => CarrierResponse::Accept,
            Intent::Pass => CarrierResponse::WalkAway,
            Intent::Counter => {
                let rate = turn.rate.expect("counters carry a rate").value();
                CarrierResponse::Counter(rate.clamp(self.load.r_min.value(), self.load.r_max.value()))
            }
        })
    }
}

/// Runs an engine broker against a model-played carrier.
#[allow(clippy::too_many_arguments)]
pub fn run_against_llm_carrier(
    client: ChatClient,
    persona: PersonaPrompt,
    load: &Load,
    strategy: BrokerStrategyKind,
    schedule: &ShiftSchedule,
    config: &ProtocolConfig,
    basis: ShiftBasis,
    gtft_rng: rand_chacha::ChaCha8Rng,
    log: AdapterLog,
) -> Result<Transcript> {
    let broker = Broker::new(strategy, load, config, gtft_rng)?;
    let mut carrier = LlmCarrier::new(client, persona, load, config.max_rounds, log)?;
    negotiate(load, strategy, broker, &mut carrier, None, schedule, config, basis)
}

/// A round of the unconstrained model broker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmBrokerRound {
    pub t: u32,
    pub broker_text: String,
    pub broker_turn: Option<ParsedTurn>,
    pub carrier_response: Option<CarrierResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmBrokerOutcome {
    pub load: Load,
    pub carrier: String,
    pub rounds: Vec<LlmBrokerRound>,
    pub agreed_rate: Option<Rate>,
    pub walked_away: bool,
    /// Broker offers falling more than the retraction tolerance below the previous one.
    pub retractions: u32,
}

/// The unconstrained baseline: the model decides its own counters and the
/// scripted carrier answers each one.
pub fn run_llm_broker(
    client: &ChatClient,
    load: &Load,
    carrier: &CarrierParams,
    config: &ProtocolConfig,
) -> Result<LlmBrokerOutcome> {
    let system = render_broker_prompt(load, &PromptBundle { max_rounds: config.max_rounds, ..Default::default() })?;
    let mut messages = vec![ChatMessage::system(system)];
    let mut scripted = ScriptedCarrier::new(*carrier, load, config.max_rounds);
    let mut rounds = Vec::new();
    let mut offers: Vec<f64> = Vec::new();
    let mut carrier_says = format!(
        "Carrier: We're looking at ${} for this one.",
        format_dollars(Rate::new(load.rate_at_fraction(carrier.open_frac))?)
    );
    let mut agreed = None;
    let mut walked_away = false;
    let mut standing: Option<f64> = None;

    for t in 1..=config.max_rounds {
        messages.push(ChatMessage::user(format!("{}\n{carrier_says}", round_note(t, config.max_rounds))));
        let text = client.chat_complete(&messages)?;
        messages.push(ChatMessage::assistant(text.clone()));
        let turn = parse_turn(&text).ok();
        let mut round = LlmBrokerRound { t, broker_text: text, broker_turn: turn, carrier_response: None };
        match turn.map(|p| p.intent) {
            Some(Intent::Accept) => {
                agreed = standing.or(turn.and_then(|p| p.rate).map(Rate::value));
                rounds.push(round);
                break;
            }
            Some(Intent::Pass) => {
                walked_away = true;
                rounds.push(round);
                break;
            }
            Some(Intent::Counter) => {
                let offer = turn.and_then(|p| p.rate).expect("counters carry a rate").value();
                offers.push(offer);
                let response = scripted.respond(t, offer)?;
                round.carrier_response = Some(response);
                rounds.push(round);
                match response {
                    CarrierResponse::Accept => {
                        agreed = Some(offer);
                        break;
                    }
                    CarrierResponse::WalkAway => {
                        walked_away = true;
                        break;
                    }
                    CarrierResponse::Counter(d) => {
                        standing = Some(d);
                        carrier_says = format!("Carrier: I can do ${}.", format_dollars(Rate::new(d)?));
                    }
                }
            }
            None => {
                log::warn!("round {t}: broker reply had no usable rate");
                rounds.push(round);
                carrier_says = "Carrier: I didn't catch a number there. What's your rate?".into();
            }
        }
    }
    Ok(LlmBrokerOutcome {
        load: load.clone(),
        carrier: carrier.kind.key().to_string(),
        rounds,
        agreed_rate: agreed.map(Rate::new).transpose()?,
        walked_away,
        retractions: crate::protocol::count_retractions(&offers, config.retraction_epsilon),
    })
}

/// Runs independent jobs with at most `max_concurrency` in flight. Turns
/// within a job stay sequential.
pub fn run_bounded<T, R, F>(jobs: Vec<T>, max_concurrency: usize, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Send + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_concurrency.max(1))
        .build()
        .map_err(|e| crate::Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| jobs.into_par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::CarrierKind;
    use crate::llm::client::{EndpointConfig, ScriptedTransport};
    use crate::pricing::ScheduleKey;
    use rand::SeedableRng;

    fn load() -> Load {
        Load::new("L7", "Memphis, TN", "Reno, NV", 1800.0, 2400.0, 2100.0).unwrap()
    }

    fn client(replies: &[&str]) -> ChatClient {
        ChatClient::new(
            EndpointConfig { backoff_ms: 0, ..Default::default() },
            Box::new(ScriptedTransport::with_contents(replies.iter().copied())),
        )
    }

    #[test]
    fn model_carrier_negotiation_uses_engine_rates() {
        let log = AdapterLog::default();
        let t = run_against_llm_carrier(
            client(&["We need $2,300 on this lane.", "Hmm. $2,200 is my number.", "Fine, I accept."]),
            PersonaPrompt::for_kind(CarrierKind::TitForTat),
            &load(),
            BrokerStrategyKind::TwoIndex,
            &ShiftSchedule::empty(ScheduleKey { spread_pct: 33.3, load_index: 0, repetition: 0 }),
            &ProtocolConfig::default(),
            ShiftBasis::Range,
            rand_chacha::ChaCha8Rng::seed_from_u64(0),
            log.clone(),
        )
        .unwrap();
        assert_eq!(t.outcome.rounds_used, 3);
        assert!(log.foreign_outbound_rates().is_empty());
        let sent: Vec<i128> = log.entries().iter().filter_map(|e| e.engine_rate.map(Rate::cents)).collect();
        let engine: Vec<i128> = t.counter_offers().into_iter().map(|o| Rate::new(o).unwrap().cents()).collect();
        assert_eq!(sent, engine);
    }

    #[test]
    fn unparseable_reply_retried_then_fails() {
        let mut carrier = LlmCarrier::new(
            client(&["hmm", "let me check"]),
            PersonaPrompt::for_kind(CarrierKind::Hardliner),
            &load(),
            10,
            AdapterLog::default(),
        )
        .unwrap();
        let err = carrier.respond(1, 1800.0).unwrap_err();
        assert!(matches!(err, crate::Error::Llm(LlmError::Unparseable(_))), "{err}");
    }

    #[test]
    fn unconstrained_broker_loop() {
        let c = client(&["I'd like to start at $1,850.", "We can go to $1,900.", "Deal."]);
        let out =
            run_llm_broker(&c, &load(), &CarrierParams::for_kind(CarrierKind::Cooperative), &ProtocolConfig::default())
                .unwrap();
        assert!(!out.rounds.is_empty());
        assert_eq!(out.retractions, 0);
    }
}
