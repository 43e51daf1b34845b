//! Natural-language layer around the negotiation engine.
//!
//! Prompts are rendered from load data, replies are reduced to a
//! [`ParsedTurn`], and only that reduced form reaches the protocol loop.

mod client;
mod parse;
mod prompt;
mod session;

pub use client::{
    chat_complete, completion_body, ChatClient, ChatMessage, EndpointConfig, ScriptedTransport, Transport,
    TransportError, UreqTransport,
};
pub use parse::{dollar_amounts, parse_turn, Intent, ParsedTurn};
pub use prompt::{
    format_dollars, render_broker_prompt, round_note, ConcessionRule, PersonaPrompt, PromptBundle, WalkawayRule,
    BROKER_PROMPT_TEMPLATE, BROKER_TEMPERATURE, CARRIER_TEMPERATURE,
};
pub use session::{
    broker_message, run_against_llm_carrier, run_bounded, run_llm_broker, AdapterEntry, AdapterLog, Direction,
    LlmBrokerOutcome, LlmBrokerRound, LlmCarrier,
};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("prompt field `{0}` is empty or unresolved")]
    MissingField(&'static str),
    #[error("no action could be parsed from reply: {0:?}")]
    Unparseable(String),
    #[error("endpoint timed out on all {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("endpoint unreachable after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("endpoint returned HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("LLM configuration: {0}")]
    Config(String),
}
