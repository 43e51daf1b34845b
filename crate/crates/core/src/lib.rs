//! Monotonic concession strategies for broker-carrier rate negotiation under
//! mid-negotiation price shifts.
//!
//! The engine lives in [`strategy`], [`carrier`] and [`protocol`];
//! [`harness`] runs seeded experiment grids and [`llm`] wraps the engine in
//! a natural-language layer.

pub mod carrier;
pub mod domain;
pub mod error;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod pricing;
pub mod protocol;
pub mod seeding;
pub mod strategy;

pub use error::{Error, Result};
