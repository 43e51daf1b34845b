//! The guide's chapters, compiled as doc comments so `cargo test` runs every
//! listing in `book/src`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/concession.md")]
pub mod concession {}
#[doc = include_str!("../../../book/src/two-index.md")]
pub mod two_index {}
#[doc = include_str!("../../../book/src/carriers.md")]
pub mod carriers {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/statistics.md")]
pub mod statistics {}
#[doc = include_str!("../../../book/src/language-models.md")]
pub mod language_models {}
