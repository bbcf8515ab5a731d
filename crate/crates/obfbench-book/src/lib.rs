//! Keeps the book honest: every chapter under `book/src/` is included here
//! as module documentation, so `cargo test --doc -p obfbench-book` compiles
//! and runs each of its Rust snippets. mdBook itself cannot run examples
//! against external crates; routing the chapters through rustdoc can.
//!
//! One module per chapter, so a failing snippet names its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/text.md")]
pub mod text {}

#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/attack.md")]
pub mod attack {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
