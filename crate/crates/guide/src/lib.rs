//! The guide in `book/` is written for mdbook, which cannot build listings
//! that depend on workspace crates. Each chapter is included here as module
//! documentation so `cargo test --doc` compiles and runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/command_line.md")]
pub mod command_line {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/distillation.md")]
pub mod distillation {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/power.md")]
pub mod power {}
#[doc = include_str!("../../../book/src/configuration.md")]
pub mod configuration {}
