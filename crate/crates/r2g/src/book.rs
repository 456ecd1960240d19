//! Doc-test anchors for the guide: every fenced Rust block in book/src is
//! compiled and executed by `cargo test --doc`, so the book cannot drift
//! from the crate. (mdBook itself does not run snippets against the real
//! crate; this shim does.)

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/autodiff.md")]
mod autodiff_chapter {}

#[doc = include_str!("../../../book/src/networks.md")]
mod networks_chapter {}

#[doc = include_str!("../../../book/src/games.md")]
mod games_chapter {}

#[doc = include_str!("../../../book/src/training.md")]
mod training_chapter {}

#[doc = include_str!("../../../book/src/verification.md")]
mod verification_chapter {}

#[doc = include_str!("../../../book/src/experiments.md")]
mod experiments_chapter {}
