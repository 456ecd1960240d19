//! Recursive-reasoning actor-critic training for continuous Markov games.
//!
//! The crate is self-contained: a minimal reverse-mode autodiff core
//! ([`autodiff`]), small dense networks and distribution heads ([`nets`]),
//! Markov-game environments ([`envs`]), experience replay ([`replay`]), the
//! training algorithms themselves ([`marl`]), independent verification
//! oracles ([`verify`]), and a deterministic experiment harness with a CLI
//! ([`harness`]).
//!
//! The core idea implemented in [`marl`]: each agent keeps, next to its
//! policy and central critic, an auxiliary *central actor* that learns its
//! best response given the other agents' actions. Central actors form a
//! graph; passing sampled actions through the graph k times yields level-k
//! recursive opponent actions, which replace naive opponent samples in the
//! policy objective. The `book/` directory walks through every layer with
//! runnable snippets.

pub mod autodiff;
pub mod envs;
pub mod harness;
pub mod marl;
pub mod nets;
pub mod replay;
pub mod verify;

#[cfg(doctest)]
mod book;
