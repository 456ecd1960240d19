//! Experiment harness: run configuration, seeded stream derivation, training
//! orchestration (single runs and multi-seed sweeps), CSV artifacts, SVG
//! plots, evaluation, and the command-line entry point.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod losscheck;
pub mod runner;
pub mod seeding;
pub mod svg;

use thiserror::Error;

use crate::marl::TrainError;
use crate::nets::{policy_from_checkpoint, CentralActor, Checkpoint, CheckpointError};
use crate::verify::{response_map, GridSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("unknown environment {0:?}")]
    UnknownEnv(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
}

/// Central actors rebuilt from a checkpoint, one per agent that has one.
pub fn central_actors_from_checkpoint(
    ck: &Checkpoint,
) -> Result<Vec<CentralActor>, HarnessError> {
    let n: usize = ck
        .meta
        .get("n_agents")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| HarnessError::Config("checkpoint lacks n_agents".into()))?;
    let activation = ck
        .meta
        .get("activation")
        .and_then(|s| crate::nets::Activation::from_name(s))
        .unwrap_or(crate::nets::Activation::Tanh);
    (0..n)
        .map(|i| {
            policy_from_checkpoint(ck, &format!("agent{i}/central"), activation)
                .map(|policy| CentralActor { policy })
                .map_err(HarnessError::from)
        })
        .collect()
}

/// Response-map rows (opponent_action, agent_id, response) for every agent's
/// central actor, evaluated at the environment's initial state. Two-player
/// scalar-action checkpoints only.
pub fn response_map_rows(
    ck: &Checkpoint,
    grid: &GridSpec,
) -> Result<Vec<(f64, usize, f64)>, HarnessError> {
    let env_name = ck
        .meta
        .get("env")
        .ok_or_else(|| HarnessError::Config("checkpoint lacks env metadata".into()))?;
    let env = runner::env_by_name(env_name)?;
    let state = env.reset(0);
    let actors = central_actors_from_checkpoint(ck)?;
    let mut rows = Vec::new();
    for (agent, actor) in actors.iter().enumerate() {
        for (opp, response) in response_map(actor, &state, grid)? {
            rows.push((opp, agent, response));
        }
    }
    Ok(rows)
}
