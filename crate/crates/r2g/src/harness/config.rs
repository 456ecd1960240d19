//! Run configuration and its line-oriented text format. Every field is
//! written on save, so parse(serialize(c)) == c; CLI flags override file
//! values, which override the defaults.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::marl::{Algorithm, GradFlowMode, TrainerConfig};
use crate::nets::Activation;

use super::HarnessError;

/// Full description of an experiment run (or sweep member). Defaults follow
/// the differential-game setup: 1000 epochs of 100 exploration steps, batch
/// 256, two 16-unit layers, critic lr 1e-3, policy lr 1e-4.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub algorithm: Algorithm,
    pub recursion_level: usize,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub train_iters_per_epoch: usize,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub lr_critic: f64,
    pub lr_policy: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub grad_flow: GradFlowMode,
    pub replay_capacity: usize,
    /// `None` means the SAC convention -(action dim).
    pub target_entropy: Option<f64>,
    pub initial_alpha: f64,
    pub eval_episodes: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: "zero_sum".into(),
            algorithm: Algorithm::R2g,
            recursion_level: 1,
            seeds: vec![0],
            epochs: 1000,
            steps_per_epoch: 100,
            train_iters_per_epoch: 100,
            warmup_steps: 1000,
            batch_size: 256,
            gamma: 0.99,
            tau: 0.005,
            lr_critic: 1e-3,
            lr_policy: 1e-4,
            hidden: vec![16, 16],
            activation: Activation::Tanh,
            grad_flow: GradFlowMode::Detached,
            replay_capacity: 1_000_000,
            target_entropy: None,
            initial_alpha: 1.0,
            eval_episodes: 100,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    /// Trainer settings for one member seed of this run.
    pub fn trainer_config(&self, seed: u64) -> TrainerConfig {
        TrainerConfig {
            algorithm: self.algorithm,
            recursion_level: self.recursion_level,
            gamma: self.gamma,
            tau: self.tau,
            batch_size: self.batch_size,
            epochs: self.epochs,
            steps_per_epoch: self.steps_per_epoch,
            train_iters_per_epoch: self.train_iters_per_epoch,
            warmup_steps: self.warmup_steps,
            lr_critic: self.lr_critic,
            lr_policy: self.lr_policy,
            hidden: self.hidden.clone(),
            activation: self.activation,
            target_entropy: self.target_entropy,
            initial_alpha: self.initial_alpha,
            grad_flow: self.grad_flow,
            replay_capacity: self.replay_capacity,
            seed,
        }
    }

    /// Serialize every field as `key = value` lines. Floats use Rust's
    /// shortest round-trip formatting, so nothing is lost.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "env = {}", self.env);
        let _ = writeln!(s, "algo = {}", self.algorithm.name());
        let _ = writeln!(s, "k = {}", self.recursion_level);
        let _ = writeln!(s, "seeds = {}", join(&self.seeds));
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "steps_per_epoch = {}", self.steps_per_epoch);
        let _ = writeln!(s, "train_iters_per_epoch = {}", self.train_iters_per_epoch);
        let _ = writeln!(s, "warmup_steps = {}", self.warmup_steps);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "lr_critic = {}", self.lr_critic);
        let _ = writeln!(s, "lr_policy = {}", self.lr_policy);
        let _ = writeln!(s, "hidden = {}", join(&self.hidden));
        let _ = writeln!(s, "activation = {}", self.activation.name());
        let _ = writeln!(s, "grad_flow = {}", self.grad_flow.name());
        let _ = writeln!(s, "replay_capacity = {}", self.replay_capacity);
        let _ = writeln!(
            s,
            "target_entropy = {}",
            match self.target_entropy {
                Some(v) => v.to_string(),
                None => "auto".into(),
            }
        );
        let _ = writeln!(s, "initial_alpha = {}", self.initial_alpha);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        s
    }

    /// Parse a config document; unknown keys and malformed values are errors.
    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.apply(key.trim(), value.trim())
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Apply one key/value pair (also the CLI override path).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        match key {
            "env" => self.env = value.to_string(),
            "algo" => {
                self.algorithm = Algorithm::from_name(value)
                    .ok_or_else(|| format!("unknown algorithm {value:?}"))?
            }
            "k" => self.recursion_level = parse(key, value)?,
            "seeds" => self.seeds = split_list(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "steps_per_epoch" => self.steps_per_epoch = parse(key, value)?,
            "train_iters_per_epoch" => self.train_iters_per_epoch = parse(key, value)?,
            "warmup_steps" => self.warmup_steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "lr_critic" => self.lr_critic = parse(key, value)?,
            "lr_policy" => self.lr_policy = parse(key, value)?,
            "hidden" => self.hidden = split_list(key, value)?,
            "activation" => {
                self.activation = Activation::from_name(value)
                    .ok_or_else(|| format!("unknown activation {value:?}"))?
            }
            "grad_flow" => {
                self.grad_flow = GradFlowMode::from_name(value)
                    .ok_or_else(|| format!("unknown gradient-flow mode {value:?}"))?
            }
            "replay_capacity" => self.replay_capacity = parse(key, value)?,
            "target_entropy" => {
                self.target_entropy =
                    if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "initial_alpha" => self.initial_alpha = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn split_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad list entry {p:?} for {key}")))
        .collect()
}
