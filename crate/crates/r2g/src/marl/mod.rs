//! Multi-agent actor-critic training: the recursive-reasoning algorithm with
//! its level-k message-passing graph, plus the MASAC (level 0), independent
//! SAC, and MADDPG baselines.
//!
//! Training follows the usual off-policy loop: collect exploration steps into
//! the replay buffer, then for each training iteration sample a minibatch,
//! compute every agent's recursive opponent actions once (shared through the
//! graph), and update each agent's policy, temperature, central actor, and
//! critic in that order, finishing with a soft target update.

mod bundle;
mod graph;
mod trainer;

pub use bundle::{AgentBundle, MaddpgBundle, OU_MU, OU_SIGMA, OU_THETA};
pub use graph::{level0_actions, message_pass, recursive_actions_on_tape, ReasoningGraph};
pub use trainer::{EpochMetrics, TrainError, Trainer};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;
use crate::nets::Activation;

/// Algorithm selector. MASAC is the level-0 special case of the recursive
/// algorithm and shares its entire code path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    R2g,
    Masac,
    Maddpg,
    Sac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] =
        [Algorithm::R2g, Algorithm::Masac, Algorithm::Maddpg, Algorithm::Sac];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::R2g => "r2g",
            Algorithm::Masac => "masac",
            Algorithm::Maddpg => "maddpg",
            Algorithm::Sac => "sac",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

/// How gradients treat the recursive opponent actions in the policy loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradFlowMode {
    /// Recursive actions are precomputed once per batch and enter each
    /// agent's policy loss as constants (the algorithm's listed ordering).
    Detached,
    /// The reasoning graph is re-evaluated on the loss tape so gradients
    /// flow through central-actor evaluations back into the level-0 policy
    /// samples; central-actor parameters themselves stay frozen.
    FlowThrough,
}

impl GradFlowMode {
    pub fn name(self) -> &'static str {
        match self {
            GradFlowMode::Detached => "detached",
            GradFlowMode::FlowThrough => "flow_through",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "detached" => Some(GradFlowMode::Detached),
            "flow_through" => Some(GradFlowMode::FlowThrough),
            _ => None,
        }
    }
}

/// Everything a training run needs besides the environment.
#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    /// Recursion level k; forced to 0 for MASAC and ignored by SAC/MADDPG.
    pub recursion_level: usize,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub train_iters_per_epoch: usize,
    /// Exploration steps banked before the first parameter update. The
    /// initial broad policies must seed the buffer (and through it the
    /// critics) before policies start to sharpen, or narrow-optimum
    /// structure is never represented.
    pub warmup_steps: usize,
    pub lr_critic: f64,
    pub lr_policy: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Per-agent entropy target; `None` means -(action dim).
    pub target_entropy: Option<f64>,
    /// Starting temperature. The auto-tuned equilibrium does not depend on
    /// it, but the decay from a high start is what keeps exploration broad
    /// while the critics and central actors are still forming.
    pub initial_alpha: f64,
    pub grad_flow: GradFlowMode,
    pub replay_capacity: usize,
    pub seed: u64,
}

impl TrainerConfig {
    /// Differential-game defaults: 1000 epochs of 100 exploration steps,
    /// batch 256, two 16-unit hidden layers, critic lr 1e-3, policy lr 1e-4.
    pub fn defaults(algorithm: Algorithm, seed: u64) -> Self {
        TrainerConfig {
            algorithm,
            recursion_level: 1,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            epochs: 1000,
            steps_per_epoch: 100,
            train_iters_per_epoch: 100,
            warmup_steps: 1000,
            lr_critic: 1e-3,
            lr_policy: 1e-4,
            hidden: vec![16, 16],
            activation: Activation::Tanh,
            target_entropy: None,
            initial_alpha: 1.0,
            grad_flow: GradFlowMode::Detached,
            replay_capacity: 1_000_000,
            seed,
        }
    }

    /// Effective recursion level: MASAC is level-0 by construction; the
    /// baselines without a graph run at level 0 as well.
    pub fn effective_k(&self) -> usize {
        match self.algorithm {
            Algorithm::R2g => self.recursion_level,
            Algorithm::Masac | Algorithm::Maddpg | Algorithm::Sac => 0,
        }
    }
}

/// Source of standard-normal noise tensors. The trainer feeds a seeded RNG
/// through this; gradient checks feed a fixed recorded sequence so a loss can
/// be re-evaluated identically under parameter perturbations.
pub trait NoiseProvider {
    fn normal(&mut self, rows: usize, cols: usize) -> Tensor;
}

pub struct RngNoise<'a, R: Rng>(pub &'a mut R);

impl<R: Rng> NoiseProvider for RngNoise<'_, R> {
    fn normal(&mut self, rows: usize, cols: usize) -> Tensor {
        normal_batch(self.0, rows, cols)
    }
}

/// Replays a pre-recorded noise sequence in order.
pub struct FixedNoise {
    queue: Vec<Tensor>,
    cursor: usize,
}

impl FixedNoise {
    pub fn new(queue: Vec<Tensor>) -> Self {
        FixedNoise { queue, cursor: 0 }
    }
}

impl NoiseProvider for FixedNoise {
    fn normal(&mut self, rows: usize, cols: usize) -> Tensor {
        let t = self.queue[self.cursor].clone();
        self.cursor += 1;
        assert_eq!(t.shape(), vec![rows, cols], "recorded noise shape mismatch");
        t
    }
}

/// [rows x cols] tensor of standard-normal draws.
pub fn normal_batch(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let v: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::from_vec(vec![rows, cols], v).expect("consistent shape")
}

/// Ascending agent indices excluding `agent`: the canonical opponent order
/// used for every concatenation in the crate.
pub fn opponent_order(n_agents: usize, agent: usize) -> Vec<usize> {
    (0..n_agents).filter(|j| *j != agent).collect()
}
