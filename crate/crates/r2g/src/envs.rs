//! Markov-game environment contract and the two single-state differential
//! games used throughout: Zero Sum and Max of Two. Both are two-player
//! games over scalar actions in [-1, 1] whose episodes end after one step,
//! so value targets reduce to the immediate reward.
//!
//! Custom games plug in by implementing [`MarkovGame`]; only the built-in
//! games are reachable by CLI name.

use std::sync::Once;

/// Static description of a game: agent count, dimensions, discount, horizon.
/// Action spaces are boxes [-1, 1]^d per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub n_agents: usize,
    pub state_dim: usize,
    pub action_dims: Vec<usize>,
    pub gamma: f64,
    pub max_episode_len: usize,
}

impl GameSpec {
    pub fn joint_action_dim(&self) -> usize {
        self.action_dims.iter().sum()
    }
}

/// Outcome of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminal: bool,
}

/// Environment contract: a (stochastic) transition over a shared state with
/// per-agent actions and rewards. Implementations must be pure in `step`
/// (same state and joint action give the same result) and deterministic in
/// `reset` given the seed.
pub trait MarkovGame: Send + Sync {
    fn spec(&self) -> &GameSpec;
    fn reset(&self, seed: u64) -> Vec<f64>;
    fn step(&self, state: &[f64], joint_action: &[Vec<f64>]) -> StepResult;
}

static CLAMP_WARNING: Once = Once::new();

/// Actions land outside the box only by numerical accident (tanh emits at
/// most +-1); clamp and warn once rather than reject.
fn clamp_action(a: f64) -> f64 {
    if !(-1.0..=1.0).contains(&a) {
        CLAMP_WARNING.call_once(|| {
            eprintln!("warning: action {a} outside [-1, 1]; clamping (further clamps are silent)");
        });
        a.clamp(-1.0, 1.0)
    } else {
        a
    }
}

/// r1 = 10*a1 * 10*a2, r2 = -r1.
pub fn reward_zero_sum(a1: f64, a2: f64) -> (f64, f64) {
    let r1 = 100.0 * a1 * a2;
    (r1, -r1)
}

/// Shared reward max(f1, f2): a wide low plateau around (-0.5, -0.5) worth 0
/// and a narrow peak at (0.5, 0.5) worth 10.
pub fn reward_max_two(a1: f64, a2: f64) -> (f64, f64) {
    let f1 = 0.8 * (-((a1 + 0.5) / 0.3).powi(2) - ((a2 + 0.5) / 0.3).powi(2));
    let f2 = 1.0 * (-((a1 - 0.5) / 0.1).powi(2) - ((a2 - 0.5) / 0.1).powi(2)) + 10.0;
    let r = f1.max(f2);
    (r, r)
}

fn differential_spec() -> GameSpec {
    GameSpec {
        n_agents: 2,
        state_dim: 2,
        action_dims: vec![1, 1],
        gamma: 0.99,
        max_episode_len: 1,
    }
}

/// The constant global state for the differential games. The paper-style
/// one-hot identity becomes [1, 1] here: centralized training uses one shared
/// state, and in a single-state game the constant carries the same
/// information at the same input width.
const DIFFERENTIAL_STATE: [f64; 2] = [1.0, 1.0];

macro_rules! differential_game {
    ($(#[$doc:meta])* $name:ident, $reward:expr) => {
        $(#[$doc])*
        #[derive(Debug)]
        pub struct $name {
            spec: GameSpec,
        }

        impl Default for $name {
            fn default() -> Self {
                Self { spec: differential_spec() }
            }
        }

        impl $name {
            pub fn new() -> Self {
                Self::default()
            }
        }

        impl MarkovGame for $name {
            fn spec(&self) -> &GameSpec {
                &self.spec
            }

            fn reset(&self, _seed: u64) -> Vec<f64> {
                DIFFERENTIAL_STATE.to_vec()
            }

            fn step(&self, state: &[f64], joint_action: &[Vec<f64>]) -> StepResult {
                debug_assert_eq!(joint_action.len(), 2, "two-player game");
                let a1 = clamp_action(joint_action[0][0]);
                let a2 = clamp_action(joint_action[1][0]);
                let (r1, r2) = $reward(a1, a2);
                StepResult {
                    next_state: state.to_vec(),
                    rewards: vec![r1, r2],
                    terminal: true,
                }
            }
        }
    };
}

differential_game!(
    /// Zero Sum: r1 = -r2 = 10*a1 * 10*a2. The unique saddle sits at (0, 0).
    ZeroSum,
    reward_zero_sum
);

differential_game!(
    /// Max of Two: shared reward with a suboptimal wide optimum at
    /// (-0.5, -0.5) and the global optimum 10 at (0.5, 0.5).
    MaxTwo,
    reward_max_two
);

/// Cooperative-style n-player single-state game used to exercise graphs with
/// more than two agents: each agent is rewarded for matching the average of
/// the others' actions. Registered programmatically, not by CLI name.
#[derive(Debug)]
pub struct QuadraticConsensus {
    spec: GameSpec,
}

impl QuadraticConsensus {
    pub fn new(n_agents: usize) -> Self {
        assert!(n_agents >= 2);
        QuadraticConsensus {
            spec: GameSpec {
                n_agents,
                state_dim: 2,
                action_dims: vec![1; n_agents],
                gamma: 0.99,
                max_episode_len: 1,
            },
        }
    }
}

impl MarkovGame for QuadraticConsensus {
    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn reset(&self, _seed: u64) -> Vec<f64> {
        DIFFERENTIAL_STATE.to_vec()
    }

    fn step(&self, state: &[f64], joint_action: &[Vec<f64>]) -> StepResult {
        let n = self.spec.n_agents;
        let actions: Vec<f64> = (0..n).map(|i| clamp_action(joint_action[i][0])).collect();
        let total: f64 = actions.iter().sum();
        let rewards = actions
            .iter()
            .map(|&a| {
                let others = (total - a) / (n as f64 - 1.0);
                -(a - others).powi(2)
            })
            .collect();
        StepResult { next_state: state.to_vec(), rewards, terminal: true }
    }
}

/// CLI-visible environment names.
pub const ENV_NAMES: [&str; 2] = ["zero_sum", "max_two"];

/// Build a built-in game by its CLI name.
pub fn by_name(name: &str) -> Option<Box<dyn MarkovGame>> {
    match name {
        "zero_sum" => Some(Box::new(ZeroSum::new())),
        "max_two" => Some(Box::new(MaxTwo::new())),
        _ => None,
    }
}
