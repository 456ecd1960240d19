//! Independent verification machinery: brute-force best responses over
//! action grids, response-map extraction for trained central actors,
//! trajectory metrics (oscillation counts, convergence error), and an
//! executable contraction check for the recursive value-iteration operator
//! on cooperative tabular games.
//!
//! Everything here is deliberately dumb and direct so it can serve as an
//! oracle against the learned components.

use rand::Rng;

use crate::autodiff::{AutodiffError, Tape, Tensor};
use crate::nets::CentralActor;

/// Uniform grid over one action dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    /// Odd and at least 3, so 0 is always a grid point on [-1, 1].
    pub points: usize,
}

impl GridSpec {
    /// Grid over [-1, 1] with an odd number of points.
    pub fn symmetric(points: usize) -> Self {
        assert!(points >= 3 && points % 2 == 1, "grid needs an odd point count >= 3");
        GridSpec { lo: -1.0, hi: 1.0, points }
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }

    /// Spacing between adjacent grid points.
    pub fn cell(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::symmetric(41)
    }
}

/// Exhaustive grid argmax of `value_fn` over one agent's scalar action,
/// holding the state and the opponents' actions fixed. Ties break toward the
/// smallest action, so a constant function returns the grid's low end.
pub fn brute_force_best_response(
    value_fn: &dyn Fn(&[f64], f64, &[f64]) -> f64,
    state: &[f64],
    opponent_actions: &[f64],
    grid: &GridSpec,
) -> f64 {
    let mut best_action = grid.lo;
    let mut best_value = f64::NEG_INFINITY;
    for a in grid.values() {
        let v = value_fn(state, a, opponent_actions);
        if v > best_value {
            best_value = v;
            best_action = a;
        }
    }
    best_action
}

/// Most-likely central-actor response across a grid of scalar opponent
/// actions (two-player games). Returns (opponent action, response) pairs.
pub fn response_map(
    actor: &CentralActor,
    state: &[f64],
    grid: &GridSpec,
) -> Result<Vec<(f64, f64)>, AutodiffError> {
    let opponent = grid.values();
    let rows = opponent.len();
    let mut s = Vec::with_capacity(rows * state.len());
    for _ in 0..rows {
        s.extend_from_slice(state);
    }
    let mut tape = Tape::inference();
    let s = Tensor::from_vec(vec![rows, state.len()], s)?;
    let opp = Tensor::from_vec(vec![rows, 1], opponent.clone())?;
    let response = actor.most_likely(&mut tape, &s, &opp)?;
    Ok(opponent.into_iter().zip(response.values()).collect())
}

/// Most-likely joint actions recorded over training, one entry per epoch:
/// `entries[t][agent][dim]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub entries: Vec<Vec<Vec<f64>>>,
}

impl TrajectoryLog {
    pub fn push(&mut self, joint_action: Vec<Vec<f64>>) {
        self.entries.push(joint_action);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One agent's scalar series along a fixed action dimension.
    pub fn series(&self, agent: usize, dim: usize) -> Vec<f64> {
        self.entries.iter().map(|e| e[agent][dim]).collect()
    }
}

/// Number of band crossings (from above `hi` to below `lo` or back) within
/// the final `window` entries of a scalar series. Values in the middle band
/// do not change state, so slow drifts count once and oscillations count
/// once per swing.
pub fn oscillation_score(series: &[f64], lo: f64, hi: f64, window: usize) -> usize {
    assert!(lo < hi, "bands must be ordered");
    assert!(window <= series.len(), "window exceeds series length");
    let tail = &series[series.len() - window..];
    #[derive(Clone, Copy, PartialEq)]
    enum Band {
        Low,
        High,
    }
    let mut state: Option<Band> = None;
    let mut crossings = 0usize;
    for &x in tail {
        let here = if x > hi {
            Some(Band::High)
        } else if x < lo {
            Some(Band::Low)
        } else {
            None
        };
        if let Some(b) = here {
            if let Some(prev) = state {
                if prev != b {
                    crossings += 1;
                }
            }
            state = Some(b);
        }
    }
    crossings
}

/// Max L-infinity distance between the logged joint action and a target
/// joint action over the final `tail` entries. The target is flattened in
/// agent order.
pub fn convergence_error(log: &TrajectoryLog, target: &[f64], tail: usize) -> f64 {
    assert!(tail <= log.len(), "tail exceeds log length");
    log.entries[log.len() - tail..]
        .iter()
        .map(|joint| {
            joint
                .iter()
                .flatten()
                .zip(target)
                .map(|(a, t)| (a - t).abs())
                .fold(0.0f64, f64::max)
        })
        .fold(0.0f64, f64::max)
}

/// Finite cooperative two-player game with a fixed stochastic policy for
/// agent 1, used to check the recursive value-iteration operator directly.
#[derive(Debug, Clone)]
pub struct TabularGame {
    pub n_states: usize,
    pub n_actions_1: usize,
    pub n_actions_2: usize,
    /// Shared reward, indexed [s][a1][a2].
    pub reward: Vec<f64>,
    /// Deterministic transition, indexed [s][a1][a2].
    pub next_state: Vec<usize>,
    /// Fixed stochastic policy for agent 1, indexed [s][a1], rows sum to 1.
    pub policy_1: Vec<f64>,
    /// Fixed temperature for the entropy term.
    pub alpha: f64,
}

impl TabularGame {
    pub fn random(
        n_states: usize,
        n_actions_1: usize,
        n_actions_2: usize,
        alpha: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let cells = n_states * n_actions_1 * n_actions_2;
        let reward = (0..cells).map(|_| rng.random_range(-1.0..1.0)).collect();
        let next_state = (0..cells).map(|_| rng.random_range(0..n_states)).collect();
        let mut policy_1 = Vec::with_capacity(n_states * n_actions_1);
        for _ in 0..n_states {
            let raw: Vec<f64> = (0..n_actions_1).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            policy_1.extend(raw.into_iter().map(|p| p / total));
        }
        TabularGame { n_states, n_actions_1, n_actions_2, reward, next_state, policy_1, alpha }
    }

    fn idx(&self, s: usize, a1: usize, a2: usize) -> usize {
        (s * self.n_actions_1 + a1) * self.n_actions_2 + a2
    }

    pub fn q_len(&self) -> usize {
        self.n_states * self.n_actions_1 * self.n_actions_2
    }

    /// The level-1 recursive value-iteration operator for cooperative games:
    /// (Gamma Q)(s, a1, a2) = r(s, a1, a2)
    ///   + gamma * sum_{a1'} pi_1(a1'|s') * [ max_{a2'} Q(s', a1', a2')
    ///                                        - alpha * ln pi_1(a1'|s') ].
    pub fn apply_operator(&self, gamma: f64, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.q_len());
        let mut out = vec![0.0; q.len()];
        for s in 0..self.n_states {
            for a1 in 0..self.n_actions_1 {
                for a2 in 0..self.n_actions_2 {
                    let cell = self.idx(s, a1, a2);
                    let sp = self.next_state[cell];
                    let mut value = 0.0;
                    for a1p in 0..self.n_actions_1 {
                        let p = self.policy_1[sp * self.n_actions_1 + a1p];
                        let mut best = f64::NEG_INFINITY;
                        for a2p in 0..self.n_actions_2 {
                            best = best.max(q[self.idx(sp, a1p, a2p)]);
                        }
                        value += p * (best - self.alpha * p.ln());
                    }
                    out[cell] = self.reward[cell] + gamma * value;
                }
            }
        }
        out
    }
}

fn sup_norm_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Max over random Q-table pairs of
/// ||Gamma Q1 - Gamma Q2||_inf / ||Q1 - Q2||_inf.
/// The operator is a gamma-contraction, so the result never exceeds gamma
/// (up to rounding). Identical pairs (zero denominator) are redrawn.
pub fn contraction_check(
    game: &TabularGame,
    gamma: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut done = 0usize;
    while done < trials {
        let q1: Vec<f64> = (0..game.q_len()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let q2: Vec<f64> = (0..game.q_len()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let denom = sup_norm_distance(&q1, &q2);
        if denom == 0.0 {
            continue;
        }
        let num = sup_norm_distance(&game.apply_operator(gamma, &q1), &game.apply_operator(gamma, &q2));
        worst = worst.max(num / denom);
        done += 1;
    }
    worst
}

/// Ratio for one specific pair; used for the constant-shift identity, where
/// the ratio equals gamma exactly (shift passes through max and expectation).
pub fn contraction_ratio(game: &TabularGame, gamma: f64, q1: &[f64], q2: &[f64]) -> f64 {
    let denom = sup_norm_distance(q1, q2);
    assert!(denom > 0.0, "identical tables have no ratio");
    sup_norm_distance(&game.apply_operator(gamma, q1), &game.apply_operator(gamma, q2)) / denom
}
