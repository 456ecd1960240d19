use crate::autodiff::{AutodiffError, Tape, Tensor};
use crate::nets::PolicySample;

use super::{AgentBundle, NoiseProvider};

/// Graph over central actors: one node per agent, messages are sampled
/// actions. Undirected and fully connected by default; a sparser adjacency
/// restricts whose actions each agent conditions on. Neighbor lists are kept
/// in ascending agent order, which fixes every concatenation order.
#[derive(Debug, Clone)]
pub struct ReasoningGraph {
    neighbors: Vec<Vec<usize>>,
}

impl ReasoningGraph {
    pub fn fully_connected(n_agents: usize) -> Self {
        ReasoningGraph {
            neighbors: (0..n_agents)
                .map(|i| (0..n_agents).filter(|j| *j != i).collect())
                .collect(),
        }
    }

    /// Build from a boolean adjacency matrix; self-loops are ignored.
    pub fn from_adjacency(adjacency: &[Vec<bool>]) -> Self {
        ReasoningGraph {
            neighbors: adjacency
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter().enumerate().filter(|(j, on)| **on && *j != i).map(|(j, _)| j).collect()
                })
                .collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighbors[agent]
    }
}

/// Level-0 actions: one reparameterized sample from each agent's own policy
/// at the given states.
pub fn level0_actions(
    tape: &mut Tape,
    bundles: &[AgentBundle],
    state: &Tensor,
    noise: &mut dyn NoiseProvider,
) -> Result<Vec<PolicySample>, AutodiffError> {
    let rows = state.shape()[0];
    bundles
        .iter()
        .map(|b| {
            let z = noise.normal(rows, b.policy.action_dim);
            b.policy.sample(tape, state, &z)
        })
        .collect()
}

/// Raise the recursion level k times: at each level every agent's central
/// actor responds once to the concatenation of its neighbors' previous-level
/// actions, and that response is shared by everyone who needs it. Returns
/// the level-k actions plus the number of central-actor forward calls, which
/// is exactly n_agents * k.
///
/// Messages are the central actors' most-likely responses: a best response
/// given everyone else's action can be deterministic, and the mode carries
/// the learned response structure long before the response distribution
/// itself narrows.
///
/// With k = 0 the level-0 actions come back unchanged.
pub fn message_pass(
    tape: &mut Tape,
    graph: &ReasoningGraph,
    bundles: &[AgentBundle],
    state: &Tensor,
    level0: &[Tensor],
    k: usize,
) -> Result<(Vec<Tensor>, usize), AutodiffError> {
    let mut current: Vec<Tensor> = level0.to_vec();
    let mut evals = 0usize;
    for _level in 0..k {
        let mut next = Vec::with_capacity(bundles.len());
        for (i, bundle) in bundles.iter().enumerate() {
            let neighbor_actions: Vec<&Tensor> =
                graph.neighbors(i).iter().map(|j| &current[*j]).collect();
            let aggregated = tape.concat(&neighbor_actions)?;
            let response = bundle.central_actor().most_likely(tape, state, &aggregated)?;
            evals += 1;
            next.push(response);
        }
        current = next;
    }
    Ok((current, evals))
}

/// One full forward pass of the reasoning graph: level-0 samples from every
/// policy plus k message-passing levels, all on one tape.
pub struct GraphPass {
    /// Level-0 policy samples (actions and log-probabilities), per agent.
    /// Each agent's own slot in its policy objective reuses this sample, so
    /// the opponents' recursive responses stay correlated with it.
    pub level0: Vec<PolicySample>,
    /// Level-k actions, per agent.
    pub level_k: Vec<Tensor>,
    /// Central-actor forward calls consumed (n_agents * k).
    pub central_evals: usize,
}

/// Level-0 sampling plus k message-passing levels on one tape, end to end.
/// Used directly by the flow-through policy loss; the detached path runs it
/// on a scratch tape, keeps the level-0 noise, and detaches the outputs.
pub fn recursive_actions_on_tape(
    tape: &mut Tape,
    graph: &ReasoningGraph,
    bundles: &[AgentBundle],
    state: &Tensor,
    k: usize,
    noise: &mut dyn NoiseProvider,
) -> Result<GraphPass, AutodiffError> {
    let level0 = level0_actions(tape, bundles, state, noise)?;
    let seeds: Vec<Tensor> = level0.iter().map(|s| s.action.clone()).collect();
    let (level_k, central_evals) = message_pass(tape, graph, bundles, state, &seeds, k)?;
    Ok(GraphPass { level0, level_k, central_evals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marl::{normal_batch, RngNoise};
    use crate::nets::Activation;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    fn bundles(n: usize, seed: u64) -> Vec<AgentBundle> {
        let mut rng = SmallRng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                AgentBundle::init(
                    i,
                    2,
                    &vec![1; n],
                    &[8, 8],
                    Activation::Tanh,
                    false,
                    1e-4,
                    1e-3,
                    None,
                    1.0,
                    &mut rng,
                )
            })
            .collect()
    }

    fn state(rows: usize) -> Tensor {
        Tensor::from_vec(vec![rows, 2], vec![1.0; rows * 2]).unwrap()
    }

    #[test]
    fn fully_connected_neighbors_are_ascending_without_self() {
        let g = ReasoningGraph::fully_connected(4);
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
        assert_eq!(g.neighbors(2), &[0, 1, 3]);
    }

    #[test]
    fn level_zero_pass_is_identity() {
        let bs = bundles(2, 0);
        let g = ReasoningGraph::fully_connected(2);
        let s = state(3);
        let mut tape = Tape::new();
        let mut rng = SmallRng::seed_from_u64(1);
        let mut noise = RngNoise(&mut rng);
        let level0: Vec<Tensor> = level0_actions(&mut tape, &bs, &s, &mut noise)
            .unwrap()
            .into_iter()
            .map(|p| p.action)
            .collect();
        let (out, evals) = message_pass(&mut tape, &g, &bs, &s, &level0, 0).unwrap();
        assert_eq!(evals, 0);
        for (a, b) in out.iter().zip(&level0) {
            assert!(a.same_storage(b));
        }
    }

    #[test]
    fn level0_with_zero_noise_is_tanh_mu_with_right_dims() {
        let bs = bundles(3, 2);
        let s = state(4);
        let mut tape = Tape::new();
        let zero = Tensor::from_vec(vec![4, 1], vec![0.0; 4]).unwrap();
        let mut noise = crate::marl::FixedNoise::new(vec![zero.clone(), zero.clone(), zero]);
        let samples = level0_actions(&mut tape, &bs, &s, &mut noise).unwrap();
        for (b, sample) in bs.iter().zip(&samples) {
            assert_eq!(sample.action.shape(), vec![4, 1]);
            let mut t = Tape::new();
            let ml = b.policy.most_likely(&mut t, &s).unwrap();
            assert_eq!(sample.action.values(), ml.values());
        }
    }

    #[test]
    fn two_agent_level_one_matches_direct_central_actor_calls() {
        let bs = bundles(2, 3);
        let g = ReasoningGraph::fully_connected(2);
        let s = state(2);
        let mut rng = SmallRng::seed_from_u64(7);
        let l0 = vec![normal_batch(&mut rng, 2, 1), normal_batch(&mut rng, 2, 1)];

        let mut tape = Tape::new();
        let (out, evals) = message_pass(&mut tape, &g, &bs, &s, &l0, 1).unwrap();
        assert_eq!(evals, 2);

        // a^{1,(1)} = pi^1_c(s, a^{2,(0)}), a^{2,(1)} = pi^2_c(s, a^{1,(0)}).
        let mut t = Tape::new();
        let direct0 = bs[0].central_actor().most_likely(&mut t, &s, &l0[1]).unwrap();
        let direct1 = bs[1].central_actor().most_likely(&mut t, &s, &l0[0]).unwrap();
        assert_eq!(out[0].values(), direct0.values());
        assert_eq!(out[1].values(), direct1.values());
    }

    #[test]
    fn central_actor_evaluations_scale_as_agents_times_levels() {
        for (n, k) in [(2usize, 1usize), (3, 2), (4, 2)] {
            let bs = bundles(n, 10 + n as u64);
            let g = ReasoningGraph::fully_connected(n);
            let s = state(5);
            let mut rng = SmallRng::seed_from_u64(n as u64);
            let mut noise = RngNoise(&mut rng);
            let mut tape = Tape::new();
            let pass = recursive_actions_on_tape(&mut tape, &g, &bs, &s, k, &mut noise).unwrap();
            assert_eq!(pass.central_evals, n * k, "n = {n}, k = {k}");
        }
    }

    #[test]
    fn level0_sampling_matches_policy_distribution_by_ks_test() {
        let bs = bundles(2, 11);
        let s = state(10_000);
        let mut rng = SmallRng::seed_from_u64(99);
        let mut noise = RngNoise(&mut rng);
        let mut tape = Tape::new();
        let samples = level0_actions(&mut tape, &bs, &s, &mut noise).unwrap();

        // Compare the empirical CDF of agent 0's samples against the policy's
        // analytic CDF Phi((atanh(a) - mu) / sigma).
        let mut t = Tape::new();
        let one_row = Tensor::from_vec(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let (mu_t, ls_t) = bs[0].policy.distribution_params(&mut t, &one_row).unwrap();
        let (mu, sigma) = (mu_t.values()[0], ls_t.values()[0].exp());

        let mut actions = samples[0].action.values();
        actions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = actions.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, a) in actions.iter().enumerate() {
            let z = (a.atanh() - mu) / sigma;
            let cdf = 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
            let emp_hi = (i + 1) as f64 / n;
            let emp_lo = i as f64 / n;
            ks = ks.max((cdf - emp_hi).abs()).max((cdf - emp_lo).abs());
        }
        // Kolmogorov-Smirnov critical value at significance 0.01.
        let critical = 1.63 / n.sqrt();
        assert!(ks < critical, "KS statistic {ks} over critical {critical}");
    }

    /// Abramowitz-Stegun 7.1.26 approximation, |error| < 1.5e-7: plenty for
    /// a KS test with critical value ~0.016.
    fn erf(x: f64) -> f64 {
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let x = x.abs();
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
                + 0.254829592)
                * t
                * (-x * x).exp();
        sign * y
    }
}
