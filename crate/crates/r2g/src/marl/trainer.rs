use rand::RngCore;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor};
use crate::envs::MarkovGame;
use crate::harness::seeding::seed_streams;
use crate::nets::{soft_update, Checkpoint};
use crate::replay::{ReplayBuffer, ReplayError, Transition};

use super::bundle::{AgentBundle, MaddpgBundle};
use super::graph::{recursive_actions_on_tape, ReasoningGraph};
use super::{normal_batch, opponent_order, Algorithm, GradFlowMode, RngNoise, TrainerConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// Per-epoch record: exploration returns, mean losses, temperatures, and the
/// most-likely joint action used for trajectory logging.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean episode return per agent over the episodes finished this epoch.
    pub mean_return: Vec<f64>,
    pub policy_loss: Vec<f64>,
    pub critic_loss: Vec<f64>,
    /// Zero for variants without central actors.
    pub central_loss: Vec<f64>,
    /// Zero for MADDPG (no temperature).
    pub alpha: Vec<f64>,
    /// Deterministic evaluation action per agent at the initial state.
    pub most_likely: Vec<Vec<f64>>,
}

enum Agents {
    /// The recursive algorithm and its level-0 / independent special cases.
    SacFamily { bundles: Vec<AgentBundle>, independent: bool },
    Maddpg(Vec<MaddpgBundle>),
}

struct Batch {
    state: Tensor,
    next_state: Tensor,
    /// Per agent, [B x d_i].
    actions: Vec<Tensor>,
    /// Per agent, length B.
    rewards: Vec<Vec<f64>>,
    /// Length B, 1.0 where terminal.
    terminals: Vec<f64>,
}

struct LossAccum {
    policy: Vec<f64>,
    critic: Vec<f64>,
    central: Vec<f64>,
}

impl LossAccum {
    fn new(n: usize) -> Self {
        LossAccum { policy: vec![0.0; n], critic: vec![0.0; n], central: vec![0.0; n] }
    }

    fn mean(mut self, iters: usize) -> Self {
        if iters > 0 {
            let d = iters as f64;
            for v in self.policy.iter_mut().chain(&mut self.critic).chain(&mut self.central) {
                *v /= d;
            }
        }
        self
    }
}

/// One full training run over a Markov game. Construction is deterministic
/// given the config (the master seed fans out into init / explore / batch /
/// reparam streams), and so is everything the trainer produces.
pub struct Trainer {
    env: Box<dyn MarkovGame>,
    config: TrainerConfig,
    k: usize,
    agents: Agents,
    graph: ReasoningGraph,
    buffer: ReplayBuffer,
    rng_explore: ChaCha12Rng,
    rng_batch: ChaCha12Rng,
    rng_reparam: ChaCha12Rng,
    central_evals: u64,
    epoch: usize,
    live_state: Option<Vec<f64>>,
    steps_in_episode: usize,
    episode_return: Vec<f64>,
}

impl Trainer {
    pub fn new(env: Box<dyn MarkovGame>, config: TrainerConfig) -> Result<Self, TrainError> {
        let spec = env.spec().clone();
        let n = spec.n_agents;
        let streams = seed_streams(config.seed);
        let mut init = streams.init;

        let agents = match config.algorithm {
            Algorithm::R2g | Algorithm::Masac | Algorithm::Sac => {
                let independent = config.algorithm == Algorithm::Sac;
                let bundles = (0..n)
                    .map(|i| {
                        AgentBundle::init(
                            i,
                            spec.state_dim,
                            &spec.action_dims,
                            &config.hidden,
                            config.activation,
                            independent,
                            config.lr_policy,
                            config.lr_critic,
                            config.target_entropy,
                            config.initial_alpha,
                            &mut init,
                        )
                    })
                    .collect();
                Agents::SacFamily { bundles, independent }
            }
            Algorithm::Maddpg => Agents::Maddpg(
                (0..n)
                    .map(|i| {
                        MaddpgBundle::init(
                            i,
                            spec.state_dim,
                            &spec.action_dims,
                            &config.hidden,
                            config.activation,
                            config.lr_policy,
                            config.lr_critic,
                            &mut init,
                        )
                    })
                    .collect(),
            ),
        };

        let k = config.effective_k();
        Ok(Trainer {
            agents,
            graph: ReasoningGraph::fully_connected(n),
            buffer: ReplayBuffer::new(config.replay_capacity, n),
            rng_explore: streams.explore,
            rng_batch: streams.batch,
            rng_reparam: streams.reparam,
            central_evals: 0,
            epoch: 0,
            live_state: None,
            steps_in_episode: 0,
            episode_return: vec![0.0; n],
            env,
            config,
            k,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn env(&self) -> &dyn MarkovGame {
        self.env.as_ref()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Cumulative central-actor forward calls inside message passing.
    pub fn central_actor_evals(&self) -> u64 {
        self.central_evals
    }

    pub fn reset_central_actor_evals(&mut self) {
        self.central_evals = 0;
    }

    /// SAC-family bundles, if this run has them.
    pub fn bundles(&self) -> Option<&[AgentBundle]> {
        match &self.agents {
            Agents::SacFamily { bundles, .. } => Some(bundles),
            Agents::Maddpg(_) => None,
        }
    }

    pub fn graph(&self) -> &ReasoningGraph {
        &self.graph
    }

    /// Collect one epoch of exploration, then run the configured number of
    /// minibatch updates; every agent is updated once per iteration in the
    /// order policy, temperature, central actor, critic, target update.
    pub fn train_epoch(&mut self) -> Result<EpochMetrics, TrainError> {
        let n = self.env.spec().n_agents;
        let finished_returns = self.explore()?;

        // Updates wait until the warmup exploration is banked.
        let iters = if self.buffer.len() < self.config.warmup_steps.max(1) {
            0
        } else {
            self.config.train_iters_per_epoch
        };
        let mut accum = LossAccum::new(n);
        for _ in 0..iters {
            let idxs = self.buffer.sample_indices(self.config.batch_size, &mut self.rng_batch)?;
            let batch = self.assemble(&idxs);
            let gamma = self.config.gamma;
            let tau = self.config.tau;
            let grad_flow = self.config.grad_flow;
            let k = self.k;
            match &mut self.agents {
                Agents::SacFamily { bundles, independent } => update_sac_family(
                    bundles,
                    *independent,
                    &self.graph,
                    k,
                    grad_flow,
                    gamma,
                    tau,
                    &batch,
                    &mut self.rng_reparam,
                    &mut self.central_evals,
                    &mut accum,
                )?,
                Agents::Maddpg(bundles) => {
                    update_maddpg(bundles, gamma, tau, &batch, &mut accum)?
                }
            }
        }
        let accum = accum.mean(iters);

        let mean_return = finished_returns;
        let alpha = match &self.agents {
            Agents::SacFamily { bundles, .. } => bundles.iter().map(|b| b.alpha()).collect(),
            Agents::Maddpg(b) => vec![0.0; b.len()],
        };
        let metrics = EpochMetrics {
            epoch: self.epoch,
            mean_return,
            policy_loss: accum.policy,
            critic_loss: accum.critic,
            central_loss: accum.central,
            alpha,
            most_likely: self.most_likely_joint_action(),
        };
        self.epoch += 1;
        Ok(metrics)
    }

    /// Deterministic evaluation actions of every agent at the environment's
    /// initial state.
    pub fn most_likely_joint_action(&self) -> Vec<Vec<f64>> {
        let state = self.env.reset(0);
        let s = Tensor::from_vec(vec![1, state.len()], state).expect("consistent");
        match &self.agents {
            Agents::SacFamily { bundles, .. } => bundles
                .iter()
                .map(|b| {
                    let mut tape = Tape::inference();
                    b.policy.most_likely(&mut tape, &s).expect("consistent dims").values()
                })
                .collect(),
            Agents::Maddpg(bundles) => bundles
                .iter()
                .map(|b| {
                    let mut tape = Tape::inference();
                    b.action(&mut tape, &s).expect("consistent dims").values()
                })
                .collect(),
        }
    }

    fn explore(&mut self) -> Result<Vec<f64>, TrainError> {
        let n = self.env.spec().n_agents;
        let max_len = self.env.spec().max_episode_len;
        let mut finished: Vec<Vec<f64>> = Vec::new();

        for _ in 0..self.config.steps_per_epoch {
            if self.live_state.is_none() {
                let seed = self.rng_explore.next_u64();
                self.live_state = Some(self.env.reset(seed));
                self.steps_in_episode = 0;
                self.episode_return = vec![0.0; n];
            }
            let state = self.live_state.clone().expect("just ensured");
            let s_row =
                Tensor::from_vec(vec![1, state.len()], state.clone()).expect("consistent");

            let actions: Vec<Vec<f64>> = match &mut self.agents {
                Agents::SacFamily { bundles, .. } => bundles
                    .iter()
                    .map(|b| {
                        let z = normal_batch(&mut self.rng_explore, 1, b.policy.action_dim);
                        let mut tape = Tape::inference();
                        let sample =
                            b.policy.sample(&mut tape, &s_row, &z).expect("consistent dims");
                        sample.action.values()
                    })
                    .collect(),
                Agents::Maddpg(bundles) => bundles
                    .iter_mut()
                    .map(|b| {
                        let mut tape = Tape::inference();
                        let det = b.action(&mut tape, &s_row).expect("consistent dims").values();
                        let noise = b.ou_next(&mut self.rng_explore);
                        det.iter()
                            .zip(&noise)
                            .map(|(a, z)| (a + z).clamp(-1.0, 1.0))
                            .collect()
                    })
                    .collect(),
            };

            let result = self.env.step(&state, &actions);
            self.steps_in_episode += 1;
            for (acc, r) in self.episode_return.iter_mut().zip(&result.rewards) {
                *acc += r;
            }
            self.buffer.push(Transition {
                state,
                actions,
                rewards: result.rewards.clone(),
                next_state: result.next_state.clone(),
                terminal: result.terminal,
            })?;

            if result.terminal || self.steps_in_episode >= max_len {
                finished.push(std::mem::take(&mut self.episode_return));
                self.live_state = None;
            } else {
                self.live_state = Some(result.next_state);
            }
        }

        // Mean return per agent over finished episodes (NaN if none ended).
        let count = finished.len() as f64;
        Ok((0..n)
            .map(|i| finished.iter().map(|ep| ep[i]).sum::<f64>() / count)
            .collect())
    }

    fn assemble(&self, idxs: &[usize]) -> Batch {
        let spec = self.env.spec();
        let (n, sd) = (spec.n_agents, spec.state_dim);
        let b = idxs.len();
        let mut s = Vec::with_capacity(b * sd);
        let mut s_next = Vec::with_capacity(b * sd);
        let mut actions: Vec<Vec<f64>> =
            (0..n).map(|i| Vec::with_capacity(b * spec.action_dims[i])).collect();
        let mut rewards: Vec<Vec<f64>> = vec![Vec::with_capacity(b); n];
        let mut terminals = Vec::with_capacity(b);
        for &ix in idxs {
            let t = self.buffer.get(ix);
            s.extend_from_slice(&t.state);
            s_next.extend_from_slice(&t.next_state);
            for i in 0..n {
                actions[i].extend_from_slice(&t.actions[i]);
                rewards[i].push(t.rewards[i]);
            }
            terminals.push(if t.terminal { 1.0 } else { 0.0 });
        }
        Batch {
            state: Tensor::from_vec(vec![b, sd], s).expect("consistent"),
            next_state: Tensor::from_vec(vec![b, sd], s_next).expect("consistent"),
            actions: (0..n)
                .map(|i| {
                    Tensor::from_vec(vec![b, spec.action_dims[i]], std::mem::take(&mut actions[i]))
                        .expect("consistent")
                })
                .collect(),
            rewards,
            terminals,
        }
    }

    /// All learnable parameters, named, plus the architecture metadata needed
    /// to rebuild the networks.
    pub fn checkpoint(&self) -> Checkpoint {
        let spec = self.env.spec();
        let mut ck = Checkpoint::default();
        ck.meta.insert("algo".into(), self.config.algorithm.name().into());
        ck.meta.insert("k".into(), self.k.to_string());
        ck.meta.insert("n_agents".into(), spec.n_agents.to_string());
        ck.meta.insert("state_dim".into(), spec.state_dim.to_string());
        ck.meta.insert(
            "action_dims".into(),
            spec.action_dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        );
        ck.meta.insert("activation".into(), self.config.activation.name().into());
        ck.meta.insert(
            "hidden".into(),
            self.config.hidden.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        );
        match &self.agents {
            Agents::SacFamily { bundles, .. } => {
                for (i, b) in bundles.iter().enumerate() {
                    crate::nets::push_policy(&mut ck, &format!("agent{i}/policy"), &b.policy);
                    crate::nets::push_mlp(&mut ck, &format!("agent{i}/critic"), &b.critic.net);
                    crate::nets::push_mlp(
                        &mut ck,
                        &format!("agent{i}/target_critic"),
                        &b.target_critic.net,
                    );
                    if let Some(ca) = &b.central_actor {
                        crate::nets::push_policy(
                            &mut ck,
                            &format!("agent{i}/central"),
                            &ca.policy,
                        );
                    }
                    ck.push_tensor(&format!("agent{i}/log_alpha"), &b.log_alpha);
                }
            }
            Agents::Maddpg(bundles) => {
                for (i, b) in bundles.iter().enumerate() {
                    crate::nets::push_mlp(&mut ck, &format!("agent{i}/policy"), &b.policy);
                    crate::nets::push_mlp(
                        &mut ck,
                        &format!("agent{i}/target_policy"),
                        &b.target_policy,
                    );
                    crate::nets::push_mlp(&mut ck, &format!("agent{i}/critic"), &b.critic.net);
                    crate::nets::push_mlp(
                        &mut ck,
                        &format!("agent{i}/target_critic"),
                        &b.target_critic.net,
                    );
                }
            }
        }
        ck
    }
}

fn zero_all(bundles: &[AgentBundle]) {
    for b in bundles {
        b.zero_all_grads();
    }
}

/// One shared recursion pass, precomputed per batch: the level-0 noise that
/// seeded it (so each agent's loss can reproduce its own sample, gradients
/// attached) and the detached level-k actions.
struct SharedRecursion {
    level0_noise: Vec<Tensor>,
    level_k: Vec<Tensor>,
}

/// Detached level-k actions for all agents at `state` (scratch tape).
fn detached_recursion(
    graph: &ReasoningGraph,
    bundles: &[AgentBundle],
    state: &Tensor,
    k: usize,
    rng: &mut ChaCha12Rng,
    central_evals: &mut u64,
) -> Result<SharedRecursion, AutodiffError> {
    let rows = state.shape()[0];
    let level0_noise: Vec<Tensor> = bundles
        .iter()
        .map(|b| normal_batch(rng, rows, b.policy.action_dim))
        .collect();
    let mut scratch = Tape::inference();
    let level0: Vec<Tensor> = bundles
        .iter()
        .zip(&level0_noise)
        .map(|(b, z)| b.policy.sample(&mut scratch, state, z).map(|s| s.action))
        .collect::<Result<_, _>>()?;
    let (level_k, evals) =
        super::graph::message_pass(&mut scratch, graph, bundles, state, &level0, k)?;
    *central_evals += evals as u64;
    Ok(SharedRecursion {
        level0_noise,
        level_k: level_k.iter().map(Tensor::detach).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn update_sac_family(
    bundles: &mut [AgentBundle],
    independent: bool,
    graph: &ReasoningGraph,
    k: usize,
    grad_flow: GradFlowMode,
    gamma: f64,
    tau: f64,
    batch: &Batch,
    rng: &mut ChaCha12Rng,
    central_evals: &mut u64,
    accum: &mut LossAccum,
) -> Result<(), TrainError> {
    let n = bundles.len();
    let rows = batch.terminals.len();

    // Recursive actions are computed once per batch and shared across the
    // agent loop; targets always use the detached next-state recursion.
    let rec_s = if independent || grad_flow == GradFlowMode::FlowThrough {
        None
    } else {
        Some(detached_recursion(graph, bundles, &batch.state, k, rng, central_evals)?)
    };
    let rec_next = if independent {
        None
    } else {
        Some(detached_recursion(graph, bundles, &batch.next_state, k, rng, central_evals)?)
    };

    for i in 0..n {
        let opp_idx = opponent_order(n, i);

        // Policy update. The agent's own level-0 action is the one that
        // seeded the shared recursion (same noise, re-sampled on the loss
        // tape so gradients attach), keeping own action and opponents'
        // responses correlated row by row.
        zero_all(bundles);
        let mut tape = Tape::new();
        let alpha = bundles[i].alpha();
        let (loss, log_prob) = match (&rec_s, grad_flow) {
            (Some(rec), _) => {
                let opp: Vec<&Tensor> = opp_idx.iter().map(|j| &rec.level_k[*j]).collect();
                bundles[i].policy_loss(
                    &mut tape,
                    &batch.state,
                    &opp,
                    &rec.level0_noise[i],
                    alpha,
                )?
            }
            (None, _) if independent => {
                let own_noise = normal_batch(rng, rows, bundles[i].policy.action_dim);
                bundles[i].policy_loss(&mut tape, &batch.state, &[], &own_noise, alpha)?
            }
            (None, _) => {
                // Flow-through: rebuild the recursion on the loss tape so
                // gradients reach the level-0 samples; central actors stay
                // frozen because only the policy optimizer steps below.
                let mut noise = RngNoise(rng);
                let pass = recursive_actions_on_tape(
                    &mut tape,
                    graph,
                    bundles,
                    &batch.state,
                    k,
                    &mut noise,
                )?;
                *central_evals += pass.central_evals as u64;
                let opp: Vec<&Tensor> = opp_idx.iter().map(|j| &pass.level_k[*j]).collect();
                bundles[i].policy_loss_with_sample(
                    &mut tape,
                    &batch.state,
                    &pass.level0[i],
                    &opp,
                    alpha,
                )?
            }
        };
        tape.backward(&loss)?;
        accum.policy[i] += loss.scalar_value();
        let log_probs = log_prob.values();
        bundles[i].step_policy()?;

        // Temperature update from the same fresh samples.
        zero_all(bundles);
        let mut tape = Tape::new();
        let t_loss = bundles[i].temperature_loss(&mut tape, &log_probs)?;
        tape.backward(&t_loss)?;
        bundles[i].step_alpha()?;

        // Central actor update against replayed opponent actions.
        if !independent {
            zero_all(bundles);
            let mut tape = Tape::new();
            let opp_cols: Vec<&Tensor> = opp_idx.iter().map(|j| &batch.actions[*j]).collect();
            let opp_concat = tape.concat(&opp_cols)?;
            let ca_noise = normal_batch(rng, rows, bundles[i].policy.action_dim);
            let alpha = bundles[i].alpha();
            let loss = bundles[i].central_actor_loss(
                &mut tape,
                &batch.state,
                &opp_concat,
                &ca_noise,
                alpha,
            )?;
            tape.backward(&loss)?;
            accum.central[i] += loss.scalar_value();
            bundles[i].step_central()?;
        }

        // Critic update toward the soft Bellman target. The next-state value
        // reuses the shared recursion at s': this agent's own level-0 noise
        // for its fresh action, the others' level-k responses to it.
        zero_all(bundles);
        let next_noise = match &rec_next {
            Some(rec) => rec.level0_noise[i].clone(),
            None => normal_batch(rng, rows, bundles[i].policy.action_dim),
        };
        let opp_next: Vec<&Tensor> = match &rec_next {
            Some(rec) => opp_idx.iter().map(|j| &rec.level_k[*j]).collect(),
            None => Vec::new(),
        };
        let targets = bundles[i].critic_target(
            &batch.next_state,
            &opp_next,
            &next_noise,
            &batch.rewards[i],
            &batch.terminals,
            gamma,
        )?;
        let targets = Tensor::from_vec(vec![rows, 1], targets).expect("consistent");
        let mut tape = Tape::new();
        let opp_actions: Vec<&Tensor> = if independent {
            Vec::new()
        } else {
            opp_idx.iter().map(|j| &batch.actions[*j]).collect()
        };
        let loss = bundles[i].critic_loss(
            &mut tape,
            &batch.state,
            &batch.actions[i],
            &opp_actions,
            &targets,
        )?;
        tape.backward(&loss)?;
        accum.critic[i] += loss.scalar_value();
        bundles[i].step_critic()?;

        soft_update(&bundles[i].target_critic.params(), &bundles[i].critic.params(), tau)?;
    }
    Ok(())
}

#[allow(clippy::needless_range_loop)]
fn update_maddpg(
    bundles: &mut [MaddpgBundle],
    gamma: f64,
    tau: f64,
    batch: &Batch,
    accum: &mut LossAccum,
) -> Result<(), TrainError> {
    let n = bundles.len();

    // Target-policy actions at s', computed once and shared.
    let next_actions: Vec<Tensor> = {
        let mut tape = Tape::inference();
        bundles
            .iter()
            .map(|b| b.target_action(&mut tape, &batch.next_state).map(|t| t.detach()))
            .collect::<Result<_, _>>()?
    };

    for i in 0..n {
        let opp_idx = opponent_order(n, i);

        // Policy update against replayed opponent actions.
        for b in bundles.iter() {
            b.zero_all_grads();
        }
        let mut tape = Tape::new();
        let opp: Vec<&Tensor> = opp_idx.iter().map(|j| &batch.actions[*j]).collect();
        let loss = bundles[i].policy_loss(&mut tape, &batch.state, &opp)?;
        tape.backward(&loss)?;
        accum.policy[i] += loss.scalar_value();
        bundles[i].step_policy()?;

        // Critic update.
        for b in bundles.iter() {
            b.zero_all_grads();
        }
        let opp_next: Vec<&Tensor> = opp_idx.iter().map(|j| &next_actions[*j]).collect();
        let targets = bundles[i].critic_target(
            &batch.next_state,
            &next_actions[i],
            &opp_next,
            &batch.rewards[i],
            &batch.terminals,
            gamma,
        )?;
        let rows = batch.terminals.len();
        let targets = Tensor::from_vec(vec![rows, 1], targets).expect("consistent");
        let mut tape = Tape::new();
        let loss = bundles[i].critic_loss(
            &mut tape,
            &batch.state,
            &batch.actions[i],
            &opp,
            &targets,
        )?;
        tape.backward(&loss)?;
        accum.critic[i] += loss.scalar_value();
        bundles[i].step_critic()?;

        soft_update(&bundles[i].target_critic.params(), &bundles[i].critic.params(), tau)?;
        soft_update(&bundles[i].target_policy.params(), &bundles[i].policy.params(), tau)?;
    }
    Ok(())
}
