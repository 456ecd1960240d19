use rand::Rng;

use crate::autodiff::{adam_step, AdamState, AutodiffError, Tape, Tensor};
use crate::nets::{Activation, CentralActor, CentralCritic, Mlp, SquashedGaussianPolicy};

/// Ornstein-Uhlenbeck exploration-noise coefficients for MADDPG.
pub const OU_THETA: f64 = 0.15;
pub const OU_MU: f64 = 0.0;
pub const OU_SIGMA: f64 = 0.2;

/// One SAC-family agent: stochastic policy, central critic with its target,
/// optional central actor (absent for independent SAC), and a learned
/// temperature, each with its own Adam state.
pub struct AgentBundle {
    pub index: usize,
    pub policy: SquashedGaussianPolicy,
    pub critic: CentralCritic,
    pub target_critic: CentralCritic,
    pub central_actor: Option<CentralActor>,
    pub log_alpha: Tensor,
    pub target_entropy: f64,
    pub opt_policy: AdamState,
    pub opt_central: AdamState,
    pub opt_critic: AdamState,
    pub opt_alpha: AdamState,
}

impl AgentBundle {
    /// Initialization draws in a fixed order (policy, critic, central actor)
    /// so runs are reproducible; the target critic starts as an exact copy.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        index: usize,
        state_dim: usize,
        action_dims: &[usize],
        hidden: &[usize],
        activation: Activation,
        independent: bool,
        lr_policy: f64,
        lr_critic: f64,
        target_entropy: Option<f64>,
        initial_alpha: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let own_dim = action_dims[index];
        let joint: usize = action_dims.iter().sum();
        let opp_dim = joint - own_dim;

        let policy = SquashedGaussianPolicy::init(state_dim, own_dim, hidden, activation, rng);
        let critic_action_dim = if independent { own_dim } else { joint };
        let critic = CentralCritic::init(state_dim, critic_action_dim, hidden, activation, rng);
        let central_actor = if independent {
            None
        } else {
            Some(CentralActor::init(state_dim, opp_dim, own_dim, hidden, activation, rng))
        };
        let target_critic = critic.deep_clone();

        AgentBundle {
            index,
            policy,
            critic,
            target_critic,
            central_actor,
            log_alpha: Tensor::param(vec![1], vec![initial_alpha.ln()]).expect("consistent"),
            target_entropy: target_entropy.unwrap_or(-(own_dim as f64)),
            opt_policy: AdamState::new(lr_policy),
            opt_central: AdamState::new(lr_policy),
            opt_critic: AdamState::new(lr_critic),
            opt_alpha: AdamState::new(lr_policy),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.value_at(0).exp()
    }

    pub fn central_actor(&self) -> &CentralActor {
        self.central_actor.as_ref().expect("variant without a central actor")
    }

    /// Every learnable tensor in the bundle, targets included.
    pub fn all_params(&self) -> Vec<Tensor> {
        let mut p = self.policy.params();
        p.extend(self.critic.params());
        p.extend(self.target_critic.params());
        if let Some(ca) = &self.central_actor {
            p.extend(ca.params());
        }
        p.push(self.log_alpha.clone());
        p
    }

    pub fn zero_all_grads(&self) {
        for p in self.all_params() {
            p.zero_grad();
        }
    }

    /// Policy objective: mean over the batch of
    /// alpha * log pi(a0 | s) - Q(s, a0, a_opp), with a0 freshly
    /// reparameterized from the supplied noise. When the opponents'
    /// recursive actions were seeded by this agent's level-0 sample, passing
    /// that same noise here keeps the Q rows correlated: the tail draws that
    /// trigger a cooperative response also get scored at it. Opponent
    /// actions enter in ascending agent order; pass none for the independent
    /// variant. Also returns the sample's log probabilities for the
    /// temperature update.
    pub fn policy_loss(
        &self,
        tape: &mut Tape,
        state: &Tensor,
        opp_actions: &[&Tensor],
        own_noise: &Tensor,
        alpha: f64,
    ) -> Result<(Tensor, Tensor), AutodiffError> {
        let sample = self.policy.sample(tape, state, own_noise)?;
        self.policy_loss_with_sample(tape, state, &sample, opp_actions, alpha)
    }

    /// Policy objective over an already-drawn level-0 sample (the
    /// flow-through path reuses the sample living on the graph's tape).
    pub fn policy_loss_with_sample(
        &self,
        tape: &mut Tape,
        state: &Tensor,
        own: &crate::nets::PolicySample,
        opp_actions: &[&Tensor],
        alpha: f64,
    ) -> Result<(Tensor, Tensor), AutodiffError> {
        let mut inputs: Vec<&Tensor> = vec![&own.action];
        inputs.extend_from_slice(opp_actions);
        let q = self.critic.value(tape, state, &inputs)?;
        let entropy_term = tape.mul_scalar(&own.log_prob, alpha);
        let gap = tape.sub(&entropy_term, &q)?;
        let loss = tape.mean(&gap)?;
        Ok((loss, own.log_prob.clone()))
    }

    /// Best-response objective: mean of alpha * log pi_c - Q(s, a_c, a_opp)
    /// where a_c is the central actor's reparameterized response to replayed
    /// opponent actions.
    ///
    /// The entropy bonus borrows the agent's own annealing temperature. A
    /// trained best response can be deterministic, but the response network
    /// must *search* its output space while the critic is still forming:
    /// over a multimodal value slice a pure -Q objective hill-climbs into
    /// whichever mode it starts in and its spread collapses there, after
    /// which a later-emerging global mode (the narrow cooperative optimum)
    /// is never found. As alpha anneals, the response sharpens toward the
    /// plain argmax.
    pub fn central_actor_loss(
        &self,
        tape: &mut Tape,
        state: &Tensor,
        opp_concat: &Tensor,
        noise: &Tensor,
        alpha: f64,
    ) -> Result<Tensor, AutodiffError> {
        let sample = self.central_actor().act(tape, state, opp_concat, noise)?;
        let q = self.critic.value(tape, state, &[&sample.action, opp_concat])?;
        let entropy_term = tape.mul_scalar(&sample.log_prob, alpha);
        let gap = tape.sub(&entropy_term, &q)?;
        tape.mean(&gap)
    }

    /// Soft Bellman regression target r + gamma * (1 - terminal) * V(s'),
    /// where V(s') = Q_target(s', a0', a_opp') - alpha * log pi(a0' | s').
    /// Evaluated on a throwaway tape; no gradient escapes.
    pub fn critic_target(
        &self,
        next_state: &Tensor,
        opp_next: &[&Tensor],
        own_noise: &Tensor,
        rewards: &[f64],
        terminals: &[f64],
        gamma: f64,
    ) -> Result<Vec<f64>, AutodiffError> {
        let mut tape = Tape::inference();
        let sample = self.policy.sample(&mut tape, next_state, own_noise)?;
        let mut inputs: Vec<&Tensor> = vec![&sample.action];
        inputs.extend_from_slice(opp_next);
        let q = self.target_critic.value(&mut tape, next_state, &inputs)?;
        let alpha = self.alpha();
        let q = q.values();
        let lp = sample.log_prob.values();
        Ok(rewards
            .iter()
            .zip(terminals)
            .zip(q.iter().zip(&lp))
            .map(|((r, t), (qv, lpv))| r + gamma * (1.0 - t) * (qv - alpha * lpv))
            .collect())
    }

    /// Mean squared error between Q(s, a_replay) and the fixed targets.
    pub fn critic_loss(
        &self,
        tape: &mut Tape,
        state: &Tensor,
        own_action: &Tensor,
        opp_actions: &[&Tensor],
        targets: &Tensor,
    ) -> Result<Tensor, AutodiffError> {
        let mut inputs: Vec<&Tensor> = vec![own_action];
        inputs.extend_from_slice(opp_actions);
        let q = self.critic.value(tape, state, &inputs)?;
        let residual = tape.sub(&q, targets)?;
        let squared = tape.square(&residual);
        tape.mean(&squared)
    }

    /// Temperature objective -exp(log alpha) * mean(log pi + target entropy),
    /// with the log probabilities treated as constants.
    pub fn temperature_loss(
        &self,
        tape: &mut Tape,
        log_probs: &[f64],
    ) -> Result<Tensor, AutodiffError> {
        let mean_lp = log_probs.iter().sum::<f64>() / log_probs.len() as f64;
        let pressure = mean_lp + self.target_entropy;
        let alpha = tape.exp(&self.log_alpha);
        let scaled = tape.mul_scalar(&alpha, pressure);
        Ok(tape.negate(&scaled))
    }

    pub fn step_policy(&mut self) -> Result<(), AutodiffError> {
        adam_step(&self.policy.params(), &mut self.opt_policy)
    }

    pub fn step_central(&mut self) -> Result<(), AutodiffError> {
        let params = self.central_actor().params();
        adam_step(&params, &mut self.opt_central)
    }

    pub fn step_critic(&mut self) -> Result<(), AutodiffError> {
        adam_step(&self.critic.params(), &mut self.opt_critic)
    }

    pub fn step_alpha(&mut self) -> Result<(), AutodiffError> {
        adam_step(&[self.log_alpha.clone()], &mut self.opt_alpha)
    }
}

/// One MADDPG agent: deterministic tanh policy with a target copy, central
/// critic with a target copy, and a persistent Ornstein-Uhlenbeck noise
/// state for exploration.
pub struct MaddpgBundle {
    pub index: usize,
    pub policy: Mlp,
    pub target_policy: Mlp,
    pub critic: CentralCritic,
    pub target_critic: CentralCritic,
    pub opt_policy: AdamState,
    pub opt_critic: AdamState,
    pub ou_state: Vec<f64>,
}

impl MaddpgBundle {
    pub fn init(
        index: usize,
        state_dim: usize,
        action_dims: &[usize],
        hidden: &[usize],
        activation: Activation,
        lr_policy: f64,
        lr_critic: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let own_dim = action_dims[index];
        let joint: usize = action_dims.iter().sum();

        let mut dims = vec![state_dim];
        dims.extend_from_slice(hidden);
        dims.push(own_dim);
        let policy = Mlp::init(&dims, activation, false, rng);
        let critic = CentralCritic::init(state_dim, joint, hidden, activation, rng);
        let target_policy = policy.deep_clone();
        let target_critic = critic.deep_clone();

        MaddpgBundle {
            index,
            policy,
            target_policy,
            critic,
            target_critic,
            opt_policy: AdamState::new(lr_policy),
            opt_critic: AdamState::new(lr_critic),
            ou_state: vec![0.0; own_dim],
        }
    }

    /// Deterministic action tanh(mlp(s)).
    pub fn action(&self, tape: &mut Tape, state: &Tensor) -> Result<Tensor, AutodiffError> {
        let pre = self.policy.forward(tape, state)?;
        Ok(tape.tanh(&pre))
    }

    /// Target-policy action tanh(mlp_target(s)).
    pub fn target_action(&self, tape: &mut Tape, state: &Tensor) -> Result<Tensor, AutodiffError> {
        let pre = self.target_policy.forward(tape, state)?;
        Ok(tape.tanh(&pre))
    }

    /// Advance the OU process one step and return the new noise vector:
    /// x <- x + theta * (mu - x) + sigma * N(0, 1). The state persists for
    /// the whole run; single-step episodes would otherwise reduce it to
    /// white noise.
    pub fn ou_next(&mut self, rng: &mut impl Rng) -> Vec<f64> {
        for x in &mut self.ou_state {
            let draw: f64 = rng.sample(rand_distr::StandardNormal);
            *x += OU_THETA * (OU_MU - *x) + OU_SIGMA * draw;
        }
        self.ou_state.clone()
    }

    /// Policy objective mean of -Q(s, pi(s), a_opp) with replayed opponents.
    pub fn policy_loss(
        &self,
        tape: &mut Tape,
        state: &Tensor,
        opp_actions: &[&Tensor],
    ) -> Result<Tensor, AutodiffError> {
        let own = self.action(tape, state)?;
        let mut inputs: Vec<&Tensor> = vec![&own];
        inputs.extend_from_slice(opp_actions);
        let q = self.critic.value(tape, state, &inputs)?;
        let neg = tape.negate(&q);
        tape.mean(&neg)
    }

    /// Bootstrapped regression target using all agents' target policies at
    /// the next state (their actions are supplied by the caller, computed
    /// once per batch).
    pub fn critic_target(
        &self,
        next_state: &Tensor,
        own_next: &Tensor,
        opp_next: &[&Tensor],
        rewards: &[f64],
        terminals: &[f64],
        gamma: f64,
    ) -> Result<Vec<f64>, AutodiffError> {
        let mut tape = Tape::inference();
        let mut inputs: Vec<&Tensor> = vec![own_next];
        inputs.extend_from_slice(opp_next);
        let q = self.target_critic.value(&mut tape, next_state, &inputs)?;
        let q = q.values();
        Ok(rewards
            .iter()
            .zip(terminals)
            .zip(&q)
            .map(|((r, t), qv)| r + gamma * (1.0 - t) * qv)
            .collect())
    }

    pub fn critic_loss(
        &self,
        tape: &mut Tape,
        state: &Tensor,
        own_action: &Tensor,
        opp_actions: &[&Tensor],
        targets: &Tensor,
    ) -> Result<Tensor, AutodiffError> {
        let mut inputs: Vec<&Tensor> = vec![own_action];
        inputs.extend_from_slice(opp_actions);
        let q = self.critic.value(tape, state, &inputs)?;
        let residual = tape.sub(&q, targets)?;
        let squared = tape.square(&residual);
        tape.mean(&squared)
    }

    pub fn all_params(&self) -> Vec<Tensor> {
        let mut p = self.policy.params();
        p.extend(self.target_policy.params());
        p.extend(self.critic.params());
        p.extend(self.target_critic.params());
        p
    }

    pub fn zero_all_grads(&self) {
        for p in self.all_params() {
            p.zero_grad();
        }
    }

    pub fn step_policy(&mut self) -> Result<(), AutodiffError> {
        adam_step(&self.policy.params(), &mut self.opt_policy)
    }

    pub fn step_critic(&mut self) -> Result<(), AutodiffError> {
        adam_step(&self.critic.params(), &mut self.opt_critic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    #[test]
    fn independent_bundle_has_narrow_critic_and_no_central_actor() {
        let mut rng = SmallRng::seed_from_u64(0);
        let b = AgentBundle::init(
            0,
            2,
            &[1, 1],
            &[16, 16],
            Activation::Tanh,
            true,
            1e-4,
            1e-3,
            None,
            1.0,
            &mut rng,
        );
        assert_eq!(b.critic.input_dim(), 2 + 1);
        assert!(b.central_actor.is_none());
    }

    #[test]
    fn central_bundle_input_widths() {
        let mut rng = SmallRng::seed_from_u64(0);
        let b = AgentBundle::init(
            1,
            2,
            &[1, 1, 1],
            &[16, 16],
            Activation::Tanh,
            false,
            1e-4,
            1e-3,
            None,
            1.0,
            &mut rng,
        );
        assert_eq!(b.critic.input_dim(), 2 + 3);
        assert_eq!(b.central_actor().policy.input_dim(), 2 + 2);
        assert_eq!(b.target_entropy, -1.0);
    }

    #[test]
    fn target_critic_has_independent_storage() {
        let mut rng = SmallRng::seed_from_u64(1);
        let b = AgentBundle::init(
            0,
            2,
            &[1, 1],
            &[8],
            Activation::Tanh,
            false,
            1e-4,
            1e-3,
            None,
            1.0,
            &mut rng,
        );
        let online = &b.critic.params()[0];
        let target = &b.target_critic.params()[0];
        assert_eq!(online.values(), target.values());
        assert!(!online.same_storage(target));
    }

    #[test]
    fn ou_process_is_constant_when_coefficients_vanish() {
        let mut rng = SmallRng::seed_from_u64(2);
        let mut x = 0.37f64;
        for _ in 0..100 {
            let draw: f64 = rng.sample(rand_distr::StandardNormal);
            let (theta, sigma) = (0.0, 0.0);
            x += theta * (OU_MU - x) + sigma * draw;
        }
        assert_eq!(x, 0.37);
    }

    #[test]
    fn ou_long_run_standard_deviation_matches_stationary_value() {
        let mut rng = SmallRng::seed_from_u64(3);
        let mut b = MaddpgBundle::init(
            0,
            2,
            &[1, 1],
            &[8],
            Activation::Tanh,
            1e-4,
            1e-3,
            &mut rng,
        );
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = b.ou_next(&mut rng)[0];
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        let continuous = OU_SIGMA / (2.0 * OU_THETA).sqrt();
        assert!((std - continuous).abs() < 0.02, "std {std} vs {continuous}");
    }

    #[test]
    fn temperature_gradient_vanishes_at_target_entropy() {
        let mut rng = SmallRng::seed_from_u64(4);
        let b = AgentBundle::init(
            0,
            2,
            &[1, 1],
            &[8],
            Activation::Tanh,
            false,
            1e-4,
            1e-3,
            None,
            1.0,
            &mut rng,
        );
        // log pi = -target everywhere => pressure = 0 => zero gradient.
        let mut tape = Tape::new();
        let loss = b.temperature_loss(&mut tape, &[b.target_entropy * -1.0; 8]).unwrap();
        b.log_alpha.zero_grad();
        tape.backward(&loss).unwrap();
        assert_eq!(b.log_alpha.grad(), vec![0.0]);
    }

    #[test]
    fn temperature_rises_when_entropy_is_below_target() {
        let mut rng = SmallRng::seed_from_u64(5);
        let mut b = AgentBundle::init(
            0,
            2,
            &[1, 1],
            &[8],
            Activation::Tanh,
            false,
            1e-4,
            1e-3,
            None,
            1.0,
            &mut rng,
        );
        let before = b.alpha();
        // Entropy below target: log pi well above -target_entropy.
        let mut tape = Tape::new();
        let loss = b.temperature_loss(&mut tape, &[3.0; 8]).unwrap();
        b.log_alpha.zero_grad();
        tape.backward(&loss).unwrap();
        b.step_alpha().unwrap();
        assert!(b.alpha() > before);
    }

    #[test]
    fn temperature_stays_positive_under_heavy_pressure() {
        let mut rng = SmallRng::seed_from_u64(6);
        let mut b = AgentBundle::init(
            0,
            2,
            &[1, 1],
            &[8],
            Activation::Tanh,
            false,
            1e-2,
            1e-3,
            None,
            1.0,
            &mut rng,
        );
        // Entropy far above target for many steps drives alpha down, but the
        // log parameterization keeps it positive.
        for _ in 0..100_000 {
            let mut tape = Tape::new();
            let loss = b.temperature_loss(&mut tape, &[-40.0]).unwrap();
            b.log_alpha.zero_grad();
            tape.backward(&loss).unwrap();
            b.step_alpha().unwrap();
        }
        assert!(b.alpha() > 0.0);
        assert!(b.alpha() < 1e-6);
    }
}
