//! Finite-difference verification of every training loss, shared by the
//! `grad-check` CLI subcommand and the acceptance suite. Each case builds a
//! small random instance with frozen noise, so the loss is a deterministic
//! function of the parameters under perturbation.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::autodiff::{grad_check, AutodiffError, GradCheckCase, Tensor};
use crate::marl::{
    normal_batch, recursive_actions_on_tape, AgentBundle, FixedNoise, ReasoningGraph,
};
use crate::nets::Activation;

/// Result of one loss check.
#[derive(Debug, Clone)]
pub struct LossCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl LossCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

fn tiny_bundles(seed: u64) -> Vec<AgentBundle> {
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut bundles: Vec<AgentBundle> = (0..2)
        .map(|i| {
            AgentBundle::init(
                i,
                2,
                &[1, 1],
                &[4],
                Activation::Tanh,
                false,
                1e-4,
                1e-3,
                None,
                1.0,
                &mut rng,
            )
        })
        .collect();
    // Spread the near-zero heads so every path carries gradient.
    for b in &mut bundles {
        let mut params = b.critic.params();
        params.extend(b.policy.params());
        params.extend(b.central_actor().params());
        params.push(b.log_alpha.clone());
        for p in params {
            let mut vals = p.values();
            for v in &mut vals {
                *v += rng.random_range(-0.4..0.4);
            }
            p.set_values(&vals);
        }
    }
    bundles
}

fn policy_loss_detached_case(seed: u64) -> GradCheckCase {
    let bundles = tiny_bundles(seed);
    let mut rng = SmallRng::seed_from_u64(seed ^ 0x11);
    let rows = 3;
    let s = normal_batch(&mut rng, rows, 2);
    let opp = normal_batch(&mut rng, rows, 1);
    let own_noise = normal_batch(&mut rng, rows, 1);
    let params = bundles[0].policy.params();
    GradCheckCase {
        params,
        loss: Box::new(move |tape, _| {
            let alpha = bundles[0].alpha();
            let (loss, _) = bundles[0].policy_loss(tape, &s, &[&opp], &own_noise, alpha)?;
            Ok(loss)
        }),
    }
}

fn policy_loss_flow_case(seed: u64) -> GradCheckCase {
    let bundles = tiny_bundles(seed ^ 0x22);
    let graph = ReasoningGraph::fully_connected(2);
    let mut rng = SmallRng::seed_from_u64(seed ^ 0x33);
    let rows = 3;
    let s = normal_batch(&mut rng, rows, 2);
    // Level-0 draws for both agents (messages are deterministic responses).
    let queue: Vec<Tensor> = (0..2).map(|_| normal_batch(&mut rng, rows, 1)).collect();
    let params = bundles[0].policy.params();
    GradCheckCase {
        params,
        loss: Box::new(move |tape, _| {
            let mut noise = FixedNoise::new(queue.clone());
            let pass = recursive_actions_on_tape(tape, &graph, &bundles, &s, 1, &mut noise)?;
            let alpha = bundles[0].alpha();
            let (loss, _) = bundles[0].policy_loss_with_sample(
                tape,
                &s,
                &pass.level0[0],
                &[&pass.level_k[1]],
                alpha,
            )?;
            Ok(loss)
        }),
    }
}

fn central_actor_loss_case(seed: u64) -> GradCheckCase {
    let bundles = tiny_bundles(seed ^ 0x44);
    let mut rng = SmallRng::seed_from_u64(seed ^ 0x55);
    let rows = 3;
    let s = normal_batch(&mut rng, rows, 2);
    let opp = normal_batch(&mut rng, rows, 1);
    let noise = normal_batch(&mut rng, rows, 1);
    let params = bundles[0].central_actor().params();
    GradCheckCase {
        params,
        loss: Box::new(move |tape, _| {
            bundles[0].central_actor_loss(tape, &s, &opp, &noise, 0.5)
        }),
    }
}

fn critic_loss_case(seed: u64) -> GradCheckCase {
    let bundles = tiny_bundles(seed ^ 0x66);
    let mut rng = SmallRng::seed_from_u64(seed ^ 0x77);
    let rows = 3;
    let s = normal_batch(&mut rng, rows, 2);
    let own = normal_batch(&mut rng, rows, 1);
    let opp = normal_batch(&mut rng, rows, 1);
    let targets = normal_batch(&mut rng, rows, 1);
    let params = bundles[0].critic.params();
    GradCheckCase {
        params,
        loss: Box::new(move |tape, _| {
            bundles[0].critic_loss(tape, &s, &own, &[&opp], &targets)
        }),
    }
}

fn temperature_loss_case(seed: u64) -> GradCheckCase {
    let bundles = tiny_bundles(seed ^ 0x88);
    let mut rng = SmallRng::seed_from_u64(seed ^ 0x99);
    let log_probs: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..0.5)).collect();
    let params = vec![bundles[0].log_alpha.clone()];
    GradCheckCase {
        params,
        loss: Box::new(move |tape, _| bundles[0].temperature_loss(tape, &log_probs)),
    }
}

/// Run every loss-gradient check: `trials` random instances per loss,
/// central differences with step 1e-5, tolerance 1e-4.
pub fn check_all_losses(trials: usize) -> Result<Vec<LossCheck>, AutodiffError> {
    let h = 1e-5;
    let tolerance = 1e-4;
    let cases: [(&'static str, fn(u64) -> GradCheckCase); 5] = [
        ("policy (detached recursion)", policy_loss_detached_case),
        ("policy (flow-through recursion)", policy_loss_flow_case),
        ("central actor", central_actor_loss_case),
        ("critic", critic_loss_case),
        ("temperature", temperature_loss_case),
    ];
    cases
        .into_iter()
        .map(|(name, build)| {
            let max_rel_error = grad_check(build, trials, h)?;
            Ok(LossCheck { name, max_rel_error, tolerance })
        })
        .collect()
}
