use std::time::Instant;
use r2g::autodiff::{Tape, Tensor};
use r2g::marl::{normal_batch, AgentBundle};
use r2g::nets::Activation;
use rand::rngs::SmallRng;
use rand::SeedableRng;

fn main() {
    let mut rng = SmallRng::seed_from_u64(0);
    let b = AgentBundle::init(0, 2, &[1, 1], &[16, 16], Activation::Tanh, false, 1e-4, 1e-3, None, &mut rng);
    let rows = 256;
    let s = Tensor::from_vec(vec![rows, 2], vec![1.0; rows * 2]).unwrap();
    let opp = normal_batch(&mut rng, rows, 1);
    let noise = normal_batch(&mut rng, rows, 1);
    let targets = normal_batch(&mut rng, rows, 1);

    let n = 2000;

    let t = Instant::now();
    for _ in 0..n {
        let mut tape = Tape::inference();
        let sample = b.policy.sample(&mut tape, &s, &noise).unwrap();
        std::hint::black_box(sample.action.values());
    }
    println!("policy.sample fwd (inference): {:.0} us", t.elapsed().as_micros() as f64 / n as f64);

    let t = Instant::now();
    for _ in 0..n {
        let mut tape = Tape::new();
        let (loss, _) = b.policy_loss(&mut tape, &s, &[&opp], &noise, 1.0).unwrap();
        std::hint::black_box(loss.scalar_value());
    }
    println!("policy_loss fwd (recorded): {:.0} us", t.elapsed().as_micros() as f64 / n as f64);

    let t = Instant::now();
    for _ in 0..n {
        let mut tape = Tape::new();
        let (loss, _) = b.policy_loss(&mut tape, &s, &[&opp], &noise, 1.0).unwrap();
        b.zero_all_grads();
        tape.backward(&loss).unwrap();
        std::hint::black_box(loss.scalar_value());
    }
    println!("policy_loss fwd+bwd: {:.0} us", t.elapsed().as_micros() as f64 / n as f64);

    let t = Instant::now();
    for _ in 0..n {
        let mut tape = Tape::new();
        let loss = b.critic_loss(&mut tape, &s, &noise, &[&opp], &targets).unwrap();
        b.zero_all_grads();
        tape.backward(&loss).unwrap();
        std::hint::black_box(loss.scalar_value());
    }
    println!("critic_loss fwd+bwd: {:.0} us", t.elapsed().as_micros() as f64 / n as f64);

    let t = Instant::now();
    for _ in 0..n {
        let v = b.critic_target(&s, &[&opp], &noise, &vec![1.0; rows], &vec![1.0; rows], 0.99).unwrap();
        std::hint::black_box(v);
    }
    println!("critic_target: {:.0} us", t.elapsed().as_micros() as f64 / n as f64);
}
