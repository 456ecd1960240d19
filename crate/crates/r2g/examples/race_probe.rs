// Diagnostic: watch the race between policy collapse, critic bump formation,
// and central-actor response flips on the max_two game.
use r2g::autodiff::{Tape, Tensor};
use r2g::envs::MaxTwo;
use r2g::marl::{Algorithm, Trainer, TrainerConfig};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let alpha0 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let warmup = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let mut cfg = TrainerConfig::defaults(Algorithm::R2g, seed);
    cfg.initial_alpha = alpha0;
    cfg.warmup_steps = warmup;
    let mut t = Trainer::new(Box::new(MaxTwo::new()), cfg).unwrap();
    let s = Tensor::from_vec(vec![1, 2], vec![1.0, 1.0]).unwrap();

    println!("ep | a_ml | alpha0/1 | sig0/1 | b0(-.5,0,.2,.5) b1(...) | Q1(-.5|.5) Q1(0|.5) Q1(.3|.5) Q1(.5|.5)");
    for e in 0..epochs {
        let m = t.train_epoch().unwrap();
        if e % 25 != 0 && e != epochs - 1 {
            continue;
        }
        let bundles = t.bundles().unwrap();
        let sigma = |agent: usize| {
            let mut tape = Tape::inference();
            let (_, ls) = bundles[agent].policy.distribution_params(&mut tape, &s).unwrap();
            ls.values()[0].exp()
        };
        let probe_central = |agent: usize| -> Vec<f64> {
            [-0.5, 0.0, 0.2, 0.5]
                .iter()
                .map(|opp| {
                    let mut tape = Tape::inference();
                    let opp = Tensor::from_vec(vec![1, 1], vec![*opp]).unwrap();
                    bundles[agent]
                        .central_actor()
                        .most_likely(&mut tape, &s, &opp)
                        .unwrap()
                        .values()[0]
                })
                .collect()
        };
        // Agent 1's critic along its own action with the opponent at +0.5.
        let q1 = |own: f64| -> f64 {
            let mut tape = Tape::inference();
            let a = Tensor::from_vec(vec![1, 1], vec![own]).unwrap();
            let b = Tensor::from_vec(vec![1, 1], vec![0.5]).unwrap();
            bundles[1].critic.value(&mut tape, &s, &[&a, &b]).unwrap().values()[0]
        };
        let b0 = probe_central(0);
        let b1 = probe_central(1);
        println!(
            "{:4} | ({:+.2},{:+.2}) | {:.2}/{:.2} | {:.2}/{:.2} | [{:+.2} {:+.2} {:+.2} {:+.2}] [{:+.2} {:+.2} {:+.2} {:+.2}] | {:+.1} {:+.1} {:+.1} {:+.1}",
            e,
            m.most_likely[0][0],
            m.most_likely[1][0],
            m.alpha[0],
            m.alpha[1],
            sigma(0),
            sigma(1),
            b0[0],
            b0[1],
            b0[2],
            b0[3],
            b1[0],
            b1[1],
            b1[2],
            b1[3],
            q1(-0.5),
            q1(0.0),
            q1(0.3),
            q1(0.5),
        );
    }
}
