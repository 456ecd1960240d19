// Quick escape-rate scan: final joint action on max_two for several seeds
// under a given warmup size and replay ratio.
use r2g::envs::MaxTwo;
use r2g::marl::{Algorithm, Trainer, TrainerConfig};

fn main() {
    let warmup = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let alpha0 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.0f64);
    let epochs = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(300);
    let seeds = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(5u64);
    let algo = match std::env::args().nth(5).as_deref() {
        Some("masac") => Algorithm::Masac,
        _ => Algorithm::R2g,
    };
    println!("warmup {warmup}, initial alpha {alpha0}, {epochs} epochs, {algo:?}");
    for seed in 0..seeds {
        let mut cfg = TrainerConfig::defaults(algo, seed);
        cfg.warmup_steps = warmup;
        cfg.initial_alpha = alpha0;
        let mut t = Trainer::new(Box::new(MaxTwo::new()), cfg).unwrap();
        let mut last = Vec::new();
        for _ in 0..epochs {
            last = t.train_epoch().unwrap().most_likely;
        }
        let (a, b) = (last[0][0], last[1][0]);
        let global = (a - 0.5).abs().max((b - 0.5).abs());
        println!(
            "seed {seed}: final ({a:+.3}, {b:+.3})  dist-to-global {global:.3}  [{}]",
            if global <= 0.1 { "GLOBAL" } else { "stuck" }
        );
    }
}
