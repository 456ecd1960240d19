//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 check failure
//! (for `contraction-test` and `grad-check`).

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;

use crate::envs::ENV_NAMES;
use crate::marl::Algorithm;
use crate::verify::{contraction_check, contraction_ratio, GridSpec, TabularGame};

use super::config::RunConfig;
use super::losscheck::check_all_losses;
use super::runner::{
    env_by_name, eval_policies, read_checkpoint_file, run_single, sweep,
};
use super::{csvio, svg, HarnessError};

const USAGE: &str = "\
r2g - recursive-reasoning actor-critic trainer for differential games

USAGE:
  r2g run [OPTIONS]                 Train one (env, algo, seed) run
  r2g sweep [OPTIONS]               Fan out over recursion levels and seeds
  r2g eval [OPTIONS]                Deterministic evaluation of a checkpoint
  r2g response-map [OPTIONS]        Central-actor response curves to CSV
  r2g contraction-test [OPTIONS]    Check the value operator's contraction
  r2g grad-check [OPTIONS]          Finite-difference check of every loss
  r2g plot [OPTIONS]                Render SVG plots from run CSV artifacts

RUN / SWEEP OPTIONS (defaults in parentheses):
  --config FILE        Load a config file first; flags below override it
  --env NAME           zero_sum | max_two (zero_sum)
  --algo NAME          r2g | masac | maddpg | sac (r2g)
  --k N                Recursion level for r2g; sweep accepts a list 0,1,2 (1)
  --seed N             Seed for `run` (0)
  --seeds N|LIST       Seed count 0..N or explicit list for `sweep` (5)
  --epochs N           Training epochs (1000)
  --steps-per-epoch N  Exploration steps per epoch (100)
  --train-iters N      Training iterations per epoch (100)
  --warmup N           Exploration steps banked before updates start (1000)
  --batch-size N       Minibatch size (256)
  --gamma X            Discount (0.99)
  --tau X              Target soft-update rate (0.005)
  --lr-critic X        Critic learning rate (1e-3)
  --lr-policy X        Policy / central-actor learning rate (1e-4)
  --hidden LIST        Hidden layer widths (16,16)
  --activation NAME    tanh | relu (tanh)
  --grad-mode NAME     detached | flow_through (detached)
  --target-entropy X   Per-agent target entropy, or `auto` (auto)
  --initial-alpha X    Starting temperature for the entropy bonus (1.0)
  --eval-episodes N    Episodes for post-run evaluation (100)
  --out DIR            Output directory (runs)

EVAL OPTIONS:
  --checkpoint FILE    Checkpoint to evaluate (required)
  --env NAME           Environment (default: checkpoint metadata)
  --episodes N         Evaluation episodes (100)
  --seed N             Evaluation seed (0)

RESPONSE-MAP OPTIONS:
  --checkpoint FILE    Checkpoint with central actors (required)
  --grid N             Odd grid resolution (41)
  --out FILE           Output CSV path (response_map.csv)

CONTRACTION-TEST OPTIONS:
  --states N --a1 N --a2 N   Tabular game size (5, 7, 7)
  --gamma X                  Discount (0.99)
  --alpha X                  Entropy temperature (0.3)
  --trials N                 Random Q-table pairs (100)
  --seed N                   Seed (0)

GRAD-CHECK OPTIONS:
  --trials N           Instances per loss (20)

PLOT OPTIONS:
  --run DIR            Run directory holding trajectory.csv / returns.csv
";

fn usage_error(message: &str) -> i32 {
    eprintln!("error: {message}");
    eprintln!();
    eprintln!("{USAGE}");
    1
}

fn runtime_error(err: &HarnessError) -> i32 {
    eprintln!("error: {err}");
    2
}

/// Parse `--key value` pairs; returns a map or a usage complaint.
fn parse_flags(args: &[String]) -> Result<BTreeMap<String, String>, String> {
    let mut flags = BTreeMap::new();
    let mut i = 0;
    while i < args.len() {
        let key = &args[i];
        if !key.starts_with("--") {
            return Err(format!("unexpected argument {key:?}"));
        }
        let value = args
            .get(i + 1)
            .ok_or_else(|| format!("flag {key} is missing a value"))?;
        flags.insert(key[2..].to_string(), value.clone());
        i += 2;
    }
    Ok(flags)
}

/// Flags shared by `run` and `sweep`, layered over an optional config file.
fn build_config(flags: &BTreeMap<String, String>) -> Result<RunConfig, String> {
    let mut cfg = match flags.get("config") {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            RunConfig::from_text(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    for (flag, key) in [
        ("env", "env"),
        ("algo", "algo"),
        ("k", "k"),
        ("epochs", "epochs"),
        ("steps-per-epoch", "steps_per_epoch"),
        ("train-iters", "train_iters_per_epoch"),
        ("warmup", "warmup_steps"),
        ("batch-size", "batch_size"),
        ("gamma", "gamma"),
        ("tau", "tau"),
        ("lr-critic", "lr_critic"),
        ("lr-policy", "lr_policy"),
        ("hidden", "hidden"),
        ("activation", "activation"),
        ("grad-mode", "grad_flow"),
        ("target-entropy", "target_entropy"),
        ("initial-alpha", "initial_alpha"),
        ("eval-episodes", "eval_episodes"),
        ("out", "out_dir"),
        ("replay-capacity", "replay_capacity"),
    ] {
        if let Some(v) = flags.get(flag) {
            cfg.apply(key, v)?;
        }
    }
    if let Some(seed) = flags.get("seed") {
        cfg.apply("seeds", seed)?;
    }
    if !ENV_NAMES.contains(&cfg.env.as_str()) {
        return Err(format!(
            "unknown environment {:?}; built-in environments: {}",
            cfg.env,
            ENV_NAMES.join(", ")
        ));
    }
    Ok(cfg)
}

fn parse_seed_list(spec: &str) -> Result<Vec<u64>, String> {
    if spec.contains(',') {
        spec.split(',')
            .map(|p| p.trim().parse().map_err(|_| format!("bad seed {p:?}")))
            .collect()
    } else {
        let n: u64 = spec.parse().map_err(|_| format!("bad seed count {spec:?}"))?;
        Ok((0..n).collect())
    }
}

fn parse_k_list(spec: &str) -> Result<Vec<usize>, String> {
    spec.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad recursion level {p:?}")))
        .collect()
}

fn cmd_run(flags: &BTreeMap<String, String>) -> i32 {
    let cfg = match build_config(flags) {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    match run_single(&cfg, seed) {
        Ok(record) => {
            println!(
                "run complete: {} ({:.1}s), final most-likely actions {:?}",
                record.dir.display(),
                record.wall_clock_secs,
                record.trajectory.entries.last().expect("at least one epoch")
            );
            0
        }
        Err(e) => runtime_error(&e),
    }
}

fn cmd_sweep(flags: &BTreeMap<String, String>) -> i32 {
    // `--k` may be a list here; it is handled below, not by the config layer.
    let mut scalar_flags = flags.clone();
    scalar_flags.remove("k");
    let cfg = match build_config(&scalar_flags) {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    let seeds = match flags.get("seeds").map(String::as_str) {
        Some(spec) => match parse_seed_list(spec) {
            Ok(s) => s,
            Err(e) => return usage_error(&e),
        },
        None => (0..5).collect(),
    };
    let ks = match flags.get("k").map(String::as_str) {
        Some(spec) => match parse_k_list(spec) {
            Ok(k) => k,
            Err(e) => return usage_error(&e),
        },
        None => vec![cfg.recursion_level],
    };
    match sweep(&cfg, &ks, &seeds) {
        Ok(records) => {
            println!(
                "sweep complete: {} runs under {}",
                records.len(),
                cfg.out_dir.display()
            );
            0
        }
        Err(e) => runtime_error(&e),
    }
}

fn cmd_eval(flags: &BTreeMap<String, String>) -> i32 {
    let Some(ck_path) = flags.get("checkpoint") else {
        return usage_error("eval requires --checkpoint");
    };
    let ck = match read_checkpoint_file(&PathBuf::from(ck_path)) {
        Ok(ck) => ck,
        Err(e) => return runtime_error(&e),
    };
    let env_name = flags
        .get("env")
        .cloned()
        .or_else(|| ck.meta.get("env").cloned())
        .unwrap_or_default();
    let env = match env_by_name(&env_name) {
        Ok(env) => env,
        Err(_) => {
            return usage_error(&format!(
                "unknown environment {:?}; built-in environments: {}",
                env_name,
                ENV_NAMES.join(", ")
            ))
        }
    };
    let episodes = flags.get("episodes").and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed = flags.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
    match eval_policies(&ck, env.as_ref(), episodes, seed) {
        Ok(returns) => {
            for (agent, value) in returns.iter().enumerate() {
                println!("agent {agent} mean_return {value}");
            }
            0
        }
        Err(e) => runtime_error(&e),
    }
}

fn cmd_response_map(flags: &BTreeMap<String, String>) -> i32 {
    let Some(ck_path) = flags.get("checkpoint") else {
        return usage_error("response-map requires --checkpoint");
    };
    let ck = match read_checkpoint_file(&PathBuf::from(ck_path)) {
        Ok(ck) => ck,
        Err(e) => return runtime_error(&e),
    };
    let points = flags.get("grid").and_then(|s| s.parse().ok()).unwrap_or(41);
    if points < 3 || points % 2 == 0 {
        return usage_error("--grid must be odd and at least 3");
    }
    let out = flags
        .get("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("response_map.csv"));
    match super::response_map_rows(&ck, &GridSpec::symmetric(points)) {
        Ok(rows) => match fs::write(&out, csvio::response_map_csv(&rows)) {
            Ok(()) => {
                println!("wrote {}", out.display());
                0
            }
            Err(e) => runtime_error(&HarnessError::Io(e.to_string())),
        },
        Err(e) => runtime_error(&e),
    }
}

fn cmd_contraction_test(flags: &BTreeMap<String, String>) -> i32 {
    let get = |k: &str, d: usize| flags.get(k).and_then(|s| s.parse().ok()).unwrap_or(d);
    let states = get("states", 5);
    let a1 = get("a1", 7);
    let a2 = get("a2", 7);
    let trials = get("trials", 100);
    let gamma: f64 = flags.get("gamma").and_then(|s| s.parse().ok()).unwrap_or(0.99);
    let alpha: f64 = flags.get("alpha").and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let seed: u64 = flags.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let game = TabularGame::random(states, a1, a2, alpha, &mut rng);
    let worst = contraction_check(&game, gamma, trials, &mut rng);

    use rand::Rng;
    let q1: Vec<f64> = (0..game.q_len()).map(|_| rng.random_range(-5.0..5.0)).collect();
    let q2: Vec<f64> = q1.iter().map(|v| v + 1.0).collect();
    let shift_ratio = contraction_ratio(&game, gamma, &q1, &q2);

    let ok = worst <= gamma + 1e-9 && (shift_ratio - gamma).abs() <= 1e-12;
    println!(
        "contraction-test: gamma {gamma}, {trials} random pairs, max ratio {worst:.12}, \
         constant-shift ratio {shift_ratio:.15} [{}]",
        if ok { "PASS" } else { "FAIL" }
    );
    if ok {
        0
    } else {
        3
    }
}

fn cmd_grad_check(flags: &BTreeMap<String, String>) -> i32 {
    let trials = flags.get("trials").and_then(|s| s.parse().ok()).unwrap_or(20);
    match check_all_losses(trials) {
        Ok(checks) => {
            let mut ok = true;
            for c in &checks {
                ok &= c.passed();
                println!(
                    "grad-check: {:<32} max rel error {:.3e} (tolerance {:.0e}) [{}]",
                    c.name,
                    c.max_rel_error,
                    c.tolerance,
                    if c.passed() { "PASS" } else { "FAIL" }
                );
            }
            if ok {
                0
            } else {
                3
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_plot(flags: &BTreeMap<String, String>) -> i32 {
    let Some(dir) = flags.get("run") else {
        return usage_error("plot requires --run DIR");
    };
    match svg::emit_plots(&PathBuf::from(dir)) {
        Ok(written) => {
            for p in written {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => runtime_error(&e),
    }
}

/// Dispatch a full argv (without the binary name) and return the exit code.
pub fn cli_run(args: &[String]) -> i32 {
    let Some(command) = args.first() else {
        return usage_error("missing subcommand");
    };
    if command == "--help" || command == "-h" || command == "help" {
        println!("{USAGE}");
        return 0;
    }
    let flags = match parse_flags(&args[1..]) {
        Ok(f) => f,
        Err(e) => return usage_error(&e),
    };
    // Validate the algorithm early so typos fail with the valid set.
    if let Some(algo) = flags.get("algo") {
        if Algorithm::from_name(algo).is_none() {
            let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
            return usage_error(&format!(
                "unknown algorithm {algo:?}; valid algorithms: {}",
                names.join(", ")
            ));
        }
    }
    match command.as_str() {
        "run" => cmd_run(&flags),
        "sweep" => cmd_sweep(&flags),
        "eval" => cmd_eval(&flags),
        "response-map" => cmd_response_map(&flags),
        "contraction-test" => cmd_contraction_test(&flags),
        "grad-check" => cmd_grad_check(&flags),
        "plot" => cmd_plot(&flags),
        other => usage_error(&format!("unknown subcommand {other:?}")),
    }
}
