//! Run orchestration: train one (env, algorithm, seed) triple into a run
//! directory, fan out sweeps over recursion levels and seeds, and evaluate
//! checkpoints with deterministic most-likely rollouts.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::RngCore;

use crate::autodiff::Tape;
use crate::envs::{self, MarkovGame};
use crate::marl::Trainer;
use crate::nets::{mlp_from_checkpoint, policy_from_checkpoint, Activation, Checkpoint, Mlp, SquashedGaussianPolicy};
use crate::autodiff::Tensor;
use crate::verify::TrajectoryLog;

use super::config::RunConfig;
use super::{csvio, seeding, HarnessError};

/// Everything one training run leaves behind.
pub struct RunRecord {
    /// Config snapshot with exactly this run's seed.
    pub config: RunConfig,
    pub seed: u64,
    pub dir: PathBuf,
    pub trajectory: TrajectoryLog,
    pub returns: Vec<Vec<f64>>,
    pub wall_clock_secs: f64,
}

/// Canonical directory name for one run.
pub fn run_dir_name(cfg: &RunConfig, seed: u64) -> String {
    let k = cfg.trainer_config(seed).effective_k();
    format!("{}_{}_k{}_seed{}", cfg.algorithm.name(), cfg.env, k, seed)
}

pub fn env_by_name(name: &str) -> Result<Box<dyn MarkovGame>, HarnessError> {
    envs::by_name(name).ok_or_else(|| HarnessError::UnknownEnv(name.to_string()))
}

/// Train one seed of `cfg` on its named environment and write the artifacts
/// (config.txt, trajectory.csv, returns.csv, checkpoint.txt) into the run
/// directory. Identical config + seed reproduces every file byte for byte.
pub fn run_single(cfg: &RunConfig, seed: u64) -> Result<RunRecord, HarnessError> {
    let env = env_by_name(&cfg.env)?;
    run_single_with_env(cfg, seed, env)
}

/// Same as [`run_single`] for a programmatically registered environment.
pub fn run_single_with_env(
    cfg: &RunConfig,
    seed: u64,
    env: Box<dyn MarkovGame>,
) -> Result<RunRecord, HarnessError> {
    let started = Instant::now();
    let mut trainer = Trainer::new(env, cfg.trainer_config(seed))?;

    let mut trajectory = TrajectoryLog::default();
    let mut returns = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let metrics = trainer.train_epoch()?;
        trajectory.push(metrics.most_likely.clone());
        returns.push(metrics.mean_return.clone());
        if (epoch + 1) % 200 == 0 {
            eprintln!(
                "[{}] epoch {}/{} action {:?}",
                run_dir_name(cfg, seed),
                epoch + 1,
                cfg.epochs,
                metrics.most_likely
            );
        }
    }

    let dir = cfg.out_dir.join(run_dir_name(cfg, seed));
    fs::create_dir_all(&dir).map_err(|e| HarnessError::Io(e.to_string()))?;

    let mut snapshot = cfg.clone();
    snapshot.seeds = vec![seed];
    fs::write(dir.join("config.txt"), snapshot.to_text())
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    fs::write(dir.join("trajectory.csv"), csvio::trajectory_csv(&trajectory))
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    fs::write(dir.join("returns.csv"), csvio::returns_csv(&returns))
        .map_err(|e| HarnessError::Io(e.to_string()))?;

    let mut ck = trainer.checkpoint();
    ck.meta.insert("env".into(), cfg.env.clone());
    ck.meta.insert("seed".into(), seed.to_string());
    let mut bytes = Vec::new();
    ck.write_to(&mut bytes).map_err(|e| HarnessError::Io(e.to_string()))?;
    fs::write(dir.join("checkpoint.txt"), bytes).map_err(|e| HarnessError::Io(e.to_string()))?;

    Ok(RunRecord {
        config: snapshot,
        seed,
        dir,
        trajectory,
        returns,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Fan out over every (k, seed) pair. Runs execute on a small worker pool;
/// each run owns its directory, and the sweep index is written once at the
/// end in (k, seed) order so concurrent execution leaves the same artifacts
/// as a sequential sweep.
pub fn sweep(
    cfg: &RunConfig,
    k_values: &[usize],
    seeds: &[u64],
) -> Result<Vec<RunRecord>, HarnessError> {
    let mut jobs = Vec::new();
    for &k in k_values {
        for &seed in seeds {
            let mut member = cfg.clone();
            member.recursion_level = k;
            jobs.push((member, seed));
        }
    }

    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<(usize, Result<RunRecord, HarnessError>)>> =
        Mutex::new(Vec::with_capacity(jobs.len()));

    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let job = {
                    let mut guard = next.lock().expect("sweep queue poisoned");
                    let i = *guard;
                    if i >= jobs.len() {
                        break;
                    }
                    *guard += 1;
                    i
                };
                let (member, seed) = &jobs[job];
                let record = run_single(member, *seed);
                results.lock().expect("sweep results poisoned").push((job, record));
            });
        }
    });

    let mut indexed = results.into_inner().expect("sweep results poisoned");
    indexed.sort_by_key(|(i, _)| *i);
    let mut records = Vec::with_capacity(indexed.len());
    for (_, r) in indexed {
        records.push(r?);
    }

    fs::create_dir_all(&cfg.out_dir).map_err(|e| HarnessError::Io(e.to_string()))?;
    let mut index = String::from("algo,env,k,seed,dir,final_actions\n");
    for r in &records {
        let final_actions = r
            .trajectory
            .entries
            .last()
            .map(|joint| {
                joint
                    .iter()
                    .flatten()
                    .map(|a| format!("{a:.4}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default();
        index.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.config.algorithm.name(),
            r.config.env,
            r.config.trainer_config(r.seed).effective_k(),
            r.seed,
            r.dir.display(),
            final_actions,
        ));
    }
    fs::write(cfg.out_dir.join("sweep_index.csv"), index)
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(records)
}

/// Policies reconstructed from a checkpoint for decentralized execution.
pub enum EvalPolicies {
    Stochastic(Vec<SquashedGaussianPolicy>),
    Deterministic(Vec<Mlp>),
}

impl EvalPolicies {
    pub fn n_agents(&self) -> usize {
        match self {
            EvalPolicies::Stochastic(p) => p.len(),
            EvalPolicies::Deterministic(p) => p.len(),
        }
    }

    /// Most-likely action of one agent at a state.
    pub fn act(&self, agent: usize, state: &[f64]) -> Vec<f64> {
        let s = Tensor::from_vec(vec![1, state.len()], state.to_vec()).expect("consistent");
        let mut tape = Tape::inference();
        match self {
            EvalPolicies::Stochastic(p) => {
                p[agent].most_likely(&mut tape, &s).expect("consistent dims").values()
            }
            EvalPolicies::Deterministic(p) => {
                let pre = p[agent].forward(&mut tape, &s).expect("consistent dims");
                tape.tanh(&pre).values()
            }
        }
    }
}

pub fn read_checkpoint_file(path: &Path) -> Result<Checkpoint, HarnessError> {
    let file = fs::File::open(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(Checkpoint::read_from(&mut BufReader::new(file))?)
}

fn checkpoint_activation(ck: &Checkpoint) -> Result<Activation, HarnessError> {
    let name = ck.meta.get("activation").map(String::as_str).unwrap_or("tanh");
    Activation::from_name(name)
        .ok_or_else(|| HarnessError::Config(format!("unknown activation {name:?} in checkpoint")))
}

pub fn load_eval_policies(ck: &Checkpoint) -> Result<EvalPolicies, HarnessError> {
    let activation = checkpoint_activation(ck)?;
    let n: usize = ck
        .meta
        .get("n_agents")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| HarnessError::Config("checkpoint lacks n_agents".into()))?;
    let algo = ck.meta.get("algo").map(String::as_str).unwrap_or("r2g");
    if algo == "maddpg" {
        let policies = (0..n)
            .map(|i| mlp_from_checkpoint(ck, &format!("agent{i}/policy"), activation, false))
            .collect::<Result<_, _>>()?;
        Ok(EvalPolicies::Deterministic(policies))
    } else {
        let policies = (0..n)
            .map(|i| policy_from_checkpoint(ck, &format!("agent{i}/policy"), activation))
            .collect::<Result<_, _>>()?;
        Ok(EvalPolicies::Stochastic(policies))
    }
}

/// Deterministic evaluation: roll out most-likely actions for `episodes`
/// episodes and report the mean return per agent.
pub fn eval_policies(
    ck: &Checkpoint,
    env: &dyn MarkovGame,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    let policies = load_eval_policies(ck)?;
    let spec = env.spec();
    if policies.n_agents() != spec.n_agents {
        return Err(HarnessError::Config(format!(
            "checkpoint has {} agents, environment wants {}",
            policies.n_agents(),
            spec.n_agents
        )));
    }
    let mut rng = seeding::stream(seed, "eval");
    let mut totals = vec![0.0; spec.n_agents];
    for _ in 0..episodes {
        let mut state = env.reset(rng.next_u64());
        for _ in 0..spec.max_episode_len {
            let actions: Vec<Vec<f64>> =
                (0..spec.n_agents).map(|i| policies.act(i, &state)).collect();
            let result = env.step(&state, &actions);
            for (t, r) in totals.iter_mut().zip(&result.rewards) {
                *t += r;
            }
            if result.terminal {
                break;
            }
            state = result.next_state;
        }
    }
    Ok(totals.into_iter().map(|t| t / episodes as f64).collect())
}
