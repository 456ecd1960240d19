//! Network architectures and distribution heads: small dense MLPs,
//! tanh-squashed diagonal-Gaussian policies, central critics over joint
//! actions, central actors conditioned on opponents' actions, soft target
//! updates, and bit-exact parameter checkpoints.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor};

/// Epsilon inside the tanh change-of-variables correction term.
pub const SQUASH_EPS: f64 = 1e-6;
/// Clamp bounds for the log standard deviation head.
pub const LOG_STD_BOUNDS: (f64, f64) = (-20.0, 2.0);
/// Final layers of heads and critics start near zero so initial policies are
/// centered and initial value estimates are flat.
const FINAL_LAYER_SCALE: f64 = 1e-3;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// One affine layer.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    /// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Self::init_scaled(fan_in, fan_out, 1.0 / (fan_in as f64).sqrt(), rng)
    }

    /// Near-zero variant for output heads.
    pub fn init_near_zero(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Self::init_scaled(fan_in, fan_out, FINAL_LAYER_SCALE, rng)
    }

    fn init_scaled(fan_in: usize, fan_out: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Linear {
            w: Tensor::param(vec![fan_in, fan_out], w).expect("consistent shape"),
            b: Tensor::param(vec![fan_out], vec![0.0; fan_out]).expect("consistent shape"),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, AutodiffError> {
        tape.linear(x, &self.w, &self.b)
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[1]
    }

    /// Fresh storage with the same values. `Clone` only clones handles, so
    /// target networks must use this instead.
    pub fn deep_clone(&self) -> Self {
        Linear {
            w: Tensor::param(self.w.shape(), self.w.values()).expect("consistent"),
            b: Tensor::param(self.b.shape(), self.b.values()).expect("consistent"),
        }
    }
}

/// Dense feed-forward stack. `activate_final` distinguishes feature trunks
/// (activated output, heads attach on top) from value networks (linear
/// output).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    pub activate_final: bool,
}

impl Mlp {
    /// `dims` chains layer sizes, e.g. `[4, 16, 16, 1]`. When the output is
    /// linear (a value network), the last layer starts near zero.
    pub fn init(
        dims: &[usize],
        activation: Activation,
        activate_final: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output dims");
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                if i == last && !activate_final {
                    Linear::init_near_zero(pair[0], pair[1], rng)
                } else {
                    Linear::init(pair[0], pair[1], rng)
                }
            })
            .collect();
        Mlp { layers, activation, activate_final }
    }

    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, AutodiffError> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, &h)?;
            if i < last || self.activate_final {
                h = match self.activation {
                    Activation::Tanh => tape.tanh(&h),
                    Activation::Relu => tape.relu(&h),
                };
            }
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<Tensor> {
        self.layers.iter().flat_map(|l| [l.w.clone(), l.b.clone()]).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn deep_clone(&self) -> Self {
        Mlp {
            layers: self.layers.iter().map(Linear::deep_clone).collect(),
            activation: self.activation,
            activate_final: self.activate_final,
        }
    }
}

/// A reparameterized draw from a squashed-Gaussian head.
pub struct PolicySample {
    /// Squashed action in (-1, 1), shape [B x d].
    pub action: Tensor,
    /// Joint log-density of the squashed sample, shape [B x 1].
    pub log_prob: Tensor,
}

/// Stochastic policy: MLP trunk, mean and log-std heads, tanh squashing.
/// Emitted actions always lie strictly inside (-1, 1); log-std is clamped
/// to [`LOG_STD_BOUNDS`].
#[derive(Debug, Clone)]
pub struct SquashedGaussianPolicy {
    pub trunk: Mlp,
    pub mean_head: Linear,
    pub log_std_head: Linear,
    pub action_dim: usize,
}

impl SquashedGaussianPolicy {
    pub fn init(
        input_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        let trunk = Mlp::init(&dims, activation, true, rng);
        let feat = *dims.last().expect("non-empty dims");
        SquashedGaussianPolicy {
            trunk,
            mean_head: Linear::init_near_zero(feat, action_dim, rng),
            log_std_head: Linear::init_near_zero(feat, action_dim, rng),
            action_dim,
        }
    }

    /// Mean and clamped log-std of the pre-squash Gaussian, each [B x d].
    pub fn distribution_params(
        &self,
        tape: &mut Tape,
        input: &Tensor,
    ) -> Result<(Tensor, Tensor), AutodiffError> {
        let feat = self.trunk.forward(tape, input)?;
        let mu = self.mean_head.forward(tape, &feat)?;
        let log_std = self.log_std_head.forward(tape, &feat)?;
        let log_std = tape.clamp(&log_std, LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1);
        Ok((mu, log_std))
    }

    /// Reparameterized sample a = tanh(mu + sigma * noise) with its log
    /// density, including the tanh change-of-variables correction
    /// sum_d log(1 - tanh^2(u) + eps).
    pub fn sample(
        &self,
        tape: &mut Tape,
        input: &Tensor,
        noise: &Tensor,
    ) -> Result<PolicySample, AutodiffError> {
        let (mu, log_std) = self.distribution_params(tape, input)?;
        let u = tape.reparam_sample(&mu, &log_std, noise)?;
        let action = tape.tanh(&u);

        // Gaussian log density of u given (mu, sigma): with u = mu + sigma*z
        // the quadratic term is just -z^2/2, a constant on the tape.
        let z_term: Vec<f64> =
            noise.values().iter().map(|z| -0.5 * z * z - 0.5 * LN_2PI).collect();
        let z_term = Tensor::from_vec(noise.shape(), z_term)?;
        let gauss = tape.sub(&z_term, &log_std)?;

        let squared = tape.square(&action);
        let neg = tape.negate(&squared);
        let jac = tape.add_scalar(&neg, 1.0 + SQUASH_EPS);
        let correction = tape.log(&jac)?;
        let per_dim = tape.sub(&gauss, &correction)?;
        let log_prob = tape.row_sum(&per_dim)?;
        Ok(PolicySample { action, log_prob })
    }

    /// Deterministic evaluation action tanh(mu).
    pub fn most_likely(&self, tape: &mut Tape, input: &Tensor) -> Result<Tensor, AutodiffError> {
        let (mu, _) = self.distribution_params(tape, input)?;
        Ok(tape.tanh(&mu))
    }

    pub fn params(&self) -> Vec<Tensor> {
        let mut p = self.trunk.params();
        p.extend([
            self.mean_head.w.clone(),
            self.mean_head.b.clone(),
            self.log_std_head.w.clone(),
            self.log_std_head.b.clone(),
        ]);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.in_dim()
    }
}

/// Critic over the global state and the joint action,
/// Q(s, a_i, a_{-i}) -> scalar per batch row.
#[derive(Debug, Clone)]
pub struct CentralCritic {
    pub net: Mlp,
}

impl CentralCritic {
    /// `joint_action_dim` is the sum of all agents' action dims; for an
    /// independent-critic variant pass just the agent's own dim.
    pub fn init(
        state_dim: usize,
        joint_action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![state_dim + joint_action_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        CentralCritic { net: Mlp::init(&dims, activation, false, rng) }
    }

    /// Forward pass over concat(state, actions...); differentiable w.r.t.
    /// every input and parameter.
    pub fn value(
        &self,
        tape: &mut Tape,
        state: &Tensor,
        actions: &[&Tensor],
    ) -> Result<Tensor, AutodiffError> {
        let mut parts = vec![state];
        parts.extend_from_slice(actions);
        let input = tape.concat(&parts)?;
        self.net.forward(tape, &input)
    }

    pub fn params(&self) -> Vec<Tensor> {
        self.net.params()
    }

    pub fn input_dim(&self) -> usize {
        self.net.in_dim()
    }

    pub fn deep_clone(&self) -> Self {
        CentralCritic { net: self.net.deep_clone() }
    }
}

/// Best-response network: a squashed-Gaussian policy over
/// concat(state, opponents' actions).
#[derive(Debug, Clone)]
pub struct CentralActor {
    pub policy: SquashedGaussianPolicy,
}

impl CentralActor {
    pub fn init(
        state_dim: usize,
        opponents_action_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        CentralActor {
            policy: SquashedGaussianPolicy::init(
                state_dim + opponents_action_dim,
                action_dim,
                hidden,
                activation,
                rng,
            ),
        }
    }

    /// Sampled best response conditioned on opponents' actions.
    pub fn act(
        &self,
        tape: &mut Tape,
        state: &Tensor,
        opponents: &Tensor,
        noise: &Tensor,
    ) -> Result<PolicySample, AutodiffError> {
        let input = tape.concat(&[state, opponents])?;
        self.policy.sample(tape, &input, noise)
    }

    /// Deterministic best response tanh(mu).
    pub fn most_likely(
        &self,
        tape: &mut Tape,
        state: &Tensor,
        opponents: &Tensor,
    ) -> Result<Tensor, AutodiffError> {
        let input = tape.concat(&[state, opponents])?;
        self.policy.most_likely(tape, &input)
    }

    pub fn params(&self) -> Vec<Tensor> {
        self.policy.params()
    }
}

/// theta_target <- tau * theta_online + (1 - tau) * theta_target, per tensor.
pub fn soft_update(target: &[Tensor], online: &[Tensor], tau: f64) -> Result<(), AutodiffError> {
    assert!((0.0..=1.0).contains(&tau), "tau must lie in [0, 1]");
    if target.len() != online.len() {
        return Err(AutodiffError::ShapeMismatch {
            op: "soft_update",
            detail: format!("{} target tensors vs {} online tensors", target.len(), online.len()),
        });
    }
    for (t, o) in target.iter().zip(online) {
        if t.shape() != o.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "soft_update",
                detail: format!("target {:?} vs online {:?}", t.shape(), o.shape()),
            });
        }
        let blended: Vec<f64> = o
            .values()
            .iter()
            .zip(t.values())
            .map(|(ov, tv)| tau * ov + (1.0 - tau) * tv)
            .collect();
        t.set_values(&blended);
    }
    Ok(())
}

/// Copy online values into the target exactly (soft update with tau = 1).
pub fn hard_update(target: &[Tensor], online: &[Tensor]) -> Result<(), AutodiffError> {
    soft_update(target, online, 1.0)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad checkpoint header: {0}")]
    BadHeader(String),
    #[error("malformed checkpoint line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
}

/// Named-tensor container with a small metadata map. The on-disk format is
/// line oriented and stores every f64 as its raw bit pattern in hex, so a
/// write/read cycle is bit-exact.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub const FORMAT_TAG: &'static str = "r2g-checkpoint v1";

    pub fn push_tensor(&mut self, name: &str, t: &Tensor) {
        self.tensors.push((name.to_string(), t.shape(), t.values()));
    }

    pub fn get(&self, name: &str) -> Result<(&[usize], &[f64]), CheckpointError> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, shape, values)| (shape.as_slice(), values.as_slice()))
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))
    }

    /// Load values into an existing tensor by name, shape-checked.
    pub fn load_into(&self, name: &str, t: &Tensor) -> Result<(), CheckpointError> {
        let (shape, values) = self.get(name)?;
        if t.shape() != shape {
            return Err(CheckpointError::Malformed {
                line: 0,
                detail: format!("tensor {name}: shape {:?} vs expected {:?}", shape, t.shape()),
            });
        }
        t.set_values(values);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}", Self::FORMAT_TAG)?;
        for (key, value) in &self.meta {
            writeln!(w, "meta {key} {value}")?;
        }
        for (name, shape, values) in &self.tensors {
            write!(w, "tensor {name} {}", shape.len())?;
            for d in shape {
                write!(w, " {d}")?;
            }
            writeln!(w)?;
            for chunk in values.chunks(8) {
                let line: Vec<String> =
                    chunk.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        writeln!(w, "end")
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self, CheckpointError> {
        let mut lines = r.lines().enumerate();
        let (_, header) =
            lines.next().ok_or_else(|| CheckpointError::BadHeader("empty file".into()))?;
        let header = header?;
        if header.trim() != Self::FORMAT_TAG {
            return Err(CheckpointError::BadHeader(header));
        }

        let mut ck = Checkpoint::default();
        let mut pending: Option<(String, Vec<usize>, usize, Vec<f64>)> = None;
        for (idx, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some((name, shape, numel, mut values)) = pending.take() {
                for token in line.split_whitespace() {
                    let bits = u64::from_str_radix(token, 16).map_err(|e| {
                        CheckpointError::Malformed { line: idx + 1, detail: e.to_string() }
                    })?;
                    values.push(f64::from_bits(bits));
                }
                match values.len().cmp(&numel) {
                    std::cmp::Ordering::Less => pending = Some((name, shape, numel, values)),
                    std::cmp::Ordering::Equal => ck.tensors.push((name, shape, values)),
                    std::cmp::Ordering::Greater => {
                        return Err(CheckpointError::Malformed {
                            line: idx + 1,
                            detail: format!("tensor {name} has too many values"),
                        })
                    }
                }
                continue;
            }
            if line == "end" {
                return Ok(ck);
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| CheckpointError::Malformed {
                        line: idx + 1,
                        detail: "meta line without key".into(),
                    })?;
                    let value: Vec<&str> = parts.collect();
                    ck.meta.insert(key.to_string(), value.join(" "));
                }
                Some("tensor") => {
                    let name = parts
                        .next()
                        .ok_or_else(|| CheckpointError::Malformed {
                            line: idx + 1,
                            detail: "tensor line without name".into(),
                        })?
                        .to_string();
                    let ndim: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(
                        || CheckpointError::Malformed {
                            line: idx + 1,
                            detail: "tensor line without rank".into(),
                        },
                    )?;
                    let shape: Vec<usize> =
                        parts.take(ndim).map(|s| s.parse().unwrap_or(0)).collect();
                    if shape.len() != ndim || shape.contains(&0) {
                        return Err(CheckpointError::Malformed {
                            line: idx + 1,
                            detail: format!("bad shape for tensor {name}"),
                        });
                    }
                    let numel = shape.iter().product();
                    pending = Some((name, shape, numel, Vec::new()));
                }
                other => {
                    return Err(CheckpointError::Malformed {
                        line: idx + 1,
                        detail: format!("unexpected token {other:?}"),
                    });
                }
            }
        }
        Err(CheckpointError::BadHeader("missing end marker".into()))
    }
}

/// Record an MLP's layers under `prefix/layer{n}/{w,b}`.
pub fn push_mlp(ck: &mut Checkpoint, prefix: &str, mlp: &Mlp) {
    for (l, layer) in mlp.layers.iter().enumerate() {
        ck.push_tensor(&format!("{prefix}/layer{l}/w"), &layer.w);
        ck.push_tensor(&format!("{prefix}/layer{l}/b"), &layer.b);
    }
}

/// Rebuild an MLP from `prefix/layer{n}/...`; shapes come from the stored
/// tensors themselves.
pub fn mlp_from_checkpoint(
    ck: &Checkpoint,
    prefix: &str,
    activation: Activation,
    activate_final: bool,
) -> Result<Mlp, CheckpointError> {
    let mut layers = Vec::new();
    for l in 0.. {
        let w_name = format!("{prefix}/layer{l}/w");
        if ck.get(&w_name).is_err() {
            break;
        }
        let (w_shape, w_vals) = ck.get(&w_name)?;
        let (b_shape, b_vals) = ck.get(&format!("{prefix}/layer{l}/b"))?;
        layers.push(Linear {
            w: Tensor::param(w_shape.to_vec(), w_vals.to_vec())
                .map_err(|e| CheckpointError::Malformed { line: 0, detail: e.to_string() })?,
            b: Tensor::param(b_shape.to_vec(), b_vals.to_vec())
                .map_err(|e| CheckpointError::Malformed { line: 0, detail: e.to_string() })?,
        });
    }
    if layers.is_empty() {
        return Err(CheckpointError::MissingTensor(format!("{prefix}/layer0/w")));
    }
    Ok(Mlp { layers, activation, activate_final })
}

/// Record a squashed-Gaussian policy under `prefix/{trunk,mean,logstd}`.
pub fn push_policy(ck: &mut Checkpoint, prefix: &str, policy: &SquashedGaussianPolicy) {
    push_mlp(ck, &format!("{prefix}/trunk"), &policy.trunk);
    ck.push_tensor(&format!("{prefix}/mean/w"), &policy.mean_head.w);
    ck.push_tensor(&format!("{prefix}/mean/b"), &policy.mean_head.b);
    ck.push_tensor(&format!("{prefix}/logstd/w"), &policy.log_std_head.w);
    ck.push_tensor(&format!("{prefix}/logstd/b"), &policy.log_std_head.b);
}

pub fn policy_from_checkpoint(
    ck: &Checkpoint,
    prefix: &str,
    activation: Activation,
) -> Result<SquashedGaussianPolicy, CheckpointError> {
    let trunk = mlp_from_checkpoint(ck, &format!("{prefix}/trunk"), activation, true)?;
    let load_linear = |name: &str| -> Result<Linear, CheckpointError> {
        let (w_shape, w_vals) = ck.get(&format!("{prefix}/{name}/w"))?;
        let (b_shape, b_vals) = ck.get(&format!("{prefix}/{name}/b"))?;
        Ok(Linear {
            w: Tensor::param(w_shape.to_vec(), w_vals.to_vec())
                .map_err(|e| CheckpointError::Malformed { line: 0, detail: e.to_string() })?,
            b: Tensor::param(b_shape.to_vec(), b_vals.to_vec())
                .map_err(|e| CheckpointError::Malformed { line: 0, detail: e.to_string() })?,
        })
    };
    let mean_head = load_linear("mean")?;
    let log_std_head = load_linear("logstd")?;
    let action_dim = mean_head.out_dim();
    Ok(SquashedGaussianPolicy { trunk, mean_head, log_std_head, action_dim })
}
