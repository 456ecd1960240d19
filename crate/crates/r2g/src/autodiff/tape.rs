use std::cell::Cell;

use super::tensor::NodeRef;
use super::{AutodiffError, Tensor};

thread_local! {
    static NEXT_TAPE_ID: Cell<u64> = const { Cell::new(1) };
}

/// Branch-free tanh built on a range-reduced exponential so the elementwise
/// loops auto-vectorize; libm's tanh is an opaque call and dominates training
/// time otherwise. Absolute error is below 1e-12 everywhere, saturating to
/// +-1.0 like the libm version does for |x| >= 20. NaN propagates: clamp
/// keeps it, floor keeps it, and the saturating cast pins the exponent term
/// to 1.0, so the final division sees NaN.
#[inline]
pub(crate) fn fast_tanh(x: f64) -> f64 {
    let a = (2.0 * x).clamp(-40.0, 40.0);
    // e^a = 2^k * e^r with r in [-ln2/2, ln2/2].
    let k = (a * std::f64::consts::LOG2_E + 0.5).floor();
    let r = a - k * std::f64::consts::LN_2;
    // Taylor series of e^r; |r| <= 0.347 keeps the truncation near 2e-13.
    let p = 1.0
        + r * (1.0
            + r * (1.0 / 2.0
                + r * (1.0 / 6.0
                    + r * (1.0 / 24.0
                        + r * (1.0 / 120.0
                            + r * (1.0 / 720.0
                                + r * (1.0 / 5040.0
                                    + r * (1.0 / 40320.0
                                        + r * (1.0 / 362_880.0 + r / 3_628_800.0)))))))));
    let two_k = f64::from_bits(((k as i64 + 1023) as u64) << 52);
    let e = two_k * p;
    (e - 1.0) / (e + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum UnaryKind {
    Tanh,
    Relu,
    Exp,
    Log,
    Square,
    Negate,
    Clamp { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

enum Rule {
    /// out = x . w + b, row-major, b broadcast over rows.
    Linear { x: usize, w: usize, b: usize, rows: usize, cols_in: usize, cols_out: usize },
    Unary { x: usize, kind: UnaryKind },
    /// User-supplied elementwise map; `df` receives the input value.
    CustomUnary { x: usize, df: Box<dyn Fn(f64) -> f64> },
    Binary { a: usize, b: usize, kind: BinaryKind },
    AddScalar { x: usize },
    MulScalar { x: usize, factor: f64 },
    SumAll { x: usize },
    MeanAll { x: usize },
    /// [rows x cols] -> [rows x 1].
    RowSum { x: usize, rows: usize, cols: usize },
    Concat { xs: Vec<usize>, widths: Vec<usize>, rows: usize },
    /// out = mu + exp(log_std) * noise.
    Reparam { mu: usize, log_std: usize, noise: usize },
}

struct Record {
    out: usize,
    rule: Rule,
}

/// Statistics from one backward pass; mainly of interest to tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackwardReport {
    /// Recorded operations replayed (each exactly once, in reverse order).
    pub records_visited: usize,
    /// Nodes registered on the tape (leaves + operation outputs).
    pub nodes_total: usize,
}

/// Records operations in execution order; replaying them backwards is a
/// single reverse-topological pass because every operation's inputs were
/// necessarily registered before its output.
#[derive(Default)]
pub struct Tape {
    id: u64,
    recording: bool,
    nodes: Vec<Tensor>,
    records: Vec<Record>,
}

impl Tape {
    pub fn new() -> Self {
        let id = NEXT_TAPE_ID.with(|c| {
            let id = c.get();
            c.set(id + 1);
            id
        });
        Tape { id, recording: true, nodes: Vec::new(), records: Vec::new() }
    }

    /// Forward-only tape: nothing is recorded and backward is impossible.
    /// For rollouts, targets, and other evaluations that never need
    /// gradients.
    pub fn inference() -> Self {
        let mut tape = Self::new();
        tape.recording = false;
        tape
    }

    pub fn num_records(&self) -> usize {
        self.records.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Node index of `t` on this tape, registering it as a leaf if needed.
    fn node_of(&mut self, t: &Tensor) -> usize {
        match t.node() {
            Some(NodeRef { tape, index }) if tape == self.id => index,
            _ => {
                let index = self.nodes.len();
                self.nodes.push(t.clone());
                t.set_node(NodeRef { tape: self.id, index });
                index
            }
        }
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, rule: impl FnOnce(&mut Self) -> Rule, track: bool) -> Tensor {
        if !track || !self.recording {
            return Tensor::from_vec(shape, values).expect("op output is consistent");
        }
        let rule = rule(self);
        let out = Tensor::param(shape, values).expect("op output is consistent");
        let out_idx = self.node_of(&out);
        self.records.push(Record { out: out_idx, rule });
        out
    }

    fn require_2d(t: &Tensor, op: &'static str) -> Result<(usize, usize), AutodiffError> {
        let shape = t.shape();
        match shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(AutodiffError::ShapeMismatch {
                op,
                detail: format!("expected a 2-d tensor, got shape {shape:?}"),
            }),
        }
    }

    /// out = x . w + b with x: [B x n], w: [n x m], b: [m].
    pub fn linear(&mut self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, AutodiffError> {
        let (rows, cols_in) = Self::require_2d(x, "linear")?;
        let (w_in, cols_out) = Self::require_2d(w, "linear")?;
        if cols_in != w_in {
            return Err(AutodiffError::ShapeMismatch {
                op: "linear",
                detail: format!("x has {cols_in} columns but w has {w_in} rows"),
            });
        }
        let b_shape = b.shape();
        if b_shape != [cols_out] {
            return Err(AutodiffError::ShapeMismatch {
                op: "linear",
                detail: format!("bias shape {b_shape:?} does not match w output width {cols_out}"),
            });
        }

        let mut out = vec![0.0; rows * cols_out];
        x.with_values(|xv| {
            w.with_values(|wv| {
                b.with_values(|bv| {
                    for i in 0..rows {
                        let orow = &mut out[i * cols_out..(i + 1) * cols_out];
                        orow.copy_from_slice(bv);
                        for k in 0..cols_in {
                            let a = xv[i * cols_in + k];
                            if a == 0.0 {
                                continue;
                            }
                            let wrow = &wv[k * cols_out..(k + 1) * cols_out];
                            for (o, wkj) in orow.iter_mut().zip(wrow) {
                                *o += a * wkj;
                            }
                        }
                    }
                })
            })
        });

        let track = x.requires_grad() || w.requires_grad() || b.requires_grad();
        Ok(self.push(
            vec![rows, cols_out],
            out,
            |t| Rule::Linear {
                x: t.node_of(x),
                w: t.node_of(w),
                b: t.node_of(b),
                rows,
                cols_in,
                cols_out,
            },
            track,
        ))
    }

    fn unary(&mut self, x: &Tensor, kind: UnaryKind) -> Result<Tensor, AutodiffError> {
        if let UnaryKind::Log = kind {
            let bad = x.with_values(|v| {
                v.iter().enumerate().find(|(_, v)| **v <= 0.0).map(|(i, v)| (i, *v))
            });
            if let Some((index, value)) = bad {
                return Err(AutodiffError::LogDomain { index, value });
            }
        }
        let out: Vec<f64> = x.with_values(|values| {
            // tanh dominates training time; give it a dedicated loop the
            // compiler can vectorize.
            if kind == UnaryKind::Tanh {
                let mut out = vec![0.0; values.len()];
                for (o, &v) in out.iter_mut().zip(values) {
                    *o = fast_tanh(v);
                }
                return out;
            }
            values
                .iter()
                .map(|&v| match kind {
                    UnaryKind::Tanh => fast_tanh(v),
                    UnaryKind::Relu => v.max(0.0),
                    UnaryKind::Exp => v.exp(),
                    UnaryKind::Log => v.ln(),
                    UnaryKind::Square => v * v,
                    UnaryKind::Negate => -v,
                    UnaryKind::Clamp { lo, hi } => v.clamp(lo, hi),
                })
                .collect()
        });
        let track = x.requires_grad();
        Ok(self.push(x.shape(), out, |t| Rule::Unary { x: t.node_of(x), kind }, track))
    }

    pub fn tanh(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, UnaryKind::Tanh).expect("tanh is total")
    }

    pub fn relu(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, UnaryKind::Relu).expect("relu is total")
    }

    pub fn exp(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, UnaryKind::Exp).expect("exp is total")
    }

    /// Natural log; every input must be strictly positive.
    pub fn log(&mut self, x: &Tensor) -> Result<Tensor, AutodiffError> {
        self.unary(x, UnaryKind::Log)
    }

    pub fn square(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, UnaryKind::Square).expect("square is total")
    }

    pub fn negate(&mut self, x: &Tensor) -> Tensor {
        self.unary(x, UnaryKind::Negate).expect("negate is total")
    }

    /// Elementwise clamp; gradient passes through wherever lo <= x <= hi.
    pub fn clamp(&mut self, x: &Tensor, lo: f64, hi: f64) -> Tensor {
        self.unary(x, UnaryKind::Clamp { lo, hi }).expect("clamp is total")
    }

    /// Elementwise map with a caller-supplied derivative. The escape hatch
    /// for one-off activations; `df` receives the *input* value.
    pub fn custom_unary(
        &mut self,
        x: &Tensor,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64 + 'static,
    ) -> Tensor {
        let out: Vec<f64> = x.with_values(|v| v.iter().map(|&v| f(v)).collect());
        let track = x.requires_grad();
        self.push(
            x.shape(),
            out,
            |t| Rule::CustomUnary { x: t.node_of(x), df: Box::new(df) },
            track,
        )
    }

    fn binary(&mut self, a: &Tensor, b: &Tensor, kind: BinaryKind, op: &'static str) -> Result<Tensor, AutodiffError> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op,
                detail: format!("operand shapes {sa:?} and {sb:?} differ"),
            });
        }
        let out: Vec<f64> = a.with_values(|av| {
            b.with_values(|bv| {
                av.iter()
                    .zip(bv)
                    .map(|(&x, &y)| match kind {
                        BinaryKind::Add => x + y,
                        BinaryKind::Sub => x - y,
                        BinaryKind::Mul => x * y,
                    })
                    .collect()
            })
        });
        let track = a.requires_grad() || b.requires_grad();
        Ok(self.push(
            sa,
            out,
            |t| Rule::Binary { a: t.node_of(a), b: t.node_of(b), kind },
            track,
        ))
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, AutodiffError> {
        self.binary(a, b, BinaryKind::Add, "add")
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, AutodiffError> {
        self.binary(a, b, BinaryKind::Sub, "sub")
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, AutodiffError> {
        self.binary(a, b, BinaryKind::Mul, "mul")
    }

    pub fn add_scalar(&mut self, x: &Tensor, c: f64) -> Tensor {
        let out: Vec<f64> = x.with_values(|v| v.iter().map(|&v| v + c).collect());
        let track = x.requires_grad();
        self.push(x.shape(), out, |t| Rule::AddScalar { x: t.node_of(x) }, track)
    }

    pub fn mul_scalar(&mut self, x: &Tensor, c: f64) -> Tensor {
        let out: Vec<f64> = x.with_values(|v| v.iter().map(|&v| v * c).collect());
        let track = x.requires_grad();
        self.push(x.shape(), out, |t| Rule::MulScalar { x: t.node_of(x), factor: c }, track)
    }

    /// Scalar sum of every element.
    pub fn sum(&mut self, x: &Tensor) -> Result<Tensor, AutodiffError> {
        if x.numel() == 0 {
            return Err(AutodiffError::EmptyTensor { op: "sum" });
        }
        let s = x.with_values(|v| v.iter().sum());
        let track = x.requires_grad();
        Ok(self.push(vec![1], vec![s], |t| Rule::SumAll { x: t.node_of(x) }, track))
    }

    /// Scalar mean of every element.
    pub fn mean(&mut self, x: &Tensor) -> Result<Tensor, AutodiffError> {
        if x.numel() == 0 {
            return Err(AutodiffError::EmptyTensor { op: "mean" });
        }
        let n = x.numel() as f64;
        let s: f64 = x.with_values(|v| v.iter().sum());
        let track = x.requires_grad();
        Ok(self.push(vec![1], vec![s / n], |t| Rule::MeanAll { x: t.node_of(x) }, track))
    }

    /// [rows x cols] -> [rows x 1], summing along each row.
    pub fn row_sum(&mut self, x: &Tensor) -> Result<Tensor, AutodiffError> {
        let (rows, cols) = Self::require_2d(x, "row_sum")?;
        let out: Vec<f64> = x.with_values(|v| {
            (0..rows).map(|i| v[i * cols..(i + 1) * cols].iter().sum()).collect()
        });
        let track = x.requires_grad();
        Ok(self.push(
            vec![rows, 1],
            out,
            |t| Rule::RowSum { x: t.node_of(x), rows, cols },
            track,
        ))
    }

    /// Row-wise concatenation of [B x d_i] tensors into [B x sum(d_i)].
    pub fn concat(&mut self, xs: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        if xs.is_empty() {
            return Err(AutodiffError::EmptyTensor { op: "concat" });
        }
        let mut rows = 0usize;
        let mut widths = Vec::with_capacity(xs.len());
        for (i, x) in xs.iter().enumerate() {
            let (r, c) = Self::require_2d(x, "concat")?;
            if i == 0 {
                rows = r;
            } else if r != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    detail: format!("input {i} has {r} rows, expected {rows}"),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut offset = 0usize;
        for (x, &w) in xs.iter().zip(&widths) {
            x.with_values(|v| {
                for i in 0..rows {
                    out[i * total + offset..i * total + offset + w]
                        .copy_from_slice(&v[i * w..(i + 1) * w]);
                }
            });
            offset += w;
        }
        let track = xs.iter().any(|x| x.requires_grad());
        Ok(self.push(
            vec![rows, total],
            out,
            |t| Rule::Concat {
                xs: xs.iter().map(|x| t.node_of(x)).collect(),
                widths,
                rows,
            },
            track,
        ))
    }

    /// out = mu + exp(log_std) * noise, differentiable w.r.t. mu and log_std.
    /// Noise is caller-supplied so all stochasticity stays outside the tape.
    pub fn reparam_sample(
        &mut self,
        mu: &Tensor,
        log_std: &Tensor,
        noise: &Tensor,
    ) -> Result<Tensor, AutodiffError> {
        let (sm, ss, sn) = (mu.shape(), log_std.shape(), noise.shape());
        if sm != ss || sm != sn {
            return Err(AutodiffError::ShapeMismatch {
                op: "reparam_sample",
                detail: format!("mu {sm:?}, log_std {ss:?}, noise {sn:?} must all match"),
            });
        }
        let out: Vec<f64> = mu.with_values(|mv| {
            log_std.with_values(|lv| {
                noise.with_values(|nv| {
                    mv.iter()
                        .zip(lv)
                        .zip(nv)
                        .map(|((&m, &ls), &n)| m + ls.exp() * n)
                        .collect()
                })
            })
        });
        let track = mu.requires_grad() || log_std.requires_grad() || noise.requires_grad();
        Ok(self.push(
            sm,
            out,
            |t| Rule::Reparam {
                mu: t.node_of(mu),
                log_std: t.node_of(log_std),
                noise: t.node_of(noise),
            },
            track,
        ))
    }

    /// Reverse pass from a scalar loss: every requires-grad tensor reachable
    /// from `loss` on this tape has the new gradient *added* to it. Each call
    /// computes adjoints from scratch, so two calls double leaf gradients.
    pub fn backward(&self, loss: &Tensor) -> Result<BackwardReport, AutodiffError> {
        if loss.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss { shape: loss.shape() });
        }
        let loss_idx = match loss.node() {
            Some(NodeRef { tape, index }) if tape == self.id => index,
            _ => return Err(AutodiffError::LossNotOnTape),
        };

        let mut adjoint: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adjoint[loss_idx] = Some(vec![1.0]);

        let mut visited = 0usize;
        for record in self.records.iter().rev() {
            visited += 1;
            let Some(g) = adjoint[record.out].take() else {
                continue;
            };
            self.propagate(record.out, &record.rule, &g, &mut adjoint);
            adjoint[record.out] = Some(g);
        }

        for (index, adj) in adjoint.into_iter().enumerate() {
            if let Some(adj) = adj {
                let t = &self.nodes[index];
                if t.requires_grad() {
                    t.grad_add(&adj);
                }
            }
        }

        Ok(BackwardReport { records_visited: visited, nodes_total: self.nodes.len() })
    }

    fn add_into(adjoint: &mut [Option<Vec<f64>>], index: usize, len: usize, f: impl FnOnce(&mut [f64])) {
        let slot = adjoint[index].get_or_insert_with(|| vec![0.0; len]);
        f(slot);
    }

    fn propagate(&self, out: usize, rule: &Rule, g: &[f64], adjoint: &mut [Option<Vec<f64>>]) {
        match rule {
            Rule::Linear { x, w, b, rows, cols_in, cols_out } => {
                let (rows, cols_in, cols_out) = (*rows, *cols_in, *cols_out);
                if self.nodes[*x].requires_grad() {
                    self.nodes[*w].with_values(|wv| {
                        Self::add_into(adjoint, *x, rows * cols_in, |dx| {
                            for i in 0..rows {
                                let grow = &g[i * cols_out..(i + 1) * cols_out];
                                for k in 0..cols_in {
                                    let wrow = &wv[k * cols_out..(k + 1) * cols_out];
                                    let mut acc = 0.0;
                                    for (gj, wkj) in grow.iter().zip(wrow) {
                                        acc += gj * wkj;
                                    }
                                    dx[i * cols_in + k] += acc;
                                }
                            }
                        });
                    });
                }
                if self.nodes[*w].requires_grad() {
                    self.nodes[*x].with_values(|xv| {
                        Self::add_into(adjoint, *w, cols_in * cols_out, |dw| {
                            for i in 0..rows {
                                let grow = &g[i * cols_out..(i + 1) * cols_out];
                                for k in 0..cols_in {
                                    let a = xv[i * cols_in + k];
                                    if a == 0.0 {
                                        continue;
                                    }
                                    let drow = &mut dw[k * cols_out..(k + 1) * cols_out];
                                    for (d, gj) in drow.iter_mut().zip(grow) {
                                        *d += a * gj;
                                    }
                                }
                            }
                        });
                    });
                }
                if self.nodes[*b].requires_grad() {
                    Self::add_into(adjoint, *b, cols_out, |db| {
                        for i in 0..rows {
                            for (d, gj) in db.iter_mut().zip(&g[i * cols_out..(i + 1) * cols_out]) {
                                *d += gj;
                            }
                        }
                    });
                }
            }
            Rule::Unary { x, kind } => {
                if !self.nodes[*x].requires_grad() {
                    return;
                }
                let n = self.nodes[*x].numel();
                match kind {
                    // tanh and exp derivatives come cheapest from the output.
                    UnaryKind::Tanh => self.nodes[out].with_values(|yv| {
                        Self::add_into(adjoint, *x, n, |dx| {
                            for ((d, gi), &y) in dx.iter_mut().zip(g).zip(yv) {
                                *d += gi * (1.0 - y * y);
                            }
                        })
                    }),
                    UnaryKind::Exp => self.nodes[out].with_values(|yv| {
                        Self::add_into(adjoint, *x, n, |dx| {
                            for ((d, gi), &y) in dx.iter_mut().zip(g).zip(yv) {
                                *d += gi * y;
                            }
                        })
                    }),
                    _ => self.nodes[*x].with_values(|xv| {
                        Self::add_into(adjoint, *x, n, |dx| {
                            for ((d, gi), &v) in dx.iter_mut().zip(g).zip(xv) {
                                *d += gi
                                    * match kind {
                                        UnaryKind::Relu => {
                                            if v > 0.0 {
                                                1.0
                                            } else {
                                                0.0
                                            }
                                        }
                                        UnaryKind::Log => 1.0 / v,
                                        UnaryKind::Square => 2.0 * v,
                                        UnaryKind::Negate => -1.0,
                                        UnaryKind::Clamp { lo, hi } => {
                                            if v >= *lo && v <= *hi {
                                                1.0
                                            } else {
                                                0.0
                                            }
                                        }
                                        UnaryKind::Tanh | UnaryKind::Exp => unreachable!(),
                                    };
                            }
                        })
                    }),
                }
            }
            Rule::CustomUnary { x, df } => {
                if !self.nodes[*x].requires_grad() {
                    return;
                }
                let n = self.nodes[*x].numel();
                self.nodes[*x].with_values(|xv| {
                    Self::add_into(adjoint, *x, n, |dx| {
                        for ((d, gi), &v) in dx.iter_mut().zip(g).zip(xv) {
                            *d += gi * df(v);
                        }
                    })
                });
            }
            Rule::Binary { a, b, kind } => {
                let n = g.len();
                match kind {
                    BinaryKind::Add => {
                        if self.nodes[*a].requires_grad() {
                            Self::add_into(adjoint, *a, n, |da| {
                                for (d, gi) in da.iter_mut().zip(g) {
                                    *d += gi;
                                }
                            });
                        }
                        if self.nodes[*b].requires_grad() {
                            Self::add_into(adjoint, *b, n, |db| {
                                for (d, gi) in db.iter_mut().zip(g) {
                                    *d += gi;
                                }
                            });
                        }
                    }
                    BinaryKind::Sub => {
                        if self.nodes[*a].requires_grad() {
                            Self::add_into(adjoint, *a, n, |da| {
                                for (d, gi) in da.iter_mut().zip(g) {
                                    *d += gi;
                                }
                            });
                        }
                        if self.nodes[*b].requires_grad() {
                            Self::add_into(adjoint, *b, n, |db| {
                                for (d, gi) in db.iter_mut().zip(g) {
                                    *d -= gi;
                                }
                            });
                        }
                    }
                    BinaryKind::Mul => {
                        if self.nodes[*a].requires_grad() {
                            self.nodes[*b].with_values(|bv| {
                                Self::add_into(adjoint, *a, n, |da| {
                                    for ((d, gi), &v) in da.iter_mut().zip(g).zip(bv) {
                                        *d += gi * v;
                                    }
                                })
                            });
                        }
                        if self.nodes[*b].requires_grad() {
                            self.nodes[*a].with_values(|av| {
                                Self::add_into(adjoint, *b, n, |db| {
                                    for ((d, gi), &v) in db.iter_mut().zip(g).zip(av) {
                                        *d += gi * v;
                                    }
                                })
                            });
                        }
                    }
                }
            }
            Rule::AddScalar { x } => {
                if self.nodes[*x].requires_grad() {
                    Self::add_into(adjoint, *x, g.len(), |dx| {
                        for (d, gi) in dx.iter_mut().zip(g) {
                            *d += gi;
                        }
                    });
                }
            }
            Rule::MulScalar { x, factor } => {
                if self.nodes[*x].requires_grad() {
                    Self::add_into(adjoint, *x, g.len(), |dx| {
                        for (d, gi) in dx.iter_mut().zip(g) {
                            *d += gi * factor;
                        }
                    });
                }
            }
            Rule::SumAll { x } => {
                if self.nodes[*x].requires_grad() {
                    let n = self.nodes[*x].numel();
                    Self::add_into(adjoint, *x, n, |dx| {
                        for d in dx.iter_mut() {
                            *d += g[0];
                        }
                    });
                }
            }
            Rule::MeanAll { x } => {
                if self.nodes[*x].requires_grad() {
                    let n = self.nodes[*x].numel();
                    let share = g[0] / n as f64;
                    Self::add_into(adjoint, *x, n, |dx| {
                        for d in dx.iter_mut() {
                            *d += share;
                        }
                    });
                }
            }
            Rule::RowSum { x, rows, cols } => {
                if self.nodes[*x].requires_grad() {
                    Self::add_into(adjoint, *x, rows * cols, |dx| {
                        for i in 0..*rows {
                            for d in &mut dx[i * cols..(i + 1) * cols] {
                                *d += g[i];
                            }
                        }
                    });
                }
            }
            Rule::Concat { xs, widths, rows } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0usize;
                for (x, &w) in xs.iter().zip(widths) {
                    if self.nodes[*x].requires_grad() {
                        Self::add_into(adjoint, *x, rows * w, |dx| {
                            for i in 0..*rows {
                                for (d, gi) in dx[i * w..(i + 1) * w]
                                    .iter_mut()
                                    .zip(&g[i * total + offset..i * total + offset + w])
                                {
                                    *d += gi;
                                }
                            }
                        });
                    }
                    offset += w;
                }
            }
            Rule::Reparam { mu, log_std, noise } => {
                let n = g.len();
                if self.nodes[*mu].requires_grad() {
                    Self::add_into(adjoint, *mu, n, |dm| {
                        for (d, gi) in dm.iter_mut().zip(g) {
                            *d += gi;
                        }
                    });
                }
                if self.nodes[*log_std].requires_grad() {
                    // d out / d log_std = sigma * noise = out - mu.
                    self.nodes[out].with_values(|yv| {
                        self.nodes[*mu].with_values(|mv| {
                            Self::add_into(adjoint, *log_std, n, |dl| {
                                for (((d, gi), &y), &m) in dl.iter_mut().zip(g).zip(yv).zip(mv) {
                                    *d += gi * (y - m);
                                }
                            })
                        })
                    });
                }
                if self.nodes[*noise].requires_grad() {
                    self.nodes[*log_std].with_values(|lv| {
                        Self::add_into(adjoint, *noise, n, |dn| {
                            for ((d, gi), &ls) in dn.iter_mut().zip(g).zip(lv) {
                                *d += gi * ls.exp();
                            }
                        })
                    });
                }
            }
        }
    }
}
