use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{AttentionConfig, BlockWeights, Mechanism};
use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

use super::adding::generate_adding;
use super::tape::{Tape, Var};

/// Records a loss row every this many optimizer steps.
pub const LOG_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seq_len: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub mechanism: Mechanism,
    pub model_dim: usize,
    pub hidden: usize,
    pub test_size: usize,
}

impl TrainConfig {
    pub fn new(mechanism: Mechanism, seed: u64) -> Self {
        Self {
            seq_len: 20,
            steps: 2000,
            batch: 32,
            lr: 1e-3,
            seed,
            mechanism,
            model_dim: 32,
            hidden: 32,
            test_size: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len < 2 {
            return Err(Error::invalid(format!("seq_len must be at least 2, got {}", self.seq_len)));
        }
        if self.batch == 0 || self.model_dim == 0 || self.hidden == 0 || self.test_size == 0 {
            return Err(Error::invalid("batch, model_dim, hidden and test_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig::new(self.seq_len, self.model_dim, self.mechanism)
    }

    /// Seed of the held-out test stream, disjoint from the training stream.
    pub fn test_seed(&self) -> u64 {
        self.seed ^ 0x5DEE_CE66_D1CE_4E5B
    }
}

/// Input projection `2 -> d`, one pre-LN block, mean-pool, scalar head.
#[derive(Debug, Clone, PartialEq)]
pub struct AddingModel {
    pub proj_w: Tensor2D,
    pub proj_b: Tensor2D,
    pub block: BlockWeights,
    pub head_w: Tensor2D,
    pub head_b: Tensor2D,
}

fn uniform_init(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor2D {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor2D::random_uniform(rows, cols, -bound, bound, rng)
}

impl AddingModel {
    /// Uniform `+-1/sqrt(fan_in)` weights; the head starts at the constant
    /// predictor 1.0 (the mean target).
    pub fn init(d: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let block = BlockWeights {
            wq: uniform_init(d, d, d, rng),
            wk: uniform_init(d, d, d, rng),
            wv: uniform_init(d, d, d, rng),
            wo: uniform_init(d, d, d, rng),
            w1: uniform_init(hidden, d, d, rng),
            b1: uniform_init(1, hidden, d, rng),
            w2: uniform_init(hidden, d, hidden, rng),
            b2: uniform_init(1, d, hidden, rng),
        };
        Self {
            proj_w: uniform_init(2, d, 2, rng),
            proj_b: uniform_init(1, d, 2, rng),
            block,
            head_w: Tensor2D::zeros(d, 1),
            head_b: Tensor2D::filled(1, 1, 1.0),
        }
    }

    pub fn tensors(&self) -> [&Tensor2D; 12] {
        let b = &self.block;
        [&self.proj_w, &self.proj_b, &b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.b1, &b.w2, &b.b2, &self.head_w, &self.head_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor2D; 12] {
        let b = &mut self.block;
        [
            &mut self.proj_w,
            &mut self.proj_b,
            &mut b.wq,
            &mut b.wk,
            &mut b.wv,
            &mut b.wo,
            &mut b.w1,
            &mut b.b1,
            &mut b.w2,
            &mut b.b2,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    /// Records every parameter as a leaf, in [`AddingModel::tensors`] order.
    pub fn record(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors().iter().map(|&t| tape.leaf(t.clone())).collect()
    }
}

/// Attention of one sequence on the tape (single head).
pub fn attention_on_tape(tape: &mut Tape, q: Var, k: Var, v: Var, cfg: &AttentionConfig) -> Result<Var> {
    match cfg.mechanism {
        Mechanism::DotProd => {
            let kt = tape.transpose(k);
            let s = tape.matmul(q, kt)?;
            let d = tape.value(q).cols() as f64;
            let s = tape.scale(s, 1.0 / d.sqrt());
            let w = tape.softmax_rows(s);
            tape.matmul(w, v)
        }
        Mechanism::Inhibitor => {
            let dist = tape.cdist_manhattan(q, k)?;
            let z = tape.scale(dist, 1.0 / cfg.gamma);
            let z = tape.shift_scores(z, cfg.alpha)?;
            if cfg.signed {
                tape.signed_inhibit(v, z)
            } else {
                tape.inhibit(v, z)
            }
        }
    }
}

/// Predictions `(batch, 1)` for a stacked `(batch * n, 2)` input.
///
/// `p` holds the parameter leaves from [`AddingModel::record`].
pub fn forward_on_tape(tape: &mut Tape, p: &[Var], x: Var, n: usize, cfg: &AttentionConfig) -> Result<Var> {
    if cfg.heads != 1 {
        return Err(Error::invalid("the trainable model has a single attention head"));
    }
    let rows = tape.value(x).rows();
    if n == 0 || !rows.is_multiple_of(n) {
        return Err(Error::invalid(format!("{rows} input rows do not split into sequences of {n}")));
    }
    let [pw, pb, wq, wk, wv, wo, w1, b1, w2, b2, hw, hb] = p else {
        return Err(Error::invalid(format!("expected 12 parameter leaves, got {}", p.len())));
    };
    let h0 = tape.matmul(x, *pw)?;
    let h0 = tape.add_row(h0, *pb)?;
    let xn = tape.layer_norm(h0);
    let q = tape.matmul(xn, *wq)?;
    let k = tape.matmul(xn, *wk)?;
    let v = tape.matmul(xn, *wv)?;
    let mut heads = Vec::with_capacity(rows / n);
    for start in (0..rows).step_by(n) {
        let qs = tape.row_slice(q, start, n)?;
        let ks = tape.row_slice(k, start, n)?;
        let vs = tape.row_slice(v, start, n)?;
        heads.push(attention_on_tape(tape, qs, ks, vs, cfg)?);
    }
    let attn = tape.vstack(&heads)?;
    let attn = tape.matmul(attn, *wo)?;
    let y = tape.add(h0, attn)?;
    let yn = tape.layer_norm(y);
    let f = tape.ffn(yn, *w1, *b1, *w2, *b2)?;
    let y = tape.add(y, f)?;
    let pooled = tape.segment_mean(y, n)?;
    let out = tape.matmul(pooled, *hw)?;
    tape.add_row(out, *hb)
}

/// Adam with the usual decay constants.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor2D], grads: &[&Tensor2D]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.data().len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            for (k, (w, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                *w -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    /// Mean training-batch loss since the previous row.
    pub train_loss: f64,
    pub test_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub rows: Vec<LogRow>,
    pub final_test_mse: f64,
}

pub const TRAIN_CSV_HEADER: &str = "step,train_loss,test_mse";

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TRAIN_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.step, r.train_loss, r.test_mse)?;
        }
        Ok(())
    }
}

fn batch_loss(
    model: &AddingModel,
    x: &Tensor2D,
    y: &Tensor2D,
    cfg: &TrainConfig,
    grads: bool,
) -> Result<(f64, Tape, Vec<Var>)> {
    let mut tape = Tape::new();
    let params = model.record(&mut tape);
    let xv = tape.leaf(x.clone());
    let yv = tape.leaf(y.clone());
    let pred = forward_on_tape(&mut tape, &params, xv, cfg.seq_len, &cfg.attention())?;
    let loss = tape.mse(pred, yv)?;
    let value = tape.value(loss)[(0, 0)];
    if grads && value.is_finite() {
        tape.backward(loss)?;
    }
    Ok((value, tape, params))
}

pub fn evaluate_mse(model: &AddingModel, x: &Tensor2D, y: &Tensor2D, cfg: &TrainConfig) -> Result<f64> {
    Ok(batch_loss(model, x, y, cfg, false)?.0)
}

/// Trains on a fresh batch per step and logs every [`LOG_EVERY`] steps and at the end.
pub fn train(cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    cfg.attention().validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(1);
    let mut model = AddingModel::init(cfg.model_dim, cfg.hidden, &mut init_rng);
    let mut data = generate_adding(cfg.seq_len, cfg.seed)?;
    let (test_x, test_y) = generate_adding(cfg.seq_len, cfg.test_seed())?.next_batch(cfg.test_size);
    let mut opt = Adam::new(cfg.lr);
    let mut rows = Vec::new();
    let (mut window, mut count) = (0.0, 0usize);
    for step in 0..=cfg.steps {
        let (x, y) = data.next_batch(cfg.batch);
        let training = step < cfg.steps;
        let (loss, tape, params) = batch_loss(&model, &x, &y, cfg, training)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        window += loss;
        count += 1;
        if step % LOG_EVERY == 0 || !training {
            let test_mse = evaluate_mse(&model, &test_x, &test_y, cfg)?;
            if !test_mse.is_finite() {
                return Err(Error::Diverged { step });
            }
            rows.push(LogRow { step, train_loss: window / count as f64, test_mse });
            (window, count) = (0.0, 0);
        }
        if training {
            let grads: Vec<&Tensor2D> = params.iter().map(|&p| tape.grad(p)).collect();
            opt.step(&mut model.tensors_mut(), &grads);
        }
    }
    let final_test_mse = rows.last().map_or(f64::NAN, |r| r.test_mse);
    Ok(TrainReport { config: cfg.clone(), rows, final_test_mse })
}
