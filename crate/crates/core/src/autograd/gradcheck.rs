use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{AttentionConfig, Mechanism};
use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

use super::tape::{Tape, Var};
use super::train::{forward_on_tape, AddingModel};

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Norm floor of the relative error: gradients smaller than this (e.g. all
/// ReLUs inactive) are compared in absolute terms instead of against roundoff.
pub const GRADCHECK_NORM_FLOOR: f64 = 1e-3;
/// Samples whose forward pass comes this close to a ReLU / `|x|` kink are redrawn.
pub const MIN_KINK_MARGIN: f64 = 1e-3;

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync>;

/// One registered backward rule: input shapes plus a forward builder.
pub struct OpCheck {
    pub name: &'static str,
    pub shapes: Vec<(usize, usize)>,
    build: Build,
}

impl OpCheck {
    pub fn new(
        name: &'static str,
        shapes: Vec<(usize, usize)>,
        build: impl Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync + 'static,
    ) -> Self {
        Self { name, shapes, build: Box::new(build) }
    }

    fn forward(&self, inputs: &[Tensor2D]) -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = (self.build)(&mut tape, &vars)?;
        Ok((tape, vars, out))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: &'static str,
    pub points: usize,
    pub rejected: usize,
    /// Largest `|g - g_fd| / max(|g|, |g_fd|, floor)` (Euclidean norms over all inputs).
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < GRADCHECK_TOL
    }
}

fn dot(a: &Tensor2D, b: &Tensor2D) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Compares the tape gradient of `sum(out * R)` (random `R`) with central
/// differences at `points` random inputs drawn from `[-1, 1]`.
pub fn gradcheck(check: &OpCheck, points: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport { name: check.name, points: 0, rejected: 0, max_rel_err: 0.0 };
    let max_draws = 1000 * points.max(1);
    while report.points < points {
        if report.points + report.rejected >= max_draws {
            return Err(Error::invalid(format!("{}: could not sample off-kink points", check.name)));
        }
        let inputs: Vec<Tensor2D> =
            check.shapes.iter().map(|&(r, c)| Tensor2D::random_uniform(r, c, -1.0, 1.0, &mut rng)).collect();
        let (mut tape, vars, out) = check.forward(&inputs)?;
        if tape.kink_margin() < MIN_KINK_MARGIN {
            report.rejected += 1;
            continue;
        }
        let (r, c) = tape.value(out).shape();
        let weights = Tensor2D::random_uniform(r, c, -1.0, 1.0, &mut rng);
        tape.backward_with(out, weights.clone())?;

        let (mut diff2, mut ana2, mut num2) = (0.0, 0.0, 0.0);
        let mut probe = inputs.clone();
        for (slot, &var) in vars.iter().enumerate() {
            for e in 0..inputs[slot].data().len() {
                let x0 = inputs[slot].data()[e];
                probe[slot].data_mut()[e] = x0 + GRADCHECK_EPS;
                let (t_plus, _, o_plus) = check.forward(&probe)?;
                probe[slot].data_mut()[e] = x0 - GRADCHECK_EPS;
                let (t_minus, _, o_minus) = check.forward(&probe)?;
                probe[slot].data_mut()[e] = x0;
                let fd = (dot(t_plus.value(o_plus), &weights) - dot(t_minus.value(o_minus), &weights))
                    / (2.0 * GRADCHECK_EPS);
                let g = tape.grad(var).data()[e];
                diff2 += (g - fd) * (g - fd);
                ana2 += g * g;
                num2 += fd * fd;
            }
        }
        let scale = ana2.sqrt().max(num2.sqrt()).max(GRADCHECK_NORM_FLOOR);
        let err = diff2.sqrt() / scale;
        report.max_rel_err = report.max_rel_err.max(err);
        report.points += 1;
    }
    Ok(report)
}

fn model_check(name: &'static str, mechanism: Mechanism) -> OpCheck {
    let (n, d, hidden, batch) = (3, 4, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let shapes: Vec<_> = AddingModel::init(d, hidden, &mut rng).tensors().iter().map(|t| t.shape()).collect();
    let mut all = shapes.clone();
    all.push((batch * n, 2));
    all.push((batch, 1));
    OpCheck::new(name, all, move |t, v| {
        let cfg = AttentionConfig::new(n, d, mechanism);
        let k = v.len();
        let pred = forward_on_tape(t, &v[..k - 2], v[k - 2], n, &cfg)?;
        t.mse(pred, v[k - 1])
    })
}

/// Every backward rule on [`Tape`], singly and composed into the full model.
pub fn registered_checks() -> Vec<OpCheck> {
    let mut signed = AttentionConfig::new(3, 4, Mechanism::Inhibitor);
    signed.signed = true;
    vec![
        OpCheck::new("matmul", vec![(3, 4), (4, 2)], |t, v| t.matmul(v[0], v[1])),
        OpCheck::new("add", vec![(2, 3), (2, 3)], |t, v| t.add(v[0], v[1])),
        OpCheck::new("sub", vec![(2, 3), (2, 3)], |t, v| t.sub(v[0], v[1])),
        OpCheck::new("add_row", vec![(3, 2), (1, 2)], |t, v| t.add_row(v[0], v[1])),
        OpCheck::new("scale", vec![(2, 3)], |t, v| Ok(t.scale(v[0], -2.5))),
        OpCheck::new("transpose", vec![(2, 3)], |t, v| Ok(t.transpose(v[0]))),
        OpCheck::new("relu", vec![(3, 3)], |t, v| Ok(t.relu(v[0]))),
        OpCheck::new("abs", vec![(3, 3)], |t, v| Ok(t.abs(v[0]))),
        OpCheck::new("cdist_manhattan", vec![(3, 4), (2, 4)], |t, v| t.cdist_manhattan(v[0], v[1])),
        OpCheck::new("shift_scores", vec![(3, 3)], |t, v| t.shift_scores(v[0], 0.25)),
        OpCheck::new("inhibit_fused", vec![(3, 4), (2, 3)], |t, v| t.inhibit(v[0], v[1])),
        OpCheck::new("signed_inhibit_fused", vec![(3, 4), (2, 3)], |t, v| t.signed_inhibit(v[0], v[1])),
        OpCheck::new("softmax_rows", vec![(3, 4)], |t, v| Ok(t.softmax_rows(v[0]))),
        OpCheck::new("layer_norm", vec![(3, 4)], |t, v| Ok(t.layer_norm(v[0]))),
        OpCheck::new("mean_pool", vec![(4, 3)], |t, v| t.mean_pool(v[0])),
        OpCheck::new("segment_mean", vec![(6, 2)], |t, v| t.segment_mean(v[0], 3)),
        OpCheck::new("row_slice_vstack", vec![(4, 2)], |t, v| {
            let a = t.row_slice(v[0], 0, 1)?;
            let b = t.row_slice(v[0], 2, 2)?;
            t.vstack(&[b, a])
        }),
        OpCheck::new("mse", vec![(3, 1), (3, 1)], |t, v| t.mse(v[0], v[1])),
        OpCheck::new("ffn", vec![(3, 4), (5, 4), (1, 5), (5, 2), (1, 2)], |t, v| t.ffn(v[0], v[1], v[2], v[3], v[4])),
        OpCheck::new("inhibitor_attention_signed", vec![(3, 4), (3, 4), (3, 4)], move |t, v| {
            super::train::attention_on_tape(t, v[0], v[1], v[2], &signed)
        }),
        model_check("model_inhibitor", Mechanism::Inhibitor),
        model_check("model_dotprod", Mechanism::DotProd),
    ]
}
