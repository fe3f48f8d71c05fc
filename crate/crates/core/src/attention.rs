//! Float reference implementations of dot-product and Inhibitor attention.
//!
//! Inhibitor attention scores query/key pairs by a scaled Manhattan distance
//! `Z[i][j] = sum_k |Q[i][k] - K[j][k]| / gamma` and applies them by
//! subtraction inside a ReLU, `H[i][k] = sum_j (V[j][k] - Z[i][j])^+`, so no
//! variable-by-variable product and no softmax is needed.
//!
//! Each inhibition has a naive form (explicit triple loop) and a fused form
//! built on `x^+ = (x + |x|)/2` and `x^- = (x - |x|)/2`, which reduces the
//! inner sum to a pairwise L1 distance between rows of `Z` and columns of `V`.
//! The naive forms are kept as oracles for the fused ones.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    DotProd,
    Inhibitor,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::DotProd => "dotprod",
            Mechanism::Inhibitor => "inhibitor",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dotprod" | "dot-prod" | "dot" => Ok(Mechanism::DotProd),
            "inhibitor" | "inhib" => Ok(Mechanism::Inhibitor),
            other => Err(Error::invalid(format!("unknown mechanism `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConfig {
    pub seq_len: usize,
    pub model_dim: usize,
    /// Divisor of the Manhattan score.
    pub gamma: f64,
    /// Constant subtracted from the Manhattan score before clamping at zero.
    pub alpha: f64,
    pub mechanism: Mechanism,
    pub signed: bool,
    pub heads: usize,
}

impl AttentionConfig {
    /// Single-head, unsigned configuration with `gamma = sqrt(d)` and `alpha = 0.5`.
    pub fn new(seq_len: usize, model_dim: usize, mechanism: Mechanism) -> Self {
        Self { seq_len, model_dim, gamma: (model_dim as f64).sqrt(), alpha: 0.5, mechanism, signed: false, heads: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.model_dim == 0 {
            return Err(Error::invalid("seq_len and model_dim must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if self.heads == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "model_dim {} is not divisible into {} heads",
                self.model_dim, self.heads
            )));
        }
        Ok(())
    }
}

fn check_qkv(op: &'static str, q: &Tensor2D, k: &Tensor2D, v: &Tensor2D) -> Result<()> {
    if q.cols() != k.cols() {
        return Err(Error::shape(op, q.shape(), k.shape()));
    }
    if k.rows() != v.rows() {
        return Err(Error::shape(op, k.shape(), v.shape()));
    }
    Ok(())
}

fn check_vz(op: &'static str, v: &Tensor2D, z: &Tensor2D) -> Result<()> {
    if z.cols() != v.rows() {
        return Err(Error::shape(op, v.shape(), z.shape()));
    }
    Ok(())
}

/// `Softmax(Q K^T / sqrt(d)) V`.
pub fn dotprod_attention(q: &Tensor2D, k: &Tensor2D, v: &Tensor2D, d: usize) -> Result<Tensor2D> {
    check_qkv("dotprod_attention", q, k, v)?;
    if d == 0 {
        return Err(Error::invalid("d must be at least 1"));
    }
    let scores = tensor::scale(&tensor::matmul(q, &k.transpose())?, 1.0 / (d as f64).sqrt());
    tensor::matmul(&tensor::softmax_rows(&scores), v)
}

pub fn manhattan_scores(q: &Tensor2D, k: &Tensor2D, gamma: f64) -> Result<Tensor2D> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    let dist = tensor::cdist_manhattan(q, k).map_err(|_| Error::shape("manhattan_scores", q.shape(), k.shape()))?;
    Ok(tensor::scale(&dist, 1.0 / gamma))
}

/// `relu(Z - alpha)`.
pub fn shift_scores(z: &Tensor2D, alpha: f64) -> Result<Tensor2D> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::invalid(format!("alpha must be non-negative, got {alpha}")));
    }
    Ok(z.map(|x| (x - alpha).max(0.0)))
}

pub fn inhibit_naive(v: &Tensor2D, z: &Tensor2D) -> Result<Tensor2D> {
    check_vz("inhibit_naive", v, z)?;
    let mut h = Tensor2D::zeros(z.rows(), v.cols());
    for i in 0..z.rows() {
        for j in 0..v.rows() {
            let zij = z[(i, j)];
            for k in 0..v.cols() {
                h[(i, k)] += (v[(j, k)] - zij).max(0.0);
            }
        }
    }
    Ok(h)
}

/// `H = 1/2 colsum(V) - 1/2 rowsum(Z) + 1/2 cdist(Z, V^T)`.
pub fn inhibit_fused(v: &Tensor2D, z: &Tensor2D) -> Result<Tensor2D> {
    check_vz("inhibit_fused", v, z)?;
    let v_sum = tensor::colsum(v);
    let z_sum = tensor::rowsum(z);
    let mut h = tensor::cdist_manhattan(z, &v.transpose())?;
    for i in 0..h.rows() {
        let zi = z_sum[(i, 0)];
        for (k, x) in h.row_mut(i).iter_mut().enumerate() {
            *x = 0.5 * (v_sum[(0, k)] - zi + *x);
        }
    }
    Ok(h)
}

pub fn signed_inhibit_naive(v: &Tensor2D, z: &Tensor2D) -> Result<Tensor2D> {
    check_vz("signed_inhibit_naive", v, z)?;
    let mut h = Tensor2D::zeros(z.rows(), v.cols());
    for i in 0..z.rows() {
        for j in 0..v.rows() {
            let zij = z[(i, j)];
            for k in 0..v.cols() {
                let x = v[(j, k)];
                let pos = x.max(0.0);
                let neg = x.min(0.0);
                h[(i, k)] += (pos - zij).max(0.0) + (neg + zij).min(0.0);
            }
        }
    }
    Ok(h)
}

/// `H = 1/2 colsum(V) + 1/2 cdist(Z, (V^+)^T) - 1/2 cdist(Z, (-V^-)^T)`.
pub fn signed_inhibit_fused(v: &Tensor2D, z: &Tensor2D) -> Result<Tensor2D> {
    check_vz("signed_inhibit_fused", v, z)?;
    let v_sum = tensor::colsum(v);
    let pos = tensor::relu(v).transpose();
    // |V^- + Z| = |Z - (-V^-)|
    let neg_flipped = tensor::negrelu(v).map(|x| -x).transpose();
    let dp = tensor::cdist_manhattan(z, &pos)?;
    let dn = tensor::cdist_manhattan(z, &neg_flipped)?;
    let mut h = Tensor2D::zeros(z.rows(), v.cols());
    for i in 0..h.rows() {
        for k in 0..h.cols() {
            h[(i, k)] = 0.5 * (v_sum[(0, k)] + dp[(i, k)] - dn[(i, k)]);
        }
    }
    Ok(h)
}

fn inhibitor_head(q: &Tensor2D, k: &Tensor2D, v: &Tensor2D, cfg: &AttentionConfig) -> Result<Tensor2D> {
    let z = shift_scores(&manhattan_scores(q, k, cfg.gamma)?, cfg.alpha)?;
    if cfg.signed {
        signed_inhibit_fused(v, &z)
    } else {
        inhibit_fused(v, &z)
    }
}

/// Inhibitor attention: Manhattan score, shift, then (signed) fused inhibition.
/// With `cfg.heads > 1` the columns are split into equal head slices that
/// share `cfg`, and the per-head outputs are concatenated.
pub fn inhibitor_attention(q: &Tensor2D, k: &Tensor2D, v: &Tensor2D, cfg: &AttentionConfig) -> Result<Tensor2D> {
    check_qkv("inhibitor_attention", q, k, v)?;
    cfg.validate()?;
    per_head(q, k, v, cfg.heads, |q, k, v| inhibitor_head(q, k, v, cfg))
}

/// Attention selected by `cfg.mechanism`.
pub fn attention(q: &Tensor2D, k: &Tensor2D, v: &Tensor2D, cfg: &AttentionConfig) -> Result<Tensor2D> {
    match cfg.mechanism {
        Mechanism::Inhibitor => inhibitor_attention(q, k, v, cfg),
        Mechanism::DotProd => {
            check_qkv("dotprod_attention", q, k, v)?;
            cfg.validate()?;
            per_head(q, k, v, cfg.heads, |q, k, v| dotprod_attention(q, k, v, q.cols()))
        }
    }
}

fn per_head(
    q: &Tensor2D,
    k: &Tensor2D,
    v: &Tensor2D,
    heads: usize,
    f: impl Fn(&Tensor2D, &Tensor2D, &Tensor2D) -> Result<Tensor2D>,
) -> Result<Tensor2D> {
    if heads <= 1 {
        return f(q, k, v);
    }
    if !q.cols().is_multiple_of(heads) || !v.cols().is_multiple_of(heads) {
        return Err(Error::invalid(format!("{} columns do not split into {heads} heads", q.cols())));
    }
    let (wq, wv) = (q.cols() / heads, v.cols() / heads);
    let outs = (0..heads)
        .map(|h| f(&q.col_slice(h * wq, wq)?, &k.col_slice(h * wq, wq)?, &v.col_slice(h * wv, wv)?))
        .collect::<Result<Vec<_>>>()?;
    Tensor2D::hcat(&outs)
}

/// Two-layer feed-forward network `relu(X W1^T + b1) W2 + b2`.
///
/// `w1` is `(hidden, d_in)`, `w2` is `(hidden, d_out)`, biases are single rows.
pub fn ffn(x: &Tensor2D, w1: &Tensor2D, b1: &Tensor2D, w2: &Tensor2D, b2: &Tensor2D) -> Result<Tensor2D> {
    let hidden = tensor::relu(&tensor::add_row(&tensor::matmul(x, &w1.transpose())?, b1)?);
    tensor::add_row(&tensor::matmul(&hidden, w2)?, b2)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-row normalization to zero mean and unit variance (no affine part).
pub fn layer_norm(x: &Tensor2D) -> Tensor2D {
    let mut out = x.clone();
    let d = x.cols() as f64;
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }
    out
}

/// Weights of one pre-LN transformer block over model dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub wq: Tensor2D,
    pub wk: Tensor2D,
    pub wv: Tensor2D,
    pub wo: Tensor2D,
    pub w1: Tensor2D,
    pub b1: Tensor2D,
    pub w2: Tensor2D,
    pub b2: Tensor2D,
}

impl BlockWeights {
    pub fn zeros(d: usize, hidden: usize) -> Self {
        Self {
            wq: Tensor2D::zeros(d, d),
            wk: Tensor2D::zeros(d, d),
            wv: Tensor2D::zeros(d, d),
            wo: Tensor2D::zeros(d, d),
            w1: Tensor2D::zeros(hidden, d),
            b1: Tensor2D::zeros(1, hidden),
            w2: Tensor2D::zeros(hidden, d),
            b2: Tensor2D::zeros(1, d),
        }
    }
}

/// `Y = X + Attn(LN(X)) W_O`, then `Y + FFN(LN(Y))`.
pub fn transformer_block(x: &Tensor2D, w: &BlockWeights, cfg: &AttentionConfig) -> Result<Tensor2D> {
    let xn = layer_norm(x);
    let q = tensor::matmul(&xn, &w.wq)?;
    let k = tensor::matmul(&xn, &w.wk)?;
    let v = tensor::matmul(&xn, &w.wv)?;
    let attn = tensor::matmul(&attention(&q, &k, &v, cfg)?, &w.wo)?;
    let y = tensor::add(x, &attn)?;
    let f = ffn(&layer_norm(&y), &w.w1, &w.b1, &w.w2, &w.b2)?;
    tensor::add(&y, &f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[&[f64]]) -> Tensor2D {
        Tensor2D::from_rows(rows)
    }

    fn max_diff(a: &Tensor2D, b: &Tensor2D) -> f64 {
        assert_eq!(a.shape(), b.shape());
        a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn dotprod_single_row_returns_value() {
        let q = t(&[&[0.3, -2.0]]);
        let k = t(&[&[5.0, 1.0]]);
        let v = t(&[&[7.0, -1.5]]);
        assert!(max_diff(&dotprod_attention(&q, &k, &v, 2).unwrap(), &v) < 1e-15);
    }

    #[test]
    fn dotprod_locks_on_diagonal_for_large_one_hot() {
        let mut q = Tensor2D::zeros(3, 3);
        for i in 0..3 {
            q[(i, i)] = 100.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = Tensor2D::random_uniform(3, 3, -1.0, 1.0, &mut rng);
        let h = dotprod_attention(&q, &q, &v, 3).unwrap();
        // off-diagonal weight is exp(-10000/sqrt 3), far below f64 epsilon
        assert!(max_diff(&h, &v) < 1e-12);
    }

    #[test]
    fn dotprod_uniform_query_gives_column_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let k = Tensor2D::random_uniform(4, 2, -1.0, 1.0, &mut rng);
        let v = Tensor2D::random_uniform(4, 2, -1.0, 1.0, &mut rng);
        let h = dotprod_attention(&Tensor2D::zeros(3, 2), &k, &v, 2).unwrap();
        let mean = tensor::scale(&tensor::colsum(&v), 0.25);
        for i in 0..3 {
            for c in 0..2 {
                assert!((h[(i, c)] - mean[(0, c)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn manhattan_cases() {
        let q = t(&[&[1.0, 2.0]]);
        let k = t(&[&[1.0, 2.0], &[3.0, 0.0]]);
        assert_eq!(manhattan_scores(&q, &k, 1.0).unwrap(), t(&[&[0.0, 4.0]]));
        assert_eq!(manhattan_scores(&q, &k, 2.0).unwrap(), t(&[&[0.0, 2.0]]));
        assert!(manhattan_scores(&q, &k, 0.0).is_err());
        assert!(manhattan_scores(&q, &Tensor2D::zeros(1, 3), 1.0).is_err());
    }

    #[test]
    fn shift_cases() {
        let z = t(&[&[0.3, 0.7]]);
        assert_eq!(shift_scores(&z, 0.0).unwrap(), z);
        let s = shift_scores(&z, 0.5).unwrap();
        assert_eq!(s[(0, 0)], 0.0);
        assert!((s[(0, 1)] - 0.2).abs() < 1e-15);
        assert_eq!(shift_scores(&z, 0.7).unwrap(), Tensor2D::zeros(1, 2));
        assert!(shift_scores(&z, -0.1).is_err());
    }

    #[test]
    fn inhibition_hand_example() {
        let v = t(&[&[5.0, -1.0], &[2.0, 3.0]]);
        let z = t(&[&[0.0, 4.0]]);
        assert_eq!(inhibit_naive(&v, &z).unwrap(), t(&[&[5.0, 0.0]]));
        assert_eq!(inhibit_fused(&v, &z).unwrap(), t(&[&[5.0, 0.0]]));
        assert_eq!(signed_inhibit_naive(&v, &z).unwrap(), t(&[&[5.0, -1.0]]));
        assert_eq!(signed_inhibit_fused(&v, &z).unwrap(), t(&[&[5.0, -1.0]]));
    }

    #[test]
    fn zero_scores() {
        let v = t(&[&[5.0, -1.0], &[2.0, 3.0]]);
        let z = Tensor2D::zeros(3, 2);
        let pos_sum = tensor::colsum(&tensor::relu(&v));
        let h = inhibit_naive(&v, &z).unwrap();
        for i in 0..3 {
            assert_eq!(h.row(i), pos_sum.row(0));
        }
        let h = signed_inhibit_naive(&v, &z).unwrap();
        let h2 = signed_inhibit_fused(&v, &z).unwrap();
        for i in 0..3 {
            assert_eq!(h.row(i), &[7.0, 2.0]);
            assert_eq!(h2.row(i), &[7.0, 2.0]);
        }
        let vp = tensor::relu(&v);
        let h = inhibit_fused(&vp, &z).unwrap();
        assert_eq!(h.row(0), tensor::colsum(&vp).row(0));
    }

    #[test]
    fn large_scores_extinguish_row() {
        let v = t(&[&[5.0, -1.0], &[2.0, 3.0]]);
        let z = t(&[&[5.0, 3.0], &[0.0, 0.0]]);
        let h = inhibit_naive(&v, &z).unwrap();
        assert_eq!(h.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn inhibition_shape_errors() {
        let v = Tensor2D::zeros(3, 2);
        let z = Tensor2D::zeros(2, 2);
        assert!(inhibit_naive(&v, &z).is_err());
        assert!(inhibit_fused(&v, &z).is_err());
        assert!(signed_inhibit_naive(&v, &z).is_err());
        assert!(signed_inhibit_fused(&v, &z).is_err());
    }

    #[test]
    fn inhibitor_single_row_passes_value() {
        let mut cfg = AttentionConfig::new(1, 2, Mechanism::Inhibitor);
        cfg.alpha = 0.0;
        let q = t(&[&[0.4, -0.2]]);
        let v = t(&[&[1.5, 0.25]]);
        assert_eq!(inhibitor_attention(&q, &q, &v, &cfg).unwrap(), v);
    }

    #[test]
    fn inhibitor_matches_step_by_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = Tensor2D::random_uniform(5, 4, -1.0, 1.0, &mut rng);
        let k = Tensor2D::random_uniform(5, 4, -1.0, 1.0, &mut rng);
        let v = Tensor2D::random_uniform(5, 4, -1.0, 1.0, &mut rng);
        for signed in [false, true] {
            let mut cfg = AttentionConfig::new(5, 4, Mechanism::Inhibitor);
            cfg.signed = signed;
            let z = shift_scores(&manhattan_scores(&q, &k, 2.0).unwrap(), 0.5).unwrap();
            let expected = if signed { signed_inhibit_naive(&v, &z).unwrap() } else { inhibit_naive(&v, &z).unwrap() };
            let got = inhibitor_attention(&q, &k, &v, &cfg).unwrap();
            assert!(max_diff(&got, &expected) < 1e-12);
        }
    }

    #[test]
    fn larger_gamma_never_inhibits_more() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let q = Tensor2D::random_uniform(6, 3, -1.0, 1.0, &mut rng);
        let k = Tensor2D::random_uniform(6, 3, -1.0, 1.0, &mut rng);
        let v = Tensor2D::random_uniform(6, 3, -1.0, 1.0, &mut rng);
        let mut cfg = AttentionConfig::new(6, 3, Mechanism::Inhibitor);
        let mut prev = inhibitor_attention(&q, &k, &v, &cfg).unwrap();
        for _ in 0..6 {
            cfg.gamma *= 2.0;
            let next = inhibitor_attention(&q, &k, &v, &cfg).unwrap();
            for (a, b) in prev.data().iter().zip(next.data()) {
                assert!(b + 1e-12 >= *a);
            }
            prev = next;
        }
    }

    #[test]
    fn multi_head_concatenates_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let q = Tensor2D::random_uniform(3, 4, -1.0, 1.0, &mut rng);
        let k = Tensor2D::random_uniform(3, 4, -1.0, 1.0, &mut rng);
        let v = Tensor2D::random_uniform(3, 4, -1.0, 1.0, &mut rng);
        let mut cfg = AttentionConfig::new(3, 4, Mechanism::Inhibitor);
        cfg.heads = 2;
        let h = inhibitor_attention(&q, &k, &v, &cfg).unwrap();
        let single = AttentionConfig { heads: 1, ..cfg.clone() };
        let h0 = inhibitor_attention(
            &q.col_slice(0, 2).unwrap(),
            &k.col_slice(0, 2).unwrap(),
            &v.col_slice(0, 2).unwrap(),
            &single,
        )
        .unwrap();
        assert_eq!(h.col_slice(0, 2).unwrap(), h0);
        cfg.heads = 3;
        assert!(inhibitor_attention(&q, &k, &v, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = AttentionConfig::new(4, 16, Mechanism::Inhibitor);
        assert_eq!(cfg.gamma, 4.0);
        assert_eq!(cfg.alpha, 0.5);
        assert!(cfg.validate().is_ok());
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_err());
        cfg.gamma = 1.0;
        cfg.alpha = -1.0;
        assert!(cfg.validate().is_err());
        assert_eq!("dotprod".parse::<Mechanism>().unwrap(), Mechanism::DotProd);
        assert!("softmax".parse::<Mechanism>().is_err());
    }

    #[test]
    fn ffn_cases() {
        let x = t(&[&[1.0, 2.0], &[0.5, 0.0]]);
        let eye = Tensor2D::identity(2);
        let zero = Tensor2D::zeros(1, 2);
        assert_eq!(ffn(&x, &eye, &zero, &eye, &zero).unwrap(), x);

        let neg = t(&[&[-1.0, -2.0], &[-0.5, -3.0]]);
        let b2 = t(&[&[0.25, -4.0]]);
        let h = ffn(&neg, &eye, &zero, &eye, &b2).unwrap();
        assert_eq!(h.row(0), b2.row(0));
        assert_eq!(h.row(1), b2.row(0));

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = Tensor2D::random_uniform(3, 4, -1.0, 1.0, &mut rng);
        let w1 = Tensor2D::random_uniform(5, 4, -1.0, 1.0, &mut rng);
        let b1 = Tensor2D::random_uniform(1, 5, -1.0, 1.0, &mut rng);
        let w2 = Tensor2D::random_uniform(5, 2, -1.0, 1.0, &mut rng);
        let b2 = Tensor2D::random_uniform(1, 2, -1.0, 1.0, &mut rng);
        let mut expected = Tensor2D::zeros(3, 2);
        for i in 0..3 {
            for o in 0..2 {
                let mut acc = b2[(0, o)];
                for h in 0..5 {
                    let mut pre = b1[(0, h)];
                    for c in 0..4 {
                        pre += x[(i, c)] * w1[(h, c)];
                    }
                    acc += pre.max(0.0) * w2[(h, o)];
                }
                expected[(i, o)] = acc;
            }
        }
        assert!(max_diff(&ffn(&x, &w1, &b1, &w2, &b2).unwrap(), &expected) < 1e-12);
    }

    #[test]
    fn block_zero_weights_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = Tensor2D::random_uniform(4, 3, -1.0, 1.0, &mut rng);
        let w = BlockWeights::zeros(3, 6);
        for mech in [Mechanism::DotProd, Mechanism::Inhibitor] {
            let cfg = AttentionConfig::new(4, 3, mech);
            assert_eq!(transformer_block(&x, &w, &cfg).unwrap(), x);
        }
    }

    #[test]
    fn block_dotprod_two_by_two_by_hand() {
        let x = t(&[&[1.0, 3.0], &[2.0, -2.0]]);
        let eye = Tensor2D::identity(2);
        let w = BlockWeights {
            wq: eye.clone(),
            wk: eye.clone(),
            wv: eye.clone(),
            wo: eye.clone(),
            w1: eye.clone(),
            b1: Tensor2D::zeros(1, 2),
            w2: eye.clone(),
            b2: Tensor2D::zeros(1, 2),
        };
        let cfg = AttentionConfig::new(2, 2, Mechanism::DotProd);
        // row 0 has mean 2 and variance 1, row 1 mean 0 and variance 4
        let e0 = 1.0 / (1.0 + LAYER_NORM_EPS).sqrt();
        let e1 = 2.0 / (4.0 + LAYER_NORM_EPS).sqrt();
        let xn = [[-e0, e0], [e1, -e1]];
        let r2 = 2f64.sqrt();
        let mut attn = [[0.0; 2]; 2];
        for i in 0..2 {
            let s: Vec<f64> = (0..2).map(|j| ((xn[i][0] * xn[j][0] + xn[i][1] * xn[j][1]) / r2).exp()).collect();
            let total = s[0] + s[1];
            for c in 0..2 {
                attn[i][c] = (s[0] * xn[0][c] + s[1] * xn[1][c]) / total;
            }
        }
        let y = [[1.0 + attn[0][0], 3.0 + attn[0][1]], [2.0 + attn[1][0], -2.0 + attn[1][1]]];
        let mut expected = Tensor2D::zeros(2, 2);
        for i in 0..2 {
            let m = (y[i][0] + y[i][1]) / 2.0;
            let var = ((y[i][0] - m).powi(2) + (y[i][1] - m).powi(2)) / 2.0;
            let s = (var + LAYER_NORM_EPS).sqrt();
            for c in 0..2 {
                expected[(i, c)] = y[i][c] + ((y[i][c] - m) / s).max(0.0);
            }
        }
        let got = transformer_block(&x, &w, &cfg).unwrap();
        assert!(max_diff(&got, &expected) < 1e-12, "{got:?} vs {expected:?}");
    }

    #[test]
    fn block_preserves_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for (n, d) in [(1, 1), (3, 4), (7, 2)] {
            let x = Tensor2D::random_uniform(n, d, -1.0, 1.0, &mut rng);
            let mut w = BlockWeights::zeros(d, 2 * d);
            w.wq = Tensor2D::random_uniform(d, d, -1.0, 1.0, &mut rng);
            w.wv = Tensor2D::random_uniform(d, d, -1.0, 1.0, &mut rng);
            w.wo = Tensor2D::random_uniform(d, d, -1.0, 1.0, &mut rng);
            for mech in [Mechanism::DotProd, Mechanism::Inhibitor] {
                let cfg = AttentionConfig::new(n, d, mech);
                assert_eq!(transformer_block(&x, &w, &cfg).unwrap().shape(), (n, d));
            }
        }
    }
}
