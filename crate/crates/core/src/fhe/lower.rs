//! Lowering of both attention mechanisms to integer circuits.
//!
//! Inputs are `Q`, `K`, `V` (each `n x d`, row-major, in that order), signed
//! `bits`-bit integers read as fixed point with scale `2^-(bits-1)`.
//!
//! The inhibitor needs one `abs` table per `(i, j, k)` for the score and one
//! `relu` table per `(i, j, k)` for the inhibition: `2 n^2 d` bootstraps and
//! no ciphertext products. A rescaled or shifted score (`gamma_shift > 0` or
//! `alpha_q > 0`) costs one more table per `(i, j)`.
//!
//! The dot-product baseline computes `Q K^T` with `n^2 d` PBS products, maps
//! each score through an `exp` table (with `1/sqrt(d)` and a static max
//! subtraction folded in) and forms `n^2 d` weight-value products. Softmax
//! division is left to the decrypting client: outputs are the `n x d`
//! numerators followed by the `n` denominators.

use crate::attention::Mechanism;
use crate::error::{Error, Result};
use crate::quant::round_shift_right;

use super::circuit::{CircuitGraph, CircuitMeta, Interval, NodeId, DEFAULT_PRECISION, MAX_PRECISION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoweringConfig {
    pub seq_len: usize,
    pub dim: usize,
    /// Signed width of every circuit input.
    pub bits: u32,
    /// Largest lookup-table input width.
    pub precision: u32,
    /// Inhibitor score divisor `2^gamma_shift`.
    pub gamma_shift: u32,
    /// Inhibitor score shift, in input units.
    pub alpha_q: i64,
}

impl LoweringConfig {
    /// Raw Manhattan score (`gamma_shift = 0`, `alpha_q = 0`), 7-bit tables.
    pub fn new(seq_len: usize, dim: usize, bits: u32) -> Self {
        Self { seq_len, dim, bits, precision: DEFAULT_PRECISION, gamma_shift: 0, alpha_q: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.dim == 0 {
            return Err(Error::invalid("seq_len and dim must be at least 1"));
        }
        if !(2..=MAX_PRECISION).contains(&self.bits) {
            return Err(Error::invalid(format!("input bits must be in 2..={MAX_PRECISION}, got {}", self.bits)));
        }
        if self.alpha_q < 0 {
            return Err(Error::invalid(format!("alpha_q must be non-negative, got {}", self.alpha_q)));
        }
        if self.gamma_shift > 30 {
            return Err(Error::invalid(format!("gamma_shift {} is out of range", self.gamma_shift)));
        }
        Ok(())
    }

    pub fn shifted_score(&self) -> bool {
        self.gamma_shift > 0 || self.alpha_q > 0
    }

    pub fn input_range(&self) -> Interval {
        Interval::signed_bits(self.bits)
    }

    pub fn num_inputs(&self) -> usize {
        3 * self.seq_len * self.dim
    }
}

pub fn inhibitor_pbs_formula(n: usize, d: usize, shifted_score: bool) -> usize {
    2 * n * n * d + if shifted_score { n * n } else { 0 }
}

pub fn dotprod_pbs_formula(n: usize, d: usize) -> usize {
    4 * n * n * d + n * n
}

struct Operands {
    q: Vec<NodeId>,
    k: Vec<NodeId>,
    v: Vec<NodeId>,
}

fn declare_inputs(c: &mut CircuitGraph, cfg: &LoweringConfig) -> Operands {
    let count = cfg.seq_len * cfg.dim;
    let range = cfg.input_range();
    let take = |c: &mut CircuitGraph| (0..count).map(|_| c.input(range)).collect::<Vec<_>>();
    let q = take(c);
    let k = take(c);
    let v = take(c);
    Operands { q, k, v }
}

fn accumulate(c: &mut CircuitGraph, acc: Option<NodeId>, x: NodeId) -> NodeId {
    match acc {
        Some(a) => c.add(a, x),
        None => x,
    }
}

pub fn build_inhibitor_circuit(cfg: &LoweringConfig) -> Result<CircuitGraph> {
    cfg.validate()?;
    let (n, d) = (cfg.seq_len, cfg.dim);
    let mut c = CircuitGraph::new(cfg.precision)?;
    c.meta = CircuitMeta {
        mechanism: Some(Mechanism::Inhibitor),
        seq_len: n,
        dim: d,
        bits: cfg.bits,
        client_division: false,
    };
    let ops = declare_inputs(&mut c, cfg);
    let z_cap = cfg.input_range().hi;
    let (g, alpha) = (cfg.gamma_shift, cfg.alpha_q);

    let mut z = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = None;
            for k in 0..d {
                let diff = c.sub(ops.q[i * d + k], ops.k[j * d + k]);
                let a = c.lut(diff, "abs", i64::abs)?;
                acc = Some(accumulate(&mut c, acc, a));
            }
            let mut score = acc.expect("dim >= 1");
            if cfg.shifted_score() {
                score = c.lut(score, &format!("score_g{g}_a{alpha}"), move |x| {
                    (round_shift_right(x, g) - alpha).clamp(0, z_cap)
                })?;
            }
            z.push(score);
        }
    }

    for i in 0..n {
        for k in 0..d {
            let mut acc = None;
            for j in 0..n {
                let t = c.sub(ops.v[j * d + k], z[i * n + j]);
                let r = c.lut(t, "relu", |x| x.max(0))?;
                acc = Some(accumulate(&mut c, acc, r));
            }
            let out = acc.expect("seq_len >= 1");
            c.outputs.push(out);
        }
    }
    Ok(c)
}

/// Softmax weight table: `round(2^(bits-1) * exp((x - top) * 2^(-2(bits-1)) / sqrt(d)))`,
/// so a weight of 1.0 shares the value scale.
pub fn exp_weight(x: i64, top: i64, bits: u32, dim: usize) -> i64 {
    let one = (1i64 << (bits - 1)) as f64;
    let real = (x - top) as f64 / (one * one) / (dim as f64).sqrt();
    (one * real.exp()).round() as i64
}

pub fn build_dotprod_circuit(cfg: &LoweringConfig) -> Result<CircuitGraph> {
    cfg.validate()?;
    let (n, d, bits) = (cfg.seq_len, cfg.dim, cfg.bits);
    let mut c = CircuitGraph::new(cfg.precision)?;
    c.meta = CircuitMeta { mechanism: Some(Mechanism::DotProd), seq_len: n, dim: d, bits, client_division: true };
    let ops = declare_inputs(&mut c, cfg);

    let mut scores = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = None;
            for k in 0..d {
                let p = c.pbs_mul(ops.q[i * d + k], ops.k[j * d + k])?;
                acc = Some(accumulate(&mut c, acc, p));
            }
            scores.push(acc.expect("dim >= 1"));
        }
    }

    let mut weights = Vec::with_capacity(n * n);
    for &s in &scores {
        let top = c.interval(s).hi;
        let w = c.lut(s, &format!("exp_top{top}"), move |x| exp_weight(x, top, bits, d))?;
        weights.push(w);
    }

    let mut denominators = Vec::with_capacity(n);
    for i in 0..n {
        for k in 0..d {
            let mut acc = None;
            for j in 0..n {
                let p = c.pbs_mul(weights[i * n + j], ops.v[j * d + k])?;
                acc = Some(accumulate(&mut c, acc, p));
            }
            let out = acc.expect("seq_len >= 1");
            c.outputs.push(out);
        }
        let mut acc = None;
        for j in 0..n {
            acc = Some(accumulate(&mut c, acc, weights[i * n + j]));
        }
        denominators.push(acc.expect("seq_len >= 1"));
    }
    c.outputs.extend(denominators);
    Ok(c)
}

pub fn build_circuit(mechanism: Mechanism, cfg: &LoweringConfig) -> Result<CircuitGraph> {
    match mechanism {
        Mechanism::Inhibitor => build_inhibitor_circuit(cfg),
        Mechanism::DotProd => build_dotprod_circuit(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhe::{analyze_bits, interpret};

    #[test]
    fn inhibitor_single_position_counts() {
        let c = build_inhibitor_circuit(&LoweringConfig::new(1, 2, 3)).unwrap();
        assert_eq!(analyze_bits(&c).pbs_count, 4);
        assert_eq!(c.outputs.len(), 2);
    }

    #[test]
    fn dotprod_single_position_counts() {
        let c = build_dotprod_circuit(&LoweringConfig::new(1, 2, 3)).unwrap();
        assert_eq!(analyze_bits(&c).pbs_count, 9);
        assert_eq!(c.outputs.len(), 3);
        assert!(c.meta.client_division);
    }

    #[test]
    fn pbs_counts_match_closed_forms() {
        for n in [1, 2, 4, 8] {
            let mut cfg = LoweringConfig::new(n, 2, 3);
            let inh = analyze_bits(&build_inhibitor_circuit(&cfg).unwrap());
            let dot = analyze_bits(&build_dotprod_circuit(&cfg).unwrap());
            assert_eq!(inh.pbs_count, inhibitor_pbs_formula(n, 2, false));
            assert_eq!(dot.pbs_count, dotprod_pbs_formula(n, 2));
            assert_eq!(inh.mul_const_count, 0);
            cfg.alpha_q = 1;
            let shifted = analyze_bits(&build_inhibitor_circuit(&cfg).unwrap());
            assert_eq!(shifted.pbs_count, inhibitor_pbs_formula(n, 2, true));
        }
    }

    #[test]
    fn doubling_n_quadruples_inhibitor_pbs() {
        let a = analyze_bits(&build_inhibitor_circuit(&LoweringConfig::new(3, 2, 3)).unwrap());
        let b = analyze_bits(&build_inhibitor_circuit(&LoweringConfig::new(6, 2, 3)).unwrap());
        assert_eq!(b.pbs_count, 4 * a.pbs_count);
    }

    #[test]
    fn inhibitor_evaluates_by_hand() {
        // n = 2, d = 1: Q = [0, 1], K = [0, 3], V = [3, 2]
        let c = build_inhibitor_circuit(&LoweringConfig::new(2, 1, 3)).unwrap();
        let out = interpret(&c, &[0, 1, 0, 3, 3, 2]).unwrap();
        // Z = [[0, 3], [1, 2]]: H0 = 3 + 0, H1 = 2 + 0
        assert_eq!(out, vec![3, 2]);
    }

    #[test]
    fn dotprod_outputs_approximate_float_attention() {
        use crate::attention::dotprod_attention;
        use crate::tensor::Tensor2D;
        let cfg = LoweringConfig::new(2, 2, 3);
        let c = build_dotprod_circuit(&cfg).unwrap();
        let inputs = [3, -4, 1, 2, 3, -4, -1, 0, 2, -3, 1, 3];
        let out = interpret(&c, &inputs).unwrap();
        let to_t = |s: &[i64]| Tensor2D::from_vec(2, 2, s.iter().map(|&x| x as f64 / 4.0).collect()).unwrap();
        let h = dotprod_attention(&to_t(&inputs[0..4]), &to_t(&inputs[4..8]), &to_t(&inputs[8..12]), 2).unwrap();
        for i in 0..2 {
            let den = out[4 + i] as f64;
            for k in 0..2 {
                let approx = out[i * 2 + k] as f64 / den / 4.0;
                assert!((approx - h[(i, k)]).abs() < 0.2, "{approx} vs {}", h[(i, k)]);
            }
        }
    }

    #[test]
    fn precision_overflow_names_node() {
        let mut cfg = LoweringConfig::new(2, 2, 6);
        cfg.precision = 7;
        let err = build_dotprod_circuit(&cfg).unwrap_err();
        assert!(matches!(err, Error::Precision { .. }), "{err}");
        assert!(err.to_string().contains("node"));
    }

    #[test]
    fn cost_structure_at_small_widths() {
        for n in [1, 2, 4, 8] {
            let cfg = LoweringConfig::new(n, 2, 3);
            let inh = analyze_bits(&build_inhibitor_circuit(&cfg).unwrap());
            let dot = analyze_bits(&build_dotprod_circuit(&cfg).unwrap());
            let ratio = dot.pbs_count as f64 / inh.pbs_count as f64;
            assert!((2.0..=2.5).contains(&ratio), "n={n}: {ratio}");
            let gap = dot.max_bits - inh.max_bits;
            assert!((1..=2).contains(&gap), "n={n}: {} vs {}", dot.max_bits, inh.max_bits);
            assert!(dot.est_cost / inh.est_cost > 2.0);
        }
    }

    #[test]
    fn random_runs_stay_inside_intervals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut shifted = LoweringConfig::new(2, 2, 3);
        shifted.gamma_shift = 1;
        shifted.alpha_q = 1;
        let circuits = [
            build_inhibitor_circuit(&LoweringConfig::new(2, 2, 3)).unwrap(),
            build_inhibitor_circuit(&shifted).unwrap(),
            build_dotprod_circuit(&LoweringConfig::new(2, 2, 3)).unwrap(),
        ];
        let mut inputs = vec![0i64; 12];
        for c in &circuits {
            let mut it = crate::fhe::Interpreter::new(c);
            for _ in 0..100_000 / circuits.len() + 1 {
                for x in inputs.iter_mut() {
                    *x = rng.gen_range(-4..=3);
                }
                it.run(&inputs).unwrap();
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(build_inhibitor_circuit(&LoweringConfig::new(0, 2, 3)).is_err());
        let mut cfg = LoweringConfig::new(1, 2, 3);
        cfg.alpha_q = -1;
        assert!(build_inhibitor_circuit(&cfg).is_err());
    }
}
