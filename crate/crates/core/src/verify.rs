//! Named equivalence suites: every optimized kernel against its oracle.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{self, AttentionConfig, Mechanism};
use crate::autograd;
use crate::error::Result;
use crate::fhe::{self, CircuitGraph, Interpreter, Interval, LoweringConfig};
use crate::quant::{self, QTensor};
use crate::tensor::Tensor2D;

/// Deliberate defects for checking that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Off-by-a-little fused inhibition.
    FusedInhibition,
    /// Quarter-square table with a rounding error.
    PbsTable,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fused-inhibition" => Ok(Fault::FusedInhibition),
            "pbs-table" => Ok(Fault::PbsTable),
            other => Err(format!("unknown fault '{other}' (expected fused-inhibition or pbs-table)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Runs only suites whose name contains this substring.
    pub filter: Option<String>,
    pub fault: Option<Fault>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub property: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

type SuiteFn = fn(&VerifyOptions) -> Result<std::result::Result<String, String>>;

struct Suite {
    name: &'static str,
    property: &'static str,
    run: SuiteFn,
}

const SUITES: &[Suite] = &[
    Suite { name: "fused-identity", property: "inhibit_fused == inhibit_naive", run: fused_identity },
    Suite {
        name: "signed-identity",
        property: "signed_inhibit_fused == signed_inhibit_naive, and == inhibit for V, Z >= 0",
        run: signed_identity,
    },
    Suite {
        name: "pbs-mul",
        property: "pbs_mul(a, b) == a * b on [-11, 11]^2 with 7-bit tables",
        run: pbs_mul_exhaustive,
    },
    Suite { name: "pbs-counts", property: "PBS counts equal 2n^2d and 4n^2d + n^2", run: pbs_counts },
    Suite {
        name: "quant-bounds",
        property: "integer kernels stay within their float-oracle error bounds",
        run: quant_bounds,
    },
    Suite {
        name: "interval-soundness",
        property: "interpreted values never leave analyzed intervals",
        run: interval_soundness,
    },
    Suite {
        name: "circuit-oracle",
        property: "inhibitor circuit == q_manhattan_inhibitor on all 3-bit inputs (n = 2, d = 2)",
        run: circuit_oracle,
    },
    Suite { name: "gradcheck", property: "backward rules match central differences", run: gradcheck_all },
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.name).collect()
}

/// Runs the selected suites in a fixed order. Library errors count as failures.
pub fn run_verify(opts: &VerifyOptions) -> Vec<SuiteResult> {
    SUITES
        .iter()
        .filter(|s| opts.filter.as_deref().is_none_or(|f| s.name.contains(f)))
        .map(|s| {
            let start = Instant::now();
            let (passed, detail) = match (s.run)(opts) {
                Ok(Ok(d)) => (true, d),
                Ok(Err(d)) => (false, d),
                Err(e) => (false, format!("error: {e}")),
            };
            SuiteResult { name: s.name, property: s.property, passed, detail, elapsed: start.elapsed() }
        })
        .collect()
}

fn verdict(ok: bool, detail: String) -> Result<std::result::Result<String, String>> {
    Ok(if ok { Ok(detail) } else { Err(detail) })
}

fn max_diff(a: &Tensor2D, b: &Tensor2D) -> f64 {
    a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

type InhibitFn = fn(&Tensor2D, &Tensor2D) -> Result<Tensor2D>;

fn faulty_fused(v: &Tensor2D, z: &Tensor2D) -> Result<Tensor2D> {
    let mut h = attention::inhibit_fused(v, z)?;
    if let Some(x) = h.data_mut().first_mut() {
        *x += 1e-3;
    }
    Ok(h)
}

/// Enumerates every `(V[:, 0], Z[0, :])` in `[-8, 8]^4` for 2 x 2 operands.
///
/// Output `(i, k)` depends only on `V[:, k]` and `Z[i, :]`, and the second
/// column/row is a bijective image of the first, so each output entry sees
/// its whole input domain.
fn exhaustive_small(mut check: impl FnMut(&Tensor2D, &Tensor2D) -> Result<bool>) -> Result<(usize, usize)> {
    let vals: Vec<f64> = (-8..=8).map(f64::from).collect();
    let m = vals.len();
    let total = m.pow(4);
    let mut bad = 0;
    for idx in 0..total {
        let digit = |p: u32| vals[idx / m.pow(p) % m];
        let v = Tensor2D::from_rows(&[[digit(0), -digit(0)], [digit(1), -digit(1)]]);
        let z = Tensor2D::from_rows(&[[digit(2), digit(3)], [-digit(2), -digit(3)]]);
        if !check(&v, &z)? {
            bad += 1;
        }
    }
    Ok((total, bad))
}

fn random_pairs(seed: u64, count: usize, mut check: impl FnMut(&Tensor2D, &Tensor2D) -> Result<f64>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f64;
    for _ in 0..count {
        let (n, m, d) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=6));
        let v = Tensor2D::random_uniform(n, d, -2.0, 2.0, &mut rng);
        let z = Tensor2D::random_uniform(m, n, 0.0, 2.0, &mut rng);
        worst = worst.max(check(&v, &z)?);
    }
    Ok(worst)
}

fn fused_identity(opts: &VerifyOptions) -> Result<std::result::Result<String, String>> {
    let fused: InhibitFn =
        if opts.fault == Some(Fault::FusedInhibition) { faulty_fused } else { attention::inhibit_fused };
    let worst = random_pairs(opts.seed, 10_000, |v, z| Ok(max_diff(&fused(v, z)?, &attention::inhibit_naive(v, z)?)))?;
    let (total, bad) = exhaustive_small(|v, z| Ok(fused(v, z)? == attention::inhibit_naive(v, z)?))?;
    verdict(
        worst <= 1e-12 && bad == 0,
        format!("random max |diff| {worst:.2e}; integer 2x2: {} / {total} exact", total - bad),
    )
}

fn signed_identity(opts: &VerifyOptions) -> Result<std::result::Result<String, String>> {
    let worst = random_pairs(opts.seed ^ 1, 10_000, |v, z| {
        Ok(max_diff(&attention::signed_inhibit_fused(v, z)?, &attention::signed_inhibit_naive(v, z)?))
    })?;
    let (total, bad) =
        exhaustive_small(|v, z| Ok(attention::signed_inhibit_fused(v, z)? == attention::signed_inhibit_naive(v, z)?))?;
    let reduction = random_pairs(opts.seed ^ 2, 2_000, |v, z| {
        let v = v.map(f64::abs);
        Ok(max_diff(&attention::signed_inhibit_fused(&v, z)?, &attention::inhibit_fused(&v, z)?))
    })?;
    verdict(
        worst <= 1e-12 && bad == 0 && reduction <= 1e-12,
        format!(
            "random max |diff| {worst:.2e}; integer 2x2: {} / {total} exact; V >= 0 reduction {reduction:.2e}",
            total - bad
        ),
    )
}

fn pbs_mul_circuit(fault: Option<Fault>) -> Result<CircuitGraph> {
    let mut c = CircuitGraph::new(fhe::DEFAULT_PRECISION)?;
    let a = c.input(Interval::new(-11, 11));
    let b = c.input(Interval::new(-11, 11));
    let p = if fault == Some(Fault::PbsTable) {
        let s = c.add(a, b);
        let d = c.sub(a, b);
        let ts = c.lut(s, "bad_square", |x| x * x / 4 + i64::from(x > 0))?;
        let td = c.lut(d, "bad_square", |x| x * x / 4 + i64::from(x > 0))?;
        c.sub(ts, td)
    } else {
        c.pbs_mul(a, b)?
    };
    c.outputs.push(p);
    Ok(c)
}

fn pbs_mul_exhaustive(opts: &VerifyOptions) -> Result<std::result::Result<String, String>> {
    let c = pbs_mul_circuit(opts.fault)?;
    let mut it = Interpreter::new(&c);
    let mut exact = 0;
    let mut first_bad = None;
    for a in -11..=11i64 {
        for b in -11..=11i64 {
            let ok = it.run(&[a, b]).is_ok() && it.outputs().next() == Some(a * b);
            if ok {
                exact += 1;
            } else if first_bad.is_none() {
                first_bad = Some((a, b));
            }
        }
    }
    let pbs = fhe::analyze_bits(&c).pbs_count;
    let mut detail = format!("{exact}/529 exact, {pbs} PBS per product");
    if let Some((a, b)) = first_bad {
        detail.push_str(&format!("; first mismatch at ({a}, {b})"));
    }
    verdict(exact == 529 && pbs == 2, detail)
}

fn pbs_counts(_: &VerifyOptions) -> Result<std::result::Result<String, String>> {
    let mut rows = Vec::new();
    let mut ok = true;
    for n in [1, 2, 4, 8] {
        let cfg = LoweringConfig::new(n, 2, 3);
        let inh = fhe::analyze_bits(&fhe::build_inhibitor_circuit(&cfg)?);
        let dot = fhe::analyze_bits(&fhe::build_dotprod_circuit(&cfg)?);
        ok &= inh.pbs_count == fhe::inhibitor_pbs_formula(n, 2, false)
            && dot.pbs_count == fhe::dotprod_pbs_formula(n, 2)
            && inh.mul_const_count == 0;
        rows.push(format!("n={n}: {}/{}", dot.pbs_count, inh.pbs_count));
    }
    verdict(ok, format!("dotprod/inhibitor PBS {}", rows.join(", ")))
}

fn quant_bounds(opts: &VerifyOptions) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 3);
    // fine enough that half an output LSB stays well under 1% of typical outputs
    let s = -12;
    let lsb = 2f64.powi(s);
    let mut worst_inh = 0f64;
    let mut worst_dot = 0f64;
    for (n, d) in [(4, 4), (8, 16), (16, 4), (32, 8)] {
        let mut draw = || quant::quantize(&Tensor2D::random_uniform(n, d, -1.0, 1.0, &mut rng), 16, s);
        let (q, k, v) = (draw()?, draw()?, draw()?);
        let (qf, kf, vf) = (quant::dequantize(&q), quant::dequantize(&k), quant::dequantize(&v));
        let (gamma_shift, alpha_q) = (1, 64);
        let hq = quant::dequantize(&quant::q_manhattan_inhibitor(&q, &k, &v, alpha_q, gamma_shift)?);
        let mut cfg = AttentionConfig::new(n, d, Mechanism::Inhibitor);
        cfg.gamma = 2.0;
        cfg.alpha = alpha_q as f64 * lsb;
        let hf = attention::inhibitor_attention(&qf, &kf, &vf, &cfg)?;
        worst_inh = worst_inh.max(max_diff(&hq, &hf) / (2f64.powi(s + 2) * n as f64));
        let dq = quant::dequantize(&quant::q_dotprod_attention(&q, &k, &v)?);
        let df = attention::dotprod_attention(&qf, &kf, &vf, d)?;
        worst_dot = worst_dot.max(max_diff(&dq, &df) / (0.01 * df.max_abs()));
    }
    verdict(
        worst_inh <= 1.0 && worst_dot <= 1.0,
        format!("error / bound: inhibitor {worst_inh:.3}, dotprod {worst_dot:.3}"),
    )
}

fn interval_soundness(opts: &VerifyOptions) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 4);
    let mut shifted = LoweringConfig::new(2, 2, 3);
    shifted.gamma_shift = 1;
    shifted.alpha_q = 1;
    let circuits = [
        fhe::build_inhibitor_circuit(&LoweringConfig::new(2, 2, 3))?,
        fhe::build_inhibitor_circuit(&shifted)?,
        fhe::build_dotprod_circuit(&LoweringConfig::new(2, 2, 3))?,
        fhe::build_inhibitor_circuit(&LoweringConfig::new(4, 2, 3))?,
    ];
    let runs = 100_000;
    let mut inputs = Vec::new();
    for (idx, c) in circuits.iter().enumerate() {
        let mut it = Interpreter::new(c);
        inputs.resize(c.inputs.len(), 0);
        for _ in 0..runs / circuits.len() {
            for x in inputs.iter_mut() {
                *x = rng.gen_range(-4..=3);
            }
            if let Err(e) = it.run(&inputs) {
                return verdict(false, format!("circuit {idx}: {e}"));
            }
        }
    }
    verdict(true, format!("{runs} random runs over {} circuits", circuits.len()))
}

fn to_qtensor(vals: &[i64], rows: usize, cols: usize) -> Result<QTensor> {
    QTensor::from_vec(rows, cols, vals.iter().map(|&x| x as i32).collect(), 0, 8)
}

/// Every 3-bit input of the `n = 2, d = 2` inhibitor circuit, compared with the
/// integer kernel.
///
/// The support of output `(i, k)` is checked to be `Q[i, :]`, all of `K` and
/// `V[:, k]`: 8 values. All `8^8` assignments of `(Q[0, :], K, V[:, 0])` are
/// enumerated and `Q[1, :]`, `V[:, 1]` are set by bijections of them, so every
/// output entry is checked over its entire domain. A random sample of full
/// inputs guards the kernel side against hidden dependencies.
pub fn circuit_oracle_check(exhaustive: bool, seed: u64) -> Result<std::result::Result<String, String>> {
    let c = fhe::build_inhibitor_circuit(&LoweringConfig::new(2, 2, 3))?;
    let (n, d) = (2, 2);
    // inputs: Q row-major at 0..4, K at 4..8, V at 8..12
    for i in 0..n {
        for k in 0..d {
            let want: std::collections::BTreeSet<usize> =
                (0..d).map(|c| i * d + c).chain(4..8).chain((0..n).map(|j| 8 + j * d + k)).collect();
            if c.support(c.outputs[i * d + k]) != want {
                return verdict(false, format!("output ({i}, {k}) has unexpected support"));
            }
        }
    }
    let mut it = Interpreter::new(&c);
    let mut x = [0i64; 12];
    let mut compare = |x: &[i64; 12]| -> Result<bool> {
        it.run(x)?;
        let want = quant::q_manhattan_inhibitor(
            &to_qtensor(&x[0..4], n, d)?,
            &to_qtensor(&x[4..8], n, d)?,
            &to_qtensor(&x[8..12], n, d)?,
            0,
            0,
        )?;
        Ok(it.outputs().zip(want.data()).all(|(a, &b)| a == b as i64))
    };
    let mut checked = 0u64;
    if exhaustive {
        for code in 0..1u32 << 24 {
            let digit = |p: u32| ((code >> (3 * p)) & 7) as i64 - 4;
            // (Q[0,0], Q[0,1], K[0..4], V[0,0], V[1,0])
            let free = [digit(0), digit(1), digit(2), digit(3), digit(4), digit(5), digit(6), digit(7)];
            x[0] = free[0];
            x[1] = free[1];
            x[2] = -1 - free[0];
            x[3] = -1 - free[1];
            x[4..8].copy_from_slice(&free[2..6]);
            x[8] = free[6];
            x[9] = free[7];
            x[10] = free[7];
            x[11] = free[6];
            if !compare(&x)? {
                return verdict(false, format!("mismatch at inputs {x:?}"));
            }
            checked += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
    for _ in 0..100_000 {
        for v in x.iter_mut() {
            *v = rng.gen_range(-4..=3);
        }
        if !compare(&x)? {
            return verdict(false, format!("mismatch at inputs {x:?}"));
        }
        checked += 1;
    }
    verdict(true, format!("{checked} input vectors agree"))
}

fn circuit_oracle(opts: &VerifyOptions) -> Result<std::result::Result<String, String>> {
    circuit_oracle_check(true, opts.seed)
}

fn gradcheck_all(opts: &VerifyOptions) -> Result<std::result::Result<String, String>> {
    let mut worst: (f64, &str) = (0.0, "");
    let checks = autograd::registered_checks();
    for check in &checks {
        let r = autograd::gradcheck(check, 100, opts.seed ^ 6)?;
        if r.max_rel_err >= worst.0 {
            worst = (r.max_rel_err, check.name);
        }
    }
    verdict(
        worst.0 < autograd::GRADCHECK_TOL,
        format!("{} rules, worst relative error {:.2e} ({})", checks.len(), worst.0, worst.1),
    )
}
