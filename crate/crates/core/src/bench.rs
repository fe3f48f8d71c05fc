//! Wall-clock timing of the integer attention kernels: warmup, repeated runs
//! on fixed random operands, median and bootstrap 95% interval.

use std::hint::black_box;
use std::io::{self, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::Mechanism;
use crate::error::{Error, Result};
use crate::quant::{self, QTensor};
use crate::tensor::Tensor2D;

pub const MIN_REPS: usize = 20;
pub const WARMUP: usize = 3;
pub const BOOTSTRAP_RESAMPLES: usize = 2000;
/// Operand width of the timed kernels.
pub const BENCH_BITS: u32 = 16;
/// Operands in `[-1, 1]` stored as multiples of `2^BENCH_SCALE_EXP`.
pub const BENCH_SCALE_EXP: i32 = -8;

pub const BENCH_CSV_HEADER: &str = "mechanism,n,d,reps,median_ns,ci_low,ci_high";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub mechanism: Mechanism,
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    pub median_ns: f64,
    pub ci95_low_ns: f64,
    pub ci95_high_ns: f64,
}

impl BenchResult {
    pub fn overlaps(&self, other: &BenchResult) -> bool {
        self.ci95_low_ns <= other.ci95_high_ns && other.ci95_low_ns <= self.ci95_high_ns
    }
}

/// Fixed operands for one benchmark cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchInputs {
    pub q: QTensor,
    pub k: QTensor,
    pub v: QTensor,
    pub gamma_shift: u32,
    pub alpha_q: i32,
}

/// Same `(n, d, seed)` always yields the same operands.
pub fn bench_inputs(n: usize, d: usize, seed: u64) -> Result<BenchInputs> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("n and d must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw =
        || quant::quantize(&Tensor2D::random_uniform(n, d, -1.0, 1.0, &mut rng), BENCH_BITS, BENCH_SCALE_EXP);
    let (q, k, v) = (draw()?, draw()?, draw()?);
    // gamma = sqrt(d) as the nearest power of two, alpha = 0.5
    let gamma_shift = (d as f64).sqrt().log2().round().max(0.0) as u32;
    let alpha_q = 1 << (-BENCH_SCALE_EXP - 1);
    Ok(BenchInputs { q, k, v, gamma_shift, alpha_q })
}

pub fn run_kernel(mechanism: Mechanism, inp: &BenchInputs) -> Result<QTensor> {
    match mechanism {
        Mechanism::Inhibitor => quant::q_manhattan_inhibitor(&inp.q, &inp.k, &inp.v, inp.alpha_q, inp.gamma_shift),
        Mechanism::DotProd => quant::q_dotprod_attention(&inp.q, &inp.k, &inp.v),
    }
}

pub fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// Percentile bootstrap 95% interval of the median.
pub fn bootstrap_median_ci(samples: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; samples.len()];
    let mut medians = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = samples[rng.gen_range(0..samples.len())];
        }
        buf.sort_by(f64::total_cmp);
        medians.push(median(&buf));
    }
    medians.sort_by(f64::total_cmp);
    let at = |p: f64| medians[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(0.025), at(0.975))
}

/// Times `reps` runs of one integer kernel after [`WARMUP`] untimed runs.
/// Operand generation and checking happen outside the timed region.
pub fn bench_kernel(mechanism: Mechanism, n: usize, d: usize, reps: usize, seed: u64) -> Result<BenchResult> {
    if reps < MIN_REPS {
        return Err(Error::invalid(format!("reps must be at least {MIN_REPS}, got {reps}")));
    }
    let inputs = bench_inputs(n, d, seed)?;
    for _ in 0..WARMUP {
        black_box(run_kernel(mechanism, black_box(&inputs))?);
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let out = run_kernel(mechanism, black_box(&inputs));
        let elapsed = start.elapsed();
        black_box(out?);
        times.push(elapsed.as_nanos() as f64);
    }
    times.sort_by(f64::total_cmp);
    let median_ns = median(&times);
    let (lo, hi) = bootstrap_median_ci(&times, BOOTSTRAP_RESAMPLES, seed);
    Ok(BenchResult {
        mechanism,
        n,
        d,
        reps,
        median_ns,
        ci95_low_ns: lo.min(median_ns),
        ci95_high_ns: hi.max(median_ns),
    })
}

pub fn emit_table<W: Write>(mut w: W, results: &[BenchResult]) -> io::Result<()> {
    writeln!(w, "{BENCH_CSV_HEADER}")?;
    for r in results {
        writeln!(w, "{},{},{},{},{},{},{}", r.mechanism, r.n, r.d, r.reps, r.median_ns, r.ci95_low_ns, r.ci95_high_ns)?;
    }
    Ok(())
}
