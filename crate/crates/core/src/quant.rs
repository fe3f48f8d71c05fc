//! Fixed-point integer kernels for both attention mechanisms.
//!
//! A [`QTensor`] stores integers `q` standing for `q * 2^scale_exp`. Scales are
//! per-tensor powers of two, so every rescale is a shift. Rounding is
//! half-away-from-zero everywhere.
//!
//! Accumulation happens in `i32`. Before each accumulating loop the kernels
//! bound the worst case from the operands' largest magnitudes; when the bound
//! fits, the plain loop runs, otherwise a checked loop runs and reports the
//! first position that overflows. Nothing wraps silently.
//!
//! The dot-product baseline's softmax is this crate's own integer design
//! (the inhibitor needs none): row-max subtraction, a 256-entry `exp` table
//! with step `2^-5` read with linear interpolation, and renormalization so every row of weights sums to
//! `2^15` up to rounding.

use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

/// Fixed-point weight of 1.0 in the softmax baseline.
pub const WEIGHT_ONE_LOG2: u32 = 15;
pub const WEIGHT_ONE: i32 = 1 << WEIGHT_ONE_LOG2;
pub const EXP_TABLE_LEN: usize = 256;
/// The exp table samples `exp(-idx * 2^EXP_STEP_LOG2)`.
pub const EXP_STEP_LOG2: i32 = -5;
/// Fractional index bits used to interpolate linearly between table entries.
pub const EXP_FRAC_BITS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTensor {
    rows: usize,
    cols: usize,
    data: Vec<i32>,
    scale_exp: i32,
    bits: u32,
}

/// Largest value representable in `bits` signed bits.
#[inline]
pub fn max_q(bits: u32) -> i32 {
    if bits >= 32 {
        i32::MAX
    } else {
        (1i32 << (bits - 1)) - 1
    }
}

#[inline]
pub fn min_q(bits: u32) -> i32 {
    if bits >= 32 {
        i32::MIN
    } else {
        -(1i32 << (bits - 1))
    }
}

fn check_storage_bits(bits: u32) -> Result<()> {
    match bits {
        8 | 16 | 32 => Ok(()),
        _ => Err(Error::invalid(format!("unsupported bit width {bits}"))),
    }
}

impl QTensor {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<i32>, scale_exp: i32, bits: u32) -> Result<Self> {
        check_storage_bits(bits)?;
        if data.len() != rows * cols {
            return Err(Error::shape("QTensor::from_vec", (rows, cols), (data.len(), 1)));
        }
        let (lo, hi) = (min_q(bits), max_q(bits));
        if let Some(pos) = data.iter().position(|&x| x < lo || x > hi) {
            return Err(Error::invalid(format!("entry {} at index {pos} does not fit {bits} bits", data[pos])));
        }
        Ok(Self { rows, cols, data, scale_exp, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn scale_exp(&self) -> i32 {
        self.scale_exp
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.data[i * self.cols + j]
    }

    fn row(&self, i: usize) -> &[i32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn max_abs(&self) -> i64 {
        self.data.iter().map(|&x| (x as i64).abs()).max().unwrap_or(0)
    }
}

/// Number of entries clipped by [`quantize_with_stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuantStats {
    pub saturated: usize,
}

pub fn quantize(a: &Tensor2D, bits: u32, scale_exp: i32) -> Result<QTensor> {
    quantize_with_stats(a, bits, scale_exp).map(|(q, _)| q)
}

/// Rounds `a / 2^scale_exp` half away from zero and saturates to `bits`.
pub fn quantize_with_stats(a: &Tensor2D, bits: u32, scale_exp: i32) -> Result<(QTensor, QuantStats)> {
    if bits != 8 && bits != 16 {
        return Err(Error::invalid(format!("quantize supports 8 or 16 bits, got {bits}")));
    }
    let inv = (2f64).powi(-scale_exp);
    let (lo, hi) = (min_q(bits) as f64, max_q(bits) as f64);
    let mut stats = QuantStats::default();
    let data = a
        .data()
        .iter()
        .map(|&x| {
            let r = (x * inv).round();
            if r < lo || r > hi {
                stats.saturated += 1;
            }
            r.clamp(lo, hi) as i32
        })
        .collect();
    let q = QTensor { rows: a.rows(), cols: a.cols(), data, scale_exp, bits };
    Ok((q, stats))
}

pub fn dequantize(q: &QTensor) -> Tensor2D {
    let s = (2f64).powi(q.scale_exp);
    let data = q.data.iter().map(|&x| x as f64 * s).collect();
    Tensor2D::from_vec(q.rows, q.cols, data).expect("shape is consistent by construction")
}

/// `x / 2^shift` rounded half away from zero.
#[inline]
pub fn round_shift_right(x: i64, shift: u32) -> i64 {
    if shift == 0 {
        return x;
    }
    if shift >= 63 {
        return 0;
    }
    let half = 1i64 << (shift - 1);
    if x >= 0 {
        (x + half) >> shift
    } else {
        -((-x + half) >> shift)
    }
}

/// Moves `q` to a new scale exponent and storage width, saturating.
pub fn requantize(q: &QTensor, new_scale_exp: i32, new_bits: u32) -> Result<QTensor> {
    check_storage_bits(new_bits)?;
    let (lo, hi) = (min_q(new_bits) as i64, max_q(new_bits) as i64);
    let delta = new_scale_exp - q.scale_exp;
    let data = q
        .data
        .iter()
        .map(|&x| {
            let x = x as i64;
            let y = if delta >= 0 {
                round_shift_right(x, delta as u32)
            } else {
                let up = (-delta) as u32;
                if up >= 32 {
                    x.signum() * i64::MAX
                } else {
                    x.saturating_mul(1i64 << up)
                }
            };
            y.clamp(lo, hi) as i32
        })
        .collect();
    Ok(QTensor { rows: q.rows, cols: q.cols, data, scale_exp: new_scale_exp, bits: new_bits })
}

fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// Widest intermediate of [`q_manhattan_inhibitor`] for `bits`-bit operands:
/// the score sum needs `bits + 1 + ceil(log2 d)` and the inhibition sum
/// `bits + 1 + ceil(log2 n)` (scores are clamped to the value range first).
pub fn inhibitor_accumulator_bits(bits: u32, n: usize, d: usize) -> u32 {
    bits + 1 + ceil_log2(n).max(ceil_log2(d))
}

/// Widest intermediate of the `Q K^T` product: `2 * bits + ceil(log2 d)`.
pub fn dotprod_accumulator_bits(bits: u32, d: usize) -> u32 {
    2 * bits + ceil_log2(d)
}

// Each kernel checks a worst-case bound against this first. When it fits, the
// fast path cannot overflow and uses wrapping ops; otherwise every step is checked.
const ACC_MAX: i64 = i32::MAX as i64;

fn same_scale(op: &'static str, tensors: &[&QTensor]) -> Result<i32> {
    let s = tensors[0].scale_exp;
    if tensors.iter().any(|t| t.scale_exp != s) {
        return Err(Error::invalid(format!("{op}: operands must share one scale exponent")));
    }
    Ok(s)
}

fn check_qkv(op: &'static str, q: &QTensor, k: &QTensor, v: &QTensor) -> Result<()> {
    if q.cols != k.cols {
        return Err(Error::shape(op, q.shape(), k.shape()));
    }
    if k.rows != v.rows {
        return Err(Error::shape(op, k.shape(), v.shape()));
    }
    Ok(())
}

/// Raw Manhattan sums `sum_k |Q[i][k] - K[j][k]|`, shape `(q.rows, k.rows)`.
pub fn q_manhattan_raw(q: &QTensor, k: &QTensor) -> Result<Vec<i32>> {
    if q.cols != k.cols {
        return Err(Error::shape("q_manhattan_raw", q.shape(), k.shape()));
    }
    let (n, m, d) = (q.rows, k.rows, q.cols);
    let mut z = vec![0i32; n * m];
    let bound = d as i64 * (q.max_abs() + k.max_abs());
    if bound <= ACC_MAX {
        for i in 0..n {
            let qi = q.row(i);
            for (j, zij) in z[i * m..(i + 1) * m].iter_mut().enumerate() {
                *zij = qi
                    .iter()
                    .zip(k.row(j))
                    .fold(0i32, |acc, (&a, &b)| acc.wrapping_add(a.wrapping_sub(b).wrapping_abs()));
            }
        }
    } else {
        for i in 0..n {
            for j in 0..m {
                let mut acc = 0i32;
                for (&a, &b) in q.row(i).iter().zip(k.row(j)) {
                    acc =
                        (a as i64 - b as i64).abs().try_into().ok().and_then(|t: i32| acc.checked_add(t)).ok_or_else(
                            || Error::Overflow { kernel: "manhattan score", position: format!("(i={i}, j={j})") },
                        )?;
                }
                z[i * m + j] = acc;
            }
        }
    }
    Ok(z)
}

/// Turns raw Manhattan sums into shifted, clamped integer scores:
/// `min(max(round(raw / 2^gamma_shift) - alpha_q, 0), z_cap)`.
///
/// Clamping at `z_cap = max_q(value_bits)` never changes an inhibition
/// result, since a score at the value ceiling already zeroes every term.
pub fn q_shift_scores(raw: &mut [i32], alpha_q: i32, gamma_shift: u32, z_cap: i32) {
    for z in raw.iter_mut() {
        let scaled = round_shift_right(*z as i64, gamma_shift) as i32;
        *z = scaled.saturating_sub(alpha_q).clamp(0, z_cap);
    }
}

fn inhibit_bound(v: &QTensor, z: &[i32]) -> i64 {
    let zmax = z.iter().map(|&x| x as i64).max().unwrap_or(0);
    // colsum(V) + rowsum(Z) + sum |V - Z|, all over n terms
    v.rows as i64 * (2 * v.max_abs() + 2 * zmax)
}

/// Integer `sum_j relu(V[j][k] - Z[i][j])` by the fused identity
/// `2H = colsum(V) - rowsum(Z) + sum_j |V[j][k] - Z[i][j]|`.
///
/// Every per-term numerator `x + |x|` is even, so the final halving is exact.
/// `z` is row-major `(z_rows, v.rows)` with non-negative entries.
pub fn q_inhibit_fused(v: &QTensor, z: &[i32], z_rows: usize) -> Result<QTensor> {
    let (n, dv) = (v.rows, v.cols);
    if z.len() != z_rows * n {
        return Err(Error::shape("q_inhibit_fused", v.shape(), (z_rows, z.len() / z_rows.max(1))));
    }
    let mut out = vec![0i32; z_rows * dv];
    if inhibit_bound(v, z) <= ACC_MAX {
        let mut vsum = vec![0i32; dv];
        for j in 0..n {
            for (s, &x) in vsum.iter_mut().zip(v.row(j)) {
                *s = s.wrapping_add(x);
            }
        }
        let mut acc = vec![0i32; dv];
        for i in 0..z_rows {
            let zi = &z[i * n..(i + 1) * n];
            let zsum = zi.iter().fold(0i32, |a, &x| a.wrapping_add(x));
            acc.copy_from_slice(&vsum);
            for (j, &zij) in zi.iter().enumerate() {
                for (a, &x) in acc.iter_mut().zip(v.row(j)) {
                    *a = a.wrapping_add(x.wrapping_sub(zij).wrapping_abs());
                }
            }
            for (o, &a) in out[i * dv..(i + 1) * dv].iter_mut().zip(&acc) {
                let twice = a.wrapping_sub(zsum);
                debug_assert_eq!(twice & 1, 0);
                *o = twice >> 1;
            }
        }
    } else {
        let overflow =
            |i: usize, k: usize| Error::Overflow { kernel: "fused inhibition", position: format!("(i={i}, k={k})") };
        for i in 0..z_rows {
            let zi = &z[i * n..(i + 1) * n];
            for k in 0..dv {
                let mut acc = 0i32;
                for (j, &zij) in zi.iter().enumerate() {
                    let x = v.get(j, k) as i64;
                    let term = x - zij as i64 + (x - zij as i64).abs();
                    acc = i32::try_from(term).ok().and_then(|t| acc.checked_add(t)).ok_or_else(|| overflow(i, k))?;
                }
                out[i * dv + k] = acc >> 1;
            }
        }
    }
    Ok(QTensor { rows: z_rows, cols: dv, data: out, scale_exp: v.scale_exp, bits: 32 })
}

/// Direct integer `sum_j relu(V[j][k] - Z[i][j])`; the oracle for [`q_inhibit_fused`].
pub fn q_inhibit_naive(v: &QTensor, z: &[i32], z_rows: usize) -> Result<QTensor> {
    let (n, dv) = (v.rows, v.cols);
    if z.len() != z_rows * n {
        return Err(Error::shape("q_inhibit_naive", v.shape(), (z_rows, z.len() / z_rows.max(1))));
    }
    let mut out = vec![0i32; z_rows * dv];
    for i in 0..z_rows {
        for k in 0..dv {
            let mut acc = 0i64;
            for j in 0..n {
                acc += (v.get(j, k) as i64 - z[i * n + j] as i64).max(0);
            }
            out[i * dv + k] = i32::try_from(acc)
                .map_err(|_| Error::Overflow { kernel: "naive inhibition", position: format!("(i={i}, k={k})") })?;
        }
    }
    Ok(QTensor { rows: z_rows, cols: dv, data: out, scale_exp: v.scale_exp, bits: 32 })
}

/// Integer Inhibitor attention.
///
/// `gamma` is realized as a rounding right shift by `gamma_shift` bits and
/// `alpha_q` is the score shift in units of the shared scale. The output keeps
/// the value scale and is a 32-bit accumulator tensor.
pub fn q_manhattan_inhibitor(q: &QTensor, k: &QTensor, v: &QTensor, alpha_q: i32, gamma_shift: u32) -> Result<QTensor> {
    check_qkv("q_manhattan_inhibitor", q, k, v)?;
    same_scale("q_manhattan_inhibitor", &[q, k, v])?;
    if alpha_q < 0 {
        return Err(Error::invalid(format!("alpha_q must be non-negative, got {alpha_q}")));
    }
    let mut z = q_manhattan_raw(q, k)?;
    q_shift_scores(&mut z, alpha_q, gamma_shift, max_q(v.bits));
    q_inhibit_fused(v, &z, q.rows)
}

fn exp_table() -> &'static [i32; EXP_TABLE_LEN] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[i32; EXP_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let step = (2f64).powi(EXP_STEP_LOG2);
        let mut t = [0i32; EXP_TABLE_LEN];
        for (idx, e) in t.iter_mut().enumerate() {
            *e = (WEIGHT_ONE as f64 * (-(idx as f64) * step).exp()).round() as i32;
        }
        t
    })
}

/// Integer softmax over each row of `scores` (scale `2^score_scale_exp`).
///
/// Returns weights of shape `(rows, cols)` where each row sums to
/// `2^15` within `cols`.
pub fn q_softmax_rows(scores: &[i32], cols: usize, score_scale_exp: i32) -> Vec<i32> {
    let table = exp_table();
    // table position with EXP_FRAC_BITS fractional bits:
    // (max - t) * 2^(score_scale_exp - EXP_STEP_LOG2 + EXP_FRAC_BITS)
    let pos_shift = score_scale_exp - EXP_STEP_LOG2 + EXP_FRAC_BITS as i32;
    let end = (EXP_TABLE_LEN as i64) << EXP_FRAC_BITS;
    let mut weights = vec![0i32; scores.len()];
    for (row, out) in scores.chunks(cols).zip(weights.chunks_mut(cols)) {
        let max = *row.iter().max().expect("non-empty row");
        let mut total = 0i64;
        for (&t, w) in row.iter().zip(out.iter_mut()) {
            let gap = max as i64 - t as i64;
            let pos = if pos_shift >= 0 {
                gap.checked_shl(pos_shift as u32).filter(|p| *p < end).unwrap_or(end)
            } else {
                round_shift_right(gap, (-pos_shift) as u32)
            };
            *w = if pos < end {
                let idx = (pos >> EXP_FRAC_BITS) as usize;
                let frac = pos & ((1 << EXP_FRAC_BITS) - 1);
                let lo = table[idx] as i64;
                let hi = table.get(idx + 1).copied().unwrap_or(0) as i64;
                (lo - round_shift_right((lo - hi) * frac, EXP_FRAC_BITS)) as i32
            } else {
                0
            };
            total += *w as i64;
        }
        // one division per row; weights are rescaled by a 2^-31 fixed-point reciprocal
        let recip = ((1i64 << (WEIGHT_ONE_LOG2 + 31)) + total / 2) / total;
        for w in out.iter_mut() {
            *w = round_shift_right(*w as i64 * recip, 31) as i32;
        }
    }
    weights
}

/// Integer dot-product attention baseline.
///
/// `Q K^T` widens to 32 bits, `1/sqrt(d)` is applied as a literal Q15
/// multiply, softmax runs through [`q_softmax_rows`] and the weighted value
/// sum accumulates in 32 bits before returning to the value scale and width.
pub fn q_dotprod_attention(q: &QTensor, k: &QTensor, v: &QTensor) -> Result<QTensor> {
    check_qkv("q_dotprod_attention", q, k, v)?;
    let s = same_scale("q_dotprod_attention", &[q, k, v])?;
    let (n, m, d, dv) = (q.rows, k.rows, q.cols, v.cols);
    if m == 0 {
        return Err(Error::invalid("q_dotprod_attention needs at least one key"));
    }

    let mut scores = vec![0i32; n * m];
    let bound = d as i64 * q.max_abs() * k.max_abs();
    if bound <= ACC_MAX {
        for i in 0..n {
            let qi = q.row(i);
            for (j, sij) in scores[i * m..(i + 1) * m].iter_mut().enumerate() {
                *sij = qi.iter().zip(k.row(j)).fold(0i32, |acc, (&a, &b)| acc.wrapping_add(a.wrapping_mul(b)));
            }
        }
    } else {
        for i in 0..n {
            for j in 0..m {
                let mut acc = 0i32;
                for (&a, &b) in q.row(i).iter().zip(k.row(j)) {
                    acc = a.checked_mul(b).and_then(|p| acc.checked_add(p)).ok_or_else(|| Error::Overflow {
                        kernel: "dot-product score",
                        position: format!("(i={i}, j={j})"),
                    })?;
                }
                scores[i * m + j] = acc;
            }
        }
    }

    let inv_sqrt_d = ((WEIGHT_ONE as f64) / (d as f64).sqrt()).round() as i64;
    for sij in scores.iter_mut() {
        *sij = round_shift_right(*sij as i64 * inv_sqrt_d, WEIGHT_ONE_LOG2) as i32;
    }
    let weights = q_softmax_rows(&scores, m, 2 * s);

    let mut out = vec![0i32; n * dv];
    let wmax = weights.iter().copied().max().unwrap_or(0) as i64;
    let wsum_max = weights.chunks(m).map(|r| r.iter().map(|&w| w as i64).sum::<i64>()).max().unwrap_or(0);
    let bound = wsum_max.max(wmax) * v.max_abs();
    let mut acc = vec![0i32; dv];
    for i in 0..n {
        let wi = &weights[i * m..(i + 1) * m];
        acc.fill(0);
        if bound <= ACC_MAX {
            for (j, &w) in wi.iter().enumerate() {
                for (a, &x) in acc.iter_mut().zip(v.row(j)) {
                    *a = a.wrapping_add(w.wrapping_mul(x));
                }
            }
        } else {
            for (j, &w) in wi.iter().enumerate() {
                for (kk, (a, &x)) in acc.iter_mut().zip(v.row(j)).enumerate() {
                    *a = w.checked_mul(x).and_then(|p| a.checked_add(p)).ok_or_else(|| Error::Overflow {
                        kernel: "weighted value sum",
                        position: format!("(i={i}, k={kk})"),
                    })?;
                }
            }
        }
        let (lo, hi) = (min_q(v.bits) as i64, max_q(v.bits) as i64);
        for (o, &a) in out[i * dv..(i + 1) * dv].iter_mut().zip(&acc) {
            *o = round_shift_right(a as i64, WEIGHT_ONE_LOG2).clamp(lo, hi) as i32;
        }
    }
    Ok(QTensor { rows: n, cols: dv, data: out, scale_exp: v.scale_exp, bits: v.bits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qt(rows: usize, cols: usize, data: &[i32]) -> QTensor {
        QTensor::from_vec(rows, cols, data.to_vec(), 0, 16).unwrap()
    }

    #[test]
    fn quantize_basics() {
        let q = quantize(&Tensor2D::from_rows(&[[1.0, 0.0, -1.0]]), 16, -8).unwrap();
        assert_eq!(q.data(), &[256, 0, -256]);
        let q = quantize(&Tensor2D::zeros(2, 2), 8, 3).unwrap();
        assert!(q.data().iter().all(|&x| x == 0));
        assert!(quantize(&Tensor2D::zeros(1, 1), 12, 0).is_err());
    }

    #[test]
    fn quantize_rounds_half_away_and_saturates() {
        let a = Tensor2D::from_rows(&[[0.5, -0.5, 1.5, -2.5, 1000.0, -1000.0]]);
        let (q, stats) = quantize_with_stats(&a, 8, 0).unwrap();
        assert_eq!(q.data(), &[1, -1, 2, -3, 127, -128]);
        assert_eq!(stats.saturated, 2);
    }

    #[test]
    fn round_trip_within_half_lsb() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for scale_exp in [-10, -8, -4, 0, 2] {
            let lsb = (2f64).powi(scale_exp);
            let a = Tensor2D::random_uniform(6, 6, -100.0 * lsb, 100.0 * lsb, &mut rng);
            let back = dequantize(&quantize(&a, 16, scale_exp).unwrap());
            for (x, y) in a.data().iter().zip(back.data()) {
                assert!((x - y).abs() <= lsb / 2.0 + 1e-15);
            }
        }
    }

    #[test]
    fn requantize_cases() {
        let q = qt(1, 4, &[4, 3, -3, -5]);
        assert_eq!(requantize(&q, 0, 16).unwrap(), q);
        let half = requantize(&q, 1, 16).unwrap();
        assert_eq!(half.data(), &[2, 2, -2, -3]);
        assert_eq!(half.scale_exp(), 1);
        let up = requantize(&qt(1, 2, &[100, -100]), -2, 8).unwrap();
        assert_eq!(up.data(), &[127, -128]);
        assert!(requantize(&q, 0, 12).is_err());
    }

    #[test]
    fn requantize_round_trip_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data: Vec<i32> = (0..64).map(|_| rng.gen_range(-30000..30000)).collect();
        let q = QTensor::from_vec(8, 8, data, -12, 16).unwrap();
        for shift in 1..6 {
            let r = requantize(&q, -12 + shift, 16).unwrap();
            let (a, b) = (dequantize(&q), dequantize(&r));
            let tol = (2f64).powi(-12 + shift - 1);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= tol + 1e-12);
            }
        }
    }

    #[test]
    fn from_vec_rejects_out_of_range() {
        assert!(QTensor::from_vec(1, 1, vec![200], 0, 8).is_err());
        assert!(QTensor::from_vec(1, 2, vec![1], 0, 8).is_err());
    }

    #[test]
    fn inhibitor_hand_example() {
        // Q = [[0,0]], K = [[0,0],[4,0]] gives Z = [[0, 4]]
        let q = qt(1, 2, &[0, 0]);
        let k = qt(2, 2, &[0, 0, 4, 0]);
        let v = qt(2, 2, &[5, -1, 2, 3]);
        let h = q_manhattan_inhibitor(&q, &k, &v, 0, 0).unwrap();
        assert_eq!(h.data(), &[5, 0]);
        assert_eq!(h.bits(), 32);
    }

    #[test]
    fn inhibitor_zero_scores_sum_positive_values() {
        // identical query/key rows make every score zero
        let same = qt(3, 2, &[1, -1, 1, -1, 1, -1]);
        let v = qt(3, 2, &[5, -1, 2, 3, -7, 9]);
        let h = q_manhattan_inhibitor(&same, &same, &v, 0, 0).unwrap();
        for i in 0..3 {
            assert_eq!(&h.data()[2 * i..2 * i + 2], &[7, 12]);
        }
    }

    #[test]
    fn fused_matches_naive_exhaustively_small() {
        // all 2x2 V, and Z rows drawn from [0, 8]
        let range = -8..=8;
        let mut checked = 0;
        for v0 in range.clone() {
            for v1 in range.clone() {
                for v2 in range.clone() {
                    for v3 in range.clone() {
                        let v = qt(2, 2, &[v0, v1, v2, v3]);
                        for z0 in 0..=8 {
                            for z1 in (0..=8).step_by(3) {
                                let z = [z0, z1, z1, z0];
                                let f = q_inhibit_fused(&v, &z, 2).unwrap();
                                let n = q_inhibit_naive(&v, &z, 2).unwrap();
                                assert_eq!(f, n);
                                checked += 1;
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(checked, 17usize.pow(4) * 9 * 3);
    }

    #[test]
    fn inhibitor_tracks_float_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = -8;
        let lsb = (2f64).powi(s);
        for (n, d) in [(4, 4), (8, 16), (16, 4)] {
            let gamma_shift = 1;
            let alpha_q = 64;
            let q = quantize(&Tensor2D::random_uniform(n, d, -1.0, 1.0, &mut rng), 16, s).unwrap();
            let k = quantize(&Tensor2D::random_uniform(n, d, -1.0, 1.0, &mut rng), 16, s).unwrap();
            let v = quantize(&Tensor2D::random_uniform(n, d, -1.0, 1.0, &mut rng), 16, s).unwrap();
            let hq = dequantize(&q_manhattan_inhibitor(&q, &k, &v, alpha_q, gamma_shift).unwrap());
            let mut cfg = attention::AttentionConfig::new(n, d, attention::Mechanism::Inhibitor);
            cfg.gamma = 2.0;
            cfg.alpha = alpha_q as f64 * lsb;
            let hf = attention::inhibitor_attention(&dequantize(&q), &dequantize(&k), &dequantize(&v), &cfg).unwrap();
            let tol = (2f64).powi(s + 2) * n as f64;
            for (a, b) in hq.data().iter().zip(hf.data()) {
                assert!((a - b).abs() <= tol, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn inhibitor_overflow_is_reported() {
        let big = QTensor::from_vec(2, 1, vec![i32::MAX, i32::MIN], 0, 32).unwrap();
        let err = q_manhattan_inhibitor(&big, &big, &big, 0, 0).unwrap_err();
        assert!(matches!(err, Error::Overflow { kernel: "manhattan score", .. }), "{err}");
        assert!(err.to_string().contains("i=0, j=1"));
    }

    #[test]
    fn inhibitor_rejects_mixed_scales() {
        let a = QTensor::from_vec(1, 1, vec![1], 0, 16).unwrap();
        let b = QTensor::from_vec(1, 1, vec![1], -1, 16).unwrap();
        assert!(q_manhattan_inhibitor(&a, &a, &b, 0, 0).is_err());
    }

    #[test]
    fn softmax_single_and_uniform() {
        assert_eq!(q_softmax_rows(&[123], 1, -16), vec![WEIGHT_ONE]);
        for n in [2usize, 3, 7, 20, 100] {
            let w = q_softmax_rows(&vec![0; n], n, -16);
            let expected = WEIGHT_ONE as f64 / n as f64;
            for &x in &w {
                assert!((x as f64 - expected).abs() <= 1.0, "n={n}: {x}");
            }
            let total: i32 = w.iter().sum();
            assert!((total - WEIGHT_ONE).abs() <= n as i32);
        }
    }

    #[test]
    fn dotprod_single_row_keeps_value() {
        let q = qt(1, 2, &[3, -4]);
        let k = qt(1, 2, &[7, 1]);
        let v = qt(1, 3, &[100, -250, 7]);
        let h = q_dotprod_attention(&q, &k, &v).unwrap();
        assert_eq!(h.data(), v.data());
    }

    #[test]
    fn dotprod_tracks_float_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = -12;
        for (n, d) in [(4, 4), (8, 16), (32, 8)] {
            let q = quantize(&Tensor2D::random_uniform(n, d, -1.0, 1.0, &mut rng), 16, s).unwrap();
            let k = quantize(&Tensor2D::random_uniform(n, d, -1.0, 1.0, &mut rng), 16, s).unwrap();
            let v = quantize(&Tensor2D::random_uniform(n, d, -1.0, 1.0, &mut rng), 16, s).unwrap();
            let hq = dequantize(&q_dotprod_attention(&q, &k, &v).unwrap());
            let hf = attention::dotprod_attention(&dequantize(&q), &dequantize(&k), &dequantize(&v), d).unwrap();
            let err = hq.data().iter().zip(hf.data()).fold(0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 0.01 * hf.max_abs(), "n={n} d={d}: {err} vs {}", hf.max_abs());
        }
    }

    #[test]
    fn dotprod_overflow_is_reported() {
        let big = QTensor::from_vec(1, 2, vec![i32::MAX, i32::MAX], 0, 32).unwrap();
        let err = q_dotprod_attention(&big, &big, &big).unwrap_err();
        assert!(err.is_overflow());
    }

    #[test]
    fn widening_gap() {
        assert_eq!(inhibitor_accumulator_bits(16, 512, 64), 26);
        assert_eq!(dotprod_accumulator_bits(16, 64), 38);
        for n in [64usize, 128, 256, 512] {
            for bits in [8u32, 16] {
                assert!(inhibitor_accumulator_bits(bits, n, 64) < dotprod_accumulator_bits(bits, 64));
            }
        }
    }
}
