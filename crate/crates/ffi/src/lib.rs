//! C ABI for the attention kernels, the integer kernels and the circuit cost
//! model.
//!
//! Conventions:
//! * every fallible call returns an [`InhStatus`] and writes results through
//!   out-pointers; on failure [`inh_last_error`] describes the problem;
//! * tensors and circuits are opaque handles owned by the caller and released
//!   with their `_free` function (passing NULL is a no-op);
//! * matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use inhibitor::attention::{self, AttentionConfig};
use inhibitor::fhe::{self, CircuitGraph, Interpreter, Interval, LoweringConfig};
use inhibitor::quant::{self, QTensor};
use inhibitor::{Error, Mechanism, Tensor2D};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    /// Accumulator, message-space or table-precision overflow.
    Overflow = 4,
    Diverged = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InhMechanism {
    DotProd = 0,
    Inhibitor = 1,
}

impl From<InhMechanism> for Mechanism {
    fn from(m: InhMechanism) -> Self {
        match m {
            InhMechanism::DotProd => Mechanism::DotProd,
            InhMechanism::Inhibitor => Mechanism::Inhibitor,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InhCostReport {
    pub pbs_count: u64,
    pub add_count: u64,
    pub mul_const_count: u64,
    pub max_bits: u32,
    pub est_cost: f64,
    /// Nonzero when outputs are numerator/denominator pairs divided after decryption.
    pub client_division: u8,
}

/// Opaque dense `f64` matrix.
pub struct InhTensor {
    inner: Tensor2D,
}

/// Opaque integer circuit.
pub struct InhCircuit {
    inner: CircuitGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> InhStatus {
    match e {
        Error::Shape { .. } => InhStatus::Shape,
        Error::InvalidArgument(_) => InhStatus::InvalidArgument,
        Error::Diverged { .. } => InhStatus::Diverged,
        e if e.is_overflow() => InhStatus::Overflow,
        _ => InhStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> InhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            InhStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            InhStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            InhStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn put_tensor(out: *mut *mut InhTensor, t: Tensor2D) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(InhTensor { inner: t }));
    Ok(())
}

/// Message for the most recent failed call on this thread ("" after success).
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn inh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// NUL-terminated library version.
#[no_mangle]
pub extern "C" fn inh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a `rows x cols` tensor copied from `data` (`rows * cols` values),
/// or zero-filled when `data` is NULL.
///
/// # Safety
/// `data` must be NULL or point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inh_tensor_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut InhTensor,
) -> InhStatus {
    guard(|| {
        let len = rows.checked_mul(cols).ok_or_else(|| Error::InvalidArgument("rows * cols overflows".into()))?;
        let t = if data.is_null() {
            Tensor2D::zeros(rows, cols)
        } else {
            Tensor2D::from_vec(rows, cols, slice_in(data, len, "data")?.to_vec())?
        };
        put_tensor(out, t)
    })
}

/// # Safety
/// `t` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn inh_tensor_free(t: *mut InhTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn inh_tensor_rows(t: *const InhTensor) -> usize {
    t.as_ref().map_or(0, |t| t.inner.rows())
}

/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn inh_tensor_cols(t: *const InhTensor) -> usize {
    t.as_ref().map_or(0, |t| t.inner.cols())
}

/// Copies the row-major entries into `out`, which must hold exactly `rows * cols` values.
///
/// # Safety
/// `t` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn inh_tensor_copy_data(t: *const InhTensor, out: *mut f64, len: usize) -> InhStatus {
    guard(|| {
        let t = deref(t, "tensor")?;
        if len != t.inner.data().len() {
            return Err(Error::InvalidArgument(format!(
                "buffer holds {len} values, tensor has {}",
                t.inner.data().len()
            ))
            .into());
        }
        slice_out(out, len, "out")?.copy_from_slice(t.inner.data());
        Ok(())
    })
}

/// `Softmax(Q K^T / sqrt(d)) V` with `d = cols(Q)`.
///
/// # Safety
/// `q`, `k`, `v` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inh_dotprod_attention(
    q: *const InhTensor,
    k: *const InhTensor,
    v: *const InhTensor,
    out: *mut *mut InhTensor,
) -> InhStatus {
    guard(|| {
        let (q, k, v) = (deref(q, "q")?, deref(k, "k")?, deref(v, "v")?);
        let h = attention::dotprod_attention(&q.inner, &k.inner, &v.inner, q.inner.cols())?;
        put_tensor(out, h)
    })
}

/// Inhibitor attention. `gamma <= 0` selects `sqrt(cols(Q))`; `is_signed`
/// nonzero selects the signed inhibition.
///
/// # Safety
/// `q`, `k`, `v` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inh_inhibitor_attention(
    q: *const InhTensor,
    k: *const InhTensor,
    v: *const InhTensor,
    gamma: f64,
    alpha: f64,
    is_signed: i32,
    out: *mut *mut InhTensor,
) -> InhStatus {
    guard(|| {
        let (q, k, v) = (deref(q, "q")?, deref(k, "k")?, deref(v, "v")?);
        let mut cfg = AttentionConfig::new(q.inner.rows(), q.inner.cols(), Mechanism::Inhibitor);
        if gamma > 0.0 {
            cfg.gamma = gamma;
        }
        cfg.alpha = alpha;
        cfg.signed = is_signed != 0;
        let h = attention::inhibitor_attention(&q.inner, &k.inner, &v.inner, &cfg)?;
        put_tensor(out, h)
    })
}

/// `H[i][k] = sum_j relu(V[j][k] - Z[i][j])` by the fused identity.
///
/// # Safety
/// `v`, `z` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inh_inhibit_fused(
    v: *const InhTensor,
    z: *const InhTensor,
    out: *mut *mut InhTensor,
) -> InhStatus {
    guard(|| {
        let (v, z) = (deref(v, "v")?, deref(z, "z")?);
        put_tensor(out, attention::inhibit_fused(&v.inner, &z.inner)?)
    })
}

/// Pairwise L1 distances between the rows of `a` and `b`.
///
/// # Safety
/// `a`, `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inh_cdist_manhattan(
    a: *const InhTensor,
    b: *const InhTensor,
    out: *mut *mut InhTensor,
) -> InhStatus {
    guard(|| {
        let (a, b) = (deref(a, "a")?, deref(b, "b")?);
        put_tensor(out, inhibitor::tensor::cdist_manhattan(&a.inner, &b.inner)?)
    })
}

/// Integer inhibitor attention on `n x d` operands sharing `scale_exp` and
/// `bits` (8 or 16). Writes `n x d` 32-bit results at the same scale.
///
/// # Safety
/// `q`, `k`, `v` must each point to `n * d` readable values; `out` to `n * d` writable ones.
#[no_mangle]
pub unsafe extern "C" fn inh_quant_inhibitor(
    q: *const i32,
    k: *const i32,
    v: *const i32,
    n: usize,
    d: usize,
    scale_exp: i32,
    bits: u32,
    alpha_q: i32,
    gamma_shift: u32,
    out: *mut i32,
) -> InhStatus {
    guard(|| {
        let len = n.checked_mul(d).ok_or_else(|| Error::InvalidArgument("n * d overflows".into()))?;
        let load = |p: *const i32, what| -> Result<QTensor, Fail> {
            Ok(QTensor::from_vec(n, d, slice_in(p, len, what)?.to_vec(), scale_exp, bits)?)
        };
        let h = quant::q_manhattan_inhibitor(&load(q, "q")?, &load(k, "k")?, &load(v, "v")?, alpha_q, gamma_shift)?;
        slice_out(out, len, "out")?.copy_from_slice(h.data());
        Ok(())
    })
}

/// Lowers one attention mechanism over `n x d` inputs of `bits` signed bits.
/// Input order is Q, K, V, each row-major. For the dot-product circuit the
/// outputs are `n * d` numerators followed by `n` softmax denominators.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inh_circuit_build(
    mechanism: InhMechanism,
    n: usize,
    d: usize,
    bits: u32,
    precision: u32,
    gamma_shift: u32,
    alpha_q: i64,
    out: *mut *mut InhCircuit,
) -> InhStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let cfg = LoweringConfig { precision, gamma_shift, alpha_q, ..LoweringConfig::new(n, d, bits) };
        let c = fhe::build_circuit(mechanism.into(), &cfg)?;
        *out = Box::into_raw(Box::new(InhCircuit { inner: c }));
        Ok(())
    })
}

/// # Safety
/// `c` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn inh_circuit_free(c: *mut InhCircuit) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn inh_circuit_num_inputs(c: *const InhCircuit) -> usize {
    c.as_ref().map_or(0, |c| c.inner.inputs.len())
}

/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn inh_circuit_num_outputs(c: *const InhCircuit) -> usize {
    c.as_ref().map_or(0, |c| c.inner.outputs.len())
}

/// Interval analysis and operation tally with the default cost weights.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inh_circuit_analyze(c: *const InhCircuit, out: *mut InhCostReport) -> InhStatus {
    guard(|| {
        let c = deref(c, "circuit")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let r = fhe::analyze_bits(&c.inner);
        *out = InhCostReport {
            pbs_count: r.pbs_count as u64,
            add_count: r.add_count as u64,
            mul_const_count: r.mul_const_count as u64,
            max_bits: r.max_bits,
            est_cost: r.est_cost,
            client_division: u8::from(r.client_division),
        };
        Ok(())
    })
}

/// Noise-free evaluation. Values outside the message space yield `OVERFLOW`.
///
/// # Safety
/// `inputs` must point to `n_inputs` readable values and `outputs` to `n_outputs` writable ones.
#[no_mangle]
pub unsafe extern "C" fn inh_circuit_interpret(
    c: *const InhCircuit,
    inputs: *const i64,
    n_inputs: usize,
    outputs: *mut i64,
    n_outputs: usize,
) -> InhStatus {
    guard(|| {
        let c = deref(c, "circuit")?;
        if n_outputs != c.inner.outputs.len() {
            return Err(Error::InvalidArgument(format!(
                "output buffer holds {n_outputs} values, circuit has {}",
                c.inner.outputs.len()
            ))
            .into());
        }
        let mut it = Interpreter::new(&c.inner);
        it.run(slice_in(inputs, n_inputs, "inputs")?)?;
        for (o, v) in slice_out(outputs, n_outputs, "outputs")?.iter_mut().zip(it.outputs()) {
            *o = v;
        }
        Ok(())
    })
}

/// `a * b` through two quarter-square table lookups of `precision` bits.
/// Operands must fit `precision - 1` signed bits.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inh_pbs_mul(a: i64, b: i64, precision: u32, out: *mut i64) -> InhStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        if !(2..=fhe::MAX_PRECISION).contains(&precision) {
            return Err(Error::InvalidArgument(format!("precision must be in 2..={}", fhe::MAX_PRECISION)).into());
        }
        let mut c = CircuitGraph::new(precision)?;
        let range = Interval::signed_bits(precision - 1);
        let (x, y) = (c.input(range), c.input(range));
        let p = c.pbs_mul(x, y)?;
        c.outputs.push(p);
        let mut it = Interpreter::new(&c);
        it.run(&[a, b])?;
        *out = it.outputs().next().unwrap_or_default();
        Ok(())
    })
}
