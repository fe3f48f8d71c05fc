//! Inhibitor attention (Manhattan score + ReLU inhibition) next to
//! conventional dot-product attention, in three arithmetic settings:
//!
//! * [`attention`]: `f64` reference implementations, the oracle for the rest;
//! * [`quant`]: fixed-point integer kernels with checked 32-bit accumulation;
//! * [`fhe`]: a TFHE-style integer circuit IR with interval bit-width
//!   analysis, a noise-free interpreter and a PBS cost model.
//!
//! [`autograd`] differentiates the float ops and trains small models on the
//! adding problem; [`bench`] times the integer kernels.

pub mod attention;
pub mod autograd;
pub mod bench;
pub mod error;
pub mod fhe;
pub mod quant;
pub mod tensor;
pub mod verify;

pub use attention::{AttentionConfig, Mechanism};
pub use error::{Error, Result};
pub use tensor::Tensor2D;
