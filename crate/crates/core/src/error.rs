use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A fixed-point accumulator would leave its 32-bit range.
    #[error("arithmetic overflow in {kernel} at {position}")]
    Overflow { kernel: &'static str, position: String },

    /// A circuit value escaped the message space (or its analyzed interval).
    #[error("message-space overflow at node {node}: value {value} outside [{lo}, {hi}]")]
    MessageSpace { node: usize, value: i64, lo: i64, hi: i64 },

    /// A lookup table would need more input bits than the configured PBS precision.
    #[error("precision overflow at node {node}: needs {bits} bits, precision is {precision}")]
    Precision { node: usize, bits: u32, precision: u32 },

    #[error("training diverged at step {step}")]
    Diverged { step: usize },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Shape { op, lhs, rhs }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for the overflow family (fixed-point accumulator, message space, LUT precision).
    pub fn is_overflow(&self) -> bool {
        matches!(self, Error::Overflow { .. } | Error::MessageSpace { .. } | Error::Precision { .. })
    }
}
