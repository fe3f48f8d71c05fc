//! TFHE-style integer circuits: a DAG of additions, literal multiplications
//! and table lookups (programmable bootstraps), with interval-based bit-width
//! analysis, a functional interpreter and a PBS cost tally.
//!
//! Noise is not modeled. Leaving the message space is a hard error.

mod analysis;
mod circuit;
mod interp;
mod lower;

pub use analysis::{
    analyze_bits, analyze_bits_with, propagate_intervals, write_cost_csv, CostReport, CostWeights, COST_CSV_HEADER,
};
pub use circuit::{
    lut_apply, quarter_square, CircuitGraph, CircuitMeta, Interval, Lut, Node, NodeId, Op, DEFAULT_PRECISION,
    MAX_PRECISION,
};
pub use interp::{interpret, Interpreter};
pub use lower::{
    build_circuit, build_dotprod_circuit, build_inhibitor_circuit, dotprod_pbs_formula, exp_weight,
    inhibitor_pbs_formula, LoweringConfig,
};
