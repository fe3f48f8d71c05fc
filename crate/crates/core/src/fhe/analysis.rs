use std::io::{self, Write};

use super::circuit::{infer_interval, CircuitGraph, Interval, Op};

/// Weights of the latency proxy `pbs * pbs_base^max_bits + adds * add + mul_const * mul_const`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub pbs_base: f64,
    pub add: f64,
    pub mul_const: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { pbs_base: 2.0, add: 1.0, mul_const: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub mechanism: String,
    pub seq_len: usize,
    pub dim: usize,
    pub bits: u32,
    pub pbs_count: usize,
    /// Additions, subtractions and negations.
    pub add_count: usize,
    pub mul_const_count: usize,
    pub max_bits: u32,
    pub est_cost: f64,
    /// Outputs include numerator/denominator pairs divided after decryption.
    pub client_division: bool,
}

pub const COST_CSV_HEADER: &str = "mechanism,n,d,bits,pbs,adds,mul_const,max_bits,est_cost";

impl CostReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.mechanism,
            self.seq_len,
            self.dim,
            self.bits,
            self.pbs_count,
            self.add_count,
            self.mul_const_count,
            self.max_bits,
            self.est_cost
        )
    }
}

pub fn write_cost_csv<W: Write>(mut w: W, reports: &[CostReport]) -> io::Result<()> {
    writeln!(w, "{COST_CSV_HEADER}")?;
    for r in reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Re-derives every node interval from the declared input ranges.
pub fn propagate_intervals(c: &CircuitGraph) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::with_capacity(c.nodes.len());
    for node in &c.nodes {
        let mut iv = infer_interval(&node.op, |id| out[id], &c.tables);
        if let Some(r) = node.refine {
            iv = iv.intersect(r).unwrap_or(iv);
        }
        out.push(iv);
    }
    out
}

pub fn analyze_bits(c: &CircuitGraph) -> CostReport {
    analyze_bits_with(c, &CostWeights::default())
}

/// Forward interval propagation plus operation tally.
///
/// `max_bits` is the widest signed width over all node intervals; every PBS
/// is charged at that width since one circuit shares one message space.
pub fn analyze_bits_with(c: &CircuitGraph, weights: &CostWeights) -> CostReport {
    let intervals = propagate_intervals(c);
    let max_bits = intervals.iter().map(Interval::bits_needed).max().unwrap_or(1);
    let (mut pbs, mut adds, mut muls) = (0, 0, 0);
    for node in &c.nodes {
        match node.op {
            Op::Lut(..) => pbs += 1,
            Op::Add(..) | Op::Sub(..) | Op::Neg(_) => adds += 1,
            Op::MulConst(..) => muls += 1,
            Op::Input(_) | Op::Const(_) => {}
        }
    }
    let est_cost = pbs as f64 * weights.pbs_base.powi(max_bits as i32)
        + adds as f64 * weights.add
        + muls as f64 * weights.mul_const;
    CostReport {
        mechanism: c.meta.mechanism.map_or_else(|| "custom".to_string(), |m| m.as_str().to_string()),
        seq_len: c.meta.seq_len,
        dim: c.meta.dim,
        bits: c.meta.bits,
        pbs_count: pbs,
        add_count: adds,
        mul_const_count: muls,
        max_bits,
        est_cost,
        client_division: c.meta.client_division,
    }
}
