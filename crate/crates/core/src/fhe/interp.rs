use crate::error::{Error, Result};

use super::circuit::{CircuitGraph, Op};

/// Noise-free functional evaluator with a reusable value buffer.
///
/// Every computed value is checked against its node's analyzed interval, so a
/// run doubles as a soundness check of the interval analysis.
pub struct Interpreter<'c> {
    circuit: &'c CircuitGraph,
    values: Vec<i64>,
}

impl<'c> Interpreter<'c> {
    pub fn new(circuit: &'c CircuitGraph) -> Self {
        Self { circuit, values: vec![0; circuit.nodes.len()] }
    }

    /// Evaluates every node; `inputs` follow [`CircuitGraph::inputs`] order.
    pub fn run(&mut self, inputs: &[i64]) -> Result<()> {
        let c = self.circuit;
        if inputs.len() != c.inputs.len() {
            return Err(Error::invalid(format!("circuit takes {} inputs, got {}", c.inputs.len(), inputs.len())));
        }
        let mut next_input = 0;
        for (id, node) in c.nodes.iter().enumerate() {
            let v = &self.values;
            let x = match node.op {
                Op::Input(_) => {
                    next_input += 1;
                    inputs[next_input - 1]
                }
                Op::Const(k) => k,
                Op::Add(a, b) => v[a] + v[b],
                Op::Sub(a, b) => v[a] - v[b],
                Op::Neg(a) => -v[a],
                Op::MulConst(a, k) => v[a] * k,
                Op::Lut(a, t) => {
                    let table = &c.tables[t];
                    table.get(v[a]).ok_or_else(|| {
                        let domain = table.domain();
                        Error::MessageSpace { node: id, value: v[a], lo: domain.lo, hi: domain.hi }
                    })?
                }
            };
            if !node.interval.contains(x) {
                return Err(Error::MessageSpace { node: id, value: x, lo: node.interval.lo, hi: node.interval.hi });
            }
            self.values[id] = x;
        }
        Ok(())
    }

    pub fn value(&self, node: usize) -> i64 {
        self.values[node]
    }

    pub fn outputs(&self) -> impl Iterator<Item = i64> + '_ {
        self.circuit.outputs.iter().map(|&id| self.values[id])
    }
}

/// Evaluates `c` on `inputs` and returns its outputs.
pub fn interpret(c: &CircuitGraph, inputs: &[i64]) -> Result<Vec<i64>> {
    let mut it = Interpreter::new(c);
    it.run(inputs)?;
    Ok(it.outputs().collect())
}
