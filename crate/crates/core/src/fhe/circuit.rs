use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::attention::Mechanism;
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Default programmable-bootstrapping precision: 7-bit lookup tables.
pub const DEFAULT_PRECISION: u32 = 7;
pub const MAX_PRECISION: u32 = 16;

/// Closed integer interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: i64,
    pub hi: i64,
}

#[allow(clippy::should_implement_trait)]
impl Interval {
    pub fn new(lo: i64, hi: i64) -> Self {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: i64) -> Self {
        Self { lo: x, hi: x }
    }

    /// Range of a signed `bits`-bit integer.
    pub fn signed_bits(bits: u32) -> Self {
        Self { lo: -(1i64 << (bits - 1)), hi: (1i64 << (bits - 1)) - 1 }
    }

    pub fn contains(&self, x: i64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.lo - o.hi, self.hi - o.lo)
    }

    pub fn neg(self) -> Self {
        Self::new(-self.hi, -self.lo)
    }

    pub fn scale(self, c: i64) -> Self {
        let (a, b) = (self.lo * c, self.hi * c);
        Self::new(a.min(b), a.max(b))
    }

    pub fn mul(self, o: Self) -> Self {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Self::new(*c.iter().min().unwrap(), *c.iter().max().unwrap())
    }

    pub fn intersect(self, o: Self) -> Option<Self> {
        let (lo, hi) = (self.lo.max(o.lo), self.hi.min(o.hi));
        (lo <= hi).then_some(Self { lo, hi })
    }

    /// Smallest two's-complement width holding every value of the interval.
    pub fn bits_needed(&self) -> u32 {
        let mut b = 1;
        while !Self::signed_bits(b).contains(self.lo) || !Self::signed_bits(b).contains(self.hi) {
            b += 1;
        }
        b
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// A programmable-bootstrapping table over the full signed domain of `p` bits:
/// `values[x + 2^(p-1)] = f(x)` for `x` in `[-2^(p-1), 2^(p-1) - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lut {
    pub name: String,
    pub precision: u32,
    pub values: Vec<i64>,
}

impl Lut {
    pub fn from_fn(name: impl Into<String>, precision: u32, f: impl Fn(i64) -> i64) -> Self {
        let domain = Interval::signed_bits(precision);
        Self { name: name.into(), precision, values: (domain.lo..=domain.hi).map(f).collect() }
    }

    pub fn domain(&self) -> Interval {
        Interval::signed_bits(self.precision)
    }

    pub fn get(&self, x: i64) -> Option<i64> {
        let idx = x - self.domain().lo;
        usize::try_from(idx).ok().and_then(|i| self.values.get(i).copied())
    }

    /// Output range over the entries reachable from `input`.
    pub fn image(&self, input: Interval) -> Interval {
        let lo_idx = (input.lo - self.domain().lo) as usize;
        let hi_idx = (input.hi - self.domain().lo) as usize;
        let reach = &self.values[lo_idx..=hi_idx];
        Interval::new(*reach.iter().min().unwrap(), *reach.iter().max().unwrap())
    }
}

/// Table lookup as performed by a PBS: `table[x - lo]`, where `lo` is the
/// bottom of the table's message space. Inputs outside it are an error.
pub fn lut_apply(x: i64, table: &Lut) -> Result<i64> {
    let domain = table.domain();
    table.get(x).ok_or(Error::MessageSpace { node: usize::MAX, value: x, lo: domain.lo, hi: domain.hi })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Input(Interval),
    Const(i64),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Neg(NodeId),
    MulConst(NodeId, i64),
    /// Index into [`CircuitGraph::tables`].
    Lut(NodeId, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub op: Op,
    pub interval: Interval,
    /// A sound bound known from the construction (e.g. the exact product a
    /// PBS multiplication computes); intersected with the propagated interval.
    pub refine: Option<Interval>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CircuitMeta {
    pub mechanism: Option<Mechanism>,
    pub seq_len: usize,
    pub dim: usize,
    pub bits: u32,
    /// Some outputs are numerators whose division happens after decryption.
    pub client_division: bool,
}

/// A DAG of TFHE-style integer operations in topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitGraph {
    pub nodes: Vec<Node>,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
    pub tables: Vec<Lut>,
    pub precision: u32,
    pub meta: CircuitMeta,
    table_cache: HashMap<(String, u32), usize>,
}

impl CircuitGraph {
    pub fn new(precision: u32) -> Result<Self> {
        if !(1..=MAX_PRECISION).contains(&precision) {
            return Err(Error::invalid(format!("precision must be in 1..={MAX_PRECISION}, got {precision}")));
        }
        Ok(Self {
            nodes: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            tables: Vec::new(),
            precision,
            meta: CircuitMeta::default(),
            table_cache: HashMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn interval(&self, id: NodeId) -> Interval {
        self.nodes[id].interval
    }

    fn push(&mut self, op: Op, refine: Option<Interval>) -> NodeId {
        let mut interval = infer_interval(&op, |id| self.nodes[id].interval, &self.tables);
        if let Some(r) = refine {
            interval = interval.intersect(r).unwrap_or(interval);
        }
        self.nodes.push(Node { op, interval, refine });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, range: Interval) -> NodeId {
        let id = self.push(Op::Input(range), None);
        self.inputs.push(id);
        id
    }

    pub fn constant(&mut self, value: i64) -> NodeId {
        self.push(Op::Const(value), None)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b), None)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b), None)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg(a), None)
    }

    pub fn mul_const(&mut self, a: NodeId, literal: i64) -> NodeId {
        self.push(Op::MulConst(a, literal), None)
    }

    /// Applies the univariate function `f` through a lookup table sized to the
    /// input's analyzed width. Tables are shared per `(name, width)`.
    pub fn lut(&mut self, a: NodeId, name: &str, f: impl Fn(i64) -> i64) -> Result<NodeId> {
        let bits = self.nodes[a].interval.bits_needed();
        if bits > self.precision {
            return Err(Error::Precision { node: self.nodes.len(), bits, precision: self.precision });
        }
        let key = (name.to_string(), bits);
        let table = match self.table_cache.get(&key) {
            Some(&t) => t,
            None => {
                self.tables.push(Lut::from_fn(name, bits, f));
                self.table_cache.insert(key, self.tables.len() - 1);
                self.tables.len() - 1
            }
        };
        Ok(self.push(Op::Lut(a, table), None))
    }

    /// Ciphertext product from two bootstraps:
    /// `a * b = T(a + b) - T(a - b)` with `T(x) = floor(x^2 / 4)`.
    ///
    /// Exact on integers: `a + b` and `a - b` have equal parity, so both floors
    /// drop the same remainder.
    pub fn pbs_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sum = self.add(a, b);
        let diff = self.sub(a, b);
        let sq_sum = self.lut(sum, "quarter_square", quarter_square)?;
        let sq_diff = self.lut(diff, "quarter_square", quarter_square)?;
        let product = self.nodes[a].interval.mul(self.nodes[b].interval);
        Ok(self.push(Op::Sub(sq_sum, sq_diff), Some(product)))
    }

    /// Input nodes (as positions in [`CircuitGraph::inputs`]) that `node` depends on.
    pub fn support(&self, node: NodeId) -> BTreeSet<usize> {
        let position: HashMap<NodeId, usize> = self.inputs.iter().enumerate().map(|(p, &id)| (id, p)).collect();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![node];
        let mut out = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            match self.nodes[id].op {
                Op::Input(_) => {
                    out.insert(position[&id]);
                }
                Op::Const(_) => {}
                Op::Add(a, b) | Op::Sub(a, b) => stack.extend([a, b]),
                Op::Neg(a) | Op::MulConst(a, _) | Op::Lut(a, _) => stack.push(a),
            }
        }
        out
    }
}

pub fn quarter_square(x: i64) -> i64 {
    (x * x).div_euclid(4)
}

/// Interval transfer function of one operation.
pub(crate) fn infer_interval(op: &Op, get: impl Fn(NodeId) -> Interval, tables: &[Lut]) -> Interval {
    match *op {
        Op::Input(r) => r,
        Op::Const(c) => Interval::point(c),
        Op::Add(a, b) => get(a).add(get(b)),
        Op::Sub(a, b) => get(a).sub(get(b)),
        Op::Neg(a) => get(a).neg(),
        Op::MulConst(a, c) => get(a).scale(c),
        Op::Lut(a, t) => tables[t].image(get(a)),
    }
}
