//! Reverse-mode automatic differentiation over a flat expression tape.
//!
//! A graph is recorded once through [`GraphBuilder`] and then re-evaluated at
//! arbitrary inputs: the tape stores operation kinds and operand indices, not
//! input-specific intermediate values, so a single build amortizes over an
//! entire optimization run. Operands always precede their consumers, which
//! makes the tape acyclic by construction; forward evaluation is a single
//! in-order sweep and the gradient is one reverse sweep over the same tape.
//!
//! Nondifferentiable kinks use fixed subgradient conventions so that repeated
//! evaluations are deterministic:
//! * `min`/`max` route the full adjoint to the first operand attaining the
//!   extremum;
//! * `relu` (clamp below at zero) uses gradient zero at exactly zero.
//!
//! The builder constant-folds eagerly: any operation whose operands are all
//! constants is evaluated at build time and recorded as a constant node. This
//! keeps tapes small when large parts of a graph (e.g. pending points in a
//! batch acquisition) do not depend on the inputs.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Handle to a node in an expression graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Range into the operand arena for variadic operations.
#[derive(Debug, Clone, Copy)]
struct ArgRange {
    start: u32,
    len: u32,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Input { slot: u32 },
    Constant { idx: u32 },
    Add { a: u32, b: u32 },
    Sub { a: u32, b: u32 },
    Mul { a: u32, b: u32 },
    Div { a: u32, b: u32 },
    Neg { a: u32 },
    Exp { a: u32 },
    Ln { a: u32 },
    Sqrt { a: u32 },
    PowConst { a: u32, exp_idx: u32 },
    Relu { a: u32 },
    Sigmoid { a: u32 },
    Min { args: ArgRange },
    Max { args: ArgRange },
    Sum { args: ArgRange },
    Dot { lhs: ArgRange, rhs: ArgRange },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Constant { .. } => "constant",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "subtract",
            Op::Mul { .. } => "multiply",
            Op::Div { .. } => "divide",
            Op::Neg { .. } => "negate",
            Op::Exp { .. } => "exp",
            Op::Ln { .. } => "log",
            Op::Sqrt { .. } => "sqrt",
            Op::PowConst { .. } => "power",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Min { .. } => "minimum",
            Op::Max { .. } => "maximum",
            Op::Sum { .. } => "sum",
            Op::Dot { .. } => "dot",
        }
    }
}

/// Numerically stable logistic function.
fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Immutable, re-evaluable expression tape.
///
/// Thread-safe: evaluation never mutates the graph, so a single graph can be
/// shared across threads, each with its own [`Workspace`].
#[derive(Debug, Clone)]
pub struct ExprGraph<F> {
    ops: Vec<Op>,
    args: Vec<u32>,
    consts: Vec<F>,
    n_inputs: usize,
    output: NodeId,
}

/// Reusable evaluation buffers for a specific graph.
#[derive(Debug, Clone)]
pub struct Workspace<F> {
    values: Vec<F>,
    adjoints: Vec<F>,
}

impl<F> Default for Workspace<F> {
    fn default() -> Self {
        Workspace {
            values: Vec::new(),
            adjoints: Vec::new(),
        }
    }
}

/// Value and input gradient from a reverse sweep.
#[derive(Debug, Clone)]
pub struct GradResult<F> {
    pub value: F,
    pub gradient: Vec<F>,
}

/// Report from comparing the reverse-mode gradient against central finite
/// differences.
#[derive(Debug, Clone)]
pub struct GradCheck<F> {
    /// Reverse-mode gradient.
    pub analytic: Vec<F>,
    /// Central-difference gradient at the same point.
    pub numeric: Vec<F>,
    /// `max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|)`.
    pub max_rel_error: F,
}

impl<F: Real> ExprGraph<F> {
    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_nodes(&self) -> usize {
        self.ops.len()
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    fn arg_slice(&self, r: ArgRange) -> &[u32] {
        &self.args[r.start as usize..(r.start + r.len) as usize]
    }

    fn check_inputs(&self, inputs: &[F]) -> Result<()> {
        if inputs.len() != self.n_inputs {
            return Err(Error::InputArity {
                expected: self.n_inputs,
                got: inputs.len(),
            });
        }
        Ok(())
    }

    /// Forward evaluation into a caller-owned workspace.
    pub fn evaluate_in(&self, ws: &mut Workspace<F>, inputs: &[F]) -> Result<F> {
        self.check_inputs(inputs)?;
        ws.values.clear();
        ws.values.resize(self.ops.len(), F::zero());
        let vals = &mut ws.values;
        for (idx, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Input { slot } => inputs[slot as usize],
                Op::Constant { idx } => self.consts[idx as usize],
                Op::Add { a, b } => vals[a as usize] + vals[b as usize],
                Op::Sub { a, b } => vals[a as usize] - vals[b as usize],
                Op::Mul { a, b } => vals[a as usize] * vals[b as usize],
                Op::Div { a, b } => vals[a as usize] / vals[b as usize],
                Op::Neg { a } => -vals[a as usize],
                Op::Exp { a } => vals[a as usize].exp(),
                Op::Ln { a } => vals[a as usize].ln(),
                Op::Sqrt { a } => vals[a as usize].sqrt(),
                Op::PowConst { a, exp_idx } => {
                    vals[a as usize].powf(self.consts[exp_idx as usize])
                }
                Op::Relu { a } => {
                    let x = vals[a as usize];
                    if x > F::zero() {
                        x
                    } else {
                        F::zero()
                    }
                }
                Op::Sigmoid { a } => sigmoid(vals[a as usize]),
                Op::Min { args } => {
                    let mut m = F::infinity();
                    for &a in self.arg_slice(args) {
                        let x = vals[a as usize];
                        if x < m {
                            m = x;
                        }
                    }
                    m
                }
                Op::Max { args } => {
                    let mut m = F::neg_infinity();
                    for &a in self.arg_slice(args) {
                        let x = vals[a as usize];
                        if x > m {
                            m = x;
                        }
                    }
                    m
                }
                Op::Sum { args } => {
                    let mut s = F::zero();
                    for &a in self.arg_slice(args) {
                        s = s + vals[a as usize];
                    }
                    s
                }
                Op::Dot { lhs, rhs } => {
                    let la = self.arg_slice(lhs);
                    let rb = self.arg_slice(rhs);
                    let mut s = F::zero();
                    for (&a, &b) in la.iter().zip(rb) {
                        s = s + vals[a as usize] * vals[b as usize];
                    }
                    s
                }
            };
            if !v.is_finite() {
                return Err(Error::NonFiniteNode {
                    node: idx,
                    op: op.name(),
                    phase: "forward evaluation",
                });
            }
            vals[idx] = v;
        }
        Ok(vals[self.output.index()])
    }

    /// Forward evaluation with a fresh workspace.
    pub fn evaluate(&self, inputs: &[F]) -> Result<F> {
        let mut ws = Workspace::default();
        self.evaluate_in(&mut ws, inputs)
    }

    /// Value and gradient with respect to all inputs, reusing buffers.
    pub fn gradient_in(&self, ws: &mut Workspace<F>, inputs: &[F]) -> Result<GradResult<F>> {
        let value = self.evaluate_in(ws, inputs)?;
        ws.adjoints.clear();
        ws.adjoints.resize(self.ops.len(), F::zero());
        let vals = &ws.values;
        let adj = &mut ws.adjoints;
        adj[self.output.index()] = F::one();
        let mut gradient = vec![F::zero(); self.n_inputs];
        for idx in (0..self.ops.len()).rev() {
            let w = adj[idx];
            if w == F::zero() {
                continue;
            }
            if !w.is_finite() {
                return Err(Error::NonFiniteNode {
                    node: idx,
                    op: self.ops[idx].name(),
                    phase: "reverse sweep",
                });
            }
            match self.ops[idx] {
                Op::Input { slot } => gradient[slot as usize] = gradient[slot as usize] + w,
                Op::Constant { .. } => {}
                Op::Add { a, b } => {
                    adj[a as usize] = adj[a as usize] + w;
                    adj[b as usize] = adj[b as usize] + w;
                }
                Op::Sub { a, b } => {
                    adj[a as usize] = adj[a as usize] + w;
                    adj[b as usize] = adj[b as usize] - w;
                }
                Op::Mul { a, b } => {
                    let (va, vb) = (vals[a as usize], vals[b as usize]);
                    adj[a as usize] = adj[a as usize] + w * vb;
                    adj[b as usize] = adj[b as usize] + w * va;
                }
                Op::Div { a, b } => {
                    let (va, vb) = (vals[a as usize], vals[b as usize]);
                    adj[a as usize] = adj[a as usize] + w / vb;
                    adj[b as usize] = adj[b as usize] - w * va / (vb * vb);
                }
                Op::Neg { a } => adj[a as usize] = adj[a as usize] - w,
                Op::Exp { a } => adj[a as usize] = adj[a as usize] + w * vals[idx],
                Op::Ln { a } => adj[a as usize] = adj[a as usize] + w / vals[a as usize],
                Op::Sqrt { a } => {
                    let half = F::of(0.5);
                    adj[a as usize] = adj[a as usize] + w * half / vals[idx];
                }
                Op::PowConst { a, exp_idx } => {
                    let p = self.consts[exp_idx as usize];
                    let va = vals[a as usize];
                    adj[a as usize] = adj[a as usize] + w * p * va.powf(p - F::one());
                }
                Op::Relu { a } => {
                    if vals[a as usize] > F::zero() {
                        adj[a as usize] = adj[a as usize] + w;
                    }
                }
                Op::Sigmoid { a } => {
                    let s = vals[idx];
                    adj[a as usize] = adj[a as usize] + w * s * (F::one() - s);
                }
                Op::Min { args } | Op::Max { args } => {
                    // First operand attaining the extremum receives the adjoint.
                    let target = vals[idx];
                    for &a in self.arg_slice(args) {
                        if vals[a as usize] == target {
                            adj[a as usize] = adj[a as usize] + w;
                            break;
                        }
                    }
                }
                Op::Sum { args } => {
                    for &a in self.arg_slice(args) {
                        adj[a as usize] = adj[a as usize] + w;
                    }
                }
                Op::Dot { lhs, rhs } => {
                    let la = self.arg_slice(lhs);
                    let rb = self.arg_slice(rhs);
                    for (&a, &b) in la.iter().zip(rb) {
                        let (va, vb) = (vals[a as usize], vals[b as usize]);
                        adj[a as usize] = adj[a as usize] + w * vb;
                        adj[b as usize] = adj[b as usize] + w * va;
                    }
                }
            }
        }
        for (slot, g) in gradient.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::NonFiniteNode {
                    node: slot,
                    op: "input",
                    phase: "reverse sweep",
                });
            }
        }
        Ok(GradResult { value, gradient })
    }

    /// Value and gradient with a fresh workspace.
    pub fn gradient(&self, inputs: &[F]) -> Result<GradResult<F>> {
        let mut ws = Workspace::default();
        self.gradient_in(&mut ws, inputs)
    }

    /// Compares the reverse-mode gradient against central finite differences
    /// with absolute step `h`.
    ///
    /// The per-component relative error is normalized by
    /// `max(1, |analytic|, |numeric|)`, i.e. it degrades to an absolute
    /// comparison for gradients below one in magnitude.
    pub fn check_gradient(&self, inputs: &[F], h: F) -> Result<GradCheck<F>> {
        let analytic = self.gradient(inputs)?.gradient;
        let mut ws = Workspace::default();
        let mut probe = inputs.to_vec();
        let mut numeric = Vec::with_capacity(self.n_inputs);
        let two = F::of(2.0);
        for i in 0..self.n_inputs {
            let xi = inputs[i];
            probe[i] = xi + h;
            let fp = self.evaluate_in(&mut ws, &probe)?;
            probe[i] = xi - h;
            let fm = self.evaluate_in(&mut ws, &probe)?;
            probe[i] = xi;
            numeric.push((fp - fm) / (two * h));
        }
        let mut max_rel = F::zero();
        for (&a, &n) in analytic.iter().zip(&numeric) {
            let denom = F::one().max(a.abs()).max(n.abs());
            let rel = (a - n).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
        Ok(GradCheck {
            analytic,
            numeric,
            max_rel_error: max_rel,
        })
    }

    /// Smallest margin to a subgradient tie over all kink nodes at `inputs`.
    ///
    /// For `min`/`max` this is the gap between the best and second-best
    /// operand; for `relu` the distance of the argument from zero. Returns
    /// infinity when the graph has no kink nodes. Useful for excluding
    /// configurations where finite differences straddle a kink.
    pub fn tie_margin(&self, inputs: &[F]) -> Result<F> {
        let mut ws = Workspace::default();
        self.evaluate_in(&mut ws, inputs)?;
        let vals = &ws.values;
        let mut margin = F::infinity();
        for (idx, op) in self.ops.iter().enumerate() {
            match *op {
                Op::Min { args } | Op::Max { args } => {
                    let target = vals[idx];
                    let mut second = F::infinity();
                    let mut seen_best = false;
                    for &a in self.arg_slice(args) {
                        let gap = (vals[a as usize] - target).abs();
                        if gap == F::zero() && !seen_best {
                            seen_best = true;
                        } else if gap < second {
                            second = gap;
                        }
                    }
                    if second < margin {
                        margin = second;
                    }
                }
                Op::Relu { a } => {
                    let gap = vals[a as usize].abs();
                    if gap < margin {
                        margin = gap;
                    }
                }
                _ => {}
            }
        }
        Ok(margin)
    }
}

/// Incremental graph construction with eager constant folding.
#[derive(Debug, Clone)]
pub struct GraphBuilder<F> {
    ops: Vec<Op>,
    args: Vec<u32>,
    consts: Vec<F>,
    /// Build-time values of constant nodes, `None` for input-dependent nodes.
    const_vals: Vec<Option<F>>,
    n_inputs: usize,
}

impl<F: Real> GraphBuilder<F> {
    /// Starts a graph with `n_inputs` input slots, registered as the first
    /// `n_inputs` nodes.
    pub fn new(n_inputs: usize) -> Self {
        let mut b = GraphBuilder {
            ops: Vec::new(),
            args: Vec::new(),
            consts: Vec::new(),
            const_vals: Vec::new(),
            n_inputs,
        };
        for slot in 0..n_inputs {
            b.ops.push(Op::Input { slot: slot as u32 });
            b.const_vals.push(None);
        }
        b
    }

    /// Node for input slot `slot`.
    pub fn input(&self, slot: usize) -> NodeId {
        assert!(slot < self.n_inputs, "input slot out of range");
        NodeId(slot as u32)
    }

    /// Constant node. The value must be finite; infinities are rejected here
    /// so that evaluation-time finiteness checks stay meaningful.
    pub fn constant(&mut self, v: F) -> NodeId {
        assert!(v.is_finite(), "graph constants must be finite, got {v}");
        let idx = self.consts.len() as u32;
        self.consts.push(v);
        self.push(Op::Constant { idx }, Some(v))
    }

    fn push(&mut self, op: Op, const_val: Option<F>) -> NodeId {
        let id = NodeId(self.ops.len() as u32);
        self.ops.push(op);
        self.const_vals.push(const_val);
        id
    }

    fn cv(&self, n: NodeId) -> Option<F> {
        self.const_vals[n.index()]
    }

    fn fold1(&mut self, a: NodeId, op: Op, f: impl Fn(F) -> F) -> NodeId {
        if let Some(va) = self.cv(a) {
            let v = f(va);
            assert!(v.is_finite(), "constant folding produced {v} for {}", op.name());
            self.constant(v)
        } else {
            self.push(op, None)
        }
    }

    fn fold2(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(F, F) -> F) -> NodeId {
        if let (Some(va), Some(vb)) = (self.cv(a), self.cv(b)) {
            let v = f(va, vb);
            assert!(v.is_finite(), "constant folding produced {v} for {}", op.name());
            self.constant(v)
        } else {
            self.push(op, None)
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.fold2(a, b, Op::Add { a: a.0, b: b.0 }, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.fold2(a, b, Op::Sub { a: a.0, b: b.0 }, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.fold2(a, b, Op::Mul { a: a.0, b: b.0 }, |x, y| x * y)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.fold2(a, b, Op::Div { a: a.0, b: b.0 }, |x, y| x / y)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.fold1(a, Op::Neg { a: a.0 }, |x| -x)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.fold1(a, Op::Exp { a: a.0 }, F::exp)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.fold1(a, Op::Ln { a: a.0 }, F::ln)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.fold1(a, Op::Sqrt { a: a.0 }, F::sqrt)
    }

    /// `a` raised to the fixed exponent `p`.
    pub fn powc(&mut self, a: NodeId, p: F) -> NodeId {
        if let Some(va) = self.cv(a) {
            let v = va.powf(p);
            assert!(v.is_finite(), "constant folding produced {v} for power");
            return self.constant(v);
        }
        let exp_idx = self.consts.len() as u32;
        self.consts.push(p);
        self.push(Op::PowConst { a: a.0, exp_idx }, None)
    }

    /// Clamp below at zero, `max(x, 0)`, with subgradient zero at the kink.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.fold1(a, Op::Relu { a: a.0 }, |x| if x > F::zero() { x } else { F::zero() })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.fold1(a, Op::Sigmoid { a: a.0 }, sigmoid)
    }

    fn variadic(
        &mut self,
        nodes: &[NodeId],
        merge: impl Fn(F, F) -> F,
        make: impl Fn(ArgRange) -> Op,
        merge_consts: bool,
    ) -> NodeId {
        assert!(!nodes.is_empty(), "variadic op needs at least one operand");
        // Fold runs of constant operands into a single constant operand.
        let mut reduced: Vec<NodeId> = Vec::with_capacity(nodes.len());
        let mut acc: Option<F> = None;
        for &n in nodes {
            match self.cv(n) {
                Some(v) if merge_consts => acc = Some(acc.map_or(v, |a| merge(a, v))),
                _ => reduced.push(n),
            }
        }
        if let Some(v) = acc {
            if reduced.is_empty() {
                return self.constant(v);
            }
            let c = self.constant(v);
            reduced.push(c);
        }
        if reduced.len() == 1 && self.cv(reduced[0]).is_none() {
            // Single variable operand and no constants to merge: min/max/sum of
            // one element is the element itself only for min/max; for sum it is
            // as well, so pass through.
            return reduced[0];
        }
        let start = self.args.len() as u32;
        for n in &reduced {
            self.args.push(n.0);
        }
        let range = ArgRange {
            start,
            len: reduced.len() as u32,
        };
        self.push(make(range), None)
    }

    /// Variadic minimum. Ties route the gradient to the first attaining
    /// operand, in the order given here (constants are merged to the back).
    pub fn min(&mut self, nodes: &[NodeId]) -> NodeId {
        self.variadic(nodes, |a, b| a.min(b), |args| Op::Min { args }, true)
    }

    /// Variadic maximum; same tie convention as [`GraphBuilder::min`].
    pub fn max(&mut self, nodes: &[NodeId]) -> NodeId {
        self.variadic(nodes, |a, b| a.max(b), |args| Op::Max { args }, true)
    }

    /// Sum reduction over the operands.
    pub fn sum(&mut self, nodes: &[NodeId]) -> NodeId {
        self.variadic(nodes, |a, b| a + b, |args| Op::Sum { args }, true)
    }

    /// Dot product of two equal-length node slices.
    pub fn dot(&mut self, lhs: &[NodeId], rhs: &[NodeId]) -> NodeId {
        assert_eq!(lhs.len(), rhs.len(), "dot operands must match in length");
        assert!(!lhs.is_empty(), "dot needs at least one pair");
        if lhs
            .iter()
            .chain(rhs)
            .all(|n| self.cv(*n).is_some())
        {
            let mut s = F::zero();
            for (&a, &b) in lhs.iter().zip(rhs) {
                s = s + self.cv(a).unwrap() * self.cv(b).unwrap();
            }
            return self.constant(s);
        }
        let start_l = self.args.len() as u32;
        for n in lhs {
            self.args.push(n.0);
        }
        let start_r = self.args.len() as u32;
        for n in rhs {
            self.args.push(n.0);
        }
        let len = lhs.len() as u32;
        self.push(
            Op::Dot {
                lhs: ArgRange { start: start_l, len },
                rhs: ArgRange { start: start_r, len },
            },
            None,
        )
    }

    /// Dot product of nodes against fixed coefficients.
    pub fn dot_const(&mut self, nodes: &[NodeId], coeffs: &[F]) -> NodeId {
        assert_eq!(nodes.len(), coeffs.len());
        let consts: Vec<NodeId> = coeffs.iter().map(|&c| self.constant(c)).collect();
        self.dot(nodes, &consts)
    }

    /// Matrix-vector product: each row of `rows` dotted against `vector`.
    pub fn matvec(&mut self, rows: &[Vec<NodeId>], vector: &[NodeId]) -> Vec<NodeId> {
        rows.iter().map(|r| self.dot(r, vector)).collect()
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Number of nodes whose value depends on inputs (inputs included);
    /// everything else was folded to a constant at build time.
    pub fn n_dynamic(&self) -> usize {
        self.const_vals.iter().filter(|v| v.is_none()).count()
    }

    /// Finalizes the tape with `output` as the root.
    pub fn finish(self, output: NodeId) -> ExprGraph<F> {
        assert!(output.index() < self.ops.len(), "output node out of range");
        ExprGraph {
            ops: self.ops,
            args: self.args,
            consts: self.consts,
            n_inputs: self.n_inputs,
            output,
        }
    }
}
