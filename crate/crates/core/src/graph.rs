//! Reverse-mode automatic differentiation on an explicit tape.
//!
//! A [`Graph`] is a flat list of nodes in insertion order; because every
//! operand must exist before the node that consumes it, insertion order is
//! already topological order, and `forward`/`backward` are plain sweeps.
//! Gradients *accumulate*: calling [`Graph::backward`] twice with two loss
//! nodes and scales `a`, `b` leaves every node holding `a·∂L₁ + b·∂L₂`,
//! which is how composite objectives are assembled from their pieces.
//!
//! The op set is deliberately small: dense layers (`matmul`, `add_bias`,
//! `relu`), the two batch losses (`softmax_xent`, `sigmoid_bce`), and the
//! gradient plumbing (`grad_scale`, `scale`, `sum`). `grad_scale` is the
//! coupling layer between feature blocks and their domain discriminators:
//! identity in the forward direction, multiplication by a fixed factor in
//! the backward direction, so a factor of −1 is exactly a gradient-reversal
//! layer.

use crate::array::Array2;
use crate::error::CoreError;
use crate::Result;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before any
/// logarithm, so a saturated classifier yields a large finite loss.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

/// Operation performed by a node.
#[derive(Debug, Clone)]
pub enum Op {
    /// Leaf holding a value fed from outside (data batch or parameter).
    Input,
    /// Matrix product of the two operands.
    MatMul,
    /// Adds a 1×m bias row to every row of the operand.
    AddBias,
    /// Elementwise `max(x, 0)`; the subgradient at exactly 0 is taken as 0.
    Relu,
    /// Identity forward; multiplies the incoming gradient by the factor.
    GradScale(f64),
    /// Multiplies the value by a constant (and the gradient likewise).
    Scale(f64),
    /// Sums all entries into a 1×1 scalar.
    Sum,
    /// Mean weighted cross-entropy of row-wise softmax against class labels.
    SoftmaxXent { labels: Vec<u32>, weights: Vec<f64> },
    /// Mean weighted binary cross-entropy of sigmoid(logit) against 0/1 targets.
    SigmoidBce { targets: Vec<f64>, weights: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::MatMul => "matmul",
            Op::AddBias => "add-bias",
            Op::Relu => "relu",
            Op::GradScale(_) => "grad-scale",
            Op::Scale(_) => "scale",
            Op::Sum => "sum",
            Op::SoftmaxXent { .. } => "softmax-xent",
            Op::SigmoidBce { .. } => "sigmoid-bce",
        }
    }
}

/// One tape entry: the op, its operands, and (after the sweeps) its value
/// and accumulated gradient.
#[derive(Debug, Clone)]
pub struct Node {
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub value: Array2,
    pub grad: Option<Array2>,
    /// Cached activation (softmax or sigmoid matrix) reused by backward.
    aux: Option<Array2>,
}

/// Wengert tape holding the nodes of one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    ran_forward: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Array2) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            inputs,
            value,
            grad: None,
            aux: None,
        });
        self.ran_forward = false;
        id
    }

    /// Leaf node carrying `value`.
    pub fn input(&mut self, value: Array2) -> NodeId {
        self.push(Op::Input, vec![], value)
    }

    /// Replaces the value of an input leaf, invalidating prior sweeps.
    pub fn set_input(&mut self, id: NodeId, value: Array2) {
        assert!(matches!(self.nodes[id.0].op, Op::Input), "not an input node");
        self.nodes[id.0].value = value;
        self.ran_forward = false;
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul, vec![a, b], Array2::zeros(0, 0))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddBias, vec![x, bias], Array2::zeros(0, 0))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu, vec![x], Array2::zeros(0, 0))
    }

    /// Forward identity, backward multiplication by `factor`.
    pub fn grad_scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.push(Op::GradScale(factor), vec![x], Array2::zeros(0, 0))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(factor), vec![x], Array2::zeros(0, 0))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum, vec![x], Array2::zeros(0, 0))
    }

    /// Scalar `(1/n)·Σᵢ wᵢ·xent(softmax(logits)ᵢ, labelᵢ)` over the batch.
    pub fn softmax_xent(&mut self, logits: NodeId, labels: Vec<u32>, weights: Vec<f64>) -> NodeId {
        self.push(
            Op::SoftmaxXent { labels, weights },
            vec![logits],
            Array2::zeros(0, 0),
        )
    }

    /// Scalar `(1/n)·Σᵢ wᵢ·bce(sigmoid(logitᵢ), targetᵢ)` over the batch.
    /// Logits must form an n×1 column; targets are 0.0 or 1.0.
    pub fn sigmoid_bce(&mut self, logits: NodeId, targets: Vec<f64>, weights: Vec<f64>) -> NodeId {
        self.push(
            Op::SigmoidBce { targets, weights },
            vec![logits],
            Array2::zeros(0, 0),
        )
    }

    /// Value of a node; meaningful after [`Graph::forward`].
    pub fn value(&self, id: NodeId) -> &Array2 {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = &self.nodes[id.0].value;
        debug_assert_eq!(v.shape(), (1, 1));
        v.get(0, 0)
    }

    /// Accumulated gradient of a node, if any backward pass reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Array2> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Computes every node value in topological (= insertion) order.
    ///
    /// Rejects shape mismatches, out-of-range labels, empty loss batches,
    /// and non-finite results, naming the offending node.
    pub fn forward(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            let (value, aux) = self.eval_node(i)?;
            if let Some(v) = value {
                if !v.is_finite() {
                    return Err(CoreError::NonFinite {
                        node: i,
                        op: self.nodes[i].op.name().to_string(),
                    });
                }
                self.nodes[i].value = v;
            } else if !self.nodes[i].value.is_finite() {
                // Input leaf fed a non-finite value.
                return Err(CoreError::NonFinite {
                    node: i,
                    op: "input".to_string(),
                });
            }
            self.nodes[i].aux = aux;
        }
        self.ran_forward = true;
        Ok(())
    }

    /// Evaluates node `i` from its operands. `None` means "leaf, keep value".
    fn eval_node(&self, i: usize) -> Result<(Option<Array2>, Option<Array2>)> {
        let node = &self.nodes[i];
        let arg = |k: usize| -> &Array2 { &self.nodes[node.inputs[k].0].value };
        let mismatch = |detail: String| CoreError::ShapeMismatch { node: i, detail };

        match &node.op {
            Op::Input => Ok((None, None)),
            Op::MatMul => {
                let (a, b) = (arg(0), arg(1));
                if a.cols() != b.rows() {
                    return Err(mismatch(format!(
                        "matmul {}x{} · {}x{}",
                        a.rows(),
                        a.cols(),
                        b.rows(),
                        b.cols()
                    )));
                }
                Ok((Some(a.matmul(b)), None))
            }
            Op::AddBias => {
                let (x, b) = (arg(0), arg(1));
                if b.rows() != 1 || b.cols() != x.cols() {
                    return Err(mismatch(format!(
                        "add-bias {}x{} + {}x{}",
                        x.rows(),
                        x.cols(),
                        b.rows(),
                        b.cols()
                    )));
                }
                let mut out = x.clone();
                for r in 0..out.rows() {
                    for c in 0..out.cols() {
                        out.set(r, c, out.get(r, c) + b.get(0, c));
                    }
                }
                Ok((Some(out), None))
            }
            Op::Relu => {
                let mut out = arg(0).clone();
                for v in out.as_mut_slice() {
                    if *v <= 0.0 {
                        *v = 0.0;
                    }
                }
                Ok((Some(out), None))
            }
            Op::GradScale(_) => Ok((Some(arg(0).clone()), None)),
            Op::Scale(f) => Ok((Some(arg(0).scaled(*f)), None)),
            Op::Sum => Ok((Some(Array2::from_vec(1, 1, vec![arg(0).sum()])), None)),
            Op::SoftmaxXent { labels, weights } => {
                let logits = arg(0);
                let n = logits.rows();
                if n == 0 {
                    return Err(CoreError::EmptyBatch { op: "softmax-xent" });
                }
                if labels.len() != n || weights.len() != n {
                    return Err(mismatch(format!(
                        "softmax-xent: {} rows, {} labels, {} weights",
                        n,
                        labels.len(),
                        weights.len()
                    )));
                }
                let probs = softmax_rows(logits);
                let mut total = 0.0;
                for (i, (&label, &w)) in labels.iter().zip(weights).enumerate() {
                    if label as usize >= logits.cols() {
                        return Err(CoreError::LabelOutOfRange {
                            label,
                            classes: logits.cols(),
                        });
                    }
                    let p = clamp_prob(probs.get(i, label as usize));
                    total += w * -p.ln();
                }
                let value = Array2::from_vec(1, 1, vec![total / n as f64]);
                Ok((Some(value), Some(probs)))
            }
            Op::SigmoidBce { targets, weights } => {
                let logits = arg(0);
                let n = logits.rows();
                if n == 0 {
                    return Err(CoreError::EmptyBatch { op: "sigmoid-bce" });
                }
                if logits.cols() != 1 || targets.len() != n || weights.len() != n {
                    return Err(mismatch(format!(
                        "sigmoid-bce: logits {}x{}, {} targets, {} weights",
                        n,
                        logits.cols(),
                        targets.len(),
                        weights.len()
                    )));
                }
                let mut probs = Array2::zeros(n, 1);
                let mut total = 0.0;
                for i in 0..n {
                    let y = targets[i];
                    if y != 0.0 && y != 1.0 {
                        return Err(mismatch(format!("sigmoid-bce target {y} is not 0/1")));
                    }
                    let s = sigmoid(logits.get(i, 0));
                    probs.set(i, 0, s);
                    let p = clamp_prob(s);
                    total += weights[i] * -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
                }
                let value = Array2::from_vec(1, 1, vec![total / n as f64]);
                Ok((Some(value), Some(probs)))
            }
        }
    }

    /// Accumulates `loss_scale · ∂loss/∂node` into every node's gradient.
    ///
    /// `loss` must be a 1×1 node and `forward` must have run since the last
    /// structural change. Repeated calls add up, so a composite objective
    /// `a·L₁ + b·L₂` is `backward(L₁, a)` followed by `backward(L₂, b)`.
    pub fn backward(&mut self, loss: NodeId, loss_scale: f64) -> Result<()> {
        if !self.ran_forward {
            return Err(CoreError::BackwardBeforeForward);
        }
        if self.nodes[loss.0].value.shape() != (1, 1) {
            return Err(CoreError::ShapeMismatch {
                node: loss.0,
                detail: "backward needs a 1x1 loss node".to_string(),
            });
        }

        // Local buffers for this loss; merged into the persistent grads at
        // the end so that separate backward calls stay additive.
        let mut local: Vec<Option<Array2>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(Array2::from_vec(1, 1, vec![loss_scale]));

        for i in (0..=loss.0).rev() {
            let Some(g) = local[i].take() else { continue };
            self.propagate(i, &g, &mut local);
            match &mut self.nodes[i].grad {
                Some(total) => total.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Adds node `i`'s contribution (given its own gradient `g`) to each
    /// operand's local buffer.
    fn propagate(&self, i: usize, g: &Array2, local: &mut [Option<Array2>]) {
        let node = &self.nodes[i];
        let mut add = |id: NodeId, delta: Array2| match &mut local[id.0] {
            Some(buf) => buf.add_assign(&delta),
            slot => *slot = Some(delta),
        };
        let val = |k: usize| -> &Array2 { &self.nodes[node.inputs[k].0].value };

        match &node.op {
            Op::Input => {}
            Op::MatMul => {
                add(node.inputs[0], g.matmul_t(val(1)));
                add(node.inputs[1], val(0).t_matmul(g));
            }
            Op::AddBias => {
                add(node.inputs[0], g.clone());
                let mut db = Array2::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        db.set(0, c, db.get(0, c) + g.get(r, c));
                    }
                }
                add(node.inputs[1], db);
            }
            Op::Relu => {
                let x = val(0);
                let mut dx = g.clone();
                for (d, &v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                add(node.inputs[0], dx);
            }
            Op::GradScale(f) | Op::Scale(f) => {
                add(node.inputs[0], g.scaled(*f));
            }
            Op::Sum => {
                let s = g.get(0, 0);
                let x = val(0);
                let mut dx = Array2::zeros(x.rows(), x.cols());
                for d in dx.as_mut_slice() {
                    *d = s;
                }
                add(node.inputs[0], dx);
            }
            Op::SoftmaxXent { labels, weights } => {
                let s = g.get(0, 0);
                let probs = node.aux.as_ref().expect("forward caches softmax");
                let n = probs.rows() as f64;
                let mut dx = probs.clone();
                for (i, (&label, &w)) in labels.iter().zip(weights).enumerate() {
                    for c in 0..dx.cols() {
                        let one_hot = if c == label as usize { 1.0 } else { 0.0 };
                        dx.set(i, c, s * w * (dx.get(i, c) - one_hot) / n);
                    }
                }
                add(node.inputs[0], dx);
            }
            Op::SigmoidBce { targets, weights } => {
                let s = g.get(0, 0);
                let probs = node.aux.as_ref().expect("forward caches sigmoid");
                let n = probs.rows() as f64;
                let mut dx = Array2::zeros(probs.rows(), 1);
                for i in 0..probs.rows() {
                    dx.set(i, 0, s * weights[i] * (probs.get(i, 0) - targets[i]) / n);
                }
                add(node.inputs[0], dx);
            }
        }
    }
}

/// Row-wise softmax with the max-subtraction trick.
pub fn softmax_rows(logits: &Array2) -> Array2 {
    let mut out = Array2::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let row = logits.row_slice(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (c, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out.set(r, c, e);
            denom += e;
        }
        for c in 0..logits.cols() {
            out.set(r, c, out.get(r, c) / denom);
        }
    }
    out
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Clamps a probability away from 0 and 1 before taking logs.
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln_num_classes() {
        let mut g = Graph::new();
        let x = g.input(Array2::zeros(3, 4));
        let loss = g.softmax_xent(x, vec![0, 1, 2], vec![1.0; 3]);
        g.forward().unwrap();
        assert!((g.scalar(loss) - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_logit_bce_is_ln_two() {
        let mut g = Graph::new();
        let x = g.input(Array2::zeros(1, 1));
        let loss = g.sigmoid_bce(x, vec![1.0], vec![1.0]);
        g.forward().unwrap();
        assert!((g.scalar(loss) - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_xent_gradient_is_probs_minus_one_hot_over_batch() {
        let mut g = Graph::new();
        let x = g.input(Array2::from_rows(&[vec![0.3, -0.1, 0.7], vec![1.0, 0.0, -1.0]]));
        let loss = g.softmax_xent(x, vec![2, 0], vec![1.0, 1.0]);
        g.forward().unwrap();
        g.backward(loss, 1.0).unwrap();
        let probs = softmax_rows(g.value(x));
        let dx = g.grad(x).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                let one_hot = if (r, c) == (0, 2) || (r, c) == (1, 0) { 1.0 } else { 0.0 };
                let expect = (probs.get(r, c) - one_hot) / 2.0;
                assert!((dx.get(r, c) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn grad_scale_forward_identity_backward_multiplies() {
        let mut g = Graph::new();
        let x = g.input(Array2::from_vec(1, 1, vec![2.0]));
        let scaled = g.grad_scale(x, 0.425);
        let loss = g.sum(scaled);
        g.forward().unwrap();
        assert_eq!(g.value(scaled).get(0, 0), 2.0);
        g.backward(loss, 1.0).unwrap();
        // d(sum)/dx through grad_scale(0.425) on gradient [2.0]·… here the
        // upstream gradient is 1, so the input sees exactly the factor.
        assert_eq!(g.grad(x).unwrap().get(0, 0), 0.425);
    }

    #[test]
    fn backward_accumulates_linearly() {
        // backward(a·L1) then backward(b·L2) equals the sum of separate runs.
        let build = |weights: &[(f64, f64)]| -> Vec<f64> {
            let mut g = Graph::new();
            let x = g.input(Array2::from_rows(&[vec![0.5, -0.2]]));
            let w = g.input(Array2::from_rows(&[vec![0.1, 0.4], vec![-0.3, 0.2]]));
            let h = g.matmul(x, w);
            let l1 = g.softmax_xent(h, vec![0], vec![1.0]);
            let l2 = g.sum(h);
            g.forward().unwrap();
            for &(s1, s2) in weights {
                if s1 != 0.0 {
                    g.backward(l1, s1).unwrap();
                }
                if s2 != 0.0 {
                    g.backward(l2, s2).unwrap();
                }
            }
            g.grad(w).unwrap().as_slice().to_vec()
        };
        let combined = build(&[(0.3, 0.0), (0.0, 0.7)]);
        let first = build(&[(0.3, 0.0)]);
        let second = build(&[(0.0, 0.7)]);
        for i in 0..combined.len() {
            assert!((combined[i] - (first[i] + second[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_before_forward_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(Array2::zeros(1, 1));
        let loss = g.sum(x);
        assert!(matches!(
            g.backward(loss, 1.0),
            Err(CoreError::BackwardBeforeForward)
        ));
    }

    #[test]
    fn shape_mismatch_names_the_node() {
        let mut g = Graph::new();
        let a = g.input(Array2::zeros(2, 3));
        let b = g.input(Array2::zeros(2, 3));
        let m = g.matmul(a, b);
        match g.forward() {
            Err(CoreError::ShapeMismatch { node, .. }) => assert_eq!(node, m.0),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut g = Graph::new();
        let x = g.input(Array2::from_vec(1, 1, vec![f64::NAN]));
        let _ = g.relu(x);
        assert!(matches!(g.forward(), Err(CoreError::NonFinite { .. })));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.input(Array2::from_rows(&[vec![0.0, -1.0, 2.0]]));
        let r = g.relu(x);
        let loss = g.sum(r);
        g.forward().unwrap();
        g.backward(loss, 1.0).unwrap();
        assert_eq!(g.grad(x).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(Array2::zeros(0, 3));
        let _ = g.softmax_xent(x, vec![], vec![]);
        assert!(matches!(g.forward(), Err(CoreError::EmptyBatch { .. })));
    }

    #[test]
    fn all_zero_weights_give_zero_loss() {
        let mut g = Graph::new();
        let x = g.input(Array2::from_rows(&[vec![0.4], vec![-1.2]]));
        let loss = g.sigmoid_bce(x, vec![1.0, 0.0], vec![0.0, 0.0]);
        g.forward().unwrap();
        assert_eq!(g.scalar(loss), 0.0);
    }
}
