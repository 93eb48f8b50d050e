//! The multi-block network and its losses.
//!
//! Architecture: `m ≥ 2` dense+ReLU feature blocks in series, a linear
//! classifier on the last block, and one two-layer sigmoid discriminator per
//! block predicting "came from the source domain". Each discriminator is
//! attached through a `grad_scale` coupling layer, so its own parameters
//! always receive the plain minimization gradient while the feature block
//! underneath receives that gradient multiplied by the block's λ (and any
//! warm-up ramp): positive λ trains the block to *help* the discriminator,
//! negative λ to *fool* it. With λ = (0, …, 0, −1) the construction
//! collapses to a single gradient-reversal adversary on the deepest block.

use crate::array::Array2;
use crate::error::CoreError;
use crate::graph::{clamp_prob, sigmoid, softmax_rows, Graph, NodeId};
use crate::lambda::{LambdaWeights, FEASIBILITY_TOL};
use crate::optim::Parameter;
use crate::rng::RngState;
use crate::Result;
use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Shape of a [`Network`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Output width of each feature block; the length is the block count m.
    pub block_dims: Vec<usize>,
    pub num_classes: usize,
    /// Hidden width of every domain discriminator.
    pub discriminator_hidden: usize,
}

impl NetworkSpec {
    pub fn blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_dims.len() < 2 {
            return Err(CoreError::InvalidConfig(format!(
                "need at least 2 feature blocks, got {}",
                self.block_dims.len()
            )));
        }
        if self.input_dim == 0
            || self.discriminator_hidden == 0
            || self.block_dims.iter().any(|&d| d == 0)
        {
            return Err(CoreError::InvalidConfig(
                "all layer widths must be at least 1".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(CoreError::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// Parameter indices, derivable from the spec; parameters are stored in
/// declared order: block (W, b) pairs, classifier (W, b), then per block
/// discriminator (W1, b1, W2, b2).
#[derive(Debug, Clone, Copy)]
struct Layout {
    blocks: usize,
}

impl Layout {
    fn block_w(&self, l: usize) -> usize {
        2 * l
    }
    fn block_b(&self, l: usize) -> usize {
        2 * l + 1
    }
    fn cls_w(&self) -> usize {
        2 * self.blocks
    }
    fn cls_b(&self) -> usize {
        2 * self.blocks + 1
    }
    fn disc(&self, l: usize) -> usize {
        2 * self.blocks + 2 + 4 * l
    }
    fn total(&self) -> usize {
        6 * self.blocks + 2
    }
}

/// The trainable model: feature blocks, classifier, per-block
/// discriminators, and the λ vector that couples them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub lambda: LambdaWeights,
    pub params: Vec<Parameter>,
}

/// Ties graph input nodes back to the parameters they were copied from.
pub type ParamBindings = Vec<(NodeId, usize)>;

impl Network {
    /// Fresh network with Xavier-uniform weights (`±√(6/(fan_in+fan_out))`),
    /// zero biases, and `head_lr_multiplier` on the classifier and
    /// discriminators. Weight draws come from `rng` in declared order.
    pub fn new(
        spec: NetworkSpec,
        lambda: LambdaWeights,
        rng: &mut ChaCha8Rng,
        head_lr_multiplier: f64,
    ) -> Result<Self> {
        spec.validate()?;
        if lambda.len() != spec.blocks() {
            return Err(CoreError::InvalidConfig(format!(
                "{} lambda entries for {} blocks",
                lambda.len(),
                spec.blocks()
            )));
        }
        let mut params = Vec::new();
        let mut dense = |fan_in: usize, fan_out: usize, mult: f64, rng: &mut ChaCha8Rng| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let mut w = Array2::zeros(fan_in, fan_out);
            for v in w.as_mut_slice() {
                *v = dist.sample(rng);
            }
            params.push(Parameter::new(w, mult));
            params.push(Parameter::new(Array2::zeros(1, fan_out), mult));
        };

        let mut prev = spec.input_dim;
        for &dim in &spec.block_dims {
            dense(prev, dim, 1.0, rng);
            prev = dim;
        }
        dense(prev, spec.num_classes, head_lr_multiplier, rng);
        for &dim in &spec.block_dims {
            dense(dim, spec.discriminator_hidden, head_lr_multiplier, rng);
            dense(spec.discriminator_hidden, 1, head_lr_multiplier, rng);
        }
        debug_assert_eq!(params.len(), Layout { blocks: spec.blocks() }.total());
        Ok(Network { spec, lambda, params })
    }

    fn layout(&self) -> Layout {
        Layout {
            blocks: self.spec.blocks(),
        }
    }

    // ── Plain (non-differentiable) forward passes ───────────────────────

    fn dense_eval(&self, x: &Array2, w: usize, b: usize, relu: bool) -> Array2 {
        let mut h = x.matmul(&self.params[w].value);
        let bias = &self.params[b].value;
        for r in 0..h.rows() {
            for c in 0..h.cols() {
                let mut v = h.get(r, c) + bias.get(0, c);
                if relu && v <= 0.0 {
                    v = 0.0;
                }
                h.set(r, c, v);
            }
        }
        h
    }

    /// Outputs of every feature block for the given inputs.
    pub fn features(&self, x: &Array2) -> Vec<Array2> {
        let lt = self.layout();
        let mut outs = Vec::with_capacity(lt.blocks);
        let mut cur = x;
        for l in 0..lt.blocks {
            let h = self.dense_eval(cur, lt.block_w(l), lt.block_b(l), true);
            outs.push(h);
            cur = outs.last().unwrap();
        }
        outs
    }

    /// Classifier logits from the deepest block's features.
    pub fn class_logits(&self, last_features: &Array2) -> Array2 {
        let lt = self.layout();
        self.dense_eval(last_features, lt.cls_w(), lt.cls_b(), false)
    }

    /// Softmax class probabilities and argmax labels (ties → lowest index).
    pub fn predict(&self, x: &Array2) -> (Array2, Vec<u32>) {
        let feats = self.features(x);
        let logits = self.class_logits(feats.last().expect("m >= 2 blocks"));
        let probs = softmax_rows(&logits);
        let labels = argmax_rows(&probs);
        (probs, labels)
    }

    /// Probability (`n×1`) that block `l`'s features came from the source
    /// domain, according to discriminator `l`.
    pub fn disc_prob(&self, l: usize, block_features: &Array2) -> Array2 {
        let lt = self.layout();
        let d = lt.disc(l);
        let h = self.dense_eval(block_features, d, d + 1, true);
        let logits = self.dense_eval(&h, d + 2, d + 3, false);
        let mut out = logits;
        for v in out.as_mut_slice() {
            *v = sigmoid(*v);
        }
        out
    }

    /// Per-sample λ-weighted sum of per-block discriminator cross-entropies
    /// at the given domain label (`Σ_l λ_l · bce_l(xᵢ)`).
    pub fn per_sample_ca(&self, x: &Array2, domain_label: f64) -> Vec<f64> {
        let feats = self.features(x);
        let mut out = vec![0.0; x.rows()];
        for (l, f) in feats.iter().enumerate() {
            let probs = self.disc_prob(l, f);
            let lam = self.lambda.values[l];
            for (i, o) in out.iter_mut().enumerate() {
                *o += lam * bce(probs.get(i, 0), domain_label);
            }
        }
        out
    }

    // ── Differentiable graph builders ───────────────────────────────────

    fn bind(&self, g: &mut Graph, idx: usize, binds: &mut ParamBindings) -> NodeId {
        let node = g.input(self.params[idx].value.clone());
        binds.push((node, idx));
        node
    }

    fn build_dense(
        &self,
        g: &mut Graph,
        x: NodeId,
        w: usize,
        b: usize,
        relu: bool,
        binds: &mut ParamBindings,
    ) -> NodeId {
        let wn = self.bind(g, w, binds);
        let bn = self.bind(g, b, binds);
        let mm = g.matmul(x, wn);
        let lin = g.add_bias(mm, bn);
        if relu {
            g.relu(lin)
        } else {
            lin
        }
    }

    /// Adds all feature blocks to `g`; returns each block's output node.
    pub fn build_blocks(&self, g: &mut Graph, x: NodeId, binds: &mut ParamBindings) -> Vec<NodeId> {
        let lt = self.layout();
        let mut outs = Vec::with_capacity(lt.blocks);
        let mut cur = x;
        for l in 0..lt.blocks {
            cur = self.build_dense(g, cur, lt.block_w(l), lt.block_b(l), true, binds);
            outs.push(cur);
        }
        outs
    }

    /// Adds the classifier head; returns the logits node.
    pub fn build_classifier(&self, g: &mut Graph, last: NodeId, binds: &mut ParamBindings) -> NodeId {
        let lt = self.layout();
        self.build_dense(g, last, lt.cls_w(), lt.cls_b(), false, binds)
    }

    /// Adds discriminator `l` on top of `input`; returns its logit column.
    pub fn build_discriminator(
        &self,
        g: &mut Graph,
        l: usize,
        input: NodeId,
        binds: &mut ParamBindings,
    ) -> NodeId {
        let lt = self.layout();
        let d = lt.disc(l);
        let h = self.build_dense(g, input, d, d + 1, true, binds);
        self.build_dense(g, h, d + 2, d + 3, false, binds)
    }

    /// Classifier pass over a feature batch: returns the graph, the loss
    /// node (mean weighted cross-entropy), and the parameter bindings.
    pub fn classifier_pass(
        &self,
        feats: &Array2,
        labels: Vec<u32>,
        weights: Vec<f64>,
    ) -> Result<(Graph, NodeId, ParamBindings)> {
        if feats.rows() == 0 {
            return Err(CoreError::EmptyBatch { op: "classifier pass" });
        }
        let mut g = Graph::new();
        let mut binds = ParamBindings::new();
        let x = g.input(feats.clone());
        let blocks = self.build_blocks(&mut g, x, &mut binds);
        let logits = self.build_classifier(&mut g, *blocks.last().unwrap(), &mut binds);
        let loss = g.softmax_xent(logits, labels, weights);
        g.forward()?;
        Ok((g, loss, binds))
    }

    /// Domain pass over a feature batch: every block's output runs through
    /// `grad_scale(λ_l · ramp)` into its discriminator and a weighted BCE
    /// against the domain labels. Returns the graph, the per-block loss
    /// nodes, and the bindings. Rejects an infeasible λ outright.
    pub fn domain_pass(
        &self,
        feats: &Array2,
        domains: Vec<f64>,
        weights: Vec<f64>,
        ramp: f64,
    ) -> Result<(Graph, Vec<NodeId>, ParamBindings)> {
        if feats.rows() == 0 {
            return Err(CoreError::EmptyBatch { op: "domain pass" });
        }
        self.lambda.check_feasible(FEASIBILITY_TOL)?;
        let mut g = Graph::new();
        let mut binds = ParamBindings::new();
        let x = g.input(feats.clone());
        let blocks = self.build_blocks(&mut g, x, &mut binds);
        let mut losses = Vec::with_capacity(blocks.len());
        for (l, &f) in blocks.iter().enumerate() {
            let coupled = g.grad_scale(f, self.lambda.values[l] * ramp);
            let logit = self.build_discriminator(&mut g, l, coupled, &mut binds);
            losses.push(g.sigmoid_bce(logit, domains.clone(), weights.clone()));
        }
        g.forward()?;
        Ok((g, losses, binds))
    }

    /// Mean weighted source-classification loss over a batch.
    pub fn src_loss(&self, feats: &Array2, labels: &[u32]) -> Result<f64> {
        let weights = vec![1.0; labels.len()];
        let (g, loss, _) = self.classifier_pass(feats, labels.to_vec(), weights)?;
        Ok(g.scalar(loss))
    }

    /// Mean weighted domain loss of discriminator `l` on a feature batch.
    pub fn per_block_domain_loss(
        &self,
        l: usize,
        feats: &Array2,
        domains: &[f64],
        weights: &[f64],
    ) -> Result<f64> {
        let (g, losses, _) = self.domain_pass(feats, domains.to_vec(), weights.to_vec(), 1.0)?;
        Ok(g.scalar(losses[l]))
    }

    /// The λ-weighted collaborative/adversarial loss over a batch:
    /// `Σ_l λ_l · L_l`, along with the plain per-block losses.
    pub fn ca_loss(
        &self,
        feats: &Array2,
        domains: &[f64],
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let (g, loss_nodes, _) = self.domain_pass(feats, domains.to_vec(), weights.to_vec(), 1.0)?;
        let per_block: Vec<f64> = loss_nodes.iter().map(|&n| g.scalar(n)).collect();
        let total = per_block
            .iter()
            .zip(&self.lambda.values)
            .map(|(&l, &lam)| lam * l)
            .sum();
        Ok((total, per_block))
    }

    /// Adds the gradients a finished graph holds for bound parameters into
    /// each parameter's accumulator.
    pub fn accumulate_grads(&mut self, g: &Graph, binds: &ParamBindings) {
        for &(node, idx) in binds {
            if let Some(grad) = g.grad(node) {
                self.params[idx].grad.add_assign(grad);
            }
        }
    }

    /// Mutable references to every parameter, for the optimizer step.
    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.params.iter_mut().collect()
    }

    // ── Checkpointing ────────────────────────────────────────────────────

    pub fn to_checkpoint(&self, rng: RngState) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            lambda: self.lambda.clone(),
            params: self.params.clone(),
            rng,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<(Network, RngState)> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(CoreError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        ck.spec.validate()?;
        let expected = Layout {
            blocks: ck.spec.blocks(),
        }
        .total();
        if ck.params.len() != expected {
            return Err(CoreError::Checkpoint(format!(
                "{} parameter arrays, expected {expected}",
                ck.params.len()
            )));
        }
        let mut net = Network {
            spec: ck.spec,
            lambda: ck.lambda,
            params: ck.params,
        };
        for p in &mut net.params {
            p.ensure_grad_buffer();
        }
        Ok((net, ck.rng))
    }
}

/// Versioned, structured-text container for a network plus the RNG position,
/// enough to reproduce or resume a run exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: NetworkSpec,
    pub lambda: LambdaWeights,
    pub params: Vec<Parameter>,
    pub rng: RngState,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializes a checkpoint; `save(load(f))` is byte-identical to `f`.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(ck)
        .map_err(|e| CoreError::Checkpoint(e.to_string()))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CoreError::Checkpoint(e.to_string()))
}

/// Row-wise argmax; ties resolve to the lowest index.
pub fn argmax_rows(probs: &Array2) -> Vec<u32> {
    (0..probs.rows())
        .map(|r| {
            let row = probs.row_slice(r);
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best as u32
        })
        .collect()
}

/// Binary cross-entropy of a probability against a 0/1 target, with the
/// probability clamped away from the endpoints.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}
