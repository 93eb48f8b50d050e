//! Empirical H-divergence between two feature sets.
//!
//! A fresh probe discriminator (same two-layer topology as the per-block
//! discriminators) is trained to tell the two sets apart on half of each
//! set and scored on the held-out halves. The estimate is
//! `2·(1 − [err_first + err_second])` with the error sum folded into
//! `[0, 1]` by taking `min(err, 2 − err)` — the hypothesis class is
//! symmetric, so a probe worse than chance stands in for its complement.
//! The result lives in `[0, 2]`: ≈0 for indistinguishable sets, ≈2 for
//! cleanly separated ones.
//!
//! The two inputs are put into a canonical order (by shape, then by feature
//! bytes) before anything else happens, so the estimate is exactly
//! symmetric under swapping the arguments.

use crate::array::Array2;
use crate::error::CoreError;
use crate::graph::Graph;
use crate::optim::Parameter;
use crate::rng::{stream, StreamKind};
use crate::Result;
use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Budget and shape of the probe discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Full-batch gradient steps.
    pub iterations: u32,
    /// Constant learning rate of the probe.
    pub lr: f64,
    pub momentum: f64,
    /// Hidden width; match the network's discriminators for a fair probe.
    pub hidden: usize,
    /// Seed of the probe's init stream.
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            iterations: 200,
            lr: 0.01,
            momentum: 0.9,
            hidden: 8,
            seed: 0,
        }
    }
}

/// Estimates the H-divergence between two frozen feature sets.
///
/// Each set is split 50/50 (even rows train, odd rows evaluate); `salt`
/// separates probe draws of repeated calls (e.g. one per epoch).
pub fn h_divergence_estimate(
    a: &Array2,
    b: &Array2,
    cfg: &ProbeConfig,
    salt: u64,
) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(CoreError::InvalidConfig(format!(
            "feature widths differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    for set in [a, b] {
        if set.rows() < 2 {
            return Err(CoreError::DomainTooSmall { n: set.rows() });
        }
    }

    // Canonical argument order makes the estimate symmetric by construction.
    let (first, second) = match canonical_cmp(a, b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };

    let (train_first, eval_first) = split_even_odd(first);
    let (train_second, eval_second) = split_even_odd(second);
    let train = stack(&train_first, &train_second);
    let labels: Vec<f64> = std::iter::repeat(1.0)
        .take(train_first.rows())
        .chain(std::iter::repeat(0.0).take(train_second.rows()))
        .collect();

    let mut probe = Probe::new(first.cols(), cfg, salt);
    let unit = vec![1.0; train.rows()];
    for _ in 0..cfg.iterations {
        probe.step(&train, &labels, &unit, cfg)?;
    }

    // Error rates on the held-out halves, with the complement fold.
    let err_first = error_rate(&probe.predict(&eval_first), 1.0);
    let err_second = error_rate(&probe.predict(&eval_second), 0.0);
    let err = (err_first + err_second).min(2.0 - err_first - err_second);
    Ok(2.0 * (1.0 - err))
}

/// Total order on feature sets: shape first, then entry bits.
fn canonical_cmp(a: &Array2, b: &Array2) -> Ordering {
    a.rows()
        .cmp(&b.rows())
        .then(a.cols().cmp(&b.cols()))
        .then_with(|| {
            for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
                let ord = x.to_bits().cmp(&y.to_bits());
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            Ordering::Equal
        })
}

fn split_even_odd(set: &Array2) -> (Array2, Array2) {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for r in 0..set.rows() {
        if r % 2 == 0 {
            train.push(set.row_slice(r).to_vec());
        } else {
            eval.push(set.row_slice(r).to_vec());
        }
    }
    (Array2::from_rows(&train), Array2::from_rows(&eval))
}

fn stack(a: &Array2, b: &Array2) -> Array2 {
    let mut rows: Vec<Vec<f64>> = (0..a.rows()).map(|r| a.row_slice(r).to_vec()).collect();
    rows.extend((0..b.rows()).map(|r| b.row_slice(r).to_vec()));
    Array2::from_rows(&rows)
}

fn error_rate(preds: &[u8], want: f64) -> f64 {
    let want = want as u8;
    let wrong = preds.iter().filter(|&&p| p != want).count();
    wrong as f64 / preds.len() as f64
}

/// Two-layer sigmoid discriminator trained with plain momentum SGD.
struct Probe {
    w1: Parameter,
    b1: Parameter,
    w2: Parameter,
    b2: Parameter,
}

impl Probe {
    fn new(input_dim: usize, cfg: &ProbeConfig, salt: u64) -> Self {
        let mut rng = stream(cfg.seed, StreamKind::Probe, salt);
        let dense = |fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let mut w = Array2::zeros(fan_in, fan_out);
            for v in w.as_mut_slice() {
                *v = dist.sample(rng);
            }
            (
                Parameter::new(w, 1.0),
                Parameter::new(Array2::zeros(1, fan_out), 1.0),
            )
        };
        let (w1, b1) = dense(input_dim, cfg.hidden, &mut rng);
        let (w2, b2) = dense(cfg.hidden, 1, &mut rng);
        Probe { w1, b1, w2, b2 }
    }

    fn build(&self, g: &mut Graph, x: crate::graph::NodeId) -> (crate::graph::NodeId, [crate::graph::NodeId; 4]) {
        let w1 = g.input(self.w1.value.clone());
        let b1 = g.input(self.b1.value.clone());
        let w2 = g.input(self.w2.value.clone());
        let b2 = g.input(self.b2.value.clone());
        let h = g.matmul(x, w1);
        let h = g.add_bias(h, b1);
        let h = g.relu(h);
        let z = g.matmul(h, w2);
        let z = g.add_bias(z, b2);
        (z, [w1, b1, w2, b2])
    }

    fn step(&mut self, x: &Array2, labels: &[f64], weights: &[f64], cfg: &ProbeConfig) -> Result<()> {
        let mut g = Graph::new();
        let input = g.input(x.clone());
        let (z, nodes) = self.build(&mut g, input);
        let loss = g.sigmoid_bce(z, labels.to_vec(), weights.to_vec());
        g.forward()?;
        g.backward(loss, 1.0)?;
        for (param, node) in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
            .into_iter()
            .zip(nodes)
        {
            let grad = g.grad(node).expect("probe parameters reach the loss");
            let v = param.velocity.as_mut_slice();
            let w = param.value.as_mut_slice();
            for i in 0..w.len() {
                v[i] = cfg.momentum * v[i] + grad.as_slice()[i];
                w[i] -= cfg.lr * v[i];
            }
        }
        Ok(())
    }

    fn predict(&self, x: &Array2) -> Vec<u8> {
        let mut g = Graph::new();
        let input = g.input(x.clone());
        let (z, _) = self.build(&mut g, input);
        g.forward().expect("probe forward on finite features");
        let logits = g.value(z);
        (0..logits.rows())
            .map(|r| u8::from(logits.get(r, 0) >= 0.0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn gaussian_cloud(n: usize, center: (f64, f64), seed: u64) -> Array2 {
        let mut rng = stream(seed, StreamKind::DataSource, 9);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                vec![
                    center.0 + rng.gen_range(-0.5..0.5),
                    center.1 + rng.gen_range(-0.5..0.5),
                ]
            })
            .collect();
        Array2::from_rows(&rows)
    }

    #[test]
    fn identical_distributions_score_near_zero() {
        let a = gaussian_cloud(120, (0.0, 0.0), 1);
        let b = gaussian_cloud(120, (0.0, 0.0), 2);
        let d = h_divergence_estimate(&a, &b, &ProbeConfig::default(), 0).unwrap();
        assert!((0.0..0.2).contains(&d), "expected near zero, got {d}");
    }

    #[test]
    fn separated_distributions_score_near_two() {
        let a = gaussian_cloud(120, (0.0, 0.0), 3);
        let b = gaussian_cloud(120, (8.0, 8.0), 4);
        let d = h_divergence_estimate(&a, &b, &ProbeConfig::default(), 0).unwrap();
        assert!(d > 1.8, "expected near two, got {d}");
    }

    #[test]
    fn estimate_is_exactly_symmetric() {
        let a = gaussian_cloud(60, (0.0, 0.0), 5);
        let b = gaussian_cloud(64, (1.0, 0.5), 6);
        let cfg = ProbeConfig::default();
        let ab = h_divergence_estimate(&a, &b, &cfg, 3).unwrap();
        let ba = h_divergence_estimate(&b, &a, &cfg, 3).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn range_is_respected() {
        let a = gaussian_cloud(40, (0.0, 0.0), 7);
        let b = gaussian_cloud(40, (0.7, 0.0), 8);
        let d = h_divergence_estimate(&a, &b, &ProbeConfig::default(), 1).unwrap();
        assert!((0.0..=2.0).contains(&d));
    }

    #[test]
    fn tiny_domains_are_rejected() {
        let a = gaussian_cloud(1, (0.0, 0.0), 9);
        let b = gaussian_cloud(10, (0.0, 0.0), 10);
        assert!(matches!(
            h_divergence_estimate(&a, &b, &ProbeConfig::default(), 0),
            Err(CoreError::DomainTooSmall { n: 1 })
        ));
    }
}
