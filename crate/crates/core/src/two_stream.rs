//! Two-stream training with exchanged selections.
//!
//! Each stream is a full single-network loop on its own view of the data.
//! The streams run in lock-step; once selection starts, every epoch each
//! stream picks its target subsets with its *own* schedule, confidences,
//! and weights — and then trains on the subsets picked by the *other*
//! stream. A sample one stream is sure about becomes a training signal for
//! the other, which keeps a stream from feasting on its own mistakes.
//!
//! Inference fuses the streams: class probabilities are averaged with
//! equal weight and the argmax of the mean is the prediction.
//!
//! With identical views and identical per-stream seeds the exchange is a
//! no-op (both streams pick the same subsets), so a two-stream run
//! collapses to two byte-identical single-stream runs — a useful
//! end-to-end check that the exchange is the only coupling.

use crate::array::Array2;
use crate::data::{Dataset, PairedDataset};
use crate::error::CoreError;
use crate::network::{argmax_rows, Network};
use crate::rng::RngState;
use crate::trainer::{
    agreement, summarize, Method, MetricsRecord, RunSummary, StreamState, TrainConfig,
};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Per-epoch facts specific to a two-stream run. The headline record keeps
/// the fused accuracy; the full per-stream records ride along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStreamMetrics {
    pub fused_target_accuracy: f64,
    /// Fraction of target samples where the streams' predictions agree.
    pub agreement: f64,
    pub a: Box<MetricsRecord>,
    pub b: Box<MetricsRecord>,
}

/// A finished two-stream run.
#[derive(Debug)]
pub struct TwoStreamResult {
    /// Headline records: target accuracy is the fused one, losses are the
    /// per-stream means, pace and selection sizes are stream A's; the
    /// untouched per-stream records sit in `two_stream`.
    pub metrics: Vec<MetricsRecord>,
    pub summary: RunSummary,
    pub net_a: Network,
    pub net_b: Network,
    /// Shuffle-stream positions at the end of the run.
    pub shuffle_state_a: RngState,
    pub shuffle_state_b: RngState,
    /// Vault opens across both target views.
    pub label_reads: u64,
}

/// Mean-probability fusion of two networks on aligned inputs: returns the
/// averaged class probabilities and their argmax labels.
pub fn fuse_predict(
    net_a: &Network,
    net_b: &Network,
    x_a: &Array2,
    x_b: &Array2,
) -> Result<(Array2, Vec<u32>)> {
    if x_a.rows() != x_b.rows() {
        return Err(CoreError::ViewMismatch(format!(
            "view batches differ in length: {} vs {}",
            x_a.rows(),
            x_b.rows()
        )));
    }
    let (pa, _) = net_a.predict(x_a);
    let (pb, _) = net_b.predict(x_b);
    if pa.cols() != pb.cols() {
        return Err(CoreError::ViewMismatch(format!(
            "class counts differ: {} vs {}",
            pa.cols(),
            pb.cols()
        )));
    }
    let mut mean = pa;
    for (m, &v) in mean.as_mut_slice().iter_mut().zip(pb.as_slice()) {
        *m = 0.5 * (*m + v);
    }
    let labels = argmax_rows(&mean);
    Ok((mean, labels))
}

/// Fused accuracy on a pair of aligned evaluation sets. Labels come from
/// view A's vault (the views carry the same labels by construction).
fn evaluate_fused(net_a: &Network, net_b: &Network, ds_a: &Dataset, ds_b: &Dataset) -> Result<f64> {
    let labels = ds_a.eval_labels()?;
    let (_, predicted) = fuse_predict(net_a, net_b, &ds_a.feature_matrix(), &ds_b.feature_matrix())?;
    let mut hit = 0usize;
    let mut total = 0usize;
    for (pred, label) in predicted.iter().zip(&labels) {
        if let Some(l) = label {
            total += 1;
            if pred == l {
                hit += 1;
            }
        }
    }
    if total == 0 {
        return Err(CoreError::Unlabeled);
    }
    Ok(hit as f64 / total as f64)
}

/// Trains both streams with exchanged selections.
pub fn train_two_stream(
    cfg: &TrainConfig,
    source: &PairedDataset,
    target: &PairedDataset,
) -> Result<TwoStreamResult> {
    if cfg.method != Method::TsSpcan {
        return Err(CoreError::InvalidConfig(format!(
            "two-stream training is for ts-spcan, not {}",
            cfg.method
        )));
    }
    source.validate()?;
    target.validate()?;
    let (seed_a, seed_b) = cfg.stream_seeds.unwrap_or((cfg.seed, cfg.seed + 1));
    let mut a = StreamState::new(cfg, &source.view_a, &target.view_a, seed_a)?;
    let mut b = StreamState::new(cfg, &source.view_b, &target.view_b, seed_b)?;

    let mut metrics = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let started = Instant::now();
        let sel_a = a.next_selection();
        let sel_b = b.next_selection();
        a.run_epoch(&sel_b)?;
        b.run_epoch(&sel_a)?;
        let rec_a = a.epoch_metrics(&sel_b, started)?;
        let rec_b = b.epoch_metrics(&sel_a, started)?;

        let fused = evaluate_fused(&a.net, &b.net, &target.view_a, &target.view_b)?;
        let (_, pred_a) = a.net.predict(&target.view_a.feature_matrix());
        let (_, pred_b) = b.net.predict(&target.view_b.feature_matrix());

        let mut headline = rec_a.clone();
        headline.target_accuracy = fused;
        headline.source_accuracy = 0.5 * (rec_a.source_accuracy + rec_b.source_accuracy);
        headline.l_src = 0.5 * (rec_a.l_src + rec_b.l_src);
        headline.l_ca = 0.5 * (rec_a.l_ca + rec_b.l_ca);
        headline.l_tar_c = 0.5 * (rec_a.l_tar_c + rec_b.l_tar_c);
        headline.l_tar_d = 0.5 * (rec_a.l_tar_d + rec_b.l_tar_d);
        headline.total_loss = 0.5 * (rec_a.total_loss + rec_b.total_loss);
        headline.sampled_with_replacement =
            rec_a.sampled_with_replacement || rec_b.sampled_with_replacement;
        headline.wall_time_s = started.elapsed().as_secs_f64();
        headline.two_stream = Some(TwoStreamMetrics {
            fused_target_accuracy: fused,
            agreement: agreement(&pred_a, &pred_b),
            a: Box::new(rec_a),
            b: Box::new(rec_b),
        });
        metrics.push(headline);
    }

    let summary = summarize(cfg.method, cfg.seed, &metrics, |m| m.target_accuracy);
    let label_reads = a.label_reads() + b.label_reads();
    let shuffle_state_a = a.shuffle_state();
    let shuffle_state_b = b.shuffle_state();
    Ok(TwoStreamResult {
        summary,
        net_a: a.net,
        net_b: b.net,
        shuffle_state_a,
        shuffle_state_b,
        label_reads,
        metrics,
    })
}
