//! Self-paced target selection: schedules, rankings, and target losses.
//!
//! Two curricula run side by side over the unlabeled target set.
//! Classification-based selection (CSS) ranks samples by the confidence of
//! their pseudo-label and admits a fraction `r_c` that grows by `±1/T` per
//! epoch — it backs off when source accuracy drops below its running mean
//! two epochs in a row. Domain-based selection (DSS) ranks samples by how
//! source-like the last discriminator finds them and admits a fraction
//! `r_d = e/T` that grows linearly to 1. Selected samples enter training
//! with weights `w^c = p_ỹ` (CSS) and `w^d = 2·(1 − d(x)) ∈ [0, 2]` (DSS).

use crate::array::Array2;
use crate::network::Network;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Per-target-sample snapshot taken at the start of an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub id: u64,
    /// Row of the sample in the target dataset.
    pub row: usize,
    /// argmax of the classifier's probability row.
    pub pseudo_label: u32,
    /// Probability assigned to the pseudo-label, `p_ỹ ∈ [1/K, 1]`.
    pub class_confidence: f64,
    /// `1 − d(x)` where `d` is the last discriminator's source probability.
    pub domain_confidence: f64,
}

/// Builds the confidence table for every target row.
pub fn confidence_records(net: &Network, target_feats: &Array2, base_id: u64) -> Vec<ConfidenceRecord> {
    let (probs, pseudo) = net.predict(target_feats);
    let feats = net.features(target_feats);
    let last = feats.last().expect("m >= 2 blocks");
    let d = net.disc_prob(net.spec.blocks() - 1, last);
    (0..target_feats.rows())
        .map(|row| ConfidenceRecord {
            id: base_id + row as u64,
            row,
            pseudo_label: pseudo[row],
            class_confidence: probs.get(row, pseudo[row] as usize),
            domain_confidence: 1.0 - d.get(row, 0),
        })
        .collect()
}

/// Pace state of the two curricula across stage-2 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    /// Stage-2 epochs observed so far (`e`).
    pub epoch: u32,
    /// Curriculum horizon (`T`).
    pub horizon: u32,
    /// Source accuracy per observed epoch.
    pub accuracies: Vec<f64>,
    /// The ±1 increments of Σηᵢ.
    pub etas: Vec<i32>,
    pub r_c: f64,
    pub r_d: f64,
}

impl ScheduleState {
    pub fn new(horizon: u32) -> Self {
        ScheduleState {
            epoch: 0,
            horizon,
            accuracies: Vec::new(),
            etas: Vec::new(),
            r_c: 0.0,
            r_d: 0.0,
        }
    }

    /// Observes the source accuracy of the next epoch and recomputes `r_c`.
    ///
    /// `η_e = −1` only when this epoch's accuracy AND the previous epoch's
    /// accuracy both fell below their respective running means; the first
    /// epoch is always `+1`. `r_c = clamp(Σηᵢ / T, 0, 1)`.
    pub fn update_rc(&mut self, accuracy: f64) -> f64 {
        self.accuracies.push(accuracy);
        let e = self.accuracies.len();
        let mean_to = |k: usize| -> f64 {
            self.accuracies[..k].iter().sum::<f64>() / k as f64
        };
        let eta = if e >= 2
            && self.accuracies[e - 1] < mean_to(e)
            && self.accuracies[e - 2] < mean_to(e - 1)
        {
            -1
        } else {
            1
        };
        self.etas.push(eta);
        let sum: i64 = self.etas.iter().map(|&v| v as i64).sum();
        self.r_c = (sum as f64 / self.horizon as f64).clamp(0.0, 1.0);
        self.epoch = e as u32;
        self.r_c
    }

    /// Advances the domain fraction to `e/T` (clamped to 1 past the horizon).
    pub fn update_rd(&mut self) -> f64 {
        let e = self.epoch.min(self.horizon);
        self.r_d = f64::from(e) / f64::from(self.horizon);
        self.r_d
    }
}

/// The selected target subsets for one epoch, each sorted by rank.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionSets {
    /// Pseudo-labeled picks: `(row, pseudo_label, w^c)` by descending
    /// class confidence.
    pub css: Vec<(usize, u32, f64)>,
    /// Domain-confident picks: `(row, w^d)` by descending domain confidence.
    pub dss: Vec<(usize, f64)>,
}

impl SelectionSets {
    pub fn empty() -> Self {
        SelectionSets::default()
    }
}

/// Stable top-`⌊r·n⌋` ranking: key descending, ties by ascending sample id.
fn rank_top(records: &[ConfidenceRecord], r: f64, key: impl Fn(&ConfidenceRecord) -> f64) -> Vec<usize> {
    let n = records.len();
    let k = ((r * n as f64).floor() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        key(&records[b])
            .total_cmp(&key(&records[a]))
            .then(records[a].id.cmp(&records[b].id))
    });
    order.truncate(k);
    order
}

/// Classification-based selection of the top `⌊r_c·n⌋` records.
pub fn css_select(records: &[ConfidenceRecord], r_c: f64) -> Vec<(usize, u32, f64)> {
    rank_top(records, r_c, |rec| rec.class_confidence)
        .into_iter()
        .map(|i| {
            let rec = &records[i];
            (rec.row, rec.pseudo_label, rec.class_confidence)
        })
        .collect()
}

/// Domain-based selection of the top `⌊r_d·n⌋` records, weighted
/// `w^d = 2·(1 − d(x))`.
pub fn dss_select(records: &[ConfidenceRecord], r_d: f64) -> Vec<(usize, f64)> {
    rank_top(records, r_d, |rec| rec.domain_confidence)
        .into_iter()
        .map(|i| {
            let rec = &records[i];
            (rec.row, 2.0 * rec.domain_confidence)
        })
        .collect()
}

/// How a sample present in both selections counts inside the target domain
/// loss: the written form adds its indicators (weight doubles), the union
/// form counts it once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TarDMultiplicity {
    SummedIndicators,
    Union,
}

impl Default for TarDMultiplicity {
    fn default() -> Self {
        TarDMultiplicity::SummedIndicators
    }
}

/// Pseudo-label classification loss over the CSS picks,
/// `(1/N_t)·Σ s^c·w^c·xent(C(F(x)), ỹ)`. Empty selection costs 0.
pub fn tar_c_loss(net: &Network, target_feats: &Array2, css: &[(usize, u32, f64)]) -> Result<f64> {
    if css.is_empty() {
        return Ok(0.0);
    }
    let n_t = target_feats.rows() as f64;
    let (probs, _) = net.predict(target_feats);
    let mut total = 0.0;
    for &(row, pseudo, w) in css {
        let p = crate::graph::clamp_prob(probs.get(row, pseudo as usize));
        total += w * -p.ln();
    }
    Ok(total / n_t)
}

/// Domain-weighted target loss over the selected sets,
/// `(1/N_t)·Σ (s^c + s^d)·w^d·CA(x, domain 0)`, where `w^d` comes from the
/// confidence table and the multiplicity of doubly selected samples follows
/// `mult`. Empty selections cost 0.
pub fn tar_d_loss(
    net: &Network,
    target_feats: &Array2,
    records: &[ConfidenceRecord],
    css: &[(usize, u32, f64)],
    dss: &[(usize, f64)],
    mult: TarDMultiplicity,
) -> Result<f64> {
    if css.is_empty() && dss.is_empty() {
        return Ok(0.0);
    }
    let n_t = target_feats.rows() as f64;
    let mut indicator = vec![0u8; target_feats.rows()];
    for &(row, _, _) in css {
        indicator[row] += 1;
    }
    for &(row, _) in dss {
        indicator[row] += 1;
    }
    let ca = net.per_sample_ca(target_feats, 0.0);
    let mut total = 0.0;
    for rec in records {
        let s = match mult {
            TarDMultiplicity::SummedIndicators => f64::from(indicator[rec.row]),
            TarDMultiplicity::Union => f64::from(indicator[rec.row].min(1)),
        };
        if s > 0.0 {
            let w_d = 2.0 * rec.domain_confidence;
            total += s * w_d * ca[rec.row];
        }
    }
    Ok(total / n_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: u64, class_conf: f64, domain_conf: f64) -> ConfidenceRecord {
        ConfidenceRecord {
            id,
            row: id as usize,
            pseudo_label: 0,
            class_confidence: class_conf,
            domain_confidence: domain_conf,
        }
    }

    #[test]
    fn backoff_needs_two_consecutive_drops() {
        let mut s = ScheduleState::new(10);
        s.update_rc(0.9);
        s.update_rc(0.5);
        let r = s.update_rc(0.4);
        // η = (+1, +1, −1): A₂ < mean(0.9,0.5) but A₁ = mean(0.9);
        // A₃ < mean = 0.6 and A₂ < 0.7 both hold.
        assert_eq!(s.etas, vec![1, 1, -1]);
        assert!((r - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rc_moves_by_one_over_horizon_and_clamps() {
        let mut s = ScheduleState::new(4);
        let mut last = 0.0;
        for _ in 0..6 {
            let r = s.update_rc(0.9); // monotone stream: every η = +1
            assert!(r >= last);
            last = r;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn rd_is_linear_and_clamped() {
        let mut s = ScheduleState::new(5);
        for e in 1..=7u32 {
            s.update_rc(0.5);
            let r = s.update_rd();
            assert_eq!(r, f64::from(e.min(5)) / 5.0);
        }
    }

    #[test]
    fn selection_sizes_match_floor() {
        let recs: Vec<_> = (0..10).map(|i| record(i, 0.5 + i as f64 * 0.01, 0.3)).collect();
        for (r, want) in [(0.0, 0), (0.19, 1), (0.5, 5), (1.0, 10)] {
            assert_eq!(css_select(&recs, r).len(), want);
        }
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let recs = vec![record(3, 0.8, 0.5), record(1, 0.8, 0.5), record(2, 0.9, 0.5)];
        let picks = css_select(&recs, 1.0);
        // Rows equal ids here: rank order must be id 2 (0.9), then 1, then 3.
        let rows: Vec<usize> = picks.iter().map(|&(row, _, _)| row).collect();
        assert_eq!(rows, vec![2, 1, 3]);
    }

    #[test]
    fn growing_fraction_is_nested() {
        let recs: Vec<_> = (0..12)
            .map(|i| record(i, (i as f64 * 7.3).sin().abs(), (i as f64 * 3.1).cos().abs()))
            .collect();
        let mut prev: Vec<usize> = Vec::new();
        for k in 0..=12 {
            let picks = dss_select(&recs, k as f64 / 12.0);
            let rows: Vec<usize> = picks.iter().map(|&(row, _)| row).collect();
            assert_eq!(&rows[..prev.len()], prev.as_slice());
            prev = rows;
        }
    }

    #[test]
    fn dss_weights_follow_the_domain_confidence() {
        let recs = vec![record(0, 0.5, 0.5), record(1, 0.5, 1.0), record(2, 0.5, 0.0)];
        let picks = dss_select(&recs, 1.0);
        let by_row: std::collections::HashMap<usize, f64> =
            picks.into_iter().collect();
        assert_eq!(by_row[&0], 1.0); // d = 0.5 → weight exactly 1
        assert_eq!(by_row[&1], 2.0); // d = 0   → weight exactly 2
        assert_eq!(by_row[&2], 0.0); // d = 1   → weight exactly 0
    }
}
