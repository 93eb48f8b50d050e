//! Batch composition for the two half-batches of each iteration.
//!
//! With `β = N^p/(N^s + N^p)` (the pseudo-labeled share of the classifier's
//! training pool) and half-batch `H = B/2`, every iteration draws
//!
//! * a classifier batch of `H` slots: `H − rhu(H·β)` labeled source and
//!   `rhu(H·β)` pseudo-labeled picks, and
//! * a domain batch of `B` slots: `H` source (domain 1) plus `rhu(H·β)`
//!   CSS picks, `rhu(H·(1−β)·N^q/N_t)` DSS picks, and random targets in the
//!   remaining slots (all domain 0),
//!
//! where `rhu` rounds half up and any residual goes to random targets.
//! Each pool is drawn without replacement, reshuffling when it wraps; a
//! single quota larger than its pool falls back to drawing with
//! replacement and raises a telemetry flag.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Slot counts for one iteration's pair of batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchQuotas {
    pub cls_source: usize,
    pub cls_pseudo: usize,
    pub dom_source: usize,
    pub dom_css: usize,
    pub dom_dss: usize,
    pub dom_random: usize,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Applies the quota formulas for batch size `B`, pseudo share `β`, and
/// domain-confident share `N^q/N_t`.
pub fn batch_quotas(batch_size: usize, beta: f64, dss_share: f64) -> BatchQuotas {
    assert!(batch_size >= 2 && batch_size % 2 == 0, "batch size must be even");
    let h = batch_size / 2;
    let cls_pseudo = round_half_up(h as f64 * beta).min(h);
    let dom_css = round_half_up(h as f64 * beta).min(h);
    let dom_dss = round_half_up(h as f64 * (1.0 - beta) * dss_share).min(h - dom_css);
    BatchQuotas {
        cls_source: h - cls_pseudo,
        cls_pseudo,
        dom_source: h,
        dom_css,
        dom_dss,
        dom_random: h - dom_css - dom_dss,
    }
}

/// Which rows fill the classifier batch: source rows plus indices into the
/// CSS selection.
#[derive(Debug, Clone, Default)]
pub struct ClassifierPlan {
    pub source_rows: Vec<usize>,
    pub css_picks: Vec<usize>,
}

/// Which rows fill the domain batch.
#[derive(Debug, Clone, Default)]
pub struct DomainPlan {
    pub source_rows: Vec<usize>,
    pub css_picks: Vec<usize>,
    pub dss_picks: Vec<usize>,
    pub random_target_rows: Vec<usize>,
}

/// Cycling without-replacement pool over `0..len`.
struct Pool {
    order: Vec<usize>,
    cursor: usize,
}

impl Pool {
    fn new(len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        Pool { order, cursor: 0 }
    }

    /// Draws `k` items; wraps with a reshuffle, or falls back to drawing
    /// with replacement (returning `true`) when `k` exceeds the pool.
    fn draw(&mut self, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        if k == 0 {
            return (Vec::new(), false);
        }
        assert!(!self.order.is_empty(), "positive quota on an empty pool");
        if k > self.order.len() {
            let picks = (0..k).map(|_| self.order[rng.gen_range(0..self.order.len())]).collect();
            return (picks, true);
        }
        let mut picks = Vec::with_capacity(k);
        while picks.len() < k {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            picks.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        (picks, false)
    }
}

/// Per-epoch batch source: owns the shuffled pools and the fixed quotas.
pub struct BatchComposer {
    quotas: BatchQuotas,
    source: Pool,
    css: Pool,
    dss: Pool,
    target: Pool,
    /// Set when any draw this epoch had to sample with replacement.
    pub sampled_with_replacement: bool,
}

impl BatchComposer {
    /// Prepares pools for one epoch. `n_css`/`n_dss` are the selected-set
    /// sizes; quotas follow from them and the population counts.
    pub fn new(
        batch_size: usize,
        n_source: usize,
        n_target: usize,
        n_css: usize,
        n_dss: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(n_source > 0 && n_target > 0, "both domains must be non-empty");
        let beta = n_css as f64 / (n_source + n_css) as f64;
        let dss_share = n_dss as f64 / n_target as f64;
        BatchComposer {
            quotas: batch_quotas(batch_size, beta, dss_share),
            source: Pool::new(n_source, rng),
            css: Pool::new(n_css, rng),
            dss: Pool::new(n_dss, rng),
            target: Pool::new(n_target, rng),
            sampled_with_replacement: false,
        }
    }

    pub fn quotas(&self) -> BatchQuotas {
        self.quotas
    }

    /// Draws the next classifier/domain batch pair.
    pub fn next(&mut self, rng: &mut ChaCha8Rng) -> (ClassifierPlan, DomainPlan) {
        let q = self.quotas;
        let mut flag = false;
        let mut draw = |pool: &mut Pool, k: usize, rng: &mut ChaCha8Rng| {
            let (picks, with_replacement) = pool.draw(k, rng);
            flag |= with_replacement;
            picks
        };
        let cls = ClassifierPlan {
            source_rows: draw(&mut self.source, q.cls_source, rng),
            css_picks: draw(&mut self.css, q.cls_pseudo, rng),
        };
        let dom = DomainPlan {
            source_rows: draw(&mut self.source, q.dom_source, rng),
            css_picks: draw(&mut self.css, q.dom_css, rng),
            dss_picks: draw(&mut self.dss, q.dom_dss, rng),
            random_target_rows: draw(&mut self.target, q.dom_random, rng),
        };
        self.sampled_with_replacement |= flag;
        (cls, dom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};

    #[test]
    fn quota_worked_example() {
        // β = 0.25 and N^q/N_t = 0.5 at B = 16: domain batch is 8 source,
        // 2 CSS, 3 DSS, 3 random targets.
        let q = batch_quotas(16, 0.25, 0.5);
        assert_eq!(
            q,
            BatchQuotas {
                cls_source: 6,
                cls_pseudo: 2,
                dom_source: 8,
                dom_css: 2,
                dom_dss: 3,
                dom_random: 3,
            }
        );
    }

    #[test]
    fn empty_selections_yield_all_source_and_random() {
        let q = batch_quotas(16, 0.0, 0.0);
        assert_eq!(q.cls_source, 8);
        assert_eq!(q.cls_pseudo, 0);
        assert_eq!(q.dom_css, 0);
        assert_eq!(q.dom_dss, 0);
        assert_eq!(q.dom_random, 8);
    }

    #[test]
    fn quotas_always_fill_both_batches() {
        for b in [4usize, 8, 16, 32] {
            for beta10 in 0..=10 {
                for share10 in 0..=10 {
                    let q = batch_quotas(b, beta10 as f64 / 10.0, share10 as f64 / 10.0);
                    assert_eq!(q.cls_source + q.cls_pseudo, b / 2);
                    assert_eq!(q.dom_css + q.dom_dss + q.dom_random, b / 2);
                    assert_eq!(q.dom_source, b / 2);
                }
            }
        }
    }

    #[test]
    fn pool_cycles_without_replacement_between_wraps() {
        let mut rng = stream(3, StreamKind::Shuffle, 0);
        let mut pool = Pool::new(10, &mut rng);
        let (first, flag1) = pool.draw(10, &mut rng);
        assert!(!flag1);
        let mut sorted = first.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        let (second, flag2) = pool.draw(10, &mut rng);
        assert!(!flag2);
        let mut sorted2 = second;
        sorted2.sort_unstable();
        assert_eq!(sorted2, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_quota_flags_replacement() {
        let mut rng = stream(4, StreamKind::Shuffle, 0);
        let mut pool = Pool::new(3, &mut rng);
        let (picks, flag) = pool.draw(5, &mut rng);
        assert_eq!(picks.len(), 5);
        assert!(flag);
        assert!(picks.iter().all(|&p| p < 3));
    }

    #[test]
    fn composer_is_deterministic_for_a_seed() {
        let run = || {
            let mut rng = stream(9, StreamKind::Shuffle, 1);
            let mut c = BatchComposer::new(8, 20, 20, 5, 4, &mut rng);
            let mut all = Vec::new();
            for _ in 0..10 {
                let (cls, dom) = c.next(&mut rng);
                all.push((cls.source_rows, cls.css_picks, dom.source_rows, dom.dss_picks));
            }
            all
        };
        assert_eq!(run(), run());
    }
}
