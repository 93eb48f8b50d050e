//! Per-block collaboration/adversity weights and their constrained update.
//!
//! Each feature block `l` carries a weight `λ_l`: positive means the block
//! is trained *with* its domain discriminator (keep domain cues), negative
//! means *against* it (wash domain cues out). The vector lives on the
//! polytope `Σ λ_l = target` with `|λ_l| ≤ bound`, and moves by projected
//! gradient descent on the λ-weighted sum of per-block discriminator
//! losses. In fixed-last mode the deepest block is pinned (to −2 by
//! default, outside the box on purpose) and only the remaining entries are
//! projected, onto `target − fixed`.

use crate::error::CoreError;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Tolerance used when checking feasibility of freshly projected vectors.
pub const FEASIBILITY_TOL: f64 = 1e-10;
/// Bisection stops once the sum constraint is met this tightly.
const BISECT_TOL: f64 = 1e-12;

/// How the λ vector is constrained and updated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    /// All entries free inside the box, projected onto the full target sum.
    Free,
    /// Last entry pinned to the given value (box-exempt); the rest are
    /// projected onto `target_sum − fixed`.
    FixedLast { value: f64 },
    /// Entries never move and no feasibility is demanded (baselines).
    Pinned,
}

/// The λ vector together with its constraint set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaWeights {
    pub values: Vec<f64>,
    pub mode: LambdaMode,
    pub box_bound: f64,
    pub target_sum: f64,
}

impl LambdaWeights {
    /// Free-mode vector started at the uniform feasible point.
    pub fn free(blocks: usize) -> Self {
        let target = -1.0;
        LambdaWeights {
            values: vec![target / blocks as f64; blocks],
            mode: LambdaMode::Free,
            box_bound: 1.0,
            target_sum: target,
        }
    }

    /// Fixed-last vector: deepest block pinned to `fixed`, free entries
    /// started uniformly on their own hyperplane.
    pub fn fixed_last(blocks: usize, fixed: f64) -> Self {
        assert!(blocks >= 2, "fixed-last needs at least two blocks");
        let target = -1.0;
        let free_target = target - fixed;
        let mut values = vec![free_target / (blocks - 1) as f64; blocks];
        values[blocks - 1] = fixed;
        LambdaWeights {
            values,
            mode: LambdaMode::FixedLast { value: fixed },
            box_bound: 1.0,
            target_sum: target,
        }
    }

    /// Immutable vector for the baselines (all zeros, or one −1 entry).
    pub fn pinned(values: Vec<f64>) -> Self {
        LambdaWeights {
            values,
            mode: LambdaMode::Pinned,
            box_bound: 1.0,
            target_sum: -1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Checks the sum and box constraints to `tol`. Pinned vectors are
    /// exempt; a fixed last entry is exempt from the box.
    pub fn check_feasible(&self, tol: f64) -> Result<()> {
        match self.mode {
            LambdaMode::Pinned => Ok(()),
            LambdaMode::Free => {
                check_feasible_slice(&self.values, self.target_sum, self.box_bound, tol)
            }
            LambdaMode::FixedLast { value } => {
                let last = *self.values.last().expect("non-empty lambda");
                if (last - value).abs() > tol {
                    return Err(CoreError::InfeasibleLambda {
                        detail: format!("fixed entry drifted to {last}, expected {value}"),
                    });
                }
                let free = &self.values[..self.values.len() - 1];
                check_feasible_slice(free, self.target_sum - value, self.box_bound, tol)
            }
        }
    }

    /// One projected-gradient step against the recorded per-block losses:
    /// `λ ← project(λ − η·losses)`. Pinned vectors are returned unchanged.
    pub fn update(&mut self, losses: &[f64], eta: f64) -> Result<()> {
        update_lambda(self, losses, eta)
    }
}

fn check_feasible_slice(values: &[f64], target: f64, bound: f64, tol: f64) -> Result<()> {
    let sum: f64 = values.iter().sum();
    if (sum - target).abs() > tol {
        return Err(CoreError::InfeasibleLambda {
            detail: format!("sum {sum} != target {target} (tol {tol})"),
        });
    }
    for (i, &v) in values.iter().enumerate() {
        if v.abs() > bound + tol {
            return Err(CoreError::InfeasibleLambda {
                detail: format!("entry {i} = {v} outside ±{bound}"),
            });
        }
    }
    Ok(())
}

/// Euclidean projection of `v` onto `{x : Σx = target, |xᵢ| ≤ bound}`.
///
/// The minimizer has the form `xᵢ = clip(vᵢ − τ, −bound, bound)` for a
/// scalar `τ`; since `Σx(τ)` is non-increasing in `τ`, `τ` is found by
/// bisection. Feasible inputs are returned unchanged.
pub fn project_lambda(v: &[f64], target: f64, bound: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if n == 0 {
        return Err(CoreError::InvalidConfig("projection of empty vector".into()));
    }
    if bound <= 0.0 || !bound.is_finite() || !target.is_finite() {
        return Err(CoreError::InvalidConfig(format!(
            "projection needs finite target and positive bound, got target {target}, bound {bound}"
        )));
    }
    if target.abs() > n as f64 * bound + BISECT_TOL {
        return Err(CoreError::InfeasibleProjection {
            target,
            bound,
            n,
        });
    }
    if check_feasible_slice(v, target, bound, BISECT_TOL).is_ok() {
        return Ok(v.to_vec());
    }

    let clip_sum = |tau: f64| -> f64 {
        v.iter()
            .map(|&vi| (vi - tau).clamp(-bound, bound))
            .sum()
    };
    // Σx = n·bound at τ ≤ min(v) − bound and −n·bound at τ ≥ max(v) + bound.
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - bound;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + bound;
    let mut tau = 0.0;
    for _ in 0..200 {
        tau = 0.5 * (lo + hi);
        let s = clip_sum(tau);
        if (s - target).abs() <= BISECT_TOL {
            break;
        }
        if s > target {
            lo = tau;
        } else {
            hi = tau;
        }
        if hi - lo < f64::EPSILON * (1.0 + tau.abs()) {
            break;
        }
    }
    Ok(v.iter()
        .map(|&vi| (vi - tau).clamp(-bound, bound))
        .collect())
}

/// Projected-gradient step for λ. The objective is `Σ λ_l·L_l`, whose
/// gradient in λ is the loss vector itself.
pub fn update_lambda(lambda: &mut LambdaWeights, losses: &[f64], eta: f64) -> Result<()> {
    if losses.len() != lambda.values.len() {
        return Err(CoreError::InvalidConfig(format!(
            "{} losses for {} lambda entries",
            losses.len(),
            lambda.values.len()
        )));
    }
    match lambda.mode {
        LambdaMode::Pinned => Ok(()),
        LambdaMode::Free => {
            let stepped: Vec<f64> = lambda
                .values
                .iter()
                .zip(losses)
                .map(|(&l, &g)| l - eta * g)
                .collect();
            lambda.values = project_lambda(&stepped, lambda.target_sum, lambda.box_bound)?;
            Ok(())
        }
        LambdaMode::FixedLast { value } => {
            let m = lambda.values.len();
            let stepped: Vec<f64> = lambda.values[..m - 1]
                .iter()
                .zip(&losses[..m - 1])
                .map(|(&l, &g)| l - eta * g)
                .collect();
            let free = project_lambda(&stepped, lambda.target_sum - value, lambda.box_bound)?;
            lambda.values[..m - 1].copy_from_slice(&free);
            lambda.values[m - 1] = value;
            Ok(())
        }
    }
}
