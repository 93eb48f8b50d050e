//! Training loops, per-epoch telemetry, and evaluation.
//!
//! One [`train`] call runs a single network against a labeled source domain
//! and a quarantined target domain. All methods share the same loop; they
//! differ only in their λ vector and in whether target samples are ever
//! selected:
//!
//! * `source-only` — λ pinned to zeros, no domain pass at all.
//! * `dann` — λ pinned to `(0, …, 0, −1)`: a single gradient-reversal
//!   adversary on the deepest block.
//! * `can` — λ free (or deepest entry fixed) and updated by projected
//!   gradient descent; every target slot in the domain batch is random.
//! * `spcan` — `can` plus a second stage that selects confidently
//!   pseudo-labeled and domain-ambiguous target samples and feeds them
//!   back into both batch halves with per-sample weights.
//!
//! Two-stream training drives two of these loops in lock-step and swaps
//! their selections; see [`crate::two_stream`].
//!
//! Every epoch runs `⌈max(N_s, N_t)/H⌉` iterations of half-batch size
//! `H = batch/2`: a classifier batch (`H` slots: source plus selected
//! pseudo-labeled targets) and a domain batch (`H` source + `H` target
//! slots). Each iteration takes one SGD step from both graphs, with the
//! domain side scaled by `α` and warmed up by the adaptation factor, then
//! moves λ against the per-block discriminator losses.

use crate::array::Array2;
use crate::batch::BatchComposer;
use crate::data::Dataset;
use crate::error::CoreError;
use crate::hdiv::{h_divergence_estimate, ProbeConfig};
use crate::lambda::LambdaWeights;
use crate::network::{Network, NetworkSpec};
use crate::optim::{sgd_step, OptimizerConfig};
use crate::rng::{stream, RngState, StreamKind};
use crate::selection::{
    confidence_records, css_select, dss_select, tar_c_loss, tar_d_loss, ScheduleState,
    SelectionSets, TarDMultiplicity,
};
use crate::two_stream::TwoStreamMetrics;
use crate::Result;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Training method. All methods share one loop; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SourceOnly,
    Dann,
    Can,
    Spcan,
    TsSpcan,
}

impl Method {
    /// Whether the method runs the selection stage.
    pub fn selects(self) -> bool {
        matches!(self, Method::Spcan | Method::TsSpcan)
    }

    /// Whether the method trains discriminators at all.
    pub fn uses_domain_pass(self) -> bool {
        !matches!(self, Method::SourceOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::SourceOnly => "source-only",
            Method::Dann => "dann",
            Method::Can => "can",
            Method::Spcan => "spcan",
            Method::TsSpcan => "ts-spcan",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source-only" => Ok(Method::SourceOnly),
            "dann" => Ok(Method::Dann),
            "can" => Ok(Method::Can),
            "spcan" => Ok(Method::Spcan),
            "ts-spcan" => Ok(Method::TsSpcan),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown method {other:?} (expected source-only, dann, can, spcan, or ts-spcan)"
            ))),
        }
    }
}

/// How λ is constrained during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSetting {
    /// All entries move inside the box.
    Free,
    /// Deepest entry fixed at `lambda_fixed_value`, the rest move.
    FixedLast,
}

/// When λ takes its projected-gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaCadence {
    /// After every SGD step, against that iteration's batch losses.
    PerIteration,
    /// Once per epoch, against the epoch's mean batch losses.
    PerEpoch,
}

/// Network shape knobs exposed through the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    /// Output width of each feature block; the length is the block count.
    pub block_dims: Vec<usize>,
    pub discriminator_hidden: usize,
    /// Learning-rate multiplier for the classifier and discriminators.
    pub head_lr_multiplier: f64,
    /// Class count; inferred from the source labels when absent.
    pub num_classes: Option<usize>,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        NetworkSettings {
            block_dims: vec![16, 16, 16, 16],
            discriminator_hidden: 8,
            head_lr_multiplier: 10.0,
            num_classes: None,
        }
    }
}

/// Full description of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub seed: u64,
    pub epochs: usize,
    /// Fraction of epochs spent in the selection-free warm-up stage
    /// (selection methods only; rounded to epochs, at least one).
    pub stage1_fraction: f64,
    /// Weight of the domain side (collaborative/adversarial plus selected
    /// target samples) in the total objective.
    pub alpha: f64,
    /// Full domain-batch size; the classifier batch uses half of it.
    pub batch_size: usize,
    pub lambda_mode: LambdaSetting,
    pub lambda_fixed_value: f64,
    pub lambda_update: LambdaCadence,
    pub tar_d_multiplicity: TarDMultiplicity,
    /// Measure the feature-level H-divergence every this many epochs
    /// (0 disables it; the last epoch is always measured when enabled).
    pub h_div_every: usize,
    /// Per-stream seeds for two-stream runs; defaults to
    /// `(seed, seed + 1)`.
    pub stream_seeds: Option<(u64, u64)>,
    pub optimizer: OptimizerConfig,
    pub network: NetworkSettings,
    pub probe: ProbeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Spcan,
            seed: 0,
            epochs: 60,
            stage1_fraction: 0.1,
            alpha: 0.4,
            batch_size: 16,
            lambda_mode: LambdaSetting::FixedLast,
            lambda_fixed_value: -2.0,
            lambda_update: LambdaCadence::PerIteration,
            tar_d_multiplicity: TarDMultiplicity::default(),
            h_div_every: 5,
            stream_seeds: None,
            optimizer: OptimizerConfig::default(),
            network: NetworkSettings::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.stage1_fraction) {
            return bad(format!(
                "stage1_fraction must lie in [0, 1], got {}",
                self.stage1_fraction
            ));
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return bad(format!(
                "batch_size must be even and at least 2, got {}",
                self.batch_size
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and non-negative, got {}", self.alpha));
        }
        Ok(())
    }

    /// Epochs before selection starts; selection-free methods never leave
    /// stage 1.
    pub fn stage1_epochs(&self) -> usize {
        if self.method.selects() {
            ((self.stage1_fraction * self.epochs as f64).round() as usize).clamp(1, self.epochs)
        } else {
            self.epochs
        }
    }

    /// Initial λ vector for the configured method.
    pub fn initial_lambda(&self, blocks: usize) -> LambdaWeights {
        match self.method {
            Method::SourceOnly => LambdaWeights::pinned(vec![0.0; blocks]),
            Method::Dann => {
                let mut v = vec![0.0; blocks];
                v[blocks - 1] = -1.0;
                LambdaWeights::pinned(v)
            }
            Method::Can | Method::Spcan | Method::TsSpcan => match self.lambda_mode {
                LambdaSetting::Free => LambdaWeights::free(blocks),
                LambdaSetting::FixedLast => {
                    LambdaWeights::fixed_last(blocks, self.lambda_fixed_value)
                }
            },
        }
    }
}

/// Everything measured at the end of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// 1 while warming up, 2 once selection is active.
    pub stage: u8,
    pub source_accuracy: f64,
    pub target_accuracy: f64,
    pub l_src: f64,
    /// λ-weighted discriminator loss over all samples of both domains.
    pub l_ca: f64,
    pub l_tar_c: f64,
    pub l_tar_d: f64,
    /// `l_src + l_tar_c + α·(l_ca + l_tar_d)`.
    pub total_loss: f64,
    pub lambda: Vec<f64>,
    pub per_block_domain_losses: Vec<f64>,
    pub r_c: f64,
    pub r_d: f64,
    pub s_c_size: usize,
    pub s_d_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_divergence: Option<f64>,
    pub sampled_with_replacement: bool,
    /// Seconds spent on the epoch. In-memory telemetry only: keeping wall
    /// time out of the serialized stream is what lets two runs of the same
    /// config+seed write identical metrics files.
    #[serde(skip)]
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_stream: Option<TwoStreamMetrics>,
}

impl MetricsRecord {
    /// Copy with wall-clock fields zeroed, for comparing runs that should
    /// agree on everything a scheduler can control.
    pub fn comparable(&self) -> MetricsRecord {
        let mut rec = self.clone();
        rec.wall_time_s = 0.0;
        if let Some(ts) = &mut rec.two_stream {
            ts.a.wall_time_s = 0.0;
            ts.b.wall_time_s = 0.0;
        }
        rec
    }
}

/// One line of run-level results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub seed: u64,
    pub epochs: usize,
    pub best_target_accuracy: f64,
    pub last_target_accuracy: f64,
}

/// A finished single-network run.
#[derive(Debug)]
pub struct RunResult {
    pub metrics: Vec<MetricsRecord>,
    pub summary: RunSummary,
    pub network: Network,
    /// Shuffle-stream position at the end of the run.
    pub shuffle_state: RngState,
    /// Times the target label vault was opened (once per evaluation).
    pub label_reads: u64,
}

/// Classification accuracy of `net` on `ds`, using the evaluation-only
/// label path. Samples without labels are skipped; a dataset with no
/// labels at all is an error.
pub fn evaluate(net: &Network, ds: &Dataset) -> Result<f64> {
    let labels = ds.eval_labels()?;
    let (_, predicted) = net.predict(&ds.feature_matrix());
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

/// One epoch's selection, as handed to the training loop: the selected
/// sets plus the per-row domain weights of the stream that selected them.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpochSelection {
    pub sets: SelectionSets,
    /// `w^d` for every target row, from the selecting stream.
    pub w_d: Vec<f64>,
}

/// One network's training loop, epoch by epoch. Two-stream training owns
/// two of these and crosses their selections.
pub(crate) struct StreamState<'a> {
    pub cfg: TrainConfig,
    pub net: Network,
    pub schedule: ScheduleState,
    shuffle_rng: ChaCha8Rng,
    stream_seed: u64,
    source: &'a Dataset,
    target: &'a Dataset,
    source_x: Array2,
    source_y: Vec<u32>,
    target_x: Array2,
    target_ids: Vec<u64>,
    stage1_epochs: usize,
    epoch_len: usize,
    total_iters: u64,
    t: u64,
    pub epoch: usize,
    last_source_acc: f64,
    epoch_block_losses: Vec<f64>,
    epoch_with_replacement: bool,
}

impl<'a> StreamState<'a> {
    pub fn new(
        cfg: &TrainConfig,
        source: &'a Dataset,
        target: &'a Dataset,
        stream_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if source.is_empty() || target.is_empty() {
            return Err(CoreError::InvalidConfig(
                "both domains must be non-empty".into(),
            ));
        }
        if source.feature_dim != target.feature_dim {
            return Err(CoreError::InvalidConfig(format!(
                "feature widths differ: source {} vs target {}",
                source.feature_dim, target.feature_dim
            )));
        }
        let mut source_y = Vec::with_capacity(source.len());
        for i in 0..source.len() {
            match source.training_label(i)? {
                Some(l) => source_y.push(l),
                None => {
                    return Err(CoreError::InvalidConfig(format!(
                        "source sample {} has no label",
                        source.samples[i].id
                    )))
                }
            }
        }
        let num_classes = match cfg.network.num_classes {
            Some(k) => k,
            None => source.num_classes_hint().ok_or(CoreError::Unlabeled)?,
        };
        let spec = NetworkSpec {
            input_dim: source.feature_dim,
            block_dims: cfg.network.block_dims.clone(),
            num_classes,
            discriminator_hidden: cfg.network.discriminator_hidden,
        };
        let lambda = cfg.initial_lambda(spec.blocks());
        let mut init_rng = stream(stream_seed, StreamKind::ParamInit, 0);
        let net = Network::new(spec, lambda, &mut init_rng, cfg.network.head_lr_multiplier)?;

        let stage1_epochs = cfg.stage1_epochs();
        let half = cfg.batch_size / 2;
        let epoch_len = source.len().max(target.len()).div_ceil(half);
        let blocks = cfg.network.block_dims.len();
        Ok(StreamState {
            net,
            schedule: ScheduleState::new((cfg.epochs - stage1_epochs) as u32),
            shuffle_rng: stream(stream_seed, StreamKind::Shuffle, 0),
            stream_seed,
            source,
            target,
            source_x: source.feature_matrix(),
            source_y,
            target_x: target.feature_matrix(),
            target_ids: target.samples.iter().map(|s| s.id).collect(),
            stage1_epochs,
            epoch_len,
            total_iters: (cfg.epochs * epoch_len) as u64,
            t: 0,
            epoch: 0,
            last_source_acc: 0.0,
            epoch_block_losses: vec![0.0; blocks],
            epoch_with_replacement: false,
            cfg: cfg.clone(),
        })
    }

    /// Whether the epoch *about to run* is a selection epoch.
    fn next_epoch_selects(&self) -> bool {
        self.cfg.method.selects() && self.epoch + 1 > self.stage1_epochs
    }

    /// Advances the pace schedule and picks this epoch's target subsets.
    /// Outside the selection stage both sets are empty.
    pub fn next_selection(&mut self) -> EpochSelection {
        if !self.next_epoch_selects() {
            return EpochSelection::default();
        }
        self.schedule.update_rc(self.last_source_acc);
        self.schedule.update_rd();
        let mut records = confidence_records(&self.net, &self.target_x, 0);
        for rec in &mut records {
            rec.id = self.target_ids[rec.row];
        }
        let sets = SelectionSets {
            css: css_select(&records, self.schedule.r_c),
            dss: dss_select(&records, self.schedule.r_d),
        };
        let w_d = records.iter().map(|r| 2.0 * r.domain_confidence).collect();
        EpochSelection { sets, w_d }
    }

    /// Runs one epoch of SGD against the given selection.
    pub fn run_epoch(&mut self, sel: &EpochSelection) -> Result<()> {
        let mut composer = BatchComposer::new(
            self.cfg.batch_size,
            self.source_x.rows(),
            self.target_x.rows(),
            sel.sets.css.len(),
            sel.sets.dss.len(),
            &mut self.shuffle_rng,
        );
        self.epoch_block_losses.iter_mut().for_each(|l| *l = 0.0);
        for _ in 0..self.epoch_len {
            let (cls, dom) = composer.next(&mut self.shuffle_rng);

            let rows = cls.source_rows.len() + cls.css_picks.len();
            let mut x = Array2::zeros(rows, self.source_x.cols());
            let mut labels = Vec::with_capacity(rows);
            let mut weights = Vec::with_capacity(rows);
            let mut r = 0;
            for &s in &cls.source_rows {
                copy_row(&mut x, r, &self.source_x, s);
                labels.push(self.source_y[s]);
                weights.push(1.0);
                r += 1;
            }
            for &pick in &cls.css_picks {
                let (row, pseudo, w_c) = sel.sets.css[pick];
                copy_row(&mut x, r, &self.target_x, row);
                labels.push(pseudo);
                weights.push(w_c);
                r += 1;
            }
            let (mut g, loss, binds) = self.net.classifier_pass(&x, labels, weights)?;
            g.backward(loss, 1.0)?;
            self.net.accumulate_grads(&g, &binds);

            if self.cfg.method.uses_domain_pass() {
                let rows = dom.source_rows.len()
                    + dom.css_picks.len()
                    + dom.dss_picks.len()
                    + dom.random_target_rows.len();
                let mut x = Array2::zeros(rows, self.source_x.cols());
                let mut domains = Vec::with_capacity(rows);
                let mut weights = Vec::with_capacity(rows);
                let mut r = 0;
                for &s in &dom.source_rows {
                    copy_row(&mut x, r, &self.source_x, s);
                    domains.push(1.0);
                    weights.push(1.0);
                    r += 1;
                }
                for &pick in &dom.css_picks {
                    let row = sel.sets.css[pick].0;
                    copy_row(&mut x, r, &self.target_x, row);
                    domains.push(0.0);
                    weights.push(sel.w_d[row]);
                    r += 1;
                }
                for &pick in &dom.dss_picks {
                    let (row, w_d) = sel.sets.dss[pick];
                    copy_row(&mut x, r, &self.target_x, row);
                    domains.push(0.0);
                    weights.push(w_d);
                    r += 1;
                }
                for &row in &dom.random_target_rows {
                    copy_row(&mut x, r, &self.target_x, row);
                    domains.push(0.0);
                    weights.push(1.0);
                    r += 1;
                }
                let ramp = self.cfg.optimizer.adaptation_factor(self.t, self.total_iters);
                let (mut g, loss_nodes, binds) =
                    self.net.domain_pass(&x, domains, weights, ramp)?;
                for &node in &loss_nodes {
                    g.backward(node, self.cfg.alpha)?;
                }
                self.net.accumulate_grads(&g, &binds);

                let batch_losses: Vec<f64> =
                    loss_nodes.iter().map(|&n| g.scalar(n)).collect();
                for (acc, &l) in self.epoch_block_losses.iter_mut().zip(&batch_losses) {
                    *acc += l;
                }
                if self.cfg.lambda_update == LambdaCadence::PerIteration {
                    let eta = self.lambda_eta();
                    self.net.lambda.update(&batch_losses, eta)?;
                }
            }

            sgd_step(
                &mut self.net.params_mut(),
                &self.cfg.optimizer,
                self.t,
                self.total_iters,
            );
            self.t += 1;
        }
        if self.cfg.method.uses_domain_pass()
            && self.cfg.lambda_update == LambdaCadence::PerEpoch
        {
            let mean: Vec<f64> = self
                .epoch_block_losses
                .iter()
                .map(|&l| l / self.epoch_len as f64)
                .collect();
            let eta = self.lambda_eta();
            self.net.lambda.update(&mean, eta)?;
        }
        self.epoch_with_replacement = composer.sampled_with_replacement;
        self.epoch += 1;
        Ok(())
    }

    /// λ moves at the head rate: the current schedule value times the
    /// head multiplier.
    fn lambda_eta(&self) -> f64 {
        self.cfg.optimizer.lr_at(self.t, self.total_iters) * self.cfg.network.head_lr_multiplier
    }

    /// Measures everything for the epoch that just ran.
    pub fn epoch_metrics(&mut self, sel: &EpochSelection, started: Instant) -> Result<MetricsRecord> {
        let source_accuracy = evaluate(&self.net, self.source)?;
        let target_accuracy = evaluate(&self.net, self.target)?;
        self.last_source_acc = source_accuracy;

        let l_src = self.net.src_loss(&self.source_x, &self.source_y)?;
        let n_s = self.source_x.rows();
        let n_t = self.target_x.rows();
        let mut both = Array2::zeros(n_s + n_t, self.source_x.cols());
        for r in 0..n_s {
            copy_row(&mut both, r, &self.source_x, r);
        }
        for r in 0..n_t {
            copy_row(&mut both, n_s + r, &self.target_x, r);
        }
        let mut domains = vec![1.0; n_s];
        domains.extend(std::iter::repeat(0.0).take(n_t));
        let unit = vec![1.0; n_s + n_t];
        let (l_ca, per_block) = self.net.ca_loss(&both, &domains, &unit)?;

        let l_tar_c = tar_c_loss(&self.net, &self.target_x, &sel.sets.css)?;
        let records = confidence_records(&self.net, &self.target_x, 0);
        let l_tar_d = tar_d_loss(
            &self.net,
            &self.target_x,
            &records,
            &sel.sets.css,
            &sel.sets.dss,
            self.cfg.tar_d_multiplicity,
        )?;
        let total_loss = l_src + l_tar_c + self.cfg.alpha * (l_ca + l_tar_d);

        let h_divergence = if self.cfg.h_div_every > 0
            && (self.epoch % self.cfg.h_div_every == 0 || self.epoch == self.cfg.epochs)
        {
            let fs = self.net.features(&self.source_x);
            let ft = self.net.features(&self.target_x);
            Some(h_divergence_estimate(
                fs.last().expect("m >= 2 blocks"),
                ft.last().expect("m >= 2 blocks"),
                &self.cfg.probe,
                self.epoch as u64,
            )?)
        } else {
            None
        };

        Ok(MetricsRecord {
            epoch: self.epoch,
            stage: if self.epoch > self.stage1_epochs { 2 } else { 1 },
            source_accuracy,
            target_accuracy,
            l_src,
            l_ca,
            l_tar_c,
            l_tar_d,
            total_loss,
            lambda: self.net.lambda.values.clone(),
            per_block_domain_losses: per_block,
            r_c: self.schedule.r_c,
            r_d: self.schedule.r_d,
            s_c_size: sel.sets.css.len(),
            s_d_size: sel.sets.dss.len(),
            h_divergence,
            sampled_with_replacement: self.epoch_with_replacement,
            wall_time_s: started.elapsed().as_secs_f64(),
            two_stream: None,
        })
    }

    pub fn shuffle_state(&self) -> RngState {
        RngState::capture(self.stream_seed, &self.shuffle_rng)
    }

    pub fn label_reads(&self) -> u64 {
        self.target.label_read_count()
    }
}

fn copy_row(dst: &mut Array2, dst_row: usize, src: &Array2, src_row: usize) {
    for c in 0..src.cols() {
        dst.set(dst_row, c, src.get(src_row, c));
    }
}

/// Trains one network. Two-stream runs go through
/// [`crate::two_stream::train_two_stream`] instead.
pub fn train(cfg: &TrainConfig, source: &Dataset, target: &Dataset) -> Result<RunResult> {
    if cfg.method == Method::TsSpcan {
        return Err(CoreError::InvalidConfig(
            "ts-spcan trains two streams; call train_two_stream with paired views".into(),
        ));
    }
    let mut state = StreamState::new(cfg, source, target, cfg.seed)?;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let started = Instant::now();
        let sel = state.next_selection();
        state.run_epoch(&sel)?;
        metrics.push(state.epoch_metrics(&sel, started)?);
    }
    let summary = summarize(cfg.method, cfg.seed, &metrics, |m| m.target_accuracy);
    let shuffle_state = state.shuffle_state();
    let label_reads = state.label_reads();
    Ok(RunResult {
        summary,
        network: state.net,
        shuffle_state,
        label_reads,
        metrics,
    })
}

/// Builds the run summary from per-epoch records.
pub(crate) fn summarize(
    method: Method,
    seed: u64,
    metrics: &[MetricsRecord],
    accuracy: impl Fn(&MetricsRecord) -> f64,
) -> RunSummary {
    let best = metrics.iter().map(&accuracy).fold(f64::NEG_INFINITY, f64::max);
    let last = metrics.last().map(&accuracy).unwrap_or(f64::NAN);
    RunSummary {
        method,
        seed,
        epochs: metrics.len(),
        best_target_accuracy: best,
        last_target_accuracy: last,
    }
}

/// Fraction of rows where both networks' class predictions agree; a cheap
/// view-consistency signal for paired runs.
pub fn agreement(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let hits = a.iter().zip(b).filter(|(x, y)| x == y).count();
    hits as f64 / a.len() as f64
}
