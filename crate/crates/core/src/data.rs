//! Synthetic domain-shift datasets with target-label quarantine.
//!
//! Two 2-D generators (interleaved moons, Gaussian blobs) produce the
//! source domain; the target domain is a fresh draw from the same
//! distribution pushed through a rotation and translation. Target labels
//! are generated too, but they go straight into a quarantine vault:
//! training-facing accessors never see them, and every read of the vault is
//! counted so a run can prove that only evaluation touched them.
//!
//! On disk a dataset is a plain text table with header
//! `id,domain,label,view,f0..f{d-1}`; floats carry 17 significant digits so
//! a save/load round trip is exact. Quarantined labels show as `-` in the
//! main file and live in a `<name>.labels.csv` sidecar (`id,label`) that
//! the loader feeds back into the vault.

use crate::array::Array2;
use crate::error::CoreError;
use crate::rng::{stream, StreamKind};
use crate::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Base point-cloud family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Two interleaved half-circles; exactly two classes, two dimensions.
    Moons,
    /// One isotropic Gaussian per class, centers on a circle.
    Blobs,
}

/// Full description of a source/target pair; a dataset is reproducible
/// from this struct alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSpec {
    pub generator: GeneratorKind,
    pub classes: usize,
    /// Feature dimension; rotation is only defined for 2-D.
    pub dim: usize,
    pub n_source: usize,
    pub n_target: usize,
    /// Target rotation in radians, applied in the first two dimensions.
    pub rotation: f64,
    /// Target translation; length must equal `dim`.
    pub translation: Vec<f64>,
    /// Standard deviation of the generator's Gaussian noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            generator: GeneratorKind::Moons,
            classes: 2,
            dim: 2,
            n_source: 500,
            n_target: 500,
            rotation: 0.0,
            translation: vec![0.0, 0.0],
            noise_sigma: 0.15,
            seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::InvalidConfig(msg));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.generator == GeneratorKind::Moons && self.classes != 2 {
            return bad("the moons generator has exactly 2 classes".into());
        }
        if self.dim < 2 {
            return bad(format!("need at least 2 dimensions, got {}", self.dim));
        }
        if self.generator == GeneratorKind::Moons && self.dim != 2 {
            return bad("the moons generator is 2-D only".into());
        }
        if self.rotation != 0.0 && self.dim != 2 {
            return bad("rotation is only defined for 2-D data".into());
        }
        if self.n_source < self.classes || self.n_target < self.classes {
            return bad(format!(
                "domain sizes ({}, {}) must be at least the class count {}",
                self.n_source, self.n_target, self.classes
            ));
        }
        if self.translation.len() != self.dim {
            return bad(format!(
                "translation has {} entries for {} dimensions",
                self.translation.len(),
                self.dim
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma must be non-negative, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

/// View projections for paired two-view datasets: each view is a fixed
/// random rotation+scale of the shared latent sample plus independent
/// Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairedSpec {
    pub view_noise_sigma: f64,
    /// Use identity maps instead of random ones (views then differ only by
    /// their noise; with zero noise they are equal).
    pub identity_maps: bool,
    pub projection_seed: u64,
}

impl Default for PairedSpec {
    fn default() -> Self {
        PairedSpec {
            view_noise_sigma: 0.2,
            identity_maps: false,
            projection_seed: 0,
        }
    }
}

/// One observation. `label` is `None` for unlabeled *and* for quarantined
/// samples; quarantined truth lives in the dataset's vault.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: Option<u32>,
    /// 1 = source, 0 = target.
    pub domain: u8,
    pub view: Option<char>,
}

#[derive(Debug, Clone, Default)]
struct LabelVault {
    labels: Vec<Option<u32>>,
    eval_reads: Cell<u64>,
}

/// A loaded or generated dataset.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub feature_dim: usize,
    pub samples: Vec<Sample>,
    vault: Option<LabelVault>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when this dataset's labels are evaluation-only.
    pub fn quarantined(&self) -> bool {
        self.vault.is_some()
    }

    /// How many times the vault has been opened for evaluation.
    pub fn label_read_count(&self) -> u64 {
        self.vault.as_ref().map_or(0, |v| v.eval_reads.get())
    }

    /// Label as training is allowed to see it. Quarantined datasets refuse
    /// outright — this is the leakage guard's hard failure.
    pub fn training_label(&self, idx: usize) -> Result<Option<u32>> {
        if self.vault.is_some() {
            return Err(CoreError::LabelLeakage);
        }
        Ok(self.samples[idx].label)
    }

    /// Per-sample labels for evaluation. Opening the vault is counted.
    pub fn eval_labels(&self) -> Result<Vec<Option<u32>>> {
        match &self.vault {
            Some(vault) => {
                vault.eval_reads.set(vault.eval_reads.get() + 1);
                Ok(vault.labels.clone())
            }
            None => Ok(self.samples.iter().map(|s| s.label).collect()),
        }
    }

    /// Feature matrix with one row per sample.
    pub fn feature_matrix(&self) -> Array2 {
        let mut m = Array2::zeros(self.len(), self.feature_dim);
        for (r, s) in self.samples.iter().enumerate() {
            for (c, &v) in s.features.iter().enumerate() {
                m.set(r, c, v);
            }
        }
        m
    }

    /// Largest visible-or-vaulted label plus one, if any label exists.
    pub fn num_classes_hint(&self) -> Option<usize> {
        let visible = self.samples.iter().filter_map(|s| s.label).max();
        let vaulted = self
            .vault
            .as_ref()
            .and_then(|v| v.labels.iter().flatten().copied().max());
        visible.iter().chain(vaulted.iter()).max().map(|&m| m as usize + 1)
    }

    fn quarantine(mut samples: Vec<Sample>, feature_dim: usize) -> Dataset {
        let labels = samples.iter().map(|s| s.label).collect();
        for s in &mut samples {
            s.label = None;
        }
        Dataset {
            feature_dim,
            samples,
            vault: Some(LabelVault {
                labels,
                eval_reads: Cell::new(0),
            }),
        }
    }
}

// ── Generation ───────────────────────────────────────────────────────────

fn moons_point(class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = rng.gen_range(0.0..PI);
    match class {
        0 => vec![t.cos(), t.sin()],
        _ => vec![1.0 - t.cos(), 0.5 - t.sin()],
    }
}

fn blobs_point(class: usize, classes: usize, dim: usize) -> Vec<f64> {
    let angle = 2.0 * PI * class as f64 / classes as f64;
    let mut center = vec![0.0; dim];
    center[0] = 3.0 * angle.cos();
    center[1] = 3.0 * angle.sin();
    center
}

fn draw_domain(
    spec: &ShiftSpec,
    n: usize,
    id_base: u64,
    domain: u8,
    rng: &mut ChaCha8Rng,
) -> Vec<Sample> {
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % spec.classes;
        let mut x = match spec.generator {
            GeneratorKind::Moons => moons_point(class, rng),
            GeneratorKind::Blobs => blobs_point(class, spec.classes, spec.dim),
        };
        if spec.noise_sigma > 0.0 {
            for v in &mut x {
                *v += noise.sample(rng);
            }
        }
        if domain == 0 {
            if spec.rotation != 0.0 {
                let (s, c) = spec.rotation.sin_cos();
                let (x0, x1) = (x[0], x[1]);
                x[0] = c * x0 - s * x1;
                x[1] = s * x0 + c * x1;
            }
            for (v, &t) in x.iter_mut().zip(&spec.translation) {
                *v += t;
            }
        }
        samples.push(Sample {
            id: id_base + i as u64,
            features: x,
            label: Some(class as u32),
            domain,
            view: None,
        });
    }
    samples
}

/// Generates the labeled source domain and the quarantined target domain.
pub fn generate(spec: &ShiftSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut src_rng = stream(spec.seed, StreamKind::DataSource, 0);
    let mut tgt_rng = stream(spec.seed, StreamKind::DataTarget, 0);
    let source_samples = draw_domain(spec, spec.n_source, 0, 1, &mut src_rng);
    let target_samples = draw_domain(spec, spec.n_target, spec.n_source as u64, 0, &mut tgt_rng);
    let source = Dataset {
        feature_dim: spec.dim,
        samples: source_samples,
        vault: None,
    };
    let target = Dataset::quarantine(target_samples, spec.dim);
    Ok((source, target))
}

/// Two aligned views of one underlying dataset.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    pub view_a: Dataset,
    pub view_b: Dataset,
}

impl PairedDataset {
    /// Checks that the views describe the same samples.
    pub fn validate(&self) -> Result<()> {
        if self.view_a.len() != self.view_b.len() {
            return Err(CoreError::ViewMismatch(format!(
                "view sizes differ: {} vs {}",
                self.view_a.len(),
                self.view_b.len()
            )));
        }
        for (a, b) in self.view_a.samples.iter().zip(&self.view_b.samples) {
            if a.id != b.id || a.domain != b.domain || a.label != b.label {
                return Err(CoreError::ViewMismatch(format!("sample id {} disagrees", a.id)));
            }
        }
        Ok(())
    }
}

fn view_map(identity: bool, rng: &mut ChaCha8Rng) -> [[f64; 2]; 2] {
    if identity {
        return [[1.0, 0.0], [0.0, 1.0]];
    }
    let angle = rng.gen_range(0.0..2.0 * PI);
    let sx = rng.gen_range(0.7..1.3);
    let sy = rng.gen_range(0.7..1.3);
    let (s, c) = angle.sin_cos();
    [[c * sx, -s * sy], [s * sx, c * sy]]
}

fn apply_view(
    base: &Dataset,
    map: &[[f64; 2]; 2],
    tag: char,
    sigma: f64,
    rng: &mut ChaCha8Rng,
    quarantined: bool,
) -> Dataset {
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let labels: Vec<Option<u32>> = if quarantined {
        base.vault.as_ref().expect("quarantined base").labels.clone()
    } else {
        base.samples.iter().map(|s| s.label).collect()
    };
    let samples: Vec<Sample> = base
        .samples
        .iter()
        .zip(&labels)
        .map(|(s, &label)| {
            let x = &s.features;
            let mut f = vec![
                map[0][0] * x[0] + map[0][1] * x[1],
                map[1][0] * x[0] + map[1][1] * x[1],
            ];
            if sigma > 0.0 {
                for v in &mut f {
                    *v += noise.sample(rng);
                }
            }
            Sample {
                id: s.id,
                features: f,
                label,
                domain: s.domain,
                view: Some(tag),
            }
        })
        .collect();
    if quarantined {
        Dataset::quarantine(samples, 2)
    } else {
        Dataset {
            feature_dim: 2,
            samples,
            vault: None,
        }
    }
}

/// Generates two views per domain from one latent draw per sample.
pub fn generate_paired(spec: &ShiftSpec, paired: &PairedSpec) -> Result<(PairedDataset, PairedDataset)> {
    if spec.dim != 2 {
        return Err(CoreError::InvalidConfig("paired views need 2-D latents".into()));
    }
    let (latent_source, latent_target) = generate(spec)?;
    let mut proj_rng = stream(paired.projection_seed, StreamKind::ViewProject, 0);
    let map_a = view_map(paired.identity_maps, &mut proj_rng);
    let map_b = view_map(paired.identity_maps, &mut proj_rng);
    let mut noise_a = stream(paired.projection_seed, StreamKind::ViewProject, 1);
    let mut noise_b = stream(paired.projection_seed, StreamKind::ViewProject, 2);
    let sigma = paired.view_noise_sigma;
    let source = PairedDataset {
        view_a: apply_view(&latent_source, &map_a, 'A', sigma, &mut noise_a, false),
        view_b: apply_view(&latent_source, &map_b, 'B', sigma, &mut noise_b, false),
    };
    let target = PairedDataset {
        view_a: apply_view(&latent_target, &map_a, 'A', sigma, &mut noise_a, true),
        view_b: apply_view(&latent_target, &map_b, 'B', sigma, &mut noise_b, true),
    };
    Ok((source, target))
}

// ── File format ──────────────────────────────────────────────────────────

fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.labels.csv"))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `ds` to `path`; quarantined labels are written as `-` in the main
/// table and in full to the `<stem>.labels.csv` sidecar.
pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("id,domain,label,view");
    for c in 0..ds.feature_dim {
        let _ = write!(out, ",f{c}");
    }
    out.push('\n');
    for s in &ds.samples {
        let label = match s.label {
            Some(l) => l.to_string(),
            None => "-".to_string(),
        };
        let view = s.view.map_or_else(|| "-".to_string(), |v| v.to_string());
        let _ = write!(out, "{},{},{},{}", s.id, s.domain, label, view);
        for &f in &s.features {
            let _ = write!(out, ",{}", fmt_f64(f));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CoreError::io(path, e))?;

    if let Some(vault) = &ds.vault {
        let mut side = String::from("id,label\n");
        for (s, label) in ds.samples.iter().zip(&vault.labels) {
            let label = label.map_or_else(|| "-".to_string(), |l| l.to_string());
            let _ = writeln!(side, "{},{label}", s.id);
        }
        let sp = sidecar_path(path);
        std::fs::write(&sp, side).map_err(|e| CoreError::io(&sp, e))?;
    }
    Ok(())
}

fn parse_label(tok: &str, path: &Path, line: usize) -> Result<Option<u32>> {
    if tok == "-" {
        return Ok(None);
    }
    tok.parse::<u32>().map(Some).map_err(|_| CoreError::Parse {
        path: path.display().to_string(),
        line,
        detail: format!("bad label {tok:?}"),
    })
}

/// Reads a dataset written by [`save`]; a labels sidecar, if present,
/// restocks the quarantine vault.
pub fn load(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let parse_err = |line: usize, detail: String| CoreError::Parse {
        path: path.display().to_string(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(parse_err(1, "empty file".into()));
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[..4] != ["id", "domain", "label", "view"] {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let dim = cols.len() - 4;
    for (c, name) in cols[4..].iter().enumerate() {
        if *name != format!("f{c}") {
            return Err(parse_err(1, format!("unexpected feature column {name:?}")));
        }
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split(',').collect();
        if tok.len() != 4 + dim {
            return Err(parse_err(lineno, format!("{} fields, expected {}", tok.len(), 4 + dim)));
        }
        let id: u64 = tok[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad id {:?}", tok[0])))?;
        let domain: u8 = match tok[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(lineno, format!("bad domain {other:?}"))),
        };
        let label = parse_label(tok[2], path, lineno)?;
        let view = match tok[3] {
            "-" => None,
            v if v.len() == 1 => v.chars().next(),
            other => return Err(parse_err(lineno, format!("bad view tag {other:?}"))),
        };
        let mut features = Vec::with_capacity(dim);
        for t in &tok[4..] {
            let v: f64 = t
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature {t:?}")))?;
            features.push(v);
        }
        samples.push(Sample {
            id,
            features,
            label,
            domain,
            view,
        });
    }
    if samples.is_empty() {
        return Err(parse_err(1, "no samples".into()));
    }

    let sp = sidecar_path(path);
    if sp.exists() {
        let side = std::fs::read_to_string(&sp).map_err(|e| CoreError::io(&sp, e))?;
        let sided = |line: usize, detail: String| CoreError::Parse {
            path: sp.display().to_string(),
            line,
            detail,
        };
        let mut labels = std::collections::HashMap::new();
        for (idx, line) in side.lines().enumerate() {
            if idx == 0 {
                if line != "id,label" {
                    return Err(sided(1, format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (id_tok, label_tok) = line
                .split_once(',')
                .ok_or_else(|| sided(idx + 1, "missing comma".into()))?;
            let id: u64 = id_tok
                .parse()
                .map_err(|_| sided(idx + 1, format!("bad id {id_tok:?}")))?;
            labels.insert(id, parse_label(label_tok, &sp, idx + 1)?);
        }
        let vault_labels: Vec<Option<u32>> = samples
            .iter()
            .map(|s| labels.get(&s.id).copied().flatten())
            .collect();
        return Ok(Dataset {
            feature_dim: dim,
            samples,
            vault: Some(LabelVault {
                labels: vault_labels,
                eval_reads: Cell::new(0),
            }),
        });
    }

    Ok(Dataset {
        feature_dim: dim,
        samples,
        vault: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ShiftSpec {
        ShiftSpec {
            rotation: 30f64.to_radians(),
            n_source: 40,
            n_target: 44,
            seed: 7,
            ..ShiftSpec::default()
        }
    }

    #[test]
    fn generation_is_reproducible_and_balanced() {
        let (s1, t1) = generate(&spec()).unwrap();
        let (s2, t2) = generate(&spec()).unwrap();
        assert_eq!(s1.samples, s2.samples);
        assert_eq!(t1.samples, t2.samples);
        let zeros = s1.samples.iter().filter(|s| s.label == Some(0)).count();
        assert_eq!(zeros, 20);
    }

    #[test]
    fn target_labels_are_quarantined() {
        let (source, target) = generate(&spec()).unwrap();
        assert!(!source.quarantined());
        assert!(target.quarantined());
        assert!(target.samples.iter().all(|s| s.label.is_none()));
        assert!(matches!(target.training_label(0), Err(CoreError::LabelLeakage)));
        assert_eq!(target.label_read_count(), 0);
        let labels = target.eval_labels().unwrap();
        assert_eq!(target.label_read_count(), 1);
        assert!(labels.iter().all(Option::is_some));
    }

    #[test]
    fn rotation_only_for_two_dimensions() {
        let bad = ShiftSpec {
            generator: GeneratorKind::Blobs,
            dim: 3,
            translation: vec![0.0; 3],
            rotation: 0.3,
            ..ShiftSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn save_load_round_trip_is_exact_and_byte_stable() {
        let (source, target) = generate(&spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("source.csv");
        let tp = dir.path().join("target.csv");
        save(&source, &sp).unwrap();
        save(&target, &tp).unwrap();

        let source2 = load(&sp).unwrap();
        let target2 = load(&tp).unwrap();
        assert_eq!(source.samples, source2.samples);
        assert_eq!(target.samples, target2.samples);
        assert_eq!(
            target.eval_labels().unwrap(),
            target2.eval_labels().unwrap()
        );

        let bytes1 = std::fs::read(&tp).unwrap();
        save(&target2, &tp).unwrap();
        let bytes2 = std::fs::read(&tp).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn hand_written_table_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        std::fs::write(
            &path,
            "id,domain,label,view,f0,f1\n0,1,0,-,0.5,1.25\n1,1,1,-,-2.0,0.0\n2,0,-,-,3.0,4.5\n",
        )
        .unwrap();
        let ds = load(&path).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.samples[0].features, vec![0.5, 1.25]);
        assert_eq!(ds.samples[2].label, None);
        assert!(!ds.quarantined());
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,domain,label,view,f0,f1\n0,1,0,-,0.5\n").unwrap();
        match load(&path) {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load(&path), Err(CoreError::Parse { .. })));
    }

    #[test]
    fn paired_views_share_ids_and_identity_maps_collapse() {
        let paired = PairedSpec {
            view_noise_sigma: 0.0,
            identity_maps: true,
            projection_seed: 3,
        };
        let (src, tgt) = generate_paired(&spec(), &paired).unwrap();
        src.validate().unwrap();
        tgt.validate().unwrap();
        for (a, b) in src.view_a.samples.iter().zip(&src.view_b.samples) {
            assert_eq!(a.features, b.features);
        }
        for (a, b) in tgt.view_a.samples.iter().zip(&tgt.view_b.samples) {
            assert_eq!(a.features, b.features);
        }
        assert_eq!(src.view_a.samples[0].view, Some('A'));
        assert_eq!(src.view_b.samples[0].view, Some('B'));
    }

    #[test]
    fn random_views_differ_but_stay_aligned() {
        let paired = PairedSpec {
            view_noise_sigma: 0.1,
            identity_maps: false,
            projection_seed: 5,
        };
        let (src, _) = generate_paired(&spec(), &paired).unwrap();
        src.validate().unwrap();
        let a = &src.view_a.samples[0].features;
        let b = &src.view_b.samples[0].features;
        assert_ne!(a, b);
    }
}
