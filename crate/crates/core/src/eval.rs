//! Test-set evaluation: tiling, per-patch MSE and sweep reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentSpec;
use crate::classic::FilterSpec;
use crate::config::{represent, ReconJobConfig, Representation};
use crate::error::{Error, Result};
use crate::io::{read_volume, write_tensor, Tensor};
use crate::phantom::{make_phantom, PhantomSpec};
use crate::projector::project;
use crate::rng::{derive_seed, domain};
use crate::stretch::Direction;
use crate::tensor::Volume;

/// Patch corners covering a volume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub volume_dims: [usize; 3],
    pub patch_dims: [usize; 3],
    pub corners: Vec<[usize; 3]>,
}

impl TilingPlan {
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    /// Number of voxels shared by the last two patches along `axis`.
    pub fn overlap(&self, axis: usize) -> usize {
        axis_overlap(self.volume_dims[axis], self.patch_dims[axis])
    }
}

/// `{0, P, 2P, ...}` while the patch fits, plus `L - P` if not already present.
pub fn axis_corners(len: usize, patch: usize) -> Vec<usize> {
    let mut c: Vec<usize> = (0..).map(|k| k * patch).take_while(|&s| s + patch <= len).collect();
    if c.last().is_some_and(|&s| s + patch < len) {
        c.push(len - patch);
    }
    c
}

fn axis_overlap(len: usize, patch: usize) -> usize {
    (len.div_ceil(patch) * patch).saturating_sub(len)
}

pub fn plan_tiling(volume_dims: [usize; 3], patch_dims: [usize; 3]) -> Result<TilingPlan> {
    if patch_dims.contains(&0) || patch_dims.iter().zip(&volume_dims).any(|(p, v)| p > v) {
        return Err(Error::InvalidSpec(format!("patch {patch_dims:?} larger than volume {volume_dims:?}")));
    }
    let axes: Vec<Vec<usize>> = (0..3).map(|a| axis_corners(volume_dims[a], patch_dims[a])).collect();
    let mut corners = Vec::with_capacity(axes.iter().map(Vec::len).product());
    for &z in &axes[0] {
        for &y in &axes[1] {
            for &x in &axes[2] {
                corners.push([z, y, x]);
            }
        }
    }
    Ok(TilingPlan { volume_dims, patch_dims, corners })
}

/// Mean squared difference with `f64` accumulation.
pub fn mse(a: &Volume, b: &Volume) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::dims(&a.dims(), &b.dims()));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Reconstruction path evaluated by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReconPath {
    #[serde(rename = "fbp")]
    Fbp,
    #[serde(rename = "bp")]
    Bp,
    #[serde(rename = "sinogram+unet")]
    SinogramUnet,
    #[serde(rename = "stretch+unet")]
    StretchUnet,
    #[serde(rename = "bp+unet")]
    BpUnet,
    #[serde(rename = "fbp+unet")]
    FbpUnet,
    /// Returns the ground truth itself; checks the plumbing.
    #[serde(rename = "oracle")]
    Oracle,
}

impl ReconPath {
    pub fn label(self) -> &'static str {
        match self {
            ReconPath::Fbp => "fbp",
            ReconPath::Bp => "bp",
            ReconPath::SinogramUnet => "sinogram+unet",
            ReconPath::StretchUnet => "stretch+unet",
            ReconPath::BpUnet => "bp+unet",
            ReconPath::FbpUnet => "fbp+unet",
            ReconPath::Oracle => "oracle",
        }
    }

    pub fn representation(self) -> Option<Representation> {
        match self {
            ReconPath::Fbp | ReconPath::FbpUnet => Some(Representation::Fbp),
            ReconPath::Bp | ReconPath::BpUnet => Some(Representation::Bp),
            ReconPath::SinogramUnet => Some(Representation::Sinogram),
            ReconPath::StretchUnet => Some(Representation::Stretch),
            ReconPath::Oracle => None,
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ReconPath::SinogramUnet | ReconPath::StretchUnet | ReconPath::BpUnet | ReconPath::FbpUnet)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeSource {
    File(PathBuf),
    Phantom(PhantomSpec),
}

/// External inference command, invoked as
/// `<command...> infer --in <x.stto> --out <y.stto> --ckpt <model>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub command: Vec<String>,
    /// Checkpoint per representation name (`sinogram`, `stretch`, `bp`, `fbp`).
    pub models: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub volume: VolumeSource,
    pub patch_dims: [usize; 3],
    #[serde(default = "crate::config::default_angles")]
    pub angles_deg: Vec<f64>,
    pub paths: Vec<ReconPath>,
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_misalign")]
    pub misalignments: Vec<usize>,
    #[serde(default = "default_shift_range")]
    pub shift_range: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub path_weighting: bool,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainer: Option<TrainerConfig>,
}

fn default_misalign() -> Vec<usize> {
    vec![0]
}

fn default_shift_range() -> u32 {
    3
}

fn default_true() -> bool {
    true
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json { path: PathBuf::from("<sweep config>"), source: e })
    }

    fn model_for(&self, path: ReconPath) -> Result<(&TrainerConfig, &Path)> {
        let rep = path.representation().expect("neural paths have a representation");
        let trainer = self
            .trainer
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec(format!("path {} needs a `trainer` section", path.label())))?;
        let model = trainer
            .models
            .get(rep.as_str())
            .ok_or_else(|| Error::MissingModel(PathBuf::from(format!("<no model configured for {}>", rep.as_str()))))?;
        Ok((trainer, model.as_path()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub path: String,
    pub noise: f64,
    pub n_misaligned: usize,
    pub per_patch_mse: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

impl MetricsRow {
    pub fn new(path: impl Into<String>, noise: f64, n_misaligned: usize, per_patch_mse: Vec<f64>) -> Self {
        let (mean, stderr) = mean_stderr(&per_patch_mse);
        Self { path: path.into(), noise, n_misaligned, per_patch_mse, mean, stderr }
    }
}

/// Arithmetic mean and `sample std / √n` (zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut sorted = values.to_vec();
    // summation order fixed so reports do not depend on patch order
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub code_version: String,
    pub created_unix: u64,
    pub config: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub metadata: ReportMetadata,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,noise,n_misaligned,n_patches,mse_mean,mse_stderr\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.path, r.noise, r.n_misaligned, r.per_patch_mse.len(), r.mean, r.stderr);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn row(&self, path: &str, noise: f64, n_misaligned: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.path == path && r.noise == noise && r.n_misaligned == n_misaligned)
    }
}

pub fn load_volume(source: &VolumeSource) -> Result<Volume> {
    match source {
        VolumeSource::File(p) => read_volume(p),
        VolumeSource::Phantom(spec) => make_phantom(spec),
    }
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<MetricsReport> {
    let volume = load_volume(&cfg.volume)?;
    run_sweep_on(&volume, cfg)
}

/// Evaluates every `(noise, misalignment, path)` cell over all tiles of `volume`.
pub fn run_sweep_on(volume: &Volume, cfg: &SweepConfig) -> Result<MetricsReport> {
    let plan = plan_tiling(volume.dims(), cfg.patch_dims)?;
    for &p in &cfg.paths {
        if p.is_neural() {
            let (_, model) = cfg.model_for(p)?;
            if !model.exists() {
                return Err(Error::MissingModel(model.to_path_buf()));
            }
        }
    }
    let base = ReconJobConfig::new(cfg.angles_deg.clone(), cfg.patch_dims, Representation::Sinogram)?;
    let mut base = base.with_direction(cfg.direction);
    base.projector.path_weighting = cfg.path_weighting;
    base.filter = cfg.filter;

    let workdir = if cfg.paths.iter().any(|p| p.is_neural()) {
        Some(tempdir()?)
    } else {
        None
    };

    // truth[patch] is shared by every cell
    let truths: Vec<Volume> = plan
        .corners
        .par_iter()
        .map(|&c| volume.crop(c, cfg.patch_dims)?.normalized())
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &noise in &cfg.noise_levels {
        for &n_mis in &cfg.misalignments {
            let per_patch: Vec<Vec<f64>> = truths
                .par_iter()
                .enumerate()
                .map(|(idx, truth)| {
                    let mut job = base.clone();
                    job.augment = AugmentSpec {
                        noise_ratio: noise,
                        n_misaligned: n_mis,
                        shift_range: cfg.shift_range,
                        rng_seed: derive_seed(cfg.seed, domain::SWEEP, idx as u64),
                        ..AugmentSpec::default()
                    };
                    job.seed = cfg.seed;
                    evaluate_patch(truth, &job, cfg, workdir.as_deref(), idx)
                        .map_err(|e| Error::Patch { index: idx, source: Box::new(e) })
                })
                .collect::<Result<_>>()?;
            for (pi, &path) in cfg.paths.iter().enumerate() {
                let mses = per_patch.iter().map(|m| m[pi]).collect();
                rows.push(MetricsRow::new(path.label(), noise, n_mis, mses));
            }
        }
    }
    if let Some(dir) = workdir {
        let _ = std::fs::remove_dir_all(dir);
    }
    let created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(MetricsReport {
        rows,
        metadata: ReportMetadata {
            seed: cfg.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix,
            config: cfg.clone(),
        },
    })
}

/// MSE of every configured path on one patch.
fn evaluate_patch(
    truth: &Volume,
    job: &ReconJobConfig,
    cfg: &SweepConfig,
    workdir: Option<&Path>,
    idx: usize,
) -> Result<Vec<f64>> {
    let raw = project(truth, &job.projector)?;
    let (augmented, _) = crate::augment::augment(&raw, &job.augment)?;
    let mut cache: BTreeMap<Representation, Tensor> = BTreeMap::new();
    let mut out = Vec::with_capacity(cfg.paths.len());
    for &path in &cfg.paths {
        let recon = match path.representation() {
            None => truth.clone(),
            Some(rep) => {
                if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(rep) {
                    let mut j = job.clone();
                    j.representation = rep;
                    e.insert(represent(&augmented, &j)?);
                }
                let input = &cache[&rep];
                if path.is_neural() {
                    let (trainer, model) = cfg.model_for(path)?;
                    let tag = format!("{}_{}_{}_{}", idx, rep.as_str(), job.augment.noise_ratio, job.augment.n_misaligned);
                    infer_external(trainer, model, input, workdir.expect("workdir exists for neural paths"), &tag)?
                } else {
                    input.clone().into_volume()
                }
            }
        };
        out.push(mse(truth, &recon)?);
    }
    Ok(out)
}

fn infer_external(trainer: &TrainerConfig, model: &Path, input: &Tensor, dir: &Path, tag: &str) -> Result<Volume> {
    let (program, args) = trainer
        .command
        .split_first()
        .ok_or_else(|| Error::InvalidSpec("trainer.command is empty".into()))?;
    let in_path = dir.join(format!("in_{tag}.stto"));
    let out_path = dir.join(format!("out_{tag}.stto"));
    write_tensor(input, &in_path)?;
    let status = Command::new(program)
        .args(args)
        .arg("infer")
        .arg("--in")
        .arg(&in_path)
        .arg("--out")
        .arg(&out_path)
        .arg("--ckpt")
        .arg(model)
        .output()
        .map_err(|e| Error::External(format!("{program}: {e}")))?;
    if !status.status.success() {
        return Err(Error::External(format!(
            "{program} exited with {}: {}",
            status.status,
            String::from_utf8_lossy(&status.stderr).trim()
        )));
    }
    read_volume(&out_path)
}

fn tempdir() -> Result<PathBuf> {
    let base = std::env::temp_dir();
    let unique = format!(
        "stretchtomo-sweep-{}-{}",
        std::process::id(),
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0)
    );
    let dir = base.join(unique);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}
