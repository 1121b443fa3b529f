//! Synthetic ground-truth volumes and training-patch sampling.
//!
//! The `cells` style partitions space into Voronoi cells with dark membranes
//! between them, which is the structure reconstructions tend to wash out.
//! The `blobs` style is a sum of smooth anisotropic Gaussians.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, stream_rng};
use crate::tensor::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomStyle {
    Blobs,
    #[default]
    Cells,
}

impl std::str::FromStr for PhantomStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(PhantomStyle::Blobs),
            "cells" => Ok(PhantomStyle::Cells),
            other => Err(Error::InvalidSpec(format!("unknown phantom style `{other}` (blobs|cells)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    #[serde(default)]
    pub style: PhantomStyle,
    /// Voronoi cells for `cells`, Gaussian blobs for `blobs`.
    pub cell_count: usize,
    /// Full membrane thickness in voxels.
    #[serde(default = "default_membrane")]
    pub membrane_width_px: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_membrane() -> f64 {
    1.5
}

impl PhantomSpec {
    pub fn cells(dims: [usize; 3], cell_count: usize, rng_seed: u64) -> Self {
        Self { dims, style: PhantomStyle::Cells, cell_count, membrane_width_px: default_membrane(), rng_seed }
    }

    pub fn blobs(dims: [usize; 3], count: usize, rng_seed: u64) -> Self {
        Self { dims, style: PhantomStyle::Blobs, cell_count: count, membrane_width_px: default_membrane(), rng_seed }
    }

    fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidSpec(format!("phantom dims must be positive, got {:?}", self.dims)));
        }
        if self.cell_count == 0 {
            return Err(Error::InvalidSpec("cell_count must be >= 1".into()));
        }
        if self.membrane_width_px.is_nan() || self.membrane_width_px <= 0.0 {
            return Err(Error::InvalidSpec("membrane_width_px must be > 0".into()));
        }
        Ok(())
    }
}

/// Normalized (zero-mean, unit-variance) phantom.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Volume> {
    spec.validate()?;
    let raw = match spec.style {
        PhantomStyle::Cells => cell_field(spec),
        PhantomStyle::Blobs => blob_field(spec.dims, spec.cell_count, spec.rng_seed, 0.0),
    };
    raw.normalized()
}

/// Low-frequency cosine texture shared by both styles.
struct Texture {
    waves: Vec<([f64; 3], f64, f64)>,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        let waves = (0..4)
            .map(|_| {
                let wavelength = rng.random_range(16.0..48.0);
                let mut dir = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let norm = dir.iter().map(|d: &f64| d * d).sum::<f64>().sqrt().max(1e-6);
                let k = std::f64::consts::TAU / wavelength / norm;
                dir.iter_mut().for_each(|d| *d *= k);
                (dir, rng.random_range(0.0..std::f64::consts::TAU), amplitude)
            })
            .collect();
        Self { waves }
    }

    fn at(&self, p: [f64; 3]) -> f64 {
        self.waves
            .iter()
            .map(|(k, phase, a)| a * (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).cos())
            .sum()
    }
}

fn cell_field(spec: &PhantomSpec) -> Volume {
    let [d, h, w] = spec.dims;
    let mut rng = stream_rng(spec.rng_seed, domain::PHANTOM, 0);
    let seeds: Vec<[f64; 3]> = (0..spec.cell_count)
        .map(|_| [rng.random_range(0.0..d as f64), rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64)])
        .collect();
    let base: Vec<f64> = (0..spec.cell_count).map(|_| rng.random_range(0.6..1.0)).collect();
    let texture = Texture::new(&mut rng, 0.04);
    let half_width = 0.5 * spec.membrane_width_px;

    let mut data = vec![0f32; d * h * w];
    data.par_chunks_mut(h * w).enumerate().for_each(|(z, plane)| {
        for y in 0..h {
            for x in 0..w {
                let p = [z as f64, y as f64, x as f64];
                let (mut a, mut da) = (0usize, f64::INFINITY);
                let (mut b, mut db) = (0usize, f64::INFINITY);
                for (c, s) in seeds.iter().enumerate() {
                    let dist = dist2(p, *s);
                    if dist < da {
                        (b, db) = (a, da);
                        (a, da) = (c, dist);
                    } else if dist < db {
                        (b, db) = (c, dist);
                    }
                }
                // distance to the bisector plane between the two nearest seeds
                let membrane = seeds.len() > 1 && {
                    let sep = dist2(seeds[a], seeds[b]).sqrt();
                    sep > 0.0 && (db - da) / (2.0 * sep) < half_width
                };
                plane[y * w + x] = if membrane { 0.0 } else { (base[a] + texture.at(p)) as f32 };
            }
        }
    });
    Volume::from_parts(spec.dims, data)
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Unnormalized sum of `count` Gaussian blobs on a zero background.
///
/// Blob centres keep `margin` (a fraction of each axis) away from the
/// faces; widths scale with the volume so blobs stay smooth.
pub fn blob_field(dims: [usize; 3], count: usize, seed: u64, margin: f64) -> Volume {
    let mut rng = stream_rng(seed, domain::PHANTOM, 1);
    let blobs: Vec<([f64; 3], [f64; 3], f64)> = (0..count)
        .map(|_| {
            let mut centre = [0.0; 3];
            let mut sigma = [0.0; 3];
            for a in 0..3 {
                let n = dims[a] as f64;
                let lo = margin * n;
                let hi = (n - 1.0 - margin * n).max(lo + 1e-9);
                centre[a] = rng.random_range(lo..hi);
                sigma[a] = (n * rng.random_range(0.06..0.14)).max(0.75);
            }
            (centre, sigma, rng.random_range(0.5..1.5))
        })
        .collect();
    let [d, h, w] = dims;
    let mut data = vec![0f32; d * h * w];
    data.par_chunks_mut(h * w).enumerate().for_each(|(z, plane)| {
        for y in 0..h {
            for x in 0..w {
                let p = [z as f64, y as f64, x as f64];
                let v: f64 = blobs
                    .iter()
                    .map(|(c, s, amp)| {
                        let e: f64 = (0..3).map(|a| ((p[a] - c[a]) / s[a]).powi(2)).sum();
                        amp * (-0.5 * e).exp()
                    })
                    .sum();
                plane[y * w + x] = v as f32;
            }
        }
    });
    Volume::from_parts(dims, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub patch_dims: [usize; 3],
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self { patch_dims: [32, 512, 512], rng_seed: 0 }
    }
}

fn check_patch(src: [usize; 3], patch: [usize; 3]) -> Result<()> {
    if patch.contains(&0) || patch.iter().zip(&src).any(|(p, s)| p > s) {
        return Err(Error::InvalidSpec(format!("patch {patch:?} does not fit in volume {src:?}")));
    }
    Ok(())
}

/// Stateful sampler drawing successive uniformly placed patches.
pub struct PatchSampler {
    rng: ChaCha8Rng,
    patch: [usize; 3],
}

impl PatchSampler {
    pub fn new(spec: &PatchSpec) -> Self {
        Self { rng: stream_rng(spec.rng_seed, domain::PATCH, 0), patch: spec.patch_dims }
    }

    /// Uniform corner such that the patch fits inside `src`.
    pub fn draw_corner(&mut self, src: [usize; 3]) -> Result<[usize; 3]> {
        check_patch(src, self.patch)?;
        let mut c = [0; 3];
        for a in 0..3 {
            c[a] = self.rng.random_range(0..=src[a] - self.patch[a]);
        }
        Ok(c)
    }

    pub fn next_patch(&mut self, v: &Volume) -> Result<Volume> {
        let corner = self.draw_corner(v.dims())?;
        v.crop(corner, self.patch)?.normalized()
    }
}

/// One normalized patch at a seeded uniform position.
pub fn sample_patch(v: &Volume, spec: &PatchSpec) -> Result<Volume> {
    PatchSampler::new(spec).next_patch(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Moments;

    #[test]
    fn single_cell_is_smooth_and_normalized() {
        let v = make_phantom(&PhantomSpec::cells([8, 32, 32], 1, 4)).unwrap();
        let m = Moments::of(v.data()).unwrap();
        assert!(m.mean.abs() < 1e-5 && (m.variance - 1.0).abs() < 1e-4);
        // no membranes: the raw field never drops to the membrane level
        let raw = cell_field(&PhantomSpec::cells([8, 32, 32], 1, 4));
        assert!(raw.data().iter().all(|&x| x > 0.4));
    }

    #[test]
    fn phantom_is_deterministic() {
        let spec = PhantomSpec::cells([4, 16, 16], 5, 77);
        assert_eq!(make_phantom(&spec).unwrap(), make_phantom(&spec).unwrap());
        let other = PhantomSpec { rng_seed: 78, ..spec };
        assert_ne!(make_phantom(&other).unwrap().data(), make_phantom(&PhantomSpec::cells([4, 16, 16], 5, 77)).unwrap().data());
    }

    #[test]
    fn membrane_fraction_band() {
        let v = make_phantom(&PhantomSpec::cells([32, 128, 128], 20, 2024)).unwrap();
        let frac = v.data().iter().filter(|&&x| x < -0.5).count() as f64 / v.len() as f64;
        assert!((0.02..=0.30).contains(&frac), "membrane fraction {frac}");
    }

    #[test]
    fn zero_cells_rejected() {
        assert!(make_phantom(&PhantomSpec::cells([2, 2, 2], 0, 0)).is_err());
    }

    #[test]
    fn full_size_patch_is_whole_volume() {
        let v = make_phantom(&PhantomSpec::blobs([4, 8, 8], 3, 1)).unwrap();
        let p = sample_patch(&v, &PatchSpec { patch_dims: [4, 8, 8], rng_seed: 9 }).unwrap();
        for (a, b) in p.data().iter().zip(v.normalized().unwrap().data()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn oversized_patch_rejected() {
        let v = Volume::zeros([4, 8, 8]).unwrap();
        assert!(sample_patch(&v, &PatchSpec { patch_dims: [5, 8, 8], rng_seed: 0 }).is_err());
    }

    #[test]
    fn corner_distribution_is_uniform() {
        let mut s = PatchSampler::new(&PatchSpec { patch_dims: [32, 4, 4], rng_seed: 12345 });
        let draws = 10_000;
        let mut counts = [0usize; 33];
        for _ in 0..draws {
            counts[s.draw_corner([64, 4, 4]).unwrap()[0]] += 1;
        }
        let p = 1.0 / 33.0;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for (z, &c) in counts.iter().enumerate() {
            let f = c as f64 / draws as f64;
            assert!((f - p).abs() <= 3.0 * se, "corner {z}: {f}");
        }
    }

    #[test]
    fn patch_moments() {
        let v = make_phantom(&PhantomSpec::cells([16, 48, 48], 6, 3)).unwrap();
        let p = sample_patch(&v, &PatchSpec { patch_dims: [8, 32, 32], rng_seed: 1 }).unwrap();
        let m = Moments::of(p.data()).unwrap();
        assert!(m.mean.abs() < 1e-5 && (m.variance - 1.0).abs() < 1e-4);
    }
}
