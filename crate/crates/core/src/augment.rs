//! Tilt-series augmentation: projection-scaled Gaussian noise, random
//! integer misalignment of a subset of views, and per-view normalization.
//!
//! Every view draws from its own RNG substream, so results do not depend on
//! thread scheduling.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, stream_rng};
use crate::tensor::{normalize_in_place, Moments, StackKind, TiltStack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Noise std as a multiple of the projections' std.
    pub noise_ratio: f64,
    pub n_misaligned: usize,
    pub shift_range: u32,
    pub rng_seed: u64,
    #[serde(default = "default_true")]
    pub per_view_normalize: bool,
    /// Scale noise by each view's own std instead of the whole stack's.
    #[serde(default)]
    pub per_view_noise_std: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            noise_ratio: 0.3,
            n_misaligned: 0,
            shift_range: 3,
            rng_seed: 0,
            per_view_normalize: true,
            per_view_noise_std: false,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self, n_views: usize) -> Result<()> {
        if !(self.noise_ratio >= 0.0 && self.noise_ratio.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise_ratio must be >= 0, got {}", self.noise_ratio)));
        }
        if self.n_misaligned > n_views {
            return Err(Error::InvalidSpec(format!(
                "n_misaligned = {} exceeds the {n_views} available views",
                self.n_misaligned
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shift {
    pub view: usize,
    /// Row offset.
    pub di: i32,
    /// Column offset.
    pub dj: i32,
}

/// Applied shifts in view order; replaying it needs no seed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftLog {
    pub shifts: Vec<Shift>,
}

fn check_kind(op: &'static str, y: &TiltStack) -> Result<()> {
    if y.kind().is_untransformed() {
        Ok(())
    } else {
        Err(Error::Kind { op, kind: y.kind().as_str() })
    }
}

pub fn add_noise(y: &TiltStack, spec: &AugmentSpec) -> Result<TiltStack> {
    check_kind("add_noise", y)?;
    spec.validate(y.dims()[0])?;
    if spec.noise_ratio == 0.0 {
        return Ok(y.with_data(StackKind::Augmented, y.data().to_vec()));
    }
    let [_, n_h, n_w] = y.dims();
    let plane = n_h * n_w;
    let global_std = Moments::of(y.data())?.std();
    let mut out = y.data().to_vec();
    out.par_chunks_mut(plane).enumerate().try_for_each(|(k, view)| -> Result<()> {
        let std = if spec.per_view_noise_std { Moments::of(view)?.std() } else { global_std };
        let sigma = spec.noise_ratio * std;
        let mut rng = stream_rng(spec.rng_seed, domain::NOISE, k as u64);
        for v in view.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v = (*v as f64 + sigma * e) as f32;
        }
        Ok(())
    })?;
    Ok(y.with_data(StackKind::Augmented, out))
}

/// Draws which views move and by how much.
pub fn draw_shifts(n_views: usize, spec: &AugmentSpec) -> Result<ShiftLog> {
    spec.validate(n_views)?;
    if spec.n_misaligned == 0 {
        return Ok(ShiftLog::default());
    }
    let mut select = stream_rng(spec.rng_seed, domain::SELECT, 0);
    let mut views = index::sample(&mut select, n_views, spec.n_misaligned).into_vec();
    views.sort_unstable();
    let r = spec.shift_range as i32;
    let shifts = views
        .into_iter()
        .map(|view| {
            let mut rng = stream_rng(spec.rng_seed, domain::SHIFT, view as u64);
            let di = rng.random_range(-r..=r);
            let dj = rng.random_range(-r..=r);
            Shift { view, di, dj }
        })
        .collect();
    Ok(ShiftLog { shifts })
}

/// Translates each logged view by `(di, dj)`; vacated pixels become 0.
pub fn apply_shifts(y: &TiltStack, log: &ShiftLog) -> Result<TiltStack> {
    check_kind("misalign", y)?;
    let [n_view, n_h, n_w] = y.dims();
    let mut out = y.data().to_vec();
    for s in &log.shifts {
        if s.view >= n_view {
            return Err(Error::InvalidSpec(format!("shift log names view {} of {n_view}", s.view)));
        }
        let src = y.view(s.view);
        let dst = &mut out[s.view * n_h * n_w..(s.view + 1) * n_h * n_w];
        for i in 0..n_h {
            for j in 0..n_w {
                let si = i as i64 - s.di as i64;
                let sj = j as i64 - s.dj as i64;
                dst[i * n_w + j] = if (0..n_h as i64).contains(&si) && (0..n_w as i64).contains(&sj) {
                    src[si as usize * n_w + sj as usize]
                } else {
                    0.0
                };
            }
        }
    }
    Ok(y.with_data(StackKind::Augmented, out))
}

pub fn misalign(y: &TiltStack, spec: &AugmentSpec) -> Result<(TiltStack, ShiftLog)> {
    check_kind("misalign", y)?;
    let log = draw_shifts(y.dims()[0], spec)?;
    let out = apply_shifts(y, &log)?;
    Ok((out, log))
}

/// Normalizes each view to zero mean and unit variance.
pub fn finalize_views(y: &TiltStack) -> Result<TiltStack> {
    let [_, n_h, n_w] = y.dims();
    let mut out = y.data().to_vec();
    out.par_chunks_mut(n_h * n_w).try_for_each(normalize_in_place)?;
    let kind = if y.kind().is_untransformed() { StackKind::Augmented } else { y.kind() };
    Ok(y.with_data(kind, out))
}

/// Noise, then misalignment, then (optionally) per-view normalization.
pub fn augment(y: &TiltStack, spec: &AugmentSpec) -> Result<(TiltStack, ShiftLog)> {
    let noisy = add_noise(y, spec)?;
    let (shifted, log) = misalign(&noisy, spec)?;
    let out = if spec.per_view_normalize { finalize_views(&shifted)? } else { shifted };
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TiltGeometry;

    fn ramp_stack(n_view: usize, h: usize, w: usize) -> TiltStack {
        let data = (0..n_view * h * w).map(|v| ((v * 31 % 97) as f32) * 0.1).collect();
        TiltStack::new(TiltGeometry::new(crate::tensor::linspace_deg(-60.0, 60.0, n_view), [h, w]).unwrap(), StackKind::Raw, data)
            .unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let y = ramp_stack(3, 4, 5);
        let spec = AugmentSpec { noise_ratio: 0.0, ..Default::default() };
        let out = add_noise(&y, &spec).unwrap();
        assert_eq!(out.data(), y.data());
        assert_eq!(out.kind(), StackKind::Augmented);
    }

    #[test]
    fn noise_is_seeded() {
        let y = ramp_stack(3, 8, 8);
        let a = add_noise(&y, &AugmentSpec { rng_seed: 5, ..Default::default() }).unwrap();
        let b = add_noise(&y, &AugmentSpec { rng_seed: 5, ..Default::default() }).unwrap();
        let c = add_noise(&y, &AugmentSpec { rng_seed: 6, ..Default::default() }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn no_misalignment_is_identity() {
        let y = ramp_stack(8, 4, 4);
        let (out, log) = misalign(&y, &AugmentSpec::default()).unwrap();
        assert_eq!(out.data(), y.data());
        assert!(log.shifts.is_empty());
    }

    #[test]
    fn unit_column_shift_moves_delta() {
        let geom = TiltGeometry::new(vec![0.0], [3, 4]).unwrap();
        let mut data = vec![0f32; 12];
        data[4 + 1] = 1.0;
        let y = TiltStack::new(geom, StackKind::Raw, data).unwrap();
        let out = apply_shifts(&y, &ShiftLog { shifts: vec![Shift { view: 0, di: 0, dj: 1 }] }).unwrap();
        let mut expect = [0f32; 12];
        expect[4 + 2] = 1.0;
        assert_eq!(out.data(), &expect[..]);
        // vacated first column is zero-filled
        let full = TiltStack::new(TiltGeometry::new(vec![0.0], [1, 3]).unwrap(), StackKind::Raw, vec![1.0; 3]).unwrap();
        let out = apply_shifts(&full, &ShiftLog { shifts: vec![Shift { view: 0, di: 0, dj: 1 }] }).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn shift_log_replays_misalignment() {
        let y = ramp_stack(8, 6, 6);
        let spec = AugmentSpec { n_misaligned: 4, rng_seed: 99, ..Default::default() };
        let (out, log) = misalign(&y, &spec).unwrap();
        assert_eq!(log.shifts.len(), 4);
        let views: std::collections::BTreeSet<_> = log.shifts.iter().map(|s| s.view).collect();
        assert_eq!(views.len(), 4);
        let json = serde_json::to_string(&log).unwrap();
        let replay: ShiftLog = serde_json::from_str(&json).unwrap();
        assert_eq!(apply_shifts(&y, &replay).unwrap(), out);
    }

    #[test]
    fn too_many_misaligned_views_is_rejected() {
        let y = ramp_stack(2, 2, 2);
        let spec = AugmentSpec { n_misaligned: 3, ..Default::default() };
        assert!(misalign(&y, &spec).is_err());
    }

    #[test]
    fn finalize_moments_and_floor() {
        let mut y = ramp_stack(3, 16, 16);
        let mut data = y.data().to_vec();
        data[..256].iter_mut().for_each(|v| *v = 4.0);
        y = y.with_data(StackKind::Raw, data);
        let out = finalize_views(&y).unwrap();
        assert!(out.view(0).iter().all(|&v| v == 0.0));
        for k in 1..3 {
            let m = Moments::of(out.view(k)).unwrap();
            assert!(m.mean.abs() < 1e-5 && (m.variance - 1.0).abs() < 1e-4);
        }
        let again = finalize_views(&out).unwrap();
        for (a, b) in again.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn pipeline_order() {
        let y = ramp_stack(8, 8, 8);
        let spec = AugmentSpec { n_misaligned: 2, rng_seed: 3, ..Default::default() };
        let (out, log) = augment(&y, &spec).unwrap();
        let noisy = add_noise(&y, &spec).unwrap();
        let manual = finalize_views(&apply_shifts(&noisy, &log).unwrap()).unwrap();
        assert_eq!(out, manual);
    }
}
