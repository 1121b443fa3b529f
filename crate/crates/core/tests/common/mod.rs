#![allow(dead_code)]
//! Test-only oracles, coded independently of the library kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stretchtomo::tensor::{StackKind, TiltGeometry, TiltStack, Volume};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_volume(dims: [usize; 3], rng: &mut ChaCha8Rng) -> Volume {
    Volume::new(dims, (0..dims.iter().product()).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

pub fn random_stack(geom: &TiltGeometry, rng: &mut ChaCha8Rng) -> TiltStack {
    let n = geom.stack_dims().iter().product();
    TiltStack::new(geom.clone(), StackKind::Raw, (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&p, &q)| p as f64 * q as f64).sum()
}

pub fn dot64(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&p, &q)| p * q as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Row-major dense matrix.
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn apply(&self, x: &[f32]) -> Vec<f64> {
        (0..self.rows).map(|r| dot64(&self.a[r * self.cols..(r + 1) * self.cols], x)).collect()
    }

    pub fn apply_t(&self, y: &[f32]) -> Vec<f64> {
        let mut out = vec![0f64; self.cols];
        for r in 0..self.rows {
            let v = y[r] as f64;
            for c in 0..self.cols {
                out[c] += self.a[r * self.cols + c] * v;
            }
        }
        out
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.a[r * self.cols + c]).collect()
    }
}

/// Dense projection matrix from the geometric rule: detector cell `u` at tilt
/// θ covers `[x_s - secθ/2, x_s + secθ/2]` on slice ζ, `x_s = u·secθ + ζ·tanθ`,
/// and reads voxel `p` with the length of overlap with `[p - 1/2, p + 1/2]`
/// (all centered). Without path weighting the ray sum is scaled by cos θ.
pub fn dense_projector(angles: &[f64], dims: [usize; 3], path_weighting: bool) -> Dense {
    let [d, h, w] = dims;
    let cen = |p: usize, n: usize| p as f64 - (n as f64 - 1.0) / 2.0;
    let rows = angles.len() * h * w;
    let cols = d * h * w;
    let mut a = vec![0f64; rows * cols];
    for (k, &deg) in angles.iter().enumerate() {
        let t = deg.to_radians();
        let sec = 1.0 / t.cos();
        let scale = if path_weighting { 1.0 } else { t.cos() };
        for i in 0..h {
            for u in 0..w {
                let r = (k * h + i) * w + u;
                for z in 0..d {
                    let xs = cen(u, w) * sec + cen(z, d) * t.tan();
                    let (lo, hi) = (xs - sec / 2.0, xs + sec / 2.0);
                    for p in 0..w {
                        let (plo, phi) = (cen(p, w) - 0.5, cen(p, w) + 0.5);
                        let ov = hi.min(phi) - lo.max(plo);
                        if ov > 0.0 {
                            a[r * cols + (z * h + i) * w + p] += ov * scale;
                        }
                    }
                }
            }
        }
    }
    Dense { rows, cols, a }
}

/// Dense stretch matrix from the hat-function form of linear interpolation:
/// output column j samples position `c + (j - c)·scale` and weights input
/// column q by `max(0, 1 - |pos - q|)`; positions outside `[0, n-1]` read 0.
pub fn dense_stretch(angles: &[f64], h: usize, w: usize, magnify: bool) -> Dense {
    let n = angles.len() * h * w;
    let c = (w as f64 - 1.0) / 2.0;
    let mut a = vec![0f64; n * n];
    for (k, &deg) in angles.iter().enumerate() {
        let cos = deg.to_radians().cos();
        let scale = if magnify { cos } else { 1.0 / cos };
        for i in 0..h {
            for j in 0..w {
                let mut pos = c + (j as f64 - c) * scale;
                if (pos - (w as f64 - 1.0)).abs() < 1e-9 {
                    pos = w as f64 - 1.0;
                }
                if pos.abs() < 1e-9 {
                    pos = 0.0;
                }
                if pos < 0.0 || pos > w as f64 - 1.0 {
                    continue;
                }
                let r = (k * h + i) * w + j;
                for q in 0..w {
                    let wt = 1.0 - (pos - q as f64).abs();
                    if wt > 0.0 {
                        a[r * n + (k * h + i) * w + q] = wt;
                    }
                }
            }
        }
    }
    Dense { rows: n, cols: n, a }
}

pub fn rel_l2(a: &[f64], b: &[f32]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(&p, &q)| (p - q as f64).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|p| p * p).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

pub fn max_abs_diff(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&p, &q)| (p - q as f64).abs()).fold(0.0, f64::max)
}

/// Smooth in-plane thin plate: only the central slice of an odd-depth
/// volume is non-zero, holding a few broad Gaussian bumps.
pub fn thin_plate(dims: [usize; 3]) -> Volume {
    let [d, _, w] = dims;
    assert!(d % 2 == 1);
    let mid = d / 2;
    let c = (w as f64 - 1.0) / 2.0;
    let bumps = [(-0.45, 7.0, 1.0), (-0.1, 5.0, 0.7), (0.2, 6.0, -0.5), (0.5, 8.0, 0.9)];
    Volume::from_fn(dims, |z, y, x| {
        if z != mid {
            return 0.0;
        }
        let xc = x as f64 - c;
        let mut v = 0.0;
        for (k, &(centre, sigma, amp)) in bumps.iter().enumerate() {
            let mu = centre * c + 2.0 * ((y + k) % 3) as f64;
            v += amp * (-0.5 * ((xc - mu) / sigma).powi(2)).exp();
        }
        v as f32
    })
    .unwrap()
}
