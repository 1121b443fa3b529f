//! The stretched-sinogram operator `S`.
//!
//! Each view is resampled along its columns (perpendicular to the tilt axis)
//! about the image centre, keeping the image size. With
//! [`Direction::Magnify`] the view at tilt `θ` is magnified by `sec θ`
//! (`out(i, u) = in(i, u·cos θ)` in natural coordinates), which undoes the
//! `cos θ` foreshortening of the central plane produced by
//! [`crate::projector::project`]. [`Direction::Compress`] samples at
//! `u·sec θ` instead and zero-fills outside the view.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{linear_taps, sample, scatter, Taps};
use crate::tensor::{StackKind, TiltGeometry, TiltStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Magnify,
    Compress,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnify" => Ok(Direction::Magnify),
            "compress" => Ok(Direction::Compress),
            other => Err(Error::InvalidSpec(format!("unknown stretch direction `{other}` (magnify|compress)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    ZeroFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchSpec {
    pub geometry: TiltGeometry,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub boundary: Boundary,
}

impl StretchSpec {
    pub fn new(geometry: TiltGeometry) -> Self {
        Self { geometry, direction: Direction::Magnify, boundary: Boundary::ZeroFill }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    /// Column scale factor applied to output coordinates for a view at `deg`.
    pub fn sample_scale(&self, deg: f64) -> f64 {
        let c = deg.to_radians().cos();
        match self.direction {
            Direction::Magnify => c,
            Direction::Compress => 1.0 / c,
        }
    }
}

const EDGE_SNAP: f64 = 1e-9;

/// Taps for every output column of one view.
fn view_taps(scale: f64, n_w: usize) -> Vec<Option<Taps>> {
    let half = 0.5 * (n_w as f64 - 1.0);
    let last = n_w as f64 - 1.0;
    (0..n_w)
        .map(|j| {
            let mut p = half + (j as f64 - half) * scale;
            if (p - last).abs() < EDGE_SNAP {
                p = last;
            } else if p.abs() < EDGE_SNAP {
                p = 0.0;
            }
            linear_taps(p, n_w)
        })
        .collect()
}

fn check(y: &TiltStack, spec: &StretchSpec) -> Result<()> {
    spec.geometry.revalidate()?;
    if y.dims() != spec.geometry.stack_dims() {
        return Err(Error::dims(&spec.geometry.stack_dims(), &y.dims()));
    }
    if y.geometry().angles_deg() != spec.geometry.angles_deg() {
        return Err(Error::InvalidSpec("stack angles differ from stretch geometry".into()));
    }
    Ok(())
}

/// `y_s = S y`.
pub fn stretch(y: &TiltStack, spec: &StretchSpec) -> Result<TiltStack> {
    if !y.kind().is_untransformed() {
        return Err(Error::Kind { op: "stretch", kind: y.kind().as_str() });
    }
    check(y, spec)?;
    let [_, n_h, n_w] = y.dims();
    let taps: Vec<_> = spec.geometry.angles_deg().iter().map(|&a| view_taps(spec.sample_scale(a), n_w)).collect();
    let src = y.data();
    let mut out = vec![0f32; src.len()];
    out.par_chunks_mut(n_w).enumerate().for_each(|(idx, dst)| {
        let k = idx / n_h;
        let row = &src[idx * n_w..(idx + 1) * n_w];
        for (d, t) in dst.iter_mut().zip(&taps[k]) {
            *d = t.as_ref().map_or(0.0, |t| sample(row, t) as f32);
        }
    });
    Ok(y.with_data(StackKind::Stretched, out))
}

/// `Sᵀ y_s`. The result lives in raw-view space and is tagged [`StackKind::Raw`].
pub fn stretch_adjoint(y_s: &TiltStack, spec: &StretchSpec) -> Result<TiltStack> {
    check(y_s, spec)?;
    let [_, n_h, n_w] = y_s.dims();
    let taps: Vec<_> = spec.geometry.angles_deg().iter().map(|&a| view_taps(spec.sample_scale(a), n_w)).collect();
    let src = y_s.data();
    let mut out = vec![0f32; src.len()];
    out.par_chunks_mut(n_w).enumerate().for_each(|(idx, dst)| {
        let k = idx / n_h;
        let row = &src[idx * n_w..(idx + 1) * n_w];
        let mut acc = vec![0f64; n_w];
        for (&v, t) in row.iter().zip(&taps[k]) {
            if let Some(t) = t {
                scatter(&mut acc, t, v as f64);
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = a as f32;
        }
    });
    Ok(y_s.with_data(StackKind::Raw, out))
}

/// `S` as explicit `(row, col, weight)` triplets over flat stack indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub dims: [usize; 3],
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SparseOperator {
    pub fn apply(&self, input: &[f32]) -> Result<Vec<f64>> {
        let n: usize = self.dims.iter().product();
        if input.len() != n {
            return Err(Error::Length { expected: n * 4, actual: input.len() * 4 });
        }
        let mut out = vec![0f64; n];
        for &(r, c, w) in &self.triplets {
            out[r] += w * input[c] as f64;
        }
        Ok(out)
    }

    pub fn apply_transpose(&self, input: &[f32]) -> Result<Vec<f64>> {
        let n: usize = self.dims.iter().product();
        if input.len() != n {
            return Err(Error::Length { expected: n * 4, actual: input.len() * 4 });
        }
        let mut out = vec![0f64; n];
        for &(r, c, w) in &self.triplets {
            out[c] += w * input[r] as f64;
        }
        Ok(out)
    }

    /// `row,col,weight` lines with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,col,weight")?;
        for (r, c, wt) in &self.triplets {
            writeln!(w, "{r},{c},{wt}")?;
        }
        Ok(())
    }
}

/// Sparse form of [`stretch`] for a stack of `dims`.
pub fn as_sparse_operator(spec: &StretchSpec, dims: [usize; 3]) -> Result<SparseOperator> {
    spec.geometry.revalidate()?;
    if dims.contains(&0) {
        return Err(Error::InvalidSpec(format!("dims must be positive, got {dims:?}")));
    }
    if dims != spec.geometry.stack_dims() {
        return Err(Error::dims(&spec.geometry.stack_dims(), &dims));
    }
    let [_, n_h, n_w] = dims;
    let mut triplets = Vec::new();
    for (k, &deg) in spec.geometry.angles_deg().iter().enumerate() {
        let taps = view_taps(spec.sample_scale(deg), n_w);
        for i in 0..n_h {
            let base = (k * n_h + i) * n_w;
            for (j, t) in taps.iter().enumerate() {
                if let Some(t) = t {
                    triplets.push((base + j, base + t.index, t.w0));
                    if t.w1 != 0.0 {
                        triplets.push((base + j, base + t.index + 1, t.w1));
                    }
                }
            }
        }
    }
    Ok(SparseOperator { dims, triplets })
}
