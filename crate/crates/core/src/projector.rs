//! Parallel-beam projection `P` about the y axis and its exact adjoint.
//!
//! Each detector row sees the matching volume row (rows are independent).
//! A detector cell with centered coordinate `u` at tilt `θ` crosses slice
//! `z` (centered depth `ζ`) around `x_s = u·sec θ + ζ·tan θ`, and its shadow
//! on that slice is the interval of width `sec θ` centred there. The cell
//! reads each voxel of the slice row with weight equal to the overlap
//! between that shadow and the voxel's unit box, which is plain linear
//! interpolation at `θ = 0`. Overlaps beyond the volume contribute nothing.
//! The summed overlap equals the `sec θ` path length through the slice;
//! with path weighting off the ray sum is divided by `sec θ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{centered, StackKind, TiltGeometry, TiltStack, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorSpec {
    pub geometry: TiltGeometry,
    /// `(n_d, n_h, n_w)`.
    pub volume_dims: [usize; 3],
    #[serde(default = "default_true")]
    pub path_weighting: bool,
}

fn default_true() -> bool {
    true
}

/// Serial execution exists as a reference for the parallel kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Serial,
}

impl ProjectorSpec {
    pub fn new(angles_deg: Vec<f64>, volume_dims: [usize; 3]) -> Result<Self> {
        let geometry = TiltGeometry::new(angles_deg, [volume_dims[1], volume_dims[2]])?;
        let spec = Self { geometry, volume_dims, path_weighting: true };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_path_weighting(mut self, on: bool) -> Self {
        self.path_weighting = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.revalidate()?;
        let [d, h, w] = self.volume_dims;
        if d == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidSpec(format!("volume dims must be positive, got {:?}", self.volume_dims)));
        }
        if self.geometry.detector() != [h, w] {
            return Err(Error::dims(&[h, w], &self.geometry.detector()));
        }
        Ok(())
    }

    pub fn stack_dims(&self) -> [usize; 3] {
        self.geometry.stack_dims()
    }
}

/// Overlap weights between one cell shadow and the voxels of a slice row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFootprint {
    /// First voxel column touched.
    pub start: usize,
    pub weights: Vec<f64>,
}

/// Footprint of detector column `u` on slice `z` for a view at `deg`.
///
/// Weights already include the `sec θ` path length; callers multiply by
/// [`view_scale`] to honour the path-weighting flag.
pub fn cell_footprint(deg: f64, u: usize, z: usize, n_d: usize, n_w: usize) -> Option<CellFootprint> {
    let theta = deg.to_radians();
    let sec = 1.0 / theta.cos();
    let centre = centered(u, n_w) * sec + centered(z, n_d) * theta.tan();
    // shadow and volume extent in pixel-edge coordinates: voxel p spans [p, p+1)
    let shift = 0.5 * n_w as f64;
    let lo = (centre - 0.5 * sec + shift).max(0.0);
    let hi = (centre + 0.5 * sec + shift).min(n_w as f64);
    if hi <= lo {
        return None;
    }
    let start = lo.floor() as usize;
    let end = (hi.ceil() as usize).min(n_w);
    let weights: Vec<f64> = (start..end)
        .map(|p| (hi.min(p as f64 + 1.0) - lo.max(p as f64)).max(0.0))
        .collect();
    Some(CellFootprint { start, weights })
}

/// Factor applied to summed overlaps: 1 with path weighting, `cos θ` without.
pub fn view_scale(deg: f64, path_weighting: bool) -> f64 {
    if path_weighting {
        1.0
    } else {
        deg.to_radians().cos()
    }
}

/// Footprints for one view in CSR layout over `(u, z)` pairs.
struct ViewTable {
    offsets: Vec<usize>,
    columns: Vec<u32>,
    weights: Vec<f64>,
}

impl ViewTable {
    fn build(deg: f64, n_d: usize, n_w: usize, scale: f64) -> Self {
        let mut offsets = Vec::with_capacity(n_w * n_d + 1);
        let mut columns = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for u in 0..n_w {
            for z in 0..n_d {
                if let Some(fp) = cell_footprint(deg, u, z, n_d, n_w) {
                    for (k, w) in fp.weights.iter().enumerate() {
                        if *w > 0.0 {
                            columns.push((fp.start + k) as u32);
                            weights.push(w * scale);
                        }
                    }
                }
                offsets.push(columns.len());
            }
        }
        Self { offsets, columns, weights }
    }

    #[inline]
    fn taps(&self, u: usize, z: usize, n_d: usize) -> (&[u32], &[f64]) {
        let a = self.offsets[u * n_d + z];
        let b = self.offsets[u * n_d + z + 1];
        (&self.columns[a..b], &self.weights[a..b])
    }
}

fn tables(spec: &ProjectorSpec) -> Vec<ViewTable> {
    let [n_d, _, n_w] = spec.volume_dims;
    spec.geometry
        .angles_deg()
        .par_iter()
        .map(|&deg| ViewTable::build(deg, n_d, n_w, view_scale(deg, spec.path_weighting)))
        .collect()
}

fn check_volume(x: &Volume, spec: &ProjectorSpec) -> Result<()> {
    spec.validate()?;
    if x.dims() != spec.volume_dims {
        return Err(Error::dims(&spec.volume_dims, &x.dims()));
    }
    Ok(())
}

fn check_stack(y: &TiltStack, spec: &ProjectorSpec) -> Result<()> {
    spec.validate()?;
    if y.dims() != spec.stack_dims() {
        return Err(Error::dims(&spec.stack_dims(), &y.dims()));
    }
    Ok(())
}

/// `y = P x`.
pub fn project(x: &Volume, spec: &ProjectorSpec) -> Result<TiltStack> {
    project_with(x, spec, Execution::Parallel)
}

pub fn project_with(x: &Volume, spec: &ProjectorSpec, exec: Execution) -> Result<TiltStack> {
    check_volume(x, spec)?;
    let [n_d, n_h, n_w] = spec.volume_dims;
    let tabs = tables(spec);
    let src = x.data();
    let mut out = vec![0f32; spec.stack_dims().iter().product()];

    let ray_row = |idx: usize, dst: &mut [f32]| {
        let (k, i) = (idx / n_h, idx % n_h);
        let tab = &tabs[k];
        for (u, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for z in 0..n_d {
                let (cols, ws) = tab.taps(u, z, n_d);
                let row = &src[(z * n_h + i) * n_w..(z * n_h + i + 1) * n_w];
                for (&c, &w) in cols.iter().zip(ws) {
                    acc += w * row[c as usize] as f64;
                }
            }
            *d = acc as f32;
        }
    };
    match exec {
        Execution::Parallel => out.par_chunks_mut(n_w).enumerate().for_each(|(idx, dst)| ray_row(idx, dst)),
        Execution::Serial => out.chunks_mut(n_w).enumerate().for_each(|(idx, dst)| ray_row(idx, dst)),
    }
    Ok(TiltStack::from_parts(spec.geometry.clone(), StackKind::Raw, out))
}

/// `x = Pᵀ y`, the exact transpose of [`project`].
pub fn backproject(y: &TiltStack, spec: &ProjectorSpec) -> Result<Volume> {
    backproject_with(y, spec, Execution::Parallel)
}

pub fn backproject_with(y: &TiltStack, spec: &ProjectorSpec, exec: Execution) -> Result<Volume> {
    check_stack(y, spec)?;
    let [n_d, n_h, n_w] = spec.volume_dims;
    let n_view = spec.geometry.n_views();
    let tabs = tables(spec);
    let src = y.data();

    // Each row i gathers from every view's row i, so rows are the disjoint
    // unit of work. Accumulate in [i][z][x] order, then transpose.
    let row_block = |i: usize, dst: &mut [f32]| {
        let mut acc = vec![0f64; n_d * n_w];
        for (k, tab) in tabs.iter().enumerate().take(n_view) {
            let det = &src[(k * n_h + i) * n_w..(k * n_h + i + 1) * n_w];
            for (u, &val) in det.iter().enumerate() {
                if val == 0.0 {
                    continue;
                }
                let v = val as f64;
                for z in 0..n_d {
                    let (cols, ws) = tab.taps(u, z, n_d);
                    let row = &mut acc[z * n_w..(z + 1) * n_w];
                    for (&c, &w) in cols.iter().zip(ws) {
                        row[c as usize] += w * v;
                    }
                }
            }
        }
        for (d, a) in dst.iter_mut().zip(&acc) {
            *d = *a as f32;
        }
    };
    let mut by_row = vec![0f32; n_h * n_d * n_w];
    match exec {
        Execution::Parallel => by_row.par_chunks_mut(n_d * n_w).enumerate().for_each(|(i, dst)| row_block(i, dst)),
        Execution::Serial => by_row.chunks_mut(n_d * n_w).enumerate().for_each(|(i, dst)| row_block(i, dst)),
    }
    let mut out = vec![0f32; n_d * n_h * n_w];
    for i in 0..n_h {
        for z in 0..n_d {
            let s = &by_row[(i * n_d + z) * n_w..(i * n_d + z + 1) * n_w];
            out[(z * n_h + i) * n_w..(z * n_h + i + 1) * n_w].copy_from_slice(s);
        }
    }
    Ok(Volume::from_parts(spec.volume_dims, out))
}
