//! Dense tensor types shared by every stage of the pipeline.
//!
//! Both [`Volume`] and [`TiltStack`] store `f32` samples in row-major order.
//! A volume is indexed `(z, y, x)`; a tilt stack is indexed
//! `(view, row, column)`, where rows run parallel to the tilt axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance below which normalization returns zeros instead of dividing.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Dense density grid `x` with dims `(n_d, n_h, n_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        check_shape(dims, data.len())?;
        check_finite(&data)?;
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_shape(dims, dims.iter().product())?;
        Ok(Self { dims, data: vec![0.0; dims.iter().product()] })
    }

    /// Builds a volume by evaluating `f(z, y, x)` at every voxel.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    data.push(f(z, y, x));
                }
            }
        }
        Self::new(dims, data)
    }

    /// Caller guarantees finite data of the right length.
    pub(crate) fn from_parts(dims: [usize; 3], data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    /// Copy of the sub-block starting at `corner` with extent `size`.
    pub fn crop(&self, corner: [usize; 3], size: [usize; 3]) -> Result<Volume> {
        for a in 0..3 {
            if corner[a] + size[a] > self.dims[a] || size[a] == 0 {
                return Err(Error::InvalidSpec(format!(
                    "crop {size:?} at {corner:?} does not fit in volume {:?}",
                    self.dims
                )));
            }
        }
        let mut data = Vec::with_capacity(size.iter().product());
        for z in corner[0]..corner[0] + size[0] {
            for y in corner[1]..corner[1] + size[1] {
                let start = (z * self.dims[1] + y) * self.dims[2] + corner[2];
                data.extend_from_slice(&self.data[start..start + size[2]]);
            }
        }
        Ok(Volume::from_parts(size, data))
    }

    /// Zero-mean, unit-variance copy; see [`normalize_zero_mean_unit_var`].
    pub fn normalized(&self) -> Result<Volume> {
        Ok(Volume::from_parts(self.dims, normalize_zero_mean_unit_var(&self.data)?))
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Volume> {
        Volume::new(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Which transform a stack has been through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StackKind {
    Raw,
    Augmented,
    Stretched,
    Filtered,
}

impl StackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StackKind::Raw => "raw",
            StackKind::Augmented => "augmented",
            StackKind::Stretched => "stretched",
            StackKind::Filtered => "filtered",
        }
    }

    /// Whether a stack of this kind may still be augmented or get a
    /// representation transform applied.
    pub fn is_untransformed(self) -> bool {
        matches!(self, StackKind::Raw | StackKind::Augmented)
    }
}

/// The only supported tilt axis: rows `i` of each view run parallel to ŷ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TiltAxis {
    #[default]
    #[serde(rename = "y")]
    Y,
}

/// Ordered tilt angles plus detector shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltGeometry {
    angles_deg: Vec<f64>,
    #[serde(default)]
    tilt_axis: TiltAxis,
    detector: [usize; 2],
}

impl TiltGeometry {
    /// Validates `|θ| < 90` and strictly increasing angles.
    pub fn new(angles_deg: Vec<f64>, detector: [usize; 2]) -> Result<Self> {
        validate_angles(&angles_deg)?;
        if detector[0] == 0 || detector[1] == 0 {
            return Err(Error::InvalidSpec(format!("detector dims must be positive, got {detector:?}")));
        }
        Ok(Self { angles_deg, tilt_axis: TiltAxis::Y, detector })
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn n_views(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn tilt_axis(&self) -> TiltAxis {
        self.tilt_axis
    }

    /// `(n_h, n_w)`.
    pub fn detector(&self) -> [usize; 2] {
        self.detector
    }

    pub fn stack_dims(&self) -> [usize; 3] {
        [self.angles_deg.len(), self.detector[0], self.detector[1]]
    }

    pub(crate) fn revalidate(&self) -> Result<()> {
        validate_angles(&self.angles_deg)
    }
}

pub fn validate_angles(angles_deg: &[f64]) -> Result<()> {
    if angles_deg.is_empty() {
        return Err(Error::AngleOrder("at least one angle is required".into()));
    }
    for &a in angles_deg {
        if !a.is_finite() || a.abs() >= 90.0 {
            return Err(Error::InvalidAngle(a));
        }
    }
    for w in angles_deg.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::AngleOrder(format!(
                "angles must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// `count` evenly spaced angles from `start` to `stop`, both inclusive.
pub fn linspace_deg(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (count - 1) as f64;
            (0..count)
                .map(|k| if k == count - 1 { stop } else { start + step * k as f64 })
                .collect()
        }
    }
}

/// A stack of tilt views `y` with its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltStack {
    data: Vec<f32>,
    geometry: TiltGeometry,
    kind: StackKind,
}

impl TiltStack {
    pub fn new(geometry: TiltGeometry, kind: StackKind, data: Vec<f32>) -> Result<Self> {
        geometry.revalidate()?;
        let dims = geometry.stack_dims();
        check_shape(dims, data.len())?;
        check_finite(&data)?;
        Ok(Self { data, geometry, kind })
    }

    pub fn zeros(geometry: TiltGeometry, kind: StackKind) -> Self {
        let n = geometry.stack_dims().iter().product();
        Self { data: vec![0.0; n], geometry, kind }
    }

    pub(crate) fn from_parts(geometry: TiltGeometry, kind: StackKind, data: Vec<f32>) -> Self {
        debug_assert_eq!(geometry.stack_dims().iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { data, geometry, kind }
    }

    /// `(n_view, n_h, n_w)`.
    pub fn dims(&self) -> [usize; 3] {
        self.geometry.stack_dims()
    }

    pub fn geometry(&self) -> &TiltGeometry {
        &self.geometry
    }

    pub fn kind(&self) -> StackKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn view(&self, k: usize) -> &[f32] {
        let [_, h, w] = self.dims();
        &self.data[k * h * w..(k + 1) * h * w]
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f32 {
        let [_, h, w] = self.dims();
        self.data[(k * h + i) * w + j]
    }

    /// Reinterprets the stack as a `(n_view, n_h, n_w)` volume, i.e. views as channels.
    pub fn to_channels(&self) -> Volume {
        Volume::from_parts(self.dims(), self.data.clone())
    }

    pub(crate) fn with_data(&self, kind: StackKind, data: Vec<f32>) -> TiltStack {
        TiltStack::from_parts(self.geometry.clone(), kind, data)
    }
}

/// Position in natural image coordinates: `(-1, -1)` is the upper-left pixel
/// centre, `(+1, +1)` the lower-right one, and the image centre is the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaturalCoord {
    pub u: f64,
    pub v: f64,
}

impl NaturalCoord {
    /// Coordinate of pixel `(row, col)` in an `n_h × n_w` image. `u` follows
    /// columns, `v` follows rows.
    pub fn from_pixel(row: usize, col: usize, n_h: usize, n_w: usize) -> Self {
        Self { u: index_to_natural(col as f64, n_w), v: index_to_natural(row as f64, n_h) }
    }

    /// Nearest integer pixel `(row, col)`.
    pub fn to_pixel(self, n_h: usize, n_w: usize) -> (usize, usize) {
        (nearest_index(self.v, n_h), nearest_index(self.u, n_w))
    }
}

/// `u = (2p - (n-1)) / (n-1)`; a length-1 axis maps to 0.
pub fn index_to_natural(p: f64, n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    (2.0 * p - m) / m
}

/// Fractional pixel index for natural coordinate `u` on an axis of length `n`.
pub fn natural_to_index(u: f64, n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    0.5 * (u * m + m)
}

pub fn nearest_index(u: f64, n: usize) -> usize {
    let p = natural_to_index(u, n).round();
    p.clamp(0.0, n.saturating_sub(1) as f64) as usize
}

/// Centered pixel coordinate `p - (n-1)/2`.
#[inline]
pub fn centered(p: usize, n: usize) -> f64 {
    p as f64 - 0.5 * (n as f64 - 1.0)
}

/// Population mean and variance accumulated in `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    pub fn of(values: &[f32]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        let n = values.len() as f64;
        let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let variance = values
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        Ok(Self { mean, variance })
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Shifts and scales `values` to zero mean and unit population variance.
///
/// Inputs whose variance is below [`VARIANCE_FLOOR`] come back as zeros.
pub fn normalize_zero_mean_unit_var(values: &[f32]) -> Result<Vec<f32>> {
    let mut out = values.to_vec();
    normalize_in_place(&mut out)?;
    Ok(out)
}

pub fn normalize_in_place(values: &mut [f32]) -> Result<()> {
    let m = Moments::of(values)?;
    if m.variance < VARIANCE_FLOOR {
        values.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    let inv_std = 1.0 / m.std();
    for v in values.iter_mut() {
        *v = ((*v as f64 - m.mean) * inv_std) as f32;
    }
    Ok(())
}

fn check_shape(dims: [usize; 3], len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidSpec(format!("dims must be positive, got {dims:?}")));
    }
    let expected: usize = dims.iter().product();
    if expected != len {
        return Err(Error::Length { expected: expected * 4, actual: len * 4 });
    }
    Ok(())
}

pub(crate) fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}
