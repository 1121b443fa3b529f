//! Classical baselines: ram-lak ramp filtering and filtered backprojection.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projector::{backproject, ProjectorSpec};
use crate::tensor::{StackKind, TiltStack, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[default]
    RamLak,
}

/// Unset fields resolve per stack: padding to the next power of two
/// `≥ 2·n_w`, angular weight `(θ_max − θ_min)/n_view` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(default)]
    pub filter: FilterKind,
    #[serde(default)]
    pub pad_length: Option<usize>,
    #[serde(default)]
    pub angular_weight: Option<f64>,
}

impl FilterSpec {
    pub fn resolved_pad(&self, n_w: usize) -> Result<usize> {
        match self.pad_length {
            None => Ok((2 * n_w).next_power_of_two()),
            Some(p) if p >= n_w && p.is_power_of_two() => Ok(p),
            Some(p) => Err(Error::InvalidSpec(format!("pad_length {p} must be a power of two >= n_w = {n_w}"))),
        }
    }

    /// Δθ in radians. A single view has no span, so it gets weight π.
    pub fn resolved_weight(&self, angles_deg: &[f64]) -> f64 {
        if let Some(w) = self.angular_weight {
            return w;
        }
        match (angles_deg.first(), angles_deg.last()) {
            (Some(lo), Some(hi)) if angles_deg.len() > 1 => (hi - lo).to_radians() / angles_deg.len() as f64,
            _ => std::f64::consts::PI,
        }
    }
}

/// `|f|` on the DFT grid of length `n`, `f ∈ [-1/2, 1/2)` cycles per pixel.
pub fn ramp_response(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let f = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            (f / n as f64).abs()
        })
        .collect()
}

/// Ramp-filters every detector row along its columns.
pub fn ramlak_filter(y: &TiltStack, spec: &FilterSpec) -> Result<TiltStack> {
    if !y.kind().is_untransformed() {
        return Err(Error::Kind { op: "ramlak_filter", kind: y.kind().as_str() });
    }
    let [_, _, n_w] = y.dims();
    let pad = spec.resolved_pad(n_w)?;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(pad);
    let inv = planner.plan_fft_inverse(pad);
    let ramp = ramp_response(pad);
    let scale = 1.0 / pad as f64;

    let src = y.data();
    let mut out = vec![0f32; src.len()];
    out.par_chunks_mut(n_w).enumerate().for_each_init(
        || vec![Complex64::default(); pad],
        |buf, (idx, dst)| {
            let row = &src[idx * n_w..(idx + 1) * n_w];
            for (b, &v) in buf.iter_mut().zip(row) {
                *b = Complex64::new(v as f64, 0.0);
            }
            buf[n_w..].iter_mut().for_each(|b| *b = Complex64::default());
            fwd.process(buf);
            for (b, r) in buf.iter_mut().zip(&ramp) {
                *b *= r * scale;
            }
            inv.process(buf);
            for (d, b) in dst.iter_mut().zip(buf.iter()) {
                *d = b.re as f32;
            }
        },
    );
    Ok(y.with_data(StackKind::Filtered, out))
}

/// Plain backprojection `Pᵀ y`.
pub fn bp(y: &TiltStack, spec_p: &ProjectorSpec) -> Result<Volume> {
    backproject(y, spec_p)
}

/// `Δθ · Pᵀ F y`.
pub fn fbp(y: &TiltStack, spec_f: &FilterSpec, spec_p: &ProjectorSpec) -> Result<Volume> {
    let filtered = ramlak_filter(y, spec_f)?;
    let back = backproject(&filtered, spec_p)?;
    let w = spec_f.resolved_weight(y.geometry().angles_deg()) as f32;
    Ok(Volume::from_parts(back.dims(), back.into_data().into_iter().map(|v| v * w).collect()))
}
