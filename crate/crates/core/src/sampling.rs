//! 1-D linear interpolation taps shared by the projector and the stretch operator.

/// Up to two `(index, weight)` taps for sampling position `p` (pixel units)
/// on an axis of length `n`.
///
/// Positions outside `[0, n-1]` yield `None`. A position exactly on the last
/// pixel takes that pixel with weight 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taps {
    pub index: usize,
    /// Weight on `index`.
    pub w0: f64,
    /// Weight on `index + 1`; zero when `index` is the last pixel.
    pub w1: f64,
}

#[inline]
pub fn linear_taps(p: f64, n: usize) -> Option<Taps> {
    let last = n as f64 - 1.0;
    if !(0.0..=last).contains(&p) {
        return None;
    }
    let base = p.floor();
    let index = base as usize;
    if index + 1 >= n {
        return Some(Taps { index: n - 1, w0: 1.0, w1: 0.0 });
    }
    let t = p - base;
    Some(Taps { index, w0: 1.0 - t, w1: t })
}

/// Applies `taps` to `row`.
#[inline]
pub fn sample(row: &[f32], taps: &Taps) -> f64 {
    let mut acc = taps.w0 * row[taps.index] as f64;
    if taps.w1 != 0.0 {
        acc += taps.w1 * row[taps.index + 1] as f64;
    }
    acc
}

/// Transpose of [`sample`]: scatters `value` into `row`.
#[inline]
pub fn scatter(row: &mut [f64], taps: &Taps, value: f64) {
    row[taps.index] += taps.w0 * value;
    if taps.w1 != 0.0 {
        row[taps.index + 1] += taps.w1 * value;
    }
}
