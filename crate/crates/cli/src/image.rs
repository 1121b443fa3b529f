use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};

/// Maps `values` to 0..=255 by min-max scaling; a constant image maps to 0.
pub fn to_gray8(values: &[f32]) -> Vec<u8> {
    let (lo, hi) = values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    values
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect()
}

pub fn write_gray_png(path: &Path, width: usize, height: usize, values: &[f32]) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&to_gray8(values))?;
    writer.finish()?;
    Ok(())
}
