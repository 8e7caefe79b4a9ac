//! Universal-dataset preprocessing: per-modality intensity truncation, joint
//! resampling to a common grid, and per-case normalization to [0, 1].
//!
//! CTA and MRA scans pass through the same three stages so that a single
//! model can consume either modality; only the truncation window differs.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, Spacing, Volume};

/// The two angiographic imaging modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Cta,
    Mra,
}

/// Preprocessing parameters. Defaults reproduce the reference configuration:
/// CTA window [-1000, 1800], MRA window [0, 700], target spacing
/// (0.6, 0.3525, 0.3525) mm in (z, y, x) order, trilinear intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// (low, high) clamp for CTA intensities.
    pub cta_window: (f64, f64),
    /// (low, high) clamp for MRA intensities.
    pub mra_window: (f64, f64),
    pub target_spacing: Spacing,
    /// Interpolation order for intensity volumes: 0 nearest, 1 trilinear.
    pub intensity_order: u8,
    /// Interpolation order for label volumes; only 0 (nearest) is valid.
    pub label_order: u8,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            cta_window: (-1000.0, 1800.0),
            mra_window: (0.0, 700.0),
            target_spacing: Spacing {
                dz: 0.6,
                dy: 0.3525,
                dx: 0.3525,
            },
            intensity_order: 1,
            label_order: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (low, high)) in [("cta_window", self.cta_window), ("mra_window", self.mra_window)] {
            if low.is_nan() || high.is_nan() || low >= high {
                return Err(Error::InvalidConfig(format!(
                    "{name} must satisfy low < high, got ({low}, {high})"
                )));
            }
        }
        self.target_spacing.validate()?;
        if self.intensity_order > 1 {
            return Err(Error::InvalidConfig(format!(
                "intensity_order must be 0 or 1, got {}",
                self.intensity_order
            )));
        }
        if self.label_order != 0 {
            return Err(Error::InvalidConfig(
                "labels are resampled with nearest-neighbor only (label_order 0)".into(),
            ));
        }
        Ok(())
    }

    fn window(&self, modality: Modality) -> (f32, f32) {
        let (low, high) = match modality {
            Modality::Cta => self.cta_window,
            Modality::Mra => self.mra_window,
        };
        (low as f32, high as f32)
    }
}

/// Clamp every intensity into the modality window; in-window voxels are untouched.
pub fn truncate(v: &Volume, modality: Modality, cfg: &PreprocessConfig) -> Volume {
    let (low, high) = cfg.window(modality);
    Volume {
        data: v.data.mapv(|x| x.clamp(low, high)),
        spacing: v.spacing,
        affine: v.affine,
    }
}

fn output_shape(shape: (usize, usize, usize), src: &Spacing, target: &Spacing) -> (usize, usize, usize) {
    let resize = |n: usize, s: f64, t: f64| ((n as f64 * s / t).round() as usize).max(1);
    (
        resize(shape.0, src.dz, target.dz),
        resize(shape.1, src.dy, target.dy),
        resize(shape.2, src.dx, target.dx),
    )
}

/// Source index of an output voxel under the voxel-center alignment
/// convention, clamped to the valid range.
#[inline]
fn source_index(out_idx: usize, ratio: f64, n_src: usize) -> f64 {
    let pos = (out_idx as f64 + 0.5) * ratio - 0.5;
    pos.clamp(0.0, (n_src - 1) as f64)
}

/// Resample an intensity volume onto the target spacing.
pub fn resample_intensity(v: &Volume, cfg: &PreprocessConfig) -> Volume {
    let src = &v.spacing;
    let target = &cfg.target_spacing;
    let (nz, ny, nx) = v.shape();
    let out_shape = output_shape(v.shape(), src, target);
    let ratio = (
        target.dz / src.dz,
        target.dy / src.dy,
        target.dx / src.dx,
    );

    let data = if cfg.intensity_order == 0 {
        Array3::from_shape_fn(out_shape, |(z, y, x)| {
            let sz = source_index(z, ratio.0, nz).round() as usize;
            let sy = source_index(y, ratio.1, ny).round() as usize;
            let sx = source_index(x, ratio.2, nx).round() as usize;
            v.data[(sz, sy, sx)]
        })
    } else {
        Array3::from_shape_fn(out_shape, |(z, y, x)| {
            let pz = source_index(z, ratio.0, nz);
            let py = source_index(y, ratio.1, ny);
            let px = source_index(x, ratio.2, nx);
            trilinear(&v.data, pz, py, px)
        })
    };

    Volume {
        data,
        spacing: *target,
        affine: v.affine.rescaled(src, target),
    }
}

fn trilinear(data: &Array3<f32>, pz: f64, py: f64, px: f64) -> f32 {
    let (nz, ny, nx) = data.dim();
    let z0 = pz.floor() as usize;
    let y0 = py.floor() as usize;
    let x0 = px.floor() as usize;
    let z1 = (z0 + 1).min(nz - 1);
    let y1 = (y0 + 1).min(ny - 1);
    let x1 = (x0 + 1).min(nx - 1);
    let fz = pz - z0 as f64;
    let fy = py - y0 as f64;
    let fx = px - x0 as f64;

    let mut acc = 0.0f64;
    for (zc, wz) in [(z0, 1.0 - fz), (z1, fz)] {
        if wz == 0.0 {
            continue;
        }
        for (yc, wy) in [(y0, 1.0 - fy), (y1, fy)] {
            if wy == 0.0 {
                continue;
            }
            for (xc, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                if wx == 0.0 {
                    continue;
                }
                acc += wz * wy * wx * data[(zc, yc, xc)] as f64;
            }
        }
    }
    acc as f32
}

/// Resample a label volume onto the target spacing with nearest-neighbor
/// sampling, so no new class ids can appear.
pub fn resample_labels(lbl: &LabelVolume, cfg: &PreprocessConfig) -> LabelVolume {
    let src = &lbl.spacing;
    let target = &cfg.target_spacing;
    let (nz, ny, nx) = lbl.shape();
    let out_shape = output_shape(lbl.shape(), src, target);
    let ratio = (
        target.dz / src.dz,
        target.dy / src.dy,
        target.dx / src.dx,
    );
    let data = Array3::from_shape_fn(out_shape, |(z, y, x)| {
        let sz = source_index(z, ratio.0, nz).round() as usize;
        let sy = source_index(y, ratio.1, ny).round() as usize;
        let sx = source_index(x, ratio.2, nx).round() as usize;
        lbl.data[(sz, sy, sx)]
    });
    LabelVolume {
        data,
        spacing: *target,
        affine: lbl.affine.rescaled(src, target),
        class_map: lbl.class_map.clone(),
    }
}

/// Rescale intensities to [0, 1] using the per-case minimum and maximum.
/// A constant volume maps to all zeros.
pub fn normalize(v: &Volume) -> Volume {
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for &x in v.data.iter() {
        min = min.min(x);
        max = max.max(x);
    }
    let data = if v.data.is_empty() || min >= max {
        Array3::zeros(v.data.dim())
    } else {
        let range = max - min;
        v.data.mapv(|x| (x - min) / range)
    };
    Volume {
        data,
        spacing: v.spacing,
        affine: v.affine,
    }
}

/// Full per-case pipeline: truncate, resample, normalize, in that order.
pub fn preprocess_case(v: &Volume, modality: Modality, cfg: &PreprocessConfig) -> Result<Volume> {
    cfg.validate()?;
    let truncated = truncate(v, modality, cfg);
    let resampled = resample_intensity(&truncated, cfg);
    Ok(normalize(&resampled))
}
