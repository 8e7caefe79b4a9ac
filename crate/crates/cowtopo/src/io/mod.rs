//! Volume file I/O.
//!
//! Two on-disk formats are supported, selected by file extension:
//!
//! * NIfTI-1 (`.nii`, `.nii.gz`), single-file, little- or big-endian on read,
//!   little-endian on write;
//! * a raw fixture pair (`<name>.json` + `<name>.bin`) holding the shape,
//!   spacing, and dtype next to a flat little-endian array, so tests and
//!   scripts need no imaging toolchain.

mod fixture;
mod nifti;

use std::path::Path;

use ndarray::{Array3, Array4};

use crate::classes::ClassMap;
use crate::error::{Error, Result};
use crate::volume::{Affine, LabelVolume, ProbVolume, Spacing, Volume, PROB_CHANNELS};

/// Scalar payload of a decoded image, one variant per supported dtype.
#[derive(Debug, Clone)]
pub(crate) enum Scalars {
    U8(Vec<u8>),
    I16(Vec<i16>),
    U16(Vec<u16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Scalars {
    fn len(&self) -> usize {
        match self {
            Scalars::U8(v) => v.len(),
            Scalars::I16(v) => v.len(),
            Scalars::U16(v) => v.len(),
            Scalars::I32(v) => v.len(),
            Scalars::F32(v) => v.len(),
            Scalars::F64(v) => v.len(),
        }
    }

    fn is_integer(&self) -> bool {
        matches!(
            self,
            Scalars::U8(_) | Scalars::I16(_) | Scalars::U16(_) | Scalars::I32(_)
        )
    }

    fn to_f32(&self, slope: f64, inter: f64) -> Vec<f32> {
        let scale = |v: f64| (v * slope + inter) as f32;
        match self {
            Scalars::U8(v) => v.iter().map(|&x| scale(x as f64)).collect(),
            Scalars::I16(v) => v.iter().map(|&x| scale(x as f64)).collect(),
            Scalars::U16(v) => v.iter().map(|&x| scale(x as f64)).collect(),
            Scalars::I32(v) => v.iter().map(|&x| scale(x as f64)).collect(),
            Scalars::F32(v) => {
                if slope == 1.0 && inter == 0.0 {
                    v.clone()
                } else {
                    v.iter().map(|&x| scale(x as f64)).collect()
                }
            }
            Scalars::F64(v) => v.iter().map(|&x| scale(x)).collect(),
        }
    }

    fn to_f64(&self) -> Vec<f64> {
        match self {
            Scalars::U8(v) => v.iter().map(|&x| x as f64).collect(),
            Scalars::I16(v) => v.iter().map(|&x| x as f64).collect(),
            Scalars::U16(v) => v.iter().map(|&x| x as f64).collect(),
            Scalars::I32(v) => v.iter().map(|&x| x as f64).collect(),
            Scalars::F32(v) => v.iter().map(|&x| x as f64).collect(),
            Scalars::F64(v) => v.clone(),
        }
    }

    /// Integer values narrowed to u8 label ids; wider values become errors.
    fn to_label_ids(&self) -> Result<Vec<u8>> {
        fn narrow<T: Copy + Into<i64>>(v: &[T]) -> Result<Vec<u8>> {
            v.iter()
                .enumerate()
                .map(|(index, &x)| {
                    let wide: i64 = x.into();
                    u8::try_from(wide).map_err(|_| Error::InvalidClassId { id: wide, index })
                })
                .collect()
        }
        match self {
            Scalars::U8(v) => Ok(v.clone()),
            Scalars::I16(v) => narrow(v),
            Scalars::U16(v) => narrow(v),
            Scalars::I32(v) => narrow(v),
            _ => Err(Error::InvalidInput(
                "label volume has non-integer datatype".into(),
            )),
        }
    }
}

/// A decoded image before interpretation as intensity, label, or probability.
#[derive(Debug, Clone)]
pub(crate) struct RawImage {
    /// (nz, ny, nx)
    pub shape: (usize, usize, usize),
    /// Channel count along the slowest axis; 1 for plain 3D images.
    pub channels: usize,
    pub scalars: Scalars,
    pub spacing: Spacing,
    pub affine: Affine,
    pub scl_slope: f64,
    pub scl_inter: f64,
}

impl RawImage {
    fn expect_3d(&self, path: &Path) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::malformed(
                path,
                format!("expected a 3D image, got {} channels", self.channels),
            ));
        }
        Ok(())
    }
}

/// Either kind of 3D grid, for callers that accept both.
#[derive(Debug, Clone)]
pub enum AnyVolume {
    Intensity(Volume),
    Label(LabelVolume),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Nifti,
    Fixture,
}

fn format_of(path: &Path) -> Result<Format> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    if name.ends_with(".nii") || name.ends_with(".nii.gz") {
        Ok(Format::Nifti)
    } else if name.ends_with(".json") {
        Ok(Format::Fixture)
    } else {
        Err(Error::InvalidInput(format!(
            "unsupported volume extension on {}; expected .nii, .nii.gz, or .json",
            path.display()
        )))
    }
}

fn read_raw(path: &Path) -> Result<RawImage> {
    match format_of(path)? {
        Format::Nifti => nifti::read(path),
        Format::Fixture => fixture::read(path),
    }
}

/// Load a scalar intensity volume. Any supported dtype is accepted and
/// converted to f32 after applying the header's scaling slope/intercept.
pub fn load_intensity(path: &Path) -> Result<Volume> {
    let raw = read_raw(path)?;
    raw.expect_3d(path)?;
    let data = raw.scalars.to_f32(raw.scl_slope, raw.scl_inter);
    let data = Array3::from_shape_vec(raw.shape, data)
        .map_err(|e| Error::malformed(path, format!("shape/data mismatch: {e}")))?;
    Ok(Volume::new(data, raw.spacing)?.with_affine(raw.affine))
}

/// Load a label volume. The file must carry an integer dtype with no scaling,
/// and every voxel must be 0 or an id present in the class map.
pub fn load_labels(path: &Path, class_map: &ClassMap) -> Result<LabelVolume> {
    let raw = read_raw(path)?;
    raw.expect_3d(path)?;
    if raw.scl_slope != 1.0 || raw.scl_inter != 0.0 {
        return Err(Error::malformed(
            path,
            "label volume carries intensity scaling",
        ));
    }
    let ids = raw.scalars.to_label_ids()?;
    let data = Array3::from_shape_vec(raw.shape, ids)
        .map_err(|e| Error::malformed(path, format!("shape/data mismatch: {e}")))?;
    Ok(LabelVolume::new(data, raw.spacing, class_map.clone())?.with_affine(raw.affine))
}

/// Load either kind of volume: integer dtypes are interpreted as labels
/// (and validated against the class map), floating dtypes as intensities.
pub fn load_volume(path: &Path, class_map: &ClassMap) -> Result<AnyVolume> {
    let raw = read_raw(path)?;
    raw.expect_3d(path)?;
    if raw.scalars.is_integer() && raw.scl_slope == 1.0 && raw.scl_inter == 0.0 {
        load_labels(path, class_map).map(AnyVolume::Label)
    } else {
        load_intensity(path).map(AnyVolume::Intensity)
    }
}

/// Load any 3D volume as a binary mask: integer voxels are foreground when
/// nonzero, floating voxels when their scaled value reaches 0.5.
pub fn load_mask(path: &Path) -> Result<(Array3<bool>, Spacing, Affine)> {
    let raw = read_raw(path)?;
    raw.expect_3d(path)?;
    let mask = if raw.scalars.is_integer() {
        raw.scalars.to_f64().into_iter().map(|v| v != 0.0).collect()
    } else {
        raw.scalars
            .to_f32(raw.scl_slope, raw.scl_inter)
            .into_iter()
            .map(|v| v >= 0.5)
            .collect()
    };
    let mask = Array3::from_shape_vec(raw.shape, mask)
        .map_err(|e| Error::malformed(path, format!("shape/data mismatch: {e}")))?;
    Ok((mask, raw.spacing, raw.affine))
}

/// Load a per-class probability volume (4D, channel count 14).
pub fn load_prob(path: &Path) -> Result<ProbVolume> {
    let raw = read_raw(path)?;
    if raw.channels != PROB_CHANNELS {
        return Err(Error::malformed(
            path,
            format!(
                "probability volume must carry {PROB_CHANNELS} channels, got {}",
                raw.channels
            ),
        ));
    }
    let (nz, ny, nx) = raw.shape;
    let data = raw.scalars.to_f64();
    let data = Array4::from_shape_vec((raw.channels, nz, ny, nx), data)
        .map_err(|e| Error::malformed(path, format!("shape/data mismatch: {e}")))?;
    Ok(ProbVolume::new(data, raw.spacing)?.with_affine(raw.affine))
}

/// Save an intensity volume (float32 payload).
pub fn save_intensity(v: &Volume, path: &Path) -> Result<()> {
    let raw = RawImage {
        shape: v.shape(),
        channels: 1,
        scalars: Scalars::F32(v.data.iter().copied().collect()),
        spacing: v.spacing,
        affine: v.affine,
        scl_slope: 1.0,
        scl_inter: 0.0,
    };
    write_raw(&raw, path)
}

/// Save a label volume (uint8 payload).
pub fn save_labels(lbl: &LabelVolume, path: &Path) -> Result<()> {
    let raw = RawImage {
        shape: lbl.shape(),
        channels: 1,
        scalars: Scalars::U8(lbl.data.iter().copied().collect()),
        spacing: lbl.spacing,
        affine: lbl.affine,
        scl_slope: 1.0,
        scl_inter: 0.0,
    };
    write_raw(&raw, path)
}

/// Save a probability volume (4D float64 payload, channel-major).
pub fn save_prob(p: &ProbVolume, path: &Path) -> Result<()> {
    let raw = RawImage {
        shape: p.shape(),
        channels: PROB_CHANNELS,
        scalars: Scalars::F64(p.data.iter().copied().collect()),
        spacing: p.spacing,
        affine: p.affine,
        scl_slope: 1.0,
        scl_inter: 0.0,
    };
    write_raw(&raw, path)
}

fn write_raw(raw: &RawImage, path: &Path) -> Result<()> {
    debug_assert_eq!(
        raw.scalars.len(),
        raw.shape.0 * raw.shape.1 * raw.shape.2 * raw.channels
    );
    match format_of(path)? {
        Format::Nifti => nifti::write(raw, path),
        Format::Fixture => fixture::write(raw, path),
    }
}
