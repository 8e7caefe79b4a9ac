//! Voxel grid types: scalar volumes, label volumes, and per-class probability
//! volumes, all in z-major (z, y, x) order with millimeter spacing metadata.

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::classes::{ClassMap, CowClass};
use crate::error::{Error, Result};

/// Millimeters per voxel along the z, y, x axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub dz: f64,
    pub dy: f64,
    pub dx: f64,
}

impl Spacing {
    pub fn new(dz: f64, dy: f64, dx: f64) -> Result<Self> {
        let s = Spacing { dz, dy, dx };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, v) in [("z", self.dz), ("y", self.dy), ("x", self.dx)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "spacing along {axis} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Isotropic unit spacing, for tests and synthetic grids.
    pub fn unit() -> Self {
        Spacing {
            dz: 1.0,
            dy: 1.0,
            dx: 1.0,
        }
    }

    /// As a `[dz, dy, dx]` array.
    pub fn as_array(&self) -> [f64; 3] {
        [self.dz, self.dy, self.dx]
    }

    pub fn approx_eq(&self, other: &Spacing, tol: f64) -> bool {
        (self.dz - other.dz).abs() <= tol
            && (self.dy - other.dy).abs() <= tol
            && (self.dx - other.dx).abs() <= tol
    }
}

/// Voxel-to-world transform in the NIfTI convention: rows map the (ix, iy, iz)
/// voxel index (x fastest) to world x/y/z millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine(pub [[f64; 4]; 4]);

impl Affine {
    /// Axis-aligned affine derived from spacing, origin at zero.
    pub fn from_spacing(spacing: &Spacing) -> Self {
        Affine([
            [spacing.dx, 0.0, 0.0, 0.0],
            [0.0, spacing.dy, 0.0, 0.0],
            [0.0, 0.0, spacing.dz, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    /// World coordinates (x, y, z) of a voxel given by (z, y, x) indices.
    pub fn world_of_zyx(&self, z: usize, y: usize, x: usize) -> [f64; 3] {
        let idx = [x as f64, y as f64, z as f64, 1.0];
        let mut out = [0.0; 3];
        for (row, slot) in out.iter_mut().enumerate() {
            *slot = (0..4).map(|c| self.0[row][c] * idx[c]).sum();
        }
        out
    }

    /// Affine for a grid resampled to a new spacing, keeping voxel centers of
    /// the two grids aligned at the shared corner convention.
    pub fn rescaled(&self, old: &Spacing, new: &Spacing) -> Affine {
        // Index mapping i_old = (i_new + 0.5) * new/old - 0.5 per axis, so
        // columns scale by new/old and the origin shifts by half the change.
        let ratio = [new.dx / old.dx, new.dy / old.dy, new.dz / old.dz];
        let mut m = self.0;
        for (out_row, src_row) in m.iter_mut().zip(self.0.iter()).take(3) {
            let mut shift = 0.0;
            for col in 0..3 {
                shift += src_row[col] * (0.5 * ratio[col] - 0.5);
                out_row[col] = src_row[col] * ratio[col];
            }
            out_row[3] = src_row[3] + shift;
        }
        Affine(m)
    }
}

/// A 3D scalar intensity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub data: Array3<f32>,
    pub spacing: Spacing,
    pub affine: Affine,
}

impl Volume {
    pub fn new(data: Array3<f32>, spacing: Spacing) -> Result<Self> {
        spacing.validate()?;
        let affine = Affine::from_spacing(&spacing);
        let v = Volume {
            data,
            spacing,
            affine,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn with_affine(mut self, affine: Affine) -> Self {
        self.affine = affine;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.spacing.validate()?;
        if let Some((idx, v)) = self
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::InvalidVolume(format!(
                "non-finite intensity {v} at linear voxel index {idx}"
            )));
        }
        Ok(())
    }

    /// Grid shape as (nz, ny, nx).
    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }
}

/// A 3D grid of class ids: 0 is background, foreground ids come from a [`ClassMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub data: Array3<u8>,
    pub spacing: Spacing,
    pub affine: Affine,
    pub class_map: ClassMap,
}

impl LabelVolume {
    pub fn new(data: Array3<u8>, spacing: Spacing, class_map: ClassMap) -> Result<Self> {
        spacing.validate()?;
        let affine = Affine::from_spacing(&spacing);
        let lbl = LabelVolume {
            data,
            spacing,
            affine,
            class_map,
        };
        lbl.validate()?;
        Ok(lbl)
    }

    pub fn with_affine(mut self, affine: Affine) -> Self {
        self.affine = affine;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.spacing.validate()?;
        for (idx, &id) in self.data.iter().enumerate() {
            if !self.class_map.is_valid_label(id) {
                return Err(Error::InvalidClassId {
                    id: id as i64,
                    index: idx,
                });
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    /// Binary mask of one class: true exactly where the label equals that class.
    pub fn class_mask(&self, class: CowClass) -> Array3<bool> {
        let id = self.class_map.id(class);
        self.data.mapv(|v| v == id)
    }

    /// Binary mask of the whole foreground (any nonzero label).
    pub fn foreground_mask(&self) -> Array3<bool> {
        self.data.mapv(|v| v != 0)
    }
}

/// One-hot view of a single class as a 0/1 scalar grid.
pub fn one_hot(lbl: &LabelVolume, class: CowClass) -> Array3<f64> {
    let id = lbl.class_map.id(class);
    lbl.data.mapv(|v| if v == id { 1.0 } else { 0.0 })
}

/// Per-class probability channels: channel 0 is background, channel `k`
/// (1-based) is `CowClass::ALL[k - 1]`. Shape is (channel, z, y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVolume {
    pub data: Array4<f64>,
    pub spacing: Spacing,
    pub affine: Affine,
}

/// Channel count of a probability volume: 13 foreground classes plus background.
pub const PROB_CHANNELS: usize = 14;

impl ProbVolume {
    pub fn new(data: Array4<f64>, spacing: Spacing) -> Result<Self> {
        spacing.validate()?;
        let affine = Affine::from_spacing(&spacing);
        let p = ProbVolume {
            data,
            spacing,
            affine,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_affine(mut self, affine: Affine) -> Self {
        self.affine = affine;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.spacing.validate()?;
        let channels = self.data.dim().0;
        if channels != PROB_CHANNELS {
            return Err(Error::InvalidVolume(format!(
                "probability volume must carry {PROB_CHANNELS} channels, got {channels}"
            )));
        }
        if let Some((idx, v)) = self
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidVolume(format!(
                "probability {v} outside [0,1] at linear index {idx}"
            )));
        }
        Ok(())
    }

    /// Spatial shape as (nz, ny, nx).
    pub fn shape(&self) -> (usize, usize, usize) {
        let (_, nz, ny, nx) = self.data.dim();
        (nz, ny, nx)
    }

    /// Probability channel of one foreground class.
    pub fn class_channel(&self, class: CowClass) -> ndarray::ArrayView3<'_, f64> {
        self.data.index_axis(ndarray::Axis(0), class.index() + 1)
    }

    /// The exact one-hot probabilities encoding a label volume.
    pub fn one_hot_of(lbl: &LabelVolume) -> Self {
        let (nz, ny, nx) = lbl.shape();
        let mut data = Array4::<f64>::zeros((PROB_CHANNELS, nz, ny, nx));
        for ((z, y, x), &id) in lbl.data.indexed_iter() {
            let channel = match lbl.class_map.class(id) {
                Some(class) => class.index() + 1,
                None => 0,
            };
            data[(channel, z, y, x)] = 1.0;
        }
        ProbVolume {
            data,
            spacing: lbl.spacing,
            affine: lbl.affine,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn label_fixture(ids: &[u8], shape: (usize, usize, usize)) -> LabelVolume {
        let data = Array3::from_shape_vec(shape, ids.to_vec()).unwrap();
        LabelVolume::new(data, Spacing::unit(), ClassMap::default()).unwrap()
    }

    #[test]
    fn spacing_rejects_nonpositive() {
        assert!(Spacing::new(0.6, 0.3525, 0.3525).is_ok());
        assert!(Spacing::new(0.0, 1.0, 1.0).is_err());
        assert!(Spacing::new(1.0, -1.0, 1.0).is_err());
        assert!(Spacing::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn volume_rejects_non_finite() {
        let mut data = Array3::<f32>::zeros((2, 2, 2));
        data[(0, 0, 0)] = f32::INFINITY;
        assert!(Volume::new(data, Spacing::unit()).is_err());
    }

    #[test]
    fn label_volume_rejects_unknown_id() {
        let data = Array3::from_elem((2, 2, 2), 99u8);
        let err = LabelVolume::new(data, Spacing::unit(), ClassMap::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidClassId { id: 99, .. }));
    }

    #[test]
    fn one_hot_all_background_is_zero() {
        let lbl = label_fixture(&[0; 8], (2, 2, 2));
        let mask = one_hot(&lbl, CowClass::Acom);
        assert!(mask.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_pure_class_is_one() {
        let id = ClassMap::default().id(CowClass::Ba);
        let lbl = label_fixture(&[id; 8], (2, 2, 2));
        let mask = one_hot(&lbl, CowClass::Ba);
        assert!(mask.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn one_hot_masks_partition_foreground() {
        // Mixed grid: several classes plus background.
        let map = ClassMap::default();
        let ids = vec![
            0,
            map.id(CowClass::Ba),
            map.id(CowClass::Acom),
            0,
            map.id(CowClass::LPcom),
            map.id(CowClass::ThirdA2),
            map.id(CowClass::RIca),
            0,
        ];
        let lbl = label_fixture(&ids, (2, 2, 2));
        let mut sum = Array3::<f64>::zeros((2, 2, 2));
        for class in CowClass::ALL {
            sum += &one_hot(&lbl, class);
        }
        for (idx, &id) in lbl.data.indexed_iter() {
            let expect = if id == 0 { 0.0 } else { 1.0 };
            assert_eq!(sum[idx], expect);
        }
    }

    #[test]
    fn one_hot_prob_volume_is_valid_and_sums_to_one() {
        let map = ClassMap::default();
        let lbl = label_fixture(&[0, map.id(CowClass::Ba), 0, map.id(CowClass::Acom)], (1, 2, 2));
        let prob = ProbVolume::one_hot_of(&lbl);
        prob.validate().unwrap();
        for z in 0..1 {
            for y in 0..2 {
                for x in 0..2 {
                    let total: f64 = (0..PROB_CHANNELS).map(|c| prob.data[(c, z, y, x)]).sum();
                    assert_eq!(total, 1.0);
                }
            }
        }
    }

    #[test]
    fn affine_rescale_keeps_voxel_center_world_positions() {
        let old = Spacing::new(1.2, 0.7, 0.7).unwrap();
        let new = Spacing::new(0.6, 0.35, 0.35).unwrap();
        let affine = Affine::from_spacing(&old);
        let rescaled = affine.rescaled(&old, &new);
        // New voxel j center must coincide with old fractional index
        // (j + 0.5) * new/old - 0.5 pushed through the old affine.
        let (z, y, x) = (3usize, 5usize, 7usize);
        let frac = |i: usize, n: f64, o: f64| (i as f64 + 0.5) * (n / o) - 0.5;
        let fz = frac(z, new.dz, old.dz);
        let fy = frac(y, new.dy, old.dy);
        let fx = frac(x, new.dx, old.dx);
        let expect = [fx * old.dx, fy * old.dy, fz * old.dz];
        let got = rescaled.world_of_zyx(z, y, x);
        for k in 0..3 {
            assert!((expect[k] - got[k]).abs() < 1e-12);
        }
    }
}
