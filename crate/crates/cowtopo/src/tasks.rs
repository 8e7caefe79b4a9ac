//! Segmentation-derived detection and graph classification: the tight RoI
//! bounding box of a predicted mask, box quality metrics, and the 8-bit CoW
//! edge lists deduced from a multi-class prediction.

use ndarray::s;
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::classes::CowClass;
use crate::error::{Error, Result};
use crate::kernels::{edt, largest_component, mask_bbox, Connectivity};
use crate::volume::LabelVolume;

/// Axis-aligned box of inclusive voxel indices in (z, y, x) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox3D {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox3D {
    pub fn new(min: [usize; 3], max: [usize; 3]) -> Result<Self> {
        for k in 0..3 {
            if min[k] > max[k] {
                return Err(Error::InvalidInput(format!(
                    "box min {min:?} exceeds max {max:?} on axis {k}"
                )));
            }
        }
        Ok(BoundingBox3D { min, max })
    }

    /// Inclusive extent per axis.
    pub fn extent(&self) -> [usize; 3] {
        [
            self.max[0] - self.min[0] + 1,
            self.max[1] - self.min[1] + 1,
            self.max[2] - self.min[2] + 1,
        ]
    }

    pub fn volume(&self) -> usize {
        let e = self.extent();
        e[0] * e[1] * e[2]
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    /// World-mm corners of the voxel-center extremes under an affine.
    pub fn world_corners(&self, affine: &crate::volume::Affine) -> ([f64; 3], [f64; 3]) {
        (
            affine.world_of_zyx(self.min[0], self.min[1], self.min[2]),
            affine.world_of_zyx(self.max[0], self.max[1], self.max[2]),
        )
    }
}

/// Tight box of the largest connected component of an RoI mask.
pub fn roi_box_from_mask(roi_mask: &Array3<bool>, conn: Connectivity) -> Result<BoundingBox3D> {
    if !roi_mask.iter().any(|&v| v) {
        return Err(Error::EmptyRoi);
    }
    let largest = largest_component(roi_mask, conn);
    let (lo, hi) = mask_bbox(&largest).expect("largest component is non-empty");
    BoundingBox3D::new([lo.0, lo.1, lo.2], [hi.0, hi.1, hi.2])
}

/// Intersection-over-union of two boxes in voxel units (inclusive extents).
pub fn box_iou(a: &BoundingBox3D, b: &BoundingBox3D) -> f64 {
    let mut inter = 1usize;
    for k in 0..3 {
        let lo = a.min[k].max(b.min[k]);
        let hi = a.max[k].min(b.max[k]);
        if lo > hi {
            return 0.0;
        }
        inter *= hi - lo + 1;
    }
    let union = a.volume() + b.volume() - inter;
    inter as f64 / union as f64
}

/// Membership in the boundary shell of a box: inside and within `d` voxels of
/// some face.
fn in_shell(b: &BoundingBox3D, p: [usize; 3], d: usize) -> bool {
    if !b.contains(p) {
        return false;
    }
    (0..3).any(|k| p[k] - b.min[k] < d || b.max[k] - p[k] < d)
}

/// IoU of the two boxes' boundary shells of thickness `d`, computed by
/// voxelization over the joint extent.
pub fn box_boundary_iou(a: &BoundingBox3D, b: &BoundingBox3D, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidInput("shell thickness must be at least 1".into()));
    }
    let lo = [
        a.min[0].min(b.min[0]),
        a.min[1].min(b.min[1]),
        a.min[2].min(b.min[2]),
    ];
    let hi = [
        a.max[0].max(b.max[0]),
        a.max[1].max(b.max[1]),
        a.max[2].max(b.max[2]),
    ];
    let mut inter = 0usize;
    let mut union = 0usize;
    for z in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for x in lo[2]..=hi[2] {
                let p = [z, y, x];
                let ina = in_shell(a, p, d);
                let inb = in_shell(b, p, d);
                if ina && inb {
                    inter += 1;
                }
                if ina || inb {
                    union += 1;
                }
            }
        }
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Presence bits of the eight CoW graph edges, in left-to-right order:
/// anterior [L-A1, Acom, 3rd-A2, R-A1], posterior [L-Pcom, L-P1, R-P1, R-Pcom].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CowGraph {
    #[serde(with = "bits")]
    pub anterior: [bool; 4],
    #[serde(with = "bits")]
    pub posterior: [bool; 4],
}

impl CowGraph {
    pub const ANTERIOR_EDGES: [&'static str; 4] = ["L-A1", "Acom", "3rd-A2", "R-A1"];
    pub const POSTERIOR_EDGES: [&'static str; 4] = ["L-Pcom", "L-P1", "R-P1", "R-Pcom"];

    /// All 8 bits as one array, anterior first.
    pub fn bits(&self) -> [bool; 8] {
        [
            self.anterior[0],
            self.anterior[1],
            self.anterior[2],
            self.anterior[3],
            self.posterior[0],
            self.posterior[1],
            self.posterior[2],
            self.posterior[3],
        ]
    }

    /// Compact variant code like "1011" for one half of the graph.
    pub fn variant_code(half: &[bool; 4]) -> String {
        half.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

mod bits {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[bool; 4], ser: S) -> Result<S::Ok, S::Error> {
        let ints: [u8; 4] = [v[0] as u8, v[1] as u8, v[2] as u8, v[3] as u8];
        ints.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<[bool; 4], D::Error> {
        let ints = <[u8; 4]>::deserialize(de)?;
        let mut out = [false; 4];
        for (slot, &i) in out.iter_mut().zip(ints.iter()) {
            *slot = match i {
                0 => false,
                1 => true,
                other => {
                    return Err(serde::de::Error::custom(format!(
                        "edge bit must be 0 or 1, got {other}"
                    )))
                }
            };
        }
        Ok(out)
    }
}

/// Parameters of the segmentation-to-graph deduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphDeriveConfig {
    /// A communicating/variant edge is present when its class's largest
    /// component reaches this voxel count.
    pub presence_min_voxels: usize,
    /// A segment edge is present when its two witness classes come within
    /// this distance of each other.
    pub adjacency_radius_mm: f64,
    pub connectivity: Connectivity,
}

impl Default for GraphDeriveConfig {
    fn default() -> Self {
        GraphDeriveConfig {
            presence_min_voxels: 20,
            adjacency_radius_mm: 1.0,
            connectivity: Connectivity::TwentySix,
        }
    }
}

impl GraphDeriveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.presence_min_voxels == 0 {
            return Err(Error::InvalidConfig("presence_min_voxels must be positive".into()));
        }
        if !self.adjacency_radius_mm.is_finite() || self.adjacency_radius_mm <= 0.0 {
            return Err(Error::InvalidConfig("adjacency_radius_mm must be positive".into()));
        }
        Ok(())
    }
}

/// Largest-component voxel count of one class.
fn largest_size(lbl: &LabelVolume, class: CowClass, conn: Connectivity) -> usize {
    let mask = lbl.class_mask(class);
    largest_component(&mask, conn).iter().filter(|&&v| v).count()
}

/// Minimum distance in mm between any voxel of `a` and the set `b`,
/// restricted to their joint bounding box. `None` when either side is empty.
fn min_gap_mm(lbl: &LabelVolume, a: CowClass, b: CowClass) -> Option<f64> {
    let mask_a = lbl.class_mask(a);
    let mask_b = lbl.class_mask(b);
    let (lo_a, hi_a) = mask_bbox(&mask_a)?;
    let (lo_b, hi_b) = mask_bbox(&mask_b)?;
    let lo = (lo_a.0.min(lo_b.0), lo_a.1.min(lo_b.1), lo_a.2.min(lo_b.2));
    let hi = (hi_a.0.max(hi_b.0), hi_a.1.max(hi_b.1), hi_a.2.max(hi_b.2));

    let crop_b = mask_b
        .slice(s![lo.0..=hi.0, lo.1..=hi.1, lo.2..=hi.2])
        .to_owned();
    let field = edt(&crop_b, &lbl.spacing).ok()?;
    let crop_a = mask_a
        .slice(s![lo.0..=hi.0, lo.1..=hi.1, lo.2..=hi.2])
        .to_owned();
    let mut best: Option<f64> = None;
    for (&d, &m) in field.values.iter().zip(crop_a.iter()) {
        if m {
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

/// Deduce the eight edge bits from a multi-class prediction.
///
/// Communicating and variant edges (Acom, Pcoms, 3rd-A2) are presence tests
/// on their own class. Segment edges are contact tests: an A1 exists when the
/// ACA of that side reaches its ICA, a P1 when the PCA reaches the basilar
/// artery.
pub fn derive_graph(lbl: &LabelVolume, cfg: &GraphDeriveConfig) -> Result<CowGraph> {
    cfg.validate()?;
    let present =
        |class: CowClass| largest_size(lbl, class, cfg.connectivity) >= cfg.presence_min_voxels;
    let touches = |a: CowClass, b: CowClass| {
        min_gap_mm(lbl, a, b).is_some_and(|d| d <= cfg.adjacency_radius_mm)
    };

    Ok(CowGraph {
        anterior: [
            touches(CowClass::LAca, CowClass::LIca), // L-A1
            present(CowClass::Acom),
            present(CowClass::ThirdA2),
            touches(CowClass::RAca, CowClass::RIca), // R-A1
        ],
        posterior: [
            present(CowClass::LPcom),
            touches(CowClass::LPca, CowClass::Ba), // L-P1
            touches(CowClass::RPca, CowClass::Ba), // R-P1
            present(CowClass::RPcom),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::ClassMap;
    use crate::volume::Spacing;

    #[test]
    fn solid_cube_box_is_tight() {
        let mut m = Array3::from_elem((32, 32, 32), false);
        for z in 10..=20 {
            for y in 10..=20 {
                for x in 10..=20 {
                    m[(z, y, x)] = true;
                }
            }
        }
        let b = roi_box_from_mask(&m, Connectivity::TwentySix).unwrap();
        assert_eq!(b.min, [10, 10, 10]);
        assert_eq!(b.max, [20, 20, 20]);
    }

    #[test]
    fn distant_speck_does_not_grow_the_box() {
        let mut m = Array3::from_elem((32, 32, 32), false);
        for z in 10..=20 {
            for y in 10..=20 {
                for x in 10..=20 {
                    m[(z, y, x)] = true;
                }
            }
        }
        m[(30, 2, 2)] = true;
        let b = roi_box_from_mask(&m, Connectivity::TwentySix).unwrap();
        assert_eq!(b.min, [10, 10, 10]);
        assert_eq!(b.max, [20, 20, 20]);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let m = Array3::from_elem((4, 4, 4), false);
        assert!(matches!(
            roi_box_from_mask(&m, Connectivity::TwentySix),
            Err(Error::EmptyRoi)
        ));
    }

    #[test]
    fn iou_of_identical_disjoint_and_overlapping() {
        let a = BoundingBox3D::new([0, 0, 0], [9, 9, 9]).unwrap();
        assert_eq!(box_iou(&a, &a), 1.0);
        let far = BoundingBox3D::new([20, 20, 20], [25, 25, 25]).unwrap();
        assert_eq!(box_iou(&a, &far), 0.0);
        let b = BoundingBox3D::new([5, 0, 0], [14, 9, 9]).unwrap();
        assert!((box_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(box_iou(&a, &b), box_iou(&b, &a));
    }

    #[test]
    fn boundary_iou_identical_and_disjoint() {
        let a = BoundingBox3D::new([0, 0, 0], [9, 9, 9]).unwrap();
        assert_eq!(box_boundary_iou(&a, &a, 2).unwrap(), 1.0);
        let far = BoundingBox3D::new([30, 30, 30], [35, 35, 35]).unwrap();
        assert_eq!(box_boundary_iou(&a, &far, 2).unwrap(), 0.0);
        assert!(box_boundary_iou(&a, &far, 0).is_err());
    }

    #[test]
    fn nested_boxes_shell_value() {
        let outer = BoundingBox3D::new([0, 0, 0], [9, 9, 9]).unwrap();
        let inner = BoundingBox3D::new([2, 2, 2], [7, 7, 7]).unwrap();
        // Direct set computation of both d=1 shells.
        let shell = |b: &BoundingBox3D| {
            let mut set = std::collections::HashSet::new();
            for z in b.min[0]..=b.max[0] {
                for y in b.min[1]..=b.max[1] {
                    for x in b.min[2]..=b.max[2] {
                        let p = [z, y, x];
                        if (0..3).any(|k| p[k] == b.min[k] || p[k] == b.max[k]) {
                            set.insert(p);
                        }
                    }
                }
            }
            set
        };
        let sa = shell(&outer);
        let sb = shell(&inner);
        let inter = sa.intersection(&sb).count();
        let union = sa.union(&sb).count();
        let expect = inter as f64 / union as f64;
        assert_eq!(box_boundary_iou(&outer, &inner, 1).unwrap(), expect);
    }

    /// Minimal graph phantom: every class a 3x3x3 block (27 voxels), arranged
    /// so each anterior/posterior witness pair touches face-to-face.
    fn mini_cow() -> LabelVolume {
        let map = ClassMap::default();
        let mut ids = Array3::<u8>::zeros((6, 12, 21));
        let mut put = |class: CowClass, z0: usize, y0: usize, x0: usize| {
            for z in z0..z0 + 3 {
                for y in y0..y0 + 3 {
                    for x in x0..x0 + 3 {
                        ids[(z, y, x)] = map.id(class);
                    }
                }
            }
        };
        // Posterior row: L-PCA | BA | R-PCA touching along x.
        put(CowClass::LPca, 0, 0, 6);
        put(CowClass::Ba, 0, 0, 9);
        put(CowClass::RPca, 0, 0, 12);
        // Pcoms nearby (presence only).
        put(CowClass::LPcom, 0, 3, 5);
        put(CowClass::RPcom, 0, 3, 13);
        // ICAs.
        put(CowClass::LIca, 0, 6, 3);
        put(CowClass::RIca, 0, 6, 15);
        // ACAs touching their ICAs along y.
        put(CowClass::LAca, 0, 9, 3);
        put(CowClass::RAca, 0, 9, 15);
        // Acom, 3rd-A2, MCAs (presence only).
        put(CowClass::Acom, 0, 9, 9);
        put(CowClass::ThirdA2, 3, 9, 9);
        put(CowClass::LMca, 3, 6, 0);
        put(CowClass::RMca, 3, 6, 18);
        LabelVolume::new(ids, Spacing::unit(), map).unwrap()
    }

    #[test]
    fn complete_phantom_has_all_eight_edges() {
        let lbl = mini_cow();
        let g = derive_graph(&lbl, &GraphDeriveConfig::default()).unwrap();
        assert_eq!(g.bits(), [true; 8]);
    }

    #[test]
    fn removing_acom_flips_exactly_that_bit() {
        let lbl = mini_cow();
        let map = lbl.class_map.clone();
        let mut data = lbl.data.clone();
        let acom = map.id(CowClass::Acom);
        data.mapv_inplace(|v| if v == acom { 0 } else { v });
        let without = LabelVolume::new(data, lbl.spacing, map).unwrap();

        let g_full = derive_graph(&lbl, &GraphDeriveConfig::default()).unwrap();
        let g_cut = derive_graph(&without, &GraphDeriveConfig::default()).unwrap();
        assert!(!g_cut.anterior[1]);
        let mut expect = g_full;
        expect.anterior[1] = false;
        assert_eq!(g_cut, expect);
    }

    #[test]
    fn fetal_posterior_has_no_p1() {
        // Pull L-PCA away from BA so their gap exceeds the contact radius.
        let lbl = mini_cow();
        let map = lbl.class_map.clone();
        let mut data = lbl.data.clone();
        let lpca = map.id(CowClass::LPca);
        data.mapv_inplace(|v| if v == lpca { 0 } else { v });
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    data[(z, y + 3, x)] = lpca; // far corner, touching nothing relevant
                }
            }
        }
        let fetal = LabelVolume::new(data, lbl.spacing, map).unwrap();
        let g = derive_graph(&fetal, &GraphDeriveConfig::default()).unwrap();
        assert!(!g.posterior[1], "L-P1 must be absent");
        assert!(g.posterior[0] && g.posterior[2] && g.posterior[3]);
    }

    #[test]
    fn translation_invariance() {
        let lbl = mini_cow();
        let (nz, ny, nx) = lbl.shape();
        let mut shifted = Array3::<u8>::zeros((nz + 4, ny + 4, nx + 4));
        for ((z, y, x), &v) in lbl.data.indexed_iter() {
            shifted[(z + 2, y + 3, x + 1)] = v;
        }
        let moved = LabelVolume::new(shifted, lbl.spacing, lbl.class_map.clone()).unwrap();
        let a = derive_graph(&lbl, &GraphDeriveConfig::default()).unwrap();
        let b = derive_graph(&moved, &GraphDeriveConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn graph_json_shape_matches_the_wire_format() {
        let g = CowGraph {
            anterior: [true, true, false, true],
            posterior: [false, true, true, false],
        };
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"anterior":[1,1,0,1],"posterior":[0,1,1,0]}"#);
        let back: CowGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
