//! Test-only support: independent brute-force oracles and shared phantom
//! fixtures. Compiled only for tests and behind the `testing` feature; none
//! of this is part of the toolkit surface.
//!
//! Every oracle here recomputes its answer from first principles (flood
//! fill, all-pairs distances) without touching the production kernels, so
//! kernel bugs cannot hide behind shared code.

use ndarray::Array3;

use crate::classes::{ClassMap, CowClass};
use crate::volume::{LabelVolume, Spacing};

/// Tiny deterministic generator (splitmix64) so fixtures need no external RNG.
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform f64 in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn next_below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Random binary mask with the given foreground probability.
pub fn random_mask(shape: (usize, usize, usize), density: f64, seed: u64) -> Array3<bool> {
    let mut rng = SplitMix64(seed);
    Array3::from_shape_fn(shape, |_| rng.next_f64() < density)
}

pub mod oracles {
    use super::*;

    /// Flood-fill decomposition returning the partition as sorted groups of
    /// linear indices (sorted by their smallest member).
    pub fn flood_fill_partition(
        mask: &Array3<bool>,
        offsets: &[(i64, i64, i64)],
    ) -> Vec<Vec<usize>> {
        let (nz, ny, nx) = mask.dim();
        let linear = |z: usize, y: usize, x: usize| (z * ny + y) * nx + x;
        let mut visited = Array3::from_elem(mask.dim(), false);
        let mut groups = Vec::new();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if !mask[(z, y, x)] || visited[(z, y, x)] {
                        continue;
                    }
                    let mut group = Vec::new();
                    let mut stack = vec![(z, y, x)];
                    visited[(z, y, x)] = true;
                    while let Some((cz, cy, cx)) = stack.pop() {
                        group.push(linear(cz, cy, cx));
                        for &(dz, dy, dx) in offsets {
                            let (pz, py, px) =
                                (cz as i64 + dz, cy as i64 + dy, cx as i64 + dx);
                            if pz < 0 || py < 0 || px < 0 {
                                continue;
                            }
                            let p = (pz as usize, py as usize, px as usize);
                            if p.0 < nz && p.1 < ny && p.2 < nx && mask[p] && !visited[p] {
                                visited[p] = true;
                                stack.push(p);
                            }
                        }
                    }
                    group.sort_unstable();
                    groups.push(group);
                }
            }
        }
        groups.sort_by_key(|g| g[0]);
        groups
    }

    /// All-pairs Euclidean distance to the nearest reference voxel, in mm.
    pub fn brute_force_edt(reference: &Array3<bool>, spacing: &Spacing) -> Array3<f64> {
        let refs: Vec<(usize, usize, usize)> = reference
            .indexed_iter()
            .filter(|(_, &v)| v)
            .map(|(idx, _)| idx)
            .collect();
        Array3::from_shape_fn(reference.dim(), |(z, y, x)| {
            refs.iter()
                .map(|&(rz, ry, rx)| {
                    let dz = (z as f64 - rz as f64) * spacing.dz;
                    let dy = (y as f64 - ry as f64) * spacing.dy;
                    let dx = (x as f64 - rx as f64) * spacing.dx;
                    (dz * dz + dy * dy + dx * dx).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
    }

    fn surface_voxels(mask: &Array3<bool>) -> Vec<(usize, usize, usize)> {
        let (nz, ny, nx) = mask.dim();
        let mut out = Vec::new();
        for ((z, y, x), &v) in mask.indexed_iter() {
            if !v {
                continue;
            }
            let mut exposed = false;
            for (dz, dy, dx) in
                [(-1i64, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
            {
                let (pz, py, px) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
                if pz < 0
                    || py < 0
                    || px < 0
                    || pz as usize >= nz
                    || py as usize >= ny
                    || px as usize >= nx
                    || !mask[(pz as usize, py as usize, px as usize)]
                {
                    exposed = true;
                    break;
                }
            }
            if exposed {
                out.push((z, y, x));
            }
        }
        out
    }

    /// Brute-force 95th percentile of symmetric surface distances.
    pub fn brute_force_hd95(
        pred: &Array3<bool>,
        gt: &Array3<bool>,
        spacing: &Spacing,
    ) -> f64 {
        let ps = surface_voxels(pred);
        let gs = surface_voxels(gt);
        let dist = |a: (usize, usize, usize), b: (usize, usize, usize)| {
            let dz = (a.0 as f64 - b.0 as f64) * spacing.dz;
            let dy = (a.1 as f64 - b.1 as f64) * spacing.dy;
            let dx = (a.2 as f64 - b.2 as f64) * spacing.dx;
            (dz * dz + dy * dy + dx * dx).sqrt()
        };
        let mut all = Vec::with_capacity(ps.len() + gs.len());
        for &p in &ps {
            all.push(gs.iter().map(|&g| dist(p, g)).fold(f64::INFINITY, f64::min));
        }
        for &g in &gs {
            all.push(ps.iter().map(|&p| dist(g, p)).fold(f64::INFINITY, f64::min));
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Linear interpolation between order statistics.
        let rank = 0.95 * (all.len() as f64 - 1.0);
        let lo = rank.floor() as usize;
        if lo + 1 < all.len() {
            all[lo] + (rank - lo as f64) * (all[lo + 1] - all[lo])
        } else {
            all[lo]
        }
    }

    /// Voxel sets of the two boundary shells and their IoU, materialized
    /// explicitly.
    pub fn brute_force_shell_iou(
        a: (&[usize; 3], &[usize; 3]),
        b: (&[usize; 3], &[usize; 3]),
        d: usize,
    ) -> f64 {
        use std::collections::HashSet;
        let shell = |(lo, hi): (&[usize; 3], &[usize; 3])| -> HashSet<[usize; 3]> {
            let mut set = HashSet::new();
            for z in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for x in lo[2]..=hi[2] {
                        let p = [z, y, x];
                        let near_face = (0..3).any(|k| p[k] - lo[k] < d || hi[k] - p[k] < d);
                        if near_face {
                            set.insert(p);
                        }
                    }
                }
            }
            set
        };
        let sa = shell(a);
        let sb = shell(b);
        let inter = sa.intersection(&sb).count();
        let union = sa.union(&sb).count();
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

pub mod phantoms {
    use super::*;

    /// Write a solid block of one class into a label grid.
    pub fn put_block(
        data: &mut Array3<u8>,
        map: &ClassMap,
        class: CowClass,
        corner: (usize, usize, usize),
        size: (usize, usize, usize),
    ) {
        for z in corner.0..corner.0 + size.0 {
            for y in corner.1..corner.1 + size.1 {
                for x in corner.2..corner.2 + size.2 {
                    data[(z, y, x)] = map.id(class);
                }
            }
        }
    }

    /// A textbook complete CoW at unit spacing: all thirteen classes as
    /// touching blocks, so every graph edge is present.
    pub fn complete_cow() -> LabelVolume {
        let map = ClassMap::default();
        let mut data = Array3::<u8>::zeros((8, 15, 24));
        let mut put = |class, corner| put_block(&mut data, &map, class, corner, (3, 3, 3));
        // Posterior chain: L-PCA | BA | R-PCA touch along x.
        put(CowClass::LPca, (0, 0, 7));
        put(CowClass::Ba, (0, 0, 10));
        put(CowClass::RPca, (0, 0, 13));
        // Pcoms bridge PCA toward ICA territory.
        put(CowClass::LPcom, (0, 3, 5));
        put(CowClass::RPcom, (0, 3, 15));
        // ICAs.
        put(CowClass::LIca, (0, 6, 4));
        put(CowClass::RIca, (0, 6, 16));
        // MCAs lateral to the ICAs.
        put(CowClass::LMca, (0, 6, 1));
        put(CowClass::RMca, (0, 6, 19));
        // ACAs touch their ICAs along y.
        put(CowClass::LAca, (0, 9, 4));
        put(CowClass::RAca, (0, 9, 16));
        // Acom between the ACA territories, 3rd-A2 above it.
        put(CowClass::Acom, (0, 9, 10));
        put(CowClass::ThirdA2, (4, 9, 10));
        LabelVolume::new(data, Spacing::unit(), map).unwrap()
    }

    /// Complete CoW with the left PCA detached from the basilar artery:
    /// the fetal posterior variant, where L-P1 is absent.
    pub fn fetal_posterior() -> LabelVolume {
        let full = complete_cow();
        let map = full.class_map.clone();
        let lpca = map.id(CowClass::LPca);
        let mut data = full.data.mapv(|v| if v == lpca { 0 } else { v });
        // Re-place L-PCA next to L-Pcom / L-ICA territory, away from BA.
        put_block(&mut data, &map, CowClass::LPca, (0, 3, 2), (3, 3, 3));
        LabelVolume::new(data, full.spacing, map).unwrap()
    }

    /// Ground truth with an intact L-Pcom tube plus context classes, and a
    /// prediction where the tube has a two-slice gap.
    pub fn split_pcom_pair() -> (LabelVolume, LabelVolume) {
        let map = ClassMap::default();
        let mut gt = Array3::<u8>::zeros((130, 9, 9));
        // Thick 3x3 L-Pcom tube, 120 long: 1080 voxels.
        put_block(&mut gt, &map, CowClass::LPcom, (2, 3, 3), (120, 3, 3));
        // Context classes so the case is not single-class.
        put_block(&mut gt, &map, CowClass::Ba, (2, 0, 0), (30, 2, 2));
        put_block(&mut gt, &map, CowClass::Acom, (40, 7, 0), (25, 2, 2));
        let gt = LabelVolume::new(gt, Spacing::unit(), map.clone()).unwrap();

        let lpcom = map.id(CowClass::LPcom);
        let mut pred = gt.data.clone();
        for z in 30..32 {
            for y in 3..6 {
                for x in 3..6 {
                    debug_assert_eq!(pred[(z, y, x)], lpcom);
                    pred[(z, y, x)] = 0;
                }
            }
        }
        let pred = LabelVolume::new(pred, gt.spacing, map).unwrap();
        (pred, gt)
    }

    /// The five single-class refinement phantoms, keyed by expected branch.
    pub mod refine_cases {
        use super::*;

        pub fn one_component() -> Array3<bool> {
            let mut m = Array3::from_elem((40, 3, 3), false);
            for z in 0..40 {
                m[(z, 1, 1)] = true;
            }
            m
        }

        /// Two colinear 25-voxel tubes with a 5-voxel gap.
        pub fn bridgeable_pair() -> Array3<bool> {
            let mut m = Array3::from_elem((60, 3, 3), false);
            for z in 0..25 {
                m[(z, 1, 1)] = true;
            }
            for z in 30..55 {
                m[(z, 1, 1)] = true;
            }
            m
        }

        /// Components of 5 and 8 voxels, both below the meaningful threshold.
        pub fn subthreshold_pair() -> Array3<bool> {
            let mut m = Array3::from_elem((20, 5, 5), false);
            for z in 0..5 {
                m[(z, 1, 1)] = true;
            }
            for z in 10..18 {
                m[(z, 3, 3)] = true;
            }
            m
        }

        /// Two meaningful components whose closest endpoints are 40 apart.
        pub fn far_pair() -> Array3<bool> {
            let mut m = Array3::from_elem((140, 3, 3), false);
            for z in 0..50 {
                m[(z, 1, 1)] = true;
            }
            for z in 90..130 {
                m[(z, 1, 1)] = true;
            }
            m
        }

        /// Components of sizes 60, 55, 3, and 2; the two large ones 4 apart.
        pub fn many_components() -> Array3<bool> {
            let mut m = Array3::from_elem((130, 8, 8), false);
            for z in 0..60 {
                m[(z, 1, 1)] = true;
            }
            for z in 63..118 {
                m[(z, 1, 1)] = true;
            }
            m[(125, 6, 1)] = true;
            m[(125, 6, 2)] = true;
            m[(125, 6, 3)] = true;
            m[(120, 6, 6)] = true;
            m[(121, 6, 6)] = true;
            m
        }
    }
}
