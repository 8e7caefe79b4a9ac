//! Connected-component labeling of binary voxel grids.

use std::collections::VecDeque;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

/// Voxel neighborhood regime: face (6), face+edge (18), or full (26).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[derive(Default)]
pub enum Connectivity {
    #[serde(rename = "6")]
    Six,
    #[serde(rename = "18")]
    Eighteen,
    #[serde(rename = "26")]
    #[default]
    TwentySix,
}


impl Connectivity {
    pub fn from_u32(v: u32) -> Option<Self> {
        match v {
            6 => Some(Connectivity::Six),
            18 => Some(Connectivity::Eighteen),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }

    pub fn as_u32(self) -> u32 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Neighbor offsets of this regime, in a fixed deterministic order.
    pub fn offsets(self) -> Vec<(i64, i64, i64)> {
        let max_manhattan = match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        };
        let mut out = Vec::with_capacity(26);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let m = dz.abs() + dy.abs() + dx.abs();
                    if m > 0 && m <= max_manhattan {
                        out.push((dz, dy, dx));
                    }
                }
            }
        }
        out
    }
}

/// Decomposition of a binary mask into connected components.
///
/// Component ids are dense 1..=num, assigned in descending size order with
/// ties broken by the smallest linear voxel index, so the labeling is a pure
/// function of the mask.
#[derive(Debug, Clone)]
pub struct ComponentSet {
    pub labels: Array3<u32>,
    /// Voxel count per component; `sizes[0]` belongs to id 1.
    pub sizes: Vec<usize>,
    pub connectivity: Connectivity,
}

impl ComponentSet {
    pub fn num(&self) -> usize {
        self.sizes.len()
    }

    /// Binary mask of one component (ids are 1-based).
    pub fn mask_of(&self, id: u32) -> Array3<bool> {
        self.labels.mapv(|v| v == id)
    }

    /// Mask of the largest component; all-false when there are no components.
    pub fn largest_mask(&self) -> Array3<bool> {
        if self.sizes.is_empty() {
            Array3::from_elem(self.labels.dim(), false)
        } else {
            self.mask_of(1)
        }
    }
}

/// Label the maximal connected regions of a binary mask.
pub fn connected_components(mask: &Array3<bool>, conn: Connectivity) -> ComponentSet {
    let dim = mask.dim();
    let (nz, ny, nx) = dim;
    let offsets = conn.offsets();
    let mut labels = Array3::<u32>::zeros(dim);
    // (size, first linear index, provisional id)
    let mut records: Vec<(usize, usize, u32)> = Vec::new();
    let mut queue = VecDeque::new();
    let mut next = 1u32;

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask[(z, y, x)] || labels[(z, y, x)] != 0 {
                    continue;
                }
                let id = next;
                next += 1;
                let mut size = 0usize;
                labels[(z, y, x)] = id;
                queue.push_back((z, y, x));
                while let Some((cz, cy, cx)) = queue.pop_front() {
                    size += 1;
                    for &(dz, dy, dx) in &offsets {
                        let (pz, py, px) = (cz as i64 + dz, cy as i64 + dy, cx as i64 + dx);
                        if pz < 0 || py < 0 || px < 0 {
                            continue;
                        }
                        let (pz, py, px) = (pz as usize, py as usize, px as usize);
                        if pz >= nz || py >= ny || px >= nx {
                            continue;
                        }
                        if mask[(pz, py, px)] && labels[(pz, py, px)] == 0 {
                            labels[(pz, py, px)] = id;
                            queue.push_back((pz, py, px));
                        }
                    }
                }
                records.push((size, (z * ny + y) * nx + x, id));
            }
        }
    }

    // Deterministic ids: descending size, ties by smallest first linear index.
    records.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut remap = vec![0u32; records.len() + 1];
    for (rank, &(_, _, provisional)) in records.iter().enumerate() {
        remap[provisional as usize] = rank as u32 + 1;
    }
    labels.mapv_inplace(|v| if v == 0 { 0 } else { remap[v as usize] });

    ComponentSet {
        labels,
        sizes: records.iter().map(|r| r.0).collect(),
        connectivity: conn,
    }
}

/// Mask of the largest connected component; empty input yields an empty mask.
pub fn largest_component(mask: &Array3<bool>, conn: Connectivity) -> Array3<bool> {
    connected_components(mask, conn).largest_mask()
}
