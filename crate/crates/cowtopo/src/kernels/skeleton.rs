//! Topology-preserving 3D thinning.
//!
//! Iterative directional border thinning: each sub-iteration peels border
//! voxels of one face direction, deleting a voxel only when it is a simple
//! point (removal provably keeps all connectivity, tunnels, and cavities of
//! the object) and not a curve endpoint. Candidates are collected per
//! sub-iteration and re-verified sequentially in scan order before deletion,
//! so the result is deterministic and component counts are preserved exactly.
//!
//! Simple points are recognized by the two-condition characterization on the
//! 3x3x3 neighborhood: exactly one 26-connected foreground component in the
//! punctured neighborhood, and exactly one 6-connected background component
//! within the 18-neighborhood that touches the center by a face.

use ndarray::{s, Array3};

use super::mask_bbox;

/// A 1-voxel-wide centerline with its curve endpoints.
///
/// Endpoints are skeleton voxels with exactly one skeleton 26-neighbor; an
/// isolated skeleton voxel counts as one endpoint so every component offers
/// at least one anchor.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub mask: Array3<bool>,
    pub endpoints: Vec<(usize, usize, usize)>,
}

const CENTER: usize = 13;

#[inline]
fn cell(dz: i64, dy: i64, dx: i64) -> usize {
    ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize
}

#[inline]
fn cell_offset(i: usize) -> (i64, i64, i64) {
    ((i / 9) as i64 - 1, ((i / 3) % 3) as i64 - 1, (i % 3) as i64 - 1)
}

fn manhattan(i: usize) -> i64 {
    let (z, y, x) = cell_offset(i);
    z.abs() + y.abs() + x.abs()
}

/// Gather the 3x3x3 neighborhood of (z, y, x); out-of-bounds cells are background.
#[inline]
fn neighborhood(mask: &Array3<bool>, z: usize, y: usize, x: usize) -> [bool; 27] {
    let (nz, ny, nx) = mask.dim();
    let mut nb = [false; 27];
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (pz, py, px) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
                if pz >= 0
                    && py >= 0
                    && px >= 0
                    && (pz as usize) < nz
                    && (py as usize) < ny
                    && (px as usize) < nx
                {
                    nb[cell(dz, dy, dx)] = mask[(pz as usize, py as usize, px as usize)];
                }
            }
        }
    }
    nb
}

fn foreground_neighbor_count(nb: &[bool; 27]) -> usize {
    nb.iter()
        .enumerate()
        .filter(|&(i, &v)| i != CENTER && v)
        .count()
}

/// Condition 1: the foreground cells around the center form one 26-connected set.
fn single_foreground_component(nb: &[bool; 27]) -> bool {
    let mut cells = [false; 27];
    let mut total = 0;
    for i in 0..27 {
        if i != CENTER && nb[i] {
            cells[i] = true;
            total += 1;
        }
    }
    if total == 0 {
        return false;
    }
    let seed = cells.iter().position(|&v| v).unwrap();
    let mut seen = [false; 27];
    let mut stack = [0usize; 27];
    let mut top = 0;
    seen[seed] = true;
    stack[top] = seed;
    top += 1;
    let mut reached = 0;
    while top > 0 {
        top -= 1;
        let cur = stack[top];
        reached += 1;
        let (cz, cy, cx) = cell_offset(cur);
        for i in 0..27 {
            if seen[i] || !cells[i] {
                continue;
            }
            let (oz, oy, ox) = cell_offset(i);
            let (dz, dy, dx) = ((cz - oz).abs(), (cy - oy).abs(), (cx - ox).abs());
            if dz <= 1 && dy <= 1 && dx <= 1 {
                seen[i] = true;
                stack[top] = i;
                top += 1;
            }
        }
    }
    reached == total
}

/// Condition 2: the background cells of the 18-neighborhood that are
/// 6-adjacent to the center form one 6-connected set.
fn single_background_component(nb: &[bool; 27]) -> bool {
    let mut cells = [false; 27]; // background cells of the 18-neighborhood
    for i in 0..27 {
        if i != CENTER && manhattan(i) <= 2 && !nb[i] {
            cells[i] = true;
        }
    }
    let face_cells: Vec<usize> = (0..27).filter(|&i| manhattan(i) == 1 && cells[i]).collect();
    if face_cells.is_empty() {
        return false; // deleting an interior voxel would open a cavity
    }
    let mut seen = [false; 27];
    let mut stack = [0usize; 27];
    let mut top = 0;
    seen[face_cells[0]] = true;
    stack[top] = face_cells[0];
    top += 1;
    while top > 0 {
        top -= 1;
        let cur = stack[top];
        let (cz, cy, cx) = cell_offset(cur);
        for i in 0..27 {
            if seen[i] || !cells[i] {
                continue;
            }
            let (oz, oy, ox) = cell_offset(i);
            if (cz - oz).abs() + (cy - oy).abs() + (cx - ox).abs() == 1 {
                seen[i] = true;
                stack[top] = i;
                top += 1;
            }
        }
    }
    face_cells.iter().all(|&i| seen[i])
}

#[inline]
fn is_simple(nb: &[bool; 27]) -> bool {
    single_foreground_component(nb) && single_background_component(nb)
}

const DIRECTIONS: [(i64, i64, i64); 6] = [
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
];

/// Thin a binary mask to its centerline.
pub fn skeletonize(mask: &Array3<bool>) -> Skeleton {
    let Some((lo, hi)) = mask_bbox(mask) else {
        return Skeleton {
            mask: Array3::from_elem(mask.dim(), false),
            endpoints: Vec::new(),
        };
    };

    // Thin inside the tight bounding box; everything outside is background.
    let mut work = mask
        .slice(s![lo.0..=hi.0, lo.1..=hi.1, lo.2..=hi.2])
        .to_owned();
    let (wz, wy, wx) = work.dim();

    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    loop {
        let mut deleted_in_cycle = false;
        for &(dz, dy, dx) in &DIRECTIONS {
            candidates.clear();
            for ((z, y, x), &v) in work.indexed_iter() {
                if !v {
                    continue;
                }
                let (pz, py, px) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
                let border = pz < 0
                    || py < 0
                    || px < 0
                    || pz as usize >= wz
                    || py as usize >= wy
                    || px as usize >= wx
                    || !work[(pz as usize, py as usize, px as usize)];
                if !border {
                    continue;
                }
                let nb = neighborhood(&work, z, y, x);
                if foreground_neighbor_count(&nb) == 1 {
                    continue; // curve endpoint
                }
                if is_simple(&nb) {
                    candidates.push((z, y, x));
                }
            }
            // Sequential re-check: earlier deletions can invalidate later
            // candidates, so each is re-verified against the current grid.
            for &(z, y, x) in &candidates {
                let nb = neighborhood(&work, z, y, x);
                if foreground_neighbor_count(&nb) != 1 && is_simple(&nb) {
                    work[(z, y, x)] = false;
                    deleted_in_cycle = true;
                }
            }
        }
        if !deleted_in_cycle {
            break;
        }
    }

    let mut out = Array3::from_elem(mask.dim(), false);
    out.slice_mut(s![lo.0..=hi.0, lo.1..=hi.1, lo.2..=hi.2])
        .assign(&work);

    let mut endpoints = Vec::new();
    for ((z, y, x), &v) in out.indexed_iter() {
        if v {
            let nb = neighborhood(&out, z, y, x);
            if foreground_neighbor_count(&nb) <= 1 {
                endpoints.push((z, y, x));
            }
        }
    }

    Skeleton {
        mask: out,
        endpoints,
    }
}
