//! Binary morphology on voxel grids.

use ndarray::Array3;

/// Offsets of the discrete Euclidean ball of the given voxel radius.
/// Radius 1 is the 7-voxel face-neighbor ball.
fn ball_offsets(radius_vox: u32) -> Vec<(i64, i64, i64)> {
    let r = radius_vox as i64;
    let r2 = r * r;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dz * dz + dy * dy + dx * dx <= r2 {
                    out.push((dz, dy, dx));
                }
            }
        }
    }
    out
}

/// Morphological dilation with a discrete ball; radius 0 is the identity.
pub fn dilate(mask: &Array3<bool>, radius_vox: u32) -> Array3<bool> {
    if radius_vox == 0 {
        return mask.clone();
    }
    let (nz, ny, nx) = mask.dim();
    let offsets = ball_offsets(radius_vox);
    let mut out = Array3::from_elem(mask.dim(), false);
    for ((z, y, x), &v) in mask.indexed_iter() {
        if !v {
            continue;
        }
        for &(dz, dy, dx) in &offsets {
            let (pz, py, px) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
            if pz >= 0
                && py >= 0
                && px >= 0
                && (pz as usize) < nz
                && (py as usize) < ny
                && (px as usize) < nx
            {
                out[(pz as usize, py as usize, px as usize)] = true;
            }
        }
    }
    out
}
