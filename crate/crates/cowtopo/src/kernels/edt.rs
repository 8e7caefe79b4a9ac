//! Exact Euclidean distance transform with anisotropic voxel spacing.
//!
//! Separable lower-envelope-of-parabolas method over squared distances, one
//! pass per axis. Exact up to floating-point rounding, which matters because
//! downstream weighting is most sensitive near distance zero.

use ndarray::{Array3, Axis};

use crate::error::{Error, Result};
use crate::volume::Spacing;

/// Per-voxel distance in millimeters to a reference voxel set.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub values: Array3<f64>,
    pub spacing: Spacing,
}

impl DistanceField {
    /// Maximum distance over the voxels of a mask; `None` if the mask is empty.
    pub fn max_over(&self, mask: &Array3<bool>) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (v, &m) in self.values.iter().zip(mask.iter()) {
            if m {
                best = Some(best.map_or(*v, |b: f64| b.max(*v)));
            }
        }
        best
    }
}

/// Distance in mm from every voxel to the nearest voxel of `reference`.
///
/// Errors when the reference set is empty.
pub fn edt(reference: &Array3<bool>, spacing: &Spacing) -> Result<DistanceField> {
    if !reference.iter().any(|&v| v) {
        return Err(Error::EmptyReference);
    }
    let mut dist_sq = reference.mapv(|v| if v { 0.0 } else { f64::INFINITY });

    // x, then y, then z; the decomposition is order-independent.
    for (axis, step) in [
        (Axis(2), spacing.dx),
        (Axis(1), spacing.dy),
        (Axis(0), spacing.dz),
    ] {
        let n = dist_sq.len_of(axis);
        let mut line = vec![0.0f64; n];
        let mut out = vec![0.0f64; n];
        let mut hull = Hull::new(n);
        for mut lane in dist_sq.lanes_mut(axis) {
            for (slot, v) in line.iter_mut().zip(lane.iter()) {
                *slot = *v;
            }
            lower_envelope_pass(&line, step, &mut hull, &mut out);
            for (v, slot) in lane.iter_mut().zip(out.iter()) {
                *v = *slot;
            }
        }
    }

    Ok(DistanceField {
        values: dist_sq.mapv(f64::sqrt),
        spacing: *spacing,
    })
}

/// Scratch space for the envelope so lanes do not reallocate.
struct Hull {
    sites: Vec<usize>,
    breaks: Vec<f64>,
}

impl Hull {
    fn new(n: usize) -> Self {
        Hull {
            sites: vec![0; n],
            breaks: vec![0.0; n + 1],
        }
    }
}

/// One 1D pass: out[i] = min_j line[j] + (step * (i - j))^2.
/// Infinite entries (no reference seen yet on this line) do not form parabolas.
fn lower_envelope_pass(line: &[f64], step: f64, hull: &mut Hull, out: &mut [f64]) {
    let s2 = step * step;
    let intersect = |p: usize, q: usize| -> f64 {
        let (pf, qf) = (p as f64, q as f64);
        ((line[q] + s2 * qf * qf) - (line[p] + s2 * pf * pf)) / (2.0 * s2 * (qf - pf))
    };

    let mut k = usize::MAX; // index of the rightmost live parabola; MAX = none yet
    for (q, value) in line.iter().enumerate() {
        if !value.is_finite() {
            continue;
        }
        if k == usize::MAX {
            k = 0;
            hull.sites[0] = q;
            hull.breaks[0] = f64::NEG_INFINITY;
            hull.breaks[1] = f64::INFINITY;
            continue;
        }
        let mut s = intersect(hull.sites[k], q);
        while k > 0 && s <= hull.breaks[k] {
            k -= 1;
            s = intersect(hull.sites[k], q);
        }
        k += 1;
        hull.sites[k] = q;
        hull.breaks[k] = s;
        hull.breaks[k + 1] = f64::INFINITY;
    }

    if k == usize::MAX {
        out.copy_from_slice(line);
        return;
    }

    let mut j = 0;
    for (i, slot) in out.iter_mut().enumerate() {
        let pos = i as f64;
        while hull.breaks[j + 1] < pos {
            j += 1;
        }
        let site = hull.sites[j];
        let d = (pos - site as f64) * step;
        *slot = line[site] + d * d;
    }
}
