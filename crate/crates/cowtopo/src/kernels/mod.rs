//! Geometric and topological voxel primitives: connected components, exact
//! anisotropic Euclidean distance transform, topology-preserving 3D thinning,
//! and morphological dilation.

mod components;
mod edt;
mod morphology;
mod skeleton;

pub use components::{connected_components, largest_component, ComponentSet, Connectivity};
pub use edt::{edt, DistanceField};
pub use morphology::dilate;
pub use skeleton::{skeletonize, Skeleton};

use ndarray::Array3;

/// Inclusive (z, y, x) corner pair of a voxel region.
pub(crate) type VoxelBounds = ((usize, usize, usize), (usize, usize, usize));

/// Tight bounding box of the set voxels, as inclusive (z, y, x) corner pairs.
/// Returns `None` for an empty mask.
pub(crate) fn mask_bbox(mask: &Array3<bool>) -> Option<VoxelBounds> {
    let mut lo = (usize::MAX, usize::MAX, usize::MAX);
    let mut hi = (0usize, 0usize, 0usize);
    let mut any = false;
    for ((z, y, x), &v) in mask.indexed_iter() {
        if v {
            any = true;
            lo = (lo.0.min(z), lo.1.min(y), lo.2.min(x));
            hi = (hi.0.max(z), hi.1.max(y), hi.2.max(x));
        }
    }
    any.then_some((lo, hi))
}
