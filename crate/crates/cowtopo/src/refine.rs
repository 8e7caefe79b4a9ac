//! Rule-based topological refinement of per-class vessel masks.
//!
//! For each selected class: a single component passes through untouched; two
//! meaningful fragments whose closest skeleton endpoints are near enough get
//! bridged into one component; two sub-threshold fragments are treated as
//! noise and erased; otherwise only the largest fragment survives. More than
//! two fragments are first reduced to the two largest.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::classes::CowClass;
use crate::error::{Error, Result};
use crate::kernels::{connected_components, dilate, largest_component, skeletonize, Connectivity};
use crate::volume::{LabelVolume, Spacing};

/// Unit of the endpoint-distance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceUnit {
    /// Euclidean distance between voxel indices of the working grid.
    Voxel,
    /// Euclidean distance in millimeters under the volume spacing.
    Mm,
}

/// Refinement parameters. Defaults use the reference thresholds
/// (t_com = 20 voxels, t_dis = 10 voxel units) on the communicating arteries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Voxel-count threshold below which a component is noise.
    pub t_com: usize,
    /// Largest endpoint gap that is still bridged.
    pub t_dis: f64,
    pub t_dis_unit: DistanceUnit,
    pub classes_to_refine: Vec<CowClass>,
    pub bridge_dilation_radius: u32,
    pub connectivity: Connectivity,
    /// Route the bridge along a spline that follows the local centerline
    /// direction instead of a straight segment.
    pub curved_bridge: bool,
    /// How many skeleton voxels past each endpoint feed the spline tangents.
    pub curve_context: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            t_com: 20,
            t_dis: 10.0,
            t_dis_unit: DistanceUnit::Voxel,
            classes_to_refine: vec![CowClass::Acom, CowClass::RPcom, CowClass::LPcom],
            bridge_dilation_radius: 1,
            connectivity: Connectivity::TwentySix,
            curved_bridge: false,
            curve_context: 5,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_com < 1 {
            return Err(Error::InvalidConfig("t_com must be at least 1".into()));
        }
        if !self.t_dis.is_finite() || self.t_dis <= 0.0 {
            return Err(Error::InvalidConfig("t_dis must be positive".into()));
        }
        Ok(())
    }
}

/// What happened to one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineAction {
    Unchanged,
    Bridged,
    KeptLargest,
    Zeroed,
    ReducedToTwoThenBridged,
    ReducedToTwoThenKeptLargest,
    ReducedToTwoThenZeroed,
}

impl RefineAction {
    fn reduced(self) -> RefineAction {
        match self {
            RefineAction::Bridged => RefineAction::ReducedToTwoThenBridged,
            RefineAction::KeptLargest => RefineAction::ReducedToTwoThenKeptLargest,
            RefineAction::Zeroed => RefineAction::ReducedToTwoThenZeroed,
            other => other,
        }
    }

    /// The largest-component fallback variant of this action.
    fn degraded(self) -> RefineAction {
        match self {
            RefineAction::Bridged => RefineAction::KeptLargest,
            RefineAction::ReducedToTwoThenBridged => RefineAction::ReducedToTwoThenKeptLargest,
            other => other,
        }
    }
}

/// Outcome bookkeeping for one refined mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub action: RefineAction,
    pub components_before: usize,
    pub components_after: usize,
    pub voxels_added: usize,
    pub voxels_removed: usize,
}

/// Per-class refinement report of a label volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub classes: Vec<ClassRefineEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRefineEntry {
    pub class: CowClass,
    #[serde(flatten)]
    pub outcome: RefineOutcome,
}

/// Candidate anchor voxels of one component: its skeleton endpoints, or every
/// skeleton voxel when the skeleton is a closed loop with no endpoints.
fn endpoint_candidates(component: &Array3<bool>) -> Vec<(usize, usize, usize)> {
    let skel = skeletonize(component);
    if !skel.endpoints.is_empty() {
        return skel.endpoints;
    }
    skel.mask
        .indexed_iter()
        .filter(|(_, &v)| v)
        .map(|(idx, _)| idx)
        .collect()
}

fn pair_distance(
    a: (usize, usize, usize),
    b: (usize, usize, usize),
    spacing: &Spacing,
    unit: DistanceUnit,
) -> f64 {
    let (sz, sy, sx) = match unit {
        DistanceUnit::Voxel => (1.0, 1.0, 1.0),
        DistanceUnit::Mm => (spacing.dz, spacing.dy, spacing.dx),
    };
    let dz = (a.0 as f64 - b.0 as f64) * sz;
    let dy = (a.1 as f64 - b.1 as f64) * sy;
    let dx = (a.2 as f64 - b.2 as f64) * sx;
    (dz * dz + dy * dy + dx * dx).sqrt()
}

type Voxel = (usize, usize, usize);

/// The closest (endpoint, endpoint) pair across two candidate sets.
/// Candidates arrive in scan order, so ties resolve deterministically.
fn closest_pair(
    left: &[Voxel],
    right: &[Voxel],
    spacing: &Spacing,
    unit: DistanceUnit,
) -> Option<(Voxel, Voxel, f64)> {
    let mut best: Option<(Voxel, Voxel, f64)> = None;
    for &a in left {
        for &b in right {
            let d = pair_distance(a, b, spacing, unit);
            if best.is_none_or(|(_, _, bd)| d < bd) {
                best = Some((a, b, d));
            }
        }
    }
    best
}

fn round_to_voxel(p: [f64; 3], dim: (usize, usize, usize)) -> (usize, usize, usize) {
    let clamp = |v: f64, n: usize| (v.round().max(0.0) as usize).min(n - 1);
    (clamp(p[0], dim.0), clamp(p[1], dim.1), clamp(p[2], dim.2))
}

/// Rasterize the straight segment between two voxels (inclusive).
fn rasterize_segment(
    a: (usize, usize, usize),
    b: (usize, usize, usize),
    dim: (usize, usize, usize),
    out: &mut Vec<(usize, usize, usize)>,
) {
    let steps = (a.0 as i64 - b.0 as i64)
        .abs()
        .max((a.1 as i64 - b.1 as i64).abs())
        .max((a.2 as i64 - b.2 as i64).abs());
    if steps == 0 {
        out.push(a);
        return;
    }
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let p = [
            a.0 as f64 + (b.0 as f64 - a.0 as f64) * t,
            a.1 as f64 + (b.1 as f64 - a.1 as f64) * t,
            a.2 as f64 + (b.2 as f64 - a.2 as f64) * t,
        ];
        out.push(round_to_voxel(p, dim));
    }
}

/// A skeleton voxel several steps inward from an endpoint, used as the spline
/// tangent context. Falls back to the endpoint itself on tiny skeletons.
fn context_point(
    component: &Array3<bool>,
    endpoint: (usize, usize, usize),
    steps: usize,
) -> (usize, usize, usize) {
    let skel = skeletonize(component).mask;
    let mut frontier = vec![endpoint];
    let mut seen = std::collections::HashSet::new();
    seen.insert(endpoint);
    let mut last = endpoint;
    for _ in 0..steps {
        let mut next = Vec::new();
        for &(z, y, x) in &frontier {
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dz == 0 && dy == 0 && dx == 0 {
                            continue;
                        }
                        let (pz, py, px) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
                        if pz < 0 || py < 0 || px < 0 {
                            continue;
                        }
                        let p = (pz as usize, py as usize, px as usize);
                        if p.0 < skel.dim().0
                            && p.1 < skel.dim().1
                            && p.2 < skel.dim().2
                            && skel[p]
                            && seen.insert(p)
                        {
                            next.push(p);
                        }
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        last = next[0];
        frontier = next;
    }
    last
}

/// Voxels of the bridge centerline between two endpoints: a straight segment,
/// or a uniform Catmull-Rom arc whose outer control points follow each
/// component's centerline.
fn bridge_path(
    e1: (usize, usize, usize),
    e2: (usize, usize, usize),
    comp1: &Array3<bool>,
    comp2: &Array3<bool>,
    cfg: &RefineConfig,
) -> Vec<(usize, usize, usize)> {
    let dim = comp1.dim();
    let mut path = Vec::new();
    if !cfg.curved_bridge {
        rasterize_segment(e1, e2, dim, &mut path);
        return path;
    }

    let p0 = context_point(comp1, e1, cfg.curve_context);
    let p3 = context_point(comp2, e2, cfg.curve_context);
    let as_f = |p: (usize, usize, usize)| [p.0 as f64, p.1 as f64, p.2 as f64];
    let (p0, p1, p2, p3) = (as_f(p0), as_f(e1), as_f(e2), as_f(p3));

    let span = pair_distance(e1, e2, &Spacing::unit(), DistanceUnit::Voxel);
    let samples = (span * 4.0).ceil() as usize + 1;
    let mut prev: Option<(usize, usize, usize)> = None;
    for s in 0..=samples {
        let t = s as f64 / samples as f64;
        let t2 = t * t;
        let t3 = t2 * t;
        let mut p = [0.0f64; 3];
        for k in 0..3 {
            p[k] = 0.5
                * (2.0 * p1[k]
                    + (-p0[k] + p2[k]) * t
                    + (2.0 * p0[k] - 5.0 * p1[k] + 4.0 * p2[k] - p3[k]) * t2
                    + (-p0[k] + 3.0 * p1[k] - 3.0 * p2[k] + p3[k]) * t3);
        }
        let voxel = round_to_voxel(p, dim);
        if let Some(prev) = prev {
            if prev != voxel {
                rasterize_segment(prev, voxel, dim, &mut path);
            }
        }
        prev = Some(voxel);
    }
    if path.is_empty() {
        path.push(e1);
    }
    path
}

/// Refine one class mask. Pure function of the mask and configuration.
pub fn refine_class(
    mask: &Array3<bool>,
    spacing: &Spacing,
    cfg: &RefineConfig,
) -> (Array3<bool>, RefineOutcome) {
    let comps = connected_components(mask, cfg.connectivity);
    let before = comps.num();

    if before <= 1 {
        return (
            mask.clone(),
            RefineOutcome {
                action: RefineAction::Unchanged,
                components_before: before,
                components_after: before,
                voxels_added: 0,
                voxels_removed: 0,
            },
        );
    }

    let reduced = before > 2;
    let comp1 = comps.mask_of(1);
    let comp2 = comps.mask_of(2);
    let sizes = (comps.sizes[0], comps.sizes[1]);
    let working_total: usize = mask.iter().filter(|&&v| v).count();

    let (out, action) = if sizes.0 >= cfg.t_com && sizes.1 >= cfg.t_com {
        let left = endpoint_candidates(&comp1);
        let right = endpoint_candidates(&comp2);
        let (e1, e2, dist) = closest_pair(&left, &right, spacing, cfg.t_dis_unit)
            .expect("non-empty components always offer endpoint candidates");
        if dist <= cfg.t_dis {
            let mut bridge = Array3::from_elem(mask.dim(), false);
            for p in bridge_path(e1, e2, &comp1, &comp2, cfg) {
                bridge[p] = true;
            }
            let bridge = dilate(&bridge, cfg.bridge_dilation_radius);
            let mut joined = comp1.clone();
            joined.zip_mut_with(&comp2, |a, &b| *a = *a || b);
            joined.zip_mut_with(&bridge, |a, &b| *a = *a || b);
            (joined, RefineAction::Bridged)
        } else {
            (comp1, RefineAction::KeptLargest)
        }
    } else if sizes.0 < cfg.t_com && sizes.1 < cfg.t_com {
        (Array3::from_elem(mask.dim(), false), RefineAction::Zeroed)
    } else {
        // Exactly one meaningful component; sizes are ordered so it is comp1.
        (comp1, RefineAction::KeptLargest)
    };

    let action = if reduced { action.reduced() } else { action };
    let after = connected_components(&out, cfg.connectivity).num();
    let out_total = out.iter().filter(|&&v| v).count();
    let added = out
        .iter()
        .zip(mask.iter())
        .filter(|(&o, &m)| o && !m)
        .count();

    (
        out,
        RefineOutcome {
            action,
            components_before: before,
            components_after: after,
            voxels_added: added,
            voxels_removed: working_total + added - out_total,
        },
    )
}

/// Refine the selected classes of a label volume.
///
/// Bridge voxels are written with the refined class id only where the volume
/// is background; when blocked voxels break a bridge, that class degrades to
/// its largest component. Unselected classes are untouched. Classes are
/// processed in ascending label-id order.
pub fn refine_volume(lbl: &LabelVolume, cfg: &RefineConfig) -> Result<(LabelVolume, RefineReport)> {
    cfg.validate()?;
    let mut out = lbl.clone();
    let mut entries = Vec::new();

    let mut order: Vec<CowClass> = cfg.classes_to_refine.clone();
    order.sort_by_key(|&c| lbl.class_map.id(c));
    order.dedup();

    for class in order {
        let id = lbl.class_map.id(class);
        let mask = out.data.mapv(|v| v == id);
        let (refined, mut outcome) = refine_class(&mask, &lbl.spacing, cfg);

        let mut blocked = false;
        for ((idx, &was), &now) in mask.indexed_iter().zip(refined.iter()) {
            if was && !now {
                out.data[idx] = 0;
            } else if !was && now {
                if out.data[idx] == 0 {
                    out.data[idx] = id;
                } else {
                    blocked = true;
                }
            }
        }

        if blocked {
            // Other classes clipped the bridge; if the class fell apart,
            // fall back to its largest original component.
            let current = out.data.mapv(|v| v == id);
            if connected_components(&current, cfg.connectivity).num() > 1 {
                let keep = largest_component(&mask, cfg.connectivity);
                for ((idx, &cur), &k) in current.indexed_iter().zip(keep.iter()) {
                    if cur && !k {
                        out.data[idx] = 0;
                    } else if !cur && k {
                        out.data[idx] = id;
                    }
                }
                let total: usize = mask.iter().filter(|&&v| v).count();
                let kept: usize = keep.iter().filter(|&&v| v).count();
                outcome = RefineOutcome {
                    action: outcome.action.degraded(),
                    components_before: outcome.components_before,
                    components_after: 1,
                    voxels_added: 0,
                    voxels_removed: total - kept,
                };
            } else {
                let actual_added = current
                    .iter()
                    .zip(mask.iter())
                    .filter(|(&c, &m)| c && !m)
                    .count();
                outcome.voxels_added = actual_added;
            }
        }

        entries.push(ClassRefineEntry {
            class,
            outcome,
        });
    }

    Ok((out, RefineReport { classes: entries }))
}
