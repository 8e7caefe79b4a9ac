//! Topology-sensitive evaluation suite: per-class Dice, HD95, and Betti-0
//! error, centerline Dice over the merged vessel tree, balanced accuracy for
//! variant classification, and the per-case report combining them.

use std::collections::HashMap;
use std::hash::Hash;

use ndarray::{s, Array3};
use serde::{Deserialize, Serialize};

use crate::classes::CowClass;
use crate::error::{Error, Result};
use crate::kernels::{connected_components, edt, mask_bbox, skeletonize, Connectivity};
use crate::tasks::{derive_graph, CowGraph, GraphDeriveConfig};
use crate::volume::{LabelVolume, Spacing};

/// Which classes enter the per-case class averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(Default)]
pub enum ClassesMode {
    /// Average over classes present in the ground truth (default).
    #[default]
    Present,
    /// Average over all thirteen classes; a class absent from both volumes
    /// scores perfectly.
    All13,
}


/// Evaluation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub classes_mode: ClassesMode,
    /// HD95 value recorded when exactly one mask is empty; `None` uses the
    /// volume diagonal in millimeters.
    pub hd95_empty_penalty: Option<f64>,
    pub connectivity: Connectivity,
    pub graph: GraphDeriveConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            classes_mode: ClassesMode::Present,
            hd95_empty_penalty: None,
            connectivity: Connectivity::TwentySix,
            graph: GraphDeriveConfig::default(),
        }
    }
}

fn check_shapes(a: (usize, usize, usize), b: (usize, usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { left: a, right: b });
    }
    Ok(())
}

fn count(mask: &Array3<bool>) -> usize {
    mask.iter().filter(|&&v| v).count()
}

/// Overlap Dice of two masks; both empty scores 1 (a correctly absent class
/// is perfect).
pub fn dice(pred: &Array3<bool>, gt: &Array3<bool>) -> Result<f64> {
    check_shapes(pred.dim(), gt.dim())?;
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        inter += (p && g) as usize;
        total += p as usize + g as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Centerline Dice: harmonic mean of skeleton-in-mask precision and
/// sensitivity. Both masks empty scores 1; exactly one empty scores 0.
pub fn cl_dice(pred: &Array3<bool>, gt: &Array3<bool>) -> Result<f64> {
    check_shapes(pred.dim(), gt.dim())?;
    let pred_any = pred.iter().any(|&v| v);
    let gt_any = gt.iter().any(|&v| v);
    match (pred_any, gt_any) {
        (false, false) => return Ok(1.0),
        (false, true) | (true, false) => return Ok(0.0),
        _ => {}
    }

    let skel_pred = skeletonize(pred).mask;
    let skel_gt = skeletonize(gt).mask;
    let in_mask = |skel: &Array3<bool>, mask: &Array3<bool>| {
        let total = count(skel);
        let hits = skel
            .iter()
            .zip(mask.iter())
            .filter(|(&s, &m)| s && m)
            .count();
        hits as f64 / total as f64
    };
    let tprec = in_mask(&skel_pred, gt);
    let tsens = in_mask(&skel_gt, pred);
    if tprec + tsens == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tprec * tsens / (tprec + tsens))
}

/// Absolute difference in connected-component counts.
pub fn b0_error(pred: &Array3<bool>, gt: &Array3<bool>, conn: Connectivity) -> Result<u64> {
    check_shapes(pred.dim(), gt.dim())?;
    let p = connected_components(pred, conn).num() as i64;
    let g = connected_components(gt, conn).num() as i64;
    Ok((p - g).unsigned_abs())
}

/// Surface voxels: mask voxels with at least one 6-neighbor outside the mask
/// (the grid border counts as outside).
fn surface(mask: &Array3<bool>) -> Array3<bool> {
    let (nz, ny, nx) = mask.dim();
    let mut out = Array3::from_elem(mask.dim(), false);
    for ((z, y, x), &v) in mask.indexed_iter() {
        if !v {
            continue;
        }
        let mut exposed = false;
        for (dz, dy, dx) in [
            (-1i64, 0i64, 0i64),
            (1, 0, 0),
            (0, -1, 0),
            (0, 1, 0),
            (0, 0, -1),
            (0, 0, 1),
        ] {
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
        out[(z, y, x)] = exposed;
    }
    out
}

/// Diagonal of the whole grid in millimeters; the documented penalty when
/// exactly one mask is empty.
pub fn volume_diagonal_mm(shape: (usize, usize, usize), spacing: &Spacing) -> f64 {
    let dz = shape.0 as f64 * spacing.dz;
    let dy = shape.1 as f64 * spacing.dy;
    let dx = shape.2 as f64 * spacing.dx;
    (dz * dz + dy * dy + dx * dx).sqrt()
}

/// 95th percentile (linear interpolation between order statistics) of the
/// symmetric surface-distance multiset, in millimeters.
///
/// Both masks empty scores 0; exactly one empty records the penalty
/// (`empty_penalty`, or the volume diagonal when `None`).
pub fn hd95(
    pred: &Array3<bool>,
    gt: &Array3<bool>,
    spacing: &Spacing,
    empty_penalty: Option<f64>,
) -> Result<f64> {
    check_shapes(pred.dim(), gt.dim())?;
    let pred_any = pred.iter().any(|&v| v);
    let gt_any = gt.iter().any(|&v| v);
    match (pred_any, gt_any) {
        (false, false) => return Ok(0.0),
        (false, true) | (true, false) => {
            return Ok(empty_penalty.unwrap_or_else(|| volume_diagonal_mm(pred.dim(), spacing)))
        }
        _ => {}
    }

    let surf_pred = surface(pred);
    let surf_gt = surface(gt);

    // Restrict the transforms to the joint bounding box of both surfaces.
    let (lo_p, hi_p) = mask_bbox(&surf_pred).expect("non-empty mask has a surface");
    let (lo_g, hi_g) = mask_bbox(&surf_gt).expect("non-empty mask has a surface");
    let lo = (lo_p.0.min(lo_g.0), lo_p.1.min(lo_g.1), lo_p.2.min(lo_g.2));
    let hi = (hi_p.0.max(hi_g.0), hi_p.1.max(hi_g.1), hi_p.2.max(hi_g.2));
    let crop = |m: &Array3<bool>| m.slice(s![lo.0..=hi.0, lo.1..=hi.1, lo.2..=hi.2]).to_owned();
    let surf_pred = crop(&surf_pred);
    let surf_gt = crop(&surf_gt);

    let to_gt = edt(&surf_gt, spacing)?;
    let to_pred = edt(&surf_pred, spacing)?;

    let mut distances = Vec::new();
    for (&d, &m) in to_gt.values.iter().zip(surf_pred.iter()) {
        if m {
            distances.push(d);
        }
    }
    for (&d, &m) in to_pred.values.iter().zip(surf_gt.iter()) {
        if m {
            distances.push(d);
        }
    }
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(percentile_linear(&distances, 0.95))
}

/// Percentile by linear interpolation between order statistics of a sorted slice.
fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Unweighted mean of per-class recall over the classes present in `actuals`.
pub fn balanced_accuracy<T: Eq + Hash + Clone>(preds: &[T], actuals: &[T]) -> Result<f64> {
    if preds.is_empty() || actuals.is_empty() {
        return Err(Error::InvalidInput("balanced accuracy of empty lists".into()));
    }
    if preds.len() != actuals.len() {
        return Err(Error::InvalidInput(format!(
            "prediction and actual lists differ in length: {} vs {}",
            preds.len(),
            actuals.len()
        )));
    }
    // First-appearance order keeps the summation deterministic.
    let mut order: Vec<T> = Vec::new();
    let mut totals: HashMap<T, (usize, usize)> = HashMap::new();
    for (p, a) in preds.iter().zip(actuals.iter()) {
        let entry = totals.entry(a.clone()).or_insert_with(|| {
            order.push(a.clone());
            (0, 0)
        });
        entry.0 += 1;
        if p == a {
            entry.1 += 1;
        }
    }
    let mut acc = 0.0;
    for class in &order {
        let (total, correct) = totals[class];
        acc += correct as f64 / total as f64;
    }
    Ok(acc / order.len() as f64)
}

/// Per-class numbers of one case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: CowClass,
    pub present_in_gt: bool,
    pub present_in_pred: bool,
    pub dice: f64,
    pub hd95_mm: f64,
    pub b0_error: u64,
}

/// Full per-case report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub per_class: Vec<ClassMetrics>,
    pub class_average_dice: f64,
    pub class_average_hd95_mm: f64,
    pub class_average_b0_error: f64,
    /// Centerline Dice of the merged binary vessel tree.
    pub cl_dice: f64,
    pub graph_pred: CowGraph,
    pub graph_gt: CowGraph,
}

/// Evaluate a predicted label volume against the ground truth.
pub fn evaluate_case(
    pred: &LabelVolume,
    gt: &LabelVolume,
    cfg: &MetricsConfig,
) -> Result<CaseMetrics> {
    check_shapes(pred.shape(), gt.shape())?;
    if pred.class_map != gt.class_map {
        return Err(Error::InvalidInput(
            "prediction and ground truth use different class maps".into(),
        ));
    }

    let mut per_class = Vec::with_capacity(13);
    for class in CowClass::ALL {
        let pm = pred.class_mask(class);
        let gm = gt.class_mask(class);
        per_class.push(ClassMetrics {
            class,
            present_in_gt: gm.iter().any(|&v| v),
            present_in_pred: pm.iter().any(|&v| v),
            dice: dice(&pm, &gm)?,
            hd95_mm: hd95(&pm, &gm, &gt.spacing, cfg.hd95_empty_penalty)?,
            b0_error: b0_error(&pm, &gm, cfg.connectivity)?,
        });
    }

    let averaged: Vec<&ClassMetrics> = match cfg.classes_mode {
        ClassesMode::All13 => per_class.iter().collect(),
        ClassesMode::Present => {
            let present: Vec<&ClassMetrics> =
                per_class.iter().filter(|m| m.present_in_gt).collect();
            if present.is_empty() {
                per_class.iter().collect()
            } else {
                present
            }
        }
    };
    let n = averaged.len() as f64;
    let class_average_dice = averaged.iter().map(|m| m.dice).sum::<f64>() / n;
    let class_average_hd95_mm = averaged.iter().map(|m| m.hd95_mm).sum::<f64>() / n;
    let class_average_b0_error = averaged.iter().map(|m| m.b0_error as f64).sum::<f64>() / n;

    let cl = cl_dice(&pred.foreground_mask(), &gt.foreground_mask())?;

    Ok(CaseMetrics {
        per_class,
        class_average_dice,
        class_average_hd95_mm,
        class_average_b0_error,
        cl_dice: cl,
        graph_pred: derive_graph(pred, &cfg.graph)?,
        graph_gt: derive_graph(gt, &cfg.graph)?,
    })
}
