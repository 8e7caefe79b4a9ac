//! Connectivity-aware loss: centerline-distance weight maps, the four-term
//! per-class objective (Dice, focal, Tversky, weighted cross-entropy), the
//! class-averaged total, and analytic gradients with respect to the
//! predicted probabilities.
//!
//! Per class, every foreground voxel is weighted by
//! `-lambda_fg * ln(dc / dc_max + epsilon)` where `dc` is its Euclidean
//! distance to the class centerline and `dc_max` the largest such distance in
//! the class; background voxels keep weight 1. Shrinking `epsilon` raises the
//! weight of the most central voxels.

use ndarray::{Array3, Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::classes::CowClass;
use crate::error::{Error, Result};
use crate::kernels::{edt, skeletonize};
use crate::volume::{one_hot, LabelVolume, ProbVolume, Spacing, PROB_CHANNELS};

/// Loss hyperparameters. Defaults match the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalConfig {
    /// Tversky false-positive weight.
    pub alpha_t: f64,
    /// Tversky false-negative weight; must satisfy alpha_t + beta_t = 1.
    pub beta_t: f64,
    /// Foreground emphasis of the distance weighting.
    pub lambda_fg: f64,
    /// Offset inside the weight logarithm; smaller values emphasize the
    /// centerline more strongly.
    pub epsilon: f64,
    /// Exponent of the focal modulation factor.
    pub focal_exponent: f64,
    /// Floor applied to every logarithm argument so the loss stays finite.
    pub prob_floor: f64,
    /// Lower clamp for foreground weights; the raw weight map can dip just
    /// below zero where dc approaches dc_max.
    pub weight_floor: f64,
}

impl Default for CalConfig {
    fn default() -> Self {
        CalConfig {
            alpha_t: 0.2,
            beta_t: 0.8,
            lambda_fg: 20.0,
            epsilon: 0.01,
            focal_exponent: 2.0,
            prob_floor: 1e-7,
            weight_floor: 0.0,
        }
    }
}

impl CalConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.alpha_t + self.beta_t - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "alpha_t + beta_t must equal 1, got {} + {}",
                self.alpha_t, self.beta_t
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if !self.lambda_fg.is_finite() || self.lambda_fg <= 0.0 {
            return Err(Error::InvalidConfig("lambda_fg must be positive".into()));
        }
        if !self.prob_floor.is_finite() || self.prob_floor <= 0.0 || self.prob_floor >= 0.5 {
            return Err(Error::InvalidConfig(
                "prob_floor must lie strictly between 0 and 0.5".into(),
            ));
        }
        if !self.focal_exponent.is_finite() || self.focal_exponent <= 0.0 {
            return Err(Error::InvalidConfig("focal_exponent must be positive".into()));
        }
        if !self.weight_floor.is_finite() || self.weight_floor < 0.0 {
            return Err(Error::InvalidConfig("weight_floor must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Per-voxel weights of one class: background exactly 1, foreground from the
/// centerline-distance rule. `values` is clamped at the configured floor;
/// `raw` keeps the unclamped weights.
#[derive(Debug, Clone)]
pub struct WeightMap {
    pub values: Array3<f64>,
    pub raw: Array3<f64>,
    pub spacing: Spacing,
}

/// Loss terms of a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassLossTerms {
    pub class: CowClass,
    pub dice_term: f64,
    pub focal_term: f64,
    pub tversky_term: f64,
    pub wce_term: f64,
    pub total: f64,
}

/// Full loss report: per-class terms plus their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub per_class: Vec<ClassLossTerms>,
    /// Mean of the per-class totals over all thirteen classes.
    pub l_total: f64,
    /// |C|: the number of classes averaged.
    pub num_classes: usize,
    /// |I| = N: the voxel count of the evaluated volume.
    pub voxel_count: usize,
}

/// Distance-based weight map of one class.
///
/// An absent class yields an all-ones map. When the class is its own skeleton
/// (dc_max = 0, e.g. a one-voxel-thin vessel), every foreground voxel gets
/// the full centerline weight `-lambda_fg * ln(epsilon)`.
pub fn weight_map(lbl: &LabelVolume, class: CowClass, cfg: &CalConfig) -> Result<WeightMap> {
    cfg.validate()?;
    let mask = lbl.class_mask(class);
    let mut raw = Array3::from_elem(mask.dim(), 1.0f64);

    if mask.iter().any(|&v| v) {
        let skeleton = skeletonize(&mask);
        let field = edt(&skeleton.mask, &lbl.spacing)?;
        let dc_max = field
            .max_over(&mask)
            .expect("non-empty mask has a max distance");
        for ((idx, &inside), &dc) in mask.indexed_iter().zip(field.values.iter()) {
            if inside {
                raw[idx] = if dc_max == 0.0 {
                    -cfg.lambda_fg * cfg.epsilon.ln()
                } else {
                    -cfg.lambda_fg * (dc / dc_max + cfg.epsilon).ln()
                };
            }
        }
    }

    let floor = cfg.weight_floor;
    let mut values = raw.clone();
    for (v, &inside) in values.iter_mut().zip(mask.iter()) {
        if inside {
            *v = v.max(floor);
        }
    }

    Ok(WeightMap {
        values,
        raw,
        spacing: lbl.spacing,
    })
}

/// ln with a floored argument, keeping every term finite.
#[inline]
fn safe_ln(v: f64, floor: f64) -> f64 {
    v.max(floor).ln()
}

/// Derivative of `safe_ln` with respect to its argument.
#[inline]
fn safe_ln_grad(v: f64, floor: f64) -> f64 {
    if v > floor {
        1.0 / v
    } else {
        0.0
    }
}

fn check_shapes(a: (usize, usize, usize), b: (usize, usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { left: a, right: b });
    }
    Ok(())
}

/// Four-term loss of one class given its probability channel, one-hot target,
/// and weight map.
pub fn class_loss(
    class: CowClass,
    prob: ArrayView3<'_, f64>,
    target: &Array3<f64>,
    weights: &Array3<f64>,
    cfg: &CalConfig,
) -> Result<ClassLossTerms> {
    cfg.validate()?;
    check_shapes(prob.dim(), target.dim())?;
    check_shapes(prob.dim(), weights.dim())?;

    let n = target.len() as f64;
    let floor = cfg.prob_floor;
    let q = cfg.focal_exponent;

    let mut sum_xy = 0.0;
    let mut sum_pred = 0.0;
    let mut sum_target = 0.0;
    let mut focal_acc = 0.0;
    let mut wce = 0.0;

    for ((&p, &y), &w) in prob.iter().zip(target.iter()).zip(weights.iter()) {
        sum_xy += p * y;
        sum_pred += p;
        sum_target += y;

        let p_t = if y == 1.0 { p } else { 1.0 - p };
        focal_acc += (1.0 - p_t).powf(q) * safe_ln(p_t, floor);

        let ce = -(y * safe_ln(p, floor) + (1.0 - y) * safe_ln(1.0 - p, floor));
        wce += w * ce;
    }

    let dice_denom = sum_pred + sum_target;
    let dice_term = if dice_denom == 0.0 {
        0.0
    } else {
        -2.0 * sum_xy / dice_denom
    };

    let tversky_denom = cfg.alpha_t * sum_pred + cfg.beta_t * sum_target;
    let tversky_term = if tversky_denom == 0.0 {
        0.0
    } else {
        1.0 - sum_xy / tversky_denom
    };

    let focal_term = -focal_acc / n;
    let total = dice_term + focal_term + tversky_term + wce;

    Ok(ClassLossTerms {
        class,
        dice_term,
        focal_term,
        tversky_term,
        wce_term: wce,
        total,
    })
}

/// Class-averaged loss over all thirteen classes. Weight maps are recomputed
/// from the label volume per class.
pub fn total_loss(prob: &ProbVolume, lbl: &LabelVolume, cfg: &CalConfig) -> Result<LossBreakdown> {
    cfg.validate()?;
    check_shapes(prob.shape(), lbl.shape())?;

    let mut per_class = Vec::with_capacity(CowClass::ALL.len());
    let mut acc = 0.0;
    for class in CowClass::ALL {
        let target = one_hot(lbl, class);
        let weights = weight_map(lbl, class, cfg)?;
        let entry = class_loss(class, prob.class_channel(class), &target, &weights.values, cfg)?;
        acc += entry.total;
        per_class.push(entry);
    }
    let num_classes = per_class.len();

    Ok(LossBreakdown {
        l_total: acc / num_classes as f64,
        num_classes,
        voxel_count: lbl.data.len(),
        per_class,
    })
}

/// Analytic gradient of the class-averaged loss with respect to every
/// foreground probability channel. The returned grid matches the probability
/// volume layout; the background channel (0) carries zeros because no loss
/// term reads it.
pub fn loss_gradient(
    prob: &ProbVolume,
    lbl: &LabelVolume,
    cfg: &CalConfig,
) -> Result<Array4<f64>> {
    cfg.validate()?;
    check_shapes(prob.shape(), lbl.shape())?;

    let (nz, ny, nx) = lbl.shape();
    let mut grad = Array4::<f64>::zeros((PROB_CHANNELS, nz, ny, nx));
    let n = (nz * ny * nx) as f64;
    let floor = cfg.prob_floor;
    let q = cfg.focal_exponent;
    let class_scale = 1.0 / CowClass::ALL.len() as f64;

    for class in CowClass::ALL {
        let target = one_hot(lbl, class);
        let weights = weight_map(lbl, class, cfg)?;
        let channel = prob.class_channel(class);

        let mut sum_xy = 0.0;
        let mut sum_pred = 0.0;
        let mut sum_target = 0.0;
        for (&p, &y) in channel.iter().zip(target.iter()) {
            sum_xy += p * y;
            sum_pred += p;
            sum_target += y;
        }
        let dice_denom = sum_pred + sum_target;
        let tversky_denom = cfg.alpha_t * sum_pred + cfg.beta_t * sum_target;

        let mut out = grad.index_axis_mut(Axis(0), class.index() + 1);
        for (((slot, &p), &y), &w) in out
            .iter_mut()
            .zip(channel.iter())
            .zip(target.iter())
            .zip(weights.values.iter())
        {
            // Dice: d/dp [-2 S_xy / S_sum] with S_sum = sum(p) + sum(y).
            let dice = if dice_denom == 0.0 {
                0.0
            } else {
                -2.0 * (y * dice_denom - sum_xy) / (dice_denom * dice_denom)
            };

            // Tversky: d/dp [1 - S_xy / D] with D = a*sum(p) + b*sum(y).
            let tversky = if tversky_denom == 0.0 {
                0.0
            } else {
                -(y * tversky_denom - sum_xy * cfg.alpha_t) / (tversky_denom * tversky_denom)
            };

            // Focal: -(1/N) (1-p_t)^q ln(p_t), with dp_t/dp = +/-1.
            let (p_t, dp_t) = if y == 1.0 { (p, 1.0) } else { (1.0 - p, -1.0) };
            let one_minus = 1.0 - p_t;
            let d_focal_dpt = -q * one_minus.powf(q - 1.0) * safe_ln(p_t, floor)
                + one_minus.powf(q) * safe_ln_grad(p_t, floor);
            let focal = -(d_focal_dpt * dp_t) / n;

            // Weighted cross-entropy.
            let dce = -y * safe_ln_grad(p, floor) + (1.0 - y) * safe_ln_grad(1.0 - p, floor);
            let wce = w * dce;

            *slot = class_scale * (dice + tversky + focal + wce);
        }
    }

    Ok(grad)
}
