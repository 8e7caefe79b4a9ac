//! Subcommand implementations. Every handler writes machine-readable output
//! to the declared path and a short human line to standard error; outputs are
//! deterministic functions of the inputs and configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cowtopo::classes::CowClass;
use cowtopo::io;
use cowtopo::kernels::{connected_components, Connectivity};
use cowtopo::metrics::{balanced_accuracy, evaluate_case, CaseMetrics, ClassesMode, MetricsConfig};
use cowtopo::preprocess::{preprocess_case, Modality};
use cowtopo::refine::{refine_volume, RefineConfig};
use cowtopo::tasks::{derive_graph, roi_box_from_mask, CowGraph};
use cowtopo::volume::Volume;

use crate::config::RunConfig;
use crate::CliError;

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("serializing report: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn parse_connectivity(flag: Option<u32>) -> Result<Connectivity, CliError> {
    match flag {
        None => Ok(Connectivity::TwentySix),
        Some(v) => Connectivity::from_u32(v)
            .ok_or_else(|| CliError::Validation(format!("connectivity must be 6, 18, or 26, got {v}"))),
    }
}

fn parse_class(name: &str) -> Result<CowClass, CliError> {
    CowClass::from_name(name)
        .ok_or_else(|| CliError::Validation(format!("unknown class name {name:?}")))
}

pub fn preprocess(
    cfg: &RunConfig,
    modality: Modality,
    input: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let volume = io::load_intensity(input)?;
    let processed = preprocess_case(&volume, modality, &cfg.preprocess)?;
    io::save_intensity(&processed, out)?;
    let (nz, ny, nx) = processed.shape();
    eprintln!(
        "preprocessed {} ({modality:?}) -> {} [{nz}x{ny}x{nx} @ ({}, {}, {}) mm]",
        input.display(),
        out.display(),
        processed.spacing.dz,
        processed.spacing.dy,
        processed.spacing.dx
    );
    Ok(())
}

pub fn weights(
    cfg: &RunConfig,
    label: &Path,
    class_name: &str,
    out: &Path,
    raw: bool,
    class_map: Option<&Path>,
) -> Result<(), CliError> {
    let class = parse_class(class_name)?;
    let map = cfg.resolve_class_map(class_map)?;
    let lbl = io::load_labels(label, &map)?;
    let wm = cowtopo::loss::weight_map(&lbl, class, &cfg.loss)?;
    let chosen = if raw { &wm.raw } else { &wm.values };
    let volume = Volume {
        data: chosen.mapv(|v| v as f32),
        spacing: lbl.spacing,
        affine: lbl.affine,
    };
    io::save_intensity(&volume, out)?;
    eprintln!(
        "weight map for {class} -> {} ({}clamped)",
        out.display(),
        if raw { "un" } else { "" }
    );
    Ok(())
}

pub fn loss(
    cfg: &RunConfig,
    prob: &Path,
    label: &Path,
    json: &Path,
    class_map: Option<&Path>,
) -> Result<(), CliError> {
    let map = cfg.resolve_class_map(class_map)?;
    let prob = io::load_prob(prob)?;
    let lbl = io::load_labels(label, &map)?;
    let breakdown = cowtopo::loss::total_loss(&prob, &lbl, &cfg.loss)?;
    write_json(&breakdown, json)?;
    eprintln!(
        "loss over {} voxels: l_total = {:.6}",
        breakdown.voxel_count, breakdown.l_total
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn refine(
    cfg: &RunConfig,
    input: &Path,
    out: &Path,
    report_path: &Path,
    classes: Option<&[String]>,
    tcom: Option<usize>,
    tdis: Option<f64>,
    class_map: Option<&Path>,
) -> Result<(), CliError> {
    let map = cfg.resolve_class_map(class_map)?;
    let mut refine_cfg: RefineConfig = cfg.refine.clone();
    if let Some(names) = classes {
        refine_cfg.classes_to_refine = names
            .iter()
            .map(|n| parse_class(n))
            .collect::<Result<Vec<_>, _>>()?;
    }
    if let Some(t) = tcom {
        refine_cfg.t_com = t;
    }
    if let Some(t) = tdis {
        refine_cfg.t_dis = t;
    }
    refine_cfg.validate()?;

    let lbl = io::load_labels(input, &map)?;
    let (refined, report) = refine_volume(&lbl, &refine_cfg)?;
    io::save_labels(&refined, out)?;
    write_json(&report, report_path)?;
    for entry in &report.classes {
        eprintln!(
            "refine {}: {:?} ({} -> {} components, +{} / -{} voxels)",
            entry.class,
            entry.outcome.action,
            entry.outcome.components_before,
            entry.outcome.components_after,
            entry.outcome.voxels_added,
            entry.outcome.voxels_removed
        );
    }
    Ok(())
}

pub fn detect(input: &Path, json: &Path, connectivity: Option<u32>) -> Result<(), CliError> {
    let conn = parse_connectivity(connectivity)?;
    let (mask, _, _) = io::load_mask(input)?;
    let bbox = roi_box_from_mask(&mask, conn)?;
    write_json(&bbox, json)?;
    eprintln!(
        "RoI box {:?} -> {:?} written to {}",
        bbox.min,
        bbox.max,
        json.display()
    );
    Ok(())
}

pub fn classify_graph(
    cfg: &RunConfig,
    input: &Path,
    json: &Path,
    class_map: Option<&Path>,
) -> Result<(), CliError> {
    let map = cfg.resolve_class_map(class_map)?;
    let lbl = io::load_labels(input, &map)?;
    let graph = derive_graph(&lbl, &cfg.graph)?;
    write_json(&graph, json)?;
    eprintln!(
        "graph anterior={} posterior={}",
        CowGraph::variant_code(&graph.anterior),
        CowGraph::variant_code(&graph.posterior)
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    pred: PathBuf,
    gt: PathBuf,
}

#[derive(Debug, Serialize)]
struct CaseEntry {
    id: String,
    #[serde(flatten)]
    metrics: CaseMetrics,
}

#[derive(Debug, Serialize)]
struct Aggregate {
    class_average_dice: f64,
    class_average_hd95_mm: f64,
    class_average_b0_error: f64,
    cl_dice: f64,
}

#[derive(Debug, Serialize)]
struct CohortSummary {
    num_cases: usize,
    mean: Aggregate,
    std: Aggregate,
    anterior_variant_balanced_accuracy: f64,
    posterior_variant_balanced_accuracy: f64,
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    cases: Vec<CaseEntry>,
    cohort: CohortSummary,
}

fn is_volume_file(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.ends_with(".nii") || lower.ends_with(".nii.gz") || lower.ends_with(".json")
}

/// Case list from a pred/gt directory pair: files matched by name, in sorted
/// order so reports are reproducible.
fn cases_from_dirs(pred: &Path, gt: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let mut names: Vec<String> = std::fs::read_dir(pred)
        .map_err(|e| CliError::Io(format!("cannot list {}: {e}", pred.display())))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_file())
        .filter_map(|entry| entry.file_name().to_str().map(String::from))
        .filter(|name| is_volume_file(name))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Validation(format!(
            "no volume files found in {}",
            pred.display()
        )));
    }
    names
        .into_iter()
        .map(|name| {
            let gt_path = gt.join(&name);
            if !gt_path.exists() {
                return Err(CliError::Validation(format!(
                    "no ground truth for case {name} in {}",
                    gt.display()
                )));
            }
            Ok(ManifestEntry {
                id: name.clone(),
                pred: pred.join(&name),
                gt: gt_path,
            })
        })
        .collect()
}

fn cases_from_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut entries: Vec<ManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("manifest {}: {e}", path.display())))?;
    if entries.is_empty() {
        return Err(CliError::Validation("manifest lists no cases".into()));
    }
    // Relative paths resolve against the manifest location.
    if let Some(base) = path.parent() {
        for entry in &mut entries {
            if entry.pred.is_relative() {
                entry.pred = base.join(&entry.pred);
            }
            if entry.gt.is_relative() {
                entry.gt = base.join(&entry.gt);
            }
        }
    }
    Ok(entries)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    cfg: &RunConfig,
    pred: Option<&Path>,
    gt: Option<&Path>,
    manifest: Option<&Path>,
    json: &Path,
    classes_mode: Option<ClassesMode>,
    class_map: Option<&Path>,
    jobs: usize,
) -> Result<(), CliError> {
    let map = cfg.resolve_class_map(class_map)?;
    let mut metrics_cfg: MetricsConfig = cfg.metrics.clone();
    if let Some(mode) = classes_mode {
        metrics_cfg.classes_mode = mode;
    }

    let cases = match (manifest, pred, gt) {
        (Some(m), _, _) => cases_from_manifest(m)?,
        (None, Some(p), Some(g)) => cases_from_dirs(p, g)?,
        _ => {
            return Err(CliError::Validation(
                "evaluate needs either --manifest or both --pred and --gt".into(),
            ))
        }
    };

    let evaluate_one = |entry: &ManifestEntry| -> Result<CaseEntry, CliError> {
        let pred = io::load_labels(&entry.pred, &map)?;
        let gt = io::load_labels(&entry.gt, &map)?;
        let metrics = evaluate_case(&pred, &gt, &metrics_cfg)?;
        Ok(CaseEntry {
            id: entry.id.clone(),
            metrics,
        })
    };

    // Per-case work is independent; the report keeps manifest order.
    let results: Vec<Result<CaseEntry, CliError>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Validation(format!("cannot build thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            cases.par_iter().map(evaluate_one).collect()
        })
    } else {
        cases.iter().map(evaluate_one).collect()
    };
    let case_entries: Vec<CaseEntry> = results.into_iter().collect::<Result<_, _>>()?;

    let collect = |f: fn(&CaseMetrics) -> f64| -> Vec<f64> {
        case_entries.iter().map(|c| f(&c.metrics)).collect()
    };
    let dice = collect(|m| m.class_average_dice);
    let hd = collect(|m| m.class_average_hd95_mm);
    let b0 = collect(|m| m.class_average_b0_error);
    let cl = collect(|m| m.cl_dice);
    let (dice_mean, dice_std) = mean_std(&dice);
    let (hd_mean, hd_std) = mean_std(&hd);
    let (b0_mean, b0_std) = mean_std(&b0);
    let (cl_mean, cl_std) = mean_std(&cl);

    let anterior_pred: Vec<String> = case_entries
        .iter()
        .map(|c| CowGraph::variant_code(&c.metrics.graph_pred.anterior))
        .collect();
    let anterior_gt: Vec<String> = case_entries
        .iter()
        .map(|c| CowGraph::variant_code(&c.metrics.graph_gt.anterior))
        .collect();
    let posterior_pred: Vec<String> = case_entries
        .iter()
        .map(|c| CowGraph::variant_code(&c.metrics.graph_pred.posterior))
        .collect();
    let posterior_gt: Vec<String> = case_entries
        .iter()
        .map(|c| CowGraph::variant_code(&c.metrics.graph_gt.posterior))
        .collect();

    let report = EvaluationReport {
        cohort: CohortSummary {
            num_cases: case_entries.len(),
            mean: Aggregate {
                class_average_dice: dice_mean,
                class_average_hd95_mm: hd_mean,
                class_average_b0_error: b0_mean,
                cl_dice: cl_mean,
            },
            std: Aggregate {
                class_average_dice: dice_std,
                class_average_hd95_mm: hd_std,
                class_average_b0_error: b0_std,
                cl_dice: cl_std,
            },
            anterior_variant_balanced_accuracy: balanced_accuracy(&anterior_pred, &anterior_gt)?,
            posterior_variant_balanced_accuracy: balanced_accuracy(&posterior_pred, &posterior_gt)?,
        },
        cases: case_entries,
    };
    write_json(&report, json)?;
    eprintln!(
        "evaluated {} cases: dice {:.4} ± {:.4}, clDice {:.4} ± {:.4}, B0 {:.4} ± {:.4}, HD95 {:.4} ± {:.4} mm",
        report.cohort.num_cases,
        dice_mean,
        dice_std,
        cl_mean,
        cl_std,
        b0_mean,
        b0_std,
        hd_mean,
        hd_std
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TopoStats {
    connectivity: u32,
    num_components: usize,
    total_foreground: usize,
    sizes: Vec<usize>,
}

pub fn topo(input: &Path, json: &Path, connectivity: Option<u32>) -> Result<(), CliError> {
    let conn = parse_connectivity(connectivity)?;
    let (mask, _, _) = io::load_mask(input)?;
    let comps = connected_components(&mask, conn);
    let stats = TopoStats {
        connectivity: conn.as_u32(),
        num_components: comps.num(),
        total_foreground: comps.sizes.iter().sum(),
        sizes: comps.sizes.clone(),
    };
    write_json(&stats, json)?;
    eprintln!(
        "{} components over {} foreground voxels",
        stats.num_components, stats.total_foreground
    );
    Ok(())
}
