//! End-to-end CLI behavior: exit codes, report contents, and config
//! override precedence.

use std::path::Path;
use std::process::Command;

use ndarray::Array3;

use cowtopo::classes::{ClassMap, CowClass};
use cowtopo::io;
use cowtopo::testing::phantoms;
use cowtopo::volume::{LabelVolume, ProbVolume, Spacing};

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cowtopo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_subcommand_exits_one_with_usage() {
    let out = cli(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "stderr was: {stderr}");
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
    assert_eq!(cli(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "detect",
        "--in",
        s(&dir.path().join("missing.nii.gz")),
        "--json",
        s(&dir.path().join("box.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_label_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    // A float volume where labels are expected.
    let v = cowtopo::Volume::new(Array3::from_elem((2, 2, 2), 0.5), Spacing::unit()).unwrap();
    let path = dir.path().join("float.nii");
    io::save_intensity(&v, &path).unwrap();
    let out = cli(&[
        "classify-graph",
        "--in",
        s(&path),
        "--json",
        s(&dir.path().join("graph.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn refine_single_component_reports_unchanged_and_copies_input() {
    let dir = tempfile::tempdir().unwrap();
    let map = ClassMap::default();
    let mut ids = Array3::<u8>::zeros((30, 4, 4));
    for z in 0..28 {
        ids[(z, 1, 1)] = map.id(CowClass::Acom);
    }
    let lbl = LabelVolume::new(ids, Spacing::unit(), map).unwrap();
    let input = dir.path().join("a.nii.gz");
    io::save_labels(&lbl, &input).unwrap();

    let out_path = dir.path().join("b.nii.gz");
    let report_path = dir.path().join("r.json");
    let out = cli(&[
        "refine",
        "--in",
        s(&input),
        "--out",
        s(&out_path),
        "--report",
        s(&report_path),
    ]);
    assert!(out.status.success());

    let back = io::load_labels(&out_path, &ClassMap::default()).unwrap();
    assert_eq!(back.data, lbl.data);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let acom = report["classes"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["class"] == "Acom")
        .unwrap();
    assert_eq!(acom["action"], "unchanged");
}

#[test]
fn loss_on_perfect_prediction_reports_minus_one() {
    let dir = tempfile::tempdir().unwrap();
    let lbl = phantoms::complete_cow();
    let prob = ProbVolume::one_hot_of(&lbl);
    let lbl_path = dir.path().join("gt.nii.gz");
    let prob_path = dir.path().join("p.nii.gz");
    io::save_labels(&lbl, &lbl_path).unwrap();
    io::save_prob(&prob, &prob_path).unwrap();

    let json = dir.path().join("report.json");
    let out = cli(&[
        "loss",
        "--prob",
        s(&prob_path),
        "--label",
        s(&lbl_path),
        "--json",
        s(&json),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let l_total = report["l_total"].as_f64().unwrap();
    assert!((l_total + 1.0).abs() < 1e-5, "l_total = {l_total}");
    assert_eq!(report["num_classes"], 13);
}

#[test]
fn config_file_is_honored_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    // Split class with components of 12 and 10 voxels, 3 apart.
    let map = ClassMap::default();
    let mut ids = Array3::<u8>::zeros((30, 3, 3));
    for z in 0..12 {
        ids[(z, 1, 1)] = map.id(CowClass::Acom);
    }
    for z in 15..25 {
        ids[(z, 1, 1)] = map.id(CowClass::Acom);
    }
    let lbl = LabelVolume::new(ids, Spacing::unit(), map).unwrap();
    let input = dir.path().join("in.nii.gz");
    io::save_labels(&lbl, &input).unwrap();

    // Default t_com = 20 wipes both fragments.
    let out1 = dir.path().join("out1.nii.gz");
    let r1 = dir.path().join("r1.json");
    assert!(cli(&["refine", "--in", s(&input), "--out", s(&out1), "--report", s(&r1)])
        .status
        .success());
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&r1).unwrap()).unwrap();
    assert_eq!(rep["classes"][2]["action"], "zeroed");

    // Config lowers t_com so the pair gets bridged.
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{ "refine": { "t_com": 5 } }"#).unwrap();
    let out2 = dir.path().join("out2.nii.gz");
    let r2 = dir.path().join("r2.json");
    assert!(cli(&[
        "refine", "--config", s(&cfg_path), "--in", s(&input),
        "--out", s(&out2), "--report", s(&r2),
    ])
    .status
    .success());
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&r2).unwrap()).unwrap();
    assert_eq!(rep["classes"][2]["action"], "bridged");

    // A flag overrides the config back to the strict threshold.
    let out3 = dir.path().join("out3.nii.gz");
    let r3 = dir.path().join("r3.json");
    assert!(cli(&[
        "refine", "--config", s(&cfg_path), "--tcom", "20", "--in", s(&input),
        "--out", s(&out3), "--report", s(&r3),
    ])
    .status
    .success());
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&r3).unwrap()).unwrap();
    assert_eq!(rep["classes"][2]["action"], "zeroed");
}

#[test]
fn evaluate_via_manifest_matches_directory_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = phantoms::split_pcom_pair();
    let pred_dir = dir.path().join("pred");
    let gt_dir = dir.path().join("gt");
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    io::save_labels(&pred, &pred_dir.join("c.nii.gz")).unwrap();
    io::save_labels(&gt, &gt_dir.join("c.nii.gz")).unwrap();

    let by_dirs = dir.path().join("dirs.json");
    assert!(cli(&[
        "evaluate", "--pred", s(&pred_dir), "--gt", s(&gt_dir), "--json", s(&by_dirs),
    ])
    .status
    .success());

    let manifest = dir.path().join("cases.json");
    std::fs::write(
        &manifest,
        r#"[{"id": "c.nii.gz", "pred": "pred/c.nii.gz", "gt": "gt/c.nii.gz"}]"#,
    )
    .unwrap();
    let by_manifest = dir.path().join("manifest.json");
    assert!(cli(&["evaluate", "--manifest", s(&manifest), "--json", s(&by_manifest)])
        .status
        .success());

    assert_eq!(
        std::fs::read(&by_dirs).unwrap(),
        std::fs::read(&by_manifest).unwrap()
    );
}

#[test]
fn weights_raw_flag_changes_the_floor() {
    let dir = tempfile::tempdir().unwrap();
    // A slab class whose rim weights clamp to zero.
    let map = ClassMap::default();
    let mut ids = Array3::<u8>::zeros((1, 9, 9));
    for y in 1..8 {
        for x in 1..8 {
            ids[(0, y, x)] = map.id(CowClass::Ba);
        }
    }
    let lbl = LabelVolume::new(ids, Spacing::unit(), map).unwrap();
    let input = dir.path().join("l.nii.gz");
    io::save_labels(&lbl, &input).unwrap();

    let clamped = dir.path().join("w.nii.gz");
    let raw = dir.path().join("wraw.nii.gz");
    assert!(cli(&["weights", "--label", s(&input), "--class", "BA", "--out", s(&clamped)])
        .status
        .success());
    assert!(cli(&[
        "weights", "--label", s(&input), "--class", "BA", "--out", s(&raw), "--raw",
    ])
    .status
    .success());

    let wc = io::load_intensity(&clamped).unwrap();
    let wr = io::load_intensity(&raw).unwrap();
    let min_c = wc.data.iter().cloned().fold(f32::INFINITY, f32::min);
    let min_r = wr.data.iter().cloned().fold(f32::INFINITY, f32::min);
    assert_eq!(min_c, 0.0);
    assert!(min_r < 0.0);
}
