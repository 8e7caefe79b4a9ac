//! Acceptance suite: one test per release criterion, each printing a PASS
//! line with the pinned tolerance once its checks hold.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::{Array3, Array4};

use cowtopo::classes::{ClassMap, CowClass};
use cowtopo::io;
use cowtopo::kernels::{connected_components, edt, Connectivity};
use cowtopo::loss::{loss_gradient, total_loss, weight_map, CalConfig};
use cowtopo::metrics::{balanced_accuracy, evaluate_case, hd95, MetricsConfig};
use cowtopo::preprocess::{preprocess_case, truncate, Modality, PreprocessConfig};
use cowtopo::refine::{refine_class, refine_volume, RefineAction, RefineConfig};
use cowtopo::tasks::{box_boundary_iou, box_iou, roi_box_from_mask, BoundingBox3D};
use cowtopo::testing::{oracles, phantoms, random_mask, SplitMix64};
use cowtopo::volume::{LabelVolume, ProbVolume, Spacing, Volume};

#[test]
fn criterion_1_kernel_oracle_equivalence() {
    let start = Instant::now();
    let spacing = Spacing::new(0.6, 0.3525, 0.3525).unwrap();
    let shape = (20, 20, 20);

    for seed in 0..100u64 {
        // Dense mask for component labeling and surface distances.
        let density = 0.10 + 0.0025 * seed as f64;
        let mut dense = random_mask(shape, density, seed);
        dense[(10, 10, 10)] = true;

        let comps = connected_components(&dense, Connectivity::TwentySix);
        let expect = oracles::flood_fill_partition(&dense, &Connectivity::TwentySix.offsets());
        assert_eq!(comps.num(), expect.len(), "seed {seed}");
        let (nz, ny, nx) = shape;
        let _ = nz;
        let mut got: Vec<Vec<usize>> = vec![Vec::new(); comps.num()];
        for ((z, y, x), &id) in comps.labels.indexed_iter() {
            if id != 0 {
                got[id as usize - 1].push((z * ny + y) * nx + x);
            }
        }
        for g in &mut got {
            g.sort_unstable();
        }
        got.sort_by_key(|g| g[0]);
        assert_eq!(got, expect, "seed {seed}: partitions differ");

        // Sparse mask keeps the all-pairs distance oracle affordable.
        let mut sparse = random_mask(shape, 0.03, seed + 10_000);
        sparse[(5, 5, 5)] = true;
        let got_edt = edt(&sparse, &spacing).unwrap();
        let expect_edt = oracles::brute_force_edt(&sparse, &spacing);
        for (g, e) in got_edt.values.iter().zip(expect_edt.iter()) {
            assert!((g - e).abs() <= 1e-6, "seed {seed}: edt {g} vs {e}");
        }

        let mut other = random_mask(shape, 0.12, seed + 20_000);
        other[(4, 12, 9)] = true;
        let got_hd = hd95(&dense, &other, &spacing, None).unwrap();
        let expect_hd = oracles::brute_force_hd95(&dense, &other, &spacing);
        assert!(
            (got_hd - expect_hd).abs() <= 1e-9,
            "seed {seed}: hd95 {got_hd} vs {expect_hd}"
        );
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "oracle sweep took {elapsed:?}, budget is 60 s"
    );
    println!(
        "criterion 1 PASS: 100 masks x (components exact, edt <= 1e-6 mm, hd95 <= 1e-9) in {:.1?}",
        elapsed
    );
}

#[test]
fn criterion_2_weight_map() {
    let cfg = CalConfig::default();

    // Background weight exactly 1 on every fixture.
    let fixtures = [phantoms::complete_cow(), phantoms::split_pcom_pair().1];
    for lbl in &fixtures {
        for class in CowClass::ALL {
            let w = weight_map(lbl, class, &cfg).unwrap();
            let mask = lbl.class_mask(class);
            for ((idx, &fg), &value) in mask.indexed_iter().zip(w.values.iter()) {
                if !fg {
                    assert_eq!(value, 1.0, "{class} background at {idx:?}");
                }
            }
        }
    }

    // Centerline weight: a 1-voxel-thin class is its own centerline.
    let map = ClassMap::default();
    let mut ids = Array3::<u8>::zeros((9, 3, 3));
    for z in 1..8 {
        ids[(z, 1, 1)] = map.id(CowClass::Acom);
    }
    let thin = LabelVolume::new(ids, Spacing::unit(), map).unwrap();
    let w = weight_map(&thin, CowClass::Acom, &cfg).unwrap();
    let expect = -20.0 * 0.01f64.ln();
    for z in 1..8 {
        assert!(
            (w.values[(z, 1, 1)] - expect).abs() <= 1e-9,
            "centerline weight {} vs {}",
            w.values[(z, 1, 1)],
            expect
        );
    }

    // Monotone non-increasing in distance, on a thick class.
    let lbl = phantoms::split_pcom_pair().1;
    let w = weight_map(&lbl, CowClass::LPcom, &cfg).unwrap();
    let mask = lbl.class_mask(CowClass::LPcom);
    let skel = cowtopo::kernels::skeletonize(&mask);
    let field = edt(&skel.mask, &lbl.spacing).unwrap();
    let mut pairs: Vec<(f64, f64)> = mask
        .indexed_iter()
        .filter(|(_, &m)| m)
        .map(|(idx, _)| (field.values[idx], w.raw[idx]))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for win in pairs.windows(2) {
        assert!(win[0].1 >= win[1].1 - 1e-12, "weights not monotone in dc");
    }

    // Smaller epsilon emphasizes the centerline more.
    let mut prev = f64::NEG_INFINITY;
    for eps in [0.05, 0.01, 0.002] {
        let cfg = CalConfig {
            epsilon: eps,
            ..CalConfig::default()
        };
        let w = weight_map(&thin, CowClass::Acom, &cfg).unwrap();
        let center = w.values[(4, 1, 1)];
        assert!(center > prev, "epsilon {eps} did not raise the center weight");
        prev = center;
    }

    println!(
        "criterion 2 PASS: background == 1, centerline weight {expect:.3} within 1e-9, monotone in dc, epsilon ordering"
    );
}

#[test]
fn criterion_3_loss_and_gradients() {
    let cfg = CalConfig::default();

    // Perfect one-hot prediction over a fixture containing every class.
    let lbl = phantoms::complete_cow();
    let prob = ProbVolume::one_hot_of(&lbl);
    let breakdown = total_loss(&prob, &lbl, &cfg).unwrap();
    assert!(
        (breakdown.l_total + 1.0).abs() <= 1e-5,
        "perfect prediction scored {}",
        breakdown.l_total
    );

    // Zero-overlap fixture: tversky exactly 1.
    let map = ClassMap::default();
    let mut ids = Array3::<u8>::zeros((3, 3, 3));
    ids[(0, 0, 0)] = map.id(CowClass::Ba);
    let single = LabelVolume::new(ids, Spacing::unit(), map).unwrap();
    let mut wrong = ProbVolume::one_hot_of(&single);
    let c = CowClass::Ba.index() + 1;
    wrong.data[(c, 0, 0, 0)] = 0.0;
    wrong.data[(c, 2, 2, 2)] = 1.0;
    let target = cowtopo::one_hot(&single, CowClass::Ba);
    let ones = Array3::from_elem((3, 3, 3), 1.0);
    let terms = cowtopo::loss::class_loss(
        CowClass::Ba,
        wrong.class_channel(CowClass::Ba),
        &target,
        &ones,
        &cfg,
    )
    .unwrap();
    assert_eq!(terms.tversky_term, 1.0);

    // Analytic gradients vs central finite differences.
    let step = 1e-5;
    let mut checked = 0usize;
    for seed in 0..20u64 {
        let mut rng = SplitMix64(seed * 31 + 7);
        let map = ClassMap::default();
        let classes = [CowClass::Ba, CowClass::Acom, CowClass::RPcom, CowClass::LAca];
        let data = Array3::from_shape_fn((6, 6, 6), |_| {
            if rng.next_f64() < 0.3 {
                map.id(classes[rng.next_below(classes.len())])
            } else {
                0
            }
        });
        let lbl = LabelVolume::new(data, Spacing::unit(), map).unwrap();
        let prob_data = Array4::from_shape_fn((14, 6, 6, 6), |_| 0.05 + 0.9 * rng.next_f64());
        let prob = ProbVolume::new(prob_data, Spacing::unit()).unwrap();

        let grad = loss_gradient(&prob, &lbl, &cfg).unwrap();
        for _ in 0..10 {
            let c = 1 + rng.next_below(13);
            let (z, y, x) = (rng.next_below(6), rng.next_below(6), rng.next_below(6));
            let mut plus = prob.clone();
            plus.data[(c, z, y, x)] += step;
            let mut minus = prob.clone();
            minus.data[(c, z, y, x)] -= step;
            let fd = (total_loss(&plus, &lbl, &cfg).unwrap().l_total
                - total_loss(&minus, &lbl, &cfg).unwrap().l_total)
                / (2.0 * step);
            let a = grad[(c, z, y, x)];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel <= 1e-4, "seed {seed}: rel err {rel} at ch {c} ({z},{y},{x})");
            checked += 1;
        }
    }

    println!(
        "criterion 3 PASS: perfect one-hot l_total within 1e-5 of -1, tversky == 1 on zero overlap, {checked} gradient probes within 1e-4"
    );
}

#[test]
fn criterion_4_refinement_branches() {
    let cfg = RefineConfig::default();
    let spacing = Spacing::unit();

    let (out, outcome) = refine_class(&phantoms::refine_cases::one_component(), &spacing, &cfg);
    assert_eq!(outcome.action, RefineAction::Unchanged);
    assert_eq!(out, phantoms::refine_cases::one_component());

    let input = phantoms::refine_cases::bridgeable_pair();
    let (out, outcome) = refine_class(&input, &spacing, &cfg);
    assert_eq!(outcome.action, RefineAction::Bridged);
    assert_eq!(connected_components(&out, Connectivity::TwentySix).num(), 1);
    for (idx, &v) in input.indexed_iter() {
        if v {
            assert!(out[idx], "bridged output must contain the input");
        }
    }

    let (out, outcome) = refine_class(&phantoms::refine_cases::subthreshold_pair(), &spacing, &cfg);
    assert_eq!(outcome.action, RefineAction::Zeroed);
    assert!(!out.iter().any(|&v| v));

    let (out, outcome) = refine_class(&phantoms::refine_cases::far_pair(), &spacing, &cfg);
    assert_eq!(outcome.action, RefineAction::KeptLargest);
    assert_eq!(connected_components(&out, Connectivity::TwentySix).num(), 1);
    assert_eq!(out.iter().filter(|&&v| v).count(), 50);

    let (out, outcome) = refine_class(&phantoms::refine_cases::many_components(), &spacing, &cfg);
    assert_eq!(outcome.action, RefineAction::ReducedToTwoThenBridged);
    assert_eq!(connected_components(&out, Connectivity::TwentySix).num(), 1);

    // Volume-level: other classes' voxels must never change.
    let map = ClassMap::default();
    let bridgeable = phantoms::refine_cases::bridgeable_pair();
    let mut ids = Array3::<u8>::zeros(bridgeable.dim());
    for (idx, &v) in bridgeable.indexed_iter() {
        if v {
            ids[idx] = map.id(CowClass::Acom);
        }
    }
    for z in 0..40 {
        ids[(z, 2, 2)] = map.id(CowClass::Ba);
    }
    let lbl = LabelVolume::new(ids, spacing, map).unwrap();
    let (refined, report) = refine_volume(&lbl, &cfg).unwrap();
    assert_eq!(lbl.class_mask(CowClass::Ba), refined.class_mask(CowClass::Ba));
    let entry = report.classes.iter().find(|e| e.class == CowClass::Acom).unwrap();
    assert_eq!(entry.outcome.action, RefineAction::Bridged);

    println!(
        "criterion 4 PASS: unchanged/bridged/zeroed/kept-largest/reduced-then-bridged with B0 == 1 on both bridge cases"
    );
}

#[test]
fn criterion_5_refinement_quality() {
    let (pred, gt) = phantoms::split_pcom_pair();
    let metrics_cfg = MetricsConfig::default();
    let before = evaluate_case(&pred, &gt, &metrics_cfg).unwrap();
    let (refined, _) = refine_volume(&pred, &RefineConfig::default()).unwrap();
    let after = evaluate_case(&refined, &gt, &metrics_cfg).unwrap();

    assert!(
        after.class_average_b0_error < before.class_average_b0_error,
        "B0 error must strictly decrease: {} -> {}",
        before.class_average_b0_error,
        after.class_average_b0_error
    );
    let dice_shift = (after.class_average_dice - before.class_average_dice).abs();
    assert!(dice_shift < 0.01, "dice moved by {dice_shift}");

    println!(
        "criterion 5 PASS: class-average B0 {} -> {}, dice shift {:.5} < 0.01",
        before.class_average_b0_error, after.class_average_b0_error, dice_shift
    );
}

#[test]
fn criterion_6_preprocess() {
    let cfg = PreprocessConfig::default();

    let v = Volume::new(
        Array3::from_elem((2, 2, 2), 2500.0),
        Spacing::new(1.0, 1.0, 1.0).unwrap(),
    )
    .unwrap();
    assert_eq!(truncate(&v, Modality::Cta, &cfg).data[(0, 0, 0)], 1800.0);
    let v = Volume::new(
        Array3::from_elem((2, 2, 2), -5.0),
        Spacing::new(1.0, 1.0, 1.0).unwrap(),
    )
    .unwrap();
    assert_eq!(truncate(&v, Modality::Mra, &cfg).data[(0, 0, 0)], 0.0);

    let mut rng = SplitMix64(99);
    let data = Array3::from_shape_fn((12, 14, 14), |_| (rng.next_f64() * 5000.0 - 2000.0) as f32);
    let v = Volume::new(data, Spacing::new(1.1, 0.62, 0.71).unwrap()).unwrap();
    let once = preprocess_case(&v, Modality::Cta, &cfg).unwrap();
    let target = Spacing::new(0.6, 0.3525, 0.3525).unwrap();
    assert!(once.spacing.approx_eq(&target, 1e-6));
    assert!(once.data.iter().all(|&x| (0.0..=1.0).contains(&x)));
    let twice = preprocess_case(&once, Modality::Cta, &cfg).unwrap();
    assert_eq!(once.data, twice.data, "pipeline must be idempotent");

    println!(
        "criterion 6 PASS: CTA 2500 -> 1800, MRA -5 -> 0, spacing (0.6, 0.3525, 0.3525) within 1e-6, output in [0,1], idempotent"
    );
}

#[test]
fn criterion_7_detection() {
    // Cube with a distant speck.
    let mut mask = Array3::from_elem((32, 32, 32), false);
    for z in 10..=20 {
        for y in 10..=20 {
            for x in 10..=20 {
                mask[(z, y, x)] = true;
            }
        }
    }
    mask[(29, 3, 3)] = true;
    let bbox = roi_box_from_mask(&mask, Connectivity::TwentySix).unwrap();
    assert_eq!(bbox.min, [10, 10, 10]);
    assert_eq!(bbox.max, [20, 20, 20]);

    // Constructed overlap pair: exactly 1/3.
    let a = BoundingBox3D::new([0, 0, 0], [9, 9, 9]).unwrap();
    let b = BoundingBox3D::new([5, 0, 0], [14, 9, 9]).unwrap();
    assert_eq!(box_iou(&a, &b), 1.0 / 3.0);

    // Boundary IoU vs explicit shell voxelization on random pairs.
    let mut rng = SplitMix64(4242);
    let mut random_box = || {
        let lo = [rng.next_below(12), rng.next_below(12), rng.next_below(12)];
        let hi = [
            lo[0] + 1 + rng.next_below(10),
            lo[1] + 1 + rng.next_below(10),
            lo[2] + 1 + rng.next_below(10),
        ];
        BoundingBox3D::new(lo, hi).unwrap()
    };
    for trial in 0..50 {
        let a = random_box();
        let b = random_box();
        let d = 1 + trial % 3;
        let got = box_boundary_iou(&a, &b, d).unwrap();
        let expect = oracles::brute_force_shell_iou((&a.min, &a.max), (&b.min, &b.max), d);
        assert!(
            (got - expect).abs() < 1e-12,
            "trial {trial}: boundary iou {got} vs {expect}"
        );
    }

    println!("criterion 7 PASS: tight cube box, IoU == 1/3 exact, 50 boundary-IoU pairs match the voxel oracle");
}

#[test]
fn criterion_8_graph_derivation() {
    let cfg = cowtopo::tasks::GraphDeriveConfig::default();

    let complete = phantoms::complete_cow();
    let g = cowtopo::tasks::derive_graph(&complete, &cfg).unwrap();
    assert_eq!(g.bits(), [true; 8], "complete CoW must have all edges");

    // Deleting Acom flips exactly the Acom bit.
    let map = complete.class_map.clone();
    let acom = map.id(CowClass::Acom);
    let data = complete.data.mapv(|v| if v == acom { 0 } else { v });
    let cut = LabelVolume::new(data, complete.spacing, map).unwrap();
    let g_cut = cowtopo::tasks::derive_graph(&cut, &cfg).unwrap();
    let mut expect = g;
    expect.anterior[1] = false;
    assert_eq!(g_cut, expect);

    // Fetal posterior variant: L-P1 absent.
    let fetal = phantoms::fetal_posterior();
    let g_fetal = cowtopo::tasks::derive_graph(&fetal, &cfg).unwrap();
    assert!(!g_fetal.posterior[1], "L-P1 must be absent");

    // Balanced accuracy fixture: recalls 1.0 and 0.5 average to 0.75.
    let preds = ["a", "a", "b", "a"];
    let actuals = ["a", "a", "b", "b"];
    assert_eq!(balanced_accuracy(&preds, &actuals).unwrap(), 0.75);

    println!("criterion 8 PASS: complete CoW all 8 bits, Acom deletion flips one bit, fetal L-P1 == 0, balanced accuracy 0.75");
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cowtopo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_same_bytes(a: &Path, b: &Path) {
    let ba = std::fs::read(a).unwrap();
    let bb = std::fs::read(b).unwrap();
    assert_eq!(ba, bb, "{} differs between runs", a.display());
}

#[test]
fn criterion_9_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Inputs: a split-Pcom case as prediction, its ground truth, a CTA scan,
    // and a one-hot probability volume.
    let (pred, gt) = phantoms::split_pcom_pair();
    let pred_dir = root.join("pred");
    let gt_dir = root.join("gt");
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    io::save_labels(&pred, &pred_dir.join("case1.nii.gz")).unwrap();
    io::save_labels(&gt, &gt_dir.join("case1.nii.gz")).unwrap();
    let complete = phantoms::complete_cow();
    io::save_labels(&complete, &pred_dir.join("case2.nii.gz")).unwrap();
    io::save_labels(&complete, &gt_dir.join("case2.nii.gz")).unwrap();

    let mut rng = SplitMix64(1);
    let cta = Volume::new(
        Array3::from_shape_fn((10, 12, 12), |_| (rng.next_f64() * 4000.0 - 1000.0) as f32),
        Spacing::new(1.2, 0.705, 0.705).unwrap(),
    )
    .unwrap();
    let cta_path = root.join("cta.nii.gz");
    io::save_intensity(&cta, &cta_path).unwrap();

    let prob = ProbVolume::one_hot_of(&complete);
    let prob_path = root.join("prob.nii.gz");
    io::save_prob(&prob, &prob_path).unwrap();
    let complete_path = root.join("complete.nii.gz");
    io::save_labels(&complete, &complete_path).unwrap();

    let pred_path = pred_dir.join("case1.nii.gz");
    let s = |p: &Path| p.to_str().unwrap().to_string();

    // Every subcommand, twice, into run-specific output directories.
    for run in ["a", "b"] {
        let out = root.join(run);
        std::fs::create_dir_all(&out).unwrap();
        let o = |name: &str| s(&out.join(name));

        let steps: Vec<Vec<String>> = vec![
            vec![
                "preprocess".into(), "--modality".into(), "cta".into(),
                "--in".into(), s(&cta_path), "--out".into(), o("pre.nii.gz"),
            ],
            vec![
                "weights".into(), "--label".into(), s(&complete_path),
                "--class".into(), "Acom".into(), "--out".into(), o("w.nii.gz"),
            ],
            vec![
                "loss".into(), "--prob".into(), s(&prob_path),
                "--label".into(), s(&complete_path), "--json".into(), o("loss.json"),
            ],
            vec![
                "refine".into(), "--in".into(), s(&pred_path),
                "--out".into(), o("post.nii.gz"), "--report".into(), o("refine.json"),
            ],
            vec![
                "detect".into(), "--in".into(), s(&pred_path), "--json".into(), o("box.json"),
            ],
            vec![
                "classify-graph".into(), "--in".into(), s(&complete_path),
                "--json".into(), o("graph.json"),
            ],
            vec![
                "evaluate".into(), "--pred".into(), s(&pred_dir), "--gt".into(), s(&gt_dir),
                "--json".into(), o("metrics.json"), "--jobs".into(), "2".into(),
            ],
            vec![
                "topo".into(), "--in".into(), s(&pred_path), "--json".into(), o("topo.json"),
            ],
        ];
        for step in steps {
            let args: Vec<&str> = step.iter().map(String::as_str).collect();
            let output = run_cli(&args);
            assert!(
                output.status.success(),
                "{args:?} failed: {}",
                String::from_utf8_lossy(&output.stderr)
            );
        }
    }

    for name in [
        "pre.nii.gz",
        "w.nii.gz",
        "loss.json",
        "post.nii.gz",
        "refine.json",
        "box.json",
        "graph.json",
        "metrics.json",
        "topo.json",
    ] {
        assert_same_bytes(&root.join("a").join(name), &root.join("b").join(name));
    }

    println!("criterion 9 PASS: every subcommand byte-identical across runs, including evaluate --jobs 2");
}
