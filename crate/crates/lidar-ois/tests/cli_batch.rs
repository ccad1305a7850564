//! End-to-end checks of the batch subcommands over real files.

use std::fs;
use std::path::{Path, PathBuf};

use lidar_ois::cli::{
    cmd_cluster, cmd_eval, cmd_export_ply, cmd_refine, cmd_segment, Algo, ClusterArgs, EvalArgs,
    ExportArgs, SegmentArgs, SharedArgs, TuningArgs,
};
use lidar_ois::io::{read_labels, LabelRecord};
use tempfile::TempDir;

fn write_scan(path: &Path, pts: &[(f32, f32, f32)]) {
    let mut bytes = Vec::new();
    for &(x, y, z) in pts {
        for v in [x, y, z, 0.0f32] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).unwrap();
}

fn write_label_file(path: &Path, labels: &[(u16, u16)]) {
    let mut bytes = Vec::new();
    for &(sem, inst) in labels {
        bytes.extend_from_slice(&LabelRecord::new(sem, inst).raw.to_le_bytes());
    }
    fs::write(path, bytes).unwrap();
}

fn shared(scans: &Path, preds: Option<&Path>, out: &Path) -> SharedArgs {
    SharedArgs {
        scans: scans.to_path_buf(),
        preds: preds.map(Path::to_path_buf),
        out: out.to_path_buf(),
        config: None,
        jobs: 2,
    }
}

fn tuning() -> TuningArgs {
    TuningArgs {
        rho: None,
        theta: None,
        phi: None,
        no_early_termination: false,
    }
}

fn segment_args(scans: &Path, preds: &Path, out: &Path) -> SegmentArgs {
    SegmentArgs {
        shared: shared(scans, Some(preds), out),
        tuning: tuning(),
        no_refine: false,
        min_unknown_points: None,
        diffuse_r: None,
    }
}

/// A scan with a fragmented known car, an unknown blob, and road points.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let scans = dir.join("scans");
    let preds = dir.join("preds");
    fs::create_dir_all(&scans).unwrap();
    fs::create_dir_all(&preds).unwrap();

    let mut pts: Vec<(f32, f32, f32)> = vec![
        (10.0, 0.0, 0.0),
        (10.2, 0.0, 0.0),
        (10.5, 0.0, 0.0),
        (10.7, 0.0, 0.0),
    ];
    let mut labels: Vec<(u16, u16)> = vec![(10, 1), (10, 1), (10, 2), (10, 2)];
    for i in 0..12 {
        pts.push((20.0 + 0.05 * i as f32, 5.0, 0.0));
        labels.push((0, 0));
    }
    for i in 0..4 {
        pts.push((5.0 + i as f32, -6.0, -1.5));
        labels.push((40, 0));
    }
    write_scan(&scans.join("000000.bin"), &pts);
    write_label_file(&preds.join("000000.label"), &labels);
    (scans, preds)
}

#[test]
fn segment_writes_expected_instances_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (scans, preds) = fixture(dir.path());
    let out = dir.path().join("out");

    cmd_segment(&segment_args(&scans, &preds, &out)).unwrap();
    let out_path = out.join("000000.label");
    let records = read_labels(&out_path, 20).unwrap();

    // healed car = instance 1, unknown blob = instance 2, road = 0
    let ids: Vec<u16> = records.iter().map(|r| r.instance()).collect();
    assert!(ids[..4].iter().all(|&i| i == 1));
    assert!(ids[4..16].iter().all(|&i| i == 2));
    assert!(ids[16..].iter().all(|&i| i == 0));
    // semantics pass through
    assert_eq!(records[0].semantic(), 10);
    assert_eq!(records[19].semantic(), 40);

    let first = fs::read(&out_path).unwrap();
    cmd_segment(&segment_args(&scans, &preds, &out)).unwrap();
    assert_eq!(fs::read(&out_path).unwrap(), first, "rerun changed bytes");
}

#[test]
fn segment_without_refinement_keeps_fragments() {
    let dir = TempDir::new().unwrap();
    let (scans, preds) = fixture(dir.path());
    let out = dir.path().join("out");
    let mut args = segment_args(&scans, &preds, &out);
    args.no_refine = true;
    cmd_segment(&args).unwrap();
    let ids: Vec<u16> = read_labels(&out.join("000000.label"), 20)
        .unwrap()
        .iter()
        .map(|r| r.instance())
        .collect();
    assert_eq!(&ids[..4], &[1, 1, 2, 2]);
}

#[test]
fn segment_empty_dir_succeeds() {
    let dir = TempDir::new().unwrap();
    let scans = dir.path().join("scans");
    let preds = dir.path().join("preds");
    fs::create_dir_all(&scans).unwrap();
    fs::create_dir_all(&preds).unwrap();
    cmd_segment(&segment_args(&scans, &preds, &dir.path().join("out"))).unwrap();
}

#[test]
fn segment_missing_pair_fails() {
    let dir = TempDir::new().unwrap();
    let (scans, preds) = fixture(dir.path());
    fs::remove_file(preds.join("000000.label")).unwrap();
    let err = cmd_segment(&segment_args(&scans, &preds, &dir.path().join("out"))).unwrap_err();
    assert!(err.to_string().contains("1 of 1 scans failed"));
}

#[test]
fn cluster_three_blob_fixture() {
    let dir = TempDir::new().unwrap();
    let scans = dir.path().join("scans");
    fs::create_dir_all(&scans).unwrap();
    let mut pts = Vec::new();
    for &(cx, cy) in &[(10.0f32, 0.0f32), (20.0, 8.0), (-15.0, -4.0)] {
        for i in 0..8 {
            pts.push((cx + 0.04 * i as f32, cy, 0.0));
        }
    }
    write_scan(&scans.join("scene.bin"), &pts);
    let out = dir.path().join("out");

    let mut args = ClusterArgs {
        shared: shared(&scans, None, &out),
        tuning: tuning(),
        algo: Algo::Elc,
        radius: None,
    };
    cmd_cluster(&args).unwrap();
    let ids: Vec<u16> = read_labels(&out.join("scene.label"), 24)
        .unwrap()
        .iter()
        .map(|r| r.instance())
        .collect();
    let distinct: std::collections::BTreeSet<u16> = ids.iter().copied().collect();
    assert_eq!(distinct.len(), 3);

    // the Euclidean baseline with radius rho/2 agrees on this fixture
    args.algo = Algo::Euclidean;
    args.radius = Some(1.0);
    args.shared.out = dir.path().join("out_euc");
    cmd_cluster(&args).unwrap();
    let euc: Vec<u16> = read_labels(&args.shared.out.join("scene.label"), 24)
        .unwrap()
        .iter()
        .map(|r| r.instance())
        .collect();
    assert_eq!(euc, ids);
}

#[test]
fn cluster_rejects_bad_theta_before_io() {
    let dir = TempDir::new().unwrap();
    let scans = dir.path().join("scans");
    fs::create_dir_all(&scans).unwrap();
    write_scan(&scans.join("scene.bin"), &[(10.0, 0.0, 0.0)]);
    let out = dir.path().join("out");
    let mut args = ClusterArgs {
        shared: shared(&scans, None, &out),
        tuning: tuning(),
        algo: Algo::Elc,
        radius: None,
    };
    args.tuning.theta = Some(0.0);
    assert!(cmd_cluster(&args).is_err());
    assert!(!out.exists(), "output dir created despite usage error");
}

#[test]
fn refine_touches_only_known_points() {
    let dir = TempDir::new().unwrap();
    let (scans, preds) = fixture(dir.path());
    let out = dir.path().join("out");
    cmd_refine(&segment_args(&scans, &preds, &out)).unwrap();
    let ids: Vec<u16> = read_labels(&out.join("000000.label"), 20)
        .unwrap()
        .iter()
        .map(|r| r.instance())
        .collect();
    assert!(ids[..4].iter().all(|&i| i == 1), "car fragments not healed");
    assert!(ids[4..].iter().all(|&i| i == 0), "non-known points touched");
}

#[test]
fn eval_perfect_then_lumped() {
    let dir = TempDir::new().unwrap();
    let gt_dir = dir.path().join("gt");
    let pred_dir = dir.path().join("pred");
    fs::create_dir_all(&gt_dir).unwrap();
    fs::create_dir_all(&pred_dir).unwrap();

    // two 4-point car instances
    let gt: Vec<(u16, u16)> = (0..8).map(|i| (10, 1 + (i / 4) as u16)).collect();
    write_label_file(&gt_dir.join("s.label"), &gt);
    write_label_file(&pred_dir.join("s.label"), &gt);

    let out = dir.path().join("out_perfect");
    let args = EvalArgs {
        preds: pred_dir.clone(),
        gt: gt_dir.clone(),
        out: out.clone(),
        config: None,
        thresholds: vec![0.9, 0.7, 0.5],
    };
    cmd_eval(&args).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["s_assoc"]["all"], 1.0);
    assert_eq!(report["s_assoc"]["known"], 1.0);
    // no unknown gt instances: absent, not zero
    assert!(report["s_assoc"]["unknown"].is_null());
    assert_eq!(report["at_thresholds"][0]["recall"]["all"], 1.0);

    // lump everything into one predicted instance
    let lumped: Vec<(u16, u16)> = (0..8).map(|_| (10, 9)).collect();
    write_label_file(&pred_dir.join("s.label"), &lumped);
    let out2 = dir.path().join("out_lumped");
    cmd_eval(&EvalArgs {
        out: out2.clone(),
        preds: pred_dir.clone(),
        gt: gt_dir.clone(),
        config: None,
        thresholds: vec![0.5],
    })
    .unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["s_assoc"]["all"], 0.5);
}

#[test]
fn eval_reports_unpaired_stems() {
    let dir = TempDir::new().unwrap();
    let gt_dir = dir.path().join("gt");
    let pred_dir = dir.path().join("pred");
    fs::create_dir_all(&gt_dir).unwrap();
    fs::create_dir_all(&pred_dir).unwrap();
    write_label_file(&gt_dir.join("a.label"), &[(10, 1)]);
    write_label_file(&pred_dir.join("b.label"), &[(10, 1)]);
    let err = cmd_eval(&EvalArgs {
        preds: pred_dir,
        gt: gt_dir,
        out: dir.path().join("out"),
        config: None,
        thresholds: vec![0.5],
    })
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains('a') && msg.contains('b'), "stems not listed: {msg}");
}

#[test]
fn export_ply_writes_one_file_per_scan() {
    let dir = TempDir::new().unwrap();
    let (scans, preds) = fixture(dir.path());
    let out = dir.path().join("ply");
    cmd_export_ply(&ExportArgs {
        shared: shared(&scans, Some(&preds), &out),
    })
    .unwrap();
    let text = fs::read_to_string(out.join("000000.ply")).unwrap();
    assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 20\n"));
}

#[test]
fn config_file_overrides_and_cli_wins() {
    let dir = TempDir::new().unwrap();
    let (scans, preds) = fixture(dir.path());
    let config = dir.path().join("cfg.toml");
    fs::write(
        &config,
        "rho = 2.0\nrefine_known = false\nunknown_min_points = 100\n",
    )
    .unwrap();

    // config disables refinement and filters the 12-point blob away
    let out = dir.path().join("out_cfg");
    let mut args = segment_args(&scans, &preds, &out);
    args.shared.config = Some(config.clone());
    cmd_segment(&args).unwrap();
    let ids: Vec<u16> = read_labels(&out.join("000000.label"), 20)
        .unwrap()
        .iter()
        .map(|r| r.instance())
        .collect();
    assert_eq!(&ids[..4], &[1, 1, 2, 2]);
    assert!(ids[4..16].iter().all(|&i| i == 0), "min-points not applied");

    // CLI flag overrides the file value
    let out2 = dir.path().join("out_cli");
    let mut args = segment_args(&scans, &preds, &out2);
    args.shared.config = Some(config);
    args.min_unknown_points = Some(1);
    cmd_segment(&args).unwrap();
    let ids: Vec<u16> = read_labels(&out2.join("000000.label"), 20)
        .unwrap()
        .iter()
        .map(|r| r.instance())
        .collect();
    assert!(ids[4..16].iter().all(|&i| i == 3));
}
