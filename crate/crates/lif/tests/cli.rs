//! Drives the real binary: exit codes, printed output, config file
//! handling through flag and environment, and output file validation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lif::io::{format_for_path, load_cloud, load_flow, save_cloud, save_flow};
use lif::{
    apply_transform, preprocess, FlowField, PreprocessConfig, RigidTransform, TimedPointCloud, Vec3,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lif"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Generates a scene through the binary and returns the frame paths.
fn synth_frames(dir: &Path, scene: &str, seed: &str) -> Vec<PathBuf> {
    let out = run(&[
        "synth",
        scene,
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "synth failed: {}", stderr(&out));
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn flow_rejects_unreadable_frames_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = synth_frames(&tmp.path().join("frames"), "two_movers_near", "11");
    let out_dir = tmp.path().join("out");

    let out = run(&[
        "flow",
        path_str(&frames[0]),
        path_str(&tmp.path().join("missing.lifc")),
        "--out",
        path_str(&out_dir),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("error:"), "stderr: {}", stderr(&out));
    let written: Vec<_> = fs::read_dir(&out_dir).unwrap().collect();
    assert!(written.is_empty(), "failed run left files behind");
}

#[test]
fn eval_requires_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let cloud_path = tmp.path().join("bare.lifc");
    let points: Vec<Vec3> = (0..10)
        .map(|i| Vec3::new(i as f64 * 0.5, 1.0, 1.0))
        .collect();
    save_cloud(&cloud_path, &TimedPointCloud::new(0, points.clone())).unwrap();
    let flow_path = tmp.path().join("pred.liff");
    save_flow(&flow_path, &FlowField::zeros(points.len()), None).unwrap();

    let out = run(&["eval", path_str(&flow_path), path_str(&cloud_path)]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("ground-truth"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn eval_scores_a_perfect_prediction_at_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = synth_frames(&tmp.path().join("frames"), "two_movers_near", "11");
    let cloud = load_cloud(&frames[0], format_for_path(&frames[0])).unwrap();

    let pred_path = tmp.path().join("pred.liff");
    let pred = FlowField {
        vectors: cloud.gt_flow.clone().unwrap(),
    };
    save_flow(&pred_path, &pred, None).unwrap();

    let csv_path = tmp.path().join("metrics.csv");
    let out = run(&[
        "eval",
        path_str(&pred_path),
        path_str(&frames[0]),
        "--csv",
        path_str(&csv_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("overall: epe=0.0000") && text.contains("acc_strict=1.0000"),
        "stdout: {text}"
    );

    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("section,key,value\n"), "csv: {csv}");
    assert!(csv.contains("overall,epe,0\n"), "csv: {csv}");
}

#[test]
fn config_file_applies_through_env_and_loses_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = synth_frames(&tmp.path().join("frames"), "two_movers_near", "11");
    let pair = [path_str(&frames[0]), path_str(&frames[1])];

    let cfg_env = tmp.path().join("env.json");
    fs::write(&cfg_env, "{\"run.max_iterations\": 5}").unwrap();
    let cfg_flag = tmp.path().join("flag.json");
    fs::write(&cfg_flag, "{\"run.max_iterations\": 6}").unwrap();

    // File named by the environment variable applies when no --config is
    // given.
    let out = bin()
        .env("LIF_CONFIG", &cfg_env)
        .args(["flow", pair[0], pair[1], "--out"])
        .arg(tmp.path().join("a"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("iterations=5"), "{}", stdout(&out));

    // An explicit --config beats the environment.
    let out = bin()
        .env("LIF_CONFIG", &cfg_env)
        .args(["--config"])
        .arg(&cfg_flag)
        .args(["flow", pair[0], pair[1], "--out"])
        .arg(tmp.path().join("b"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("iterations=6"), "{}", stdout(&out));

    // A flag beats both; the flag name is the file key.
    let out = bin()
        .env("LIF_CONFIG", &cfg_env)
        .args([
            "--run.max_iterations",
            "9",
            "flow",
            pair[0],
            pair[1],
            "--out",
        ])
        .arg(tmp.path().join("c"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("iterations=9"), "{}", stdout(&out));
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = synth_frames(&tmp.path().join("frames"), "two_movers_near", "11");
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, "{\"run.max_iter\": 5}").unwrap();

    let out = bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["flow", path_str(&frames[0]), path_str(&frames[1]), "--out"])
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(
        err.contains("run.max_iter") && err.contains("bad.json"),
        "stderr: {err}"
    );
}

#[test]
fn icp_prints_the_transform_it_recovered() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = synth_frames(&tmp.path().join("frames"), "static_room", "5");
    let source = load_cloud(&frames[0], format_for_path(&frames[0])).unwrap();

    let truth = RigidTransform::from_axis_angle(
        Vec3::new(0.3, -0.2, 0.93),
        1.5f64.to_radians(),
        Vec3::new(0.12, -0.05, 0.02),
    )
    .unwrap();
    let moved_path = tmp.path().join("moved.lifc");
    save_cloud(&moved_path, &apply_transform(&source, &truth)).unwrap();

    let out = run(&["icp", path_str(&frames[0]), path_str(&moved_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);

    let field = |prefix: &str| -> Vec<f64> {
        let line = text
            .lines()
            .find(|l| l.starts_with(prefix))
            .unwrap_or_else(|| panic!("missing {prefix} in: {text}"));
        line[prefix.len()..]
            .split_whitespace()
            .map(|w| w.parse().unwrap())
            .collect()
    };
    let angle = field("angle_deg:")[0];
    assert!((angle - 1.5).abs() < 1e-3, "angle {angle}");
    let t = field("translation:");
    for (got, want) in t.iter().zip([0.12, -0.05, 0.02]) {
        assert!((got - want).abs() < 1e-5, "translation {t:?}");
    }
    let residual = field("mean_residual:")[0];
    assert!(residual < 1e-5, "residual {residual}");
}

#[test]
fn cluster_chains_near_movers_through_the_window() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = synth_frames(&tmp.path().join("frames"), "two_movers_near", "11");
    let labels_path = tmp.path().join("labels.txt");

    // The objects start 0.25 m apart and diverge. Stacking three frames
    // chains each one to its own past and, through the first frame, to
    // the other object: purely spatial linkage cannot split them.
    let out = run(&[
        "cluster",
        path_str(&frames[0]),
        path_str(&frames[1]),
        path_str(&frames[2]),
        "--out",
        path_str(&labels_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("clusters: 1 over"),
        "{}",
        stdout(&out)
    );

    let cloud = load_cloud(&frames[2], format_for_path(&frames[2])).unwrap();
    let (kept, _) = preprocess(&cloud, &PreprocessConfig::default()).unwrap();
    let text = fs::read_to_string(&labels_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("num_clusters 1"));
    assert_eq!(lines.count(), kept.len());
}

#[test]
fn synth_is_deterministic_and_ascii_drops_to_coordinates() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth_frames(&tmp.path().join("a"), "single_mover", "3");
    let b = synth_frames(&tmp.path().join("b"), "single_mover", "3");
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert!(
            fs::read(x).unwrap() == fs::read(y).unwrap(),
            "{} differs between identical synth runs",
            x.display()
        );
    }

    let ascii_dir = tmp.path().join("ascii");
    let out = run(&[
        "synth",
        "single_mover",
        "--seed",
        "3",
        "--ascii",
        "--out",
        path_str(&ascii_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let first = ascii_dir.join("frame_0000.xyz");
    let binary = load_cloud(&a[0], format_for_path(&a[0])).unwrap();
    let text = load_cloud(&first, format_for_path(&first)).unwrap();
    assert_eq!(text.len(), binary.len());
    assert!(text.gt_flow.is_none(), "ascii format carries no attributes");
}

#[test]
fn flow_writes_validated_outputs_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = synth_frames(&tmp.path().join("frames"), "two_movers_near", "11");
    let out_dir = tmp.path().join("out");

    let out = run(&[
        "flow",
        path_str(&frames[0]),
        path_str(&frames[1]),
        path_str(&frames[2]),
        "--out",
        path_str(&out_dir),
        "--run.max_iterations",
        "40",
        "--cluster.horizon",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("pair 0:") && text.contains("pair 1:"),
        "{text}"
    );

    let manifest = fs::read_to_string(out_dir.join("MANIFEST")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(
        lines,
        [
            "pair 0000: source_0000.lifc pair_0000.liff trace_0000.csv",
            "pair 0001: source_0001.lifc pair_0001.liff trace_0001.csv",
        ]
    );
    for t in 0..2 {
        let source_path = out_dir.join(format!("source_{t:04}.lifc"));
        let source = load_cloud(&source_path, format_for_path(&source_path)).unwrap();
        let (flow, labels) = load_flow(out_dir.join(format!("pair_{t:04}.liff"))).unwrap();
        assert_eq!(flow.len(), source.len());
        assert_eq!(labels.unwrap().len(), source.len());
        assert!(
            source.gt_flow.is_some(),
            "source snapshots keep ground truth for later scoring"
        );
        let trace = fs::read_to_string(out_dir.join(format!("trace_{t:04}.csv"))).unwrap();
        assert!(trace.starts_with("iteration,total,dist,hard,soft,num_clusters\n"));
        assert!(trace.lines().count() > 1);
    }
}
