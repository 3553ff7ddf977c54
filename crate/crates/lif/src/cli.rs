//! Command-line driver: argument parsing, config resolution, and the
//! subcommand implementations.
//!
//! Every configuration key doubles as a long flag (`--loss.theta 0.05`),
//! so the `cmd_*` functions are thin: load inputs, call the library, write
//! outputs, print a summary. They are public so integration tests and the
//! examples can call them without spawning a process.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::cloud::{preprocess, RigidTransform, TimedPointCloud};
use crate::cluster::{spatiotemporal_hard_clusters, HardClustering};
use crate::config::{CliConfig, KEYS};
use crate::error::{Error, Result};
use crate::icp::icp;
use crate::io::{format_for_path, load_cloud, load_flow, save_cloud, save_cloud_ascii, save_flow};
use crate::metrics::{dynamic_mask, flow_metrics_with, per_class, threeway_with, FlowMetrics};
use crate::optim::{pair_windows, run_pair, sequence_transforms, TraceEntry};
use crate::seed;
use crate::synth::{generate, scene_by_name};

/// Stream tag mixed into the top-level seed for the flow optimizer.
const FLOW_SEED_SALT: u64 = 0x666c_6f77;

pub fn build_command() -> Command {
    let mut cmd = Command::new("lif")
        .about("Scene flow and rigid-motion segmentation for point cloud sequences")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .global(true)
                .help("JSON config file (fallback: LIF_CONFIG environment variable)"),
        );
    for key in KEYS {
        let mut arg = Arg::new(key.name).long(key.name).global(true).help(key.doc);
        arg = if key.name == "verbose" {
            arg.action(ArgAction::SetTrue)
        } else {
            arg.value_name(key.kind.value_name()).num_args(1)
        };
        cmd = cmd.arg(arg);
    }
    cmd.subcommand(
        Command::new("flow")
            .about("Estimate scene flow and rigid clusters over a frame sequence")
            .arg(
                Arg::new("frames")
                    .value_name("FRAME")
                    .num_args(2..)
                    .required(true)
                    .help("ordered frame files (.lifc binary or ASCII x-y-z)"),
            )
            .arg(
                Arg::new("out")
                    .long("out")
                    .value_name("DIR")
                    .required(true)
                    .help("output directory for flow, trace, and manifest files"),
            ),
    )
    .subcommand(
        Command::new("eval")
            .about("Score a predicted flow against a cloud carrying ground truth")
            .arg(Arg::new("pred").value_name("FLOW_FILE").required(true))
            .arg(Arg::new("cloud").value_name("CLOUD_FILE").required(true))
            .arg(
                Arg::new("csv")
                    .long("csv")
                    .value_name("PATH")
                    .help("also write the numbers as section,key,value rows"),
            ),
    )
    .subcommand(
        Command::new("synth")
            .about("Generate a synthetic benchmark scene as frame files")
            .arg(Arg::new("scene").value_name("SCENE").required(true))
            .arg(Arg::new("out").long("out").value_name("DIR").required(true))
            .arg(
                Arg::new("ascii")
                    .long("ascii")
                    .action(ArgAction::SetTrue)
                    .help("write plain x-y-z text instead of .lifc (drops attributes)"),
            ),
    )
    .subcommand(
        Command::new("icp")
            .about("Align two clouds and print the recovered rigid transform")
            .arg(Arg::new("source").value_name("SOURCE").required(true))
            .arg(Arg::new("target").value_name("TARGET").required(true)),
    )
    .subcommand(
        Command::new("cluster")
            .about("Cluster a spatio-temporal window; labels cover the last frame")
            .arg(
                Arg::new("frames")
                    .value_name("FRAME")
                    .num_args(1..)
                    .required(true),
            )
            .arg(
                Arg::new("out")
                    .long("out")
                    .value_name("PATH")
                    .required(true)
                    .help("label file to write"),
            ),
    )
}

fn config_from_matches(matches: &ArgMatches) -> Result<CliConfig> {
    let file = matches.get_one::<String>("config").map(PathBuf::from);
    let mut overrides: Vec<(&'static str, String)> = Vec::new();
    for key in KEYS {
        if key.name == "verbose" {
            if matches.get_flag("verbose") {
                overrides.push((key.name, "true".to_string()));
            }
        } else if let Some(v) = matches.get_one::<String>(key.name) {
            overrides.push((key.name, v.clone()));
        }
    }
    CliConfig::resolve(
        file.as_deref(),
        overrides.iter().map(|(k, v)| (*k, v.as_str())),
    )
}

/// Parses `argv` and runs the selected subcommand, returning the process
/// exit code. Errors print to stderr with their cause chain.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match build_command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut cause = std::error::Error::source(&e);
            while let Some(c) = cause {
                eprintln!("  caused by: {c}");
                cause = c.source();
            }
            1
        }
    }
}

fn dispatch(matches: &ArgMatches) -> Result<()> {
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let config = config_from_matches(sub)?;
    let body = || -> Result<()> {
        match name {
            "flow" => {
                let frames: Vec<PathBuf> = sub
                    .get_many::<String>("frames")
                    .unwrap()
                    .map(PathBuf::from)
                    .collect();
                let out = PathBuf::from(sub.get_one::<String>("out").unwrap());
                cmd_flow(&frames, &config, &out).map(|_| ())
            }
            "eval" => {
                let pred = PathBuf::from(sub.get_one::<String>("pred").unwrap());
                let cloud = PathBuf::from(sub.get_one::<String>("cloud").unwrap());
                let csv = sub.get_one::<String>("csv").map(PathBuf::from);
                cmd_eval(&pred, &cloud, &config, csv.as_deref())
            }
            "synth" => {
                let scene = sub.get_one::<String>("scene").unwrap();
                let out = PathBuf::from(sub.get_one::<String>("out").unwrap());
                cmd_synth(scene, config.seed, &out, sub.get_flag("ascii")).map(|_| ())
            }
            "icp" => {
                let source = PathBuf::from(sub.get_one::<String>("source").unwrap());
                let target = PathBuf::from(sub.get_one::<String>("target").unwrap());
                cmd_icp(&source, &target, &config).map(|_| ())
            }
            "cluster" => {
                let frames: Vec<PathBuf> = sub
                    .get_many::<String>("frames")
                    .unwrap()
                    .map(PathBuf::from)
                    .collect();
                let out = PathBuf::from(sub.get_one::<String>("out").unwrap());
                cmd_cluster(&frames, &config, &out).map(|_| ())
            }
            other => Err(Error::Config {
                msg: format!("unknown subcommand {other}"),
            }),
        }
    };
    if config.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Config {
                msg: format!("jobs: {e}"),
            })?
            .install(body)
    } else {
        body()
    }
}

/// Files written for one finished pair of a `flow` run.
#[derive(Debug, Clone)]
pub struct PairOutputs {
    pub pair: usize,
    pub iterations: usize,
    pub final_loss: f64,
    pub num_clusters: usize,
    pub source_path: PathBuf,
    pub flow_path: PathBuf,
    pub trace_path: PathBuf,
}

fn load_frames(inputs: &[PathBuf], config: &CliConfig) -> Result<Vec<TimedPointCloud>> {
    let mut frames = Vec::with_capacity(inputs.len());
    for path in inputs {
        let cloud = load_cloud(path, format_for_path(path))?;
        let (kept, _) = preprocess(&cloud, &config.preprocess)?;
        if kept.is_empty() {
            return Err(Error::Config {
                msg: format!("{}: no points survive preprocessing", path.display()),
            });
        }
        frames.push(kept);
    }
    Ok(frames)
}

/// Runs the full pipeline over ordered frames, writing per pair: the
/// ego-compensated source cloud (`source_NNNN.lifc`), the flow field with
/// final cluster labels (`pair_NNNN.liff`), and the loss trace
/// (`trace_NNNN.csv`). A `MANIFEST` line is appended and flushed after
/// each pair, so a failed run leaves a record of what completed. Every
/// file is re-read and checked before the pair counts as done.
pub fn cmd_flow(
    inputs: &[PathBuf],
    config: &CliConfig,
    out_dir: &Path,
) -> Result<Vec<PairOutputs>> {
    config.validate()?;
    if inputs.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: inputs.len(),
        });
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let frames = load_frames(inputs, config)?;

    let mut run_cfg = config.run;
    run_cfg.loss.rng_seed = seed::mix(config.seed, FLOW_SEED_SALT);
    if config.verbose {
        eprintln!("aligning {} consecutive pairs", frames.len() - 1);
    }
    let steps = sequence_transforms(&frames, &run_cfg.icp)?;

    let manifest_path = out_dir.join("MANIFEST");
    let mut manifest =
        fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut outputs = Vec::new();
    for t in 0..frames.len() - 1 {
        let wrap = |e: Error| Error::Sequence {
            pair: t,
            source: Box::new(e),
        };
        let (window, q_window) =
            pair_windows(&frames, &steps, t, run_cfg.cluster.horizon).map_err(wrap)?;
        let result = run_pair(&window, &q_window, &run_cfg).map_err(wrap)?;
        if config.verbose {
            for m in &result.merge_events {
                eprintln!(
                    "pair {t}: merge at iteration {} ({} -> {} clusters)",
                    m.iteration, m.before, m.after
                );
            }
        }

        let source = window.last().expect("window is non-empty");
        let source_path = out_dir.join(format!("source_{t:04}.lifc"));
        let flow_path = out_dir.join(format!("pair_{t:04}.liff"));
        let trace_path = out_dir.join(format!("trace_{t:04}.csv"));
        save_cloud(&source_path, source)?;
        save_flow(&flow_path, &result.flow, Some(&result.clusters.labels))?;
        write_trace(&trace_path, &result.loss_trace)?;
        verify_cloud_file(&source_path, source.len())?;
        verify_flow_file(&flow_path, &result.flow.vectors, &result.clusters.labels)?;
        verify_trace_file(&trace_path, result.loss_trace.len())?;

        let final_loss = result.loss_trace.last().map_or(f64::NAN, |e| e.total);
        println!(
            "pair {t}: iterations={} final_loss={} clusters={}",
            result.iterations_run, final_loss, result.clusters.num_clusters
        );
        writeln!(
            manifest,
            "pair {t:04}: source_{t:04}.lifc pair_{t:04}.liff trace_{t:04}.csv"
        )
        .and_then(|_| manifest.flush())
        .map_err(|e| Error::io(&manifest_path, e))?;

        outputs.push(PairOutputs {
            pair: t,
            iterations: result.iterations_run,
            final_loss,
            num_clusters: result.clusters.num_clusters,
            source_path,
            flow_path,
            trace_path,
        });
    }
    Ok(outputs)
}

fn write_trace(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut text = String::from("iteration,total,dist,hard,soft,num_clusters\n");
    for (i, e) in trace.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i, e.total, e.dist, e.hard, e.soft, e.num_clusters
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn verification_failed(path: &Path, what: &str) -> Error {
    Error::Config {
        msg: format!("verification failed for {}: {what}", path.display()),
    }
}

fn verify_cloud_file(path: &Path, expected_points: usize) -> Result<()> {
    let cloud = load_cloud(path, format_for_path(path))?;
    cloud.validate()?;
    if cloud.len() != expected_points {
        return Err(verification_failed(path, "point count changed"));
    }
    Ok(())
}

fn verify_flow_file(path: &Path, vectors: &[crate::cloud::Vec3], labels: &[u32]) -> Result<()> {
    let (flow, re_labels) = load_flow(path)?;
    // Coordinates are stored in f32, so compare against that rounding.
    let same = flow.len() == vectors.len()
        && flow.vectors.iter().zip(vectors).all(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .all(|(x, y)| *x == (*y as f32) as f64)
        });
    if !same {
        return Err(verification_failed(path, "vectors do not round-trip"));
    }
    if re_labels.as_deref() != Some(labels) {
        return Err(verification_failed(path, "labels do not round-trip"));
    }
    Ok(())
}

fn verify_trace_file(path: &Path, entries: usize) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.lines().count() != entries + 1 {
        return Err(verification_failed(path, "row count changed"));
    }
    Ok(())
}

fn print_metrics(label: &str, m: &FlowMetrics) {
    if m.count == 0 {
        println!("{label}: - (n=0)");
        return;
    }
    println!(
        "{label}: epe={:.4} acc_strict={:.4} acc_relaxed={:.4} outliers={:.4} angle_rad={:.4} n={}",
        m.epe, m.acc_strict, m.acc_relaxed, m.outliers, m.angle_error, m.count
    );
}

fn csv_metrics(out: &mut String, section: &str, m: &FlowMetrics) {
    out.push_str(&format!("{section},epe,{}\n", m.epe));
    out.push_str(&format!("{section},acc_strict,{}\n", m.acc_strict));
    out.push_str(&format!("{section},acc_relaxed,{}\n", m.acc_relaxed));
    out.push_str(&format!("{section},outliers,{}\n", m.outliers));
    out.push_str(&format!("{section},angle_rad,{}\n", m.angle_error));
    out.push_str(&format!("{section},count,{}\n", m.count));
}

/// Scores a stored flow against a cloud's ground-truth attributes and
/// prints overall metrics, the dynamic subset, the foreground/background
/// breakdown (when flags exist), and a per-class table (when class ids
/// exist).
pub fn cmd_eval(
    pred_path: &Path,
    cloud_path: &Path,
    config: &CliConfig,
    csv: Option<&Path>,
) -> Result<()> {
    config.validate()?;
    let (flow, _) = load_flow(pred_path)?;
    let cloud = load_cloud(cloud_path, format_for_path(cloud_path))?;
    cloud.validate()?;
    let gt = cloud.gt_flow.as_ref().ok_or_else(|| Error::Config {
        msg: format!(
            "{}: cloud carries no ground-truth flow",
            cloud_path.display()
        ),
    })?;

    let mut csv_text = String::from("section,key,value\n");
    let overall = flow_metrics_with(&flow, gt, None, &config.metrics)?;
    print_metrics("overall", &overall);
    csv_metrics(&mut csv_text, "overall", &overall);

    let mask = dynamic_mask(gt, config.metrics.dynamic_threshold);
    let dynamic = flow_metrics_with(&flow, gt, Some(&mask), &config.metrics)?;
    print_metrics("dynamic", &dynamic);
    csv_metrics(&mut csv_text, "dynamic", &dynamic);

    if let Some(fg) = &cloud.is_foreground {
        let three = threeway_with(&flow, gt, fg, &config.metrics)?;
        print_metrics("dynamic_foreground", &three.dynamic_foreground);
        print_metrics("static_foreground", &three.static_foreground);
        print_metrics("static_background", &three.static_background);
        println!("threeway_average: epe={:.4}", three.average_epe);
        csv_metrics(
            &mut csv_text,
            "dynamic_foreground",
            &three.dynamic_foreground,
        );
        csv_metrics(&mut csv_text, "static_foreground", &three.static_foreground);
        csv_metrics(&mut csv_text, "static_background", &three.static_background);
        csv_text.push_str(&format!("threeway,average_epe,{}\n", three.average_epe));
    }

    if let Some(ids) = &cloud.class_id {
        let table = per_class(&flow, gt, ids, config.metrics.dynamic_threshold)?;
        for (class, epe) in &table {
            let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            println!(
                "class {class}: avg={:.4} dynamic={} static={}",
                epe.avg,
                show(epe.dynamic),
                show(epe.stat)
            );
            csv_text.push_str(&format!("class_{class},avg,{}\n", epe.avg));
            if let Some(d) = epe.dynamic {
                csv_text.push_str(&format!("class_{class},dynamic,{d}\n"));
            }
            if let Some(s) = epe.stat {
                csv_text.push_str(&format!("class_{class},static,{s}\n"));
            }
        }
    }

    if let Some(path) = csv {
        fs::write(path, csv_text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Generates a named synthetic scene and writes one file per frame.
pub fn cmd_synth(scene: &str, seed: u64, out_dir: &Path, ascii: bool) -> Result<Vec<PathBuf>> {
    let spec = scene_by_name(scene, seed)?;
    let frames = generate(&spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let path = if ascii {
            out_dir.join(format!("frame_{i:04}.xyz"))
        } else {
            out_dir.join(format!("frame_{i:04}.lifc"))
        };
        if ascii {
            save_cloud_ascii(&path, frame)?;
        } else {
            save_cloud(&path, frame)?;
        }
        verify_cloud_file(&path, frame.len())?;
        paths.push(path);
    }
    println!(
        "wrote {} frames of \"{scene}\" to {}",
        frames.len(),
        out_dir.display()
    );
    Ok(paths)
}

/// Aligns source onto target and prints the transform.
pub fn cmd_icp(source: &Path, target: &Path, config: &CliConfig) -> Result<RigidTransform> {
    config.validate()?;
    let src = load_cloud(source, format_for_path(source))?;
    let dst = load_cloud(target, format_for_path(target))?;
    let (transform, residual) = icp(&src, &dst, &config.run.icp)?;
    println!("rotation:");
    for i in 0..3 {
        let r = &transform.rotation;
        println!("  {:+.9} {:+.9} {:+.9}", r[(i, 0)], r[(i, 1)], r[(i, 2)]);
    }
    let t = &transform.translation;
    println!("translation: {:+.9} {:+.9} {:+.9}", t.x, t.y, t.z);
    println!("angle_deg: {:.6}", transform.angle().to_degrees());
    println!("mean_residual: {:.9}", residual);
    Ok(transform)
}

/// Clusters the window formed by the given frames and writes one label per
/// point of the last frame: a `num_clusters N` header line, then one label
/// per line.
pub fn cmd_cluster(inputs: &[PathBuf], config: &CliConfig, out: &Path) -> Result<HardClustering> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::Empty {
            context: "cluster frame list",
        });
    }
    let window = load_frames(inputs, config)?;
    let clusters = spatiotemporal_hard_clusters(&window, config.run.cluster.radius)?;
    let mut text = format!("num_clusters {}\n", clusters.num_clusters);
    for label in &clusters.labels {
        text.push_str(&format!("{label}\n"));
    }
    fs::write(out, &text).map_err(|e| Error::io(out, e))?;
    let reread = fs::read_to_string(out).map_err(|e| Error::io(out, e))?;
    if reread != text {
        return Err(verification_failed(out, "label file does not round-trip"));
    }
    println!(
        "clusters: {} over {} points -> {}",
        clusters.num_clusters,
        clusters.labels.len(),
        out.display()
    );
    Ok(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_parses_dotted_overrides_everywhere() {
        build_command().debug_assert();
        let m = build_command()
            .try_get_matches_from([
                "lif",
                "--loss.theta",
                "0.05",
                "flow",
                "a.lifc",
                "b.lifc",
                "--out",
                "d",
                "--run.max_iterations",
                "10",
            ])
            .unwrap();
        let (_, sub) = m.subcommand().unwrap();
        let cfg = config_from_matches(sub).unwrap();
        assert_eq!(cfg.run.loss.theta, 0.05);
        assert_eq!(cfg.run.max_iterations, 10);
    }

    #[test]
    fn verbose_is_a_switch() {
        let m = build_command()
            .try_get_matches_from(["lif", "icp", "a", "b", "--verbose"])
            .unwrap();
        let (_, sub) = m.subcommand().unwrap();
        let cfg = config_from_matches(sub).unwrap();
        assert!(cfg.verbose);
    }

    #[test]
    fn every_config_key_is_a_flag() {
        let cmd = build_command();
        for key in KEYS {
            assert!(
                cmd.get_arguments().any(|a| a.get_id() == key.name),
                "{} has no flag",
                key.name
            );
        }
    }
}
