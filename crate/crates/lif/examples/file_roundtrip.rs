//! On-disk formats: binary clouds with optional attributes, flow fields
//! with cluster labels, plain-text interchange, and the flat-keyed config
//! file used by the command-line tools.

use lif::io::{
    format_for_path, load_cloud, load_flow, save_cloud, save_cloud_ascii, save_flow, CloudFormat,
};
use lif::{CliConfig, FlowField, TimedPointCloud, Vec3};

fn main() -> lif::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");

    let mut cloud = TimedPointCloud::new(
        3,
        vec![
            Vec3::new(1.5, -2.25, 0.5),
            Vec3::new(0.0, 3.0, 1.0),
            Vec3::new(-4.5, 0.125, 2.0),
        ],
    );
    cloud.gt_flow = Some(vec![
        Vec3::new(0.1, 0.0, 0.0),
        Vec3::new(0.0, 0.2, 0.0),
        Vec3::zeros(),
    ]);
    cloud.class_id = Some(vec![1, 1, 0]);
    cloud.is_foreground = Some(vec![true, true, false]);

    // Binary round trip preserves every attribute.
    let binary = dir.path().join("frame.lifc");
    save_cloud(&binary, &cloud)?;
    let loaded = load_cloud(&binary, format_for_path(&binary))?;
    println!(
        "binary: {} points, frame {}, gt_flow={} class_id={} foreground={}",
        loaded.len(),
        loaded.frame_index,
        loaded.gt_flow.is_some(),
        loaded.class_id.is_some(),
        loaded.is_foreground.is_some()
    );

    // ASCII keeps only the coordinates.
    let ascii = dir.path().join("frame.xyz");
    save_cloud_ascii(&ascii, &cloud)?;
    let loaded = load_cloud(&ascii, CloudFormat::AsciiXyz)?;
    println!(
        "ascii: {} points, attributes dropped: gt_flow={}",
        loaded.len(),
        loaded.gt_flow.is_some()
    );

    // Flow fields carry the vectors plus optional cluster labels.
    let flow = FlowField {
        vectors: vec![
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::new(0.0, 0.2, 0.0),
            Vec3::zeros(),
        ],
    };
    let labels = vec![0u32, 0, 1];
    let flow_path = dir.path().join("pair.liff");
    save_flow(&flow_path, &flow, Some(&labels))?;
    let (loaded_flow, loaded_labels) = load_flow(&flow_path)?;
    println!(
        "flow: {} vectors, labels={:?}",
        loaded_flow.len(),
        loaded_labels.unwrap()
    );

    // The config file is a single flat JSON object; unknown keys fail
    // loudly instead of being ignored.
    let mut config = CliConfig::default();
    config.set_str("loss.theta", "0.05")?;
    config.set_str("run.enable_merge", "false")?;
    let config_path = dir.path().join("run.json");
    std::fs::write(&config_path, config.dump()).expect("write config");

    let mut reloaded = CliConfig::default();
    reloaded.load_file(&config_path)?;
    println!(
        "config: loss.theta={} run.enable_merge={}",
        reloaded.get("loss.theta").unwrap(),
        reloaded.get("run.enable_merge").unwrap()
    );

    let mut bad = CliConfig::default();
    let err = bad.set_str("loss.thete", "0.05").unwrap_err();
    println!("typo rejected: {err}");
    Ok(())
}
