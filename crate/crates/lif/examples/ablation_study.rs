//! Switch the regularizers off one at a time and measure what each one
//! buys, pooled over the whole benchmark suite: distance only, plus hard
//! rigidity, plus soft rigidity, plus the flow-guided merge.

use std::time::Instant;

use lif::{
    benchmark_suite, dynamic_mask, generate_scene, pair_windows, point_errors, run_pair,
    sequence_transforms, RunConfig,
};

fn main() -> lif::Result<()> {
    let rows = [
        ("distance only", false, false, false),
        ("+ hard rigidity", true, false, false),
        ("+ soft rigidity", true, true, false),
        ("+ cluster merge", true, true, true),
    ];
    let suite = benchmark_suite(2026);

    for (label, hard, soft, merge) in rows {
        let mut pooled: Vec<f64> = Vec::new();
        let started = Instant::now();
        print!("{label:<16}");
        for (spec, name) in &suite {
            let scene = generate_scene(spec)?;
            let frames = &scene.frames;

            let mut config = RunConfig::default();
            config.cluster.horizon = 3;
            config.max_iterations = 600;
            config.enable_hard = hard;
            config.enable_soft = soft;
            config.enable_merge = merge;

            let steps = sequence_transforms(frames, &config.icp)?;
            let t = frames.len() - 2;
            let (window, q_window) = pair_windows(frames, &steps, t, config.cluster.horizon)?;
            let result = run_pair(&window, &q_window, &config)?;

            let gt = window.last().unwrap().gt_flow.as_ref().unwrap();
            let (errors, _) = point_errors(&result.flow, gt)?;
            let mask = dynamic_mask(gt, 0.05);
            let scene_errors: Vec<f64> = errors
                .iter()
                .zip(&mask)
                .filter(|(_, &dynamic)| dynamic)
                .map(|(e, _)| *e)
                .collect();
            if scene_errors.is_empty() {
                print!("  {name}=(static)");
            } else {
                let epe = scene_errors.iter().sum::<f64>() / scene_errors.len() as f64;
                print!("  {name}={epe:.4}");
            }
            pooled.extend(scene_errors);
        }
        let epe = pooled.iter().sum::<f64>() / pooled.len() as f64;
        println!(
            "\n{label:<16}  pooled dynamic epe {epe:.4} over {} points ({:.1?})\n",
            pooled.len(),
            started.elapsed()
        );
    }
    Ok(())
}
