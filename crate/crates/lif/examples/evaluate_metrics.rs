//! The scoring toolbox on constructed flows: per-point errors, the
//! accuracy and outlier clauses, the dynamic/static split, per-class
//! rows, and partition agreement.

use lif::{adjusted_rand_index, flow_metrics, per_class, point_errors, threeway, FlowField, Vec3};

fn main() -> lif::Result<()> {
    // Four points: exact, small absolute error, small relative error on a
    // large motion, and a gross miss.
    let gt = vec![
        Vec3::new(0.2, 0.0, 0.0),
        Vec3::new(0.2, 0.0, 0.0),
        Vec3::new(4.0, 0.0, 0.0),
        Vec3::new(0.2, 0.0, 0.0),
    ];
    let pred = FlowField {
        vectors: vec![
            Vec3::new(0.2, 0.0, 0.0),
            Vec3::new(0.2, 0.03, 0.0),
            Vec3::new(4.0, 0.15, 0.0),
            Vec3::new(-0.3, 0.0, 0.0),
        ],
    };

    let (errors, relative) = point_errors(&pred, &gt)?;
    println!("point  error   relative");
    for (i, (e, r)) in errors.iter().zip(&relative).enumerate() {
        let r = r.map_or("-".to_string(), |r| format!("{r:.4}"));
        println!("{i}      {e:.4}  {r}");
    }

    // Accuracy takes either the absolute or the relative clause, outliers
    // likewise; point 2 above is accurate in relative terms even though
    // its absolute error (0.15 m) misses the strict cut.
    let m = flow_metrics(&pred, &gt, None)?;
    println!(
        "epe={:.4} acc_strict={:.2} acc_relaxed={:.2} outliers={:.2} angle_rad={:.4}",
        m.epe, m.acc_strict, m.acc_relaxed, m.outliers, m.angle_error
    );

    // A mixed scene: moving foreground, parked foreground, background.
    let gt = vec![
        Vec3::new(0.3, 0.0, 0.0),
        Vec3::new(0.3, 0.0, 0.0),
        Vec3::zeros(),
        Vec3::zeros(),
        Vec3::zeros(),
    ];
    let pred = FlowField {
        vectors: vec![
            Vec3::new(0.28, 0.0, 0.0),
            Vec3::new(0.34, 0.0, 0.0),
            Vec3::new(0.01, 0.0, 0.0),
            Vec3::zeros(),
            Vec3::new(0.0, 0.02, 0.0),
        ],
    };
    let foreground = vec![true, true, true, false, false];
    let report = threeway(&pred, &gt, &foreground, 0.05)?;
    println!(
        "threeway: dynamic_fg={:.4} (n={}) static_fg={:.4} (n={}) static_bg={:.4} (n={}) avg={:.4}",
        report.dynamic_foreground.epe,
        report.dynamic_foreground.count,
        report.static_foreground.epe,
        report.static_foreground.count,
        report.static_background.epe,
        report.static_background.count,
        report.average_epe
    );

    let classes = vec![1u16, 1, 2, 0, 0];
    for (class, row) in per_class(&pred, &gt, &classes, 0.05)? {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "class {class}: avg={:.4} dynamic={} static={}",
            row.avg,
            show(row.dynamic),
            show(row.stat)
        );
    }

    // Partition agreement is insensitive to label names and penalizes
    // both splits and mixtures.
    let truth = [0, 0, 1, 1];
    println!(
        "ARI identical={:+.3} relabeled={:+.3} split={:+.3} crossed={:+.3}",
        adjusted_rand_index(&truth, &[0, 0, 1, 1])?,
        adjusted_rand_index(&truth, &[5, 5, 2, 2])?,
        adjusted_rand_index(&truth, &[0, 0, 1, 2])?,
        adjusted_rand_index(&truth, &[0, 1, 0, 1])?,
    );
    Ok(())
}
