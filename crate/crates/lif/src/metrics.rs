//! Flow-quality metrics and segmentation scoring.
//!
//! Every statistic is NaN-free by construction: an empty selection reports
//! `count == 0` with all fields zeroed, and a relative error against zero
//! ground truth is undefined rather than infinite. Undefined relative errors
//! never satisfy a relative accuracy or outlier clause; the absolute clause
//! alone decides.

use std::collections::BTreeMap;

use crate::cloud::{FlowField, Vec3};
use crate::error::{Error, Result};

const STRICT_ABS: f64 = 0.05;
const STRICT_REL: f64 = 0.05;
const RELAXED_ABS: f64 = 0.1;
const RELAXED_REL: f64 = 0.10;
const OUTLIER_ABS: f64 = 0.3;
const OUTLIER_REL: f64 = 0.10;

/// Evaluation conventions that the metric definitions leave open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    /// Ground-truth displacement above which a point counts as dynamic,
    /// meters per frame.
    pub dynamic_threshold: f64,
    /// Measure angles between homogenized `(f, 1)` 4-vectors instead of raw
    /// 3-vectors, keeping the angle defined at zero flow.
    pub homogeneous_angle: bool,
    /// Weight the three-way average by bucket size instead of uniformly.
    pub weighted_threeway: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            dynamic_threshold: 0.05,
            homogeneous_angle: true,
            weighted_threeway: false,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dynamic_threshold <= 0.0 || !self.dynamic_threshold.is_finite() {
            return Err(Error::InvalidParam {
                msg: format!(
                    "dynamic_threshold must be positive and finite, got {}",
                    self.dynamic_threshold
                ),
            });
        }
        Ok(())
    }
}

/// Aggregate error statistics over one selection of points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMetrics {
    /// Mean end-point error, meters.
    pub epe: f64,
    /// Fraction with error < 0.05 m or relative error < 5%.
    pub acc_strict: f64,
    /// Fraction with error < 0.1 m or relative error < 10%.
    pub acc_relaxed: f64,
    /// Fraction with error > 0.3 m or relative error > 10%.
    pub outliers: f64,
    /// Mean angle error, radians.
    pub angle_error: f64,
    /// Points evaluated. Zero means every other field is undefined (and
    /// reported as 0.0).
    pub count: usize,
}

impl FlowMetrics {
    fn empty() -> Self {
        FlowMetrics {
            epe: 0.0,
            acc_strict: 0.0,
            acc_relaxed: 0.0,
            outliers: 0.0,
            angle_error: 0.0,
            count: 0,
        }
    }
}

/// Error statistics split by motion state and foreground flag.
///
/// Dynamic background points are excluded from every bucket; the three
/// bucket counts therefore sum to the number of points evaluated, not
/// necessarily the number of points supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreewayReport {
    pub dynamic_foreground: FlowMetrics,
    pub static_foreground: FlowMetrics,
    pub static_background: FlowMetrics,
    /// Mean of the populated buckets' EPEs (uniform by default, weighted by
    /// bucket size when configured). Zero when no bucket is populated.
    pub average_epe: f64,
}

/// Per-class EPE triple. A half with no members is `None` and is omitted
/// from the average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassEpe {
    pub avg: f64,
    pub dynamic: Option<f64>,
    pub stat: Option<f64>,
}

/// Per-point error norms and relative errors. The relative error is
/// `e_i / |gt_i|` where the ground truth is nonzero, `None` otherwise.
pub fn point_errors(pred: &FlowField, gt: &[Vec3]) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    pred.check_alignment(gt.len())?;
    let mut e = Vec::with_capacity(gt.len());
    let mut e_rel = Vec::with_capacity(gt.len());
    for (f, g) in pred.vectors.iter().zip(gt) {
        let err = (f - g).norm();
        let gn = g.norm();
        e.push(err);
        e_rel.push((gn > 0.0).then(|| err / gn));
    }
    Ok((e, e_rel))
}

fn angle_between(f: &Vec3, g: &Vec3, homogeneous: bool) -> f64 {
    if f == g {
        return 0.0;
    }
    let (dot, na, nb) = if homogeneous {
        (
            f.dot(g) + 1.0,
            (f.norm_squared() + 1.0).sqrt(),
            (g.norm_squared() + 1.0).sqrt(),
        )
    } else {
        let (na, nb) = (f.norm(), g.norm());
        if na == 0.0 || nb == 0.0 {
            // Raw 3D angles are undefined against a zero vector; count a
            // right angle so the degenerate case is visible, not silent.
            return if na == nb {
                0.0
            } else {
                std::f64::consts::FRAC_PI_2
            };
        }
        (f.dot(g), na, nb)
    };
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Accuracy and error statistics over the masked subset (or all points).
pub fn flow_metrics(pred: &FlowField, gt: &[Vec3], mask: Option<&[bool]>) -> Result<FlowMetrics> {
    flow_metrics_with(pred, gt, mask, &MetricsConfig::default())
}

pub fn flow_metrics_with(
    pred: &FlowField,
    gt: &[Vec3],
    mask: Option<&[bool]>,
    config: &MetricsConfig,
) -> Result<FlowMetrics> {
    pred.check_alignment(gt.len())?;
    if let Some(m) = mask {
        if m.len() != gt.len() {
            return Err(Error::LengthMismatch {
                what: "mask",
                expected: gt.len(),
                got: m.len(),
            });
        }
    }

    let mut count = 0usize;
    let mut sum_e = 0.0;
    let mut sum_angle = 0.0;
    let mut n_strict = 0usize;
    let mut n_relaxed = 0usize;
    let mut n_outlier = 0usize;
    for i in 0..gt.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let f = &pred.vectors[i];
        let g = &gt[i];
        let e = (f - g).norm();
        let gn = g.norm();
        let e_rel = (gn > 0.0).then(|| e / gn);

        count += 1;
        sum_e += e;
        sum_angle += angle_between(f, g, config.homogeneous_angle);
        if e < STRICT_ABS || e_rel.is_some_and(|r| r < STRICT_REL) {
            n_strict += 1;
        }
        if e < RELAXED_ABS || e_rel.is_some_and(|r| r < RELAXED_REL) {
            n_relaxed += 1;
        }
        if e > OUTLIER_ABS || e_rel.is_some_and(|r| r > OUTLIER_REL) {
            n_outlier += 1;
        }
    }

    if count == 0 {
        return Ok(FlowMetrics::empty());
    }
    let n = count as f64;
    Ok(FlowMetrics {
        epe: sum_e / n,
        acc_strict: n_strict as f64 / n,
        acc_relaxed: n_relaxed as f64 / n,
        outliers: n_outlier as f64 / n,
        angle_error: sum_angle / n,
        count,
    })
}

/// Marks points whose ground-truth displacement exceeds the threshold.
pub fn dynamic_mask(gt: &[Vec3], dynamic_threshold: f64) -> Vec<bool> {
    gt.iter().map(|g| g.norm() > dynamic_threshold).collect()
}

/// Bucketed statistics: dynamic foreground, static foreground, static
/// background. Dynamic background points are dropped.
pub fn threeway(
    pred: &FlowField,
    gt: &[Vec3],
    is_foreground: &[bool],
    dynamic_threshold: f64,
) -> Result<ThreewayReport> {
    let config = MetricsConfig {
        dynamic_threshold,
        ..MetricsConfig::default()
    };
    threeway_with(pred, gt, is_foreground, &config)
}

pub fn threeway_with(
    pred: &FlowField,
    gt: &[Vec3],
    is_foreground: &[bool],
    config: &MetricsConfig,
) -> Result<ThreewayReport> {
    pred.check_alignment(gt.len())?;
    if is_foreground.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "is_foreground",
            expected: gt.len(),
            got: is_foreground.len(),
        });
    }
    config.validate()?;

    let dynamic = dynamic_mask(gt, config.dynamic_threshold);
    let select = |want_dyn: bool, want_fg: bool| -> Vec<bool> {
        (0..gt.len())
            .map(|i| dynamic[i] == want_dyn && is_foreground[i] == want_fg)
            .collect()
    };
    let dyn_fg = flow_metrics_with(pred, gt, Some(&select(true, true)), config)?;
    let stat_fg = flow_metrics_with(pred, gt, Some(&select(false, true)), config)?;
    let stat_bg = flow_metrics_with(pred, gt, Some(&select(false, false)), config)?;

    let buckets = [&dyn_fg, &stat_fg, &stat_bg];
    let populated: Vec<&FlowMetrics> = buckets.into_iter().filter(|b| b.count > 0).collect();
    let average_epe = if populated.is_empty() {
        0.0
    } else if config.weighted_threeway {
        let total: usize = populated.iter().map(|b| b.count).sum();
        populated
            .iter()
            .map(|b| b.epe * b.count as f64)
            .sum::<f64>()
            / total as f64
    } else {
        populated.iter().map(|b| b.epe).sum::<f64>() / populated.len() as f64
    };

    Ok(ThreewayReport {
        dynamic_foreground: dyn_fg,
        static_foreground: stat_fg,
        static_background: stat_bg,
        average_epe,
    })
}

/// Class-conditioned EPE. Each class reports its dynamic-member and
/// static-member means plus their average.
pub fn per_class(
    pred: &FlowField,
    gt: &[Vec3],
    class_id: &[u16],
    dynamic_threshold: f64,
) -> Result<BTreeMap<u16, ClassEpe>> {
    pred.check_alignment(gt.len())?;
    if class_id.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "class_id",
            expected: gt.len(),
            got: class_id.len(),
        });
    }
    if dynamic_threshold <= 0.0 || !dynamic_threshold.is_finite() {
        return Err(Error::InvalidParam {
            msg: format!("dynamic_threshold must be positive and finite, got {dynamic_threshold}"),
        });
    }

    // (dyn sum, dyn count, stat sum, stat count) per class.
    let mut acc: BTreeMap<u16, (f64, usize, f64, usize)> = BTreeMap::new();
    for i in 0..gt.len() {
        let e = (pred.vectors[i] - gt[i]).norm();
        let slot = acc.entry(class_id[i]).or_insert((0.0, 0, 0.0, 0));
        if gt[i].norm() > dynamic_threshold {
            slot.0 += e;
            slot.1 += 1;
        } else {
            slot.2 += e;
            slot.3 += 1;
        }
    }

    let mut out = BTreeMap::new();
    for (class, (dsum, dn, ssum, sn)) in acc {
        let dynamic = (dn > 0).then(|| dsum / dn as f64);
        let stat = (sn > 0).then(|| ssum / sn as f64);
        let avg = match (dynamic, stat) {
            (Some(d), Some(s)) => (d + s) / 2.0,
            (Some(d), None) => d,
            (None, Some(s)) => s,
            (None, None) => unreachable!("class entries are created only on membership"),
        };
        out.insert(class, ClassEpe { avg, dynamic, stat });
    }
    Ok(out)
}

/// Chance-corrected agreement between two labelings of the same points.
/// 1.0 for identical partitions (up to renaming), near 0 for independent
/// ones. Fewer than two points gives 1.0: there are no pairs to disagree on.
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "partition labels",
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }

    let mut cells: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut rows: BTreeMap<u32, usize> = BTreeMap::new();
    let mut cols: BTreeMap<u32, usize> = BTreeMap::new();
    for (&la, &lb) in a.iter().zip(b) {
        *cells.entry((la, lb)).or_insert(0) += 1;
        *rows.entry(la).or_insert(0) += 1;
        *cols.entry(lb).or_insert(0) += 1;
    }

    let comb2 = |x: usize| (x * (x.saturating_sub(1))) as f64 / 2.0;
    let sum_cells: f64 = cells.values().map(|&v| comb2(v)).sum();
    let sum_rows: f64 = rows.values().map(|&v| comb2(v)).sum();
    let sum_cols: f64 = cols.values().map(|&v| comb2(v)).sum();
    let total = comb2(n);

    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        // Both partitions are trivial in the same way (all singletons or one
        // cluster); they agree exactly.
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / denom)
}
