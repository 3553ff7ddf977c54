//! Rigid registration: closed-form alignment of paired points and
//! iterative closest point for unpaired clouds. Used to compensate sensor
//! motion before flow estimation.

use nalgebra::Matrix3;

use crate::cloud::{RigidTransform, TimedPointCloud, Vec3};
use crate::error::{Error, Result};
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the mean correspondence distance changes less than this.
    pub convergence_tol: f64,
    /// Pairs farther apart than this are ignored.
    pub max_correspondence_dist: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 50,
            convergence_tol: 1e-5,
            max_correspondence_dist: 1.0,
        }
    }
}

/// Least-squares rigid motion mapping `source[i]` onto `target[i]`.
///
/// Solves the orthogonal Procrustes problem via SVD of the cross
/// covariance, with the determinant sign corrected so the result is a
/// proper rotation. Configurations whose centered rank is below 2
/// (coincident or collinear points) leave the rotation under-determined
/// and are rejected.
pub fn kabsch(source: &[Vec3], target: &[Vec3]) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::LengthMismatch {
            what: "kabsch pairs",
            expected: source.len(),
            got: target.len(),
        });
    }
    if source.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: source.len(),
        });
    }
    let n = source.len() as f64;
    let cs: Vec3 = source.iter().sum::<Vec3>() / n;
    let ct: Vec3 = target.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s - cs) * (t - ct).transpose();
    }
    let svd = h.svd(true, true);
    let sv = &svd.singular_values;
    if sv[0] <= 0.0 || sv[1] <= sv[0] * 1e-12 {
        return Err(Error::DegenerateGeometry {
            msg: "kabsch needs points spanning at least a plane",
        });
    }
    let u = svd.u.unwrap();
    let v = svd.v_t.unwrap().transpose();
    let d = (v * u.transpose()).determinant();
    let correction = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d.signum()));
    let rotation = v * correction * u.transpose();
    let translation = ct - rotation * cs;
    RigidTransform::new(rotation, translation)
}

/// Point-to-point ICP aligning `source` onto `target`.
///
/// Returns the recovered transform and the final mean inlier
/// correspondence distance. Fails if an iteration finds no pair within
/// `max_correspondence_dist`.
pub fn icp(
    source: &TimedPointCloud,
    target: &TimedPointCloud,
    config: &IcpConfig,
) -> Result<(RigidTransform, f64)> {
    source.validate()?;
    target.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::Empty {
            context: "icp cloud",
        });
    }
    let tree = KdTree::build(&target.points);
    let mut transform = RigidTransform::identity();

    let correspond = |t: &RigidTransform| -> Result<(Vec<Vec3>, Vec<Vec3>, f64)> {
        let mut src = Vec::new();
        let mut tgt = Vec::new();
        let mut sum = 0.0;
        for p in &source.points {
            let (j, d) = tree.nearest(&t.apply(p))?;
            if d <= config.max_correspondence_dist {
                src.push(*p);
                tgt.push(target.points[j]);
                sum += d;
            }
        }
        if src.is_empty() {
            return Err(Error::RegistrationFailed {
                msg: format!(
                    "no correspondences within {} m",
                    config.max_correspondence_dist
                ),
            });
        }
        let residual = sum / src.len() as f64;
        Ok((src, tgt, residual))
    };

    let (mut src, mut tgt, mut residual) = correspond(&transform)?;
    for _ in 0..config.max_iterations {
        transform = kabsch(&src, &tgt)?;
        let (ns, nt, next) = correspond(&transform)?;
        let done = (residual - next).abs() < config.convergence_tol;
        src = ns;
        tgt = nt;
        residual = next;
        if done {
            break;
        }
    }
    Ok((transform, residual))
}

/// Applies a rigid transform to the positions; per-point attributes ride
/// along unchanged.
pub fn apply_transform(cloud: &TimedPointCloud, t: &RigidTransform) -> TimedPointCloud {
    let mut out = cloud.clone();
    for p in &mut out.points {
        *p = t.apply(p);
    }
    out
}
