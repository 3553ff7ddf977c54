//! Point cloud, flow field and rigid transform types shared by every stage
//! of the pipeline.

use nalgebra::{Matrix3, Unit, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// One LiDAR frame: positions plus optional per-point ground-truth
/// attributes carried through preprocessing and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPointCloud {
    pub frame_index: u32,
    pub points: Vec<Vec3>,
    pub gt_flow: Option<Vec<Vec3>>,
    pub class_id: Option<Vec<u16>>,
    pub is_foreground: Option<Vec<bool>>,
}

impl TimedPointCloud {
    pub fn new(frame_index: u32, points: Vec<Vec3>) -> Self {
        TimedPointCloud {
            frame_index,
            points,
            gt_flow: None,
            class_id: None,
            is_foreground: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks finiteness and attribute alignment. Loaders and pipeline
    /// entry points call this so later stages can assume a sane cloud.
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite { context: "points" });
        }
        if let Some(flow) = &self.gt_flow {
            if flow.len() != n {
                return Err(Error::AttributeLength {
                    attribute: "gt_flow",
                    expected: n,
                    got: flow.len(),
                });
            }
            if flow.iter().any(|f| !f.iter().all(|c| c.is_finite())) {
                return Err(Error::NonFinite { context: "gt_flow" });
            }
        }
        if let Some(class) = &self.class_id {
            if class.len() != n {
                return Err(Error::AttributeLength {
                    attribute: "class_id",
                    expected: n,
                    got: class.len(),
                });
            }
        }
        if let Some(fg) = &self.is_foreground {
            if fg.len() != n {
                return Err(Error::AttributeLength {
                    attribute: "is_foreground",
                    expected: n,
                    got: fg.len(),
                });
            }
        }
        Ok(())
    }

    /// Keeps the points selected by `keep`, filtering all attributes
    /// consistently.
    pub(crate) fn filter(&self, keep: impl Fn(usize) -> bool) -> (TimedPointCloud, Vec<usize>) {
        let index_map: Vec<usize> = (0..self.points.len()).filter(|&i| keep(i)).collect();
        let pick_vec = |v: &Vec<Vec3>| index_map.iter().map(|&i| v[i]).collect();
        let out = TimedPointCloud {
            frame_index: self.frame_index,
            points: pick_vec(&self.points),
            gt_flow: self.gt_flow.as_ref().map(pick_vec),
            class_id: self
                .class_id
                .as_ref()
                .map(|v| index_map.iter().map(|&i| v[i]).collect()),
            is_foreground: self
                .is_foreground
                .as_ref()
                .map(|v| index_map.iter().map(|&i| v[i]).collect()),
        };
        (out, index_map)
    }
}

/// Per-point motion vectors for a source cloud; same length and order as
/// the cloud it was estimated for.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub vectors: Vec<Vec3>,
}

impl FlowField {
    pub fn zeros(n: usize) -> Self {
        FlowField {
            vectors: vec![Vec3::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub(crate) fn check_alignment(&self, cloud_len: usize) -> Result<()> {
        if self.vectors.len() != cloud_len {
            return Err(Error::LengthMismatch {
                what: "flow field",
                expected: cloud_len,
                got: self.vectors.len(),
            });
        }
        Ok(())
    }
}

const ROTATION_TOL: f64 = 1e-9;

/// Proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let t = RigidTransform {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        if axis.norm() == 0.0 {
            return Err(Error::InvalidTransform {
                msg: "zero rotation axis",
            });
        }
        let rotation = nalgebra::Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Ok(RigidTransform {
            rotation: rotation.into_inner(),
            translation,
        })
    }

    /// Rotation about `center` composed with a translation, expressed as a
    /// single world-frame rigid map.
    pub fn about_point(axis: Vec3, angle: f64, center: Vec3, translation: Vec3) -> Result<Self> {
        let r = RigidTransform::from_axis_angle(axis, angle, Vec3::zeros())?;
        let t = center - r.rotation * center + translation;
        Ok(RigidTransform {
            rotation: r.rotation,
            translation: t,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let gram = r.transpose() * r;
        let ortho_err = (gram - Matrix3::identity()).norm();
        if !ortho_err.is_finite() || ortho_err > ROTATION_TOL {
            return Err(Error::InvalidTransform {
                msg: "rotation is not orthonormal",
            });
        }
        if (r.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidTransform {
                msg: "rotation determinant is not +1",
            });
        }
        if !self.translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidTransform {
                msg: "translation is not finite",
            });
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self.compose(&other)` applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    /// Points at this height or lower are treated as ground and dropped.
    pub ground_height: f64,
    /// Maximum horizontal (xy) distance from the sensor origin.
    pub max_range: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            ground_height: 0.3,
            max_range: 35.0,
        }
    }
}

/// Ground removal and range cropping. Returns the filtered cloud and the
/// strictly increasing map from output indices to input indices.
pub fn preprocess(
    cloud: &TimedPointCloud,
    config: &PreprocessConfig,
) -> Result<(TimedPointCloud, Vec<usize>)> {
    cloud.validate()?;
    if !config.ground_height.is_finite() || !config.max_range.is_finite() || config.max_range <= 0.0
    {
        return Err(Error::InvalidParam {
            msg: format!(
                "preprocess bounds ground_height={} max_range={}",
                config.ground_height, config.max_range
            ),
        });
    }
    let keep = |i: usize| {
        let p = &cloud.points[i];
        p.z > config.ground_height && (p.x * p.x + p.y * p.y).sqrt() <= config.max_range
    };
    Ok(cloud.filter(keep))
}
