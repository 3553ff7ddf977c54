//! The three optimization targets: a bidirectional distance loss pulling
//! warped points toward the target cloud, and hard/soft rigidity losses
//! rewarding flow that preserves pairwise distances inside clusters. Every
//! term returns its value together with the analytic gradient with respect
//! to each flow vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud::{FlowField, TimedPointCloud, Vec3};
use crate::cluster::{HardClustering, SoftCluster};
use crate::error::{Error, Result};
use crate::seed;
use crate::spatial::KdTree;
use crate::spectral::{principal_eig, EigConfig, RewardMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Distance term weight.
    pub alpha: f64,
    /// Hard rigidity term weight.
    pub beta: f64,
    /// Soft rigidity term weight.
    pub gamma: f64,
    /// Scale of the squared distance distortion in the reward, in m².
    pub theta: f64,
    /// Arguments of -log are floored here; floored regions get zero
    /// gradient.
    pub reward_floor: f64,
    /// Edges evaluated per hard cluster; complete graphs above this are
    /// subsampled.
    pub edge_budget: usize,
    /// Seed for the edge subsampling stream.
    pub rng_seed: u64,
    /// Squared distances in the Chamfer term (plain norms when false).
    pub squared_distance: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            theta: 0.03,
            reward_floor: 1e-6,
            edge_budget: 2048,
            rng_seed: 0,
            squared_distance: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::InvalidParam {
                msg: format!("theta {} must be positive", self.theta),
            });
        }
        if !(self.reward_floor > 0.0 && self.reward_floor < 1.0) {
            return Err(Error::InvalidParam {
                msg: format!("reward_floor {} must be in (0, 1)", self.reward_floor),
            });
        }
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParam {
                    msg: format!("{name} {w} must be a non-negative weight"),
                });
            }
        }
        if self.edge_budget == 0 {
            return Err(Error::InvalidParam {
                msg: "edge_budget must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// One loss evaluation. Term values are unweighted; terms skipped because
/// their weight is zero or their clusters are absent report as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub dist_term: f64,
    pub hard_term: f64,
    pub soft_term: f64,
    pub gradient: Vec<Vec3>,
}

/// Rigidity reward in [0, 1]: how well the flow pair preserves the
/// distance between two points. 1 means the pair moved rigidly.
pub fn reward(p_i: &Vec3, p_j: &Vec3, f_i: &Vec3, f_j: &Vec3, theta: f64) -> f64 {
    reward_and_grad(p_i, p_j, f_i, f_j, theta).0
}

/// Clipped reward plus its gradient with respect to `f_i`; the gradient
/// with respect to `f_j` is the negation. Zero gradient in clipped regions
/// and at coincident warped points.
fn reward_and_grad(p_i: &Vec3, p_j: &Vec3, f_i: &Vec3, f_j: &Vec3, theta: f64) -> (f64, Vec3) {
    let d = (p_i - p_j).norm();
    let w = (p_i + f_i) - (p_j + f_j);
    let dhat = w.norm();
    let delta = dhat - d;
    let raw = 1.0 - delta * delta / theta;
    if raw <= 0.0 {
        return (0.0, Vec3::zeros());
    }
    if raw >= 1.0 || dhat <= 1e-12 {
        // Flat at the clip boundary and at coincident warped points.
        return (raw.min(1.0), Vec3::zeros());
    }
    let grad = w * (-2.0 * delta / (theta * dhat));
    (raw, grad)
}

fn check_flow(p: &TimedPointCloud, f: &FlowField) -> Result<()> {
    p.validate()?;
    f.check_alignment(p.len())?;
    for v in &f.vectors {
        if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
            return Err(Error::NonFinite {
                context: "flow vector",
            });
        }
    }
    Ok(())
}

/// Bidirectional Chamfer distance between the warped source and the
/// target, with per-direction means.
///
/// The index over the warped source is rebuilt at every call; nearest
/// neighbor correspondences are held fixed for the gradient.
pub fn distance_loss(
    p: &TimedPointCloud,
    f: &FlowField,
    q: &TimedPointCloud,
    q_index: &KdTree,
    config: &LossConfig,
) -> Result<(f64, Vec<Vec3>)> {
    check_flow(p, f)?;
    if p.is_empty() {
        return Err(Error::Empty {
            context: "distance loss source",
        });
    }
    if q.is_empty() {
        return Err(Error::Empty {
            context: "distance loss target",
        });
    }
    if q_index.len() != q.len() {
        return Err(Error::LengthMismatch {
            what: "target index",
            expected: q.len(),
            got: q_index.len(),
        });
    }
    let n = p.len();
    let warped: Vec<Vec3> = (0..n).map(|i| p.points[i] + f.vectors[i]).collect();
    let warped_index = KdTree::build(&warped);
    let squared = config.squared_distance;

    let forward: Vec<(f64, Vec3)> = warped
        .par_iter()
        .map(|w| {
            let (j, d) = q_index.nearest(w)?;
            let diff = w - q_index.points()[j];
            if squared {
                Ok((d * d, diff * (2.0 / n as f64)))
            } else if d > 0.0 {
                Ok((d, diff / (d * n as f64)))
            } else {
                Ok((0.0, Vec3::zeros()))
            }
        })
        .collect::<Result<_>>()?;

    let backward: Vec<(f64, usize, Vec3)> = q
        .points
        .par_iter()
        .map(|qp| {
            let (j, d) = warped_index.nearest(qp)?;
            let diff = qp - warped[j];
            if squared {
                Ok((d * d, j, diff * (-2.0 / q.len() as f64)))
            } else if d > 0.0 {
                Ok((d, j, diff * (-1.0 / (d * q.len() as f64))))
            } else {
                Ok((0.0, j, Vec3::zeros()))
            }
        })
        .collect::<Result<_>>()?;

    let mut grad = vec![Vec3::zeros(); n];
    let mut value = 0.0;
    for (i, (term, g)) in forward.iter().enumerate() {
        value += term / n as f64;
        grad[i] += g;
    }
    for (term, j, g) in &backward {
        value += term / q.len() as f64;
        grad[*j] += g;
    }
    Ok((value, grad))
}

/// Maps an index in `0..m*(m-1)/2` to the pair `(a, b)`, `a < b`, in
/// lexicographic order.
fn decode_edge(e: usize, m: usize) -> (usize, usize) {
    let first_of_row = |a: usize| a * (2 * m - a - 1) / 2;
    let span = 2.0 * m as f64 - 1.0;
    let disc = (span * span - 8.0 * e as f64).max(0.0);
    let mut a = ((span - disc.sqrt()) / 2.0) as usize;
    a = a.min(m - 2);
    while a + 1 < m - 1 && first_of_row(a + 1) <= e {
        a += 1;
    }
    while a > 0 && first_of_row(a) > e {
        a -= 1;
    }
    (a, e - first_of_row(a) + a + 1)
}

/// Negative log reward averaged over each hard cluster's edges, summed
/// over clusters.
///
/// Clusters whose complete edge set exceeds `edge_budget` are evaluated on
/// a seeded uniform subsample, so values are reproducible for a fixed
/// `rng_seed`. Singleton clusters contribute nothing.
pub fn hard_rigidity_loss(
    p: &TimedPointCloud,
    f: &FlowField,
    hard: &HardClustering,
    config: &LossConfig,
) -> Result<(f64, Vec<Vec3>)> {
    config.validate()?;
    check_flow(p, f)?;
    if hard.len() != p.len() {
        return Err(Error::LengthMismatch {
            what: "hard clustering",
            expected: p.len(),
            got: hard.len(),
        });
    }
    let lists = hard.member_lists();
    let per_cluster: Vec<(f64, Vec<Vec3>)> = lists
        .par_iter()
        .enumerate()
        .map(|(label, members)| {
            let m = members.len();
            let mut grads = vec![Vec3::zeros(); m];
            if m < 2 {
                return (0.0, grads);
            }
            let total_edges = m * (m - 1) / 2;
            let mut value = 0.0;
            let mut eval = |e: usize| {
                let (a, b) = decode_edge(e, m);
                let (i, j) = (members[a], members[b]);
                let (r, g) = reward_and_grad(
                    &p.points[i],
                    &p.points[j],
                    &f.vectors[i],
                    &f.vectors[j],
                    config.theta,
                );
                let floored = r.max(config.reward_floor);
                value += -floored.ln();
                if r > config.reward_floor {
                    let scaled = g * (-1.0 / floored);
                    grads[a] += scaled;
                    grads[b] -= scaled;
                }
            };
            let evaluated = if total_edges <= config.edge_budget {
                for e in 0..total_edges {
                    eval(e);
                }
                total_edges
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(config.rng_seed, label as u64));
                for e in rand::seq::index::sample(&mut rng, total_edges, config.edge_budget) {
                    eval(e);
                }
                config.edge_budget
            };
            let scale = 1.0 / evaluated as f64;
            for g in &mut grads {
                *g *= scale;
            }
            (value * scale, grads)
        })
        .collect();

    let mut grad = vec![Vec3::zeros(); p.len()];
    let mut value = 0.0;
    for ((cluster_value, grads), members) in per_cluster.iter().zip(&lists) {
        value += cluster_value;
        for (slot, &i) in members.iter().enumerate() {
            grad[i] += grads[slot];
        }
    }
    Ok((value, grad))
}

/// Negative log of each neighborhood reward matrix's principal eigenvalue,
/// averaged over anchors.
///
/// The eigenvalue rises toward the neighborhood size as its members move
/// rigidly, so the minimum is `-log(k+1)`. Gradients use first-order
/// eigenvalue perturbation with the eigenvector frozen per evaluation; the
/// eigenvector weighting suppresses outlier members.
pub fn soft_rigidity_loss(
    p: &TimedPointCloud,
    f: &FlowField,
    soft: &[SoftCluster],
    config: &LossConfig,
) -> Result<(f64, Vec<Vec3>)> {
    config.validate()?;
    check_flow(p, f)?;
    let n = p.len();
    let mut grad = vec![Vec3::zeros(); n];
    if soft.is_empty() {
        return Ok((0.0, grad));
    }
    for s in soft {
        if s.members.first() != Some(&s.anchor) || s.members.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParam {
                msg: format!(
                    "soft cluster at anchor {} is not valid for the cloud",
                    s.anchor
                ),
            });
        }
    }
    let eig_config = EigConfig::default();
    let per_anchor: Vec<Result<(f64, Vec<Vec3>)>> = soft
        .par_iter()
        .map(|s| {
            let m = s.members.len();
            let edges = m * (m - 1) / 2;
            let mut matrix = RewardMatrix::identity(m);
            let mut pair_grads = vec![Vec3::zeros(); edges];
            for (e, pg) in pair_grads.iter_mut().enumerate() {
                let (a, b) = decode_edge(e, m);
                let (i, j) = (s.members[a], s.members[b]);
                let (r, g) = reward_and_grad(
                    &p.points[i],
                    &p.points[j],
                    &f.vectors[i],
                    &f.vectors[j],
                    config.theta,
                );
                matrix.set(a, b, r);
                *pg = g;
            }
            let eig = principal_eig(&matrix, &eig_config)?;
            let floored = eig.value.max(config.reward_floor);
            let mut grads = vec![Vec3::zeros(); m];
            if eig.value > config.reward_floor {
                let factor = -1.0 / floored;
                for (e, pg) in pair_grads.iter().enumerate() {
                    let (a, b) = decode_edge(e, m);
                    let coeff = factor * 2.0 * eig.vector[a] * eig.vector[b];
                    grads[a] += pg * coeff;
                    grads[b] -= pg * coeff;
                }
            }
            Ok((-floored.ln(), grads))
        })
        .collect();

    let scale = 1.0 / soft.len() as f64;
    let mut value = 0.0;
    for (idx, item) in per_anchor.into_iter().enumerate() {
        let (anchor_value, grads) = item.map_err(|e| Error::BatchEig {
            index: idx,
            source: Box::new(e),
        })?;
        value += anchor_value * scale;
        for (slot, &i) in soft[idx].members.iter().enumerate() {
            grad[i] += grads[slot] * scale;
        }
    }
    Ok((value, grad))
}

/// Weighted sum of the three terms. Terms with zero weight, or whose
/// clusters are `None`, are skipped entirely and report as zero.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    p: &TimedPointCloud,
    f: &FlowField,
    q: &TimedPointCloud,
    hard: Option<&HardClustering>,
    soft: Option<&[SoftCluster]>,
    q_index: &KdTree,
    config: &LossConfig,
) -> Result<LossReport> {
    config.validate()?;
    check_flow(p, f)?;
    let n = p.len();
    let mut gradient = vec![Vec3::zeros(); n];
    let mut dist_term = 0.0;
    let mut hard_term = 0.0;
    let mut soft_term = 0.0;

    if config.alpha != 0.0 {
        let (v, g) = distance_loss(p, f, q, q_index, config)?;
        dist_term = v;
        for (acc, gi) in gradient.iter_mut().zip(&g) {
            *acc += gi * config.alpha;
        }
    }
    if config.beta != 0.0 {
        if let Some(h) = hard {
            let (v, g) = hard_rigidity_loss(p, f, h, config)?;
            hard_term = v;
            for (acc, gi) in gradient.iter_mut().zip(&g) {
                *acc += gi * config.beta;
            }
        }
    }
    if config.gamma != 0.0 {
        if let Some(s) = soft {
            let (v, g) = soft_rigidity_loss(p, f, s, config)?;
            soft_term = v;
            for (acc, gi) in gradient.iter_mut().zip(&g) {
                *acc += gi * config.gamma;
            }
        }
    }
    Ok(LossReport {
        total: config.alpha * dist_term + config.beta * hard_term + config.gamma * soft_term,
        dist_term,
        hard_term,
        soft_term,
        gradient,
    })
}
