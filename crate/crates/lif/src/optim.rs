//! Flow optimization: Adam over the flow field, wrapped in the outer loop
//! that clusters, evaluates the joint loss, steps, and periodically merges
//! hard clusters guided by the current flow.

use rayon::prelude::*;

use crate::cloud::{FlowField, RigidTransform, TimedPointCloud, Vec3};
use crate::cluster::{
    merge_clusters, soft_clusters, spatiotemporal_hard_clusters, ClusterConfig, HardClustering,
    SoftCluster,
};
use crate::error::{Error, Result};
use crate::icp::{apply_transform, icp, IcpConfig};
use crate::loss::{total_loss, LossConfig};
use crate::seed;
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.004,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam accumulators for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One bias-corrected Adam update, in place. A zero gradient leaves the
/// parameters bit-identical.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.first_moment.len() {
        return Err(Error::LengthMismatch {
            what: "adam parameters",
            expected: state.first_moment.len(),
            got: params.len(),
        });
    }
    if grads.len() != params.len() {
        return Err(Error::LengthMismatch {
            what: "adam gradients",
            expected: params.len(),
            got: grads.len(),
        });
    }
    state.step_count += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.step_count as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step_count as i32);
    for i in 0..params.len() {
        state.first_moment[i] = c.beta1 * state.first_moment[i] + (1.0 - c.beta1) * grads[i];
        state.second_moment[i] =
            c.beta2 * state.second_moment[i] + (1.0 - c.beta2) * grads[i] * grads[i];
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        params[i] -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub max_iterations: usize,
    /// Stop when the relative change between the averages of the last
    /// `convergence_window` loss totals and the window before drops below
    /// this.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    /// Hard clusters are re-merged every this many iterations.
    pub merge_period: usize,
    pub enable_hard: bool,
    pub enable_soft: bool,
    pub enable_merge: bool,
    /// Restart the flow and optimizer state after a merge that changed the
    /// clustering instead of warm-starting.
    pub reset_flow_on_merge: bool,
    pub loss: LossConfig,
    pub cluster: ClusterConfig,
    pub adam: AdamConfig,
    pub icp: IcpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_iterations: 1500,
            convergence_tol: 1e-6,
            convergence_window: 25,
            merge_period: 100,
            enable_hard: true,
            enable_soft: true,
            enable_merge: true,
            reset_flow_on_merge: false,
            loss: LossConfig::default(),
            cluster: ClusterConfig::default(),
            adam: AdamConfig::default(),
            icp: IcpConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParam {
                msg: "max_iterations must be at least 1".into(),
            });
        }
        if self.merge_period == 0 || self.convergence_window == 0 {
            return Err(Error::InvalidParam {
                msg: "merge_period and convergence_window must be at least 1".into(),
            });
        }
        if !(self.convergence_tol >= 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::InvalidParam {
                msg: format!(
                    "convergence_tol {} must be finite and >= 0",
                    self.convergence_tol
                ),
            });
        }
        self.loss.validate()
    }
}

/// One iteration of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub total: f64,
    pub dist: f64,
    pub hard: f64,
    pub soft: f64,
    pub num_clusters: usize,
}

/// A merge invocation: how many clusters existed before and after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeEvent {
    pub iteration: usize,
    pub before: usize,
    pub after: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub flow: FlowField,
    pub clusters: HardClustering,
    pub loss_trace: Vec<TraceEntry>,
    pub merge_events: Vec<MergeEvent>,
    pub iterations_run: usize,
}

fn flatten(vectors: &[Vec3], out: &mut Vec<f64>) {
    out.clear();
    for v in vectors {
        out.extend_from_slice(&[v.x, v.y, v.z]);
    }
}

fn unflatten(flat: &[f64], out: &mut [Vec3]) {
    for (i, v) in out.iter_mut().enumerate() {
        *v = Vec3::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
    }
}

/// Joint flow estimation and segmentation for one frame pair.
///
/// `window` is the spatio-temporal window ending at the source frame P;
/// `q_window` the window ending at the target frame Q. Both must already
/// be expressed in a common (ego-compensated) coordinate frame — see
/// [`run_sequence`]. The flow starts at zero, descends the joint loss with
/// Adam, and hard clusters merge every `merge_period` iterations; the loop
/// stops at `max_iterations` or when the loss moving average flattens.
pub fn run_pair(
    window: &[TimedPointCloud],
    q_window: &[TimedPointCloud],
    config: &RunConfig,
) -> Result<RunResult> {
    config.validate()?;
    let p = window.last().ok_or(Error::Empty {
        context: "source window",
    })?;
    let q = q_window.last().ok_or(Error::Empty {
        context: "target window",
    })?;
    if p.is_empty() {
        return Err(Error::Empty {
            context: "source frame",
        });
    }
    if q.is_empty() {
        return Err(Error::Empty {
            context: "target frame",
        });
    }
    let n = p.len();

    let mut hard = spatiotemporal_hard_clusters(window, config.cluster.radius)?;
    let soft: Option<Vec<SoftCluster>> = if config.enable_soft {
        Some(soft_clusters(&p.points, config.cluster.k)?)
    } else {
        None
    };
    let q_index = KdTree::build(&q.points);
    let q_clustering = if config.enable_merge {
        Some(spatiotemporal_hard_clusters(
            q_window,
            config.cluster.radius,
        )?)
    } else {
        None
    };

    let mut flow = FlowField::zeros(n);
    let mut adam = AdamState::new(3 * n, config.adam);
    let mut flat_flow = Vec::with_capacity(3 * n);
    let mut flat_grad = Vec::with_capacity(3 * n);
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut merge_events = Vec::new();
    let w = config.convergence_window;

    for it in 0..config.max_iterations {
        // Fresh edge subsample per iteration, reproducible per seed.
        let loss_config = LossConfig {
            rng_seed: seed::mix(config.loss.rng_seed, it as u64),
            ..config.loss
        };
        let report = total_loss(
            p,
            &flow,
            q,
            config.enable_hard.then_some(&hard),
            soft.as_deref(),
            &q_index,
            &loss_config,
        )?;
        trace.push(TraceEntry {
            total: report.total,
            dist: report.dist_term,
            hard: report.hard_term,
            soft: report.soft_term,
            num_clusters: hard.num_clusters,
        });

        if trace.len() >= 2 * w {
            let recent: f64 = trace[trace.len() - w..]
                .iter()
                .map(|t| t.total)
                .sum::<f64>()
                / w as f64;
            let previous: f64 = trace[trace.len() - 2 * w..trace.len() - w]
                .iter()
                .map(|t| t.total)
                .sum::<f64>()
                / w as f64;
            if (recent - previous).abs() / previous.abs().max(1e-12) < config.convergence_tol {
                break;
            }
        }

        flatten(&flow.vectors, &mut flat_flow);
        flatten(&report.gradient, &mut flat_grad);
        adam_step(&mut adam, &mut flat_flow, &flat_grad)?;
        unflatten(&flat_flow, &mut flow.vectors);

        if config.enable_merge && (it + 1) % config.merge_period == 0 {
            let before = hard.num_clusters;
            hard = merge_clusters(
                &p.points,
                &flow,
                &hard,
                q_clustering.as_ref().unwrap(),
                &q_index,
                &config.cluster,
            )?;
            merge_events.push(MergeEvent {
                iteration: it + 1,
                before,
                after: hard.num_clusters,
            });
            if config.reset_flow_on_merge && hard.num_clusters != before {
                flow = FlowField::zeros(n);
                adam = AdamState::new(3 * n, config.adam);
            }
        }
    }

    let iterations_run = trace.len();
    Ok(RunResult {
        flow,
        clusters: hard,
        loss_trace: trace,
        merge_events,
        iterations_run,
    })
}

/// Runs the pipeline over every consecutive frame pair.
///
/// Each pair is ego-compensated first: point-to-point ICP estimates the
/// sensor motion between consecutive frames, and every window frame is
/// composed forward into the target frame's coordinates. Pairs are
/// processed concurrently; results come back in pair order, and errors
/// carry the pair index.
/// Per-pair ego-motion estimates for a frame sequence: element `t` aligns
/// frame `t` onto frame `t+1`. Errors carry the offending pair index.
pub fn sequence_transforms(
    frames: &[TimedPointCloud],
    config: &IcpConfig,
) -> Result<Vec<RigidTransform>> {
    if frames.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: frames.len(),
        });
    }
    let transforms: Vec<Result<RigidTransform>> = (0..frames.len() - 1)
        .into_par_iter()
        .map(|s| icp(&frames[s], &frames[s + 1], config).map(|(t, _)| t))
        .collect();
    let mut step: Vec<RigidTransform> = Vec::with_capacity(transforms.len());
    for (pair, t) in transforms.into_iter().enumerate() {
        step.push(t.map_err(|e| Error::Sequence {
            pair,
            source: Box::new(e),
        })?);
    }
    Ok(step)
}

/// Ego-compensated source and target windows for pair `t`, both expressed
/// in frame `t+1` coordinates. `steps` must hold one transform per
/// consecutive pair, as produced by [`sequence_transforms`].
pub fn pair_windows(
    frames: &[TimedPointCloud],
    steps: &[RigidTransform],
    t: usize,
    horizon: usize,
) -> Result<(Vec<TimedPointCloud>, Vec<TimedPointCloud>)> {
    if frames.len() < 2 || steps.len() != frames.len() - 1 {
        return Err(Error::LengthMismatch {
            what: "ego-motion steps",
            expected: frames.len().saturating_sub(1),
            got: steps.len(),
        });
    }
    if t >= steps.len() {
        return Err(Error::InvalidParam {
            msg: format!("pair index {t} out of range for {} frames", frames.len()),
        });
    }
    let horizon = horizon.max(1);
    // Compose pairwise transforms so frame s lands in frame t+1
    // coordinates: identity for t+1, then step[s] followed by the
    // composition for s+1.
    let target = t + 1;
    let into_target = |s: usize| -> RigidTransform {
        let mut c = RigidTransform::identity();
        for u in (s..=t).rev() {
            c = c.compose(&steps[u]);
        }
        c
    };
    let lo_p = (t + 1).saturating_sub(horizon);
    let window: Vec<TimedPointCloud> = (lo_p..=t)
        .map(|s| apply_transform(&frames[s], &into_target(s)))
        .collect();
    let lo_q = (target + 1).saturating_sub(horizon);
    let q_window: Vec<TimedPointCloud> = (lo_q..=target)
        .map(|s| apply_transform(&frames[s], &into_target(s)))
        .collect();
    Ok((window, q_window))
}

pub fn run_sequence(frames: &[TimedPointCloud], config: &RunConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let step = sequence_transforms(frames, &config.icp)?;
    let results: Vec<Result<RunResult>> = (0..frames.len() - 1)
        .into_par_iter()
        .map(|t| {
            let (window, q_window) = pair_windows(frames, &step, t, config.cluster.horizon)?;
            run_pair(&window, &q_window, config)
        })
        .collect();

    let mut out = Vec::with_capacity(results.len());
    for (pair, r) in results.into_iter().enumerate() {
        out.push(r.map_err(|e| Error::Sequence {
            pair,
            source: Box::new(e),
        })?);
    }
    Ok(out)
}
