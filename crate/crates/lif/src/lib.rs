//! Scene flow estimation and rigid-motion segmentation for LiDAR point
//! cloud sequences.
//!
//! The pipeline ingests a sequence of frames, compensates sensor motion by
//! point-to-point registration, clusters the accumulated frames into rigid
//! candidates, and then jointly optimizes a per-point flow field against
//! three loss terms: bidirectional nearest-neighbor distance, pairwise
//! rigidity inside hard clusters, and eigenvector-weighted rigidity inside
//! soft (k-NN) neighborhoods. Clusters whose flow lands in the same target
//! cluster are merged as the optimization proceeds, so the final hard
//! clustering doubles as a rigid-object segmentation.
//!
//! The `examples/` directory is the best starting point; each example is a
//! runnable walkthrough of one capability. A thin `lif` binary wraps the
//! same entry points for batch use.

pub mod cli;
pub mod cloud;
pub mod cluster;
pub mod config;
pub mod error;
pub mod icp;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod optim;
mod seed;
pub mod spatial;
pub mod spectral;
pub mod synth;

pub use cloud::{preprocess, FlowField, PreprocessConfig, RigidTransform, TimedPointCloud, Vec3};
pub use cluster::{
    euclidean_clusters, merge_clusters, soft_clusters, spatiotemporal_hard_clusters, ClusterConfig,
    HardClustering, SoftCluster,
};
pub use config::CliConfig;
pub use error::{Error, Result};
pub use icp::{apply_transform, icp, kabsch, IcpConfig};
pub use loss::{
    distance_loss, hard_rigidity_loss, reward, soft_rigidity_loss, total_loss, LossConfig,
    LossReport,
};
pub use metrics::{
    adjusted_rand_index, dynamic_mask, flow_metrics, flow_metrics_with, per_class, point_errors,
    threeway, threeway_with, ClassEpe, FlowMetrics, MetricsConfig, ThreewayReport,
};
pub use optim::{
    adam_step, pair_windows, run_pair, run_sequence, sequence_transforms, AdamConfig, AdamState,
    MergeEvent, RunConfig, RunResult, TraceEntry,
};
pub use spatial::KdTree;
pub use spectral::{batch_principal_eig, principal_eig, Eig, EigConfig, RewardMatrix};
pub use synth::{
    benchmark_suite, generate, generate_scene, pair_ego_transform, scene_by_name, sensor_pose,
    two_movers_scene, ObjectSpec, OcclusionSpec, SceneSpec, Shape, SynthScene,
};
