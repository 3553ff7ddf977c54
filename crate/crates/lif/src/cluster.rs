//! Point cloud segmentation: hard Euclidean clusters over a temporal
//! window, soft k-nearest neighborhoods, and flow-guided cluster merging.

use std::collections::BTreeMap;

use crate::cloud::{FlowField, TimedPointCloud, Vec3};
use crate::error::{Error, Result};
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    /// Connectivity radius for hard clustering.
    pub radius: f64,
    /// Frames per spatio-temporal window, including the target frame.
    pub horizon: usize,
    /// Neighbors per soft cluster.
    pub k: usize,
    /// Fraction of a cluster's cast votes one target cluster must collect
    /// before a merge happens. Above 0.5 the winner is unique.
    pub merge_vote_fraction: f64,
    /// Warped points farther than this from their match do not vote.
    pub merge_dist_cap: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            radius: 0.3,
            horizon: 5,
            k: 16,
            merge_vote_fraction: 0.6,
            merge_dist_cap: 0.5,
        }
    }
}

/// A partition of a point set. Labels are compact, `0..num_clusters`, and
/// ordered by each cluster's lowest member index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardClustering {
    pub labels: Vec<u32>,
    pub num_clusters: usize,
}

impl HardClustering {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices per cluster, in ascending order.
    pub fn member_lists(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            lists[l as usize].push(i);
        }
        lists
    }
}

/// A point together with its k nearest neighbors. `members[0]` is the
/// anchor itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoftCluster {
    pub anchor: usize,
    pub members: Vec<usize>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // Lower index wins so roots stay deterministic.
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Renumbers arbitrary ids into compact labels ordered by first appearance.
fn compact(raw: impl Iterator<Item = usize>) -> HardClustering {
    let mut map: BTreeMap<usize, u32> = BTreeMap::new();
    let mut next = 0u32;
    let mut labels = Vec::new();
    for r in raw {
        let l = *map.entry(r).or_insert_with(|| {
            let l = next;
            next += 1;
            l
        });
        labels.push(l);
    }
    HardClustering {
        labels,
        num_clusters: next as usize,
    }
}

/// Connected components of the radius graph: two points share a cluster
/// when a chain of hops, each at most `radius` long (inclusive), links
/// them. Radius zero degenerates to one cluster per distinct position.
pub fn euclidean_clusters(points: &[Vec3], radius: f64) -> Result<HardClustering> {
    if !radius.is_finite() || radius < 0.0 {
        return Err(Error::InvalidParam {
            msg: format!("cluster radius {radius} must be finite and non-negative"),
        });
    }
    for p in points {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::NonFinite {
                context: "cluster input point",
            });
        }
    }
    if points.is_empty() {
        return Ok(HardClustering {
            labels: Vec::new(),
            num_clusters: 0,
        });
    }
    let tree = KdTree::build(points);
    let mut uf = UnionFind::new(points.len());
    for (i, p) in points.iter().enumerate() {
        for j in tree.radius(p, radius) {
            uf.union(i, j);
        }
    }
    let roots: Vec<usize> = (0..points.len()).map(|i| uf.find(i)).collect();
    Ok(compact(roots.into_iter()))
}

/// Hard clusters for the final frame of a window, computed on the
/// concatenation of every frame so that points sharing space at any time
/// inside the window end up together.
pub fn spatiotemporal_hard_clusters(
    window: &[TimedPointCloud],
    radius: f64,
) -> Result<HardClustering> {
    if window.is_empty() {
        return Err(Error::Empty {
            context: "clustering window",
        });
    }
    let mut all = Vec::new();
    for frame in window {
        frame.validate()?;
        all.extend_from_slice(&frame.points);
    }
    let joint = euclidean_clusters(&all, radius)?;
    let last = window.last().unwrap().points.len();
    let start = all.len() - last;
    Ok(compact(joint.labels[start..].iter().map(|&l| l as usize)))
}

/// One soft cluster per point: the anchor plus its `k` nearest neighbors.
pub fn soft_clusters(points: &[Vec3], k: usize) -> Result<Vec<SoftCluster>> {
    if k == 0 {
        return Err(Error::InvalidParam {
            msg: "soft clusters need k >= 1".into(),
        });
    }
    if points.len() < k + 1 {
        return Err(Error::TooFewPoints {
            needed: k + 1,
            got: points.len(),
        });
    }
    let tree = KdTree::build(points);
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let hits = tree.knn(p, k + 1)?;
        let mut members = Vec::with_capacity(k + 1);
        members.push(i);
        members.extend(hits.iter().map(|&(j, _)| j).filter(|&j| j != i).take(k));
        out.push(SoftCluster { anchor: i, members });
    }
    Ok(out)
}

/// Flow-guided merging of hard clusters.
///
/// Each point warps by its flow and votes for the target-frame cluster of
/// its nearest target point, unless the match is farther than
/// `merge_dist_cap`. Source clusters whose votes concentrate on one target
/// cluster (at least `merge_vote_fraction` of the votes the cluster cast)
/// are unioned when they picked the same target. The result is always a
/// coarsening: existing clusters never split.
pub fn merge_clusters(
    points: &[Vec3],
    flow: &FlowField,
    hard: &HardClustering,
    q_clustering: &HardClustering,
    q_tree: &KdTree,
    config: &ClusterConfig,
) -> Result<HardClustering> {
    flow.check_alignment(points.len())?;
    if hard.len() != points.len() {
        return Err(Error::LengthMismatch {
            what: "hard clustering",
            expected: points.len(),
            got: hard.len(),
        });
    }
    if q_clustering.len() != q_tree.len() {
        return Err(Error::LengthMismatch {
            what: "target clustering",
            expected: q_tree.len(),
            got: q_clustering.len(),
        });
    }
    if !(config.merge_vote_fraction > 0.5 && config.merge_vote_fraction <= 1.0) {
        return Err(Error::InvalidParam {
            msg: format!(
                "merge_vote_fraction {} must be in (0.5, 1]",
                config.merge_vote_fraction
            ),
        });
    }
    if q_tree.is_empty() || points.is_empty() {
        return Ok(hard.clone());
    }

    // votes[cluster] maps target label to vote count.
    let mut votes: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); hard.num_clusters];
    let mut cast: Vec<usize> = vec![0; hard.num_clusters];
    for (i, p) in points.iter().enumerate() {
        let warped = p + flow.vectors[i];
        let (j, d) = q_tree.nearest(&warped)?;
        if d <= config.merge_dist_cap {
            let c = hard.labels[i] as usize;
            *votes[c].entry(q_clustering.labels[j]).or_insert(0) += 1;
            cast[c] += 1;
        }
    }

    let mut target: Vec<Option<u32>> = vec![None; hard.num_clusters];
    for c in 0..hard.num_clusters {
        if cast[c] == 0 {
            continue;
        }
        for (&q, &n) in &votes[c] {
            if n as f64 >= config.merge_vote_fraction * cast[c] as f64 {
                target[c] = Some(q);
                break;
            }
        }
    }

    let mut uf = UnionFind::new(hard.num_clusters);
    let mut first_for_target: BTreeMap<u32, usize> = BTreeMap::new();
    for (c, t) in target.iter().enumerate() {
        if let Some(q) = t {
            match first_for_target.get(q) {
                Some(&head) => uf.union(head, c),
                None => {
                    first_for_target.insert(*q, c);
                }
            }
        }
    }
    let merged: Vec<usize> = hard.labels.iter().map(|&l| uf.find(l as usize)).collect();
    Ok(compact(merged.into_iter()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn radius_boundary_is_inclusive() {
        let pts = vec![p(0.0, 0.0, 0.0), p(0.3, 0.0, 0.0), p(0.61, 0.0, 0.0)];
        let c = euclidean_clusters(&pts, 0.3).unwrap();
        assert_eq!(c.labels[0], c.labels[1]);
        assert_ne!(c.labels[1], c.labels[2]);
        assert_eq!(c.num_clusters, 2);
    }

    #[test]
    fn chains_connect_distant_points() {
        let pts: Vec<Vec3> = (0..10).map(|i| p(i as f64 * 0.25, 0.0, 0.0)).collect();
        let c = euclidean_clusters(&pts, 0.3).unwrap();
        assert_eq!(c.num_clusters, 1);
    }

    #[test]
    fn labels_are_compact_and_ordered_by_first_member() {
        let pts = vec![
            p(10.0, 0.0, 0.0),
            p(0.0, 0.0, 0.0),
            p(10.0, 0.1, 0.0),
            p(5.0, 0.0, 0.0),
        ];
        let c = euclidean_clusters(&pts, 0.3).unwrap();
        assert_eq!(c.labels, vec![0, 1, 0, 2]);
        assert_eq!(c.num_clusters, 3);
    }

    #[test]
    fn radius_zero_keeps_distinct_points_apart() {
        let pts = vec![p(0.0, 0.0, 0.0), p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0)];
        let c = euclidean_clusters(&pts, 0.0).unwrap();
        assert_eq!(c.labels[0], c.labels[1]);
        assert_ne!(c.labels[0], c.labels[2]);
    }

    #[test]
    fn rejects_bad_radius_and_points() {
        assert!(matches!(
            euclidean_clusters(&[p(0.0, 0.0, 0.0)], -0.1),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            euclidean_clusters(&[p(f64::NAN, 0.0, 0.0)], 0.3),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn window_bridges_frames() {
        // Two blobs 0.5 apart never touch in one frame, but an intermediate
        // frame has a point between them.
        let f0 = TimedPointCloud::new(0, vec![p(0.0, 0.0, 1.0), p(0.5, 0.0, 1.0)]);
        let mut f1 = TimedPointCloud::new(1, vec![p(0.0, 0.0, 1.0), p(0.5, 0.0, 1.0)]);

        let single = spatiotemporal_hard_clusters(std::slice::from_ref(&f1), 0.3).unwrap();
        assert_eq!(single.num_clusters, 2);

        f1.points.push(p(0.25, 0.0, 1.0));
        let mut bridged_f0 = f0.clone();
        bridged_f0.points.push(p(0.25, 0.0, 1.0));
        let joint = spatiotemporal_hard_clusters(&[bridged_f0, f1], 0.3).unwrap();
        assert_eq!(joint.num_clusters, 1);
    }

    #[test]
    fn window_labels_cover_only_last_frame() {
        let f0 = TimedPointCloud::new(0, vec![p(0.0, 0.0, 1.0); 5]);
        let f1 = TimedPointCloud::new(1, vec![p(0.0, 0.0, 1.0), p(3.0, 0.0, 1.0)]);
        let c = spatiotemporal_hard_clusters(&[f0, f1], 0.3).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.labels, vec![0, 1]);
    }

    #[test]
    fn soft_clusters_have_anchor_first_and_k_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..40)
            .map(|_| {
                p(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let k = 16;
        let soft = soft_clusters(&pts, k).unwrap();
        assert_eq!(soft.len(), pts.len());
        for (i, s) in soft.iter().enumerate() {
            assert_eq!(s.anchor, i);
            assert_eq!(s.members[0], i);
            assert_eq!(s.members.len(), k + 1);
            let mut seen = s.members.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), k + 1, "duplicate members for anchor {i}");
        }
    }

    #[test]
    fn soft_clusters_match_brute_force_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec3> = (0..60)
            .map(|_| {
                p(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                )
            })
            .collect();
        let k = 7;
        let soft = soft_clusters(&pts, k).unwrap();
        for s in &soft {
            let brute = crate::spatial::brute::knn(&pts, &pts[s.anchor], k + 1);
            let expect: Vec<usize> = brute
                .iter()
                .map(|&(j, _)| j)
                .filter(|&j| j != s.anchor)
                .take(k)
                .collect();
            assert_eq!(&s.members[1..], &expect[..], "anchor {}", s.anchor);
        }
    }

    #[test]
    fn soft_clusters_need_enough_points() {
        let pts = vec![p(0.0, 0.0, 0.0); 5];
        assert!(matches!(
            soft_clusters(&pts, 5),
            Err(Error::TooFewPoints { needed: 6, got: 5 })
        ));
        assert!(matches!(
            soft_clusters(&pts, 0),
            Err(Error::InvalidParam { .. })
        ));
    }

    fn merge_setup() -> (Vec<Vec3>, HardClustering, HardClustering, KdTree) {
        // Two source fragments 1.0 apart; the target frame shows one
        // connected object spanning both.
        let pts = vec![
            p(0.0, 0.0, 1.0),
            p(0.2, 0.0, 1.0),
            p(1.2, 0.0, 1.0),
            p(1.4, 0.0, 1.0),
        ];
        let hard = euclidean_clusters(&pts, 0.3).unwrap();
        assert_eq!(hard.num_clusters, 2);
        let q_pts: Vec<Vec3> = (0..8).map(|i| p(i as f64 * 0.2, 0.0, 1.0)).collect();
        let q = euclidean_clusters(&q_pts, 0.3).unwrap();
        assert_eq!(q.num_clusters, 1);
        (pts, hard, q, KdTree::build(&q_pts))
    }

    #[test]
    fn merge_joins_clusters_voting_for_same_target() {
        let (pts, hard, q, q_tree) = merge_setup();
        let flow = FlowField::zeros(pts.len());
        let merged =
            merge_clusters(&pts, &flow, &hard, &q, &q_tree, &ClusterConfig::default()).unwrap();
        assert_eq!(merged.num_clusters, 1);
    }

    #[test]
    fn merge_respects_distance_cap() {
        let (pts, hard, q, q_tree) = merge_setup();
        let mut flow = FlowField::zeros(pts.len());
        // Push the second fragment far from every target point.
        flow.vectors[2] = p(0.0, 5.0, 0.0);
        flow.vectors[3] = p(0.0, 5.0, 0.0);
        let merged =
            merge_clusters(&pts, &flow, &hard, &q, &q_tree, &ClusterConfig::default()).unwrap();
        assert_eq!(merged.num_clusters, 2);
    }

    #[test]
    fn merge_needs_vote_majority() {
        let (pts, hard, q, q_tree) = merge_setup();
        let mut flow = FlowField::zeros(pts.len());
        // Split the second fragment's votes: one point matches the object,
        // the other is pushed out of range, leaving 1 of 1 votes valid but
        // the first fragment still merges only if its own votes agree.
        flow.vectors[2] = p(0.0, 5.0, 0.0);
        let merged =
            merge_clusters(&pts, &flow, &hard, &q, &q_tree, &ClusterConfig::default()).unwrap();
        // Remaining vote is unanimous, so the merge still happens.
        assert_eq!(merged.num_clusters, 1);

        let tight = ClusterConfig {
            merge_vote_fraction: 1.0,
            ..ClusterConfig::default()
        };
        let q_split_pts = vec![p(0.0, 0.0, 1.0), p(0.2, 0.0, 1.0), p(1.3, 0.0, 1.0)];
        let q_split = euclidean_clusters(&q_split_pts, 0.3).unwrap();
        assert_eq!(q_split.num_clusters, 2);
        let tree = KdTree::build(&q_split_pts);
        let zero = FlowField::zeros(pts.len());
        // Fragment one votes target 0 twice, fragment two votes target 1
        // twice; different targets, no union.
        let merged = merge_clusters(&pts, &zero, &hard, &q_split, &tree, &tight).unwrap();
        assert_eq!(merged.num_clusters, 2);
    }

    #[test]
    fn merge_rejects_invalid_fraction() {
        let (pts, hard, q, q_tree) = merge_setup();
        let flow = FlowField::zeros(pts.len());
        let bad = ClusterConfig {
            merge_vote_fraction: 0.5,
            ..ClusterConfig::default()
        };
        assert!(matches!(
            merge_clusters(&pts, &flow, &hard, &q, &q_tree, &bad),
            Err(Error::InvalidParam { .. })
        ));
    }

    proptest! {
        #[test]
        fn clusters_cover_close_pairs(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..60);
            let pts: Vec<Vec3> = (0..n)
                .map(|_| p(
                    (rng.gen_range(-20i32..20) as f64) * 0.1,
                    (rng.gen_range(-20i32..20) as f64) * 0.1,
                    0.0,
                ))
                .collect();
            let radius = 0.3;
            let c = euclidean_clusters(&pts, radius).unwrap();
            prop_assert!(c.labels.iter().all(|&l| (l as usize) < c.num_clusters));
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    if (pts[i] - pts[j]).norm() <= radius {
                        prop_assert_eq!(c.labels[i], c.labels[j]);
                    }
                }
            }
        }

        #[test]
        fn merging_never_splits(seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(4..40);
            let pts: Vec<Vec3> = (0..n)
                .map(|_| p(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), 0.0))
                .collect();
            let q_pts: Vec<Vec3> = (0..n)
                .map(|_| p(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), 0.0))
                .collect();
            let flow = FlowField {
                vectors: (0..n)
                    .map(|_| p(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), 0.0))
                    .collect(),
            };
            let hard = euclidean_clusters(&pts, 0.4).unwrap();
            let q = euclidean_clusters(&q_pts, 0.4).unwrap();
            let tree = KdTree::build(&q_pts);
            let merged = merge_clusters(&pts, &flow, &hard, &q, &tree, &ClusterConfig::default()).unwrap();
            prop_assert!(merged.num_clusters <= hard.num_clusters);
            for i in 0..n {
                for j in i + 1..n {
                    if hard.labels[i] == hard.labels[j] {
                        prop_assert_eq!(merged.labels[i], merged.labels[j]);
                    }
                }
            }
        }
    }
}
