//! Exact nearest-neighbor queries over a static point set.
//!
//! Ties are deterministic everywhere: equal distances resolve to the lower
//! point index, and radius results come back sorted by index. Distances
//! compare as squared values, so `radius` is inclusive in the sense
//! `d2 <= r * r`.

use crate::cloud::Vec3;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Immutable kd-tree; rebuild to change the point set.
#[derive(Debug, Clone)]
pub struct KdTree {
    pts: Vec<Vec3>,
    idx: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
}

/// Candidate ordered by (squared distance, index); the heap keeps the
/// worst candidate on top.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    d2: f64,
    idx: u32,
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> KdTree {
        let mut tree = KdTree {
            pts: points.to_vec(),
            idx: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
            root: 0,
        };
        if !points.is_empty() {
            tree.root = tree.build_range(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.pts
    }

    fn build_range(&mut self, start: usize, end: usize) -> u32 {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.idx[start..end] {
            let p = &self.pts[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = (end - start) / 2;
        let pts = &self.pts;
        self.idx[start..end].select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize][axis]
                .total_cmp(&pts[b as usize][axis])
                .then(a.cmp(&b))
        });
        let value = self.pts[self.idx[start + mid] as usize][axis];
        let left = self.build_range(start, start + mid);
        let right = self.build_range(start + mid, end);
        self.nodes.push(Node::Split {
            axis: axis as u8,
            value,
            left,
            right,
        });
        (self.nodes.len() - 1) as u32
    }

    /// Index and distance of the closest point; lower index wins ties.
    pub fn nearest(&self, query: &Vec3) -> Result<(usize, f64)> {
        if self.pts.is_empty() {
            return Err(Error::Empty {
                context: "spatial index",
            });
        }
        let mut best = Cand {
            d2: f64::INFINITY,
            idx: u32::MAX,
        };
        self.nearest_rec(self.root, query, &mut best);
        Ok((best.idx as usize, best.d2.sqrt()))
    }

    fn nearest_rec(&self, node: u32, q: &Vec3, best: &mut Cand) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.idx[*start as usize..*end as usize] {
                    let d2 = (self.pts[i as usize] - q).norm_squared();
                    let cand = Cand { d2, idx: i };
                    if cand < *best {
                        *best = cand;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[*axis as usize] - value;
                let (near, far) = if delta < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.nearest_rec(near, q, best);
                if delta * delta <= best.d2 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` closest points sorted by (distance, index) ascending.
    pub fn knn(&self, query: &Vec3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k < 1 || k > self.pts.len() {
            return Err(Error::KOutOfRange {
                k,
                len: self.pts.len(),
            });
        }
        let mut heap: std::collections::BinaryHeap<Cand> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        self.knn_rec(self.root, query, k, &mut heap);
        let mut out: Vec<Cand> = heap.into_vec();
        out.sort();
        Ok(out
            .into_iter()
            .map(|c| (c.idx as usize, c.d2.sqrt()))
            .collect())
    }

    fn knn_rec(
        &self,
        node: u32,
        q: &Vec3,
        k: usize,
        heap: &mut std::collections::BinaryHeap<Cand>,
    ) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.idx[*start as usize..*end as usize] {
                    let cand = Cand {
                        d2: (self.pts[i as usize] - q).norm_squared(),
                        idx: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[*axis as usize] - value;
                let (near, far) = if delta < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.knn_rec(near, q, k, heap);
                let visit_far = heap.len() < k || delta * delta <= heap.peek().unwrap().d2;
                if visit_far {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// Indices of all points with `|p - query| <= r`, sorted ascending.
    pub fn radius(&self, query: &Vec3, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.pts.is_empty() || r < 0.0 || r.is_nan() {
            return out;
        }
        self.radius_rec(self.root, query, r, r * r, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: u32, q: &Vec3, r: f64, r2: f64, out: &mut Vec<usize>) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.idx[*start as usize..*end as usize] {
                    if (self.pts[i as usize] - q).norm_squared() <= r2 {
                        out.push(i as usize);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let qa = q[*axis as usize];
                if qa - r <= *value {
                    self.radius_rec(*left, q, r, r2, out);
                }
                if qa + r >= *value {
                    self.radius_rec(*right, q, r, r2, out);
                }
            }
        }
    }
}
