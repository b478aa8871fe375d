//! Average-linkage agglomerative clustering over Euclidean distances, and
//! medoid selection.
//!
//! Used to reduce an entity's mention embeddings to at most `N_E` stored
//! representatives. Clusters are identified by their smallest member index,
//! so the lexicographic scan over `(i, j)` pairs also implements the
//! tie-break: among equal linkage distances the pair with the smallest
//! `(min-index, max-index)` key is merged first.

use crate::error::{Error, Result};
use crate::model::sq_dist;

/// Cluster labels aligned with the input points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    /// Member indices of each cluster, in ascending label order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Distances closer than this count as tied. Ties are common in practice: the
/// two members of a pair cluster are always equidistant from its mean, and
/// rounding must not pick between them.
pub const TIE_EPS: f64 = 1e-12;

/// Merges bottom-up until exactly `k` clusters remain.
///
/// Labels are assigned in order of each cluster's smallest member index, so
/// the cluster holding point 0 is always label 0.
pub fn agglomerate<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<ClusterAssignment> {
    let n = points.len();
    if k < 1 || k > n {
        return Err(Error::BadK { k, n });
    }

    // sums[i][j]: total pairwise distance between the members of clusters i
    // and j. Only the upper triangle of active clusters is maintained.
    let mut sums = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(points[i].as_ref(), points[j].as_ref()).sqrt();
            sums[i][j] = d;
            sums[j][i] = d;
        }
    }
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut parent: Vec<usize> = (0..n).collect();

    while active.len() > k {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let avg = sums[i][j] / (size[i] * size[j]) as f64;
                if avg < best.0 - TIE_EPS {
                    best = (avg, i, j);
                }
            }
        }
        let (_, keep, gone) = best;
        for &other in &active {
            if other != keep && other != gone {
                let s = sums[keep][other] + sums[gone][other];
                sums[keep][other] = s;
                sums[other][keep] = s;
            }
        }
        size[keep] += size[gone];
        parent[gone] = keep;
        active.retain(|&c| c != gone);
    }

    // active is sorted ascending, and each root is its cluster's smallest index.
    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    let labels = (0..n)
        .map(|i| {
            let r = root(i);
            active.binary_search(&r).expect("root is active")
        })
        .collect();
    Ok(ClusterAssignment { labels, k })
}

/// Index of the point nearest to each cluster's arithmetic mean, in ascending
/// label order. Equidistant points resolve to the lowest index.
pub fn medoid_indices<P: AsRef<[f64]>>(points: &[P], assignment: &ClusterAssignment) -> Vec<usize> {
    assert_eq!(
        points.len(),
        assignment.labels.len(),
        "assignment does not match points"
    );
    assignment
        .members()
        .into_iter()
        .map(|members| {
            assert!(!members.is_empty(), "empty cluster in assignment");
            let dim = points[members[0]].as_ref().len();
            let mut center = vec![0.0; dim];
            for &m in &members {
                for (c, x) in center.iter_mut().zip(points[m].as_ref()) {
                    *c += x;
                }
            }
            let count = members.len() as f64;
            center.iter_mut().for_each(|c| *c /= count);

            let mut best = (f64::INFINITY, members[0]);
            for &m in &members {
                let d = sq_dist(points[m].as_ref(), &center);
                if d < best.0 - TIE_EPS {
                    best = (d, m);
                }
            }
            best.1
        })
        .collect()
}

/// The medoid vectors themselves, one per cluster.
pub fn select_medoids<P: AsRef<[f64]>>(points: &[P], assignment: &ClusterAssignment) -> Vec<Vec<f64>> {
    medoid_indices(points, assignment)
        .into_iter()
        .map(|i| points[i].as_ref().to_vec())
        .collect()
}
