use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{check_points, ClusterAssignment, NOISE};
use crate::error::{Error, Result};
use crate::linalg::{pairwise_distances, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdbscanConfig {
    pub min_cluster_size: usize,
    /// Neighbour rank used for core distances (the point itself counts);
    /// defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
}

impl Default for HdbscanConfig {
    fn default() -> Self {
        Self {
            min_cluster_size: 15,
            min_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdbscanResult {
    pub assignment: ClusterAssignment,
    pub core_distances: Vec<f64>,
    pub condensed: Vec<CondensedEdge>,
    /// Condensed-tree ids of the selected clusters, in label order.
    pub selected: Vec<usize>,
}

/// One merge of the single-linkage hierarchy. Ids below `n` are points,
/// merge `i` creates node `n + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// Condensed-tree edge. Cluster ids start at `n` (the root); children
/// below `n` are points falling out of `parent` at `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

/// Distance to the `min_samples`-th nearest neighbour, the point itself
/// being the first.
pub fn core_distances(dist: &Matrix, min_samples: usize) -> Vec<f64> {
    let n = dist.rows;
    let rank = min_samples.clamp(1, n.max(1)) - 1;
    (0..n)
        .map(|i| {
            let mut row = dist.row(i).to_vec();
            row.sort_by(f64::total_cmp);
            row[rank]
        })
        .collect()
}

pub fn mutual_reachability(dist: &Matrix, core: &[f64]) -> Matrix {
    let n = dist.rows;
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m.set(i, j, dist.get(i, j).max(core[i]).max(core[j]));
            }
        }
    }
    m
}

/// Prim's algorithm on a dense symmetric weight matrix, starting at node 0.
pub fn minimum_spanning_tree(w: &Matrix) -> Vec<(usize, usize, f64)> {
    let n = w.rows;
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n == 0 {
        return edges;
    }
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if !in_tree[j] && w.get(current, j) < best[j] {
                best[j] = w.get(current, j);
                from[j] = current;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, best[next]));
        current = next;
    }
    edges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage merges from MST edges, in order of increasing weight.
pub fn single_linkage(n: usize, mst: &[(usize, usize, f64)]) -> Vec<MergeStep> {
    let mut edges = mst.to_vec();
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    let mut merges = Vec::with_capacity(edges.len());
    for (a, b, d) in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let node = n + merges.len();
        let s = size[ra] + size[rb];
        merges.push(MergeStep {
            left: ra,
            right: rb,
            distance: d,
            size: s,
        });
        parent[ra] = node;
        parent[rb] = node;
        size[node] = s;
    }
    merges
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

/// Collapses the hierarchy so that only splits into two parts of at least
/// `min_cluster_size` points create new clusters.
pub fn condensed_tree(n: usize, merges: &[MergeStep], min_cluster_size: usize) -> Vec<CondensedEdge> {
    let mut out = Vec::new();
    if merges.is_empty() {
        return out;
    }
    let node_size = |id: usize| if id < n { 1 } else { merges[id - n].size };
    let root = n + merges.len() - 1;
    let mut relabel = vec![0usize; root + 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut ignore = vec![false; root + 1];

    let descendants = |start: usize| -> Vec<usize> {
        let mut points = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            if x < n {
                points.push(x);
            } else {
                let m = merges[x - n];
                queue.push_back(m.left);
                queue.push_back(m.right);
            }
        }
        points
    };
    let mark_ignored = |ignore: &mut Vec<bool>, start: usize| {
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            ignore[x] = true;
            if x >= n {
                let m = merges[x - n];
                queue.push_back(m.left);
                queue.push_back(m.right);
            }
        }
    };

    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let m = merges[node - n];
        queue.push_back(m.left);
        queue.push_back(m.right);
        if ignore[node] {
            continue;
        }
        let lambda = lambda_of(m.distance);
        let (ls, rs) = (node_size(m.left), node_size(m.right));
        let parent = relabel[node];
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (child, size) in [(m.left, ls), (m.right, rs)] {
                    relabel[child] = next_label;
                    out.push(CondensedEdge {
                        parent,
                        child: next_label,
                        lambda,
                        child_size: size,
                    });
                    next_label += 1;
                }
            }
            (false, false) => {
                for child in [m.left, m.right] {
                    for p in descendants(child) {
                        out.push(CondensedEdge {
                            parent,
                            child: p,
                            lambda,
                            child_size: 1,
                        });
                    }
                    mark_ignored(&mut ignore, child);
                }
            }
            (left_big, _) => {
                let (keep, drop) = if left_big {
                    (m.left, m.right)
                } else {
                    (m.right, m.left)
                };
                relabel[keep] = parent;
                for p in descendants(drop) {
                    out.push(CondensedEdge {
                        parent,
                        child: p,
                        lambda,
                        child_size: 1,
                    });
                }
                mark_ignored(&mut ignore, drop);
            }
        }
    }
    out
}

/// Excess-of-mass selection over the condensed tree; the root is never selected.
fn select_clusters(n: usize, tree: &[CondensedEdge]) -> Vec<usize> {
    let max_id = tree.iter().map(|e| e.parent.max(e.child)).max().unwrap_or(n);
    if max_id <= n {
        return Vec::new();
    }
    let count = max_id - n + 1;
    let mut birth = vec![0.0f64; count];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); count];
    for e in tree.iter().filter(|e| e.child >= n) {
        birth[e.child - n] = e.lambda;
        children[e.parent - n].push(e.child);
    }
    let mut stability = vec![0.0f64; count];
    for e in tree {
        let b = birth[e.parent - n];
        let gain = if e.lambda == b { 0.0 } else { e.lambda - b };
        stability[e.parent - n] += gain * e.child_size as f64;
    }
    let mut selected = vec![true; count];
    selected[0] = false;
    for c in (1..count).rev() {
        let sub: f64 = children[c].iter().map(|&ch| stability[ch - n]).sum();
        if sub > stability[c] {
            selected[c] = false;
            stability[c] = sub;
        } else {
            let mut stack = children[c].clone();
            while let Some(x) = stack.pop() {
                selected[x - n] = false;
                stack.extend_from_slice(&children[x - n]);
            }
        }
    }
    (1..count).filter(|&c| selected[c]).map(|c| c + n).collect()
}

fn label_points(n: usize, tree: &[CondensedEdge], selected: &[usize]) -> Vec<i64> {
    let mut cluster_parent = std::collections::HashMap::new();
    let mut point_parent = vec![n; n];
    for e in tree {
        if e.child >= n {
            cluster_parent.insert(e.child, e.parent);
        } else {
            point_parent[e.child] = e.parent;
        }
    }
    point_parent
        .iter()
        .map(|&start| {
            let mut c = start;
            loop {
                if let Some(pos) = selected.iter().position(|&s| s == c) {
                    return pos as i64;
                }
                match cluster_parent.get(&c) {
                    Some(&p) => c = p,
                    None => return NOISE,
                }
            }
        })
        .collect()
}

pub fn hdbscan(points: &[Vec<f64>], cfg: &HdbscanConfig) -> Result<HdbscanResult> {
    if cfg.min_cluster_size < 2 {
        return Err(Error::Config("min_cluster_size must be at least 2".into()));
    }
    check_points(points, cfg.min_cluster_size, "hdbscan")?;
    let n = points.len();
    let dist = pairwise_distances(points);
    let core = core_distances(&dist, cfg.min_samples.unwrap_or(cfg.min_cluster_size));
    let mr = mutual_reachability(&dist, &core);
    let mst = minimum_spanning_tree(&mr);
    let merges = single_linkage(n, &mst);
    let condensed = condensed_tree(n, &merges, cfg.min_cluster_size);
    let selected = select_clusters(n, &condensed);
    let labels = label_points(n, &condensed, &selected);
    Ok(HdbscanResult {
        assignment: ClusterAssignment {
            k: selected.len(),
            labels,
        },
        core_distances: core,
        condensed,
        selected,
    })
}
