//! Finite metric trees with infinite rays glued at designated vertices.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ModelPoint, EPS_GEOM};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TreeSpec {
    edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ends: Option<Vec<usize>>,
}

/// A finite tree with positive edge lengths. Each vertex in `ends` carries an
/// infinite ray; those rays are the boundary of the space. By default every
/// leaf carries one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TreeSpec", into = "TreeSpec")]
pub struct MetricTree {
    edges: Vec<(usize, usize, f64)>,
    ends: Vec<usize>,
    explicit_ends: bool,
    n: usize,
    adj: Vec<Vec<(usize, f64)>>,
    dist: Vec<f64>,
    next: Vec<usize>,
    depth: Vec<usize>,
}

impl PartialEq for MetricTree {
    fn eq(&self, other: &Self) -> bool {
        self.edges == other.edges && self.ends == other.ends
    }
}

impl From<MetricTree> for TreeSpec {
    fn from(t: MetricTree) -> Self {
        TreeSpec {
            edges: t.edges,
            ends: t.explicit_ends.then_some(t.ends),
        }
    }
}

impl TryFrom<TreeSpec> for MetricTree {
    type Error = Error;

    fn try_from(spec: TreeSpec) -> Result<Self> {
        MetricTree::build(spec.edges, spec.ends)
    }
}

impl MetricTree {
    /// Build a tree from `(u, v, length)` edges. `ends` defaults to the leaves.
    pub fn new(edges: Vec<(usize, usize, f64)>, ends: Option<Vec<usize>>) -> Result<Self> {
        Self::build(edges, ends)
    }

    fn build(edges: Vec<(usize, usize, f64)>, ends: Option<Vec<usize>>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidSpace("metric tree needs at least one edge".into()));
        }
        let n = edges.iter().map(|&(u, v, _)| u.max(v)).max().unwrap_or(0) + 1;
        if edges.len() != n - 1 {
            return Err(Error::InvalidSpace(format!(
                "a tree on {n} vertices has {} edges, got {}",
                n - 1,
                edges.len()
            )));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v, len) in &edges {
            if u == v {
                return Err(Error::InvalidSpace(format!("self-loop at vertex {u}")));
            }
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::InvalidSpace(format!(
                    "edge {u}-{v} has non-positive length {len}"
                )));
            }
            adj[u].push((v, len));
            adj[v].push((u, len));
        }

        let mut dist = vec![f64::INFINITY; n * n];
        let mut next = vec![usize::MAX; n * n];
        for src in 0..n {
            // Breadth-first search from `src`; `first` records the first hop.
            dist[src * n + src] = 0.0;
            next[src * n + src] = src;
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &(v, len) in &adj[u] {
                    if dist[src * n + v].is_infinite() {
                        dist[src * n + v] = dist[src * n + u] + len;
                        next[src * n + v] = if u == src { v } else { next[src * n + u] };
                        queue.push_back(v);
                    }
                }
            }
        }
        if dist.iter().any(|d| d.is_infinite()) {
            return Err(Error::InvalidSpace("metric tree is not connected".into()));
        }

        let mut depth = vec![usize::MAX; n];
        depth[0] = 0;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }

        let explicit_ends = ends.is_some();
        let mut ends = match ends {
            Some(e) => {
                if let Some(&bad) = e.iter().find(|&&v| v >= n) {
                    return Err(Error::InvalidSpace(format!("end vertex {bad} out of range")));
                }
                e
            }
            None => (0..n).filter(|&v| adj[v].len() == 1).collect(),
        };
        ends.sort_unstable();
        ends.dedup();

        Ok(MetricTree {
            edges,
            ends,
            explicit_ends,
            n,
            adj,
            dist,
            next,
            depth,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn ends(&self) -> &[usize] {
        &self.ends
    }

    pub fn is_end(&self, v: usize) -> bool {
        self.ends.binary_search(&v).is_ok()
    }

    pub fn hop_depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn edge_len(&self, u: usize, v: usize) -> Option<f64> {
        self.adj.get(u)?.iter().find(|&&(w, _)| w == v).map(|&(_, l)| l)
    }

    pub fn vertex_distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n + b]
    }

    /// Vertices on the unique path from `a` to `b`, inclusive.
    pub fn vertex_path(&self, a: usize, b: usize) -> Vec<usize> {
        let mut path = vec![a];
        let mut cur = a;
        while cur != b {
            cur = self.next[cur * self.n + b];
            path.push(cur);
        }
        path
    }

    pub fn canonical(&self, p: ModelPoint) -> Result<ModelPoint> {
        match p {
            ModelPoint::TreeVertex { v } if v < self.n => Ok(p),
            ModelPoint::TreeVertex { v } => Err(Error::InvalidPoint(format!("vertex {v} out of range"))),
            ModelPoint::TreeEdge { u, v, t } => {
                let len = self
                    .edge_len(u, v)
                    .ok_or_else(|| Error::InvalidPoint(format!("no edge {u}-{v}")))?;
                if !t.is_finite() || t < -EPS_GEOM || t > len + EPS_GEOM {
                    return Err(Error::InvalidPoint(format!(
                        "offset {t} outside edge {u}-{v} of length {len}"
                    )));
                }
                if t <= 0.0 {
                    Ok(ModelPoint::TreeVertex { v: u })
                } else if t >= len {
                    Ok(ModelPoint::TreeVertex { v })
                } else if u > v {
                    Ok(ModelPoint::TreeEdge { u: v, v: u, t: len - t })
                } else {
                    Ok(p)
                }
            }
            ModelPoint::TreeRay { leaf, h } => {
                if !self.is_end(leaf) {
                    return Err(Error::InvalidPoint(format!("vertex {leaf} carries no ray")));
                }
                if !h.is_finite() || h < 0.0 {
                    return Err(Error::InvalidPoint(format!(
                        "ray height must be finite and >= 0, got {h}"
                    )));
                }
                if h == 0.0 {
                    Ok(ModelPoint::TreeVertex { v: leaf })
                } else {
                    Ok(p)
                }
            }
            other => Err(Error::ChartMismatch {
                chart: other.chart_name(),
                space: "metric_tree",
            }),
        }
    }

    /// Distance from a canonical point to a vertex.
    pub(crate) fn to_vertex(&self, p: ModelPoint, w: usize) -> f64 {
        match p {
            ModelPoint::TreeVertex { v } => self.vertex_distance(v, w),
            ModelPoint::TreeEdge { u, v, t } => {
                let len = self.edge_len(u, v).expect("canonical edge");
                (t + self.vertex_distance(u, w)).min(len - t + self.vertex_distance(v, w))
            }
            ModelPoint::TreeRay { leaf, h } => h + self.vertex_distance(leaf, w),
            _ => unreachable!("non-tree chart"),
        }
    }

    pub(crate) fn distance_canonical(&self, p: ModelPoint, q: ModelPoint) -> f64 {
        // Evaluate in a fixed argument order so the result is exactly symmetric.
        let (p, q) = if order_key(p) <= order_key(q) { (p, q) } else { (q, p) };
        match (p, q) {
            (ModelPoint::TreeEdge { u, v, t }, ModelPoint::TreeEdge { u: a, v: b, t: s }) if (u, v) == (a, b) => {
                (t - s).abs()
            }
            (ModelPoint::TreeRay { leaf, h }, ModelPoint::TreeRay { leaf: l2, h: k }) if leaf == l2 => (h - k).abs(),
            (ModelPoint::TreeVertex { v }, _) => self.to_vertex(q, v),
            (ModelPoint::TreeEdge { u, v, t }, _) => {
                let len = self.edge_len(u, v).expect("canonical edge");
                (t + self.to_vertex(q, u)).min(len - t + self.to_vertex(q, v))
            }
            (ModelPoint::TreeRay { leaf, h }, _) => h + self.to_vertex(q, leaf),
            _ => unreachable!("non-tree chart"),
        }
    }

    /// Neighbours of a vertex with edge lengths.
    pub fn neighbours(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }
}

fn order_key(p: ModelPoint) -> (u8, usize, usize, u64) {
    match p {
        ModelPoint::TreeVertex { v } => (0, v, 0, 0),
        ModelPoint::TreeEdge { u, v, t } => (1, u, v, t.to_bits()),
        ModelPoint::TreeRay { leaf, h } => (2, leaf, 0, h.to_bits()),
        _ => (3, 0, 0, 0),
    }
}
