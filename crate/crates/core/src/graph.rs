//! Dynamic radius graph and node/edge featurization for one time step.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-component mean/std of velocities (m/s) and accelerations (m/s^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub vel_mean: [f64; 2],
    pub vel_std: [f64; 2],
    pub acc_mean: [f64; 2],
    pub acc_std: [f64; 2],
}

impl Default for NormStats {
    fn default() -> Self {
        Self {
            vel_mean: [0.0; 2],
            vel_std: [1.0; 2],
            acc_mean: [0.0; 2],
            acc_std: [1.0; 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub connectivity_radius_m: f64,
    pub velocity_history_len: usize,
    pub stats: NormStats,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            connectivity_radius_m: 0.03,
            velocity_history_len: 5,
            stats: NormStats::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.connectivity_radius_m > 0.0) {
            return Err(Error::config("connectivity_radius_m", "must be > 0"));
        }
        if self.velocity_history_len == 0 {
            return Err(Error::config("velocity_history_len", "must be >= 1"));
        }
        let s = &self.stats;
        if s.vel_std.iter().chain(&s.acc_std).any(|v| !(*v > 0.0)) {
            return Err(Error::config("stats", "standard deviations must be > 0"));
        }
        Ok(())
    }

    pub fn node_feature_dim(&self) -> usize {
        2 * self.velocity_history_len + 4
    }

    pub const EDGE_FEATURE_DIM: usize = 3;
}

/// Directed edges `(sender, receiver)`, sorted receiver-major, sender-minor.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RadiusGraph {
    pub senders: Vec<u32>,
    pub receivers: Vec<u32>,
}

impl RadiusGraph {
    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.senders
            .iter()
            .zip(&self.receivers)
            .map(|(&s, &r)| (s as usize, r as usize))
    }
}

/// All ordered pairs `i != j` with `|x_i - x_j| <= r`, found through a
/// uniform cell grid of pitch `r`.
pub fn build_radius_graph(positions: &[[f64; 2]], r: f64) -> RadiusGraph {
    let cell_of = |p: &[f64; 2]| ((p[0] / r).floor() as i64, (p[1] / r).floor() as i64);
    let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
    for (i, p) in positions.iter().enumerate() {
        cells.entry(cell_of(p)).or_default().push(i as u32);
    }
    let r2 = r * r;
    let mut graph = RadiusGraph::default();
    let mut found = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        found.clear();
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(bucket) = cells.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket {
                    if j as usize == i {
                        continue;
                    }
                    let q = positions[j as usize];
                    let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
                    if ex * ex + ey * ey <= r2 {
                        found.push(j);
                    }
                }
            }
        }
        found.sort_unstable();
        for &j in &found {
            graph.senders.push(j);
            graph.receivers.push(i as u32);
        }
    }
    graph
}

/// Node features from `C + 1` consecutive frames (oldest first): `C`
/// normalized velocities followed by the four clipped wall distances
/// (left, right, bottom, top) divided by the radius.
pub fn node_features(
    history: &[&[[f64; 2]]],
    dt: f64,
    domain_size_m: [f64; 2],
    config: &FeatureConfig,
) -> Result<Vec<f32>> {
    let c = config.velocity_history_len;
    if history.len() != c + 1 {
        return Err(Error::Shape {
            context: "node_features history frames",
            expected: c + 1,
            actual: history.len(),
        });
    }
    let n = history[0].len();
    if let Some(bad) = history.iter().find(|f| f.len() != n) {
        return Err(Error::Shape {
            context: "node_features particles per frame",
            expected: n,
            actual: bad.len(),
        });
    }
    let r = config.connectivity_radius_m;
    let s = &config.stats;
    let [w, h] = domain_size_m;
    let dim = config.node_feature_dim();
    let mut out = Vec::with_capacity(n * dim);
    for i in 0..n {
        for k in 1..=c {
            let (a, b) = (history[k - 1][i], history[k][i]);
            for d in 0..2 {
                let v = (b[d] - a[d]) / dt;
                out.push(((v - s.vel_mean[d]) / s.vel_std[d]) as f32);
            }
        }
        let x = history[c][i];
        for dist in [x[0], w - x[0], x[1], h - x[1]] {
            out.push((dist.clamp(0.0, r) / r) as f32);
        }
    }
    Ok(out)
}

/// Edge features: sender-minus-receiver displacement over `r`, and its norm.
pub fn edge_features(positions: &[[f64; 2]], graph: &RadiusGraph, r: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(graph.len() * 3);
    for (s, rcv) in graph.pairs() {
        let dx = (positions[s][0] - positions[rcv][0]) / r;
        let dy = (positions[s][1] - positions[rcv][1]) / r;
        out.push(dx as f32);
        out.push(dy as f32);
        out.push((dx * dx + dy * dy).sqrt() as f32);
    }
    out
}

/// One supervised (or inference) example.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub n_nodes: usize,
    pub graph: RadiusGraph,
    /// `[N][F_v]`
    pub node_features: Vec<f32>,
    /// `[E][3]`
    pub edge_features: Vec<f32>,
    /// `[N][2]`, normalized; empty for inference-only samples.
    pub target_accel: Vec<f32>,
    pub kappa: Option<f64>,
}

impl GraphSample {
    /// Builds features from the `C + 1` frames ending at the current step.
    pub fn from_history(
        history: &[&[[f64; 2]]],
        dt: f64,
        domain_size_m: [f64; 2],
        config: &FeatureConfig,
    ) -> Result<Self> {
        let current = history.last().ok_or(Error::Shape {
            context: "graph sample history",
            expected: config.velocity_history_len + 1,
            actual: 0,
        })?;
        let r = config.connectivity_radius_m;
        let graph = build_radius_graph(current, r);
        let node_features = node_features(history, dt, domain_size_m, config)?;
        let edge_features = edge_features(current, &graph, r);
        Ok(Self {
            n_nodes: current.len(),
            graph,
            node_features,
            edge_features,
            target_accel: Vec::new(),
            kappa: None,
        })
    }

    pub fn with_target(mut self, accel: &[f64], stats: &NormStats) -> Self {
        self.target_accel = accel
            .chunks_exact(2)
            .flat_map(|a| {
                [
                    ((a[0] - stats.acc_mean[0]) / stats.acc_std[0]) as f32,
                    ((a[1] - stats.acc_mean[1]) / stats.acc_std[1]) as f32,
                ]
            })
            .collect();
        self
    }

    pub fn with_kappa(mut self, kappa: Option<f64>) -> Self {
        self.kappa = kappa;
        self
    }
}
