//! PCA of FiLM modulation vectors collected over a sweep of kappa values.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataio::Trajectory;
use crate::error::{Error, Result};
use crate::film::MlpKind;
use crate::gns::Gns;

/// Rows of mean `(gamma, beta)` for one hooked layer position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmSweepMatrix {
    pub label: String,
    pub block: usize,
    pub kind: MlpKind,
    pub layer: usize,
    /// `(kappa, probe frame)` per row.
    pub row_keys: Vec<(f64, usize)>,
    pub rows: Vec<Vec<f64>>,
}

impl FilmSweepMatrix {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }
}

/// `n` frames evenly spaced over the frames that have a full history and a
/// successor.
pub fn default_probe_frames(traj: &Trajectory, history_len: usize, n: usize) -> Vec<usize> {
    let lo = history_len;
    let hi = traj.n_frames.saturating_sub(2).max(lo);
    if n <= 1 {
        return vec![lo];
    }
    let mut v: Vec<usize> = (0..n)
        .map(|i| lo + ((hi - lo) as f64 * i as f64 / (n - 1) as f64).round() as usize)
        .collect();
    v.dedup();
    v
}

pub fn collect_film_sweep(
    model: &Gns,
    kappas: &[f64],
    probe: &Trajectory,
    probe_frames: &[usize],
) -> Result<Vec<FilmSweepMatrix>> {
    let film = model
        .arch
        .film
        .as_ref()
        .ok_or_else(|| Error::Invalid("model has no FiLM generators".into()))?;
    if kappas.is_empty() || probe_frames.is_empty() {
        return Err(Error::Invalid("empty kappa grid or probe frame list".into()));
    }
    let c = model.features.velocity_history_len;
    let mut out: Vec<FilmSweepMatrix> = film
        .slots
        .iter()
        .map(|s| FilmSweepMatrix {
            label: s.label(),
            block: s.block,
            kind: s.kind,
            layer: s.layer,
            row_keys: Vec::new(),
            rows: Vec::new(),
        })
        .collect();
    let mut samples = Vec::new();
    for &f in probe_frames {
        if f < c || f >= probe.n_frames {
            return Err(Error::Invalid(format!("probe frame {f} lacks a full history")));
        }
        let frames: Vec<Vec<[f64; 2]>> = (f - c..=f)
            .map(|t| probe.frame(t).chunks_exact(2).map(|p| [p[0] as f64, p[1] as f64]).collect())
            .collect();
        let refs: Vec<&[[f64; 2]]> = frames.iter().map(|v| v.as_slice()).collect();
        samples.push((f, model.sample(&refs, probe.dt_s, probe.domain_size_m)?));
    }
    for &k in kappas {
        for (f, s) in &samples {
            let tape = model.arch.forward(&model.params, s, Some(k))?;
            for (slot, m) in film.slots.iter().zip(out.iter_mut()) {
                let b = &tape.blocks[slot.block];
                let host = match slot.kind {
                    MlpKind::Edge => &b.edge,
                    MlpKind::Node => &b.node,
                };
                let hook = host.hooks.get(slot.layer).and_then(|h| h.as_ref()).ok_or_else(|| {
                    Error::Invalid(format!("no FiLM capture for {}", slot.label()))
                })?;
                let (gamma, beta) = hook.gamma_beta();
                let rows = hook.net.n;
                if rows == 0 {
                    return Err(Error::Invalid(format!("empty FiLM capture for {}", slot.label())));
                }
                let d = gamma.len() / rows;
                let mean = |v: &[f32]| -> Vec<f64> {
                    (0..d)
                        .map(|j| (0..rows).map(|r| v[r * d + j] as f64).sum::<f64>() / rows as f64)
                        .collect()
                };
                let mut row = mean(&gamma);
                row.extend(mean(&beta));
                m.row_keys.push((k, *f));
                m.rows.push(row);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit principal directions, strongest first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Share of the total (nonzero) variance per component.
    pub explained_ratio: Vec<f64>,
    /// `n x k` row projections on the first `k` components.
    pub projections: Vec<Vec<f64>>,
}

/// Covariance eigendecomposition of mean-centered rows. Directions with
/// numerically zero variance are dropped, so fewer than `k` components can
/// come back. Each component's largest-magnitude coordinate is positive.
pub fn pca(rows: &[Vec<f64>], k: usize) -> Result<Pca> {
    let n = rows.len();
    if n < k + 1 {
        return Err(Error::Invalid(format!("pca with k = {k} needs at least {} rows, got {n}", k + 1)));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Invalid("pca rows must share a nonzero width".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| top > 0.0 && eig.eigenvalues[i] > 1e-10 * top)
        .collect();
    let total: f64 = kept.iter().map(|&i| eig.eigenvalues[i]).sum();
    let mut components = Vec::new();
    let mut eigenvalues = Vec::new();
    let mut explained_ratio = Vec::new();
    for &i in kept.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let big = v
            .iter()
            .enumerate()
            .fold(0, |b, (j, x)| if x.abs() > v[b].abs() { j } else { b });
        if v[big] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        eigenvalues.push(eig.eigenvalues[i]);
        explained_ratio.push(eig.eigenvalues[i] / total);
    }
    let projections = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| (0..d).map(|j| x[(i, j)] * c[j]).sum())
                .collect()
        })
        .collect();
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        explained_ratio,
        projections,
    })
}

impl Pca {
    /// Projections mapped back to the original space (mean included).
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        self.projections
            .iter()
            .map(|p| {
                let mut r = self.mean.clone();
                for (a, c) in p.iter().zip(&self.components) {
                    for (x, v) in r.iter_mut().zip(c) {
                        *x += a * v;
                    }
                }
                r
            })
            .collect()
    }
}

/// Smoothness summary of the projected sweep: per-kappa centroids in kappa
/// order, their total path length and the largest consecutive jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPath {
    pub kappas: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
    pub path_length: f64,
    pub max_jump: f64,
}

pub fn sweep_path(row_keys: &[(f64, usize)], projections: &[Vec<f64>]) -> SweepPath {
    let mut kappas: Vec<f64> = row_keys.iter().map(|k| k.0).collect();
    kappas.sort_by(f64::total_cmp);
    kappas.dedup();
    let dim = projections.first().map_or(0, |p| p.len());
    let centroids: Vec<Vec<f64>> = kappas
        .iter()
        .map(|&k| {
            let idx: Vec<usize> = (0..row_keys.len()).filter(|&i| row_keys[i].0 == k).collect();
            (0..dim)
                .map(|j| idx.iter().map(|&i| projections[i][j]).sum::<f64>() / idx.len() as f64)
                .collect()
        })
        .collect();
    let jumps: Vec<f64> = centroids
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    SweepPath {
        kappas,
        centroids,
        path_length: jumps.iter().sum(),
        max_jump: jumps.iter().copied().fold(0.0, f64::max),
    }
}

/// `label,kappa,probe_frame,pc1,...` rows followed by a variance block.
pub fn sweep_csv(m: &FilmSweepMatrix, p: &Pca) -> String {
    let mut s = String::from("label,kappa,probe_frame");
    for i in 0..p.components.len() {
        s.push_str(&format!(",pc{}", i + 1));
    }
    s.push('\n');
    for ((k, f), proj) in m.row_keys.iter().zip(&p.projections) {
        s.push_str(&format!("{},{k},{f}", m.label));
        for v in proj {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

pub fn variance_csv(label: &str, p: &Pca) -> String {
    let mut s = String::from("label,component,eigenvalue,explained_ratio\n");
    for (i, (e, r)) in p.eigenvalues.iter().zip(&p.explained_ratio).enumerate() {
        s.push_str(&format!("{label},{},{e},{r}\n", i + 1));
    }
    s
}
