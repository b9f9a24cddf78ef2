//! Encoder / processor / decoder graph network and closed-loop rollout.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Trajectory;
use crate::error::{Error, Result};
use crate::film::{FilmConfig, FilmNets, MlpKind};
use crate::graph::{FeatureConfig, GraphSample};
use crate::nn::{Grads, GroupKind, Mlp, MlpTape, ParamStore, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnsConfig {
    pub latent_dim: usize,
    pub n_mp_blocks: usize,
    pub mlp_hidden: usize,
    pub residual: bool,
}

impl Default for GnsConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            n_mp_blocks: 10,
            mlp_hidden: 32,
            residual: true,
        }
    }
}

impl GnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mp_blocks == 0 {
            return Err(Error::config("n_mp_blocks", "must be >= 1"));
        }
        if self.latent_dim == 0 || self.mlp_hidden == 0 {
            return Err(Error::config("latent_dim", "widths must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub edge: Mlp,
    pub node: Mlp,
}

/// Handles to every base MLP of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GnsNets {
    pub node_encoder: Mlp,
    pub edge_encoder: Mlp,
    pub blocks: Vec<Block>,
    pub decoder: Mlp,
}

struct Layout {
    prefix: String,
    dims: Vec<usize>,
    norm: bool,
}

fn layouts(cfg: &GnsConfig, node_in: usize) -> Vec<Layout> {
    let (h, d) = (cfg.mlp_hidden, cfg.latent_dim);
    let mut v = vec![
        Layout {
            prefix: "encoder.node_mlp".into(),
            dims: vec![node_in, h, h, d],
            norm: true,
        },
        Layout {
            prefix: "encoder.edge_mlp".into(),
            dims: vec![FeatureConfig::EDGE_FEATURE_DIM, h, h, d],
            norm: true,
        },
    ];
    for k in 1..=cfg.n_mp_blocks {
        v.push(Layout {
            prefix: format!("processor.block_{k}.edge_mlp"),
            dims: vec![3 * d, h, h, d],
            norm: true,
        });
        v.push(Layout {
            prefix: format!("processor.block_{k}.node_mlp"),
            dims: vec![2 * d, h, h, d],
            norm: true,
        });
    }
    v.push(Layout {
        prefix: "decoder".into(),
        dims: vec![d, h, h, 2],
        norm: false,
    });
    v
}

impl GnsNets {
    fn assemble(mut mlps: Vec<Mlp>) -> Self {
        let decoder = mlps.pop().unwrap();
        let mut it = mlps.into_iter();
        let node_encoder = it.next().unwrap();
        let edge_encoder = it.next().unwrap();
        let mut blocks = Vec::new();
        while let (Some(edge), Some(node)) = (it.next(), it.next()) {
            blocks.push(Block { edge, node });
        }
        Self {
            node_encoder,
            edge_encoder,
            blocks,
            decoder,
        }
    }

    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        cfg: &GnsConfig,
        node_in: usize,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        let mlps = layouts(cfg, node_in)
            .into_iter()
            .map(|l| Mlp::build(store, &l.prefix, &l.dims, l.norm, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(mlps))
    }

    pub fn bind<T: Real>(store: &ParamStore<T>, cfg: &GnsConfig, node_in: usize) -> Result<Self> {
        let mlps = layouts(cfg, node_in)
            .into_iter()
            .map(|l| Mlp::bind(store, &l.prefix, &l.dims, l.norm))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(mlps))
    }
}

/// Architecture without parameter values; evaluable in any precision.
#[derive(Debug, Clone, PartialEq)]
pub struct GnsArch {
    pub config: GnsConfig,
    pub nets: GnsNets,
    pub film: Option<FilmNets>,
}

#[derive(Debug, Clone)]
pub struct BlockTape<T> {
    pub edge: MlpTape<T>,
    pub node: MlpTape<T>,
}

#[derive(Debug, Clone)]
pub struct GnsTape<T> {
    pub node_encoder: MlpTape<T>,
    pub edge_encoder: MlpTape<T>,
    pub blocks: Vec<BlockTape<T>>,
    pub decoder: MlpTape<T>,
    /// `MLP_cond(kappa)` per FiLM slot.
    pub conditions: Vec<MlpTape<T>>,
}

impl<T: Real> GnsTape<T> {
    /// Normalized accelerations `[N][2]`.
    pub fn output(&self) -> &[T] {
        &self.decoder.output
    }

    pub fn pattern(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        self.node_encoder.fold_pattern(&mut h);
        self.edge_encoder.fold_pattern(&mut h);
        for b in &self.blocks {
            b.edge.fold_pattern(&mut h);
            b.node.fold_pattern(&mut h);
        }
        self.decoder.fold_pattern(&mut h);
        for c in &self.conditions {
            c.fold_pattern(&mut h);
        }
        h
    }
}

fn to_t<T: Real>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| T::of(x as f64)).collect()
}

impl GnsArch {
    pub fn forward<T: Real>(
        &self,
        params: &ParamStore<T>,
        sample: &GraphSample,
        kappa: Option<f64>,
    ) -> Result<GnsTape<T>> {
        let n = sample.n_nodes;
        let ne = sample.graph.len();
        let d = self.config.latent_dim;
        let conditions = match (&self.film, kappa) {
            (Some(f), Some(k)) => f.conditions(params, T::of(k))?,
            (Some(_), None) => {
                return Err(Error::Invalid("conditioned model needs a kappa value".into()))
            }
            (None, Some(_)) => {
                return Err(Error::Invalid("kappa given to an unconditioned model".into()))
            }
            (None, None) => Vec::new(),
        };
        let node_encoder =
            self.nets
                .node_encoder
                .forward(params, to_t(&sample.node_features), n, &[])?;
        let edge_encoder =
            self.nets
                .edge_encoder
                .forward(params, to_t(&sample.edge_features), ne, &[])?;
        let mut v = node_encoder.output.clone();
        let mut e = edge_encoder.output.clone();
        let mut blocks = Vec::with_capacity(self.nets.blocks.len());
        for (k, block) in self.nets.blocks.iter().enumerate() {
            let mut ein = Vec::with_capacity(ne * 3 * d);
            for (j, (s, r)) in sample.graph.pairs().enumerate() {
                ein.extend_from_slice(&v[s * d..(s + 1) * d]);
                ein.extend_from_slice(&v[r * d..(r + 1) * d]);
                ein.extend_from_slice(&e[j * d..(j + 1) * d]);
            }
            let hooks = match &self.film {
                Some(f) => f.hooks(&conditions, k, MlpKind::Edge, block.edge.n_layers()),
                None => Vec::new(),
            };
            let edge = block.edge.forward(params, ein, ne, &hooks)?;
            // wide accumulator: the sum is then (near) independent of edge order
            let mut agg = vec![0.0f64; n * d];
            for (j, (_, r)) in sample.graph.pairs().enumerate() {
                let m = &edge.output[j * d..(j + 1) * d];
                for (a, &x) in agg[r * d..(r + 1) * d].iter_mut().zip(m) {
                    *a += x.f64();
                }
            }
            let mut nin = Vec::with_capacity(n * 2 * d);
            for i in 0..n {
                nin.extend_from_slice(&v[i * d..(i + 1) * d]);
                nin.extend(agg[i * d..(i + 1) * d].iter().map(|&a| T::of(a)));
            }
            let hooks = match &self.film {
                Some(f) => f.hooks(&conditions, k, MlpKind::Node, block.node.n_layers()),
                None => Vec::new(),
            };
            let node = block.node.forward(params, nin, n, &hooks)?;
            if self.config.residual {
                v.iter_mut().zip(&node.output).for_each(|(a, &b)| *a += b);
                e.iter_mut().zip(&edge.output).for_each(|(a, &b)| *a += b);
            } else {
                v.copy_from_slice(&node.output);
                e.copy_from_slice(&edge.output);
            }
            blocks.push(BlockTape { edge, node });
        }
        let decoder = self.nets.decoder.forward(params, v, n, &[])?;
        Ok(GnsTape {
            node_encoder,
            edge_encoder,
            blocks,
            decoder,
            conditions,
        })
    }

    /// Accumulates parameter gradients of `sum(gout * output)` into `grads`.
    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        sample: &GraphSample,
        tape: &GnsTape<T>,
        gout: Vec<T>,
        grads: &mut Grads<T>,
    ) {
        let n = sample.n_nodes;
        let ne = sample.graph.len();
        let d = self.config.latent_dim;
        let n_slots = self.film.as_ref().map_or(0, |f| f.slots.len());
        let mut gcond: Vec<Option<Vec<T>>> = vec![None; n_slots];

        let mut gv = self
            .nets
            .decoder
            .backward(params, &tape.decoder, gout, grads, &mut [], true)
            .unwrap();
        let mut ge = vec![T::zero(); ne * d];
        for (k, block) in self.nets.blocks.iter().enumerate().rev() {
            let bt = &tape.blocks[k];
            let mut hg = vec![None; block.node.n_layers()];
            let gnin = block
                .node
                .backward(params, &bt.node, gv.clone(), grads, &mut hg, true)
                .unwrap();
            self.collect_cond_grads(k, MlpKind::Node, hg, &mut gcond);
            let mut gv_prev = if self.config.residual {
                gv
            } else {
                vec![T::zero(); n * d]
            };
            for i in 0..n {
                for c in 0..d {
                    gv_prev[i * d + c] += gnin[i * 2 * d + c];
                }
            }
            let mut gedge = if self.config.residual {
                ge.clone()
            } else {
                vec![T::zero(); ne * d]
            };
            for (j, (_, r)) in sample.graph.pairs().enumerate() {
                for c in 0..d {
                    gedge[j * d + c] += gnin[r * 2 * d + d + c];
                }
            }
            let mut hg = vec![None; block.edge.n_layers()];
            let gein = block
                .edge
                .backward(params, &bt.edge, gedge, grads, &mut hg, true)
                .unwrap();
            self.collect_cond_grads(k, MlpKind::Edge, hg, &mut gcond);
            let mut ge_prev = if self.config.residual {
                ge
            } else {
                vec![T::zero(); ne * d]
            };
            for (j, (s, r)) in sample.graph.pairs().enumerate() {
                let row = &gein[j * 3 * d..(j + 1) * 3 * d];
                for c in 0..d {
                    gv_prev[s * d + c] += row[c];
                    gv_prev[r * d + c] += row[d + c];
                    ge_prev[j * d + c] += row[2 * d + c];
                }
            }
            gv = gv_prev;
            ge = ge_prev;
        }
        self.nets
            .edge_encoder
            .backward(params, &tape.edge_encoder, ge, grads, &mut [], false);
        self.nets
            .node_encoder
            .backward(params, &tape.node_encoder, gv, grads, &mut [], false);
        if let Some(f) = &self.film {
            for ((slot, ct), g) in f.slots.iter().zip(&tape.conditions).zip(gcond) {
                if let Some(g) = g {
                    slot.cond.backward(params, ct, g, grads, &mut [], false);
                }
            }
        }
    }

    fn collect_cond_grads<T: Real>(
        &self,
        block: usize,
        kind: MlpKind,
        hg: Vec<Option<Vec<T>>>,
        gcond: &mut [Option<Vec<T>>],
    ) {
        let Some(f) = &self.film else { return };
        for (layer, g) in hg.into_iter().enumerate() {
            if let (Some(g), Some(i)) = (g, f.slot_index(block, kind, layer)) {
                gcond[i] = Some(g);
            }
        }
    }

    /// Mean over nodes of the squared error of normalized accelerations,
    /// and its gradient w.r.t. the output.
    pub fn loss_and_grad<T: Real>(output: &[T], target: &[f32]) -> (f64, Vec<T>) {
        let n = (output.len() / 2).max(1) as f64;
        let mut loss = 0.0;
        let g = output
            .iter()
            .zip(target)
            .map(|(&o, &t)| {
                let diff = o - T::of(t as f64);
                loss += diff.f64() * diff.f64();
                diff * T::of(2.0 / n)
            })
            .collect();
        (loss / n, g)
    }
}

/// Trained (or freshly initialized) simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gns {
    pub arch: GnsArch,
    pub features: FeatureConfig,
    pub params: ParamStore<f32>,
    /// Training epochs behind these weights.
    pub epochs_completed: usize,
}

impl Gns {
    pub fn new(config: GnsConfig, features: FeatureConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        features.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let nets = GnsNets::build(&mut params, &config, features.node_feature_dim(), &mut rng)?;
        Ok(Self {
            arch: GnsArch {
                config,
                nets,
                film: None,
            },
            features,
            params,
            epochs_completed: 0,
        })
    }

    pub fn config(&self) -> &GnsConfig {
        &self.arch.config
    }

    pub fn film_config(&self) -> Option<&FilmConfig> {
        self.arch.film.as_ref().map(|f| &f.config)
    }

    /// Adds identity-initialized FiLM generators and freezes every base
    /// parameter.
    pub fn attach_film(&mut self, config: FilmConfig, seed: u64) -> Result<()> {
        if self.arch.film.is_some() {
            return Err(Error::Invalid("model already carries FiLM generators".into()));
        }
        config.validate(self.arch.config.n_mp_blocks)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let film = FilmNets::build(
            &mut self.params,
            &config,
            self.arch.config.mlp_hidden,
            self.arch.config.latent_dim,
            &mut rng,
        )?;
        for g in self.params.groups_mut() {
            g.trainable = g.name.starts_with("film.");
        }
        self.arch.film = Some(film);
        Ok(())
    }

    pub fn n_base_params(&self) -> usize {
        self.params.n_params_matching(|n| !n.starts_with("film."))
    }

    pub fn n_film_params(&self) -> usize {
        self.params.n_params_matching(|n| n.starts_with("film."))
    }

    pub fn sample(
        &self,
        history: &[&[[f64; 2]]],
        dt: f64,
        domain_size_m: [f64; 2],
    ) -> Result<GraphSample> {
        GraphSample::from_history(history, dt, domain_size_m, &self.features)
    }

    /// Accelerations in m/s^2 for the last frame of `history`.
    pub fn predict_accel(
        &self,
        history: &[&[[f64; 2]]],
        dt: f64,
        domain_size_m: [f64; 2],
        kappa: Option<f64>,
    ) -> Result<Vec<[f64; 2]>> {
        let sample = self.sample(history, dt, domain_size_m)?;
        let tape = self.arch.forward(&self.params, &sample, kappa)?;
        let s = &self.features.stats;
        Ok(tape
            .output()
            .chunks_exact(2)
            .map(|a| {
                [
                    a[0] as f64 * s.acc_std[0] + s.acc_mean[0],
                    a[1] as f64 * s.acc_std[1] + s.acc_mean[1],
                ]
            })
            .collect())
    }

    pub fn predictor(&self, kappa: Option<f64>) -> GnsPredictor<'_> {
        GnsPredictor { model: self, kappa }
    }

    pub fn rollout(&self, initial: &Trajectory, n_steps: usize, kappa: Option<f64>) -> Result<RolloutResult> {
        rollout(&self.predictor(kappa), initial, n_steps)
    }
}

/// Acceleration model driven by [`rollout`].
pub trait Predictor {
    /// Frames consumed per prediction (`C + 1`).
    fn history_len(&self) -> usize;

    /// Accelerations for the newest frame of `history`; `step` counts
    /// predictions made so far.
    fn predict(
        &self,
        step: usize,
        history: &[&[[f64; 2]]],
        dt: f64,
        domain_size_m: [f64; 2],
    ) -> Result<Vec<[f64; 2]>>;
}

pub struct GnsPredictor<'a> {
    pub model: &'a Gns,
    pub kappa: Option<f64>,
}

impl Predictor for GnsPredictor<'_> {
    fn history_len(&self) -> usize {
        self.model.features.velocity_history_len + 1
    }

    fn predict(
        &self,
        _step: usize,
        history: &[&[[f64; 2]]],
        dt: f64,
        domain_size_m: [f64; 2],
    ) -> Result<Vec<[f64; 2]>> {
        self.model.predict_accel(history, dt, domain_size_m, self.kappa)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// Seed frames followed by predicted frames, `[T][N][2]`.
    pub positions: Vec<f64>,
    pub n_frames: usize,
    pub n_particles: usize,
    /// Seed frames taken from the ground truth.
    pub n_seed_frames: usize,
    /// `[n_steps][N][2]`
    pub accelerations: Vec<f64>,
    pub wall_clamps: usize,
}

impl RolloutResult {
    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.n_particles * 2;
        &self.positions[t * w..(t + 1) * w]
    }

    /// Same header as `template`, predicted positions.
    pub fn to_trajectory(&self, template: &Trajectory) -> Trajectory {
        let mut t = template.clone();
        t.n_frames = self.n_frames;
        t.positions = self.positions.iter().map(|&v| v as f32).collect();
        t
    }
}

/// Semi-implicit Euler rollout seeded with the first `C + 1` frames of
/// `initial`. Particles leaving the domain are put back on the wall with
/// their normal velocity removed.
pub fn rollout(
    predictor: &impl Predictor,
    initial: &Trajectory,
    n_steps: usize,
) -> Result<RolloutResult> {
    let w = predictor.history_len();
    if initial.n_frames < w {
        return Err(Error::Shape {
            context: "rollout seed frames",
            expected: w,
            actual: initial.n_frames,
        });
    }
    let np = initial.n_particles;
    let dt = initial.dt_s;
    let [dw, dh] = initial.domain_size_m;
    let mut window: Vec<Vec<[f64; 2]>> = (0..w)
        .map(|t| {
            initial
                .frame(t)
                .chunks_exact(2)
                .map(|p| [p[0] as f64, p[1] as f64])
                .collect()
        })
        .collect();
    let mut positions: Vec<f64> = window.iter().flatten().flatten().copied().collect();
    let mut accelerations = Vec::with_capacity(n_steps * np * 2);
    let mut wall_clamps = 0;
    for step in 0..n_steps {
        let hist: Vec<&[[f64; 2]]> = window.iter().map(|f| f.as_slice()).collect();
        let acc = predictor.predict(step, &hist, dt, initial.domain_size_m)?;
        if acc.len() != np {
            return Err(Error::Shape {
                context: "predicted accelerations",
                expected: np,
                actual: acc.len(),
            });
        }
        let (cur, prev) = (&window[w - 1], &window[w - 2]);
        let mut next = vec![[0.0; 2]; np];
        let mut cur_edit = cur.clone();
        for i in 0..np {
            for c in 0..2 {
                let a = acc[i][c];
                let v = (cur[i][c] - prev[i][c]) / dt + a * dt;
                let x = cur[i][c] + v * dt;
                if !x.is_finite() || !a.is_finite() {
                    return Err(Error::NonFinite { step });
                }
                let hi = if c == 0 { dw } else { dh };
                if x < 0.0 || x > hi {
                    next[i][c] = x.clamp(0.0, hi);
                    cur_edit[i][c] = next[i][c];
                    wall_clamps += 1;
                } else {
                    next[i][c] = x;
                }
                accelerations.push(a);
            }
        }
        positions.extend(next.iter().flatten());
        window.remove(0);
        *window.last_mut().unwrap() = cur_edit;
        window.push(next);
    }
    Ok(RolloutResult {
        positions,
        n_frames: w + n_steps,
        n_particles: np,
        n_seed_frames: w,
        accelerations,
        wall_clamps,
    })
}

const CKPT_MAGIC: &[u8; 4] = b"GNSC";
const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroupEntry {
    name: String,
    #[serde(flatten)]
    kind: GroupKind,
    trainable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    gns: GnsConfig,
    features: FeatureConfig,
    aggregation: String,
    film: Option<FilmConfig>,
    #[serde(default)]
    epochs_completed: usize,
    groups: Vec<GroupEntry>,
}

impl Gns {
    /// Magic, JSON header length (u32 LE), JSON header, then every group's
    /// values as little-endian f32 in group-name order.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let ids = self.params.sorted_ids();
        let header = CheckpointHeader {
            version: CKPT_VERSION,
            gns: self.arch.config.clone(),
            features: self.features.clone(),
            aggregation: "sum".into(),
            film: self.film_config().cloned(),
            epochs_completed: self.epochs_completed,
            groups: ids
                .iter()
                .map(|&i| {
                    let g = self.params.get(i);
                    GroupEntry {
                        name: g.name.clone(),
                        kind: g.kind,
                        trainable: g.trainable,
                    }
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + 4 * self.params.n_params());
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for &i in &ids {
            for v in &self.params.get(i).data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(path, m);
        if bytes.len() < 8 || &bytes[..4] != CKPT_MAGIC {
            return Err(bad("not a model checkpoint"));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let json = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(json)?;
        if header.version != CKPT_VERSION {
            return Err(bad(&format!("unsupported version {}", header.version)));
        }
        if header.aggregation != "sum" {
            return Err(bad(&format!("unsupported aggregation {}", header.aggregation)));
        }
        let mut blob = &bytes[8 + hlen..];
        let mut loaded = ParamStore::<f32>::new();
        for g in &header.groups {
            let len = g.kind.len();
            if blob.len() < 4 * len {
                return Err(bad("truncated parameter blob"));
            }
            let data = blob[..4 * len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blob = &blob[4 * len..];
            let id = loaded.insert(&g.name, g.kind, data)?;
            loaded.get_mut(id).trainable = g.trainable;
        }
        if !blob.is_empty() {
            return Err(bad("trailing bytes after parameter blob"));
        }
        // rebuild in canonical creation order
        let mut model = Gns::new(header.gns.clone(), header.features.clone(), 0)?;
        if let Some(fc) = &header.film {
            model.attach_film(fc.clone(), 0)?;
        }
        model.epochs_completed = header.epochs_completed;
        if model.params.len() != loaded.len() {
            return Err(bad("parameter groups do not match the architecture"));
        }
        for g in model.params.groups_mut() {
            let id = loaded
                .id(&g.name)
                .ok_or_else(|| bad(&format!("missing group {}", g.name)))?;
            let src = loaded.get(id);
            if src.kind != g.kind {
                return Err(bad(&format!("group {} has the wrong shape", g.name)));
            }
            g.data.clone_from(&src.data);
            g.trainable = src.trainable;
        }
        Ok(model)
    }
}
