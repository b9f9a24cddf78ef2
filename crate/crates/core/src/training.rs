//! Pretraining, masked fine-tuning and FiLM training, plus the update
//! magnitude statistics used to locate material-sensitive layers.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{finite_difference_kinematics, Kinematics, Trajectory};
use crate::error::{Error, Result};
use crate::film::FilmConfig;
use crate::gns::{Gns, GnsArch, GnsConfig};
use crate::graph::{FeatureConfig, GraphSample, NormStats};
use crate::nn::{Adam, Grads, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_lr_init")]
    pub lr_init: f64,
    #[serde(default = "d_lr_final")]
    pub lr_final: f64,
    pub epochs: usize,
    /// Graphs per optimizer step.
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    /// Examples drawn per epoch; all training examples when absent.
    #[serde(default)]
    pub samples_per_epoch: Option<usize>,
    /// Input noise, as a fraction of the velocity standard deviation.
    #[serde(default = "d_noise")]
    pub noise_rel: f64,
    #[serde(default)]
    pub seed: u64,
    /// Group-name globs left trainable; empty means every group.
    #[serde(default)]
    pub mask: Vec<String>,
    /// Learning-rate factor applied when training FiLM generators.
    #[serde(default = "d_film_lr")]
    pub film_lr_multiplier: f64,
    /// Trailing examples per trajectory held out for validation.
    #[serde(default = "d_val")]
    pub validation_windows: usize,
}

fn d_lr_init() -> f64 {
    1e-3
}
fn d_lr_final() -> f64 {
    1e-5
}
fn d_batch() -> usize {
    2
}
fn d_noise() -> f64 {
    6.7e-4
}
fn d_film_lr() -> f64 {
    10.0
}
fn d_val() -> usize {
    2
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: d_lr_init(),
            lr_final: d_lr_final(),
            epochs: 10,
            batch_size: d_batch(),
            samples_per_epoch: None,
            noise_rel: d_noise(),
            seed: 0,
            mask: Vec::new(),
            film_lr_multiplier: d_film_lr(),
            validation_windows: d_val(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.lr_init > 0.0 && self.lr_final > 0.0) {
            return Err(Error::config("lr", "learning rates must be > 0"));
        }
        if !(self.noise_rel >= 0.0) {
            return Err(Error::config("noise_rel", "must be >= 0"));
        }
        Ok(())
    }

    /// Exponential decay from `lr_init` to `lr_final` over `total` steps.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let frac = if total <= 1 {
            0.0
        } else {
            step as f64 / (total - 1) as f64
        };
        self.lr_init * (self.lr_final / self.lr_init).powf(frac)
    }
}

/// One supervised target: frame `frame` of trajectory `traj`, predicted from
/// the `C + 1` frames ending there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Example {
    pub traj: usize,
    pub frame: usize,
}

/// Trajectories with their finite-difference kinematics and conditioning
/// values.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub kappas: Vec<Option<f64>>,
    frames: Vec<Vec<Vec<[f64; 2]>>>,
    kinematics: Vec<Kinematics>,
    history_len: usize,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, kappas: Vec<Option<f64>>, velocity_history_len: usize) -> Result<Self> {
        if trajectories.len() != kappas.len() {
            return Err(Error::Shape {
                context: "dataset kappas",
                expected: trajectories.len(),
                actual: kappas.len(),
            });
        }
        if trajectories.is_empty() {
            return Err(Error::Invalid("empty dataset".into()));
        }
        let c = velocity_history_len;
        let mut frames = Vec::new();
        let mut kinematics = Vec::new();
        for t in &trajectories {
            if t.n_frames < c + 2 {
                return Err(Error::Shape {
                    context: "trajectory frames for training",
                    expected: c + 2,
                    actual: t.n_frames,
                });
            }
            frames.push(
                (0..t.n_frames)
                    .map(|f| t.frame(f).chunks_exact(2).map(|p| [p[0] as f64, p[1] as f64]).collect())
                    .collect(),
            );
            kinematics.push(finite_difference_kinematics(t)?);
        }
        Ok(Self {
            trajectories,
            kappas,
            frames,
            kinematics,
            history_len: c,
        })
    }

    pub fn unconditioned(trajectories: Vec<Trajectory>, velocity_history_len: usize) -> Result<Self> {
        let k = vec![None; trajectories.len()];
        Self::new(trajectories, k, velocity_history_len)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Every example of trajectory `i`, in frame order.
    pub fn trajectory_examples(&self, i: usize) -> Vec<Example> {
        (self.history_len..self.trajectories[i].n_frames - 1)
            .map(|frame| Example { traj: i, frame })
            .collect()
    }

    pub fn examples(&self) -> Vec<Example> {
        (0..self.len()).flat_map(|i| self.trajectory_examples(i)).collect()
    }

    /// (train, validation): the last `n_tail` examples of every trajectory
    /// are held out.
    pub fn split_tail(&self, n_tail: usize) -> (Vec<Example>, Vec<Example>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for i in 0..self.len() {
            let ex = self.trajectory_examples(i);
            let cut = ex.len().saturating_sub(n_tail).max(1);
            train.extend_from_slice(&ex[..cut]);
            val.extend_from_slice(&ex[cut..]);
        }
        (train, val)
    }

    /// Per-component velocity and acceleration statistics over all frames.
    pub fn norm_stats(&self) -> NormStats {
        let moments = |vals: &mut dyn Iterator<Item = &[f64]>| {
            let mut n = 0.0;
            let mut s = [0.0; 2];
            let mut s2 = [0.0; 2];
            for v in vals {
                for c in 0..2 {
                    s[c] += v[c];
                    s2[c] += v[c] * v[c];
                }
                n += 1.0;
            }
            let mean = [s[0] / n, s[1] / n];
            let std = [0, 1].map(|c| ((s2[c] / n - mean[c] * mean[c]).max(0.0)).sqrt().max(1e-8));
            (mean, std)
        };
        let (vel_mean, vel_std) = moments(&mut self.kinematics.iter().flat_map(|k| k.velocities.chunks_exact(2)));
        let (acc_mean, acc_std) =
            moments(&mut self.kinematics.iter().flat_map(|k| k.accelerations.chunks_exact(2)));
        NormStats {
            vel_mean,
            vel_std,
            acc_mean,
            acc_std,
        }
    }

    /// Graph and normalized target for `ex`. With `noise`, a random walk
    /// with final velocity std `noise.1` (m/s) perturbs the input frames and
    /// the target is corrected so the true next position stays the goal.
    pub fn sample(
        &self,
        ex: Example,
        features: &FeatureConfig,
        noise: Option<(&mut ChaCha8Rng, f64)>,
    ) -> Result<GraphSample> {
        let t = &self.trajectories[ex.traj];
        let frames = &self.frames[ex.traj];
        let c = self.history_len;
        let dt = t.dt_s;
        let np = t.n_particles;
        if ex.frame < c || ex.frame + 1 >= t.n_frames {
            return Err(Error::Invalid(format!(
                "frame {} has no full history and target in a {}-frame trajectory",
                ex.frame, t.n_frames
            )));
        }
        let window = &frames[ex.frame - c..=ex.frame];
        let next = &frames[ex.frame + 1];
        let mut accel: Vec<f64> = Vec::with_capacity(np * 2);
        let sample = match noise {
            Some((rng, sigma)) if sigma > 0.0 => {
                let step = Normal::new(0.0, sigma / (c as f64).sqrt()).unwrap();
                let mut vel_noise = vec![[0.0; 2]; np];
                let mut pos_noise = vec![[0.0; 2]; np];
                let mut noisy: Vec<Vec<[f64; 2]>> = vec![window[0].clone()];
                let mut prev_pos_noise = pos_noise.clone();
                for f in &window[1..] {
                    prev_pos_noise.clone_from(&pos_noise);
                    for i in 0..np {
                        for d in 0..2 {
                            vel_noise[i][d] += step.sample(rng);
                            pos_noise[i][d] += vel_noise[i][d] * dt;
                        }
                    }
                    noisy.push(f.iter().zip(&pos_noise).map(|(p, n)| [p[0] + n[0], p[1] + n[1]]).collect());
                }
                let cur = &noisy[c];
                let prev = &noisy[c - 1];
                for i in 0..np {
                    for d in 0..2 {
                        let target_next = next[i][d] + pos_noise[i][d];
                        accel.push((target_next - 2.0 * cur[i][d] + prev[i][d]) / (dt * dt));
                    }
                }
                let refs: Vec<&[[f64; 2]]> = noisy.iter().map(|f| f.as_slice()).collect();
                GraphSample::from_history(&refs, dt, t.domain_size_m, features)?
            }
            _ => {
                let k = &self.kinematics[ex.traj];
                accel.extend_from_slice(k.acceleration(ex.frame));
                let refs: Vec<&[[f64; 2]]> = window.iter().map(|f| f.as_slice()).collect();
                GraphSample::from_history(&refs, dt, t.domain_size_m, features)?
            }
        };
        Ok(sample
            .with_target(&accel, &features.stats)
            .with_kappa(self.kappas[ex.traj]))
    }
}

/// Mean one-step loss of a batch and the matching mean gradient.
pub fn one_step_loss(arch: &GnsArch, params: &ParamStore<f32>, batch: &[GraphSample]) -> Result<(f64, Grads<f32>)> {
    let mut grads = Grads::zeros_like(params);
    let mut total = 0.0;
    for s in batch {
        let tape = arch.forward(params, s, s.kappa)?;
        let (loss, g) = GnsArch::loss_and_grad(tape.output(), &s.target_accel);
        total += loss;
        arch.backward(params, s, &tape, g, &mut grads);
    }
    let n = batch.len().max(1);
    grads.scale(1.0 / n as f32);
    Ok((total / n as f64, grads))
}

/// Mean one-step loss without noise.
pub fn evaluate(model: &Gns, data: &Dataset, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Invalid("no examples to evaluate".into()));
    }
    let mut total = 0.0;
    for &ex in examples {
        let s = data.sample(ex, &model.features, None)?;
        let tape = model.arch.forward(&model.params, &s, s.kappa)?;
        total += GnsArch::loss_and_grad(tape.output(), &s.target_accel).0;
    }
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub lr: f64,
    pub wall_clock_s: f64,
}

/// How examples are drawn each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Draw {
    Shuffle,
    /// Material chosen uniformly first, then an example of it.
    PerMaterial,
}

fn material_key(t: &Trajectory) -> [u64; 2] {
    [t.material.friction_angle_deg.to_bits(), t.material.cohesion_kpa.to_bits()]
}

#[allow(clippy::too_many_arguments)]
fn train_loop(
    model: &mut Gns,
    data: &Dataset,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    lr_scale: f64,
    draw: Draw,
    log: &mut dyn FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Invalid("no training examples".into()));
    }
    let start = Instant::now();
    let first_epoch = model.epochs_completed;
    let per_epoch = cfg.samples_per_epoch.unwrap_or(train.len()).max(1);
    let steps_per_epoch = per_epoch.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let sigma = cfg.noise_rel * 0.5 * (model.features.stats.vel_std[0] + model.features.stats.vel_std[1]);
    let mut adam = Adam::new(&model.params);
    let mut history = Vec::new();
    let mut emit = |e: EpochLog, h: &mut Vec<EpochLog>| {
        log(&e);
        h.push(e);
    };
    if !val.is_empty() {
        let loss = evaluate(model, data, val)?;
        emit(
            EpochLog {
                epoch: first_epoch,
                split: "validation".into(),
                loss,
                lr: cfg.lr_init * lr_scale,
                wall_clock_s: start.elapsed().as_secs_f64(),
            },
            &mut history,
        );
    }
    let mut by_material: BTreeMap<[u64; 2], Vec<Example>> = BTreeMap::new();
    for &ex in train {
        by_material.entry(material_key(&data.trajectories[ex.traj])).or_default().push(ex);
    }
    let groups: Vec<Vec<Example>> = by_material.into_values().collect();
    let mut step = 0;
    for e in 0..cfg.epochs {
        let epoch = first_epoch + e + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let order: Vec<Example> = match draw {
            Draw::Shuffle => {
                let mut o = train.to_vec();
                o.shuffle(&mut rng);
                o.into_iter().cycle().take(per_epoch).collect()
            }
            Draw::PerMaterial => (0..per_epoch)
                .map(|_| {
                    let g = &groups[rng.gen_range(0..groups.len())];
                    g[rng.gen_range(0..g.len())]
                })
                .collect(),
        };
        let mut epoch_loss = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let samples = batch
                .iter()
                .map(|&ex| data.sample(ex, &model.features, Some((&mut rng, sigma))))
                .collect::<Result<Vec<_>>>()?;
            let (loss, mut grads) = one_step_loss(&model.arch, &model.params, &samples)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("non-finite loss {loss} at step {step}"),
                });
            }
            grads.apply_mask(&model.params);
            lr = cfg.lr_at(step, total_steps) * lr_scale;
            adam.step(&mut model.params, &grads, lr);
            epoch_loss += loss * batch.len() as f64;
            step += 1;
        }
        model.epochs_completed = epoch;
        let wall = start.elapsed().as_secs_f64();
        emit(
            EpochLog {
                epoch,
                split: "train".into(),
                loss: epoch_loss / per_epoch as f64,
                lr,
                wall_clock_s: wall,
            },
            &mut history,
        );
        if !val.is_empty() {
            let loss = evaluate(model, data, val)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("validation loss {loss}"),
                });
            }
            emit(
                EpochLog {
                    epoch,
                    split: "validation".into(),
                    loss,
                    lr,
                    wall_clock_s: start.elapsed().as_secs_f64(),
                },
                &mut history,
            );
        }
    }
    Ok(history)
}

/// Trains every group of a fresh model. Normalization statistics come from
/// `data`. Validation uses `val_data` when given, else held-out tails.
pub fn pretrain(
    data: &Dataset,
    val_data: Option<&Dataset>,
    gns: GnsConfig,
    mut features: FeatureConfig,
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&EpochLog),
) -> Result<(Gns, Vec<EpochLog>)> {
    features.stats = data.norm_stats();
    let mut model = Gns::new(gns, features, cfg.seed)?;
    let history = continue_training(&mut model, data, val_data, cfg, log)?;
    Ok((model, history))
}

/// Further trains all groups of an existing model (resume).
pub fn continue_training(
    model: &mut Gns,
    data: &Dataset,
    val_data: Option<&Dataset>,
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    model.params.set_all_trainable(true);
    let (train, val) = match val_data {
        Some(_) => (data.examples(), Vec::new()),
        None => data.split_tail(cfg.validation_windows),
    };
    match val_data {
        Some(v) => {
            let val_ex = v.examples();
            let mut hist = train_loop(model, data, &train, &[], cfg, 1.0, Draw::Shuffle, log)?;
            // validation on a separate set is logged after the run
            let loss = evaluate(model, v, &val_ex)?;
            let e = EpochLog {
                epoch: model.epochs_completed,
                split: "validation".into(),
                loss,
                lr: cfg.lr_final,
                wall_clock_s: 0.0,
            };
            log(&e);
            hist.push(e);
            Ok(hist)
        }
        None => train_loop(model, data, &train, &val, cfg, 1.0, Draw::Shuffle, log),
    }
}

/// |Δθ| per parameter of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDelta {
    pub name: String,
    pub component: String,
    pub abs_delta: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub mask: Vec<String>,
    pub groups: Vec<GroupDelta>,
    pub test_loss: Option<f64>,
}

/// Coarse component of a group: `encoder`, `processor.block_k`, `decoder`
/// or `film`.
pub fn component_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    match parts.first() {
        Some(&"processor") if parts.len() > 1 => format!("processor.{}", parts[1]),
        Some(p) => p.to_string(),
        None => String::new(),
    }
}

impl SensitivityReport {
    pub fn from_params(mask: &[String], before: &ParamStore<f32>, after: &ParamStore<f32>) -> Result<Self> {
        let mut groups = Vec::new();
        for g in after.groups() {
            let id = before.require(&g.name)?;
            let b = before.get(id);
            groups.push(GroupDelta {
                name: g.name.clone(),
                component: component_of(&g.name),
                abs_delta: g.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).collect(),
            });
        }
        Ok(Self {
            mask: mask.to_vec(),
            groups,
            test_loss: None,
        })
    }

    /// All deltas of one component (or of everything for `None`).
    pub fn deltas(&self, component: Option<&str>) -> Vec<f64> {
        self.groups
            .iter()
            .filter(|g| component.is_none_or(|c| g.component == c))
            .flat_map(|g| g.abs_delta.iter().map(|&d| d as f64))
            .collect()
    }

    pub fn components(&self) -> Vec<String> {
        let mut c: Vec<String> = self.groups.iter().map(|g| g.component.clone()).collect();
        c.dedup();
        c
    }

    pub fn cdf_by_component(&self) -> BTreeMap<String, Vec<(f64, f64)>> {
        self.components()
            .into_iter()
            .map(|c| {
                let d = self.deltas(Some(&c));
                (c, update_cdf(&d))
            })
            .collect()
    }

    /// Smallest fraction of parameters holding `share` of the total update.
    pub fn concentration(&self, share: f64) -> f64 {
        let cdf = update_cdf(&self.deltas(None));
        cdf.iter()
            .find(|(_, m)| *m >= share - 1e-12)
            .map_or(1.0, |(p, _)| *p)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,fraction_params,fraction_magnitude\n");
        for (c, cdf) in self.cdf_by_component() {
            for (p, m) in cdf {
                out.push_str(&format!("{c},{p},{m}\n"));
            }
        }
        out
    }
}

/// Cumulative share of total |Δθ| against the fraction of parameters, with
/// deltas sorted in decreasing order. All-zero input gives the diagonal.
pub fn update_cdf(deltas: &[f64]) -> Vec<(f64, f64)> {
    let mut d: Vec<f64> = deltas.iter().map(|v| v.abs()).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    let n = d.len() as f64;
    let total: f64 = d.iter().sum();
    let mut acc = 0.0;
    d.iter()
        .enumerate()
        .map(|(i, v)| {
            acc += v;
            let frac = (i + 1) as f64 / n;
            let m = if total > 0.0 { acc / total } else { frac };
            (frac, if i + 1 == d.len() { 1.0 } else { m.min(1.0) })
        })
        .collect()
}

/// Fine-tunes the groups matched by `cfg.mask` on `data`; `test` (if any)
/// gives the reported test loss.
pub fn finetune(
    base: &Gns,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&EpochLog),
) -> Result<(Gns, SensitivityReport, Vec<EpochLog>)> {
    let mut model = base.clone();
    if cfg.mask.is_empty() {
        model.params.set_all_trainable(true);
    } else {
        model.params.set_trainable_globs(&cfg.mask)?;
    }
    let (train, val) = data.split_tail(cfg.validation_windows);
    let history = train_loop(&mut model, data, &train, &val, cfg, 1.0, Draw::Shuffle, log)?;
    let mut report = SensitivityReport::from_params(&cfg.mask, &base.params, &model.params)?;
    if let Some(t) = test {
        report.test_loss = Some(evaluate(&model, t, &t.examples())?);
    }
    Ok((model, report, history))
}

/// Attaches fresh FiLM generators to a copy of `base` and trains only them
/// on a multi-material dataset (every trajectory carries its kappa).
pub fn train_film(
    base: &Gns,
    data: &Dataset,
    film: FilmConfig,
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&EpochLog),
) -> Result<(Gns, Vec<EpochLog>)> {
    if data.kappas.iter().any(|k| k.is_none()) {
        return Err(Error::Invalid("every FiLM training trajectory needs a kappa".into()));
    }
    let mut materials: Vec<[u64; 2]> = data.trajectories.iter().map(material_key).collect();
    materials.sort();
    materials.dedup();
    if materials.len() < 2 {
        return Err(Error::config(
            "dataset",
            "FiLM training needs at least two materials",
        ));
    }
    let mut model = base.clone();
    if model.arch.film.is_some() {
        return Err(Error::Invalid("base model is already conditioned".into()));
    }
    model.attach_film(film, cfg.seed)?;
    let (train, val) = data.split_tail(cfg.validation_windows);
    let history = train_loop(
        &mut model,
        data,
        &train,
        &val,
        cfg,
        cfg.film_lr_multiplier,
        Draw::PerMaterial,
        log,
    )?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_fixtures() {
        let c = update_cdf(&[1.0, 4.0, 2.0, 3.0]);
        let want = [(0.25, 0.4), (0.5, 0.7), (0.75, 0.9), (1.0, 1.0)];
        for (a, b) in c.iter().zip(want) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
        let eq = update_cdf(&[2.0; 5]);
        for (p, m) in eq {
            assert!((p - m).abs() < 1e-12);
        }
        let one = update_cdf(&[0.0, 0.0, 5.0, 0.0]);
        assert_eq!(one[0], (0.25, 1.0));
        assert!(one.iter().all(|(_, m)| *m == 1.0));
    }

    #[test]
    fn cdf_nondecreasing_and_ends_at_one() {
        let c = update_cdf(&[0.3, 1e-9, 7.0, 0.0, 2.5, 0.3]);
        assert!(c.windows(2).all(|w| w[1].1 >= w[0].1));
        assert_eq!(c.last().unwrap().1, 1.0);
    }

    #[test]
    fn components() {
        assert_eq!(component_of("processor.block_3.edge_mlp.layer_2"), "processor.block_3");
        assert_eq!(component_of("encoder.node_mlp.norm"), "encoder");
        assert_eq!(component_of("decoder.layer_1"), "decoder");
        assert_eq!(component_of("film.block_1.edge_mlp.layer_2.cond.layer_1"), "film");
    }

    #[test]
    fn lr_schedule_endpoints() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0, 100), 1e-3);
        assert!((c.lr_at(99, 100) - 1e-5).abs() < 1e-18);
        assert!((c.lr_at(33, 67) - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 2, "bogus": 1}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"epochs": 2}"#).unwrap();
        assert_eq!(c.batch_size, 2);
    }
}
