use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use gns_core::analysis::{collect_film_sweep, default_probe_frames, pca as run_pca, sweep_csv, sweep_path, variance_csv};
use gns_core::dataio::{read_trajectory, write_trajectory, DatasetManifest, ParamFamily, Role, Trajectory};
use gns_core::film::{normalize_kappa, FilmConfig};
use gns_core::gns::{Gns, GnsConfig};
use gns_core::graph::FeatureConfig;
use gns_core::inverse::{rollout_mped, run_bo, BoConfig};
use gns_core::metrics::{energy_delta_norm, energy_series, mped, percentile, rollout_mse, MpedVariant};
use gns_core::mpm::{generate_trajectory, MpmConfig};
use gns_core::training::{self, Dataset, SensitivityReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::util::*;
use crate::*;

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let base = match &a.config {
        Some(p) => read_json::<MpmConfig>(p)?,
        None => match a.preset {
            Preset::Lab => MpmConfig::lab(),
            Preset::Default => MpmConfig::default(),
        },
    };
    base.validate_geometry()?;
    let materials = a.material.iter().map(|m| parse_material(m)).collect::<Result<Vec<_>>>()?;
    for m in &materials {
        base.validate(m)?;
    }
    let seeds = parse_seeds(&a.seeds)?;
    let jobs: Vec<_> = materials.iter().flat_map(|m| seeds.iter().map(move |s| (*m, *s))).collect();
    let results: Vec<Result<(String, Trajectory)>> = pool(a.jobs)?.install(|| {
        jobs.par_iter()
            .map(|(m, seed)| {
                let cfg = if a.vary_column { base.vary_column(*seed) } else { base.clone() };
                let t = generate_trajectory(&cfg, m, *seed)?;
                Ok((format!("trajectories/{}_s{seed}.gnst", material_tag(m)), t))
            })
            .collect()
    });
    fs::create_dir_all(a.out.join("trajectories")).with_context(|| format!("creating {}", a.out.display()))?;
    let manifest_path = a.out.join("manifest.json");
    let mut manifest = if manifest_path.exists() {
        DatasetManifest::load(&manifest_path)?
    } else {
        DatasetManifest::default()
    };
    for r in results {
        let (rel, t) = r?;
        write_trajectory(&t, a.out.join(&rel))?;
        let rel = PathBuf::from(rel);
        manifest.entries.retain(|e| e.path != rel);
        manifest.push(rel, t.material, a.role.into());
    }
    manifest.compute_kappa_bounds();
    manifest.validate()?;
    manifest.save(&manifest_path)?;
    println!("{} trajectories, manifest {}", jobs.len(), manifest_path.display());
    Ok(())
}

fn log_epochs(run: &mut RunDir, name: &str) -> Result<JsonlLog> {
    JsonlLog::create(&run.path(&format!("logs/{name}.jsonl")))
}

fn finish_training(
    mut run: RunDir,
    model: &Gns,
    history: &[training::EpochLog],
    log: JsonlLog,
    name: &str,
    args: &impl Serialize,
) -> Result<()> {
    if let Some(e) = log.error {
        return Err(e).context("writing epoch log");
    }
    model.save(run.path("checkpoints/model.gnsc"))?;
    run.write_text(&format!("metrics/{name}.csv"), &epochs_csv(history))?;
    if let Some(v) = history.iter().rev().find(|e| e.split == "validation") {
        println!("epoch {} validation loss {:.6}", v.epoch, v.loss);
    }
    run.finish(name, args)
}

pub fn pretrain(a: &PretrainArgs) -> Result<()> {
    let c = &a.common;
    let cfg = train_config(c)?;
    let mut run = RunDir::create(&c.out)?;
    let mut log = log_epochs(&mut run, "pretrain")?;
    let (model, history) = match &a.resume {
        Some(ckpt) => {
            let mut model = Gns::load(ckpt)?;
            let c_len = model.features.velocity_history_len;
            let trajs = window_all(load_role(&c.data, a.role.into())?, c.window_tau_multiple, c_len)?;
            let data = Dataset::unconditioned(trajs, c_len)?;
            let h = training::continue_training(&mut model, &data, None, &cfg, &mut |e| log.record(e))?;
            (model, h)
        }
        None => {
            let gns: GnsConfig = match &a.gns_config {
                Some(p) => read_json(p)?,
                None => GnsConfig::default(),
            };
            let features = FeatureConfig {
                connectivity_radius_m: a.radius,
                ..FeatureConfig::default()
            };
            let c_len = features.velocity_history_len;
            let trajs = window_all(load_role(&c.data, a.role.into())?, c.window_tau_multiple, c_len)?;
            let data = Dataset::unconditioned(trajs, c_len)?;
            training::pretrain(&data, None, gns, features, &cfg, &mut |e| log.record(e))?
        }
    };
    finish_training(run, &model, &history, log, "pretrain", a)
}

pub fn finetune(a: &FinetuneArgs) -> Result<()> {
    let c = &a.common;
    let mut cfg = train_config(c)?;
    cfg.mask = a.unlock.clone();
    let base = Gns::load(&a.checkpoint)?;
    // Resolve the mask before any data is touched.
    base.params.clone().set_trainable_globs(&cfg.mask)?;
    let c_len = base.features.velocity_history_len;
    let trajs = window_all(load_role(&c.data, a.role.into())?, c.window_tau_multiple, c_len)?;
    let data = Dataset::unconditioned(trajs, c_len)?;
    let test = match a.test_role {
        Some(r) => Some(Dataset::unconditioned(load_role(&c.data, r.into())?, c_len)?),
        None => None,
    };
    let mut run = RunDir::create(&c.out)?;
    let mut log = log_epochs(&mut run, "finetune")?;
    let (model, report, history) = training::finetune(&base, &data, test.as_ref(), &cfg, &mut |e| log.record(e))?;
    run.write_json("metrics/sensitivity.json", &report)?;
    run.write_text("metrics/update_cdf.csv", &report.to_csv())?;
    if let Some(t) = report.test_loss {
        println!("test loss {t:.6}");
    }
    finish_training(run, &model, &history, log, "finetune", a)
}

/// Normalized kappa of `t` under `cfg`.
fn kappa_of(cfg: &FilmConfig, t: &Trajectory) -> Result<f64> {
    Ok(cfg.kappa(&t.material)?)
}

pub fn train_film(a: &TrainFilmArgs) -> Result<()> {
    let c = &a.common;
    let cfg = train_config(c)?;
    let family: ParamFamily = a.param_family.into();
    let manifest = DatasetManifest::load(manifest_path(&c.data))?;
    let bounds = *manifest
        .kappa_bounds
        .get(&family)
        .ok_or_else(|| anyhow!("{} has no {family:?} kappa bounds (need >= 2 materials)", c.data.display()))?;
    let mut film = FilmConfig::new(a.film_blocks, family, bounds);
    film.shared = a.shared;
    let base = Gns::load(&a.checkpoint)?;
    film.validate(base.config().n_mp_blocks)?;
    let c_len = base.features.velocity_history_len;
    let trajs = window_all(load_role(&c.data, a.role.into())?, c.window_tau_multiple, c_len)?;
    let kappas = trajs.iter().map(|t| kappa_of(&film, t).map(Some)).collect::<Result<Vec<_>>>()?;
    let data = Dataset::new(trajs, kappas, c_len)?;
    let mut run = RunDir::create(&c.out)?;
    let mut log = log_epochs(&mut run, "train_film")?;
    let (model, history) = training::train_film(&base, &data, film, &cfg, &mut |e| log.record(e))?;
    println!(
        "FiLM parameters {} on a {}-parameter base",
        model.n_film_params(),
        model.n_base_params()
    );
    finish_training(run, &model, &history, log, "train_film", a)
}

fn model_kappa(model: &Gns, t: &Trajectory, explicit: Option<f64>) -> Result<Option<f64>> {
    match (model.film_config(), explicit) {
        (None, Some(_)) => bail!("--kappa given but the checkpoint has no FiLM generators"),
        (None, None) => Ok(None),
        (Some(_), Some(k)) => Ok(Some(k)),
        (Some(cfg), None) => Ok(Some(kappa_of(cfg, t)?)),
    }
}

pub fn rollout(a: &RolloutArgs) -> Result<()> {
    let model = Gns::load(&a.checkpoint)?;
    let t = read_trajectory(&a.trajectory)?;
    let w = model.features.velocity_history_len + 1;
    let steps = a.steps.unwrap_or(t.n_frames.saturating_sub(w));
    let kappa = model_kappa(&model, &t, a.kappa)?;
    let r = model.rollout(&t, steps, kappa)?;
    let pred = r.to_trajectory(&t);
    write_trajectory(&pred, &a.out)?;
    println!("{} frames, {} wall clamps -> {}", r.n_frames, r.wall_clamps, a.out.display());
    Ok(())
}

#[derive(Serialize, Clone)]
struct EvalRow {
    trajectory: String,
    one_step_mse: Option<f64>,
    rollout_mse: f64,
    energy_delta_final: f64,
    energy_delta_mean: f64,
    mped_terminal: f64,
}

fn compare(pred: &Trajectory, truth: &Trajectory) -> Result<(f64, f64, f64, f64)> {
    let mse = rollout_mse(pred, truth)?;
    let m = particle_mass(truth);
    let ep = energy_series(pred, m, GRAVITY)?;
    let et = energy_series(truth, m, GRAVITY)?;
    // checks lengths and E_0
    energy_delta_norm(&ep, &et)?;
    let sum = |e: &gns_core::metrics::EnergySeries| -> Vec<f64> { e.kinetic.iter().zip(&e.potential).map(|(k, p)| k + p).collect() };
    let total: Vec<f64> = sum(&ep).iter().zip(sum(&et)).map(|(a, b)| (a - b).abs() / et.e0).collect();
    let pts = |t: &Trajectory| -> Vec<[f64; 2]> {
        t.frame(t.n_frames - 1)
            .chunks_exact(2)
            .map(|p| [p[0] as f64, p[1] as f64])
            .collect()
    };
    let mp = mped(&pts(pred), &pts(truth), MpedVariant::Matched)?;
    let mean = total.iter().sum::<f64>() / total.len().max(1) as f64;
    Ok((mse, *total.last().unwrap_or(&0.0), mean, mp))
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let data_path = manifest_path(&a.data);
    let manifest = DatasetManifest::load(&data_path)?;
    let role: Role = a.role.into();
    let entries: Vec<_> = manifest.with_role(role).cloned().collect();
    if entries.is_empty() {
        bail!("{} lists no {role:?} trajectories", a.data.display());
    }
    let truths = entries
        .iter()
        .map(|e| read_trajectory(manifest.resolve(&data_path, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let model = match (&a.checkpoint, a.predictions.is_empty()) {
        (Some(p), true) => Some(Gns::load(p)?),
        (None, false) => None,
        _ => bail!("give exactly one of --checkpoint or --predictions"),
    };
    if model.is_none() && a.predictions.len() != truths.len() {
        bail!("{} predictions for {} test trajectories", a.predictions.len(), truths.len());
    }
    let rows: Vec<Result<EvalRow>> = pool(a.jobs)?.install(|| {
        (0..truths.len())
            .into_par_iter()
            .map(|i| {
                let truth = &truths[i];
                let (pred, one_step) = match &model {
                    Some(m) => {
                        let k = model_kappa(m, truth, None)?;
                        let w = m.features.velocity_history_len + 1;
                        let r = m.rollout(truth, truth.n_frames - w, k)?;
                        let data = Dataset::new(vec![truth.clone()], vec![k], m.features.velocity_history_len)?;
                        let one = training::evaluate(m, &data, &data.examples())?;
                        (r.to_trajectory(truth), Some(one))
                    }
                    None => (read_trajectory(&a.predictions[i])?, None),
                };
                let (mse, ef, em, mp) = compare(&pred, truth)?;
                Ok(EvalRow {
                    trajectory: entries[i].path.display().to_string(),
                    one_step_mse: one_step,
                    rollout_mse: mse,
                    energy_delta_final: ef,
                    energy_delta_mean: em,
                    mped_terminal: mp,
                })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut run = RunDir::create(&a.out)?;
    let mut csv = String::from("trajectory,one_step_mse,rollout_mse,energy_delta_final,energy_delta_mean,mped_terminal\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.trajectory,
            r.one_step_mse.map_or(String::new(), |v| v.to_string()),
            r.rollout_mse,
            r.energy_delta_final,
            r.energy_delta_mean,
            r.mped_terminal
        ));
    }
    run.write_text("metrics/eval.csv", &csv)?;
    let mut summary: BTreeMap<&str, [f64; 5]> = BTreeMap::new();
    let quart = |mut v: Vec<f64>| [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| percentile(&mut v, q));
    summary.insert("rollout_mse", quart(rows.iter().map(|r| r.rollout_mse).collect()));
    summary.insert("energy_delta_final", quart(rows.iter().map(|r| r.energy_delta_final).collect()));
    summary.insert("energy_delta_mean", quart(rows.iter().map(|r| r.energy_delta_mean).collect()));
    summary.insert("mped_terminal", quart(rows.iter().map(|r| r.mped_terminal).collect()));
    if rows.iter().all(|r| r.one_step_mse.is_some()) {
        summary.insert("one_step_mse", quart(rows.iter().filter_map(|r| r.one_step_mse).collect()));
    }
    run.write_json("metrics/eval_quartiles.json", &summary)?;
    for (k, q) in &summary {
        println!("{k}: median {:.6e} [q1 {:.3e}, q3 {:.3e}]", q[2], q[1], q[3]);
    }
    run.finish("eval", a)
}

pub fn sensitivity(a: &SensitivityArgs) -> Result<()> {
    let report: SensitivityReport = match (&a.report, &a.before, &a.after) {
        (Some(p), _, _) => read_json(p)?,
        (None, Some(b), Some(f)) => {
            let before = Gns::load(b)?;
            let after = Gns::load(f)?;
            SensitivityReport::from_params(&[], &before.params, &after.params)?
        }
        _ => bail!("give --report or both --before and --after"),
    };
    let mut run = RunDir::create(&a.out)?;
    run.write_text("metrics/update_cdf.csv", &report.to_csv())?;
    let conc = report.concentration(0.85);
    run.write_json(
        "metrics/concentration.json",
        &serde_json::json!({ "share": 0.85, "fraction_of_parameters": conc }),
    )?;
    println!("{:.2}% of parameters carry 85% of the update magnitude", 100.0 * conc);
    run.finish("sensitivity", a)
}

pub fn invert(a: &InvertArgs) -> Result<()> {
    let cfg = BoConfig {
        bounds: [a.bounds[0], a.bounds[1]],
        n_init: a.n_init,
        max_iters: a.max_iters,
        tolerance: a.tolerance,
        seed: a.seed,
    };
    cfg.validate()?;
    let model = Gns::load(&a.checkpoint)?;
    let film = model
        .film_config()
        .ok_or_else(|| anyhow!("{} has no FiLM generators", a.checkpoint.display()))?
        .clone();
    let family: ParamFamily = a.param.into();
    if film.family != family {
        bail!("checkpoint is conditioned on {:?}, not {family:?}", film.family);
    }
    let observed = read_trajectory(&a.observed)?;
    let raw = |c: f64| match family {
        ParamFamily::Friction => c.to_radians().tan(),
        ParamFamily::Cohesion => c,
    };
    let trace = run_bo(
        |c| {
            let k = normalize_kappa(raw(c), film.bounds)?;
            rollout_mped(&model.predictor(Some(k)), &observed)
        },
        &cfg,
    )?;
    let mut run = RunDir::create(&a.out)?;
    run.write_json("metrics/bo_trace.json", &trace)?;
    run.write_text("metrics/bo_trace.csv", &trace.to_csv())?;
    println!(
        "best {:?} = {:.6} (loss {:.6e}) after {} evaluations",
        family,
        trace.best_param,
        trace.best_loss,
        trace.n_evaluations()
    );
    run.finish("invert", a)
}

pub fn pca(a: &PcaArgs) -> Result<()> {
    if a.n_kappa < a.components + 1 {
        bail!("--n-kappa must exceed --components");
    }
    let model = Gns::load(&a.checkpoint)?;
    let probe = read_trajectory(&a.probe)?;
    let frames = default_probe_frames(&probe, model.features.velocity_history_len, a.probe_frames);
    let kappas: Vec<f64> = (0..a.n_kappa)
        .map(|i| a.kappa_min + (a.kappa_max - a.kappa_min) * i as f64 / (a.n_kappa - 1).max(1) as f64)
        .collect();
    let sweeps = collect_film_sweep(&model, &kappas, &probe, &frames)?;
    let mut run = RunDir::create(&a.out)?;
    let mut variance = String::new();
    let mut paths = BTreeMap::new();
    for m in &sweeps {
        let p = run_pca(&m.rows, a.components)?;
        run.write_text(&format!("metrics/pca_{}.csv", m.label), &sweep_csv(m, &p))?;
        let v = variance_csv(&m.label, &p);
        if variance.is_empty() {
            variance.push_str(&v);
        } else {
            variance.push_str(v.split_once('\n').map_or("", |x| x.1));
        }
        let path = sweep_path(&m.row_keys, &p.projections);
        println!(
            "{}: explained {:?}, path length {:.4e}, max jump {:.4e}",
            m.label, p.explained_ratio, path.path_length, path.max_jump
        );
        paths.insert(m.label.clone(), path);
    }
    run.write_text("metrics/pca_variance.csv", &variance)?;
    run.write_json("metrics/pca_paths.json", &paths)?;
    run.finish("pca", a)
}
