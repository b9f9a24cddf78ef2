use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gns_core::dataio::{read_trajectory, DatasetManifest, ParamFamily, Role, Trajectory};
use gns_core::mpm::MaterialParams;
use gns_core::sampling::select_window;
use gns_core::training::{EpochLog, TrainConfig};
use serde::Serialize;

use crate::{FamilyArg, RoleArg, TrainCommon};

pub const GRAVITY: f64 = 9.81;

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Pretrain => Role::Pretrain,
            RoleArg::Adapt => Role::Adapt,
            RoleArg::Test => Role::Test,
        }
    }
}

impl From<FamilyArg> for ParamFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Friction => ParamFamily::Friction,
            FamilyArg::Cohesion => ParamFamily::Cohesion,
        }
    }
}

/// `a..b` (inclusive) or a single integer.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse::<u64>()?, b.trim().parse::<u64>()?),
        None => {
            let v = s.trim().parse::<u64>()?;
            (v, v)
        }
    };
    if b < a {
        bail!("--seeds: empty range {s}");
    }
    Ok((a..=b).collect())
}

/// `key=value` pairs over the pretraining material, or a JSON file.
pub fn parse_material(spec: &str) -> Result<MaterialParams> {
    let mat = if spec.ends_with(".json") {
        let text = fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {spec}"))?
    } else {
        let mut m = MaterialParams::default();
        for kv in spec.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow!("--material: expected key=value, got {kv:?}"))?;
            let v: f64 = v.trim().parse().with_context(|| format!("--material: bad number in {kv:?}"))?;
            match k.trim() {
                "friction" | "phi" => m.friction_angle_deg = v,
                "cohesion" | "c" => m.cohesion_kpa = v,
                "youngs" | "E" => m.youngs_modulus_pa = v,
                "poisson" | "nu" => m.poisson_ratio = v,
                "density" | "rho" => m.density_kg_m3 = v,
                "tension" => m.tension_cutoff_kpa = v,
                other => bail!("--material: unknown key {other:?}"),
            }
        }
        m
    };
    mat.validate()?;
    Ok(mat)
}

pub fn material_tag(m: &MaterialParams) -> String {
    format!("phi{}_c{}", m.friction_angle_deg, m.cohesion_kpa)
}

/// `--data` may name the manifest or the dataset directory holding it.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.json")
    } else {
        p.to_path_buf()
    }
}

/// Trajectories of one role, in manifest order.
pub fn load_role(data: &Path, role: Role) -> Result<Vec<Trajectory>> {
    let manifest = &manifest_path(data);
    let m = DatasetManifest::load(manifest)?;
    let out: Vec<Trajectory> = m
        .with_role(role)
        .map(|e| read_trajectory(m.resolve(manifest, e)).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        bail!("{} lists no {role:?} trajectories", manifest.display());
    }
    Ok(out)
}

pub fn window_all(trajs: Vec<Trajectory>, multiple: Option<f64>, history_len: usize) -> Result<Vec<Trajectory>> {
    match multiple {
        None => Ok(trajs),
        Some(m) => trajs
            .iter()
            .map(|t| select_window(t, m, history_len, GRAVITY).map_err(Into::into))
            .collect(),
    }
}

pub fn train_config(c: &TrainCommon) -> Result<TrainConfig> {
    let mut cfg = match &c.train_config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = c.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = c.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = c.samples_per_epoch {
        cfg.samples_per_epoch = Some(v);
    }
    if let Some(v) = c.lr {
        cfg.lr_init = v;
    }
    if let Some(v) = c.noise {
        cfg.noise_rel = v;
    }
    cfg.seed = c.seed;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T> {
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

/// Mass per particle from the recorded column and density.
pub fn particle_mass(t: &Trajectory) -> f64 {
    let [_, _, w, h] = t.initial_column_m;
    t.material.density_kg_m3 * w * h / t.n_particles as f64
}

/// Output layout: `manifest.json`, `checkpoints/`, `metrics/`, `logs/`.
pub struct RunDir {
    pub root: PathBuf,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct RunManifest<'a, A: Serialize> {
    command: &'a str,
    args: &'a A,
    outputs: &'a [String],
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["checkpoints", "metrics", "logs"] {
            fs::create_dir_all(root.join(sub)).with_context(|| format!("creating {}", root.display()))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&mut self, rel: &str) -> PathBuf {
        self.outputs.push(rel.to_string());
        self.root.join(rel)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, v: &T) -> Result<()> {
        self.write_text(rel, &(serde_json::to_string_pretty(v)? + "\n"))
    }

    pub fn finish<A: Serialize>(mut self, command: &str, args: &A) -> Result<()> {
        self.outputs.sort();
        self.outputs.dedup();
        let m = RunManifest {
            command,
            args,
            outputs: &self.outputs,
        };
        let p = self.root.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&m)? + "\n").with_context(|| format!("writing {}", p.display()))
    }
}

/// Line-delimited JSON epoch log.
pub struct JsonlLog {
    file: fs::File,
    pub error: Option<std::io::Error>,
}

impl JsonlLog {
    pub fn create(p: &Path) -> Result<Self> {
        Ok(Self {
            file: fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            error: None,
        })
    }

    pub fn record(&mut self, e: &EpochLog) {
        let line = serde_json::to_string(e).expect("epoch log serializes");
        if let Err(err) = writeln!(self.file, "{line}") {
            self.error.get_or_insert(err);
        }
    }
}

pub fn epochs_csv(history: &[EpochLog]) -> String {
    let mut s = String::from("epoch,split,loss,lr\n");
    for e in history {
        s.push_str(&format!("{},{},{},{}\n", e.epoch, e.split, e.loss, e.lr));
    }
    s
}
