//! Trajectory files, dataset manifests and finite-difference supervision.
//!
//! Binary layout (little endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `GNST` |
//! | 2     | version `u16 = 1` |
//! | 12    | `u32` frames T, particles N, dimension D = 2 |
//! | 12    | `f32` dt, domain width, domain height |
//! | 20    | `f32` friction angle (deg), cohesion (kPa), E (Pa), nu, density |
//! | 16    | `f32` initial column x, y, w, h |
//! | 8     | `u64` seed |
//!
//! followed by `T * N * 2` `f32` positions, frame-major then particle-major.
//! The tension cutoff is not part of the record; readers fill in the default.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpm::MaterialParams;

pub const MAGIC: &[u8; 4] = b"GNST";
pub const VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 4 + 2 + 3 * 4 + 3 * 4 + 5 * 4 + 4 * 4 + 8;

/// Particle position time series plus the metadata needed to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n_frames: usize,
    pub n_particles: usize,
    /// `[T][N][2]` flattened, metres.
    pub positions: Vec<f32>,
    pub dt_s: f64,
    pub domain_size_m: [f64; 2],
    pub material: MaterialParams,
    /// Column `(x, y, w, h)` at t = 0.
    pub initial_column_m: [f64; 4],
    pub seed: u64,
}

fn q32(v: f64) -> f64 {
    v as f32 as f64
}

impl Trajectory {
    /// Builds a trajectory, rounding header values to the precision they
    /// have on disk so that a write/read cycle is the identity.
    pub fn new(
        positions: Vec<f32>,
        n_frames: usize,
        n_particles: usize,
        dt_s: f64,
        domain_size_m: [f64; 2],
        material: MaterialParams,
        initial_column_m: [f64; 4],
        seed: u64,
    ) -> Result<Self> {
        let mut material = material;
        material.friction_angle_deg = q32(material.friction_angle_deg);
        material.cohesion_kpa = q32(material.cohesion_kpa);
        material.youngs_modulus_pa = q32(material.youngs_modulus_pa);
        material.poisson_ratio = q32(material.poisson_ratio);
        material.density_kg_m3 = q32(material.density_kg_m3);
        let t = Self {
            n_frames,
            n_particles,
            positions,
            dt_s: q32(dt_s),
            domain_size_m: domain_size_m.map(q32),
            material,
            initial_column_m: initial_column_m.map(q32),
            seed,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.n_frames * self.n_particles * 2;
        if self.positions.len() != expected {
            return Err(Error::Shape {
                context: "trajectory positions",
                expected,
                actual: self.positions.len(),
            });
        }
        if self.n_frames < 3 {
            return Err(Error::config("n_frames", "a trajectory needs at least 3 frames"));
        }
        if !(self.dt_s > 0.0) {
            return Err(Error::config("dt_s", "must be > 0"));
        }
        let [w, h] = self.domain_size_m;
        // f32 rounding of clamped positions can sit a hair outside the walls.
        let slack = 1e-5 * w.max(h);
        for (k, p) in self.positions.chunks_exact(2).enumerate() {
            let (x, y) = (p[0] as f64, p[1] as f64);
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::NonFinite {
                    step: k / self.n_particles.max(1),
                });
            }
            if x < -slack || x > w + slack || y < -slack || y > h + slack {
                return Err(Error::Invalid(format!(
                    "particle {} at frame {} lies outside the domain: ({x}, {y})",
                    k % self.n_particles.max(1),
                    k / self.n_particles.max(1)
                )));
            }
        }
        Ok(())
    }

    /// Positions of frame `t` as `[N][2]`.
    pub fn frame(&self, t: usize) -> &[f32] {
        let stride = self.n_particles * 2;
        &self.positions[t * stride..(t + 1) * stride]
    }

    pub fn initial_height(&self) -> f64 {
        self.initial_column_m[3]
    }

    /// Frames `[start, end)` as a new trajectory with identical metadata.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        let stride = self.n_particles * 2;
        let end = end.min(self.n_frames);
        let t = Self {
            n_frames: end.saturating_sub(start),
            positions: self.positions[start * stride..end * stride].to_vec(),
            ..self.clone()
        };
        t.validate()?;
        Ok(t)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::format(path, "unexpected EOF")
        } else {
            Error::io(path, e)
        }
    })
}

/// Serializes a trajectory to its byte representation.
pub fn encode_trajectory(t: &Trajectory) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + t.positions.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [t.n_frames as u32, t.n_particles as u32, 2u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let m = &t.material;
    let floats = [
        t.dt_s,
        t.domain_size_m[0],
        t.domain_size_m[1],
        m.friction_angle_deg,
        m.cohesion_kpa,
        m.youngs_modulus_pa,
        m.poisson_ratio,
        m.density_kg_m3,
        t.initial_column_m[0],
        t.initial_column_m[1],
        t.initial_column_m[2],
        t.initial_column_m[3],
    ];
    for v in floats {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&t.seed.to_le_bytes());
    for p in &t.positions {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn write_trajectory(t: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_trajectory(t))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_trajectory(BufReader::new(file), path)
}

/// Parses a trajectory from any reader; `path` only labels errors.
pub fn decode_trajectory(mut r: impl Read, path: &Path) -> Result<Trajectory> {
    let mut header = [0u8; HEADER_BYTES];
    read_exact(&mut r, &mut header, path)?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic, not a GNST trajectory"));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let f32_at = |o: usize| f32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as f64;
    let (n_frames, n_particles, dim) = (u32_at(6), u32_at(10), u32_at(14));
    if dim != 2 {
        return Err(Error::format(path, format!("dimension {dim} unsupported")));
    }
    let f: Vec<f64> = (0..12).map(|i| f32_at(18 + 4 * i)).collect();
    let seed = u64::from_le_bytes(header[66..74].try_into().unwrap());

    let count = n_frames
        .checked_mul(n_particles)
        .and_then(|v| v.checked_mul(2))
        .ok_or_else(|| Error::format(path, "header sizes overflow"))?;
    let mut bytes = vec![0u8; count * 4];
    read_exact(&mut r, &mut bytes, path)?;
    let positions = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let material = MaterialParams {
        friction_angle_deg: f[3],
        cohesion_kpa: f[4],
        youngs_modulus_pa: f[5],
        poisson_ratio: f[6],
        density_kg_m3: f[7],
        ..MaterialParams::default()
    };
    let t = Trajectory {
        n_frames,
        n_particles,
        positions,
        dt_s: f[0],
        domain_size_m: [f[1], f[2]],
        material,
        initial_column_m: [f[8], f[9], f[10], f[11]],
        seed,
    };
    t.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(t)
}

/// Per-frame velocities and accelerations from backward/forward differences.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub n_frames: usize,
    pub n_particles: usize,
    /// `v_t = (x_t - x_{t-1}) / dt`, defined for frames `1..T`; frame 0 is zero.
    pub velocities: Vec<f64>,
    /// `a_t = (v_{t+1} - v_t) / dt`, defined for frames `1..T-1`; others zero.
    pub accelerations: Vec<f64>,
}

impl Kinematics {
    pub fn velocity(&self, t: usize) -> &[f64] {
        let s = self.n_particles * 2;
        &self.velocities[t * s..(t + 1) * s]
    }

    pub fn acceleration(&self, t: usize) -> &[f64] {
        let s = self.n_particles * 2;
        &self.accelerations[t * s..(t + 1) * s]
    }

    /// Frames with a valid acceleration target.
    pub fn target_frames(&self) -> std::ops::Range<usize> {
        1..self.n_frames - 1
    }
}

pub fn finite_difference_kinematics(t: &Trajectory) -> Result<Kinematics> {
    if t.n_frames < 3 {
        return Err(Error::config(
            "n_frames",
            format!("need at least 3 frames for accelerations, got {}", t.n_frames),
        ));
    }
    let s = t.n_particles * 2;
    let dt = t.dt_s;
    let mut velocities = vec![0.0; t.n_frames * s];
    for f in 1..t.n_frames {
        let (prev, cur) = (t.frame(f - 1), t.frame(f));
        for k in 0..s {
            velocities[f * s + k] = (cur[k] as f64 - prev[k] as f64) / dt;
        }
    }
    let mut accelerations = vec![0.0; t.n_frames * s];
    for f in 1..t.n_frames - 1 {
        for k in 0..s {
            accelerations[f * s + k] = (velocities[(f + 1) * s + k] - velocities[f * s + k]) / dt;
        }
    }
    Ok(Kinematics {
        n_frames: t.n_frames,
        n_particles: t.n_particles,
        velocities,
        accelerations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Pretrain,
    Adapt,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamFamily {
    Friction,
    Cohesion,
}

impl ParamFamily {
    /// Raw value of this family's parameter for `mat`, in the units the
    /// conditioning is normalized in (tan(phi), or c in kPa).
    pub fn raw_value(&self, mat: &MaterialParams) -> f64 {
        match self {
            ParamFamily::Friction => mat.friction_rad().tan(),
            ParamFamily::Cohesion => mat.cohesion_kpa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaBounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub material: MaterialParams,
    pub role: Role,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Normalization bounds per parameter family, in raw units.
    #[serde(default)]
    pub kappa_bounds: std::collections::BTreeMap<ParamFamily, KappaBounds>,
}

impl DatasetManifest {
    pub fn push(&mut self, path: impl Into<PathBuf>, material: MaterialParams, role: Role) {
        self.entries.push(ManifestEntry {
            path: path.into(),
            material,
            role,
        });
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }

    /// Sets the bounds of every family from the adapt-role materials
    /// (falling back to all entries when there are none).
    pub fn compute_kappa_bounds(&mut self) {
        let adapt: Vec<MaterialParams> =
            self.with_role(Role::Adapt).map(|e| e.material).collect();
        let pool: Vec<MaterialParams> = if adapt.is_empty() {
            self.entries.iter().map(|e| e.material).collect()
        } else {
            adapt
        };
        self.kappa_bounds.clear();
        for fam in [ParamFamily::Friction, ParamFamily::Cohesion] {
            let vals = pool.iter().map(|m| fam.raw_value(m));
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
            if lo.is_finite() && hi > lo {
                self.kappa_bounds.insert(fam, KappaBounds { min: lo, max: hi });
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(&e.path) {
                return Err(Error::config(
                    "entries",
                    format!("{} listed twice", e.path.display()),
                ));
            }
        }
        for (fam, b) in &self.kappa_bounds {
            if !(b.min < b.max) {
                return Err(Error::config(
                    "kappa_bounds",
                    format!("{fam:?} bounds are degenerate"),
                ));
            }
            for e in self.with_role(Role::Adapt) {
                let v = fam.raw_value(&e.material);
                if v < b.min - 1e-9 || v > b.max + 1e-9 {
                    return Err(Error::config(
                        "kappa_bounds",
                        format!("{fam:?} bounds do not cover {}", e.path.display()),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    /// Entry paths resolved against the manifest's own directory.
    pub fn resolve(&self, manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(&entry.path)
        }
    }
}
