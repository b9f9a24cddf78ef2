//! Rollout error, energy diagnostics, MPED and runout kinematics.

use serde::{Deserialize, Serialize};

use crate::dataio::Trajectory;
use crate::error::{Error, Result};

fn same_shape(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.n_particles != b.n_particles {
        return Err(Error::Shape {
            context: "trajectory particles",
            expected: b.n_particles,
            actual: a.n_particles,
        });
    }
    if a.n_frames != b.n_frames {
        return Err(Error::Shape {
            context: "trajectory frames",
            expected: b.n_frames,
            actual: a.n_frames,
        });
    }
    Ok(())
}

/// Mean squared position error per coordinate pair, i.e. mean over frames
/// and particles of `|x_pred - x_true|^2`.
pub fn rollout_mse(pred: &Trajectory, truth: &Trajectory) -> Result<f64> {
    same_shape(pred, truth)?;
    let n = (pred.n_frames * pred.n_particles) as f64;
    let sum: f64 = pred
        .positions
        .chunks_exact(2)
        .zip(truth.positions.chunks_exact(2))
        .map(|(a, b)| {
            let dx = a[0] as f64 - b[0] as f64;
            let dy = a[1] as f64 - b[1] as f64;
            dx * dx + dy * dy
        })
        .sum();
    Ok(sum / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
    pub e0: f64,
}

/// Energies per frame for equal particle masses. Velocities are backward
/// differences; the first frame is taken at rest.
pub fn energy_series(t: &Trajectory, particle_mass: f64, g: f64) -> Result<EnergySeries> {
    if t.n_frames < 2 {
        return Err(Error::Shape {
            context: "energy series frames",
            expected: 2,
            actual: t.n_frames,
        });
    }
    let mut kinetic = Vec::with_capacity(t.n_frames);
    let mut potential = Vec::with_capacity(t.n_frames);
    for f in 0..t.n_frames {
        let cur = t.frame(f);
        potential.push(particle_mass * g * cur.chunks_exact(2).map(|p| p[1] as f64).sum::<f64>());
        if f == 0 {
            kinetic.push(0.0);
            continue;
        }
        let prev = t.frame(f - 1);
        let v2: f64 = cur
            .iter()
            .zip(prev)
            .map(|(&a, &b)| {
                let v = (a as f64 - b as f64) / t.dt_s;
                v * v
            })
            .sum();
        kinetic.push(0.5 * particle_mass * v2);
    }
    let e0 = potential[0];
    Ok(EnergySeries {
        kinetic,
        potential,
        e0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyDelta {
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
}

/// `|E_pred - E_true| / E_0` per frame, with `E_0` from the reference.
pub fn energy_delta_norm(pred: &EnergySeries, truth: &EnergySeries) -> Result<EnergyDelta> {
    if pred.kinetic.len() != truth.kinetic.len() {
        return Err(Error::Shape {
            context: "energy series length",
            expected: truth.kinetic.len(),
            actual: pred.kinetic.len(),
        });
    }
    if !(truth.e0 > 0.0) {
        return Err(Error::Invalid("reference E_0 must be positive".into()));
    }
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs() / truth.e0).collect();
    Ok(EnergyDelta {
        kinetic: d(&pred.kinetic, &truth.kinetic),
        potential: d(&pred.potential, &truth.potential),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MpedVariant {
    /// `max_{i,j} |x_i - y_j|`, nonzero even for identical sets.
    Literal,
    /// `max_i |x_i - y_i|`.
    #[default]
    Matched,
}

pub fn mped(x: &[[f64; 2]], y: &[[f64; 2]], variant: MpedVariant) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Invalid("mped of an empty point set".into()));
    }
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    Ok(match variant {
        MpedVariant::Literal => x
            .iter()
            .flat_map(|a| y.iter().map(move |b| dist(a, b)))
            .fold(0.0, f64::max),
        MpedVariant::Matched => {
            if x.len() != y.len() {
                return Err(Error::Shape {
                    context: "matched mped",
                    expected: y.len(),
                    actual: x.len(),
                });
            }
            x.iter().zip(y).map(|(a, b)| dist(a, b)).fold(0.0, f64::max)
        }
    })
}

/// Linear-interpolated percentile `q` in [0, 1].
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunoutSeries {
    /// `L(t) / L(0)`
    pub runout: Vec<f64>,
    /// `H(t) / H(0)`
    pub height: Vec<f64>,
}

/// 99th-percentile front position past the column's left edge, and
/// 99th-percentile height, normalized by their frame-0 values.
pub fn runout_height(t: &Trajectory) -> Result<RunoutSeries> {
    let left = t.initial_column_m[0];
    let mut runout = Vec::with_capacity(t.n_frames);
    let mut height = Vec::with_capacity(t.n_frames);
    for f in 0..t.n_frames {
        let fr = t.frame(f);
        let mut xs: Vec<f64> = fr.chunks_exact(2).map(|p| p[0] as f64 - left).collect();
        let mut ys: Vec<f64> = fr.chunks_exact(2).map(|p| p[1] as f64).collect();
        runout.push(percentile(&mut xs, 0.99));
        height.push(percentile(&mut ys, 0.99));
    }
    let (l0, h0) = (runout[0], height[0]);
    if !(l0 > 0.0) || !(h0 > 0.0) {
        return Err(Error::Invalid("initial runout and height must be positive".into()));
    }
    Ok(RunoutSeries {
        runout: runout.iter().map(|l| l / l0).collect(),
        height: height.iter().map(|h| h / h0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(frames: Vec<Vec<[f32; 2]>>, dt: f64) -> Trajectory {
        let n = frames[0].len();
        let t = frames.len();
        let pos = frames.into_iter().flatten().flatten().collect();
        // struct literal: fixtures may be shorter than a stored trajectory
        Trajectory {
            n_frames: t,
            n_particles: n,
            positions: pos,
            dt_s: dt,
            domain_size_m: [2.0, 2.0],
            material: Default::default(),
            initial_column_m: [0.0, 0.0, 1.0, 1.0],
            seed: 0,
        }
    }

    #[test]
    fn rollout_mse_cases() {
        let a = traj(vec![vec![[0.0, 0.0], [1.0, 1.0]], vec![[0.5, 0.5], [1.5, 1.0]]], 0.1);
        assert_eq!(rollout_mse(&a, &a).unwrap(), 0.0);
        let shifted = traj(vec![vec![[0.25, 0.0], [1.25, 1.0]], vec![[0.75, 0.5], [1.75, 1.0]]], 0.1);
        assert_eq!(rollout_mse(&shifted, &a).unwrap(), 0.0625);
        // hand: errors (0,0),(0.5,0) / (0,0.5),(0.5,0.5) -> (0 + .25 + .25 + .5) / 4
        let b = traj(vec![vec![[0.0, 0.0], [1.5, 1.0]], vec![[0.5, 1.0], [2.0, 1.5]]], 0.1);
        assert_eq!(rollout_mse(&b, &a).unwrap(), 0.25);
        let short = traj(vec![vec![[0.0, 0.0], [1.0, 1.0]]], 0.1);
        assert!(rollout_mse(&short, &a).is_err());
    }

    #[test]
    fn energies() {
        let rest = traj(vec![vec![[0.5, 0.0]; 3]; 4], 0.1);
        let e = energy_series(&rest, 2.0, 9.81).unwrap();
        assert!(e.kinetic.iter().chain(&e.potential).all(|v| *v == 0.0));
        let one = traj(vec![vec![[0.0, 1.0]], vec![[0.0, 0.5]]], 0.5);
        let e = energy_series(&one, 1.0, 9.81).unwrap();
        assert_eq!(e.potential[0], 9.81);
        assert_eq!(e.e0, 9.81);
        // v = 1 m/s
        assert_eq!(e.kinetic[1], 0.5);
    }

    #[test]
    fn energy_delta_fixture() {
        let truth = EnergySeries {
            kinetic: vec![0.0, 2.0, 1.0],
            potential: vec![10.0, 7.0, 6.0],
            e0: 10.0,
        };
        let pred = EnergySeries {
            kinetic: vec![0.0, 3.0, 0.5],
            potential: vec![10.0, 6.0, 6.5],
            e0: 10.0,
        };
        let d = energy_delta_norm(&pred, &truth).unwrap();
        assert_eq!(d.kinetic, vec![0.0, 0.1, 0.05]);
        assert_eq!(d.potential, vec![0.0, 0.1, 0.05]);
    }

    #[test]
    fn mped_cases() {
        let x = [[0.0, 0.0], [1.0, 0.0]];
        assert_eq!(mped(&x, &x, MpedVariant::Matched).unwrap(), 0.0);
        assert_eq!(mped(&x, &x, MpedVariant::Literal).unwrap(), 1.0);
        for v in [MpedVariant::Literal, MpedVariant::Matched] {
            assert_eq!(mped(&[[0.0, 0.0]], &[[3.0, 4.0]], v).unwrap(), 5.0);
        }
        assert!(mped(&[], &x, MpedVariant::Literal).is_err());
        assert!(mped(&x, &x[..1], MpedVariant::Matched).is_err());
    }

    #[test]
    fn runout_cases() {
        let still = traj(vec![vec![[0.2, 0.5], [0.8, 1.0], [0.5, 0.1]]; 3], 0.1);
        let r = runout_height(&still).unwrap();
        assert_eq!(r.runout, vec![1.0; 3]);
        assert_eq!(r.height, vec![1.0; 3]);
        // one particle moves from x=0.8 to x=1.6; p99 of {0.2,0.5,1.6}
        // = 0.5 + 0.98 * 1.1 = 1.578 vs 0.5 + 0.98 * 0.3 = 0.794
        let moved = traj(
            vec![
                vec![[0.2, 0.5], [0.8, 1.0], [0.5, 0.1]],
                vec![[0.2, 0.5], [1.6, 1.0], [0.5, 0.1]],
            ],
            0.1,
        );
        let r = runout_height(&moved).unwrap();
        assert!((r.runout[1] - 1.578 / 0.794).abs() < 1e-6);
        assert_eq!(r.height, vec![1.0, 1.0]);
    }
}
