//! One-dimensional Bayesian optimization for material parameter
//! identification: a squared-exponential GP surrogate of the loss and an
//! expected-improvement acquisition on a fixed grid.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::dataio::Trajectory;
use crate::error::{Error, Result};
use crate::gns::{rollout, Predictor};
use crate::metrics::{mped, MpedVariant};

/// Loss recorded when a candidate's rollout blows up.
pub const SENTINEL_LOSS: f64 = 1.0e3;
pub const EI_XI: f64 = 0.01;
pub const GRID_POINTS: usize = 256;
const LENGTH_FACTORS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
const NOISE_FACTORS: [f64; 3] = [1e-6, 1e-4, 1e-2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoConfig {
    pub bounds: [f64; 2],
    #[serde(default = "d_init")]
    pub n_init: usize,
    /// Total objective evaluations, initial samples included.
    #[serde(default = "d_iters")]
    pub max_iters: usize,
    #[serde(default = "d_tol")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
}

fn d_init() -> usize {
    3
}
fn d_iters() -> usize {
    20
}
fn d_tol() -> f64 {
    1e-4
}

impl BoConfig {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            bounds: [lo, hi],
            n_init: d_init(),
            max_iters: d_iters(),
            tolerance: d_tol(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config("bounds", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if self.n_init < 2 {
            return Err(Error::config("n_init", "must be >= 2"));
        }
        if self.max_iters < self.n_init {
            return Err(Error::config("max_iters", "must be >= n_init"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let [lo, hi] = self.bounds;
        (0..GRID_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
            .collect()
    }
}

/// Exact GP regression on standardized targets.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    pub length_scale: f64,
    /// Observation noise variance including jitter, in target units squared.
    pub noise: f64,
    pub log_marginal_likelihood: f64,
    pub jitter: f64,
    x: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
}

fn se(a: f64, b: f64, l: f64) -> f64 {
    (-(a - b).powi(2) / (2.0 * l * l)).exp()
}

impl GpPosterior {
    /// Fixed hyperparameters; `noise` is relative to the target variance.
    pub fn with_hyper(x: &[f64], y: &[f64], length_scale: f64, noise_rel: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Shape {
                context: "gp targets",
                expected: x.len(),
                actual: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::Invalid("gp_fit needs at least 2 points".into()));
        }
        let n = x.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));
        let mut jitter = 1e-8;
        loop {
            let k = DMatrix::from_fn(n, n, |i, j| {
                se(x[i], x[j], length_scale) + if i == j { noise_rel + jitter } else { 0.0 }
            });
            if let Some(c) = k.cholesky() {
                let alpha = c.solve(&ys);
                let l = c.l();
                let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
                let lml = -0.5 * ys.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                return Ok(Self {
                    length_scale,
                    noise: (noise_rel + jitter) * y_scale * y_scale,
                    log_marginal_likelihood: lml,
                    jitter,
                    x: x.to_vec(),
                    y_mean,
                    y_scale,
                    chol: l,
                    alpha,
                });
            }
            jitter *= 10.0;
            if jitter > 1e-4 * (1.0 + 1e-9) {
                return Err(Error::Invalid("GP kernel matrix is singular even with 1e-4 jitter".into()));
            }
        }
    }

    /// Latent mean and variance at `x`.
    pub fn predict(&self, x: f64) -> (f64, f64) {
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| se(*xi, x, self.length_scale)));
        let mean = ks.dot(&self.alpha);
        let v = self
            .chol
            .solve_lower_triangular(&ks)
            .expect("cholesky factor has a positive diagonal");
        let var = (1.0 - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, var * self.y_scale * self.y_scale)
    }
}

/// Maximum-likelihood hyperparameters over the length-scale and noise grid.
pub fn gp_fit(x: &[f64], y: &[f64], bounds: [f64; 2]) -> Result<GpPosterior> {
    let range = bounds[1] - bounds[0];
    let mut best: Option<GpPosterior> = None;
    let mut last_err = None;
    for lf in LENGTH_FACTORS {
        for nf in NOISE_FACTORS {
            match GpPosterior::with_hyper(x, y, lf * range, nf) {
                Ok(gp) => {
                    if best
                        .as_ref()
                        .is_none_or(|b| gp.log_marginal_likelihood > b.log_marginal_likelihood)
                    {
                        best = Some(gp);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Invalid("gp_fit failed".into())))
}

/// Expected improvement below `best` for minimization.
pub fn expected_improvement(mean: f64, var: f64, best: f64, xi: f64) -> f64 {
    let imp = best - mean - xi;
    let sd = var.max(0.0).sqrt();
    if sd == 0.0 {
        return imp.max(0.0);
    }
    let z = imp / sd;
    let n = Normal::new(0.0, 1.0).unwrap();
    imp * n.cdf(z) + sd * n.pdf(z)
}

/// Next query point: EI argmax on the grid, or a uniform draw when the
/// posterior offers no improvement anywhere.
pub fn propose(gp: &GpPosterior, best: f64, cfg: &BoConfig, rng: &mut ChaCha8Rng) -> f64 {
    let mut arg = None;
    let mut top = 0.0;
    let mut any_var = false;
    for c in cfg.grid() {
        let (m, v) = gp.predict(c);
        any_var |= v > 0.0;
        let ei = expected_improvement(m, v, best, EI_XI);
        if ei > top {
            top = ei;
            arg = Some(c);
        }
    }
    match arg {
        Some(c) if any_var => c,
        _ => rng.gen_range(cfg.bounds[0]..=cfg.bounds[1]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoStep {
    pub iteration: usize,
    pub param: f64,
    pub loss: f64,
    pub best_so_far: f64,
    pub sentinel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub steps: Vec<BoStep>,
    pub best_param: f64,
    pub best_loss: f64,
}

impl BoTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,param,loss,best_so_far,sentinel\n");
        for st in &self.steps {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                st.iteration, st.param, st.loss, st.best_so_far, st.sentinel
            ));
        }
        s
    }

    pub fn n_evaluations(&self) -> usize {
        self.steps.len()
    }
}

/// Minimizes `objective` over `cfg.bounds`.
pub fn run_bo(mut objective: impl FnMut(f64) -> Result<f64>, cfg: &BoConfig) -> Result<BoTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init: Vec<f64> = (0..cfg.n_init)
        .map(|_| rng.gen_range(cfg.bounds[0]..=cfg.bounds[1]))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut steps: Vec<BoStep> = Vec::new();
    let mut best = (f64::NAN, f64::INFINITY);
    for it in 0..cfg.max_iters {
        let c = if it < cfg.n_init {
            init[it]
        } else {
            let gp = gp_fit(&xs, &ys, cfg.bounds)?;
            propose(&gp, best.1, cfg, &mut rng)
        };
        let raw = objective(c)?;
        let sentinel = !raw.is_finite() || raw >= SENTINEL_LOSS;
        let loss = if sentinel { SENTINEL_LOSS } else { raw };
        if loss < best.1 {
            best = (c, loss);
        }
        xs.push(c);
        ys.push(loss);
        steps.push(BoStep {
            iteration: it,
            param: c,
            loss,
            best_so_far: best.1,
            sentinel,
        });
        if best.1 < cfg.tolerance {
            break;
        }
    }
    Ok(BoTrace {
        steps,
        best_param: best.0,
        best_loss: best.1,
    })
}

/// Matched MPED between the terminal observed frame and a rollout seeded
/// from the observed initial frames. A non-finite rollout gives
/// [`SENTINEL_LOSS`].
pub fn rollout_mped(predictor: &impl Predictor, observed: &Trajectory) -> Result<f64> {
    let w = predictor.history_len();
    if observed.n_frames <= w {
        return Err(Error::Shape {
            context: "observed frames",
            expected: w + 1,
            actual: observed.n_frames,
        });
    }
    let r = match rollout(predictor, observed, observed.n_frames - w) {
        Ok(r) => r,
        Err(Error::NonFinite { .. }) => return Ok(SENTINEL_LOSS),
        Err(e) => return Err(e),
    };
    let pts = |f: &[f64]| f.chunks_exact(2).map(|p| [p[0], p[1]]).collect::<Vec<_>>();
    let obs = observed.frame(observed.n_frames - 1);
    let obs: Vec<[f64; 2]> = obs.chunks_exact(2).map(|p| [p[0] as f64, p[1] as f64]).collect();
    mped(&pts(r.frame(r.n_frames - 1)), &obs, MpedVariant::Matched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpm::MaterialParams;

    #[test]
    fn ei_closed_form() {
        let ei = expected_improvement(0.0, 1.0, 0.0, 0.0);
        assert!((ei - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert_eq!(expected_improvement(0.5, 0.0, 0.3, EI_XI), 0.0);
        assert_eq!(expected_improvement(0.3, 0.0, 0.3, 0.0), 0.0);
        let mut prev = 0.0;
        for v in [0.01, 0.1, 1.0, 4.0] {
            let e = expected_improvement(0.2, v, 0.1, EI_XI);
            assert!(e > prev);
            prev = e;
        }
    }

    // Posterior at a probe from the 3x3 system solved by Cramer's rule.
    #[test]
    fn three_point_gp_by_hand() {
        let x = [0.0, 0.5, 1.0];
        let y = [1.0, 0.2, 0.6];
        let (l, nr) = (0.4, 1e-2);
        let gp = GpPosterior::with_hyper(&x, &y, l, nr).unwrap();
        let mu = 0.6;
        let var: f64 = y.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 3.0;
        let sd = var.sqrt();
        let ys: Vec<f64> = y.iter().map(|v| (v - mu) / sd).collect();
        let k = |a: f64, b: f64| (-(a - b) * (a - b) / (2.0 * l * l)).exp();
        let jit = gp.jitter;
        let m: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| k(x[i], x[j]) + if i == j { nr + jit } else { 0.0 }).collect())
            .collect();
        let det3 = |a: &Vec<Vec<f64>>| {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        };
        let solve = |b: &[f64]| -> Vec<f64> {
            let d = det3(&m);
            (0..3)
                .map(|c| {
                    let mut mc = m.clone();
                    for r in 0..3 {
                        mc[r][c] = b[r];
                    }
                    det3(&mc) / d
                })
                .collect()
        };
        let p = 0.3;
        let ks: Vec<f64> = x.iter().map(|xi| k(*xi, p)).collect();
        let alpha = solve(&ys);
        let v = solve(&ks);
        let mean = mu + sd * (0..3).map(|i| ks[i] * alpha[i]).sum::<f64>();
        let var_p = sd * sd * (1.0 - (0..3).map(|i| ks[i] * v[i]).sum::<f64>());
        let (gm, gv) = gp.predict(p);
        assert!((gm - mean).abs() < 1e-10, "{gm} vs {mean}");
        assert!((gv - var_p).abs() < 1e-10, "{gv} vs {var_p}");
    }

    #[test]
    fn gp_interpolates_at_low_noise() {
        let x = [0.5, 0.7, 0.9, 1.2];
        let y = [0.3, -0.1, 0.25, 0.8];
        let gp = GpPosterior::with_hyper(&x, &y, 0.1, 1e-6).unwrap();
        for (xi, yi) in x.iter().zip(y) {
            let (m, v) = gp.predict(*xi);
            assert!((m - yi).abs() < 1e-6);
            assert!(v <= gp.noise * (1.0 + 1e-6) + 1e-12);
        }
        let fitted = gp_fit(&x, &y, [0.5, 1.375]).unwrap();
        for xi in x {
            let (_, v) = fitted.predict(xi);
            assert!(v <= fitted.noise * (1.0 + 1e-6) + 1e-12);
        }
    }

    #[test]
    fn gp_needs_two_points() {
        assert!(gp_fit(&[1.0], &[1.0], [0.0, 2.0]).is_err());
        assert!(BoConfig::new(1.0, 1.0).validate().is_err());
    }

    fn quad(c: f64) -> Result<f64> {
        Ok((c - 0.9) * (c - 0.9))
    }

    #[test]
    fn bo_finds_quadratic_minimum() {
        let cfg = BoConfig::new(0.5, 1.375);
        let trace = run_bo(quad, &cfg).unwrap();
        assert!((trace.best_param - 0.9).abs() < 0.02, "{trace:?}");
        assert!(trace.n_evaluations() <= 15, "{}", trace.n_evaluations());
        assert!(trace.steps.windows(2).all(|w| w[1].best_so_far <= w[0].best_so_far));
        assert!(trace.steps.iter().all(|s| (0.5..=1.375).contains(&s.param)));
        assert_eq!(trace, run_bo(quad, &cfg).unwrap());
    }

    #[test]
    fn bo_beats_random_search() {
        let budget = 20;
        let mut bo = Vec::new();
        let mut rs = Vec::new();
        for seed in 0..20u64 {
            let cfg = BoConfig {
                seed,
                max_iters: budget,
                ..BoConfig::new(0.5, 1.375)
            };
            let t = run_bo(quad, &cfg).unwrap();
            bo.push(if t.best_loss < cfg.tolerance { t.n_evaluations() } else { budget + 1 });
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let hit = (1..=budget).find(|_| quad(rng.gen_range(0.5..=1.375)).unwrap() < cfg.tolerance);
            rs.push(hit.unwrap_or(budget + 1));
        }
        bo.sort();
        rs.sort();
        assert!(bo[10] <= rs[10], "bo {bo:?} random {rs:?}");
    }

    #[test]
    fn nan_objective_is_recorded_as_sentinel() {
        let cfg = BoConfig {
            max_iters: 6,
            ..BoConfig::new(0.0, 1.0)
        };
        let t = run_bo(|c| Ok(if c > 0.5 { f64::NAN } else { c }), &cfg).unwrap();
        for s in &t.steps {
            assert_eq!(s.sentinel, s.param > 0.5);
            if s.sentinel {
                assert_eq!(s.loss, SENTINEL_LOSS);
            }
        }
        assert!(t.best_param <= 0.5);
    }

    struct Replay<'a>(&'a Trajectory);

    impl Predictor for Replay<'_> {
        fn history_len(&self) -> usize {
            3
        }
        fn predict(&self, step: usize, _h: &[&[[f64; 2]]], dt: f64, _d: [f64; 2]) -> Result<Vec<[f64; 2]>> {
            let f = |t: usize| self.0.frame(t).chunks_exact(2).map(|p| [p[0] as f64, p[1] as f64]).collect::<Vec<_>>();
            let t = step + 2;
            let (a, b, c) = (f(t - 1), f(t), f(t + 1));
            Ok((0..a.len())
                .map(|i| [0, 1].map(|d| (c[i][d] - 2.0 * b[i][d] + a[i][d]) / (dt * dt)))
                .collect())
        }
    }

    struct Blowup;

    impl Predictor for Blowup {
        fn history_len(&self) -> usize {
            3
        }
        fn predict(&self, _s: usize, h: &[&[[f64; 2]]], _dt: f64, _d: [f64; 2]) -> Result<Vec<[f64; 2]>> {
            Ok(vec![[f64::NAN, 0.0]; h[0].len()])
        }
    }

    fn observed() -> Trajectory {
        let (nf, np) = (8, 3);
        let mut pos = Vec::new();
        for t in 0..nf {
            for i in 0..np {
                let s = t as f32 * 0.01;
                pos.extend([0.1 + 0.05 * i as f32 + s * s, 0.2 + 0.01 * s]);
            }
        }
        Trajectory::new(pos, nf, np, 0.0025, [0.5, 0.5], MaterialParams::default(), [0.0, 0.0, 0.1, 0.1], 0).unwrap()
    }

    #[test]
    fn replaying_truth_scores_zero_and_nan_gives_sentinel() {
        let obs = observed();
        let loss = rollout_mped(&Replay(&obs), &obs).unwrap();
        assert!(loss < 1e-6, "{loss}");
        assert_eq!(rollout_mped(&Blowup, &obs).unwrap(), SENTINEL_LOSS);
    }
}
