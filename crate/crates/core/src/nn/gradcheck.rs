use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Grads, ParamStore};
use crate::error::Result;

/// Scalar value of the checked function plus a fingerprint of its piecewise
/// linear regime (ReLU pattern). Coordinates whose perturbation changes the
/// fingerprint straddle a kink and are resampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub pattern: u64,
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    pub n_samples: usize,
    /// Denominator floor of the relative error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            tol: 1e-4,
            n_samples: 256,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub n_checked: usize,
    pub n_kinks: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `f` on a random
/// subset of trainable coordinates.
pub fn grad_check<F>(
    mut f: F,
    params: &ParamStore<f64>,
    analytic: &Grads<f64>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore<f64>) -> Result<Probe>,
{
    let base = f(params)?;
    let mut coords: Vec<(usize, usize)> = params
        .groups()
        .iter()
        .enumerate()
        .filter(|(_, g)| g.trainable)
        .flat_map(|(gi, g)| (0..g.data.len()).map(move |k| (gi, k)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    coords.shuffle(&mut rng);

    let mut work = params.clone();
    let mut report = GradCheckReport {
        n_checked: 0,
        n_kinks: 0,
        max_rel_error: 0.0,
        worst: None,
        passed: true,
    };
    for (gi, k) in coords {
        if report.n_checked >= opts.n_samples {
            break;
        }
        let orig = work.groups()[gi].data[k];
        work.groups_mut()[gi].data[k] = orig + opts.h;
        let plus = f(&work)?;
        work.groups_mut()[gi].data[k] = orig - opts.h;
        let minus = f(&work)?;
        work.groups_mut()[gi].data[k] = orig;
        if plus.pattern != base.pattern || minus.pattern != base.pattern {
            report.n_kinks += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * opts.h);
        let a = analytic.data[gi][k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
        report.n_checked += 1;
        if rel > report.max_rel_error || !rel.is_finite() {
            report.max_rel_error = rel;
            report.worst = Some((params.groups()[gi].name.clone(), k));
        }
    }
    report.passed = report.max_rel_error < opts.tol && report.max_rel_error.is_finite();
    Ok(report)
}
