//! Material conditioning of the early message-passing blocks.
//!
//! For each hooked layer, `z = MLP_cond(kappa) * h` gates the layer input and
//! `MLP_FiLM(z)` yields `(gamma - 1, beta)`, which rescale and shift the
//! pre-activation `W h + b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{KappaBounds, ParamFamily};
use crate::error::{Error, Result};
use crate::mpm::MaterialParams;
use crate::nn::{modulate, Hook, Mlp, MlpTape, ParamStore, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilmConfig {
    /// Hooks go into blocks `1..=target_blocks`.
    pub target_blocks: usize,
    /// 1-based layers of each node and edge MLP.
    #[serde(default = "default_layers")]
    pub target_layers: Vec<usize>,
    #[serde(default = "default_cond_hidden")]
    pub cond_hidden: Vec<usize>,
    #[serde(default = "default_film_hidden")]
    pub film_hidden: Vec<usize>,
    pub family: ParamFamily,
    pub bounds: KappaBounds,
    /// One generator pair for every hooked layer instead of one per layer.
    #[serde(default)]
    pub shared: bool,
}

fn default_layers() -> Vec<usize> {
    vec![2, 3]
}
fn default_cond_hidden() -> Vec<usize> {
    vec![16]
}
fn default_film_hidden() -> Vec<usize> {
    vec![32]
}

impl FilmConfig {
    pub fn new(target_blocks: usize, family: ParamFamily, bounds: KappaBounds) -> Self {
        Self {
            target_blocks,
            target_layers: default_layers(),
            cond_hidden: default_cond_hidden(),
            film_hidden: default_film_hidden(),
            family,
            bounds,
            shared: false,
        }
    }

    pub fn validate(&self, n_mp_blocks: usize) -> Result<()> {
        if self.target_blocks == 0 || self.target_blocks > n_mp_blocks {
            return Err(Error::config(
                "film.target_blocks",
                format!("{} not in 1..={n_mp_blocks}", self.target_blocks),
            ));
        }
        if self.target_layers != default_layers() {
            return Err(Error::config("film.target_layers", "only layers [2, 3] are supported"));
        }
        if !(self.bounds.max > self.bounds.min) {
            return Err(Error::config("film.bounds", "min must be below max"));
        }
        Ok(())
    }

    pub fn kappa(&self, material: &MaterialParams) -> Result<f64> {
        normalize_kappa(self.family.raw_value(material), self.bounds)
    }
}

/// Min-max normalization, not clamped outside the bounds.
pub fn normalize_kappa(raw: f64, bounds: KappaBounds) -> Result<f64> {
    let span = bounds.max - bounds.min;
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::config(
            "kappa bounds",
            format!("degenerate [{}, {}]", bounds.min, bounds.max),
        ));
    }
    Ok((raw - bounds.min) / span)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlpKind {
    Edge,
    Node,
}

impl MlpKind {
    pub fn name(&self) -> &'static str {
        match self {
            MlpKind::Edge => "edge_mlp",
            MlpKind::Node => "node_mlp",
        }
    }
}

/// Generator pair attached to one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmSlot {
    /// 0-based block.
    pub block: usize,
    pub kind: MlpKind,
    /// 0-based layer index in the host MLP.
    pub layer: usize,
    pub cond: Mlp,
    pub film: Mlp,
}

impl FilmSlot {
    pub fn label(&self) -> String {
        format!("block_{}.{}.layer_{}", self.block + 1, self.kind.name(), self.layer + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilmNets {
    pub config: FilmConfig,
    pub slots: Vec<FilmSlot>,
}

impl FilmNets {
    /// Creates (or, with `rng = None`, binds) the generator groups for host
    /// layers of width `hidden -> hidden` and `hidden -> latent`.
    fn make<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        config: &FilmConfig,
        hidden: usize,
        latent: usize,
        mut rng: Option<&mut R>,
    ) -> Result<Self> {
        let width = |layer: usize| if layer == 1 { (hidden, hidden) } else { (hidden, latent) };
        if config.shared && hidden != latent {
            return Err(Error::config(
                "film.shared",
                "shared generators need equal hidden and latent widths",
            ));
        }
        let mut slots = Vec::new();
        let mut shared: Option<(Mlp, Mlp)> = None;
        for block in 0..config.target_blocks {
            for kind in [MlpKind::Edge, MlpKind::Node] {
                for &l1 in &config.target_layers {
                    let layer = l1 - 1;
                    let (din, dout) = width(layer);
                    let prefix = if config.shared {
                        "film.shared".to_string()
                    } else {
                        format!("film.block_{}.{}.layer_{}", block + 1, kind.name(), l1)
                    };
                    let (cond, film) = match &shared {
                        Some(pair) => pair.clone(),
                        None => {
                            let mut cd = vec![1];
                            cd.extend(&config.cond_hidden);
                            cd.push(din);
                            let mut fd = vec![din];
                            fd.extend(&config.film_hidden);
                            fd.push(2 * dout);
                            let pair = match rng.as_deref_mut() {
                                Some(r) => {
                                    let c = Mlp::build(store, &format!("{prefix}.cond"), &cd, false, r)?;
                                    let f = Mlp::build(store, &format!("{prefix}.mod"), &fd, false, r)?;
                                    // identity modulation at start
                                    let last = f.layer(f.n_layers() - 1);
                                    store.get_mut(last).data.fill(T::zero());
                                    (c, f)
                                }
                                None => (
                                    Mlp::bind(store, &format!("{prefix}.cond"), &cd, false)?,
                                    Mlp::bind(store, &format!("{prefix}.mod"), &fd, false)?,
                                ),
                            };
                            if config.shared {
                                shared = Some(pair.clone());
                            }
                            pair
                        }
                    };
                    slots.push(FilmSlot {
                        block,
                        kind,
                        layer,
                        cond,
                        film,
                    });
                }
            }
        }
        Ok(Self {
            config: config.clone(),
            slots,
        })
    }

    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        config: &FilmConfig,
        hidden: usize,
        latent: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::make(store, config, hidden, latent, Some(rng))
    }

    pub fn bind<T: Real>(
        store: &mut ParamStore<T>,
        config: &FilmConfig,
        hidden: usize,
        latent: usize,
    ) -> Result<Self> {
        Self::make::<T, rand_chacha::ChaCha8Rng>(store, config, hidden, latent, None)
    }

    /// Conditioning vectors `MLP_cond(kappa)` for every slot.
    pub fn conditions<T: Real>(&self, params: &ParamStore<T>, kappa: T) -> Result<Vec<MlpTape<T>>> {
        self.slots
            .iter()
            .map(|s| s.cond.forward(params, vec![kappa], 1, &[]))
            .collect()
    }

    /// Hook table (one entry per layer of a 3-layer MLP) for one host MLP.
    pub fn hooks<'a, T: Real>(
        &'a self,
        conds: &'a [MlpTape<T>],
        block: usize,
        kind: MlpKind,
        n_layers: usize,
    ) -> Vec<Option<Hook<'a, T>>> {
        let mut out = vec![None; n_layers];
        for (s, c) in self.slots.iter().zip(conds) {
            if s.block == block && s.kind == kind {
                out[s.layer] = Some(Hook {
                    cond: &c.output,
                    net: &s.film,
                });
            }
        }
        out
    }

    pub fn slot_index(&self, block: usize, kind: MlpKind, layer: usize) -> Option<usize> {
        self.slots
            .iter()
            .position(|s| s.block == block && s.kind == kind && s.layer == layer)
    }
}

/// Stand-alone evaluation of one hook: returns the modulated pre-activation.
#[allow(clippy::too_many_arguments)]
pub fn film_hook<T: Real>(
    params: &ParamStore<T>,
    slot: &FilmSlot,
    kappa: T,
    h_prev: &[T],
    preact: &[T],
    n: usize,
) -> Result<Vec<T>> {
    let cond = slot.cond.forward(params, vec![kappa], 1, &[])?;
    let mut y = preact.to_vec();
    let din = slot.film.din();
    let dout = slot.film.dout() / 2;
    modulate(
        params,
        Hook {
            cond: &cond.output,
            net: &slot.film,
        },
        h_prev,
        &mut y,
        n,
        din,
        dout,
    )?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(d: f64) -> f64 {
        d.to_radians().tan()
    }

    #[test]
    fn lower_bound_maps_to_zero() {
        let b = KappaBounds { min: deg(20.0), max: deg(40.0) };
        assert_eq!(normalize_kappa(deg(20.0), b).unwrap(), 0.0);
    }

    #[test]
    fn friction_midpoint() {
        let b = KappaBounds { min: deg(20.0), max: deg(40.0) };
        let k = normalize_kappa(deg(30.0), b).unwrap();
        let expected = (0.5773502692 - 0.3639702343) / (0.8390996312 - 0.3639702343);
        assert!((k - expected).abs() < 1e-9);
        // 0.4492 is the same formula on 4-digit tangents
        let rounded: f64 = (0.5774 - 0.3640) / (0.8391 - 0.3640);
        assert!((rounded - 0.4492).abs() < 1e-4);
        assert!((k - rounded).abs() < 1e-4);
    }

    #[test]
    fn cohesion_extrapolates_unclamped() {
        let b = KappaBounds { min: 0.5, max: 1.25 };
        let k = normalize_kappa(1.375, b).unwrap();
        assert!((k - 7.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(normalize_kappa(1.0, KappaBounds { min: 1.0, max: 1.0 }).is_err());
        let c = FilmConfig::new(11, ParamFamily::Friction, KappaBounds { min: 0.0, max: 1.0 });
        assert!(c.validate(10).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = FilmConfig::new(5, ParamFamily::Cohesion, KappaBounds { min: 0.5, max: 1.25 });
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<FilmConfig>(&s).unwrap(), c);
    }
}
