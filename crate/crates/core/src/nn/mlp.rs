use rand::Rng;

use super::linalg::{affine, affine_backward};
use super::{GroupId, GroupKind, Grads, ParamStore, Real};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Fully connected stack with ReLU between layers, an optional layer norm on
/// the output, and an optional modulation slot on every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    layers: Vec<GroupId>,
    norm: Option<GroupId>,
}

/// Modulation registered on one layer: the layer's pre-activation `W h + b`
/// becomes `gamma * (W h + b) + beta` with `(gamma - 1, beta) = net(cond * h)`.
#[derive(Clone, Copy)]
pub struct Hook<'a, T> {
    pub cond: &'a [T],
    pub net: &'a Mlp,
}

#[derive(Debug, Clone)]
pub struct HookTape<T> {
    pub mlp: Mlp,
    pub cond: Vec<T>,
    pub net: Box<MlpTape<T>>,
    /// Pre-activation before modulation.
    pub raw: Vec<T>,
}

impl<T: Real> HookTape<T> {
    /// `(gamma, beta)` rows, each `n x dout`.
    pub fn gamma_beta(&self) -> (Vec<T>, Vec<T>) {
        let n = self.net.n;
        let two = self.net.output.len() / n.max(1);
        let d = two / 2;
        let mut gamma = Vec::with_capacity(n * d);
        let mut beta = Vec::with_capacity(n * d);
        for r in 0..n {
            let row = &self.net.output[r * two..(r + 1) * two];
            gamma.extend(row[..d].iter().map(|&g| T::one() + g));
            beta.extend_from_slice(&row[d..]);
        }
        (gamma, beta)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormTape<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Intermediates of one forward evaluation.
#[derive(Debug, Clone)]
pub struct MlpTape<T> {
    pub n: usize,
    /// Input of each layer.
    pub inputs: Vec<Vec<T>>,
    /// Pre-activation of each layer after modulation.
    pub preacts: Vec<Vec<T>>,
    pub hooks: Vec<Option<HookTape<T>>>,
    pub norm: Option<LayerNormTape<T>>,
    pub output: Vec<T>,
}

/// Gradient of the loss w.r.t. each hook's conditioning vector.
pub type HookGrads<T> = Vec<Option<Vec<T>>>;

impl<T: Real> MlpTape<T> {
    /// Mixes the ReLU on/off pattern into `h`.
    pub fn fold_pattern(&self, h: &mut u64) {
        let last = self.preacts.len() - 1;
        for (l, a) in self.preacts.iter().enumerate() {
            if l < last {
                for v in a {
                    *h = (*h ^ u64::from(*v > T::zero())).wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        for t in self.hooks.iter().flatten() {
            t.net.fold_pattern(h);
        }
    }
}

impl Mlp {
    /// Creates the groups `{prefix}.layer_{l}` (and `{prefix}.norm`).
    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        dims: &[usize],
        layer_norm: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        check_dims(dims)?;
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, w) in dims.windows(2).enumerate() {
            layers.push(store.add_linear(&format!("{prefix}.layer_{}", l + 1), w[0], w[1], rng)?);
        }
        let norm = if layer_norm {
            Some(store.add_norm(&format!("{prefix}.norm"), *dims.last().unwrap())?)
        } else {
            None
        };
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            norm,
        })
    }

    /// Looks up existing groups and checks their shapes.
    pub fn bind<T: Real>(
        store: &ParamStore<T>,
        prefix: &str,
        dims: &[usize],
        layer_norm: bool,
    ) -> Result<Self> {
        check_dims(dims)?;
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, w) in dims.windows(2).enumerate() {
            let name = format!("{prefix}.layer_{}", l + 1);
            let id = store.require(&name)?;
            let want = GroupKind::Linear { din: w[0], dout: w[1] };
            if store.get(id).kind != want {
                return Err(Error::Invalid(format!(
                    "group {name} has shape {:?}, expected {want:?}",
                    store.get(id).kind
                )));
            }
            layers.push(id);
        }
        let norm = if layer_norm {
            let name = format!("{prefix}.norm");
            let id = store.require(&name)?;
            if store.get(id).kind != (GroupKind::Norm { dim: *dims.last().unwrap() }) {
                return Err(Error::Invalid(format!("group {name} has the wrong width")));
            }
            Some(id)
        } else {
            None
        };
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            norm,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn din(&self) -> usize {
        self.dims[0]
    }

    pub fn dout(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> GroupId {
        self.layers[l]
    }

    pub fn has_norm(&self) -> bool {
        self.norm.is_some()
    }

    /// Runs `n` rows through the stack. `hooks` is empty or one entry per
    /// layer.
    pub fn forward<T: Real>(
        &self,
        params: &ParamStore<T>,
        x: Vec<T>,
        n: usize,
        hooks: &[Option<Hook<'_, T>>],
    ) -> Result<MlpTape<T>> {
        if x.len() != n * self.din() {
            return Err(Error::Shape {
                context: "mlp input",
                expected: n * self.din(),
                actual: x.len(),
            });
        }
        if !hooks.is_empty() && hooks.len() != self.n_layers() {
            return Err(Error::Shape {
                context: "mlp hook slots",
                expected: self.n_layers(),
                actual: hooks.len(),
            });
        }
        let nl = self.n_layers();
        let mut inputs = Vec::with_capacity(nl);
        let mut preacts = Vec::with_capacity(nl);
        let mut hook_tapes = Vec::with_capacity(nl);
        let mut h = x;
        for l in 0..nl {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let (w, b) = params.get(self.layers[l]).linear();
            let mut y = vec![T::zero(); n * dout];
            affine(&h, n, din, dout, w, b, &mut y);
            let hook = hooks.get(l).copied().flatten();
            let tape = match hook {
                Some(hk) => Some(modulate(params, hk, &h, &mut y, n, din, dout)?),
                None => None,
            };
            hook_tapes.push(tape);
            let next = if l + 1 < nl {
                y.iter().map(|&v| v.max(T::zero())).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut h, next));
            preacts.push(y);
        }
        let last = preacts.last().unwrap();
        let (norm, output) = match self.norm {
            Some(id) => {
                let (scale, shift) = params.get(id).norm();
                let (t, out) = layer_norm(last, n, self.dout(), scale, shift);
                (Some(t), out)
            }
            None => (None, last.clone()),
        };
        Ok(MlpTape {
            n,
            inputs,
            preacts,
            hooks: hook_tapes,
            norm,
            output,
        })
    }

    /// Reverse pass. Parameter gradients of trainable groups accumulate into
    /// `grads`; conditioning gradients accumulate into `hook_grads` (one slot
    /// per layer, may be empty when no hooks were used). Returns the input
    /// gradient when `want_input` is set.
    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        tape: &MlpTape<T>,
        gy: Vec<T>,
        grads: &mut Grads<T>,
        hook_grads: &mut [Option<Vec<T>>],
        want_input: bool,
    ) -> Option<Vec<T>> {
        let n = tape.n;
        let nl = self.n_layers();
        let mut g = gy;
        if let Some(id) = self.norm {
            let nt = tape.norm.as_ref().expect("tape lacks layer norm");
            let (scale, _) = params.get(id).norm();
            let d = self.dout();
            if params.get(id).trainable {
                let gs = grads.get_mut(id);
                let (gscale, gshift) = gs.split_at_mut(d);
                for r in 0..n {
                    for k in 0..d {
                        let gv = g[r * d + k];
                        gscale[k] += gv * nt.xhat[r * d + k];
                        gshift[k] += gv;
                    }
                }
            }
            g = layer_norm_backward(nt, &g, n, d, scale);
        }
        for l in (0..nl).rev() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            if l + 1 < nl {
                for (gv, &a) in g.iter_mut().zip(&tape.preacts[l]) {
                    if a <= T::zero() {
                        *gv = T::zero();
                    }
                }
            }
            let mut extra = None;
            if let Some(ht) = &tape.hooks[l] {
                let (gr, gin, gc) =
                    hook_backward(params, ht, &tape.inputs[l], &g, n, din, dout, grads);
                g = gr;
                extra = Some(gin);
                if let Some(slot) = hook_grads.get_mut(l) {
                    match slot {
                        Some(acc) => acc.iter_mut().zip(&gc).for_each(|(a, b)| *a += *b),
                        None => *slot = Some(gc),
                    }
                }
            }
            let id = self.layers[l];
            let (w, _) = params.get(id).linear();
            let need_gx = l > 0 || want_input;
            let mut gx = if need_gx { vec![T::zero(); n * din] } else { Vec::new() };
            let wb = if params.get(id).trainable {
                let gwb = grads.get_mut(id);
                Some(gwb.split_at_mut(din * dout))
            } else {
                None
            };
            affine_backward(
                &tape.inputs[l],
                n,
                din,
                dout,
                w,
                &g,
                wb,
                if need_gx { Some(&mut gx[..]) } else { None },
            );
            if let Some(e) = extra {
                if need_gx {
                    gx.iter_mut().zip(&e).for_each(|(a, b)| *a += *b);
                }
            }
            if !need_gx {
                return None;
            }
            g = gx;
        }
        Some(g)
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::config("mlp dims", format!("{dims:?}")));
    }
    Ok(())
}

pub fn modulate<T: Real>(
    params: &ParamStore<T>,
    hook: Hook<'_, T>,
    h: &[T],
    y: &mut [T],
    n: usize,
    din: usize,
    dout: usize,
) -> Result<HookTape<T>> {
    if hook.cond.len() != din || hook.net.din() != din || hook.net.dout() != 2 * dout {
        return Err(Error::Shape {
            context: "film hook width",
            expected: din,
            actual: hook.cond.len(),
        });
    }
    let mut z = vec![T::zero(); n * din];
    for r in 0..n {
        for k in 0..din {
            z[r * din + k] = h[r * din + k] * hook.cond[k];
        }
    }
    let net = hook.net.forward(params, z, n, &[])?;
    let raw = y.to_vec();
    for r in 0..n {
        let gb = &net.output[r * 2 * dout..(r + 1) * 2 * dout];
        for k in 0..dout {
            let i = r * dout + k;
            y[i] = (T::one() + gb[k]) * raw[i] + gb[dout + k];
        }
    }
    Ok(HookTape {
        mlp: hook.net.clone(),
        cond: hook.cond.to_vec(),
        net: Box::new(net),
        raw,
    })
}

/// Returns (grad wrt raw pre-activation, grad wrt layer input, grad wrt cond).
#[allow(clippy::too_many_arguments)]
fn hook_backward<T: Real>(
    params: &ParamStore<T>,
    tape: &HookTape<T>,
    h: &[T],
    g: &[T],
    n: usize,
    din: usize,
    dout: usize,
    grads: &mut Grads<T>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let gbo = &tape.net.output;
    let mut g_raw = vec![T::zero(); n * dout];
    let mut g_net = vec![T::zero(); n * 2 * dout];
    for r in 0..n {
        for k in 0..dout {
            let i = r * dout + k;
            g_raw[i] = g[i] * (T::one() + gbo[r * 2 * dout + k]);
            g_net[r * 2 * dout + k] = g[i] * tape.raw[i];
            g_net[r * 2 * dout + dout + k] = g[i];
        }
    }
    let gz = tape
        .mlp
        .backward(params, &tape.net, g_net, grads, &mut [], true)
        .expect("input gradient requested");
    let mut g_h = vec![T::zero(); n * din];
    let mut g_cond = vec![T::zero(); din];
    for r in 0..n {
        for k in 0..din {
            let i = r * din + k;
            g_cond[k] += gz[i] * h[i];
            g_h[i] = gz[i] * tape.cond[k];
        }
    }
    (g_raw, g_h, g_cond)
}

fn layer_norm<T: Real>(
    x: &[T],
    n: usize,
    d: usize,
    scale: &[T],
    shift: &[T],
) -> (LayerNormTape<T>, Vec<T>) {
    let mut xhat = vec![T::zero(); n * d];
    let mut inv_std = vec![T::zero(); n];
    let mut out = vec![T::zero(); n * d];
    let dn = T::of(d as f64);
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) / dn;
        let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / dn;
        let is = T::one() / (var + T::of(LN_EPS)).sqrt();
        inv_std[r] = is;
        for k in 0..d {
            let xh = (row[k] - mean) * is;
            xhat[r * d + k] = xh;
            out[r * d + k] = xh * scale[k] + shift[k];
        }
    }
    (LayerNormTape { xhat, inv_std }, out)
}

fn layer_norm_backward<T: Real>(t: &LayerNormTape<T>, g: &[T], n: usize, d: usize, scale: &[T]) -> Vec<T> {
    let mut gx = vec![T::zero(); n * d];
    let dn = T::of(d as f64);
    for r in 0..n {
        let xh = &t.xhat[r * d..(r + 1) * d];
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for k in 0..d {
            let gh = g[r * d + k] * scale[k];
            m1 += gh;
            m2 += gh * xh[k];
        }
        m1 /= dn;
        m2 /= dn;
        for k in 0..d {
            let gh = g[r * d + k] * scale[k];
            gx[r * d + k] = t.inv_std[r] * (gh - m1 - xh[k] * m2);
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, GradCheckOptions, Probe};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn randomize(store: &mut ParamStore<f64>, seed: u64) {
        let mut r = rng(seed);
        for g in store.groups_mut() {
            g.data.iter_mut().for_each(|v| *v = r.gen_range(-0.8..0.8));
        }
    }

    /// Straight-line evaluation with explicit matrices.
    fn reference(store: &ParamStore<f64>, mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..mlp.n_layers() {
            let (din, dout) = (mlp.dims()[l], mlp.dims()[l + 1]);
            let (w, b) = store.get(mlp.layer(l)).linear();
            let mut y = vec![0.0; dout];
            for o in 0..dout {
                let mut s = b[o];
                for i in 0..din {
                    s += w[i * dout + o] * h[i];
                }
                y[o] = if l + 1 < mlp.n_layers() { s.max(0.0) } else { s };
            }
            h = y;
        }
        if mlp.has_norm() {
            let d = h.len() as f64;
            let mean: f64 = h.iter().sum::<f64>() / d;
            let var: f64 = h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let (s, t) = store.get(mlp.norm.unwrap()).norm();
            h = h
                .iter()
                .enumerate()
                .map(|(k, v)| (v - mean) / (var + LN_EPS).sqrt() * s[k] + t[k])
                .collect();
        }
        h
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut s = ParamStore::<f64>::new();
        let m = Mlp::build(&mut s, "m", &[3, 4, 2], false, &mut rng(0)).unwrap();
        s.groups_mut().iter_mut().for_each(|g| g.data.fill(0.0));
        let t = m.forward(&s, vec![1.0, -2.0, 3.0, 0.5, 0.5, 0.5], 2, &[]).unwrap();
        assert!(t.output.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut s = ParamStore::<f64>::new();
        let m = Mlp::build(&mut s, "m", &[3, 3], false, &mut rng(0)).unwrap();
        let id = m.layer(0);
        let g = &mut s.get_mut(id).data;
        g.fill(0.0);
        for i in 0..3 {
            g[i * 3 + i] = 1.0;
        }
        let x = vec![1.5, -2.0, 0.25];
        assert_eq!(m.forward(&s, x.clone(), 1, &[]).unwrap().output, x);
    }

    #[test]
    fn forward_matches_reference() {
        let mut s = ParamStore::<f64>::new();
        let m = Mlp::build(&mut s, "m", &[5, 7, 6, 4], true, &mut rng(1)).unwrap();
        randomize(&mut s, 2);
        let mut r = rng(3);
        let x: Vec<f64> = (0..3 * 5).map(|_| r.gen_range(-1.0..1.0)).collect();
        let t = m.forward(&s, x.clone(), 3, &[]).unwrap();
        for row in 0..3 {
            let want = reference(&s, &m, &x[row * 5..row * 5 + 5]);
            for k in 0..4 {
                assert!((t.output[row * 4 + k] - want[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut s = ParamStore::<f64>::new();
        let m = Mlp::build(&mut s, "m", &[3, 2], false, &mut rng(0)).unwrap();
        assert!(m.forward(&s, vec![0.0; 4], 1, &[]).is_err());
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let mut s = ParamStore::<f64>::new();
        let m = Mlp::build(&mut s, "m", &[3, 2], false, &mut rng(0)).unwrap();
        let x = vec![1.0, 2.0, -1.0];
        let t = m.forward(&s, x.clone(), 1, &[]).unwrap();
        let gy = vec![0.5, -3.0];
        let mut g = Grads::zeros_like(&s);
        m.backward(&s, &t, gy.clone(), &mut g, &mut [], false);
        let gw = g.get(m.layer(0));
        for i in 0..3 {
            for o in 0..2 {
                assert_eq!(gw[i * 2 + o], gy[o] * x[i]);
            }
        }
        assert_eq!(&gw[6..], &gy[..]);
    }

    #[test]
    fn frozen_layer_gets_no_gradient() {
        let mut s = ParamStore::<f64>::new();
        let m = Mlp::build(&mut s, "m", &[3, 4, 2], true, &mut rng(0)).unwrap();
        s.set_trainable_globs(&["m.layer_2"]).unwrap();
        let t = m.forward(&s, vec![1.0, 2.0, 3.0], 1, &[]).unwrap();
        let mut g = Grads::zeros_like(&s);
        m.backward(&s, &t, vec![1.0, -1.0], &mut g, &mut [], false);
        assert!(g.get(m.layer(0)).iter().all(|v| *v == 0.0));
        assert!(g.get(m.norm.unwrap()).iter().all(|v| *v == 0.0));
        assert!(g.get(m.layer(1)).iter().any(|v| *v != 0.0));
    }

    struct Rig {
        store: ParamStore<f64>,
        host: Mlp,
        nets: Vec<Mlp>,
        conds: Vec<Vec<f64>>,
        x: Vec<f64>,
        n: usize,
    }

    fn rig() -> Rig {
        let mut store = ParamStore::<f64>::new();
        let mut r = rng(11);
        let host = Mlp::build(&mut store, "host", &[4, 6, 6, 5], true, &mut r).unwrap();
        let nets = vec![
            Mlp::build(&mut store, "film.a", &[6, 8, 12], false, &mut r).unwrap(),
            Mlp::build(&mut store, "film.b", &[6, 8, 10], false, &mut r).unwrap(),
        ];
        randomize(&mut store, 12);
        let conds = vec![
            (0..6).map(|_| r.gen_range(-1.0..1.0)).collect(),
            (0..6).map(|_| r.gen_range(-1.0..1.0)).collect(),
        ];
        let n = 4;
        let x = (0..n * 4).map(|_| r.gen_range(-1.0..1.0)).collect();
        Rig {
            store,
            host,
            nets,
            conds,
            x,
            n,
        }
    }

    fn loss(rig: &Rig, store: &ParamStore<f64>, conds: &[Vec<f64>]) -> (f64, MlpTape<f64>) {
        let hooks = [
            None,
            Some(Hook { cond: &conds[0], net: &rig.nets[0] }),
            Some(Hook { cond: &conds[1], net: &rig.nets[1] }),
        ];
        let t = rig.host.forward(store, rig.x.clone(), rig.n, &hooks).unwrap();
        let l = t.output.iter().enumerate().map(|(i, v)| v * v * (1.0 + 0.1 * i as f64)).sum();
        (l, t)
    }

    #[test]
    fn gradients_match_finite_differences_with_hooks() {
        let rig = rig();
        let (_, tape) = loss(&rig, &rig.store, &rig.conds);
        let gy: Vec<f64> = tape.output.iter().enumerate().map(|(i, v)| 2.0 * v * (1.0 + 0.1 * i as f64)).collect();
        let mut g = Grads::zeros_like(&rig.store);
        let mut hg: HookGrads<f64> = vec![None; 3];
        let gx = rig.host.backward(&rig.store, &tape, gy, &mut g, &mut hg, true).unwrap();

        let report = grad_check(
            |s| {
                let (v, t) = loss(&rig, s, &rig.conds);
                let mut h = 0xcbf29ce484222325;
                t.fold_pattern(&mut h);
                Ok(Probe { value: v, pattern: h })
            },
            &rig.store,
            &g,
            &GradCheckOptions { n_samples: 400, ..Default::default() },
        )
        .unwrap();
        assert!(report.n_checked >= 256, "{report:?}");
        assert!(report.passed, "{report:?}");

        // conditioning vectors and inputs
        let h = 1e-5;
        for (slot, c) in [(1usize, 0usize), (2, 1)] {
            for k in 0..6 {
                let mut cp = rig.conds.clone();
                cp[c][k] += h;
                let mut cm = rig.conds.clone();
                cm[c][k] -= h;
                let num = (loss(&rig, &rig.store, &cp).0 - loss(&rig, &rig.store, &cm).0) / (2.0 * h);
                let a = hg[slot].as_ref().unwrap()[k];
                assert!((a - num).abs() <= 1e-6 * a.abs().max(1.0), "cond {c} {k}: {a} vs {num}");
            }
        }
        let mut xr = Rig { x: rig.x.clone(), ..rig };
        for k in 0..xr.x.len() {
            let x0 = xr.x[k];
            xr.x[k] = x0 + h;
            let lp = loss(&xr, &xr.store, &xr.conds).0;
            xr.x[k] = x0 - h;
            let lm = loss(&xr, &xr.store, &xr.conds).0;
            xr.x[k] = x0;
            let num = (lp - lm) / (2.0 * h);
            assert!((gx[k] - num).abs() <= 1e-6 * gx[k].abs().max(1.0), "x {k}: {} vs {num}", gx[k]);
        }
    }

    #[test]
    fn identity_hook_leaves_output_bit_equal() {
        let mut rig = rig();
        for net in &rig.nets {
            let last = net.layer(net.n_layers() - 1);
            rig.store.get_mut(last).data.fill(0.0);
        }
        let (_, hooked) = loss(&rig, &rig.store, &rig.conds);
        let plain = rig.host.forward(&rig.store, rig.x.clone(), rig.n, &[]).unwrap();
        assert_eq!(hooked.output, plain.output);
    }

    #[test]
    fn zero_cond_makes_modulation_state_independent() {
        let rig = rig();
        let zeros = vec![vec![0.0; 6], vec![0.0; 6]];
        let (_, t) = loss(&rig, &rig.store, &zeros);
        let (gamma, beta) = t.hooks[1].as_ref().unwrap().gamma_beta();
        let d = 6;
        for r in 1..rig.n {
            assert_eq!(gamma[..d], gamma[r * d..(r + 1) * d]);
            assert_eq!(beta[..d], beta[r * d..(r + 1) * d]);
        }
    }

    #[test]
    fn tolerance_breach_is_flagged() {
        let rig = rig();
        let g = Grads::zeros_like(&rig.store);
        let report = grad_check(
            |s| Ok(Probe { value: loss(&rig, s, &rig.conds).0, pattern: 0 }),
            &rig.store,
            &g,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn zero_function_has_zero_gradient() {
        let rig = rig();
        let g = Grads::zeros_like(&rig.store);
        let report = grad_check(
            |_| Ok(Probe { value: 0.0, pattern: 0 }),
            &rig.store,
            &g,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed && report.max_rel_error == 0.0);
    }

    #[test]
    fn forward_backward_bit_reproducible() {
        let rig = rig();
        let run = || {
            let (_, t) = loss(&rig, &rig.store, &rig.conds);
            let mut g = Grads::zeros_like(&rig.store);
            rig.host.backward(&rig.store, &t, t.output.clone(), &mut g, &mut vec![None; 3], false);
            (t.output, g)
        };
        let (a, ga) = run();
        let (b, gb) = run();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }
}
