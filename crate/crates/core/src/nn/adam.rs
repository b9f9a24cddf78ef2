use super::{Grads, ParamStore, Real};

/// Adam with bias-corrected moments. Frozen groups are skipped entirely, so
/// their values and moments never change.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || {
            params
                .groups()
                .iter()
                .map(|g| vec![T::zero(); g.data.len()])
                .collect()
        };
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Grads<T>, lr: f64) {
        self.t += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let c1 = T::of(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::of(lr);
        let eps = T::of(self.eps);
        for (gi, group) in params.groups_mut().iter_mut().enumerate() {
            if !group.trainable {
                continue;
            }
            let (m, v, g) = (&mut self.m[gi], &mut self.v[gi], &grads.data[gi]);
            for k in 0..group.data.len() {
                m[k] = b1 * m[k] + (T::one() - b1) * g[k];
                v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                group.data[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::GroupKind;

    fn bowl() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("x", GroupKind::Norm { dim: 1 }, vec![1.0, 1.0]).unwrap();
        s
    }

    #[test]
    fn quadratic_bowl_descends_until_first_overshoot() {
        let mut s = bowl();
        let mut opt = Adam::new(&s);
        let norm = |s: &ParamStore<f64>| s.groups()[0].data.iter().map(|x| x * x).sum::<f64>().sqrt();
        let start = norm(&s);
        let mut norms = vec![start];
        for _ in 0..50 {
            let mut g = Grads::zeros_like(&s);
            g.data[0] = s.groups()[0].data.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut s, &g, 0.1);
            norms.push(norm(&s));
        }
        // momentum carries the iterate past the minimum after ~0.1 * t travel
        for w in norms[..12].windows(2) {
            assert!(w[1] < w[0], "{norms:?}");
        }
        assert!(norms.iter().skip(1).all(|n| *n < start));
        assert!(norms[50] < 0.01 * start, "{}", norms[50]);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = bowl();
        let before = s.clone();
        let mut opt = Adam::new(&s);
        for _ in 0..5 {
            let g = Grads::zeros_like(&s);
            opt.step(&mut s, &g, 0.1);
        }
        assert_eq!(s, before);
    }

    #[test]
    fn frozen_group_unchanged() {
        let mut s = bowl();
        s.insert("y", GroupKind::Norm { dim: 1 }, vec![3.0, -2.0]).unwrap();
        s.get_mut(crate::nn::GroupId(1)).trainable = false;
        let mut opt = Adam::new(&s);
        let mut g = Grads::zeros_like(&s);
        g.data[1] = vec![5.0, 5.0];
        g.data[0] = vec![1.0, 1.0];
        opt.step(&mut s, &g, 0.1);
        assert_eq!(s.groups()[1].data, vec![3.0, -2.0]);
        assert_ne!(s.groups()[0].data, vec![1.0, 1.0]);
    }
}
