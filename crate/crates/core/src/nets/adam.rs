use serde::{Deserialize, Serialize};

use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one group of tensors sharing a step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub cfg: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    /// Tensor updates skipped because their gradient was not finite.
    pub skipped: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(cfg: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            cfg,
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
            skipped: 0,
        }
    }

    pub fn for_tensors(cfg: AdamConfig, tensors: &[&[T]]) -> Self {
        Self::new(cfg, &tensors.iter().map(|t| t.len()).collect::<Vec<_>>())
    }
}

/// One bias-corrected Adam update. A tensor whose gradient contains a
/// non-finite value is left untouched (moments included) and counted in
/// `state.skipped`.
pub fn adam_step<T: Real>(state: &mut AdamState<T>, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) {
    assert_eq!(params.len(), state.m.len());
    assert_eq!(grads.len(), state.m.len());
    state.step += 1;
    let (b1, b2) = (state.cfg.beta1, state.cfg.beta2);
    let c1 = 1.0 - b1.powi(state.step.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - b2.powi(state.step.min(i32::MAX as u64) as i32);
    let (b1t, b2t, eps) = (T::lit(b1), T::lit(b2), T::lit(state.cfg.eps));
    let (one_b1, one_b2) = (T::lit(1.0 - b1), T::lit(1.0 - b2));
    let (lr_t, c1t, c2t) = (T::lit(lr), T::lit(c1), T::lit(c2));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(p.len(), g.len());
        if g.iter().any(|v| !v.is_finite()) {
            state.skipped += 1;
            continue;
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            m[j] = b1t * m[j] + one_b1 * g[j];
            v[j] = b2t * v[j] + one_b2 * g[j] * g[j];
            let mh = m[j] / c1t;
            let vh = v[j] / c2t;
            p[j] -= lr_t * mh / (vh.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut s = AdamState::<f64>::new(AdamConfig::default(), &[2]);
        s.m[0] = vec![1.0, -1.0];
        s.v[0] = vec![1.0, 1.0];
        let mut p = vec![3.0, 4.0];
        let before = p.clone();
        // moments are non-zero so the parameter moves; check decay only here
        adam_step(&mut s, &mut [&mut p], &[&[0.0, 0.0]], 0.0);
        assert_eq!(p, before);
        assert!((s.m[0][0] - 0.9).abs() < 1e-15 && (s.v[0][0] - 0.999).abs() < 1e-15);

        let mut fresh = AdamState::<f64>::new(AdamConfig::default(), &[2]);
        adam_step(&mut fresh, &mut [&mut p], &[&[0.0, 0.0]], 0.1);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = AdamState::<f64>::new(AdamConfig::default(), &[3]);
        let mut p = vec![0.0; 3];
        adam_step(&mut s, &mut [&mut p], &[&[5.0, -0.01, 300.0]], 0.1);
        for (v, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - 0.1 * sign).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut s = AdamState::<f64>::new(AdamConfig::default(), &[1]);
        let mut w = vec![0.0];
        for _ in 0..100 {
            let g = 2.0 * (w[0] - 3.0);
            adam_step(&mut s, &mut [&mut w], &[&[g]], 0.1);
        }
        assert!((w[0] - 3.0).abs() < 0.05, "{}", w[0]);
    }

    #[test]
    fn non_finite_gradient_skips_only_that_tensor() {
        let mut s = AdamState::<f64>::new(AdamConfig::default(), &[1, 1]);
        let (mut a, mut b) = (vec![1.0], vec![1.0]);
        adam_step(&mut s, &mut [&mut a, &mut b], &[&[f64::NAN], &[1.0]], 0.1);
        assert_eq!(a, vec![1.0]);
        assert!(b[0] < 1.0);
        assert_eq!(s.skipped, 1);
        assert_eq!(s.m[0][0], 0.0);
    }
}
