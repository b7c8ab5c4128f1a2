use nalgebra::{DMatrix, DVector};

use crate::geom::{Mat3, Vec3};
use crate::{Error, Real, Result};

use super::arap::ArapReference;
use super::model::{BlendshapeModel, NUM_LANDMARKS};
use super::FitWeights;

#[derive(Clone, Debug, PartialEq)]
pub struct RetargetResult<T> {
    pub coeffs: Vec<T>,
    /// Mean squared landmark distance.
    pub landmark_loss: f64,
    /// Mean landmark distance.
    pub landmark_residual: f64,
    /// Unweighted ARAP energy against the mean shape.
    pub arap: f64,
    /// Total weighted objective.
    pub energy: f64,
    pub iterations: usize,
}

/// Landmark retargeting by alternating exact solves: per-vertex ARAP
/// rotations are refit to the current shape, then the coefficients minimise
/// the objective with those rotations fixed. With fixed rotations the
/// objective is quadratic in the coefficients, so each solve is a single
/// Cholesky back-substitution, and the objective never increases.
pub struct Retargeter<'a, T> {
    model: &'a BlendshapeModel<T>,
    weights: FitWeights,
    arap: ArapReference<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// Basis rows reshaped to per-vertex displacements.
    modes: Vec<Vec<Vec3<f64>>>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

fn to64<T: Real>(v: &[Vec3<T>]) -> Vec<Vec3<f64>> {
    v.iter().map(|p| p.cast()).collect()
}

impl<'a, T: Real> Retargeter<'a, T> {
    pub fn new(model: &'a BlendshapeModel<T>, weights: FitWeights) -> Result<Self> {
        weights.validate()?;
        let c = model.components();
        let n = model.num_vertices();
        let arap = ArapReference::new(&model.mean_mesh().cast::<f64>());
        let modes: Vec<Vec<Vec3<f64>>> = model
            .basis
            .rows()
            .into_iter()
            .map(|r| (0..n).map(|i| Vec3::new(r[3 * i].f64(), r[3 * i + 1].f64(), r[3 * i + 2].f64())).collect())
            .collect();

        let mut h = DMatrix::<f64>::zeros(c, c);
        let lm = 2.0 * weights.landmark / NUM_LANDMARKS as f64;
        for &i in &model.landmark_indices {
            for a in 0..c {
                for b in 0..=a {
                    h[(a, b)] += lm * modes[a][i].dot(modes[b][i]);
                }
            }
        }
        if weights.arap > 0.0 {
            // Hessian of the fixed-rotation ARAP term: 2w per directed edge
            let q: Vec<Vec<Vec3<f64>>> = modes.iter().map(|m| laplacian_apply(&arap, m)).collect();
            for a in 0..c {
                for b in 0..=a {
                    let s: f64 = modes[b].iter().zip(&q[a]).map(|(x, y)| x.dot(*y)).sum();
                    h[(a, b)] += weights.arap * s;
                }
            }
        }
        let l2 = 2.0 * weights.coeff_l2_scaled(n);
        for a in 0..c {
            h[(a, a)] += l2;
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        let chol = h.cholesky().ok_or_else(|| {
            Error::Numerical("retarget system is singular; use a positive coefficient or ARAP weight".into())
        })?;
        Ok(Self { model, weights, arap, chol, modes, max_iterations: 50, tolerance: 1e-10 })
    }

    fn positions(&self, c: &[f64]) -> Vec<Vec3<f64>> {
        let mut x = to64(&self.model.mean);
        for (k, &ck) in c.iter().enumerate() {
            for (p, d) in x.iter_mut().zip(&self.modes[k]) {
                *p += *d * ck;
            }
        }
        x
    }

    fn evaluate(&self, c: &[f64], x: &[Vec3<f64>], target: &[Vec3<f64>], rots: &[Mat3<f64>]) -> (f64, f64, f64, f64) {
        let lms: Vec<f64> =
            self.model.landmark_indices.iter().zip(target).map(|(&i, y)| (x[i] - *y).norm_squared()).collect();
        let lm_loss = lms.iter().sum::<f64>() / NUM_LANDMARKS as f64;
        let lm_res = lms.iter().map(|v| v.sqrt()).sum::<f64>() / NUM_LANDMARKS as f64;
        let arap = self.arap.energy_with(x, rots).0;
        let l2 = self.weights.coeff_l2_scaled(x.len()) * c.iter().map(|v| v * v).sum::<f64>();
        (self.weights.landmark * lm_loss + self.weights.arap * arap + l2, lm_loss, lm_res, arap)
    }

    /// Fits coefficients to 20 target landmark positions.
    pub fn fit(&self, target: &[Vec3<T>]) -> Result<RetargetResult<T>> {
        if target.len() != NUM_LANDMARKS {
            return Err(Error::Shape(format!("{} target landmarks, expected {NUM_LANDMARKS}", target.len())));
        }
        if target.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite target landmark".into()));
        }
        let target = to64(target);
        let arap = &self.arap;
        let c_dim = self.model.components();
        let mean = to64(&self.model.mean);
        let lm = 2.0 * self.weights.landmark / NUM_LANDMARKS as f64;

        let mut c = vec![0.0; c_dim];
        let mut rots = arap.rotations(&mean);
        let (mut energy, mut lm_loss, mut lm_res, mut e_arap) = self.evaluate(&c, &mean, &target, &rots);
        let mut iterations = 0;
        while iterations < self.max_iterations {
            // gradient at c = 0 with the current rotations
            let mut g_x = vec![Vec3::zero(); mean.len()];
            if self.weights.arap > 0.0 {
                g_x = arap.energy_with(&mean, &rots).1;
                g_x.iter_mut().for_each(|g| *g *= self.weights.arap);
            }
            for (&i, y) in self.model.landmark_indices.iter().zip(&target) {
                g_x[i] += (mean[i] - *y) * lm;
            }
            let g0 = DVector::from_iterator(
                c_dim,
                self.modes.iter().map(|m| m.iter().zip(&g_x).map(|(a, b)| a.dot(*b)).sum::<f64>()),
            );
            let next: Vec<f64> = self.chol.solve(&(-g0)).iter().copied().collect();
            let nx = self.positions(&next);
            let nrots = arap.rotations(&nx);
            let (ne, nl, nr, na) = self.evaluate(&next, &nx, &target, &nrots);
            iterations += 1;
            if !ne.is_finite() {
                return Err(Error::Numerical("retarget objective became non-finite".into()));
            }
            if ne > energy {
                break;
            }
            let done = energy - ne <= self.tolerance * energy.max(1e-300);
            (c, rots, energy, lm_loss, lm_res, e_arap) = (next, nrots, ne, nl, nr, na);
            if done {
                break;
            }
        }
        Ok(RetargetResult {
            coeffs: c.into_iter().map(T::lit).collect(),
            landmark_loss: lm_loss,
            landmark_residual: lm_res,
            arap: e_arap,
            energy,
            iterations,
        })
    }
}

/// `Q v` for the Hessian `Q` of the fixed-rotation ARAP energy.
fn laplacian_apply(arap: &ArapReference<f64>, v: &[Vec3<f64>]) -> Vec<Vec3<f64>> {
    let mut out = vec![Vec3::zero(); v.len()];
    for (i, ring) in arap.rings.iter().enumerate() {
        for &(j, w) in ring {
            let d = (v[i] - v[j]) * (2.0 * w);
            out[i] += d;
            out[j] -= d;
        }
    }
    out
}

/// One-shot retargeting of a single landmark target.
pub fn retarget_fit<T: Real>(
    model: &BlendshapeModel<T>,
    target: &[Vec3<T>],
    weights: &FitWeights,
) -> Result<RetargetResult<T>> {
    Retargeter::new(model, *weights)?.fit(target)
}
