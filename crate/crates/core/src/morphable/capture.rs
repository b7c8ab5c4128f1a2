use serde::{Deserialize, Serialize};

use crate::fit::{loss, LossConfig};
use crate::geom::{Camera, TriMesh, Vec3};
use crate::nets::{adam_step, AdamConfig, AdamState};
use crate::render::{render, render_backward, CloneConfig, Image, RenderConfig, SplatSet};
use crate::{Error, Real, Result};

use super::model::BlendshapeModel;
use super::FitWeights;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureFitConfig {
    pub steps: usize,
    pub lr: f64,
    pub huber_delta: f64,
    pub clone: CloneConfig,
    pub render: RenderConfig,
    pub adam: AdamConfig,
}

impl Default for CaptureFitConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            lr: 1e-3,
            huber_delta: 0.1,
            clone: CloneConfig::default(),
            render: RenderConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

/// A capture to fit: a registered mesh, optionally with an RGB image
/// (composited over white) and the camera it was taken with.
pub struct Capture<'a, T> {
    pub mesh: &'a TriMesh<T>,
    pub view: Option<(&'a Image<T>, &'a Camera<T>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureFit<T> {
    pub coeffs: Vec<T>,
    /// Mean point-to-point distance.
    pub l_geo: f64,
    /// Mean per-channel pixel Huber, when an image was given.
    pub l_rgb: Option<f64>,
}

/// Mean squared RGB difference between two images.
pub fn pixel_l2<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape("pixel L2 needs same-shaped images".into()));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (*x - *y).f64().powi(2)).sum::<f64>() / a.data.len().max(1) as f64)
}

/// Renders a mesh's splat clone over white.
pub fn render_mesh<T: Real>(mesh: &TriMesh<T>, cam: &Camera<T>, clone: &CloneConfig, cfg: &RenderConfig) -> Image<T> {
    render(&SplatSet::from_mesh(mesh, clone), cam, cfg).composite_over([T::one(); 3])
}

fn geo_loss<T: Real>(x: &[Vec3<T>], y: &[Vec3<T>]) -> (T, Vec<Vec3<T>>) {
    let n = T::from_usize_lossy(x.len().max(1));
    let mut total = T::zero();
    let grad = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let d = *a - *b;
            let r = d.norm();
            total += r;
            if r > T::zero() {
                d * (T::one() / (r * n))
            } else {
                Vec3::zero()
            }
        })
        .collect();
    (total / n, grad)
}

/// Coefficients of `capture` under `model`: orthogonal projection, then
/// Adam on `L_geo + λ_rgb L_rgb`. The best iterate by that objective is
/// returned, so refinement never makes the initial fit worse. Colour
/// gradients reach the coefficients through splat positions only.
pub fn fit_to_capture<T: Real>(
    model: &BlendshapeModel<T>,
    capture: &Capture<T>,
    weights: &FitWeights,
    cfg: &CaptureFitConfig,
) -> Result<CaptureFit<T>> {
    weights.validate()?;
    let target = &capture.mesh.vertices;
    if let Some((img, cam)) = capture.view {
        if (img.width, img.height, img.channels) != (cam.width, cam.height, 3) {
            return Err(Error::Shape("capture image must be RGB at the camera resolution".into()));
        }
    }
    let mut c = model.project(capture.mesh)?;
    let loss_cfg = LossConfig { huber_delta: cfg.huber_delta, perceptual_weight: 0.0, ..LossConfig::default() };

    let eval = |c: &[T], want_grad: bool| -> (f64, f64, Option<f64>, Vec<T>) {
        let x = model.positions(c).expect("coefficient count checked");
        let (lg, mut gx) = geo_loss(&x, target);
        let mut lr = None;
        if let Some((img, cam)) = capture.view {
            let mesh = model.mean_mesh().with_vertices(x);
            let splats = SplatSet::from_mesh(&mesh, &cfg.clone);
            let rgba = render(&splats, cam, &cfg.render);
            let count = T::from_usize_lossy(img.data.len().max(1));
            let (l, mut g) = loss(&rgba, img, None, &loss_cfg);
            lr = Some((l / count).f64());
            if want_grad && weights.lambda_rgb > 0.0 {
                let s = T::lit(weights.lambda_rgb) / count;
                g.data.iter_mut().for_each(|v| *v *= s);
                let sg = render_backward(&splats, cam, &cfg.render, &g);
                for (a, b) in gx.iter_mut().zip(&sg.positions) {
                    *a += *b;
                }
            }
        }
        let obj = lg.f64() + weights.lambda_rgb * lr.unwrap_or(0.0);
        let gc = if want_grad {
            model
                .basis
                .rows()
                .into_iter()
                .map(|r| {
                    gx.iter()
                        .enumerate()
                        .fold(T::zero(), |s, (i, g)| s + r[3 * i] * g.x + r[3 * i + 1] * g.y + r[3 * i + 2] * g.z)
                })
                .collect()
        } else {
            vec![]
        };
        (obj, lg.f64(), lr, gc)
    };

    let (mut best_obj, mut best_geo, mut best_rgb, mut grad) = eval(&c, true);
    let mut best = c.clone();
    let mut adam = AdamState::new(cfg.adam, &[c.len()]);
    for _ in 0..cfg.steps {
        adam_step(&mut adam, &mut [&mut c], &[&grad], cfg.lr);
        let (obj, lg, lr, g) = eval(&c, true);
        if !obj.is_finite() {
            return Err(Error::Numerical("capture fit objective became non-finite".into()));
        }
        if obj < best_obj {
            (best_obj, best_geo, best_rgb) = (obj, lg, lr);
            best.clone_from(&c);
        }
        grad = g;
    }
    Ok(CaptureFit { coeffs: best, l_geo: best_geo, l_rgb: best_rgb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphable::build_model;

    fn model() -> BlendshapeModel<f64> {
        let base = TriMesh::<f64>::icosphere(1);
        let meshes: Vec<_> = (0..4)
            .map(|f| base.with_vertices(base.vertices.iter().map(|&p| p * (1.0 + 0.1 * f as f64 * p.y)).collect()))
            .collect();
        build_model(&meshes, 3, &(0..20).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn mean_capture_gives_zero_coefficients() {
        let m = model();
        let mesh = m.mean_mesh();
        let r = fit_to_capture(
            &m,
            &Capture { mesh: &mesh, view: None },
            &FitWeights::default(),
            &CaptureFitConfig::default(),
        )
        .unwrap();
        assert!(r.coeffs.iter().all(|c| c.abs() < 1e-12));
        assert!(r.l_geo < 1e-12);
    }

    #[test]
    fn in_span_capture_is_recovered() {
        let m = model();
        let mesh = m.synthesize(&[0.3, -0.2, 0.1]).unwrap();
        let r = fit_to_capture(
            &m,
            &Capture { mesh: &mesh, view: None },
            &FitWeights::default(),
            &CaptureFitConfig::default(),
        )
        .unwrap();
        assert!(r.l_geo < 1e-9);
    }

    #[test]
    fn geo_gradient_matches_finite_differences() {
        let x: Vec<Vec3<f64>> = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.4, 0.0, 1.0)];
        let y = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.5, 0.5, 0.5)];
        let (_, g) = geo_loss(&x, &y);
        let h = 1e-7;
        for i in 0..2 {
            for k in 0..3 {
                let mut a = x.clone();
                a[i][k] += h;
                let mut b = x.clone();
                b[i][k] -= h;
                let fd = (geo_loss(&a, &y).0 - geo_loss(&b, &y).0) / (2.0 * h);
                assert!((fd - g[i][k]).abs() < 1e-6);
            }
        }
    }
}
