use serde::{Deserialize, Serialize};

use crate::render::Image;
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub huber_delta: f64,
    /// Weight of the pooled-pyramid term.
    pub perceptual_weight: f64,
    pub pyramid_levels: usize,
    /// Colour the rendered RGBA is composited over.
    pub background: [f64; 3],
    /// When set and masks are available, pixels outside the mask are ignored.
    pub mask_background: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            huber_delta: 0.1,
            perceptual_weight: 1.0,
            pyramid_levels: 3,
            background: [1.0; 3],
            mask_background: false,
        }
    }
}

#[inline]
fn huber<T: Real>(r: T, delta: T) -> (T, T) {
    if r.abs() <= delta {
        (T::lit(0.5) * r * r, r)
    } else {
        (delta * (r.abs() - T::lit(0.5) * delta), delta * r.signum())
    }
}

/// 2× average pooling; odd trailing rows and columns are dropped.
fn pool<T: Real>(img: &Image<T>) -> Image<T> {
    let (w, h, c) = (img.width / 2, img.height / 2, img.channels);
    let mut out = Image::new(w, h, c);
    let q = T::lit(0.25);
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                let s = img.pixel(2 * x, 2 * y)[k]
                    + img.pixel(2 * x + 1, 2 * y)[k]
                    + img.pixel(2 * x, 2 * y + 1)[k]
                    + img.pixel(2 * x + 1, 2 * y + 1)[k];
                out.pixel_mut(x, y)[k] = s * q;
            }
        }
    }
    out
}

/// Adjoint of [`pool`], accumulated into `fine`.
fn unpool_add<T: Real>(coarse: &Image<T>, fine: &mut Image<T>) {
    let q = T::lit(0.25);
    for y in 0..coarse.height {
        for x in 0..coarse.width {
            for k in 0..coarse.channels {
                let g = coarse.pixel(x, y)[k] * q;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    fine.pixel_mut(2 * x + dx, 2 * y + dy)[k] += g;
                }
            }
        }
    }
}

/// Weighted Huber sum between two same-shaped images, with its gradient
/// with respect to `a`.
fn huber_image<T: Real>(a: &Image<T>, b: &Image<T>, weight: Option<&Image<T>>, delta: T) -> (T, Image<T>) {
    let mut grad = Image::new(a.width, a.height, a.channels);
    let mut total = T::zero();
    for i in 0..a.width * a.height {
        let w = weight.map_or(T::one(), |m| m.data[i]);
        if w == T::zero() {
            continue;
        }
        for k in 0..a.channels {
            let j = i * a.channels + k;
            let (l, g) = huber(a.data[j] - b.data[j], delta);
            total += w * l;
            grad.data[j] = w * g;
        }
    }
    (total, grad)
}

/// Rendering loss of premultiplied RGBA `rendered` against RGB `target`:
/// pixel Huber plus Huber over a pooled pyramid. Returns the loss and its
/// gradient with respect to `rendered`.
pub fn loss<T: Real>(
    rendered: &Image<T>,
    target: &Image<T>,
    mask: Option<&Image<T>>,
    cfg: &LossConfig,
) -> (T, Image<T>) {
    assert_eq!(rendered.channels, 4);
    assert_eq!((rendered.width, rendered.height, 3), (target.width, target.height, target.channels));
    let bg = [T::lit(cfg.background[0]), T::lit(cfg.background[1]), T::lit(cfg.background[2])];
    let rgb = rendered.composite_over(bg);
    let delta = T::lit(cfg.huber_delta);
    let weight = if cfg.mask_background { mask } else { None };

    let (mut total, mut g_rgb) = huber_image(&rgb, target, weight, delta);
    if cfg.perceptual_weight != 0.0 {
        let pw = T::lit(cfg.perceptual_weight);
        let mut levels = vec![(rgb.clone(), target.clone(), weight.cloned())];
        for _ in 0..cfg.pyramid_levels {
            let (a, b, m) = levels.last().unwrap();
            if a.width < 2 || a.height < 2 {
                break;
            }
            levels.push((pool(a), pool(b), m.as_ref().map(pool)));
        }
        // walk back down, carrying the gradient of all coarser levels
        let mut carry: Option<Image<T>> = None;
        for l in (1..levels.len()).rev() {
            let (a, b, m) = &levels[l];
            let (v, mut g) = huber_image(a, b, m.as_ref(), delta);
            total += pw * v;
            g.data.iter_mut().for_each(|x| *x *= pw);
            if let Some(c) = carry.take() {
                unpool_add(&c, &mut g);
            }
            carry = Some(g);
        }
        if let Some(c) = carry {
            unpool_add(&c, &mut g_rgb);
        }
    }

    // rgb = C + (1 − A) · bg
    let mut grad = Image::new(rendered.width, rendered.height, 4);
    for (src, dst) in g_rgb.data.chunks_exact(3).zip(grad.data.chunks_exact_mut(4)) {
        dst[..3].copy_from_slice(src);
        dst[3] = -(src[0] * bg[0] + src[1] * bg[1] + src[2] * bg[2]);
    }
    (total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opaque(rgb: &Image<f64>) -> Image<f64> {
        let mut out = Image::new(rgb.width, rgb.height, 4);
        for (s, d) in rgb.data.chunks_exact(3).zip(out.data.chunks_exact_mut(4)) {
            d[..3].copy_from_slice(s);
            d[3] = 1.0;
        }
        out
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let t = Image::filled(8, 8, &[0.2, 0.4, 0.6]);
        let (l, g) = loss(&opaque(&t), &t, None, &LossConfig::default());
        assert_eq!(l, 0.0);
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_constant_offset_is_quadratic() {
        let t = Image::filled(8, 8, &[0.2, 0.4, 0.6]);
        let r = Image::filled(8, 8, &[0.25, 0.45, 0.65]);
        let cfg = LossConfig::default();
        let (l, _) = loss(&opaque(&r), &t, None, &cfg);
        // 64 + 16 + 4 + 1 pixels over the base and three pooled levels
        let terms = 3.0 * (64.0 + cfg.perceptual_weight * (16.0 + 4.0 + 1.0));
        assert!((l - terms * 0.5 * 0.05f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut rendered = Image::<f64>::new(8, 8, 4);
        rendered.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        let mut target = Image::new(8, 8, 3);
        target.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        let mut mask = Image::new(8, 8, 1);
        mask.data.iter_mut().for_each(|v| *v = if rng.gen_bool(0.7) { 1.0 } else { 0.0 });
        for cfg in [
            LossConfig::default(),
            LossConfig { mask_background: true, background: [0.0, 0.5, 1.0], ..LossConfig::default() },
        ] {
            let (_, g) = loss(&rendered, &target, Some(&mask), &cfg);
            let h = 1e-6;
            for j in 0..rendered.data.len() {
                let mut a = rendered.clone();
                a.data[j] += h;
                let mut b = rendered.clone();
                b.data[j] -= h;
                let fd = (loss(&a, &target, Some(&mask), &cfg).0 - loss(&b, &target, Some(&mask), &cfg).0) / (2.0 * h);
                let rel = (fd - g.data[j]).abs() / fd.abs().max(g.data[j].abs()).max(1e-6);
                assert!(rel < 1e-4, "entry {j}: {fd} vs {}", g.data[j]);
            }
        }
    }
}
