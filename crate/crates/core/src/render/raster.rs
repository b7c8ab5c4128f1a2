use rayon::prelude::*;

use super::image::Image;
use super::project::{project_backward, project_with_cache, ProjectCache, Splat2D};
use super::splats::{SplatGrads, SplatSet, OPACITY};
use super::RenderConfig;
use crate::geom::{Camera, Vec2, Vec3};
use crate::Real;

struct Prepared<T> {
    /// Splat index, its projection and backward cache, in compositing order.
    order: Vec<(usize, Splat2D<T>, ProjectCache<T>)>,
    /// Positions into `order` per tile, ascending.
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
}

fn prepare<T: Real>(splats: &SplatSet<T>, cam: &Camera<T>, cfg: &RenderConfig) -> Prepared<T> {
    let mut order: Vec<_> = (0..splats.len())
        .filter_map(|i| {
            project_with_cache(
                cam,
                splats.positions[i],
                splats.rotations[i],
                splats.log_scales[i],
                splats.colors[i],
                cfg,
            )
            .map(|(s, c)| (i, s, c))
        })
        .collect();
    order.sort_by(|a, b| a.1.depth.partial_cmp(&b.1.depth).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));

    let ts = cfg.tile_size.max(1);
    let tiles_x = cam.width.div_ceil(ts);
    let tiles_y = cam.height.div_ceil(ts);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    if cam.width == 0 || cam.height == 0 {
        return Prepared { order, tiles, tiles_x };
    }
    let tile_of = |v: T, len: usize| -> usize {
        let p = v.floor().max(T::zero()).to_usize().unwrap_or(0).min(len - 1);
        p / ts
    };
    for (k, (_, s, _)) in order.iter().enumerate() {
        // one pixel of slack on each side; the exact test happens per pixel
        let (x0, x1) =
            (tile_of(s.mean.x - s.radius - T::one(), cam.width), tile_of(s.mean.x + s.radius + T::one(), cam.width));
        let (y0, y1) =
            (tile_of(s.mean.y - s.radius - T::one(), cam.height), tile_of(s.mean.y + s.radius + T::one(), cam.height));
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                tiles[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    Prepared { order, tiles, tiles_x }
}

#[inline]
fn pixel_center<T: Real>(x: usize, y: usize) -> Vec2<T> {
    Vec2::new(T::from_usize_lossy(x) + T::lit(0.5), T::from_usize_lossy(y) + T::lit(0.5))
}

#[inline]
fn splat_alpha<T: Real>(s: &Splat2D<T>, p: Vec2<T>, alpha_max: T) -> Option<(T, T, Vec2<T>)> {
    if !s.covers(p) {
        return None;
    }
    let (g, d) = s.falloff(p);
    Some(((T::lit(OPACITY) * g).min(alpha_max), g, d))
}

/// Front-to-back composite of `list` (positions into `order`) at `p`.
#[inline]
fn shade<T: Real>(
    order: &[(usize, Splat2D<T>, ProjectCache<T>)],
    list: impl Iterator<Item = usize>,
    p: Vec2<T>,
    alpha_max: T,
) -> [T; 4] {
    let mut color = Vec3::zero();
    let mut trans = T::one();
    for k in list {
        let s = &order[k].1;
        if let Some((a, _, _)) = splat_alpha(s, p, alpha_max) {
            color = color + s.color * (a * trans);
            trans = trans * (T::one() - a);
        }
    }
    [color.x, color.y, color.z, T::one() - trans]
}

/// Renders premultiplied RGBA at the camera's resolution. Tiles are shaded
/// in parallel; the result does not depend on the thread count.
pub fn render<T: Real>(splats: &SplatSet<T>, cam: &Camera<T>, cfg: &RenderConfig) -> Image<T> {
    let prep = prepare(splats, cam, cfg);
    let ts = cfg.tile_size.max(1);
    let amax = T::lit(cfg.alpha_max);
    let tile_pixels: Vec<Vec<(usize, [T; 4])>> = prep
        .tiles
        .par_iter()
        .enumerate()
        .map(|(t, list)| {
            let (tx, ty) = (t % prep.tiles_x, t / prep.tiles_x);
            let mut out = Vec::with_capacity(ts * ts);
            for y in ty * ts..((ty + 1) * ts).min(cam.height) {
                for x in tx * ts..((tx + 1) * ts).min(cam.width) {
                    let rgba = shade(&prep.order, list.iter().map(|&k| k as usize), pixel_center(x, y), amax);
                    out.push((y * cam.width + x, rgba));
                }
            }
            out
        })
        .collect();
    let mut img = Image::new(cam.width, cam.height, 4);
    for (i, rgba) in tile_pixels.into_iter().flatten() {
        img.data[i * 4..i * 4 + 4].copy_from_slice(&rgba);
    }
    img
}

/// Single-threaded renderer that tests every splat at every pixel. Used to
/// check the tiled path, which must match it exactly.
pub fn render_reference<T: Real>(splats: &SplatSet<T>, cam: &Camera<T>, cfg: &RenderConfig) -> Image<T> {
    let prep = prepare(splats, cam, cfg);
    let amax = T::lit(cfg.alpha_max);
    let mut img = Image::new(cam.width, cam.height, 4);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let rgba = shade(&prep.order, 0..prep.order.len(), pixel_center(x, y), amax);
            img.pixel_mut(x, y).copy_from_slice(&rgba);
        }
    }
    img
}

/// Per-splat screen-space gradient: mean (2), conic (3), colour (3).
type Grad2D<T> = [T; 8];

/// Gradients of `Σ upstream ⊙ render(splats, cam)` with respect to every
/// splat attribute. `upstream` is RGBA at the camera's resolution. Culled
/// splats receive zero gradient.
pub fn render_backward<T: Real>(
    splats: &SplatSet<T>,
    cam: &Camera<T>,
    cfg: &RenderConfig,
    upstream: &Image<T>,
) -> SplatGrads<T> {
    assert_eq!((upstream.width, upstream.height, upstream.channels), (cam.width, cam.height, 4));
    let prep = prepare(splats, cam, cfg);
    let ts = cfg.tile_size.max(1);
    let amax = T::lit(cfg.alpha_max);

    let partials: Vec<Vec<Grad2D<T>>> = prep
        .tiles
        .par_iter()
        .enumerate()
        .map(|(t, list)| {
            let (tx, ty) = (t % prep.tiles_x, t / prep.tiles_x);
            let mut acc = vec![[T::zero(); 8]; list.len()];
            let mut hits: Vec<(usize, T, T, Vec2<T>, T)> = Vec::new();
            for y in ty * ts..((ty + 1) * ts).min(cam.height) {
                for x in tx * ts..((tx + 1) * ts).min(cam.width) {
                    let up = upstream.pixel(x, y);
                    if up.iter().all(|&g| g == T::zero()) {
                        continue;
                    }
                    let p = pixel_center(x, y);
                    hits.clear();
                    let mut trans = T::one();
                    for (local, &k) in list.iter().enumerate() {
                        if let Some((a, g, d)) = splat_alpha(&prep.order[k as usize].1, p, amax) {
                            hits.push((local, a, g, d, trans));
                            trans = trans * (T::one() - a);
                        }
                    }
                    let t_final = trans;
                    let gc = Vec3::new(up[0], up[1], up[2]);
                    let ga = up[3];
                    let mut behind = Vec3::zero();
                    for &(local, a, g, d, t_i) in hits.iter().rev() {
                        let s = &prep.order[list[local] as usize].1;
                        let slot = &mut acc[local];
                        let w = a * t_i;
                        slot[5] += gc.x * w;
                        slot[6] += gc.y * w;
                        slot[7] += gc.z * w;
                        let d_alpha = t_i * gc.dot(s.color - behind) + ga * t_final / (T::one() - a);
                        behind = s.color * a + behind * (T::one() - a);
                        if T::lit(OPACITY) * g >= amax {
                            continue;
                        }
                        let d_g = d_alpha * T::lit(OPACITY);
                        let d_sigma = -T::lit(0.5) * g * d_g;
                        let [ca, cb, cc] = s.conic;
                        let two = T::lit(2.0);
                        slot[0] += -d_sigma * two * (ca * d.x + cb * d.y);
                        slot[1] += -d_sigma * two * (cb * d.x + cc * d.y);
                        slot[2] += d_sigma * d.x * d.x;
                        slot[3] += d_sigma * two * d.x * d.y;
                        slot[4] += d_sigma * d.y * d.y;
                    }
                }
            }
            acc
        })
        .collect();

    let mut g2d = vec![[T::zero(); 8]; prep.order.len()];
    for (list, acc) in prep.tiles.iter().zip(&partials) {
        for (&k, a) in list.iter().zip(acc) {
            let dst = &mut g2d[k as usize];
            for c in 0..8 {
                dst[c] += a[c];
            }
        }
    }

    let per_splat: Vec<_> = prep
        .order
        .par_iter()
        .zip(&g2d)
        .map(|((i, s, cache), g)| {
            let (gp, gq, gs) =
                project_backward(cam, splats.rotations[*i], s, cache, Vec2::new(g[0], g[1]), [g[2], g[3], g[4]]);
            (*i, gp, gq, gs, Vec3::new(g[5], g[6], g[7]))
        })
        .collect();
    let mut out = SplatGrads::zeros(splats.len());
    for (i, gp, gq, gs, gcol) in per_splat {
        out.positions[i] = gp;
        out.rotations[i] = gq;
        out.log_scales[i] = gs;
        out.colors[i] = gcol;
    }
    out
}
