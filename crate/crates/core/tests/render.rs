use blendcap_core::geom::{Camera, Quat, Se3, Vec2, Vec3};
use blendcap_core::render::{project_splat, render, render_backward, render_reference, Image, RenderConfig, SplatSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn front_cam(size: usize) -> Camera<f64> {
    Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zero(), Vec3::new(0.0, 1.0, 0.0), size as f64, size, size)
}

fn random_scene(rng: &mut ChaCha8Rng, n: usize, spread: f64, log_scale: (f64, f64)) -> SplatSet<f64> {
    let mut s = SplatSet::empty();
    for _ in 0..n {
        let p =
            Vec3::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), rng.gen_range(-spread..spread));
        let q = Quat::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let ls = Vec3::new(
            rng.gen_range(log_scale.0..log_scale.1),
            rng.gen_range(log_scale.0..log_scale.1),
            rng.gen_range(log_scale.0..log_scale.1),
        );
        let c = Vec3::new(rng.gen(), rng.gen(), rng.gen());
        s.push(p, q, ls.map(f64::exp), c);
    }
    s
}

fn random_cam(rng: &mut ChaCha8Rng, size: usize) -> Camera<f64> {
    let az: f64 = rng.gen_range(-0.8..0.8);
    let el: f64 = rng.gen_range(-0.4..0.4);
    let eye = Vec3::new(az.sin() * el.cos(), el.sin(), az.cos() * el.cos()) * 3.0;
    Camera::look_at(eye, Vec3::zero(), Vec3::new(0.0, 1.0, 0.0), size as f64, size, size)
}

fn random_upstream(rng: &mut ChaCha8Rng, size: usize) -> Image<f64> {
    let mut img = Image::new(size, size, 4);
    img.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    img
}

fn dot(a: &Image<f64>, b: &Image<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

#[test]
fn empty_set_renders_transparent() {
    let img = render(&SplatSet::<f64>::empty(), &front_cam(16), &RenderConfig::default());
    assert!(img.data.iter().all(|&v| v == 0.0));
    assert_eq!(img.channels, 4);
}

#[test]
fn single_large_red_splat() {
    let mut s = SplatSet::empty();
    s.push(Vec3::zero(), Quat::identity(), Vec3::splat(5.0), Vec3::new(1.0, 0.0, 0.0));
    let img = render(&s, &front_cam(16), &RenderConfig::default());
    let p = img.pixel(8, 8);
    assert!((p[0] - 0.99).abs() < 1e-12 && p[1] == 0.0 && p[2] == 0.0 && (p[3] - 0.99).abs() < 1e-12, "{p:?}");
}

#[test]
fn red_in_front_of_blue() {
    let mut s = SplatSet::empty();
    s.push(Vec3::new(0.0, 0.0, -1.0), Quat::identity(), Vec3::splat(5.0), Vec3::new(0.0, 0.0, 1.0));
    s.push(Vec3::new(0.0, 0.0, 0.5), Quat::identity(), Vec3::splat(5.0), Vec3::new(1.0, 0.0, 0.0));
    let img = render(&s, &front_cam(16), &RenderConfig::default());
    let p = img.pixel(8, 8);
    // hand-evaluated: C = 0.99·red + 0.01·0.99·blue, A = 1 − 0.01²
    let expect = [0.99, 0.0, 0.0099, 0.9999];
    for c in 0..4 {
        assert!((p[c] - expect[c]).abs() < 1e-12, "{p:?}");
    }
}

#[test]
fn depth_ties_resolve_by_index() {
    let mut s = SplatSet::empty();
    s.push(Vec3::zero(), Quat::identity(), Vec3::splat(5.0), Vec3::new(0.0, 1.0, 0.0));
    s.push(Vec3::zero(), Quat::identity(), Vec3::splat(5.0), Vec3::new(1.0, 0.0, 0.0));
    let img = render(&s, &front_cam(8), &RenderConfig::default());
    assert!((img.pixel(4, 4)[1] - 0.99).abs() < 1e-12);
}

#[test]
fn uniform_color_gradient_is_alpha_times_transmittance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = SplatSet::empty();
    s.push(Vec3::new(0.1, -0.1, 0.0), Quat::identity(), Vec3::new(0.3, 0.2, 0.1), Vec3::splat(0.5));
    let cam = front_cam(16);
    let up = random_upstream(&mut rng, 16);
    let img = render(&s, &cam, &RenderConfig::default());
    let g = render_backward(&s, &cam, &RenderConfig::default(), &up);
    // single splat: α·T = alpha channel
    for c in 0..3 {
        let expect: f64 = (0..16 * 16).map(|i| img.data[i * 4 + 3] * up.data[i * 4 + c]).sum();
        assert!((g.colors[0][c] - expect).abs() < 1e-12);
    }
}

#[test]
fn zero_upstream_gives_exactly_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = random_scene(&mut rng, 20, 0.5, (-2.5, -1.0));
    let g = render_backward(&s, &front_cam(16), &RenderConfig::default(), &Image::new(16, 16, 4));
    assert!(g.is_zero());
}

#[test]
fn culled_splats_get_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = random_scene(&mut rng, 5, 0.3, (-2.0, -1.0));
    s.push(Vec3::new(0.0, 0.0, 5.0), Quat::identity(), Vec3::splat(0.1), Vec3::splat(1.0)); // behind
    s.push(Vec3::new(30.0, 0.0, 0.0), Quat::identity(), Vec3::splat(0.1), Vec3::splat(1.0)); // off frame
    let g = render_backward(&s, &front_cam(16), &RenderConfig::default(), &Image::filled(16, 16, &[1.0; 4]));
    for i in [5, 6] {
        assert_eq!(g.positions[i], Vec3::zero());
        assert_eq!(g.colors[i], Vec3::zero());
        assert_eq!(g.log_scales[i], Vec3::zero());
        assert_eq!(g.rotations[i], Quat::zero());
    }
    assert!(g.colors[..5].iter().any(|c| c.norm() > 0.0));
}

/// True when no pixel centre sits within `margin` of a footprint edge or
/// of the alpha clamp, so central differences see a smooth function.
fn smooth_at(s: &SplatSet<f64>, cam: &Camera<f64>, cfg: &RenderConfig, margin: f64) -> bool {
    for i in 0..s.len() {
        let Some(p) = project_splat(cam, s.positions[i], s.rotations[i], s.log_scales[i], s.colors[i], cfg) else {
            continue;
        };
        for y in 0..cam.height {
            for x in 0..cam.width {
                let c = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let dx = ((c.x - p.mean.x).abs() - p.radius).abs();
                let dy = ((c.y - p.mean.y).abs() - p.radius).abs();
                if dx < margin || dy < margin {
                    return false;
                }
                if p.covers(c) && (p.falloff(c).0 - cfg.alpha_max).abs() < margin {
                    return false;
                }
            }
        }
    }
    true
}

fn scalar_loss(s: &SplatSet<f64>, cam: &Camera<f64>, cfg: &RenderConfig, up: &Image<f64>) -> f64 {
    dot(&render(s, cam, cfg), up)
}

#[test]
fn gradients_match_central_differences() {
    let cfg = RenderConfig::default();
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 100 {
        let cam = random_cam(&mut rng, 8);
        let s = random_scene(&mut rng, 3, 0.4, (-1.6, -0.7));
        if !smooth_at(&s, &cam, &cfg, 2e-2) {
            continue;
        }
        checked += 1;
        let up = random_upstream(&mut rng, 8);
        let g = render_backward(&s, &cam, &cfg, &up);
        let mut check = |analytic: f64, perturb: &dyn Fn(&mut SplatSet<f64>, f64)| {
            let mut a = s.clone();
            perturb(&mut a, h);
            let mut b = s.clone();
            perturb(&mut b, -h);
            let fd = (scalar_loss(&a, &cam, &cfg, &up) - scalar_loss(&b, &cam, &cfg, &up)) / (2.0 * h);
            let rel = (analytic - fd).abs() / fd.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max(rel);
            assert!(rel < 1e-3, "analytic {analytic} vs fd {fd}");
        };
        for i in 0..s.len() {
            for c in 0..3 {
                check(g.positions[i][c], &|s, d| s.positions[i][c] += d);
                check(g.log_scales[i][c], &|s, d| s.log_scales[i][c] += d);
                check(g.colors[i][c], &|s, d| s.colors[i][c] += d);
            }
            for c in 0..4 {
                let gq = g.rotations[i].to_wxyz()[c];
                check(gq, &|s, d| {
                    let mut q = s.rotations[i].to_wxyz();
                    q[c] += d;
                    s.rotations[i] = Quat::from_wxyz(q);
                });
            }
        }
    }
    eprintln!("worst relative error {worst:.2e}");
}

#[test]
fn tiled_render_matches_reference_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = RenderConfig::default();
    for _ in 0..5 {
        let cam = random_cam(&mut rng, 40);
        let s = random_scene(&mut rng, 150, 0.8, (-3.5, -1.5));
        assert_eq!(render(&s, &cam, &cfg), render_reference(&s, &cam, &cfg));
    }
}

#[test]
fn results_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = RenderConfig { tile_size: 8, ..RenderConfig::default() };
    let cam = random_cam(&mut rng, 32);
    let s = random_scene(&mut rng, 200, 0.8, (-3.5, -1.5));
    let up = random_upstream(&mut rng, 32);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| (render(&s, &cam, &cfg), render_backward(&s, &cam, &cfg, &up)))
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adding_a_splat_never_lowers_alpha(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam = random_cam(&mut rng, 16);
        let s = random_scene(&mut rng, 12, 0.6, (-3.0, -1.0));
        let extra = random_scene(&mut rng, 1, 0.6, (-3.0, -1.0));
        let mut more = s.clone();
        more.push(extra.positions[0], extra.rotations[0], extra.scale(0), extra.colors[0]);
        let cfg = RenderConfig::default();
        let (a, b) = (render(&s, &cam, &cfg), render(&more, &cam, &cfg));
        for i in 0..16 * 16 {
            prop_assert!(b.data[i * 4 + 3] >= a.data[i * 4 + 3] - 1e-15);
        }
    }

    #[test]
    fn translating_scene_and_camera_together_is_invisible(
        seed in any::<u64>(),
        dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam = random_cam(&mut rng, 16);
        let s = random_scene(&mut rng, 12, 0.6, (-3.0, -1.0));
        let delta = Vec3::new(dx, dy, dz);
        let mut moved = s.clone();
        moved.positions.iter_mut().for_each(|p| *p += delta);
        let mut cam2 = cam;
        cam2.pose = Se3::new(cam.pose.rotation, cam.pose.translation - cam.pose.rotation.rotate(delta));
        let cfg = RenderConfig::default();
        let (a, b) = (render(&s, &cam, &cfg), render(&moved, &cam2, &cfg));
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }
}
