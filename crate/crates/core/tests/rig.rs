use blendcap_core::geom::{Quat, Se3, TriMesh, Vec3};
use blendcap_core::render::{CloneConfig, SplatSet};
use blendcap_core::rig::{
    build_rig, compute_blend_weights, lbs_deform, lbs_rotation_blend, select_control_points, ControlRig, RigConfig,
    SelectionMethod,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sphere_splats() -> SplatSet<f64> {
    SplatSet::from_mesh(&TriMesh::icosphere(2), &CloneConfig::default())
}

fn single(position: Vec3<f64>, scale: Vec3<f64>) -> SplatSet<f64> {
    let mut s = SplatSet::empty();
    s.push(position, Quat::identity(), scale, Vec3::splat(0.5));
    s
}

#[test]
fn eight_controls_cover_a_cube_grid() {
    let n = 10;
    let pts: Vec<Vec3<f64>> = (0..n * n * n)
        .map(|i| Vec3::new((i % n) as f64, (i / n % n) as f64, (i / (n * n)) as f64) * (1.0 / (n - 1) as f64))
        .collect();
    let controls = select_control_points(&pts, 8, 3, SelectionMethod::KMeans).unwrap();
    // eight equal octants of the unit cube: half-diagonal of a 0.5 cube
    let cell_radius = 3f64.sqrt() * 0.25;
    let worst =
        pts.iter().map(|p| controls.iter().map(|c| (*c - *p).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    assert!(worst <= 1.5 * cell_radius, "covering radius {worst}");
}

#[test]
fn coincident_control_dominates() {
    let s = single(Vec3::new(0.2, 0.1, 0.0), Vec3::new(0.1, 0.1, 0.05));
    let controls = [Vec3::new(0.2, 0.1, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
    let rig = compute_blend_weights(&s, &controls, 3).unwrap();
    let (nb, w) = rig.splat(0);
    assert_eq!(nb[0], 0);
    assert!(w[0] > 1.0 - 1e-6);
}

#[test]
fn equidistant_controls_share_weight() {
    let s = single(Vec3::zero(), Vec3::splat(0.3));
    let rig = compute_blend_weights(&s, &[Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, -1.0)], 2).unwrap();
    let (_, w) = rig.splat(0);
    assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
}

#[test]
fn stretched_splat_prefers_control_along_major_axis() {
    // scales (2, 1, 1): Mahalanobis distances 1/2 to A on x and 1 to B on y,
    // so the inverse distances are 2 and 1, normalised to 2/3 and 1/3
    let s = single(Vec3::zero(), Vec3::new(2.0, 1.0, 1.0));
    let a = Vec3::new(1.0, 0.0, 0.0);
    let b = Vec3::new(0.0, 1.0, 0.0);
    let rig = compute_blend_weights(&s, &[b, a], 2).unwrap();
    let (nb, w) = rig.splat(0);
    let wa = w[nb.iter().position(|&k| k == 1).unwrap()];
    let wb = w[nb.iter().position(|&k| k == 0).unwrap()];
    assert!((wa - 2.0 / 3.0).abs() < 1e-7 && (wb - 1.0 / 3.0).abs() < 1e-7);
}

#[test]
fn degenerate_scale_is_clamped() {
    let s = single(Vec3::zero(), Vec3::new(1e-12, 1.0, 1.0));
    let rig = compute_blend_weights(&s, &[Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)], 2).unwrap();
    assert!(rig.weights.iter().all(|w| w.is_finite()));
}

#[test]
fn rigid_transform_is_reproduced() {
    let s = sphere_splats();
    let rig = build_rig(&s, &RigConfig { controls: 30, ..RigConfig::default() }, 1).unwrap();
    let t = Se3::new(Quat::from_axis_angle(Vec3::new(0.3, -0.5, 0.2)), Vec3::new(0.4, -1.0, 2.0));
    let out = lbs_deform(&s.positions, &rig, &vec![t; 30]);
    for (o, x) in out.iter().zip(&s.positions) {
        assert!((*o - t.apply(*x)).norm() < 1e-9);
    }
    let rot = lbs_rotation_blend(&rig, &vec![t; 30], &s.rotations);
    for (r, q) in rot.iter().zip(&s.rotations) {
        assert!((r.dot(t.rotation * *q).abs() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn perturbing_one_control_is_local() {
    let s = sphere_splats();
    let rig = build_rig(&s, &RigConfig { controls: 40, neighbors: 4, ..RigConfig::default() }, 2).unwrap();
    let mut t = vec![Se3::identity(); 40];
    let before = lbs_deform(&s.positions, &rig, &t);
    t[7] = Se3::from_translation(Vec3::new(0.1, 0.0, 0.0));
    let after = lbs_deform(&s.positions, &rig, &t);
    for i in 0..s.len() {
        let bound = rig.splat(i).0.contains(&7);
        assert_eq!(before[i] != after[i], bound, "splat {i}");
    }
}

#[test]
fn rig_construction_is_deterministic_and_round_trips() {
    let s = sphere_splats();
    let cfg = RigConfig { controls: 50, ..RigConfig::default() };
    let a = build_rig(&s, &cfg, 11).unwrap();
    assert_eq!(a, build_rig(&s, &cfg, 11).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rig.bin");
    a.save(&path).unwrap();
    assert_eq!(ControlRig::<f64>::load(&path).unwrap(), a);
}

#[test]
fn farthest_point_controls_are_splat_positions() {
    let s = sphere_splats();
    let c = select_control_points(&s.positions, 25, 4, SelectionMethod::FarthestPoint).unwrap();
    assert!(c.iter().all(|p| s.positions.contains(p)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weights_partition_unity(seed in any::<u64>(), k in 1usize..30, m in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SplatSet::empty();
        for _ in 0..40 {
            let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let q = Quat::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 1.0);
            let sc = Vec3::new(rng.gen_range(0.01..0.5), rng.gen_range(0.01..0.5), rng.gen_range(0.001..0.5));
            s.push(p, q, sc, Vec3::splat(0.5));
        }
        let rig = build_rig(&s, &RigConfig { controls: k, neighbors: m, ..RigConfig::default() }, seed).unwrap();
        prop_assert_eq!(rig.m, m.min(k));
        for i in 0..s.len() {
            let (nb, w) = rig.splat(i);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!(nb.iter().all(|&j| j < k));
        }
    }
}
