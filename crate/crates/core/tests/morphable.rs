use blendcap_core::geom::{Camera, TriMesh, Vec3};
use blendcap_core::morphable::{
    arap_energy, build_model, read_landmark_csv, read_trajectory_csv, retarget_fit, transfer_landmarks,
    write_landmark_csv, write_trajectory_csv, BlendshapeModel, FitWeights, ViewerExport, GOLDEN_VECTORS,
};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LANDMARKS: [usize; 20] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19];

/// Meshes spanned by `modes` smooth random displacement fields around an
/// icosphere.
fn training_set(modes: usize, count: usize, seed: u64) -> Vec<TriMesh<f64>> {
    let base = TriMesh::<f64>::icosphere(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<Vec<Vec3<f64>>> = (0..modes)
        .map(|_| {
            let a = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let k = rng.gen_range(1.0..3.0);
            base.vertices.iter().map(|&v| a * (k * v.dot(a)).sin() * 0.1).collect()
        })
        .collect();
    let mut meshes = Vec::new();
    for _ in 0..count {
        let c: Vec<f64> = (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let verts = base
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &v)| fields.iter().zip(&c).fold(v, |p, (f, &w)| p + f[i] * w))
            .collect();
        meshes.push(base.with_vertices(verts));
    }
    meshes
}

fn max_vertex_error(a: &[Vec3<f64>], b: &[Vec3<f64>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (*p - *q).norm()).fold(0.0, f64::max)
}

#[test]
fn singular_values_match_gram_eigenvalues() {
    let meshes = training_set(5, 12, 1);
    let model = build_model(&meshes, 100, &LANDMARKS).unwrap();
    assert_eq!(model.components(), 11);
    let n3 = 3 * meshes[0].num_vertices();
    let mut x = DMatrix::<f64>::zeros(meshes.len(), n3);
    for (r, m) in meshes.iter().enumerate() {
        for (i, v) in m.vertices.iter().enumerate() {
            for k in 0..3 {
                x[(r, 3 * i + k)] = v[k];
            }
        }
    }
    let mean = x.row_mean();
    for mut r in x.row_iter_mut() {
        r -= &mean;
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(&x * x.transpose()).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    for (s, e) in model.singular_values.iter().zip(&eig) {
        assert!((s * s - e.max(0.0)).abs() < 1e-9 * eig[0], "{s}² vs {e}");
    }
    assert!(model.singular_values[5..].iter().all(|&s| s < 1e-9 * model.singular_values[0]));
}

#[test]
fn rank_components_reconstruct_training_meshes() {
    let meshes = training_set(4, 10, 2);
    let model = build_model(&meshes, 4, &LANDMARKS).unwrap();
    for m in &meshes {
        let c = model.project(m).unwrap();
        let x = model.positions(&c).unwrap();
        assert!(max_vertex_error(&x, &m.vertices) < 1e-10);
    }
}

#[test]
fn reconstruction_error_is_monotone_in_components() {
    let meshes = training_set(6, 14, 3);
    let held = training_set(6, 1, 4);
    let model = build_model(&meshes, 13, &LANDMARKS).unwrap();
    let mut last = f64::INFINITY;
    for c in 1..=model.components() {
        let m = model.truncated(c);
        let x = m.positions(&m.project(&held[0]).unwrap()).unwrap();
        let err: f64 = x.iter().zip(&held[0].vertices).map(|(a, b)| (*a - *b).norm_squared()).sum();
        assert!(err <= last + 1e-12, "C={c}: {err} > {last}");
        last = err;
    }
}

#[test]
fn model_file_round_trip() {
    let meshes = training_set(3, 6, 5);
    let model = build_model(&meshes, 3, &LANDMARKS).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    model.save(&path).unwrap();
    assert_eq!(BlendshapeModel::<f64>::load(&path).unwrap(), model);
}

#[test]
fn viewer_golden_vectors_match_model_synthesis() {
    let meshes = training_set(6, 20, 6);
    let model = build_model(&meshes, 19, &LANDMARKS).unwrap();
    let export = ViewerExport::new(&model, 4, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model_viewer.json");
    export.save(&path).unwrap();
    let back = ViewerExport::load(&path).unwrap();
    assert_eq!(back.golden.len(), GOLDEN_VECTORS);
    assert_eq!(back.components, 4);
    assert!(back.golden[0].coeffs.iter().all(|&c| c == 0.0));
    let truncated = model.truncated(4);
    for g in &back.golden {
        let expected: Vec<f64> = truncated.positions(&g.coeffs).unwrap().iter().flat_map(|p| p.to_array()).collect();
        let viewer = back.synthesize(&g.coeffs);
        let worst = viewer.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-5, "viewer synthesis off by {worst}");
        let stored = g.positions.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(stored < 1e-5);
    }
    let spread = back.golden[1..].iter().flat_map(|g| g.coeffs.iter().map(|c| c.abs())).fold(0.0, f64::max);
    assert!(spread > 0.0 && spread < 6.0 * model.coefficient_std(0));
}

#[test]
fn retarget_recovers_a_training_expression() {
    let meshes = training_set(4, 16, 7);
    let model = build_model(&meshes, 15, &LANDMARKS).unwrap();
    let weights = FitWeights { arap: 0.0, ..FitWeights::default() };
    let zero = retarget_fit(&model, &model.landmark_positions(&model.mean), &weights).unwrap();
    assert!(zero.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt() < 1e-3);
    let target = model.landmark_positions(&meshes[3].vertices);
    let r = retarget_fit(&model, &target, &weights).unwrap();
    let fitted = model.landmark_positions(&model.positions(&r.coeffs).unwrap());
    assert!(max_vertex_error(&fitted, &target) < 0.02, "{}", max_vertex_error(&fitted, &target));
}

#[test]
fn landmark_transfer_preserves_neutral_frame() {
    let meshes = training_set(3, 6, 8);
    let model = build_model(&meshes, 3, &LANDMARKS).unwrap();
    let cam = Camera::<f64>::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zero(), Vec3::new(0.0, 1.0, 0.0), 64.0, 64, 64);
    let neutral: Vec<[f64; 2]> = model
        .landmark_positions(&model.mean)
        .iter()
        .map(|&p| {
            let (q, _) = cam.project(p).unwrap();
            [q.x * 1.5 + 3.0, q.y * 0.7 - 2.0]
        })
        .collect();
    let targets = transfer_landmarks(&[neutral.clone(), neutral], &model, &cam).unwrap();
    let rest = model.landmark_positions(&model.mean);
    for frame in &targets {
        assert!(max_vertex_error(frame, &rest) < 1e-9);
    }
}

#[test]
fn arap_is_invariant_to_rigid_motion_of_the_deformed_mesh() {
    let meshes = training_set(2, 2, 9);
    let reference = &meshes[0];
    let deformed = &meshes[1];
    let e0 = arap_energy(deformed, reference).unwrap().0;
    let q = blendcap_core::geom::Quat::from_axis_angle(Vec3::new(0.2, 0.9, -0.4));
    let moved =
        deformed.with_vertices(deformed.vertices.iter().map(|&v| q.rotate(v) + Vec3::new(1.0, -2.0, 0.5)).collect());
    let e1 = arap_energy(&moved, reference).unwrap().0;
    assert!((e0 - e1).abs() < 1e-9 * e0.max(1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn basis_rows_are_orthonormal(seed in 0u64..1000, modes in 2usize..6) {
        let meshes = training_set(modes, modes + 4, seed);
        let model = build_model(&meshes, modes, &LANDMARKS).unwrap();
        let b = &model.basis;
        for i in 0..model.components() {
            for j in 0..model.components() {
                let d: f64 = b.row(i).dot(&b.row(j));
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((d - expected).abs() < 1e-9);
            }
        }
        prop_assert!(model.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 40), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let traj = dir.path().join("t.csv");
        write_trajectory_csv(&traj, &rows).unwrap();
        prop_assert_eq!(read_trajectory_csv(&traj).unwrap(), rows.clone());
        let lm: Vec<Vec<[f64; 2]>> = rows.iter().map(|r| r.chunks_exact(2).map(|p| [p[0], p[1]]).collect()).collect();
        let lmp = dir.path().join("l.csv");
        write_landmark_csv(&lmp, &lm).unwrap();
        prop_assert_eq!(read_landmark_csv(&lmp).unwrap(), lm);
    }
}
