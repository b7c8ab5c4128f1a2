use rayon::prelude::*;

use super::ControlRig;
use crate::geom::{quat_grad, Mat3, Quat, Se3, Vec3};
use crate::Real;

/// Below this norm the blended quaternion is replaced by the dominant
/// neighbour's rotation.
const MIN_BLEND_NORM: f64 = 1e-6;

/// `Σ_j w_j (R_j x + t_j)` over each splat's neighbours, accumulated as
/// offsets from `x` so identity transforms reproduce `x` bit for bit.
pub fn lbs_deform<T: Real>(positions: &[Vec3<T>], rig: &ControlRig<T>, transforms: &[Se3<T>]) -> Vec<Vec3<T>> {
    assert_eq!(transforms.len(), rig.num_controls());
    let mats: Vec<Mat3<T>> = transforms.iter().map(Se3::matrix).collect();
    positions
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let (nb, w) = rig.splat(i);
            let offset: Vec3<T> =
                nb.iter().zip(w).map(|(&k, &wk)| (mats[k].mul_vec(x) + transforms[k].translation - x) * wk).sum();
            x + offset
        })
        .collect()
}

/// Gradients of `lbs_deform` with respect to each control's rotation
/// matrix and translation, given output gradients `g`.
pub fn lbs_deform_backward<T: Real>(
    positions: &[Vec3<T>],
    rig: &ControlRig<T>,
    g: &[Vec3<T>],
) -> Vec<(Mat3<T>, Vec3<T>)> {
    let mut out = vec![(Mat3::zero(), Vec3::zero()); rig.num_controls()];
    for (i, (&x, &gi)) in positions.iter().zip(g).enumerate() {
        let (nb, w) = rig.splat(i);
        for (&k, &wk) in nb.iter().zip(w) {
            let gw = gi * wk;
            out[k].0 = out[k].0.add(&Mat3::outer(gw, x));
            out[k].1 += gw;
        }
    }
    out
}

/// Sign-aligned weighted quaternion sum for splat `i`, before normalising.
fn blend_raw<T: Real>(rig: &ControlRig<T>, transforms: &[Se3<T>], i: usize) -> (Quat<T>, Vec<T>) {
    let (nb, w) = rig.splat(i);
    let anchor = transforms[nb[rig.dominant(i)]].rotation;
    let signs: Vec<T> =
        nb.iter().map(|&k| if transforms[k].rotation.dot(anchor) < T::zero() { -T::one() } else { T::one() }).collect();
    let mut sum = Quat::zero();
    for ((&k, &wk), &s) in nb.iter().zip(w).zip(&signs) {
        sum = sum + transforms[k].rotation.scale(wk * s);
    }
    (sum, signs)
}

/// Blended control rotation composed with each splat's rest orientation.
pub fn lbs_rotation_blend<T: Real>(rig: &ControlRig<T>, transforms: &[Se3<T>], rest: &[Quat<T>]) -> Vec<Quat<T>> {
    assert_eq!(transforms.len(), rig.num_controls());
    rest.par_iter()
        .enumerate()
        .map(|(i, &q_rest)| {
            let (sum, _) = blend_raw(rig, transforms, i);
            let blended = if sum.norm() < T::lit(MIN_BLEND_NORM) {
                transforms[rig.splat(i).0[rig.dominant(i)]].rotation
            } else {
                sum.normalize()
            };
            blended * q_rest
        })
        .collect()
}

/// Gradients of `lbs_rotation_blend` with respect to each control's
/// quaternion and each splat's rest quaternion.
pub fn lbs_rotation_blend_backward<T: Real>(
    rig: &ControlRig<T>,
    transforms: &[Se3<T>],
    rest: &[Quat<T>],
    g: &[Quat<T>],
) -> (Vec<Quat<T>>, Vec<Quat<T>>) {
    let per_splat: Vec<(Vec<(usize, Quat<T>)>, Quat<T>)> = rest
        .par_iter()
        .enumerate()
        .map(|(i, &q_rest)| {
            let (nb, w) = rig.splat(i);
            let (sum, signs) = blend_raw(rig, transforms, i);
            if sum.norm() < T::lit(MIN_BLEND_NORM) {
                let k = nb[rig.dominant(i)];
                let (ga, gb) = quat_grad::mul(transforms[k].rotation, q_rest, g[i]);
                return (vec![(k, ga)], gb);
            }
            let (gn, g_rest) = quat_grad::mul(sum.normalize(), q_rest, g[i]);
            let gs = quat_grad::normalize(sum, gn);
            let contrib = nb.iter().zip(w).zip(&signs).map(|((&k, &wk), &s)| (k, gs.scale(wk * s))).collect();
            (contrib, g_rest)
        })
        .collect();
    let mut g_ctrl = vec![Quat::zero(); rig.num_controls()];
    let mut g_rest = Vec::with_capacity(rest.len());
    for (contrib, gr) in per_splat {
        for (k, gq) in contrib {
            g_ctrl[k] = g_ctrl[k] + gq;
        }
        g_rest.push(gr);
    }
    (g_ctrl, g_rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rig(m: usize, weights: Vec<f64>, neighbors: Vec<usize>, k: usize) -> ControlRig<f64> {
        ControlRig { control_points: vec![Vec3::zero(); k], neighbors, weights, m }
    }

    #[test]
    fn identity_transforms_leave_positions_unchanged() {
        let r = rig(2, vec![0.3, 0.7, 0.5, 0.5], vec![0, 1, 1, 0], 2);
        let x = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 5.0, 2.0)];
        assert_eq!(lbs_deform(&x, &r, &[Se3::identity(), Se3::identity()]), x);
    }

    #[test]
    fn single_neighbor_translation() {
        let r = rig(1, vec![1.0], vec![0], 1);
        let out = lbs_deform(&[Vec3::zero()], &r, &[Se3::from_translation(Vec3::new(1.0, 0.0, 0.0))]);
        assert_eq!(out[0], Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn translations_blend_linearly() {
        let r = rig(2, vec![0.5, 0.5], vec![0, 1], 2);
        let t = [Se3::from_translation(Vec3::new(1.0, 0.0, 0.0)), Se3::from_translation(Vec3::new(0.0, 1.0, 0.0))];
        assert_eq!(lbs_deform(&[Vec3::zero()], &r, &t)[0], Vec3::new(0.5, 0.5, 0.0));
    }

    #[test]
    fn rotation_blend_cases() {
        let z = |deg: f64| Quat::from_axis_angle(Vec3::new(0.0, 0.0, deg.to_radians()));
        let rest = [Quat::from_axis_angle(Vec3::new(0.2, 0.0, 0.0))];

        let r1 = rig(1, vec![1.0], vec![0], 1);
        let out = lbs_rotation_blend(&r1, &[Se3::from_rotation(z(90.0))], &rest);
        let expect = z(90.0) * rest[0];
        assert!((out[0].dot(expect).abs() - 1.0).abs() < 1e-12);

        let r2 = rig(2, vec![0.5, 0.5], vec![0, 1], 2);
        let out =
            lbs_rotation_blend(&r2, &[Se3::from_rotation(z(30.0)), Se3::from_rotation(z(-30.0))], &[Quat::identity()]);
        assert!(out[0].angle() < 1e-6);

        // antipodal representation of the same rotation must not cancel
        let out =
            lbs_rotation_blend(&r2, &[Se3::from_rotation(z(30.0)), Se3::from_rotation(-z(30.0))], &[Quat::identity()]);
        assert!((out[0].angle() - 30f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn rotation_blend_backward_matches_differences() {
        let r = rig(3, vec![0.5, 0.3, 0.2], vec![0, 1, 2], 3);
        let qs = [Vec3::new(0.3, -0.2, 0.5), Vec3::new(-0.1, 0.4, 0.2), Vec3::new(0.2, 0.1, -0.6)];
        let t: Vec<Se3<f64>> = qs.iter().map(|&v| Se3::from_rotation(Quat::from_axis_angle(v))).collect();
        let rest = [Quat::from_axis_angle(Vec3::new(0.1, 0.7, -0.3))];
        let up = Quat::new(0.3, -0.8, 0.5, 0.1);
        let f = |t: &[Se3<f64>], rest: &[Quat<f64>]| lbs_rotation_blend(&r, t, rest)[0].dot(up);
        let (gc, gr) = lbs_rotation_blend_backward(&r, &t, &rest, &[up]);
        let h = 1e-6;
        for k in 0..3 {
            for c in 0..4 {
                let bump = |d: f64| {
                    let mut tt = t.clone();
                    let mut a = tt[k].rotation.to_wxyz();
                    a[c] += d;
                    tt[k].rotation = Quat::from_wxyz(a);
                    f(&tt, &rest)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                assert!((fd - gc[k].to_wxyz()[c]).abs() < 1e-7, "control {k} comp {c}: {fd} vs {:?}", gc[k]);
            }
        }
        for c in 0..4 {
            let bump = |d: f64| {
                let mut a = rest[0].to_wxyz();
                a[c] += d;
                f(&t, &[Quat::from_wxyz(a)])
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            assert!((fd - gr[0].to_wxyz()[c]).abs() < 1e-7);
        }
    }

    #[test]
    fn deform_backward_matches_differences() {
        let r = rig(2, vec![0.6, 0.4, 0.1, 0.9], vec![0, 1, 1, 0], 2);
        let x = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.4, 0.5, 0.2)];
        let g = vec![Vec3::new(1.0, -2.0, 0.5), Vec3::new(0.3, 0.2, -1.0)];
        let grads = lbs_deform_backward(&x, &r, &g);
        // the loss is linear in R and t, so a unit bump gives the gradient exactly
        let base = Se3::identity();
        let f = |t: &[Se3<f64>; 2]| -> f64 {
            let mats: Vec<Mat3<f64>> = t.iter().map(Se3::matrix).collect();
            x.iter()
                .enumerate()
                .map(|(i, &xi)| {
                    let (nb, w) = r.splat(i);
                    let y: Vec3<f64> =
                        nb.iter().zip(w).map(|(&k, &wk)| (mats[k].mul_vec(xi) + t[k].translation) * wk).sum();
                    y.dot(g[i])
                })
                .sum()
        };
        for k in 0..2 {
            for c in 0..3 {
                let mut t = [base, base];
                t[k].translation[c] += 1.0;
                assert!((f(&t) - f(&[base, base]) - grads[k].1[c]).abs() < 1e-12);
            }
        }
        let expect_r0 = Mat3::outer(g[0] * 0.6, x[0]).add(&Mat3::outer(g[1] * 0.9, x[1]));
        assert_eq!(grads[0].0, expect_r0);
    }
}
