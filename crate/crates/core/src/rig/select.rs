use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    /// Lloyd iterations from a farthest-point start.
    #[default]
    KMeans,
    /// Farthest-point sampling alone; every control is a splat position.
    FarthestPoint,
}

const MAX_LLOYD_ITERS: usize = 50;

/// Chooses `k` control points covering `positions`. The first seed point
/// is drawn from `seed`; everything after that is deterministic.
pub fn select_control_points<T: Real>(
    positions: &[Vec3<T>],
    k: usize,
    seed: u64,
    method: SelectionMethod,
) -> Result<Vec<Vec3<T>>> {
    let n = positions.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot select {k} control points from {n} splats")));
    }
    let seeds = farthest_point_indices(positions, k, seed);
    let mut centers: Vec<Vec3<T>> = seeds.iter().map(|&i| positions[i]).collect();
    if method == SelectionMethod::FarthestPoint {
        return Ok(centers);
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let next: Vec<usize> = positions.par_iter().map(|&p| nearest(&centers, p)).collect();
        if next == assign {
            break;
        }
        assign = next;
        let mut sums = vec![Vec3::zero(); k];
        let mut counts = vec![0usize; k];
        for (p, &c) in positions.iter().zip(&assign) {
            sums[c] += *p;
            counts[c] += 1;
        }
        for c in 0..k {
            // an empty cluster keeps its previous centre
            if counts[c] > 0 {
                centers[c] = sums[c] / T::from_usize_lossy(counts[c]);
            }
        }
    }
    Ok(centers)
}

pub(crate) fn nearest<T: Real>(centers: &[Vec3<T>], p: Vec3<T>) -> usize {
    let mut best = (0, T::infinity());
    for (i, c) in centers.iter().enumerate() {
        let d = (*c - p).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn farthest_point_indices<T: Real>(positions: &[Vec3<T>], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..positions.len());
    let mut chosen = vec![first];
    let mut dist: Vec<T> = positions.iter().map(|p| (*p - positions[first]).norm_squared()).collect();
    while chosen.len() < k {
        // ties go to the lowest index, which also avoids re-picking a point
        let mut best = (0, -T::one());
        for (i, &d) in dist.iter().enumerate() {
            if d > best.1 {
                best = (i, d);
            }
        }
        let next = best.0;
        chosen.push(next);
        let pn = positions[next];
        dist.par_iter_mut().zip(positions).for_each(|(d, p)| *d = d.min((*p - pn).norm_squared()));
        // duplicates of chosen points have distance zero; make sure they can
        // still be selected once everything else is covered
        dist[next] = -T::one();
    }
    chosen
}
