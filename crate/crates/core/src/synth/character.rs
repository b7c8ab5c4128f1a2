use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{TriMesh, Vec3};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    SphereFace,
    BlobCreature,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere_face" => Ok(Self::SphereFace),
            "blob_creature" => Ok(Self::BlobCreature),
            _ => Err(Error::InvalidArgument(format!("unknown preset {s:?} (expected sphere_face or blob_creature)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    LeftEye,
    RightEye,
    Mouth,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::LeftEye, Region::RightEye, Region::Mouth];

    pub fn name(self) -> &'static str {
        match self {
            Self::LeftEye => "left_eye",
            Self::RightEye => "right_eye",
            Self::Mouth => "mouth",
        }
    }
}

/// Track names understood by [`crate::synth::animate`]. `yaw` is a rigid
/// rotation in radians; the others are vertex modes.
pub const TRACKS: [&str; 5] = ["mouth_open", "blink_left", "blink_right", "smile", "yaw"];

/// A procedural character: neutral mesh, per-track displacement modes at
/// unit amplitude with their region weights, and 20 annotated landmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct Character<T> {
    pub preset: Preset,
    pub mesh: TriMesh<T>,
    /// Region weight in `[0, 1]` of every vertex, per vertex track.
    pub regions: BTreeMap<String, Vec<T>>,
    /// Unit-amplitude displacement of every vertex, region weight applied.
    pub modes: BTreeMap<String, Vec<Vec3<T>>>,
    /// Six per eye, then eight on the mouth.
    pub landmarks: Vec<(usize, Region)>,
}

/// Unit sphere built from a subdivided cube: `6n² + 2` vertices.
pub fn cube_sphere(n: usize) -> TriMesh<f64> {
    assert!(n >= 1);
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let ni = n as i64;
    // (axis, sign): grid spans the other two axes
    for axis in 0..3 {
        for sign in [-1i64, 1] {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut id = |i: i64, j: i64| -> usize {
                let mut k = [0i64; 3];
                k[axis] = sign * ni;
                k[a] = 2 * i - ni;
                k[b] = 2 * j - ni;
                *index.entry(k).or_insert_with(|| {
                    // equal-angle mapping spreads vertices more evenly than a plain projection
                    let c = k.map(|v| (PI / 4.0 * v as f64 / ni as f64).tan());
                    vertices.push(Vec3::from_f64(c).normalize());
                    vertices.len() - 1
                })
            };
            for i in 0..ni {
                for j in 0..ni {
                    let q = [id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)];
                    faces.push([q[0], q[1], q[2]]);
                    faces.push([q[0], q[2], q[3]]);
                }
            }
        }
    }
    for f in &mut faces {
        let (p0, p1, p2) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        if (p1 - p0).cross(p2 - p0).dot(p0 + p1 + p2) < 0.0 {
            f.swap(1, 2);
        }
    }
    TriMesh::new(vertices, faces, None).expect("valid by construction")
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Smooth bump: 1 at `d = 0`, 0 from `d = 1` on.
fn falloff(d: f64) -> f64 {
    if d >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * d).cos())
    }
}

struct Layout {
    eye_center: [f64; 2],
    eye_radius: [f64; 2],
    mouth_center: f64,
    mouth_half: [f64; 2],
    skin: [f64; 3],
    eye_color: [f64; 3],
    lip_color: [f64; 3],
}

/// Procedural character with about `resolution` vertices. The face looks
/// down `+z`, the character's left is `+x`, and the mesh is mirror
/// symmetric about `x = 0`.
pub fn make_character<T: Real>(preset: Preset, resolution: usize, seed: u64) -> Result<Character<T>> {
    if resolution < 50 {
        return Err(Error::InvalidArgument(format!("resolution {resolution} is too small")));
    }
    let n = (((resolution as f64 - 2.0) / 6.0).sqrt().round() as usize).max(2);
    let sphere = cube_sphere(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tint = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)];
    let layout = match preset {
        Preset::SphereFace => Layout {
            eye_center: [0.33, 0.3],
            eye_radius: [0.19, 0.15],
            mouth_center: -0.38,
            mouth_half: [0.4, 0.08],
            skin: [0.86 + tint[0], 0.68 + tint[1], 0.55 + tint[2]],
            eye_color: [0.1, 0.25, 0.65],
            lip_color: [0.75, 0.12, 0.15],
        },
        Preset::BlobCreature => Layout {
            eye_center: [0.32, 0.35],
            eye_radius: [0.2, 0.16],
            mouth_center: -0.3,
            mouth_half: [0.45, 0.09],
            skin: [0.45 + tint[0], 0.72 + tint[1], 0.42 + tint[2]],
            eye_color: [0.95, 0.85, 0.1],
            lip_color: [0.35, 0.05, 0.3],
        },
    };
    // mirror-symmetric shape perturbation: cos terms in x only
    let bumps: Vec<([f64; 3], f64)> = match preset {
        Preset::SphereFace => vec![],
        Preset::BlobCreature => (0..4)
            .map(|_| {
                (
                    [rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0), rng.gen_range(0.0..2.0 * PI)],
                    rng.gen_range(0.03..0.07),
                )
            })
            .collect(),
    };
    let stretch = match preset {
        Preset::SphereFace => [0.9, 1.05, 0.95],
        Preset::BlobCreature => [1.05, 0.9, 1.0],
    };

    let mut vertices = Vec::with_capacity(sphere.num_vertices());
    let mut colors = Vec::with_capacity(sphere.num_vertices());
    let mut eye_l = Vec::new();
    let mut eye_r = Vec::new();
    let mut mouth = Vec::new();
    for d in &sphere.vertices {
        let r = 1.0 + bumps.iter().map(|(f, a)| a * (f[0] * d.x).cos() * (f[1] * d.y + f[2]).sin()).sum::<f64>();
        let p = Vec3::new(d.x * stretch[0] * r, d.y * stretch[1] * r, d.z * stretch[2] * r);
        vertices.push(p);
        let front = smoothstep(0.2, 0.5, d.z);
        let eye_d = |sx: f64| {
            let dx = (d.x - sx * layout.eye_center[0]) / layout.eye_radius[0];
            let dy = (d.y - layout.eye_center[1]) / layout.eye_radius[1];
            (dx * dx + dy * dy).sqrt()
        };
        let (dl, dr) = (eye_d(1.0), eye_d(-1.0));
        let mx = d.x / layout.mouth_half[0];
        let my = (d.y - layout.mouth_center) / layout.mouth_half[1];
        let dm = (mx * mx + my * my).sqrt();
        eye_l.push(front * falloff(dl / 1.8));
        eye_r.push(front * falloff(dr / 1.8));
        mouth.push(front * falloff(((mx / 1.4).powi(2) + (my / 3.5).powi(2)).sqrt()));

        // low-frequency skin shading so tangential motion is visible
        let shade = 1.0 + 0.12 * (5.0 * d.x).sin() * (4.0 * d.y + 1.0).cos() + 0.08 * (7.0 * d.y).sin();
        let mut c = layout.skin.map(|s| s * shade);
        if front > 0.0 && dl.min(dr) < 1.0 {
            c = layout.eye_color;
            if dl.min(dr) < 0.45 {
                c = [0.02, 0.02, 0.05];
            }
        } else if front > 0.0 && dm < 1.0 {
            c = layout.lip_color.map(|v| v * (0.85 + 0.15 * my.abs()));
        }
        colors.push(Vec3::from_f64(c.map(|v| v.clamp(0.0, 1.0))));
    }

    let mut modes: BTreeMap<String, Vec<Vec3<f64>>> = BTreeMap::new();
    let my_of = |p: &Vec3<f64>| p.y - layout.mouth_center * stretch[1];
    modes.insert(
        "mouth_open".into(),
        vertices
            .iter()
            .zip(&mouth)
            .map(|(p, &w)| {
                let below = smoothstep(0.03, -0.03, my_of(p));
                Vec3::new(0.0, -0.2 * below + 0.04 * (1.0 - below), -0.04 * below) * w
            })
            .collect(),
    );
    modes.insert(
        "smile".into(),
        vertices
            .iter()
            .zip(&mouth)
            .map(|(p, &w)| {
                let u = p.x / (layout.mouth_half[0] * stretch[0]);
                Vec3::new(0.05 * u, 0.1 * u * u, 0.0) * w
            })
            .collect(),
    );
    for (name, weights) in [("blink_left", &eye_l), ("blink_right", &eye_r)] {
        let yc = layout.eye_center[1] * stretch[1];
        modes.insert(
            name.into(),
            vertices.iter().zip(weights).map(|(p, &w)| Vec3::new(0.0, -0.85 * (p.y - yc), 0.0) * w).collect(),
        );
    }

    let mut landmarks = Vec::with_capacity(20);
    let nearest_dir = |target: Vec3<f64>, taken: &[(usize, Region)]| -> usize {
        let t = target.normalize();
        (0..sphere.num_vertices())
            .filter(|i| !taken.iter().any(|(j, _)| j == i))
            .min_by(|&a, &b| {
                (sphere.vertices[a] - t).norm_squared().total_cmp(&(sphere.vertices[b] - t).norm_squared())
            })
            .expect("non-empty mesh")
    };
    for (region, sx) in [(Region::LeftEye, 1.0), (Region::RightEye, -1.0)] {
        for k in 0..6 {
            let a = 2.0 * PI * k as f64 / 6.0;
            let x = sx * (layout.eye_center[0] + layout.eye_radius[0] * a.cos());
            let y = layout.eye_center[1] + layout.eye_radius[1] * a.sin();
            let z = (1.0 - x * x - y * y).max(0.0).sqrt();
            let i = nearest_dir(Vec3::new(x, y, z), &landmarks);
            landmarks.push((i, region));
        }
    }
    for k in 0..8 {
        let a = 2.0 * PI * k as f64 / 8.0;
        let x = layout.mouth_half[0] * a.cos();
        let y = layout.mouth_center + 1.5 * layout.mouth_half[1] * a.sin();
        let z = (1.0 - x * x - y * y).max(0.0).sqrt();
        let i = nearest_dir(Vec3::new(x, y, z), &landmarks);
        landmarks.push((i, Region::Mouth));
    }

    let mut regions = BTreeMap::new();
    regions.insert("mouth_open".to_string(), mouth.clone());
    regions.insert("smile".to_string(), mouth);
    regions.insert("blink_left".to_string(), eye_l);
    regions.insert("blink_right".to_string(), eye_r);
    let mesh = TriMesh::new(vertices, sphere.faces, Some(colors))?;
    Ok(Character {
        preset,
        mesh: mesh.cast(),
        regions: regions.into_iter().map(|(k, v)| (k, v.into_iter().map(T::lit).collect())).collect(),
        modes: modes.into_iter().map(|(k, v)| (k, v.into_iter().map(|d| d.cast()).collect())).collect(),
        landmarks,
    })
}

impl<T: Real> Character<T> {
    pub fn landmark_indices(&self) -> Vec<usize> {
        self.landmarks.iter().map(|l| l.0).collect()
    }
}
