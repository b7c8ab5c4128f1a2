use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{Quat, Se3, TriMesh, Vec3};
use crate::{Error, Real, Result};

use super::character::Character;

/// Piecewise-linear amplitude curve over normalised time `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub name: String,
    /// `(time, amplitude)` keys sorted by time; held constant outside.
    pub keys: Vec<[f64; 2]>,
}

impl Track {
    pub fn new(name: &str, keys: &[[f64; 2]]) -> Self {
        Self { name: name.to_string(), keys: keys.to_vec() }
    }

    pub fn amplitude(&self, s: f64) -> f64 {
        let k = &self.keys;
        match k.iter().position(|p| p[0] > s) {
            None => k.last().map_or(0.0, |p| p[1]),
            Some(0) => k[0][1],
            Some(i) => {
                let (a, b) = (k[i - 1], k[i]);
                a[1] + (b[1] - a[1]) * (s - a[0]) / (b[0] - a[0])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionScript {
    pub tracks: Vec<Track>,
}

/// Named scripts used by the tools and tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptPreset {
    /// No motion.
    Static,
    /// Mouth, smile and blinks over the clip with a slow head turn.
    Expressions,
    /// Rigid yaw from 0 to the given angle.
    Yaw { degrees: f64 },
    /// Random keyframes on every track, small head yaw included.
    Random { seed: u64 },
}

impl MotionScript {
    pub fn preset(p: ScriptPreset) -> Self {
        let tracks = match p {
            ScriptPreset::Static => vec![],
            ScriptPreset::Expressions => vec![
                Track::new("mouth_open", &[[0.0, 0.0], [0.3, 1.0], [0.55, 0.2], [0.8, 0.8], [1.0, 0.4]]),
                Track::new("smile", &[[0.0, 0.0], [0.4, 0.0], [0.7, 1.0], [1.0, 0.5]]),
                Track::new("blink_left", &[[0.0, 0.0], [0.15, 0.0], [0.25, 1.0], [0.35, 0.0], [0.8, 0.0], [0.9, 0.9]]),
                Track::new(
                    "blink_right",
                    &[[0.0, 0.0], [0.15, 0.0], [0.25, 1.0], [0.35, 0.0], [0.55, 0.8], [0.65, 0.0]],
                ),
                Track::new("yaw", &[[0.0, 0.0], [0.5, 12f64.to_radians()], [1.0, -6f64.to_radians()]]),
            ],
            ScriptPreset::Yaw { degrees } => vec![Track::new("yaw", &[[0.0, 0.0], [1.0, degrees.to_radians()]])],
            ScriptPreset::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut tracks: Vec<Track> = ["mouth_open", "smile", "blink_left", "blink_right"]
                    .iter()
                    .map(|&name| {
                        let mut keys = vec![[0.0, 0.0]];
                        let n = rng.gen_range(2..5);
                        for j in 1..=n {
                            keys.push([j as f64 / n as f64, rng.gen_range(0.0..1.0)]);
                        }
                        Track::new(name, &keys)
                    })
                    .collect();
                let yaw = rng.gen_range(-8.0f64..8.0).to_radians();
                tracks.push(Track::new("yaw", &[[0.0, 0.0], [0.5, yaw], [1.0, -0.5 * yaw]]));
                tracks
            }
        };
        Self { tracks }
    }

    pub fn amplitude(&self, name: &str, s: f64) -> f64 {
        self.tracks.iter().filter(|t| t.name == name).map(|t| t.amplitude(s)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.tracks {
            if t.keys.is_empty() {
                return Err(Error::InvalidArgument(format!("track {} has no keys", t.name)));
            }
            if t.keys.iter().any(|k| !k[0].is_finite() || !k[1].is_finite()) {
                return Err(Error::InvalidArgument(format!("track {} has non-finite keys", t.name)));
            }
            if t.keys.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::InvalidArgument(format!(
                    "track {} keys are not strictly increasing in time",
                    t.name
                )));
            }
        }
        Ok(())
    }
}

/// One animated frame: the posed mesh and the rigid pose applied to it.
#[derive(Clone, Debug, PartialEq)]
pub struct AnimatedFrame<T> {
    pub mesh: TriMesh<T>,
    pub pose: Se3<T>,
}

/// Normalised time of frame `t` in a clip of `frames`.
pub fn clip_time(t: usize, frames: usize) -> f64 {
    if frames <= 1 {
        0.0
    } else {
        t as f64 / (frames - 1) as f64
    }
}

/// Displaces the character's neutral mesh by every vertex track, then
/// applies the rigid `yaw` pose about the vertical axis.
pub fn animate<T: Real>(
    character: &Character<T>,
    script: &MotionScript,
    frames: usize,
) -> Result<Vec<AnimatedFrame<T>>> {
    script.validate()?;
    let n = character.mesh.num_vertices();
    for t in &script.tracks {
        if t.name == "yaw" {
            continue;
        }
        let mode = character
            .modes
            .get(&t.name)
            .ok_or_else(|| Error::InvalidArgument(format!("character has no track {:?}", t.name)))?;
        if mode.len() != n {
            return Err(Error::Shape(format!("track {} covers {} of {n} vertices", t.name, mode.len())));
        }
    }
    Ok((0..frames)
        .map(|t| {
            let s = clip_time(t, frames);
            let mut verts = character.mesh.vertices.clone();
            for track in script.tracks.iter().filter(|tr| tr.name != "yaw") {
                let a = T::lit(track.amplitude(s));
                if a == T::zero() {
                    continue;
                }
                for (v, d) in verts.iter_mut().zip(&character.modes[&track.name]) {
                    *v += *d * a;
                }
            }
            let yaw = script.amplitude("yaw", s);
            let pose = Se3::from_rotation(Quat::from_axis_angle(Vec3::new(T::zero(), T::lit(yaw), T::zero())));
            if yaw != 0.0 {
                verts.iter_mut().for_each(|v| *v = pose.apply(*v));
            }
            AnimatedFrame { mesh: character.mesh.with_vertices(verts), pose }
        })
        .collect())
}
