use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{mesh_depth_render, visible_vertices, Camera, CameraJson, TriMesh, Vec2, Vec3};
use crate::io::{read_json, write_json};
use crate::synth::Region;
use crate::{Error, Real, Result};

use super::model::{landmark_region, BlendshapeModel, NUM_LANDMARKS};

/// Search radius of [`lift_landmarks`], in pixels.
pub const LIFT_RADIUS_PX: f64 = 25.0;
/// Relative depth slack of the shadow-map visibility test.
pub const LIFT_DEPTH_BIAS: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPoint {
    pub xy: [f64; 2],
    pub region: Region,
}

/// 2D landmark annotation on a rendered image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkAnnotation {
    pub image: String,
    pub camera: CameraJson,
    pub points: Vec<AnnotatedPoint>,
}

impl LandmarkAnnotation {
    /// Projects the given vertices of `mesh` as an annotation.
    pub fn from_vertices<T: Real>(mesh: &TriMesh<T>, indices: &[usize], cam: &Camera<T>, image: &str) -> Result<Self> {
        let points = indices
            .iter()
            .enumerate()
            .map(|(l, &i)| {
                let (p, _) = cam
                    .project(mesh.vertices[i])
                    .ok_or_else(|| Error::InvalidArgument(format!("landmark {l} is behind the camera")))?;
                Ok(AnnotatedPoint { xy: [p.x.f64(), p.y.f64()], region: landmark_region(l) })
            })
            .collect::<Result<_>>()?;
        Ok(Self { image: image.to_string(), camera: cam.to_json(), points })
    }

    /// Points grouped as left eye, right eye, mouth (stable within a
    /// region), after checking the 6/6/8 split.
    pub fn ordered(&self) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(NUM_LANDMARKS);
        for (region, want) in Region::ALL.into_iter().zip([6, 6, 8]) {
            let pts: Vec<[f64; 2]> = self.points.iter().filter(|p| p.region == region).map(|p| p.xy).collect();
            if pts.len() != want {
                return Err(Error::InvalidArgument(format!(
                    "{} has {} points, expected {want}",
                    region.name(),
                    pts.len()
                )));
            }
            out.extend(pts);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// For each 2D point, the visible vertex whose projection is nearest.
pub fn lift_landmarks<T: Real>(mesh: &TriMesh<T>, cam: &Camera<T>, points: &[[f64; 2]]) -> Result<Vec<usize>> {
    let depth = mesh_depth_render(mesh, cam);
    let visible = visible_vertices(mesh, cam, &depth, T::lit(LIFT_DEPTH_BIAS));
    let projected: Vec<(usize, Vec2<T>)> = mesh
        .vertices
        .iter()
        .enumerate()
        .filter(|&(i, _)| visible[i])
        .filter_map(|(i, &v)| cam.project(v).map(|(p, _)| (i, p)))
        .collect();
    points
        .iter()
        .enumerate()
        .map(|(index, &[x, y])| {
            let q = Vec2::new(T::lit(x), T::lit(y));
            let best = projected
                .iter()
                .map(|&(i, p)| (i, (p - q).norm().f64()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            match best {
                Some((i, d)) if d <= LIFT_RADIUS_PX => Ok(i),
                _ => Err(Error::LandmarkNotVisible { index, x, y, radius: LIFT_RADIUS_PX }),
            }
        })
        .collect()
}

/// Lifts an annotation to vertex indices in canonical landmark order.
pub fn lift_annotation<T: Real>(mesh: &TriMesh<T>, annotation: &LandmarkAnnotation) -> Result<Vec<usize>> {
    let cam = Camera::from_json(&annotation.camera);
    lift_landmarks(mesh, &cam, &annotation.ordered()?)
}

fn extent(points: &[[f64; 2]]) -> [f64; 2] {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    [hi[0] - lo[0], hi[1] - lo[1]]
}

fn region_slots(region: Region) -> std::ops::Range<usize> {
    match region {
        Region::LeftEye => 0..6,
        Region::RightEye => 6..12,
        Region::Mouth => 12..20,
    }
}

/// Per-region, per-axis scale from source pixels to character units in
/// the camera plane. A zero source extent disables that axis.
pub fn transfer_scales<T: Real>(
    neutral: &[[f64; 2]],
    model: &BlendshapeModel<T>,
    cam: &Camera<T>,
) -> Result<[[f64; 2]; 3]> {
    if neutral.len() != NUM_LANDMARKS {
        return Err(Error::Shape(format!("{} source landmarks, expected {NUM_LANDMARKS}", neutral.len())));
    }
    let canon: Vec<[f64; 2]> = model
        .landmark_positions(&model.mean)
        .iter()
        .map(|&p| {
            let c = cam.to_camera(p);
            [c.x.f64(), c.y.f64()]
        })
        .collect();
    let mut scales = [[0.0; 2]; 3];
    for (r, region) in Region::ALL.into_iter().enumerate() {
        let slots = region_slots(region);
        let src = extent(&neutral[slots.clone()]);
        let dst = extent(&canon[slots]);
        for k in 0..2 {
            scales[r][k] = if src[k] > 0.0 {
                dst[k] / src[k]
            } else {
                log::warn!("source {} has zero extent along axis {k}; not transferring it", region.name());
                0.0
            };
        }
    }
    Ok(scales)
}

/// Maps a source landmark trajectory (frame 0 neutral, pixels) onto the
/// character's canonical 3D landmarks. Displacements are applied in the
/// camera's image plane with camera-space depth held fixed.
pub fn transfer_landmarks<T: Real>(
    source: &[Vec<[f64; 2]>],
    model: &BlendshapeModel<T>,
    cam: &Camera<T>,
) -> Result<Vec<Vec<Vec3<T>>>> {
    let Some(neutral) = source.first() else {
        return Err(Error::InvalidArgument("source trajectory is empty".into()));
    };
    if let Some(t) = source.iter().position(|f| f.len() != NUM_LANDMARKS) {
        return Err(Error::Shape(format!(
            "source frame {t} has {} landmarks, expected {NUM_LANDMARKS}",
            source[t].len()
        )));
    }
    let scales = transfer_scales(neutral, model, cam)?;
    let canon = model.landmark_positions(&model.mean);
    let inv = cam.pose.inverse();
    Ok(source
        .iter()
        .map(|frame| {
            (0..NUM_LANDMARKS)
                .map(|l| {
                    let r = Region::ALL.iter().position(|&g| g == landmark_region(l)).expect("known region");
                    let mut c = cam.to_camera(canon[l]);
                    c.x += T::lit(scales[r][0] * (frame[l][0] - neutral[l][0]));
                    c.y += T::lit(scales[r][1] * (frame[l][1] - neutral[l][1]));
                    inv.apply(c)
                })
                .collect()
        })
        .collect())
}

/// Reads a per-frame landmark CSV: a header, then `frame, x0, y0, …, x19, y19`.
pub fn read_landmark_csv(path: &Path) -> Result<Vec<Vec<[f64; 2]>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        if rec.len() != 1 + 2 * NUM_LANDMARKS {
            return Err(Error::parse(
                path,
                format!("row {row} has {} columns, expected {}", rec.len(), 1 + 2 * NUM_LANDMARKS),
            ));
        }
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::parse(path, format!("row {row}: {e}"))))
            .collect::<Result<_>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(path, format!("row {row} has a non-finite coordinate")));
        }
        out.push(vals.chunks_exact(2).map(|p| [p[0], p[1]]).collect());
    }
    Ok(out)
}

pub fn write_landmark_csv(path: &Path, frames: &[Vec<[f64; 2]>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut header = vec!["frame".to_string()];
    for l in 0..NUM_LANDMARKS {
        header.push(format!("x{l}"));
        header.push(format!("y{l}"));
    }
    w.write_record(&header).map_err(|e| Error::parse(path, e.to_string()))?;
    for (t, f) in frames.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(f.iter().flat_map(|p| [p[0].to_string(), p[1].to_string()]));
        w.write_record(&row).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
