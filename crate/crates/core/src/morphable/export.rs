use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::io::{read_json, write_json};
use crate::{Error, Real, Result};

use super::model::BlendshapeModel;

/// Number of golden coefficient vectors shipped with a viewer export.
pub const GOLDEN_VECTORS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenVector {
    pub coeffs: Vec<f64>,
    /// Flat `x y z` per vertex, synthesised with the truncated basis.
    pub positions: Vec<f64>,
}

/// Self-contained model document for the browser viewer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewerExport {
    pub num_vertices: usize,
    pub components: usize,
    pub mean: Vec<f64>,
    /// One flat `3N` row per component.
    pub basis: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub faces: Vec<[u32; 3]>,
    pub colors: Vec<f64>,
    pub landmark_indices: Vec<usize>,
    pub bbox_diag: f64,
    pub golden: Vec<GoldenVector>,
}

impl ViewerExport {
    /// Exports the first `components` basis rows. Golden vector 0 is all
    /// zeros; the rest draw coefficient `k` from a normal with the training
    /// standard deviation of component `k`.
    pub fn new<T: Real>(model: &BlendshapeModel<T>, components: usize, seed: u64) -> Result<Self> {
        let m = model.truncated(components);
        let c = m.components();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let golden = (0..GOLDEN_VECTORS)
            .map(|g| {
                let coeffs: Vec<f64> = if g == 0 {
                    vec![0.0; c]
                } else {
                    (0..c)
                        .map(|k| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            m.coefficient_std(k) * z
                        })
                        .collect()
                };
                let pos = m.positions(&coeffs.iter().map(|&v| T::lit(v)).collect::<Vec<_>>())?;
                Ok(GoldenVector { coeffs, positions: pos.iter().flat_map(|p| p.to_f64()).collect() })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            num_vertices: m.num_vertices(),
            components: c,
            mean: m.mean.iter().flat_map(|p| p.to_f64()).collect(),
            basis: m.basis.rows().into_iter().map(|r| r.iter().map(|v| v.f64()).collect()).collect(),
            singular_values: m.singular_values.iter().map(|v| v.f64()).collect(),
            faces: m.faces.iter().map(|f| f.map(|i| i as u32)).collect(),
            colors: m.colors.iter().flat_map(|p| p.to_f64()).collect(),
            landmark_indices: m.landmark_indices.clone(),
            bbox_diag: m.bbox_diag.f64(),
            golden,
        })
    }

    /// Vertex positions for `coeffs` using only this document, as the viewer
    /// computes them; missing trailing coefficients count as zero and extra
    /// ones are ignored.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (row, &c) in self.basis.iter().zip(coeffs) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n3 = 3 * self.num_vertices;
        let ok = self.mean.len() == n3
            && self.colors.len() == n3
            && self.basis.len() == self.components
            && self.basis.iter().all(|r| r.len() == n3)
            && self.singular_values.len() == self.components
            && self.faces.iter().flatten().all(|&i| (i as usize) < self.num_vertices)
            && self.golden.iter().all(|g| g.coeffs.len() == self.components && g.positions.len() == n3);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("inconsistent viewer export".into()))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let e: Self = read_json(path)?;
        e.validate()?;
        Ok(e)
    }
}

/// Writes per-frame coefficients as CSV: `frame, c0, …, c{C-1}`.
pub fn write_trajectory_csv(path: &Path, frames: &[Vec<f64>]) -> Result<()> {
    let width = frames.first().map_or(0, Vec::len);
    if frames.iter().any(|f| f.len() != width) {
        return Err(Error::Shape("trajectory rows differ in length".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let header: Vec<String> = std::iter::once("frame".to_string()).chain((0..width).map(|k| format!("c{k}"))).collect();
    w.write_record(&header).map_err(|e| Error::parse(path, e.to_string()))?;
    for (t, f) in frames.iter().enumerate() {
        let row: Vec<String> = std::iter::once(t.to_string()).chain(f.iter().map(|v| format!("{v:e}"))).collect();
        w.write_record(&row).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::parse(path, format!("row {row}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        out.push(vals);
    }
    Ok(out)
}
