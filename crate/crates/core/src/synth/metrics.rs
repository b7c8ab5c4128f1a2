use crate::geom::TriMesh;
use crate::render::Image;
use crate::{Error, Real, Result};

fn check_registered<T: Real>(pred: &TriMesh<T>, gt: &TriMesh<T>) -> Result<()> {
    if !pred.same_topology(gt) {
        return Err(Error::Topology(format!(
            "meshes are not registered ({} vs {} vertices, {} vs {} faces)",
            pred.num_vertices(),
            gt.num_vertices(),
            pred.faces.len(),
            gt.faces.len()
        )));
    }
    if gt.num_vertices() == 0 {
        return Err(Error::InvalidMesh("mesh has no vertices".into()));
    }
    Ok(())
}

/// Mean vertex distance divided by the ground-truth bounding-box diagonal.
pub fn metric_p2p<T: Real>(pred: &TriMesh<T>, gt: &TriMesh<T>) -> Result<f64> {
    check_registered(pred, gt)?;
    let sum: f64 = pred.vertices.iter().zip(&gt.vertices).map(|(a, b)| (*a - *b).norm().f64()).sum();
    Ok(sum / gt.num_vertices() as f64 / gt.bbox_diag().f64())
}

/// Mean over vertices of `1 − ⟨n_pred, n_gt⟩`; 0 is perfect, 2 is flipped.
pub fn metric_nc<T: Real>(pred: &TriMesh<T>, gt: &TriMesh<T>) -> Result<f64> {
    check_registered(pred, gt)?;
    let (a, b) = (pred.vertex_normals(), gt.vertex_normals());
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| 1.0 - x.dot(*y).f64()).sum();
    Ok(sum / gt.num_vertices() as f64)
}

/// `10 log10(1 / MSE)` over all channels; `+∞` for identical images.
pub fn metric_psnr<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "{}×{}×{} vs {}×{}×{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let mse =
        a.data.iter().zip(&b.data).map(|(x, y)| (*x - *y).f64().powi(2)).sum::<f64>() / a.data.len().max(1) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}
