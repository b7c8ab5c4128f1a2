use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{Quat, Se3, TriMesh, Vec3};
use crate::nets::{adam_step, AdamState};
use crate::render::{render, render_backward, SplatSet};
use crate::rig::ControlRig;
use crate::{Error, Real, Result};

use super::field::DeformationField;
use super::grid::FrameGrid;
use super::loss::loss;
use super::FitConfig;

/// One optimisation step. Stage 0 is the static stage, 1 the global-only
/// stage and 2 the joint stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub stage: u8,
    pub view: usize,
    pub frame: usize,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutput<T> {
    pub field: DeformationField<T>,
    pub trace: Vec<TraceRow>,
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "iteration,stage,view,frame,loss").map_err(io)?;
    for r in trace {
        writeln!(w, "{},{},{},{},{:e}", r.iteration, r.stage, r.view, r.frame, r.loss).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn numerical_abort(stage: u8, iteration: usize, v: usize, t: usize, value: f64) -> Error {
    let msg = format!("loss is {value} at view {v}, frame {t} (stage {stage}, iteration {iteration})");
    log::error!("{msg}");
    Error::Numerical(msg)
}

/// Fits a deformation field to `grid`. Splats are cloned from `mesh`
/// vertices and bound to `rig`; scales and orientations are first fitted
/// on the `t = 0` row, then the global table alone, then everything jointly.
pub fn fit<T: Real>(
    grid: &FrameGrid<T>,
    mesh: &TriMesh<T>,
    rig: &ControlRig<T>,
    cfg: &FitConfig,
) -> Result<FitOutput<T>> {
    cfg.validate()?;
    grid.validate()?;
    mesh.validate()?;
    if mesh.num_vertices() != rig.num_splats() {
        return Err(Error::Topology(format!(
            "mesh has {} vertices but the rig binds {} splats",
            mesh.num_vertices(),
            rig.num_splats()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.static_iterations + cfg.iterations);
    let splats = SplatSet::from_mesh(mesh, &cfg.clone);
    let canonical = static_stage(grid, splats, cfg, &mut rng, &mut trace)?;
    let mut field = DeformationField::new(
        canonical,
        rig.clone(),
        grid.views,
        grid.frames,
        grid.view0_index,
        cfg.field.clone(),
        &mut rng,
    )?;
    deform_stages(grid, &mut field, cfg, &mut rng, &mut trace)?;
    Ok(FitOutput { field, trace })
}

fn static_stage<T: Real>(
    grid: &FrameGrid<T>,
    mut splats: SplatSet<T>,
    cfg: &FitConfig,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<TraceRow>,
) -> Result<SplatSet<T>> {
    let n = splats.len();
    let mut adam = AdamState::new(cfg.adam, &[4 * n, 3 * n]);
    let mut rot: Vec<T> = splats.rotations.iter().flat_map(|q| q.to_wxyz()).collect();
    let mut scl: Vec<T> = splats.log_scales.iter().flat_map(|s| s.to_array()).collect();
    for it in 0..cfg.static_iterations {
        let v = rng.gen_range(0..grid.views);
        let cam = &grid.cameras[v];
        let img = render(&splats, cam, &cfg.render);
        let (l, g_img) = loss(&img, grid.image(v, 0), grid.mask(v, 0), &cfg.loss);
        if !l.is_finite() {
            return Err(numerical_abort(0, it, v, 0, l.f64()));
        }
        trace.push(TraceRow { iteration: trace.len(), stage: 0, view: v, frame: 0, loss: l.f64() });
        let g = render_backward(&splats, cam, &cfg.render, &g_img);
        let g_rot: Vec<T> = g.rotations.iter().flat_map(|q| q.to_wxyz()).collect();
        let g_scl: Vec<T> = g.log_scales.iter().flat_map(|s| s.to_array()).collect();
        adam_step(&mut adam, &mut [&mut rot, &mut scl], &[&g_rot, &g_scl], cfg.lr_static);
        for i in 0..n {
            splats.rotations[i] = Quat::from_wxyz([rot[4 * i], rot[4 * i + 1], rot[4 * i + 2], rot[4 * i + 3]]);
            splats.log_scales[i] = Vec3::from_slice(&scl[3 * i..3 * i + 3]);
        }
    }
    for q in &mut splats.rotations {
        *q = q.normalize();
    }
    Ok(splats)
}

fn se3_params<T: Real>(g: &Se3<T>) -> [T; 7] {
    let q = g.rotation.to_wxyz();
    [q[0], q[1], q[2], q[3], g.translation.x, g.translation.y, g.translation.z]
}

fn deform_stages<T: Real>(
    grid: &FrameGrid<T>,
    field: &mut DeformationField<T>,
    cfg: &FitConfig,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<TraceRow>,
) -> Result<()> {
    let (views, frames) = (grid.views, grid.frames);
    let global_only = cfg.global_only_steps();
    let joint = cfg.iterations - global_only;
    let mut global_adam: Vec<AdamState<T>> = (0..views * frames).map(|_| AdamState::new(cfg.adam, &[7])).collect();
    let mut deform_adam = AdamState::for_tensors(cfg.adam, &field.deform.tensors());
    let mut refine_adam = AdamState::for_tensors(cfg.adam, &field.refine.tensors());
    let e = field.cfg.embed_dim;
    let mut deform_embed_adam: Vec<AdamState<T>> = (0..views).map(|_| AdamState::new(cfg.adam, &[e])).collect();
    let mut refine_embed_adam = deform_embed_adam.clone();
    let decay = |progress: f64| cfg.lr_final_ratio.powf(progress);

    for it in 0..cfg.iterations {
        let networks = it >= global_only;
        let stage = if networks { 2 } else { 1 };
        let v = rng.gen_range(0..views);
        let t = rng.gen_range(0..frames);

        let pass = field.deformation_forward(v, t);
        let deformed = field.deformed_splats(&pass.transforms);
        let (splats, refine_pass) = if networks && field.cfg.refine {
            let (s, p) = field.refine_forward(deformed, v, t);
            (s, Some(p))
        } else {
            (deformed, None)
        };
        let cam = &grid.cameras[v];
        let img = render(&splats, cam, &cfg.render);
        let (l, g_img) = loss(&img, grid.image(v, t), grid.mask(v, t), &cfg.loss);
        if !l.is_finite() {
            return Err(numerical_abort(stage, it, v, t, l.f64()));
        }
        trace.push(TraceRow { iteration: trace.len(), stage, view: v, frame: t, loss: l.f64() });
        if cfg.log_every > 0 && (it + 1) % cfg.log_every == 0 {
            log::info!("step {}/{} (stage {stage}): loss {:.5}", it + 1, cfg.iterations, l.f64());
        }
        let g_splats = render_backward(&splats, cam, &cfg.render, &g_img);
        let grads = field.backward(t, &pass, refine_pass.as_ref(), &g_splats, networks);

        let cell = grads.slot * frames + t;
        let mut p = se3_params(&field.global[cell]);
        let lr_global = cfg.lr_global * decay(it as f64 / cfg.iterations as f64);
        adam_step(&mut global_adam[cell], &mut [&mut p], &[&grads.global], lr_global);
        field.global[cell] = Se3::new(Quat::from_wxyz([p[0], p[1], p[2], p[3]]), Vec3::new(p[4], p[5], p[6]));

        if !networks {
            continue;
        }
        let k = decay((it - global_only) as f64 / joint.max(1) as f64);
        let (lr_net, lr_emb) = (cfg.lr_network * k, cfg.lr_embed * k);
        let slot = grads.slot;
        if let Some((gm, ge)) = &grads.deform {
            adam_step(&mut deform_adam, &mut field.deform.tensors_mut(), &gm.tensors(), lr_net);
            let mut row = field.deform_embed.row_mut(slot);
            adam_step(&mut deform_embed_adam[slot], &mut [row.as_slice_mut().expect("row-major")], &[ge], lr_emb);
        }
        if let Some((gm, ge)) = &grads.refine {
            adam_step(&mut refine_adam, &mut field.refine.tensors_mut(), &gm.tensors(), lr_net);
            let mut row = field.refine_embed.row_mut(slot);
            adam_step(&mut refine_embed_adam[slot], &mut [row.as_slice_mut().expect("row-major")], &[ge], lr_emb);
        }
    }
    Ok(())
}
