//! The `reflect` and `wavefront` pipelines.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use twistor_optics::closed_forms::Shape;
use twistor_optics::congruence::*;
use twistor_optics::reflection::{ReflectedCongruence, ReflectionEvent};
use twistor_optics::twistor::{MobiusRotation, OrientedLine};
use twistor_optics::TwistorError;

use crate::export::{self, ExportRecord};
use crate::scene::{Branch, SceneConfig, WaveSpec};

/// Run-time switches that are not part of the scene.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Abort on any node failure other than a miss or a masked hit.
    pub strict: bool,
}

pub fn incoming_congruence(cfg: &SceneConfig) -> anyhow::Result<Arc<dyn Congruence>> {
    Ok(match &cfg.wave {
        WaveSpec::Plane { direction } => Arc::new(plane_wave(&direction.vector())),
        WaveSpec::Spherical { source } => {
            // Point the native chart at the mirror so small nu hit it.
            let target = match cfg.surface_entry()?.shape {
                Shape::Plane { height } => Vector3::new(source.x, source.y, height),
                Shape::Sphere { center, .. } => center,
                Shape::Torus { .. } => Vector3::zeros(),
            };
            let aim = target - source;
            let aim = if aim.norm() > 1e-12 { aim } else { Vector3::new(0.0, 0.0, -1.0) };
            Arc::new(spherical_wave(source, MobiusRotation::north_to(&aim)))
        }
        WaveSpec::Custom { xi, eta, chart } => {
            let (xi_a, xi_b, eta) = (xi.clone(), xi.clone(), eta.clone());
            Arc::new(
                ParametricCongruence::new(move |nu| xi_a.eval(nu, nu), move |nu| eta.eval(nu, xi_b.eval(nu, nu)))
                    .in_frame(chart.rotation()),
            )
        }
    })
}

pub fn reflected(cfg: &SceneConfig) -> anyhow::Result<ReflectedCongruence> {
    Ok(ReflectedCongruence::new(incoming_congruence(cfg)?, Arc::new(cfg.surface_entry()?)))
}

/// Failures that simply leave a node empty.
fn is_expected(e: &TwistorError) -> bool {
    matches!(e, TwistorError::NoIntersection | TwistorError::OutsideDomain(_))
}

fn oriented(line: OrientedLine, r: f64, branch: Branch) -> twistor_optics::Result<(OrientedLine, f64)> {
    match branch {
        Branch::Plus => Ok((line, r)),
        Branch::Minus => Ok((line.reversed()?, -r)),
    }
}

fn node_error(nu: Complex64, e: &TwistorError) -> anyhow::Error {
    anyhow::anyhow!("node nu = {} {:+}i: {e}", nu.re, nu.im)
}

/// One CSV row per grid node: the outgoing line in the world chart and the
/// incidence point, with `r` its affine parameter on that line.
pub fn reflect_records(cfg: &SceneConfig, opts: RunOptions) -> anyhow::Result<Vec<ExportRecord>> {
    let refl = reflected(cfg)?;
    let grid = cfg.grid.to_grid();
    let sampled = refl.sample(&grid);
    let mut out = Vec::with_capacity(grid.len());
    for (nu, ev) in grid.nodes().into_iter().zip(sampled.events.iter()) {
        let world = ev.clone().and_then(|e| {
            let line = e.outgoing_in(&MobiusRotation::IDENTITY)?;
            oriented(line, e.r_out, cfg.output.branch).map(|(l, r)| (l, r, e.point))
        });
        match world {
            Ok((line, r, p)) => out.push(ExportRecord::line(nu, line, r, None, Some(p))),
            Err(e) if opts.strict && !is_expected(&e) => return Err(node_error(nu, &e)),
            Err(e) => out.push(ExportRecord::empty(nu, matches!(e, TwistorError::NoIntersection))),
        }
    }
    Ok(out)
}

/// Potential of the reflected congruence, fixed so that `r + C` is the
/// point reached after total path length `C` from emission.
///
/// Irregular nodes (grazing rays, shadow edges, jumps between surface
/// patches) are left out. Regions that lattice paths from one base cannot
/// reach get their own base, anchored by the same path-length convention.
pub fn reflected_potential(refl: &ReflectedCongruence, grid: &Grid) -> anyhow::Result<PotentialGrid> {
    let tol = crate::verify::tol::REFLECTED_INTEGRABLE;
    let nodes = grid.nodes();
    let events: Vec<Option<ReflectionEvent>> = nodes.par_iter().map(|&nu| refl.event(nu).ok()).collect();
    if events.iter().all(Option::is_none) {
        bail!("no ray of the incoming wave reaches the surface");
    }
    let residuals: Vec<Option<f64>> = nodes
        .par_iter()
        .zip(events.par_iter())
        .map(|(&nu, e)| e.and_then(|_| integrability_residual(refl, nu).ok()))
        .collect();
    let mask: Vec<bool> = residuals.iter().map(|r| r.is_some_and(|r| r < tol)).collect();
    let hits = events.iter().filter(|e| e.is_some()).count();
    let regular = mask.iter().filter(|&&m| m).count();
    if 2 * regular < hits {
        let worst = residuals.iter().flatten().fold(0.0, |a: f64, &b| a.max(b));
        return Err(TwistorError::NotIntegrable { max_residual: worst }).context("reconstructing the reflected wavefronts");
    }

    let centre = Complex64::new(0.5 * (grid.u_min + grid.u_max), 0.5 * (grid.v_min + grid.v_max));
    let mut order: Vec<usize> = (0..nodes.len()).filter(|&k| mask[k]).collect();
    order.sort_by(|&a, &b| (nodes[a] - centre).norm().total_cmp(&(nodes[b] - centre).norm()));

    let opts = PotentialOptions { integrability_tol: tol, mask_irregular: true, ..Default::default() };
    // Each base is anchored by the path length to its incidence point.
    let anchor = |k: usize| {
        let e = events[k]?;
        Some(e.r_out - (e.r_in - refl.incoming.emission(nodes[k]).unwrap_or(0.0)))
    };
    let mut pot = solve_potential_cover(refl, grid, &mask, &order, anchor, opts).context("reconstructing the reflected wavefronts")?;
    pot.irregular_nodes = hits - regular;
    pot.max_integrability_residual = residuals.iter().zip(mask.iter()).filter(|(_, &m)| m).filter_map(|(r, _)| *r).fold(0.0, f64::max);
    Ok(pot)
}

/// Wavefront rows for each offset, in offset order.
pub fn wavefront_records(cfg: &SceneConfig, opts: RunOptions) -> anyhow::Result<Vec<(f64, Vec<ExportRecord>)>> {
    let refl = reflected(cfg)?;
    let grid = cfg.grid.to_grid();
    let pot = reflected_potential(&refl, &grid)?;
    let nodes = grid.nodes();
    let events: Vec<twistor_optics::Result<ReflectionEvent>> = nodes.par_iter().map(|&nu| refl.event(nu)).collect();
    let mut out = Vec::new();
    for &offset in &cfg.output.offsets {
        let mut rows = Vec::with_capacity(grid.len());
        for (k, &nu) in nodes.iter().enumerate() {
            let row = events[k].clone().and_then(|e| {
                let r = pot.values[k].ok_or_else(|| TwistorError::OutsideDomain("unreached by the potential".into()))?;
                let line = e.outgoing_in(&MobiusRotation::IDENTITY)?;
                let point = point_on(&refl, nu, r + offset)?;
                let (line, r) = oriented(line, r, cfg.output.branch)?;
                Ok(ExportRecord::line(nu, line, r, Some(offset), Some(point)))
            });
            match row {
                Ok(rec) => rows.push(rec),
                Err(e) if opts.strict && !is_expected(&e) => return Err(node_error(nu, &e)),
                Err(e) => rows.push(ExportRecord::empty(nu, matches!(e, TwistorError::NoIntersection))),
            }
        }
        out.push((offset, rows));
    }
    Ok(out)
}

pub fn run_reflect(cfg: &SceneConfig, opts: RunOptions) -> anyhow::Result<Vec<PathBuf>> {
    let records = reflect_records(cfg, opts)?;
    let dir = &cfg.output.path;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("reflected.csv");
    export::write_csv(&path, &records)?;
    Ok(vec![path])
}

pub fn run_wavefront(cfg: &SceneConfig, opts: RunOptions) -> anyhow::Result<Vec<PathBuf>> {
    let sets = wavefront_records(cfg, opts)?;
    let dir = &cfg.output.path;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let hash = export::scene_hash(cfg);
    let mut written = Vec::new();
    for (k, (offset, rows)) in sets.iter().enumerate() {
        let stem = format!("wavefront_{k}");
        if cfg.output.format.csv() {
            let p = dir.join(format!("{stem}.csv"));
            export::write_csv(&p, rows)?;
            written.push(p);
        }
        if cfg.output.format.obj() {
            let p = dir.join(format!("{stem}.obj"));
            export::write_obj(&p, rows, &hash, *offset)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Example scenes for the worked cases.
pub fn gallery_scenes() -> Vec<(&'static str, &'static str)> {
    vec![
        ("sphere-plane-axis", "[surface]\nname = sphere\n\n[wave]\nkind = plane\ndirection = 0, 0, -1\n\n[grid]\nu = -0.65, 0.65\nv = -0.65, 0.65\nsize = 64x64\n\n[output]\noffsets = -1, 0, 1\n"),
        ("torus-plane-axis", "[surface]\nname = torus\nparams = 2, 1\n\n[wave]\nkind = plane\ndirection = 0, 0, -1\n\n[grid]\nu = -3.5, 3.5\nv = -3.5, 3.5\nsize = 128x128\n\n[output]\noffsets = 0, 2\n"),
        ("torus-plane-xi1-1", "[surface]\nname = torus\nparams = 2, 1\n\n[wave]\nkind = plane\nxi1 = 1\n\n[grid]\nu = -3.5, 3.5\nv = -3.5, 3.5\nsize = 128x128\n\n[output]\noffsets = 0, 2\n"),
        ("torus-plane-xi1-2.4", "[surface]\nname = torus\nparams = 2, 1\n\n[wave]\nkind = plane\nxi1 = 2.4\n\n[grid]\nu = -3.5, 3.5\nv = -3.5, 3.5\nsize = 128x128\n\n[output]\noffsets = 0, 2\n"),
        ("sphere-below-spherical", "[surface]\nname = sphere\nparams = 0, 0, -2, 1\n\n[wave]\nkind = spherical\nsource = 0, 0, 0\n\n[grid]\nu = -0.15, 0.15\nv = -0.15, 0.15\nsize = 64x64\n\n[output]\noffsets = 2, 3\n"),
        ("plane-mirror-spherical", "[surface]\nname = plane\nparams = 0\n\n[wave]\nkind = spherical\nsource = 0, 0, 1.5\n\n[grid]\nu = -0.8, 0.8\nv = -0.8, 0.8\nsize = 64x64\n\n[output]\noffsets = 2, 3\n"),
    ]
}

pub fn write_gallery(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    gallery_scenes()
        .into_iter()
        .map(|(name, text)| {
            let p = dir.join(format!("{name}.scene"));
            std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
            Ok(p)
        })
        .collect()
}

