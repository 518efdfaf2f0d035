//! The law of reflection in line space.
//!
//! For a surface whose normal line at the point of incidence is
//! `(xi0, eta0)` with potential `r0`, an incoming ray of direction `xi1`
//! leaves with
//!
//! ```text
//! xi2  = (2 xi0 conj(xi1) + 1 - |xi0|²) / ((1 - |xi0|²) conj(xi1) - 2 conj(xi0))
//! eta1 = [(1 + conj(xi0) xi1)² eta0 - (xi0 - xi1)² conj(eta0)
//!         + (xi0 - xi1)(1 + conj(xi0) xi1)(1 + |xi0|²) r0] / (1 + |xi0|²)²
//! eta2 = [(conj(xi0) - conj(xi1))² eta0 - (1 + xi0 conj(xi1))² conj(eta0)
//!         + (conj(xi0) - conj(xi1))(1 + xi0 conj(xi1))(1 + |xi0|²) r0]
//!        / ((1 - |xi0|²) conj(xi1) - 2 conj(xi0))²
//! ```
//!
//! `xi1` is the direction of propagation. The middle relation fixes where the
//! incoming ray meets the surface and is solved for the surface parameter by
//! Newton's method, seeded by the Euclidean tracer in [`crate::euclid`].

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64;

use crate::congruence::{try_wirtinger_pair, Congruence, FiniteDiff, Grid, LineJet};
use crate::error::{Result, TwistorError};
use crate::euclid::{intersect_ray_surface, ImplicitSurface, Ray};
use crate::twistor::{
    affine_param, best_frame, checked_chart, point_from_line, vector_to_dir, EuclidPoint, MobiusRotation,
    OrientedLine, CHART_LIMIT,
};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `|d·n|` below which an event counts as grazing.
pub const GRAZING_TOL: f64 = 1e-8;

/// Outgoing direction from the surface normal `xi0` and the incoming propagation direction `xi1`.
pub fn reflect_direction(xi0: Complex64, xi1: Complex64) -> Result<Complex64> {
    let q0 = xi0.norm_sqr();
    let num = 2.0 * xi0 * xi1.conj() + 1.0 - q0;
    let den = (1.0 - q0) * xi1.conj() - 2.0 * xi0.conj();
    if den.norm() <= num.norm() / CHART_LIMIT || den.norm() == 0.0 {
        return Err(TwistorError::ChartEscape("outgoing ray points to the south pole"));
    }
    checked_chart(num / den, "outgoing ray points to the south pole")
}

/// Half-turn of the sphere about `xi0`.
pub fn reflect_through_point(xi0: Complex64, xi: Complex64) -> Result<Complex64> {
    let q0 = xi0.norm_sqr();
    let num = (q0 - 1.0) * xi + 2.0 * xi0;
    let den = 2.0 * xi0.conj() * xi + 1.0 - q0;
    if den.norm() <= num.norm() / CHART_LIMIT || den.norm() == 0.0 {
        return Err(TwistorError::ChartEscape("half-turn image is the south pole"));
    }
    checked_chart(num / den, "half-turn image is the south pole")
}

/// Fibre coordinate of the line with direction `xi_i` through the surface
/// point at distance `r0` along the normal line `(xi0, eta0)`.
pub fn incidence_eta(xi0: Complex64, eta0: Complex64, r0: f64, xi_i: Complex64) -> Complex64 {
    let s0 = 1.0 + xi0.norm_sqr();
    let a = ONE + xi0.conj() * xi_i;
    let b = xi0 - xi_i;
    (a * a * eta0 - b * b * eta0.conj() + b * a * s0 * r0) / (s0 * s0)
}

/// Fibre coordinate of the reflected line, written in terms of the incoming direction.
pub fn outgoing_eta(xi0: Complex64, eta0: Complex64, r0: f64, xi1: Complex64) -> Result<Complex64> {
    let q0 = xi0.norm_sqr();
    let den = (1.0 - q0) * xi1.conj() - 2.0 * xi0.conj();
    if den.norm() == 0.0 {
        return Err(TwistorError::ChartEscape("outgoing ray points to the south pole"));
    }
    let a = xi0.conj() - xi1.conj();
    let b = ONE + xi0 * xi1.conj();
    Ok((a * a * eta0 - b * b * eta0.conj() + a * b * (1.0 + q0) * r0) / (den * den))
}

/// `(|xi0 - xi1|² - |1 + xi0 conj(xi1)|²) r0 / ((1+|xi0|²)(1+|xi1|²))`, the real
/// function whose ∂̄ relates the incoming and reflected 1-forms.
pub fn malus_defect(xi0: Complex64, xi1: Complex64, r0: f64) -> f64 {
    let num = (xi0 - xi1).norm_sqr() - (ONE + xi0 * xi1.conj()).norm_sqr();
    num * r0 / ((1.0 + xi0.norm_sqr()) * (1.0 + xi1.norm_sqr()))
}

/// Normal line and potential of a surface at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub xi: Complex64,
    pub eta: Complex64,
    pub r: f64,
}

impl SurfaceSample {
    pub fn point(&self) -> EuclidPoint {
        point_from_line(self.xi, self.eta, self.r)
    }

    /// The same sample in the chart of `frame` (world → chart).
    pub fn rotated(&self, frame: &MobiusRotation) -> Result<SurfaceSample> {
        if *frame == MobiusRotation::IDENTITY {
            return Ok(*self);
        }
        let l = frame.apply_line(&OrientedLine::new(self.xi, self.eta))?;
        Ok(SurfaceSample { xi: l.xi, eta: l.eta, r: self.r })
    }
}

/// A reflecting surface: one or more sheets of outward normal lines with
/// their potentials, plus an implicit description for seeding.
///
/// Every query names the chart frame the answer is wanted in. What the
/// parameter `nu` means is up to the surface (a point of a plane, the normal
/// direction in that frame's chart for a sphere, ...); [`ReflectingSurface::locate`]
/// produces it from a Euclidean point and normal.
pub trait ReflectingSurface: Send + Sync {
    fn sheet_count(&self) -> usize {
        1
    }

    /// Normal line and potential at parameter `nu` on `sheet`, in the chart of `frame`.
    fn normal_line(&self, frame: &MobiusRotation, sheet: usize, nu: Complex64) -> Result<SurfaceSample>;

    fn implicit(&self) -> ImplicitSurface;

    /// Sheet and parameter of the surface point `p` with outward normal `n` (world coordinates).
    fn locate(&self, frame: &MobiusRotation, p: &Vector3<f64>, n: &Vector3<f64>) -> Result<(usize, Complex64)>;
}

/// One reflection, with every line expressed in the chart of `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionEvent {
    pub sheet: usize,
    /// Surface parameter at incidence, in the convention of the solve frame.
    pub nu0: Complex64,
    pub xi0: Complex64,
    pub eta0: Complex64,
    pub r0: f64,
    pub xi1: Complex64,
    pub eta1: Complex64,
    pub xi2: Complex64,
    pub eta2: Complex64,
    /// Incidence point in world coordinates.
    pub point: EuclidPoint,
    /// Chart frame of the `xi`/`eta` fields (world → chart).
    pub frame: MobiusRotation,
    /// Affine parameter of the incidence point along the incoming line.
    pub r_in: f64,
    /// Affine parameter of the incidence point along the outgoing line.
    pub r_out: f64,
    pub grazing: bool,
}

impl ReflectionEvent {
    pub fn incoming(&self) -> OrientedLine {
        OrientedLine::new(self.xi1, self.eta1)
    }

    pub fn outgoing(&self) -> OrientedLine {
        OrientedLine::new(self.xi2, self.eta2)
    }

    pub fn normal(&self) -> OrientedLine {
        OrientedLine::new(self.xi0, self.eta0)
    }

    fn to_world_vec(self, xi: Complex64) -> Vector3<f64> {
        self.frame.inverse().apply_dir_vector(xi)
    }

    pub fn incoming_direction(&self) -> Vector3<f64> {
        self.to_world_vec(self.xi1)
    }

    pub fn outgoing_direction(&self) -> Vector3<f64> {
        self.to_world_vec(self.xi2)
    }

    pub fn normal_direction(&self) -> Vector3<f64> {
        self.to_world_vec(self.xi0)
    }

    /// Outgoing line in another chart frame.
    pub fn outgoing_in(&self, frame: &MobiusRotation) -> Result<OrientedLine> {
        if *frame == self.frame {
            return Ok(self.outgoing());
        }
        frame.compose(&self.frame.inverse()).apply_line(&self.outgoing())
    }

    /// Same event re-expressed in another chart frame.
    pub fn in_frame(&self, frame: &MobiusRotation) -> Result<ReflectionEvent> {
        if *frame == self.frame {
            return Ok(*self);
        }
        let m = frame.compose(&self.frame.inverse());
        let n = m.apply_line(&self.normal())?;
        let i = m.apply_line(&self.incoming())?;
        let o = m.apply_line(&self.outgoing())?;
        Ok(ReflectionEvent {
            xi0: n.xi,
            eta0: n.eta,
            xi1: i.xi,
            eta1: i.eta,
            xi2: o.xi,
            eta2: o.eta,
            frame: *frame,
            ..*self
        })
    }
}

/// Reflects the incoming direction `xi1` at the surface point `(xi0, eta0, r0)`,
/// all in one chart. The incoming line is taken through that point.
pub fn reflect_line(xi0: Complex64, eta0: Complex64, r0: f64, xi1: Complex64) -> Result<ReflectionEvent> {
    reflect_line_in(&MobiusRotation::IDENTITY, 0, xi0, xi0, eta0, r0, xi1)
}

fn reflect_line_in(
    frame: &MobiusRotation,
    sheet: usize,
    nu0: Complex64,
    xi0: Complex64,
    eta0: Complex64,
    r0: f64,
    xi1: Complex64,
) -> Result<ReflectionEvent> {
    let xi2 = reflect_direction(xi0, xi1)?;
    let eta1 = incidence_eta(xi0, eta0, r0, xi1);
    let eta2 = outgoing_eta(xi0, eta0, r0, xi1)?;
    let local = point_from_line(xi0, eta0, r0);
    let d = frame.inverse().apply_dir_vector(xi1);
    let n = frame.inverse().apply_dir_vector(xi0);
    let point = if *frame == MobiusRotation::IDENTITY { local } else { frame.inverse().apply_point(local) };
    Ok(ReflectionEvent {
        sheet,
        nu0,
        xi0,
        eta0,
        r0,
        xi1,
        eta1,
        xi2,
        eta2,
        point,
        frame: *frame,
        r_in: affine_param(local, xi1),
        r_out: affine_param(local, xi2),
        grazing: d.dot(&n).abs() < GRAZING_TOL,
    })
}

/// An oriented line given in some chart frame, optionally with a start point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncomingRay {
    pub line: OrientedLine,
    pub frame: MobiusRotation,
    /// Affine parameter where the ray starts; `None` means it comes from infinity.
    pub emission: Option<f64>,
}

impl IncomingRay {
    pub fn world(line: OrientedLine) -> Self {
        Self { line, frame: MobiusRotation::IDENTITY, emission: None }
    }

    /// Ray through `p` along `d`, written in a frame that keeps `d` well inside the chart.
    pub fn from_point_dir(p: &Vector3<f64>, d: &Vector3<f64>, emission: Option<f64>) -> Result<Self> {
        let d = d.normalize();
        let frame = best_frame(&[d]);
        let xi = vector_to_dir(&frame.apply_vector(&d))?;
        let local = frame.apply_point(EuclidPoint::from_vector(p));
        let line = OrientedLine::through(local, xi);
        // Re-base the emission parameter so it is measured from this line's foot point.
        let emission = emission.map(|r| r + affine_param(local, xi));
        Ok(Self { line, frame, emission })
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.frame.inverse().apply_dir_vector(self.line.xi)
    }

    pub fn world_point(&self, r: f64) -> Vector3<f64> {
        let p = self.line.point_at(r);
        if self.frame == MobiusRotation::IDENTITY {
            p.to_vector()
        } else {
            self.frame.inverse().apply_point(p).to_vector()
        }
    }

    /// Euclidean ray starting at the emission point, or well before the surface.
    pub fn euclid_ray(&self, surface: &ImplicitSurface) -> Ray {
        let d = self.direction();
        let foot = self.world_point(0.0);
        let start = match (self.emission, surface) {
            (Some(r), _) => r,
            (None, ImplicitSurface::Plane { height }) if d.z != 0.0 => (height - foot.z) / d.z - 1.0,
            (None, _) => {
                let (c, radius) = surface.bounds().unwrap_or((Vector3::zeros(), 0.0));
                (c - foot).dot(&d) - radius - 1.0
            }
        };
        Ray::new(self.world_point(start), d)
    }
}

/// Newton settings for [`solve_incidence`].
#[derive(Debug, Clone, Copy)]
pub struct IncidenceOptions {
    pub max_iterations: usize,
    /// Frame to express the event in; chosen automatically when `None`.
    pub frame: Option<MobiusRotation>,
    /// Accepted disagreement, along the ray, between the converged point and the seed hit.
    pub seed_tolerance: f64,
}

impl Default for IncidenceOptions {
    fn default() -> Self {
        Self { max_iterations: 50, frame: None, seed_tolerance: 1e-6 }
    }
}

/// Finds where `ray` first meets `surface` and reflects it there.
///
/// The Euclidean tracer supplies the first hit along the ray; its sheet and
/// normal seed a damped Newton iteration on the incidence relation for the
/// fibre coordinate, in `(Re nu0, Im nu0)`.
pub fn solve_incidence(ray: &IncomingRay, surface: &dyn ReflectingSurface, opts: IncidenceOptions) -> Result<ReflectionEvent> {
    let implicit = surface.implicit();
    let eray = ray.euclid_ray(&implicit);
    let hits = intersect_ray_surface(&eray, &implicit);
    let hit = *hits.first().ok_or(TwistorError::NoIntersection)?;
    let n = implicit.normal(&hit.point);
    let d = ray.direction();
    let out = d - 2.0 * d.dot(&n) * n;
    let frame = opts.frame.unwrap_or_else(|| best_frame(&[d, n, out]));
    let (sheet, seed) = surface.locate(&frame, &hit.point, &n)?;
    let to_work = frame.compose(&ray.frame.inverse());
    let line1 = if to_work == MobiusRotation::IDENTITY { ray.line } else { to_work.apply_line(&ray.line)? };

    let sample_at = |nu: Complex64| surface.normal_line(&frame, sheet, nu);
    let residual = |nu: Complex64| -> Result<Complex64> {
        let s = sample_at(nu)?;
        Ok(incidence_eta(s.xi, s.eta, s.r, line1.xi) - line1.eta)
    };

    let scale = 1.0 + line1.eta.norm() + implicit.scale();
    let mut nu = seed;
    let mut res = residual(nu)?;
    let mut iterations = 0;
    let mut converged = res.norm() <= 1e-15 * scale;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let h = 1e-7 * nu.norm().max(1.0);
        let ru = (residual(nu + h)? - residual(nu - h)?) / (2.0 * h);
        let rv = (residual(nu + Complex64::new(0.0, h))? - residual(nu - Complex64::new(0.0, h))?) / (2.0 * h);
        let jac = Matrix2::new(ru.re, rv.re, ru.im, rv.im);
        let Some(step) = jac.lu().solve(&Vector2::new(-res.re, -res.im)) else {
            return Err(TwistorError::NoConvergence { iterations, residual: res.norm() });
        };
        let mut delta = Complex64::new(step.x, step.y);
        let mut improved = false;
        for _ in 0..12 {
            let trial = nu + delta;
            if let Ok(r) = residual(trial) {
                if r.norm() < res.norm() {
                    nu = trial;
                    res = r;
                    improved = true;
                    break;
                }
            }
            delta *= 0.5;
        }
        if res.norm() <= 1e-15 * scale || (improved && delta.norm() <= 1e-15 * nu.norm().max(1.0)) {
            converged = true;
        } else if !improved {
            // Rounding floor: no step reduces the residual any further.
            converged = res.norm() <= 1e-11 * scale;
            break;
        }
    }
    if !converged {
        return Err(TwistorError::NoConvergence { iterations, residual: res.norm() });
    }

    let s = sample_at(nu)?;
    let event = reflect_line_in(&frame, sheet, nu, s.xi, s.eta, s.r, line1.xi)?;
    // The root must be the seeded (first) hit, not another sheet crossing.
    let seed_world = hit.point;
    if (event.point.to_vector() - seed_world).norm() > opts.seed_tolerance * (1.0 + implicit.scale()) {
        return Err(TwistorError::NoConvergence { iterations, residual: res.norm() });
    }
    Ok(event)
}

/// Incoming congruence reflected in a surface, parameterized by the incoming parameter.
#[derive(Clone)]
pub struct ReflectedCongruence {
    pub incoming: Arc<dyn Congruence>,
    pub surface: Arc<dyn ReflectingSurface>,
}

impl ReflectedCongruence {
    pub fn new(incoming: Arc<dyn Congruence>, surface: Arc<dyn ReflectingSurface>) -> Self {
        Self { incoming, surface }
    }

    pub fn incoming_ray(&self, nu: Complex64) -> Result<IncomingRay> {
        let frame = self.incoming.frame_at(nu)?;
        Ok(IncomingRay {
            line: self.incoming.line_in(&frame, nu)?,
            frame,
            emission: self.incoming.emission(nu),
        })
    }

    /// The reflection event for the incoming ray at `nu`.
    pub fn event(&self, nu: Complex64) -> Result<ReflectionEvent> {
        solve_incidence(&self.incoming_ray(nu)?, self.surface.as_ref(), IncidenceOptions::default())
    }

    /// Event expressed in a fixed chart frame.
    pub fn event_in(&self, frame: &MobiusRotation, nu: Complex64) -> Result<ReflectionEvent> {
        let opts = IncidenceOptions { frame: Some(*frame), ..Default::default() };
        solve_incidence(&self.incoming_ray(nu)?, self.surface.as_ref(), opts)
    }

    /// Evaluates the congruence on `grid`; rays that miss are recorded in `shadow`.
    pub fn sample(&self, grid: &Grid) -> ReflectedGrid {
        use rayon::prelude::*;
        let events: Vec<Result<ReflectionEvent>> = grid.nodes().par_iter().map(|&nu| self.event(nu)).collect();
        let shadow = events.iter().map(|e| matches!(e, Err(TwistorError::NoIntersection))).collect();
        ReflectedGrid { grid: *grid, events, shadow }
    }
}

impl Congruence for ReflectedCongruence {
    fn line_in(&self, frame: &MobiusRotation, nu: Complex64) -> Result<OrientedLine> {
        self.event(nu)?.outgoing_in(frame)
    }

    fn direction(&self, nu: Complex64) -> Result<Vector3<f64>> {
        Ok(self.event(nu)?.outgoing_direction())
    }

    fn emission(&self, nu: Complex64) -> Option<f64> {
        self.event(nu).ok().map(|e| e.r_out)
    }
}

/// Reflected congruence sampled on a grid.
#[derive(Debug, Clone)]
pub struct ReflectedGrid {
    pub grid: Grid,
    pub events: Vec<Result<ReflectionEvent>>,
    /// `true` where the incoming ray misses the surface.
    pub shadow: Vec<bool>,
}

impl ReflectedGrid {
    pub fn event(&self, i: usize, j: usize) -> Option<&ReflectionEvent> {
        self.events[self.grid.index(i, j)].as_ref().ok()
    }

    pub fn hit_count(&self) -> usize {
        self.events.iter().filter(|e| e.is_ok()).count()
    }
}

/// `reflect_congruence`: the incoming congruence reflected in `surface`, sampled on `grid`.
pub fn reflect_congruence(
    incoming: Arc<dyn Congruence>,
    surface: Arc<dyn ReflectingSurface>,
    grid: &Grid,
) -> (ReflectedCongruence, ReflectedGrid) {
    let c = ReflectedCongruence::new(incoming, surface);
    let g = c.sample(grid);
    (c, g)
}

/// The three pieces of the reflection identity at one incoming parameter.
#[derive(Debug, Clone, Copy)]
pub struct MalusTerms {
    /// 1-form coefficient of the reflected congruence.
    pub outgoing: Complex64,
    /// 1-form coefficient of the incoming congruence.
    pub incoming: Complex64,
    /// `∂̄` of [`malus_defect`] along the incoming parameter.
    pub dbar_defect: Complex64,
}

impl MalusTerms {
    pub fn residual(&self) -> f64 {
        (self.outgoing - self.incoming - self.dbar_defect).norm()
    }
}

pub fn malus_terms(refl: &ReflectedCongruence, nu1: Complex64) -> Result<MalusTerms> {
    let centre = refl.event(nu1)?;
    let frame = best_frame(&[centre.incoming_direction(), centre.normal_direction(), centre.outgoing_direction()]);
    let ev = |w: Complex64| refl.event_in(&frame, w);
    let fd = FiniteDiff::FAST;
    let e = ev(nu1)?;
    let (x2d, x2b) = try_wirtinger_pair(|w| Ok(ev(w)?.xi2), nu1, fd)?;
    let (e2d, e2b) = try_wirtinger_pair(|w| Ok(ev(w)?.eta2), nu1, fd)?;
    let (x1d, x1b) = try_wirtinger_pair(|w| Ok(ev(w)?.xi1), nu1, fd)?;
    let (e1d, e1b) = try_wirtinger_pair(|w| Ok(ev(w)?.eta1), nu1, fd)?;
    let (_, defect_b) = try_wirtinger_pair(
        |w| {
            let e = ev(w)?;
            Ok(Complex64::new(malus_defect(e.xi0, e.xi1, e.r0), 0.0))
        },
        nu1,
        fd,
    )?;
    let out = LineJet { line: e.outgoing(), xi_d: x2d, xi_dbar: x2b, eta_d: e2d, eta_dbar: e2b };
    let inc = LineJet { line: e.incoming(), xi_d: x1d, xi_dbar: x1b, eta_d: e1d, eta_dbar: e1b };
    Ok(MalusTerms { outgoing: out.dbar_form(), incoming: inc.dbar_form(), dbar_defect: defect_b })
}

/// `|LHS − RHS|` of the identity relating incoming, surface, and reflected congruences.
pub fn malus_residual(refl: &ReflectedCongruence, nu1: Complex64) -> Result<f64> {
    Ok(malus_terms(refl, nu1)?.residual())
}
