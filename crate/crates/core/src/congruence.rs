//! Line congruences, Wirtinger calculus, and wavefront reconstruction.
//!
//! A congruence is a map `nu -> (xi(nu), eta(nu))`. It is integrable when its
//! lines are the normals of a family of surfaces; the affine parameter of
//! those surfaces along each line is a real potential `r` with
//!
//! ```text
//! ∂̄r = 2 (eta ∂̄conj(xi) + conj(eta) ∂̄xi) / (1 + |xi|²)²
//! ```
//!
//! and the parallel wavefronts are `point_from_line(xi, eta, r + C)`.
//!
//! All quantities evaluated here (the 1-form above, the integrability defect,
//! reconstructed points) are invariant under rotations about the origin, so
//! each evaluation picks the chart frame in which the directions involved are
//! farthest from the south pole.

use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, TwistorError};
use crate::twistor::{
    affine_param, best_frame, line_from_point_dir, point_from_line, EuclidPoint, MobiusRotation, OrientedLine,
};

pub type ComplexFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;
pub type RealFn = Arc<dyn Fn(Complex64) -> f64 + Send + Sync>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Which Wirtinger derivative to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wirtinger {
    /// `∂ = (∂_u - i ∂_v)/2`
    D,
    /// `∂̄ = (∂_u + i ∂_v)/2`
    DBar,
}

/// Finite-difference settings. The step is `rel_step * max(1, |nu|)`.
#[derive(Debug, Clone, Copy)]
pub struct FiniteDiff {
    pub rel_step: f64,
    pub richardson: bool,
}

impl Default for FiniteDiff {
    fn default() -> Self {
        Self { rel_step: 1e-5, richardson: true }
    }
}

impl FiniteDiff {
    /// Plain central differences; used for first derivatives inside grid sweeps.
    pub const FAST: FiniteDiff = FiniteDiff { rel_step: 1e-5, richardson: false };
    /// Wide step with extrapolation, for differentiating quantities that are
    /// themselves finite differences.
    pub const OUTER: FiniteDiff = FiniteDiff { rel_step: 1e-3, richardson: true };

    fn step(&self, nu: Complex64) -> f64 {
        self.rel_step * nu.norm().max(1.0)
    }
}

fn central_pairs<F, const N: usize>(f: &F, nu: Complex64, h: f64) -> Result<[(Complex64, Complex64); N]>
where
    F: Fn(Complex64) -> Result<[Complex64; N]>,
{
    let (up, um, vp, vm) = (f(nu + h)?, f(nu - h)?, f(nu + I * h)?, f(nu - I * h)?);
    Ok(std::array::from_fn(|k| {
        let fu = (up[k] - um[k]) / (2.0 * h);
        let fv = (vp[k] - vm[k]) / (2.0 * h);
        (0.5 * (fu - I * fv), 0.5 * (fu + I * fv))
    }))
}

/// `(∂, ∂̄)` of each component of a fallible map, from one set of evaluations.
pub fn try_wirtinger_pairs<F, const N: usize>(f: F, nu: Complex64, fd: FiniteDiff) -> Result<[(Complex64, Complex64); N]>
where
    F: Fn(Complex64) -> Result<[Complex64; N]>,
{
    let h = fd.step(nu);
    let coarse = central_pairs(&f, nu, h)?;
    if !fd.richardson {
        return Ok(coarse);
    }
    let fine = central_pairs(&f, nu, 0.5 * h)?;
    Ok(std::array::from_fn(|k| ((4.0 * fine[k].0 - coarse[k].0) / 3.0, (4.0 * fine[k].1 - coarse[k].1) / 3.0)))
}

/// Both Wirtinger derivatives of a fallible map, sharing evaluations.
pub fn try_wirtinger_pair<F>(f: F, nu: Complex64, fd: FiniteDiff) -> Result<(Complex64, Complex64)>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    Ok(try_wirtinger_pairs(|w| Ok([f(w)?]), nu, fd)?[0])
}

/// Wirtinger derivative of a smooth complex map at `nu`.
pub fn wirtinger<F>(f: F, nu: Complex64, which: Wirtinger) -> Complex64
where
    F: Fn(Complex64) -> Complex64,
{
    wirtinger_with(f, nu, which, FiniteDiff::default())
}

pub fn wirtinger_with<F>(f: F, nu: Complex64, which: Wirtinger, fd: FiniteDiff) -> Complex64
where
    F: Fn(Complex64) -> Complex64,
{
    let (d, dbar) = try_wirtinger_pair(|w| Ok(f(w)), nu, fd).expect("infallible");
    match which {
        Wirtinger::D => d,
        Wirtinger::DBar => dbar,
    }
}

/// A line together with its first Wirtinger derivatives.
#[derive(Debug, Clone, Copy)]
pub struct LineJet {
    pub line: OrientedLine,
    pub xi_d: Complex64,
    pub xi_dbar: Complex64,
    pub eta_d: Complex64,
    pub eta_dbar: Complex64,
}

impl LineJet {
    /// `(eta ∂̄conj(xi) + conj(eta) ∂̄xi) / (1+|xi|²)²`; half of `∂̄r`.
    pub fn dbar_form(&self) -> Complex64 {
        let xi = self.line.xi;
        let eta = self.line.eta;
        let s = 1.0 + xi.norm_sqr();
        (eta * self.xi_d.conj() + eta.conj() * self.xi_dbar) / (s * s)
    }

    /// `(conj(eta) ∂xi + eta ∂conj(xi)) / (1+|xi|²)²`; the conjugate of [`Self::dbar_form`].
    pub fn d_form(&self) -> Complex64 {
        let xi = self.line.xi;
        let eta = self.line.eta;
        let s = 1.0 + xi.norm_sqr();
        (eta.conj() * self.xi_d + eta * self.xi_dbar.conj()) / (s * s)
    }
}

/// A two-parameter family of oriented lines.
pub trait Congruence: Send + Sync {
    /// The line at `nu`, in the chart of `frame` (world chart = identity).
    fn line_in(&self, frame: &MobiusRotation, nu: Complex64) -> Result<OrientedLine>;

    /// Unit direction in world coordinates; defined even where the world chart escapes.
    fn direction(&self, nu: Complex64) -> Result<Vector3<f64>>;

    /// The line at `nu` in the world chart.
    fn line(&self, nu: Complex64) -> Result<OrientedLine> {
        self.line_in(&MobiusRotation::IDENTITY, nu)
    }

    /// Affine parameter at which rays are emitted; `None` when they arrive from infinity.
    fn emission(&self, _nu: Complex64) -> Option<f64> {
        None
    }

    /// Closed-form derivatives in `frame`, when the congruence can supply them.
    fn analytic_jet(&self, _frame: &MobiusRotation, _nu: Complex64) -> Option<Result<LineJet>> {
        None
    }

    /// Line and derivatives in `frame`; finite differences unless closed forms exist.
    fn jet(&self, frame: &MobiusRotation, nu: Complex64) -> Result<LineJet> {
        if let Some(j) = self.analytic_jet(frame, nu) {
            return j;
        }
        finite_difference_jet(self, frame, nu, FiniteDiff::FAST)
    }

    /// A frame in which the line at `nu` sits comfortably inside the chart.
    fn frame_at(&self, nu: Complex64) -> Result<MobiusRotation> {
        Ok(best_frame(&[self.direction(nu)?]))
    }
}

pub fn finite_difference_jet<C: Congruence + ?Sized>(
    c: &C,
    frame: &MobiusRotation,
    nu: Complex64,
    fd: FiniteDiff,
) -> Result<LineJet> {
    let line = c.line_in(frame, nu)?;
    let [(xi_d, xi_dbar), (eta_d, eta_dbar)] = try_wirtinger_pairs(|w| c.line_in(frame, w).map(|l| [l.xi, l.eta]), nu, fd)?;
    Ok(LineJet { line, xi_d, xi_dbar, eta_d, eta_dbar })
}

/// How a [`ParametricCongruence`] provides derivatives.
#[derive(Clone)]
pub enum DerivMode {
    FiniteDifference,
    /// Closures for `(∂xi, ∂̄xi, ∂eta, ∂̄eta)` in the native frame.
    Analytic { xi_d: ComplexFn, xi_dbar: ComplexFn, eta_d: ComplexFn, eta_dbar: ComplexFn },
}

/// Congruence given by closures `nu -> xi(nu)`, `nu -> eta(nu)` in a native
/// chart frame. World lines are obtained by undoing `frame`.
#[derive(Clone)]
pub struct ParametricCongruence {
    xi: ComplexFn,
    eta: ComplexFn,
    frame: MobiusRotation,
    deriv: DerivMode,
    emission: Option<RealFn>,
}

impl ParametricCongruence {
    pub fn new(
        xi: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        eta: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            xi: Arc::new(xi),
            eta: Arc::new(eta),
            frame: MobiusRotation::IDENTITY,
            deriv: DerivMode::FiniteDifference,
            emission: None,
        }
    }

    /// Interpret the closures in the chart of `frame` (world → native).
    pub fn in_frame(mut self, frame: MobiusRotation) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_derivatives(mut self, deriv: DerivMode) -> Self {
        self.deriv = deriv;
        self
    }

    /// Rays start at this affine parameter instead of arriving from infinity.
    pub fn with_emission(mut self, emission: impl Fn(Complex64) -> f64 + Send + Sync + 'static) -> Self {
        self.emission = Some(Arc::new(emission));
        self
    }

    pub fn native_frame(&self) -> MobiusRotation {
        self.frame
    }

    pub fn native_line(&self, nu: Complex64) -> OrientedLine {
        OrientedLine { xi: (self.xi)(nu), eta: (self.eta)(nu) }
    }

    pub fn deriv_mode(&self) -> &DerivMode {
        &self.deriv
    }

    /// Largest disagreement between supplied and finite-difference derivatives
    /// over `nodes`; an error above 1e-6.
    pub fn check_derivatives(&self, nodes: &[Complex64]) -> Result<f64> {
        let DerivMode::Analytic { xi_d, xi_dbar, eta_d, eta_dbar } = &self.deriv else {
            return Ok(0.0);
        };
        let mut worst = 0.0f64;
        for &nu in nodes {
            let (fxd, fxb) = try_wirtinger_pair(|w| Ok((self.xi)(w)), nu, FiniteDiff::default())?;
            let (fed, feb) = try_wirtinger_pair(|w| Ok((self.eta)(w)), nu, FiniteDiff::default())?;
            for (a, b) in [(fxd, xi_d(nu)), (fxb, xi_dbar(nu)), (fed, eta_d(nu)), (feb, eta_dbar(nu))] {
                let scale = 1.0 + a.norm().max(b.norm());
                worst = worst.max((a - b).norm() / scale);
            }
        }
        if worst > 1e-6 {
            Err(TwistorError::DerivativeMismatch { mismatch: worst })
        } else {
            Ok(worst)
        }
    }
}

impl Congruence for ParametricCongruence {
    fn line_in(&self, frame: &MobiusRotation, nu: Complex64) -> Result<OrientedLine> {
        let native = self.native_line(nu);
        if *frame == self.frame {
            return Ok(native);
        }
        frame.compose(&self.frame.inverse()).apply_line(&native)
    }

    fn direction(&self, nu: Complex64) -> Result<Vector3<f64>> {
        Ok(self.frame.inverse().apply_dir_vector((self.xi)(nu)))
    }

    fn emission(&self, nu: Complex64) -> Option<f64> {
        self.emission.as_ref().map(|e| e(nu))
    }

    fn analytic_jet(&self, frame: &MobiusRotation, nu: Complex64) -> Option<Result<LineJet>> {
        match &self.deriv {
            DerivMode::Analytic { xi_d, xi_dbar, eta_d, eta_dbar } if *frame == self.frame => Some(Ok(LineJet {
                line: self.native_line(nu),
                xi_d: xi_d(nu),
                xi_dbar: xi_dbar(nu),
                eta_d: eta_d(nu),
                eta_dbar: eta_dbar(nu),
            })),
            _ => None,
        }
    }

    fn frame_at(&self, nu: Complex64) -> Result<MobiusRotation> {
        // Stay native when the native chart is comfortable so closed-form derivatives apply.
        if (self.xi)(nu).norm() <= 2.5 {
            Ok(self.frame)
        } else {
            Ok(best_frame(&[self.direction(nu)?]))
        }
    }
}

/// Plane wave travelling along `direction`. In its native frame (which takes
/// `direction` to the north pole) the lines are `xi = 0` through `(z = nu, t = 0)`.
pub fn plane_wave(direction: &Vector3<f64>) -> ParametricCongruence {
    let zero = Complex64::new(0.0, 0.0);
    ParametricCongruence::new(move |_| zero, |nu| 0.5 * nu)
        .in_frame(MobiusRotation::north_to(direction))
        .with_derivatives(DerivMode::Analytic {
            xi_d: Arc::new(move |_| zero),
            xi_dbar: Arc::new(move |_| zero),
            eta_d: Arc::new(|_| Complex64::new(0.5, 0.0)),
            eta_dbar: Arc::new(move |_| zero),
        })
}

/// Spherical wave emitted from `focus`; `nu` is the ray direction in the chart of `frame`.
pub fn spherical_wave(focus: &Vector3<f64>, frame: MobiusRotation) -> ParametricCongruence {
    let f = frame.apply_point(EuclidPoint::from_vector(focus));
    let (z, t) = (f.z, f.t);
    let zero = Complex64::new(0.0, 0.0);
    ParametricCongruence::new(|nu| nu, move |nu| line_from_point_dir(f, nu).eta)
        .in_frame(frame)
        .with_emission(move |nu| affine_param(f, nu))
        .with_derivatives(DerivMode::Analytic {
            xi_d: Arc::new(|_| Complex64::new(1.0, 0.0)),
            xi_dbar: Arc::new(move |_| zero),
            eta_d: Arc::new(move |nu| -t - z.conj() * nu),
            eta_dbar: Arc::new(move |_| zero),
        })
}

/// `∂̄r` demanded by the potential equation at `nu`.
pub fn potential_rhs<C: Congruence + ?Sized>(c: &C, nu: Complex64) -> Result<Complex64> {
    let frame = c.frame_at(nu)?;
    Ok(2.0 * c.jet(&frame, nu)?.dbar_form())
}

/// `|LHS − RHS|` of the integrability condition
/// `∂[(eta ∂̄conj(xi) + conj(eta) ∂̄xi)/(1+|xi|²)²] = ∂̄[(conj(eta) ∂xi + eta ∂conj(xi))/(1+|xi|²)²]`.
pub fn integrability_residual<C: Congruence + ?Sized>(c: &C, nu: Complex64) -> Result<f64> {
    let frame = c.frame_at(nu)?;
    let [(lhs, _), (_, rhs)] = try_wirtinger_pairs(
        |w| {
            let j = c.jet(&frame, w)?;
            Ok([j.dbar_form(), j.d_form()])
        },
        nu,
        FiniteDiff::OUTER,
    )?;
    Ok((lhs - rhs).norm())
}

/// A surface given as a graph `eta = F(xi)` over its normal direction,
/// with potential `r(xi)`.
#[derive(Clone)]
pub struct TwistorSurface {
    pub twistor: ComplexFn,
    pub potential: RealFn,
    /// Annulus `min_radius <= |xi| <= max_radius` on which the pair is valid.
    pub min_radius: f64,
    pub max_radius: f64,
}

impl TwistorSurface {
    pub fn new(
        twistor: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        potential: impl Fn(Complex64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { twistor: Arc::new(twistor), potential: Arc::new(potential), min_radius: 0.0, max_radius: f64::INFINITY }
    }

    pub fn with_domain(mut self, min_radius: f64, max_radius: f64) -> Self {
        self.min_radius = min_radius;
        self.max_radius = max_radius;
        self
    }

    pub fn contains(&self, xi: Complex64) -> bool {
        let n = xi.norm();
        n >= self.min_radius && n <= self.max_radius
    }

    pub fn f(&self, xi: Complex64) -> Complex64 {
        (self.twistor)(xi)
    }

    pub fn r(&self, xi: Complex64) -> f64 {
        (self.potential)(xi)
    }

    /// Normal line and affine parameter of the surface point with normal `xi`.
    pub fn normal_line(&self, xi: Complex64) -> (OrientedLine, f64) {
        (OrientedLine::new(xi, self.f(xi)), self.r(xi))
    }

    pub fn point(&self, xi: Complex64) -> EuclidPoint {
        point_from_line(xi, self.f(xi), self.r(xi))
    }
}

/// `|∂̄r − 2F/(1+|xi|²)²|` for a graph surface.
pub fn potential_residual(s: &TwistorSurface, xi: Complex64) -> f64 {
    let dbar_r = wirtinger(|w| Complex64::new(s.r(w), 0.0), xi, Wirtinger::DBar);
    let q = 1.0 + xi.norm_sqr();
    (dbar_r - 2.0 * s.f(xi) / (q * q)).norm()
}

/// `|∂̄r − 2·A|` for a potential `r` given along a congruence, where `A` is
/// the congruence's 1-form coefficient at `nu`.
pub fn potential_residual_along<C: Congruence + ?Sized>(
    c: &C,
    r: impl Fn(Complex64) -> f64,
    nu: Complex64,
) -> Result<f64> {
    let dbar_r = wirtinger(|w| Complex64::new(r(w), 0.0), nu, Wirtinger::DBar);
    Ok((dbar_r - potential_rhs(c, nu)?).norm())
}

/// Rectangular lattice in `nu = u + i v`, row-major over `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub nu: usize,
    pub nv: usize,
}

impl Grid {
    pub fn new(u_min: f64, u_max: f64, v_min: f64, v_max: f64, nu: usize, nv: usize) -> Self {
        assert!(nu >= 2 && nv >= 2, "grid needs at least two nodes per axis");
        Self { u_min, u_max, v_min, v_max, nu, nv }
    }

    /// Square `[-half, half]²` with `n × n` nodes.
    pub fn square(half: f64, n: usize) -> Self {
        Self::new(-half, half, -half, half, n, n)
    }

    pub fn len(&self) -> usize {
        self.nu * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn du(&self) -> f64 {
        (self.u_max - self.u_min) / (self.nu - 1) as f64
    }

    pub fn dv(&self) -> f64 {
        (self.v_max - self.v_min) / (self.nv - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.u_min + i as f64 * self.du(), self.v_min + j as f64 * self.dv())
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nu + i
    }

    pub fn nodes(&self) -> Vec<Complex64> {
        (0..self.nv).flat_map(|j| (0..self.nu).map(move |i| (i, j))).map(|(i, j)| self.node(i, j)).collect()
    }

    /// Lattice indices of the node nearest `nu`.
    pub fn nearest(&self, nu: Complex64) -> (usize, usize) {
        let i = ((nu.re - self.u_min) / self.du()).round().clamp(0.0, (self.nu - 1) as f64) as usize;
        let j = ((nu.im - self.v_min) / self.dv()).round().clamp(0.0, (self.nv - 1) as f64) as usize;
        (i, j)
    }

    /// Nodes not on the boundary.
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i + 1 < self.nu && j + 1 < self.nv
    }
}

/// Potential values on a grid, with the two integration orders kept for inspection.
#[derive(Debug, Clone)]
pub struct PotentialGrid {
    pub grid: Grid,
    /// Row-first values (base row, then up each column); `None` where unreachable.
    pub values: Vec<Option<f64>>,
    /// Column-first values.
    pub column_first: Vec<Option<f64>>,
    /// Largest disagreement between the two orders.
    pub discrepancy: f64,
    /// Largest integrability residual seen on the grid, over the nodes that were kept.
    pub max_integrability_residual: f64,
    /// Nodes dropped by [`PotentialOptions::mask_irregular`].
    pub irregular_nodes: usize,
}

impl PotentialGrid {
    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.values[self.grid.index(i, j)]
    }

    /// Same grid with every value shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut().chain(out.column_first.iter_mut()) {
            *v = v.map(|x| x + delta);
        }
        out
    }
}

/// Options for [`solve_potential`].
#[derive(Debug, Clone, Copy)]
pub struct PotentialOptions {
    /// Precondition threshold on the integrability residual.
    pub integrability_tol: f64,
    /// Tolerated disagreement between the two integration orders.
    pub path_tol: f64,
    /// Skip the per-node integrability check.
    pub skip_integrability_check: bool,
    /// Drop nodes that fail the integrability check, and lattice segments
    /// along which the lines are not smooth (to within `path_tol`), instead
    /// of failing. Meant for reflected congruences, which are integrable but have
    /// grazing rays, shadow edges and jumps between surface patches. Still
    /// fails when most evaluable nodes are irregular.
    pub mask_irregular: bool,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        Self { integrability_tol: 1e-5, path_tol: 1e-4, skip_integrability_check: false, mask_irregular: false }
    }
}

// 4-point Gauss–Legendre on [0, 1].
const GL_NODES: [f64; 4] = [0.069_431_844_202_973_71, 0.330_009_478_207_571_9, 0.669_990_521_792_428_1, 0.930_568_155_797_026_3];
const GL_WEIGHTS: [f64; 4] = [0.173_927_422_568_726_93, 0.326_072_577_431_273_07, 0.326_072_577_431_273_07, 0.173_927_422_568_726_93];

fn quadrature<C: Congruence + ?Sized>(c: &C, a: Complex64, b: Complex64) -> Result<f64> {
    let delta = b - a;
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        let dbar_r = potential_rhs(c, a + delta * *x)?;
        // dr = 2 Re(∂̄r) du + 2 Im(∂̄r) dv
        acc += w * 2.0 * (dbar_r.re * delta.re + dbar_r.im * delta.im);
    }
    Ok(acc)
}

/// Like [`quadrature`], but `None` when the line jumps or kinks along the
/// segment: consecutive samples must match the trapezoid prediction from
/// their derivatives to within `tol * (1 + |eta|)`. A jump in the potential
/// leaves no trace in `dr`, so the lines themselves are checked.
fn checked_quadrature<C: Congruence + ?Sized>(c: &C, a: Complex64, b: Complex64, tol: f64) -> Option<f64> {
    let delta = b - a;
    // One frame for the whole segment; the 1-form does not depend on it.
    let frame = c.frame_at(a).ok()?;
    let ts = [0.0, GL_NODES[0], GL_NODES[1], GL_NODES[2], GL_NODES[3], 1.0];
    let mut jets = Vec::with_capacity(ts.len());
    for t in ts {
        jets.push(c.jet(&frame, a + delta * t).ok()?);
    }
    for (k, pair) in jets.windows(2).enumerate() {
        let (j0, j1) = (&pair[0], &pair[1]);
        let d = delta * (ts[k + 1] - ts[k]);
        let predict = |d0: Complex64, d1: Complex64, b0: Complex64, b1: Complex64| 0.5 * ((d0 + d1) * d + (b0 + b1) * d.conj());
        let xi_miss = j1.line.xi - j0.line.xi - predict(j0.xi_d, j1.xi_d, j0.xi_dbar, j1.xi_dbar);
        let eta_miss = j1.line.eta - j0.line.eta - predict(j0.eta_d, j1.eta_d, j0.eta_dbar, j1.eta_dbar);
        if xi_miss.norm() + eta_miss.norm() > tol * (1.0 + j0.line.eta.norm()) {
            return None;
        }
    }
    let mut acc = 0.0;
    for (j, w) in jets[1..5].iter().zip(GL_WEIGHTS.iter()) {
        let dbar_r = 2.0 * j.dbar_form();
        acc += w * 2.0 * (dbar_r.re * delta.re + dbar_r.im * delta.im);
    }
    Some(acc)
}

/// Increment of `r` from `a` to `b` along a straight segment. With
/// `max_error`, segments where the congruence is not smooth are cut.
fn segment_increment<C: Congruence + ?Sized>(c: &C, a: Complex64, b: Complex64, max_error: Option<f64>) -> Option<f64> {
    match max_error {
        Some(tol) => checked_quadrature(c, a, b, tol),
        None => quadrature(c, a, b).ok(),
    }
}

/// Increment between two lattice-adjacent nodes, `None` where the segment is cut.
type Step<'a> = dyn Fn((usize, usize), (usize, usize)) -> Option<f64> + Sync + 'a;

fn integrate_lines(grid: &Grid, mask: &[bool], base: (usize, usize), row_first: bool, step: &Step) -> Vec<Option<f64>> {
    let mut out = vec![None; grid.len()];
    let (bi, bj) = base;
    // (outer count, inner count, node(outer, inner))
    let node_of = |along_base: usize, other: usize| -> (usize, usize) {
        if row_first { (along_base, other) } else { (other, along_base) }
    };
    let base_len = if row_first { grid.nu } else { grid.nv };
    let other_len = if row_first { grid.nv } else { grid.nu };
    let base_pos = if row_first { bi } else { bj };
    let other_base = if row_first { bj } else { bi };

    // Walk the base line outward from the base node.
    let mut base_vals = vec![None; base_len];
    base_vals[base_pos] = Some(0.0);
    for dir in [1isize, -1] {
        let mut k = base_pos as isize;
        loop {
            let next = k + dir;
            if next < 0 || next >= base_len as isize {
                break;
            }
            let (i0, j0) = node_of(k as usize, other_base);
            let (i1, j1) = node_of(next as usize, other_base);
            let prev = base_vals[k as usize];
            let val = match prev {
                Some(p) if mask[grid.index(i0, j0)] && mask[grid.index(i1, j1)] => {
                    step((i0, j0), (i1, j1)).map(|d| p + d)
                }
                _ => None,
            };
            base_vals[next as usize] = val;
            k = next;
        }
    }

    // Then every transverse line from its base-line node.
    let lines: Vec<Vec<Option<f64>>> = (0..base_len)
        .into_par_iter()
        .map(|a| {
            let mut vals = vec![None; other_len];
            vals[other_base] = base_vals[a];
            for dir in [1isize, -1] {
                let mut k = other_base as isize;
                loop {
                    let next = k + dir;
                    if next < 0 || next >= other_len as isize {
                        break;
                    }
                    let (i0, j0) = node_of(a, k as usize);
                    let (i1, j1) = node_of(a, next as usize);
                    let val = match vals[k as usize] {
                        Some(p) if mask[grid.index(i0, j0)] && mask[grid.index(i1, j1)] => {
                            step((i0, j0), (i1, j1)).map(|d| p + d)
                        }
                        _ => None,
                    };
                    vals[next as usize] = val;
                    k = next;
                }
            }
            vals
        })
        .collect();
    for (a, vals) in lines.into_iter().enumerate() {
        for (b, v) in vals.into_iter().enumerate() {
            let (i, j) = node_of(a, b);
            out[grid.index(i, j)] = v;
        }
    }
    out
}

/// Inverts the ∂̄ operator on `grid` by integrating the exact 1-form `dr`
/// along lattice lines from the node nearest `base_nu`, where `r = r_base`.
///
/// Nodes where the congruence cannot be evaluated are masked and every node
/// reachable only through them is left `None`.
pub fn solve_potential<C: Congruence + ?Sized>(
    c: &C,
    grid: &Grid,
    base_nu: Complex64,
    r_base: f64,
    opts: PotentialOptions,
) -> Result<PotentialGrid> {
    let nodes = grid.nodes();
    let mut mask: Vec<bool> = nodes.par_iter().map(|&nu| c.line_in(&c.frame_at(nu).unwrap_or_default(), nu).is_ok()).collect();

    let mut max_res = 0.0f64;
    let mut irregular = 0;
    if !opts.skip_integrability_check {
        let residuals: Vec<Option<f64>> = nodes
            .par_iter()
            .zip(mask.par_iter())
            .map(|(&nu, &ok)| if ok { integrability_residual(c, nu).ok() } else { None })
            .collect();
        let worst = residuals.iter().flatten().fold(0.0, |a: f64, &b| a.max(b));
        if opts.mask_irregular {
            let evaluable = mask.iter().filter(|&&m| m).count();
            for (m, res) in mask.iter_mut().zip(residuals.iter()) {
                let regular = res.is_some_and(|r| r < opts.integrability_tol);
                if *m && !regular {
                    *m = false;
                    irregular += 1;
                }
            }
            if 2 * irregular > evaluable {
                return Err(TwistorError::NotIntegrable { max_residual: worst });
            }
            max_res = residuals.iter().zip(mask.iter()).filter(|(_, &m)| m).filter_map(|(r, _)| *r).fold(0.0, f64::max);
        } else {
            max_res = worst;
            if !max_res.is_finite() || max_res >= opts.integrability_tol {
                return Err(TwistorError::NotIntegrable { max_residual: max_res });
            }
        }
    }

    let mut out = solve_potential_on(c, grid, &mask, base_nu, r_base, opts)?;
    out.max_integrability_residual = max_res;
    out.irregular_nodes = irregular;
    Ok(out)
}

/// Integration step of [`solve_potential`] over a caller-supplied node mask,
/// with no integrability precondition. `mask_irregular` still enables the
/// per-segment quadrature check.
pub fn solve_potential_on<C: Congruence + ?Sized>(
    c: &C,
    grid: &Grid,
    mask: &[bool],
    base_nu: Complex64,
    r_base: f64,
    opts: PotentialOptions,
) -> Result<PotentialGrid> {
    let base = grid.nearest(base_nu);
    if !mask[grid.index(base.0, base.1)] {
        return Err(TwistorError::OutsideDomain(format!("base node {base_nu}")));
    }
    let max_error = opts.mask_irregular.then_some(opts.path_tol);
    let step = |a: (usize, usize), b: (usize, usize)| segment_increment(c, grid.node(a.0, a.1), grid.node(b.0, b.1), max_error);
    integrate_from(grid, mask, base, r_base, opts.path_tol, &step)
}

fn integrate_from(grid: &Grid, mask: &[bool], base: (usize, usize), r_base: f64, path_tol: f64, step: &Step) -> Result<PotentialGrid> {
    let rows = integrate_lines(grid, mask, base, true, step);
    let cols = integrate_lines(grid, mask, base, false, step);
    let mut discrepancy = 0.0f64;
    for (a, b) in rows.iter().zip(cols.iter()) {
        if let (Some(a), Some(b)) = (a, b) {
            discrepancy = discrepancy.max((a - b).abs());
        }
    }
    if discrepancy > path_tol {
        return Err(TwistorError::PathMismatch { discrepancy });
    }
    let shift = |v: Vec<Option<f64>>| v.into_iter().map(|x| x.map(|x| x + r_base)).collect::<Vec<_>>();
    Ok(PotentialGrid {
        grid: *grid,
        values: shift(rows),
        column_first: shift(cols),
        discrepancy,
        max_integrability_residual: 0.0,
        irregular_nodes: 0,
    })
}

/// Covers every node of `mask` that lattice paths can reach, starting a new
/// base at each node of `order` not yet reached. `anchor(k)` gives the
/// potential at node index `k` when it is used as a base; nodes where it is
/// `None` are skipped as bases. Segment increments are computed once.
pub fn solve_potential_cover<C: Congruence + ?Sized>(
    c: &C,
    grid: &Grid,
    mask: &[bool],
    order: &[usize],
    anchor: impl Fn(usize) -> Option<f64>,
    opts: PotentialOptions,
) -> Result<PotentialGrid> {
    let max_error = opts.mask_irregular.then_some(opts.path_tol);
    // Increments to the next node along u and along v.
    let along = |du: usize, dv: usize| -> Vec<Option<f64>> {
        (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % grid.nu, k / grid.nu);
                let (i1, j1) = (i + du, j + dv);
                if i1 >= grid.nu || j1 >= grid.nv || !mask[k] || !mask[grid.index(i1, j1)] {
                    return None;
                }
                segment_increment(c, grid.node(i, j), grid.node(i1, j1), max_error)
            })
            .collect()
    };
    let (su, sv) = (along(1, 0), along(0, 1));
    let step = |a: (usize, usize), b: (usize, usize)| {
        let forward = b.0 > a.0 || b.1 > a.1;
        let lo = if forward { a } else { b };
        let cache = if a.1 == b.1 { &su } else { &sv };
        cache[grid.index(lo.0, lo.1)].map(|d| if forward { d } else { -d })
    };

    let mut merged: Option<PotentialGrid> = None;
    for &k in order {
        if !mask[k] || merged.as_ref().is_some_and(|m| m.values[k].is_some()) {
            continue;
        }
        let Some(r_base) = anchor(k) else { continue };
        let piece = integrate_from(grid, mask, (k % grid.nu, k / grid.nu), r_base, opts.path_tol, &step)?;
        merged = Some(match merged {
            None => piece,
            Some(mut m) => {
                for j in 0..m.values.len() {
                    if m.values[j].is_none() && piece.values[j].is_some() {
                        m.values[j] = piece.values[j];
                        m.column_first[j] = piece.column_first[j];
                    }
                }
                m.discrepancy = m.discrepancy.max(piece.discrepancy);
                m
            }
        });
    }
    merged.ok_or_else(|| TwistorError::OutsideDomain("no usable base node".into()))
}

/// A reconstructed wavefront point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavefrontSample {
    pub nu: Complex64,
    pub point: EuclidPoint,
    /// The additive constant `C` in `r + C`.
    pub offset: f64,
}

/// World point at affine parameter `r` on the line at `nu`, computed in a
/// frame where the line is well inside the chart.
pub fn point_on<C: Congruence + ?Sized>(c: &C, nu: Complex64, r: f64) -> Result<EuclidPoint> {
    let frame = c.frame_at(nu)?;
    let line = c.line_in(&frame, nu)?;
    let p = line.point_at(r);
    if frame == MobiusRotation::IDENTITY {
        Ok(p)
    } else {
        Ok(frame.inverse().apply_point(p))
    }
}

/// Wavefront `point_from_line(xi, eta, r + offset)` at every grid node where `r` is known.
/// Nodes with no potential or no line are skipped.
pub fn wavefront_points<C: Congruence + ?Sized>(c: &C, r: &PotentialGrid, offset: f64) -> Vec<WavefrontSample> {
    let grid = r.grid;
    (0..grid.nv)
        .flat_map(|j| (0..grid.nu).map(move |i| (i, j)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|(i, j)| {
            let nu = grid.node(i, j);
            let rv = r.at(i, j)?;
            let point = point_on(c, nu, rv + offset).ok()?;
            Some(WavefrontSample { nu, point, offset })
        })
        .collect()
}

/// Wavefront samples for a potential given in closed form.
pub fn wavefront_points_fn<C: Congruence + ?Sized>(
    c: &C,
    r: impl Fn(Complex64) -> f64 + Sync,
    offset: f64,
    nodes: &[Complex64],
) -> Result<Vec<WavefrontSample>> {
    nodes
        .par_iter()
        .map(|&nu| Ok(WavefrontSample { nu, point: point_on(c, nu, r(nu) + offset)?, offset }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn wirtinger_basics() {
        let nu = c(0.7, -0.3);
        assert!((wirtinger(|w| w, nu, Wirtinger::D) - 1.0).norm() < 1e-10);
        assert!(wirtinger(|w| w, nu, Wirtinger::DBar).norm() < 1e-10);
        assert!(wirtinger(|w| w.conj(), nu, Wirtinger::D).norm() < 1e-10);
        assert!((wirtinger(|w| w.conj(), nu, Wirtinger::DBar) - 1.0).norm() < 1e-10);
        let two = c(2.0, 0.0);
        assert!((wirtinger(|w| c(w.norm_sqr(), 0.0), two, Wirtinger::D) - 2.0).norm() < 1e-8);
        assert!((wirtinger(|w| c(w.norm_sqr(), 0.0), two, Wirtinger::DBar) - 2.0).norm() < 1e-8);
    }

    #[test]
    fn wirtinger_polynomials_with_richardson() {
        // f = nu³ conj(nu)² + 2i nu conj(nu): ∂f = 3 nu² conj(nu)² + 2i conj(nu), ∂̄f = 2 nu³ conj(nu) + 2i nu
        let f = |w: Complex64| w.powi(3) * w.conj().powi(2) + 2.0 * I * w * w.conj();
        for nu in [c(0.3, 0.2), c(-1.5, 0.8), c(2.0, -2.0)] {
            let d = 3.0 * nu * nu * nu.conj() * nu.conj() + 2.0 * I * nu.conj();
            let db = 2.0 * nu.powi(3) * nu.conj() + 2.0 * I * nu;
            let scale = 1.0 + d.norm();
            assert!((wirtinger(f, nu, Wirtinger::D) - d).norm() / scale < 1e-8);
            assert!((wirtinger(f, nu, Wirtinger::DBar) - db).norm() / scale < 1e-8);
        }
    }

    #[test]
    fn grid_layout() {
        let g = Grid::new(0.0, 1.0, -1.0, 1.0, 3, 5);
        assert_eq!(g.len(), 15);
        assert_eq!(g.node(2, 4), c(1.0, 1.0));
        assert_eq!(g.index(2, 4), 14);
        assert_eq!(g.nearest(c(0.49, 0.1)), (1, 2));
        assert!(g.is_interior(1, 1) && !g.is_interior(0, 2));
    }

    #[test]
    fn analytic_derivative_mismatch_is_an_error() {
        let ok = ParametricCongruence::new(|w| w, |w| w * w).with_derivatives(DerivMode::Analytic {
            xi_d: Arc::new(|_| c(1.0, 0.0)),
            xi_dbar: Arc::new(|_| c(0.0, 0.0)),
            eta_d: Arc::new(|w| 2.0 * w),
            eta_dbar: Arc::new(|_| c(0.0, 0.0)),
        });
        assert!(ok.check_derivatives(&[c(0.3, 0.1), c(-1.0, 1.0)]).unwrap() < 1e-8);
        let bad = ParametricCongruence::new(|w| w, |w| w * w).with_derivatives(DerivMode::Analytic {
            xi_d: Arc::new(|_| c(1.0, 0.0)),
            xi_dbar: Arc::new(|_| c(0.0, 0.0)),
            eta_d: Arc::new(|w| w),
            eta_dbar: Arc::new(|_| c(0.0, 0.0)),
        });
        assert!(matches!(bad.check_derivatives(&[c(0.3, 0.1)]), Err(TwistorError::DerivativeMismatch { .. })));
    }

    #[test]
    fn frame_conversion_preserves_lines() {
        let cong = ParametricCongruence::new(|w| w, |w| 0.3 * w.conj() + 0.1);
        let shifted = MobiusRotation::chart_shift();
        let nu = c(0.4, 0.2);
        let world = cong.line(nu).unwrap();
        let other = cong.line_in(&shifted, nu).unwrap();
        let p = world.point_at(0.7);
        let q = shifted.inverse().apply_point(other.point_at(0.7));
        assert!(p.distance(&q) < 1e-12);
    }
}
