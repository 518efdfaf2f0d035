//! Closed-form reflections: plane mirrors, plane and spherical wavefronts,
//! and a small gallery of surfaces with their twistor functions.

use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::congruence::{ComplexFn, RealFn, TwistorSurface};
use crate::error::{Result, TwistorError};
use crate::euclid::ImplicitSurface;
use crate::reflection::{outgoing_eta, reflect_direction, ReflectingSurface, SurfaceSample};
use crate::twistor::{
    checked_chart, dir_to_vector, point_from_line, vector_to_dir, EuclidPoint, MobiusRotation, Translation,
};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Default half-width, in `|xi|`, of the excluded neighbourhoods of the torus's vertical normals.
pub const TORUS_MASK: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// The horizontal plane `x³ = height`, facing up.
    Plane { height: f64 },
    Sphere { center: Vector3<f64>, radius: f64 },
    /// Torus about the `x³`-axis with core radius `a` and tube radius `b`.
    Torus { a: f64, b: f64 },
}

/// A named reflecting surface with its twistor data and matching implicit equation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGalleryEntry {
    pub name: String,
    pub shape: Shape,
    /// Torus only: `|xi|` must lie in `[mask, 1/mask]`.
    pub mask_radius: f64,
}

impl SurfaceGalleryEntry {
    pub fn plane(height: f64) -> Result<Self> {
        if !height.is_finite() {
            return Err(TwistorError::InvalidParams(format!("plane height {height}")));
        }
        Ok(Self { name: "plane".into(), shape: Shape::Plane { height }, mask_radius: 0.0 })
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !center.iter().all(|c| c.is_finite()) {
            return Err(TwistorError::InvalidParams(format!("sphere radius {radius}, centre {center:?}")));
        }
        Ok(Self { name: "sphere".into(), shape: Shape::Sphere { center, radius }, mask_radius: 0.0 })
    }

    pub fn torus(a: f64, b: f64) -> Result<Self> {
        if !(a > b && b > 0.0 && a.is_finite()) {
            return Err(TwistorError::InvalidParams(format!("torus needs a > b > 0, got a={a}, b={b}")));
        }
        Ok(Self { name: "torus".into(), shape: Shape::Torus { a, b }, mask_radius: TORUS_MASK })
    }

    pub fn with_mask(mut self, mask_radius: f64) -> Self {
        self.mask_radius = mask_radius;
        self
    }

    /// Graph `eta = F(xi)`, `r(xi)` of one sheet over the world chart; `None` for the plane.
    pub fn sheet(&self, sheet: usize) -> Option<TwistorSurface> {
        match self.shape {
            Shape::Plane { .. } => None,
            Shape::Sphere { center, radius } => {
                let tr = Translation::to(EuclidPoint::from_vector(&center));
                Some(TwistorSurface::new(move |xi| tr.eta_shift(xi), move |xi| radius + tr.r_shift(xi)))
            }
            Shape::Torus { a, b } => {
                let a = if sheet == 0 { a } else { -a };
                let m = self.mask_radius;
                let s = TwistorSurface::new(move |xi| torus_f(a, xi), move |xi| torus_r(a, b, xi));
                Some(if m > 0.0 { s.with_domain(m, 1.0 / m) } else { s })
            }
        }
    }

    /// Twistor function of the first sheet in the world chart.
    pub fn f(&self) -> Option<ComplexFn> {
        self.sheet(0).map(|s| s.twistor)
    }

    /// Potential of the first sheet in the world chart.
    pub fn r(&self) -> Option<RealFn> {
        self.sheet(0).map(|s| s.potential)
    }
}

fn torus_f(a: f64, xi: Complex64) -> Complex64 {
    // sqrt(xi / conj(xi)) taken as xi / |xi|.
    0.5 * a * (1.0 - xi.norm_sqr()) * xi / xi.norm()
}

fn torus_r(a: f64, b: f64, xi: Complex64) -> f64 {
    2.0 * a * xi.norm() / (1.0 + xi.norm_sqr()) + b
}

/// Looks up a gallery surface: `plane [height]`, `sphere [cx, cy, cz, radius]`, `torus [a, b]`.
pub fn gallery(name: &str, params: &[f64]) -> Result<SurfaceGalleryEntry> {
    let bad = || TwistorError::InvalidParams(format!("{name}: unexpected parameter list {params:?}"));
    match name {
        "plane" => match params {
            [] => SurfaceGalleryEntry::plane(0.0),
            [h] => SurfaceGalleryEntry::plane(*h),
            _ => Err(bad()),
        },
        "sphere" => match params {
            [] => SurfaceGalleryEntry::sphere(Vector3::zeros(), 1.0),
            [r] => SurfaceGalleryEntry::sphere(Vector3::zeros(), *r),
            [x, y, z, r] => SurfaceGalleryEntry::sphere(Vector3::new(*x, *y, *z), *r),
            _ => Err(bad()),
        },
        "torus" => match params {
            [] => SurfaceGalleryEntry::torus(2.0, 1.0),
            [a, b] => SurfaceGalleryEntry::torus(*a, *b),
            _ => Err(bad()),
        },
        _ => Err(TwistorError::InvalidParams(format!("unknown surface {name:?}"))),
    }
}

impl ReflectingSurface for SurfaceGalleryEntry {
    fn sheet_count(&self) -> usize {
        match self.shape {
            Shape::Torus { .. } => 2,
            _ => 1,
        }
    }

    /// Plane: `nu` is the world point `x¹ + i x²`. Sphere: `nu` is the normal
    /// direction in the chart of `frame`. Torus: `nu` is the world normal direction.
    fn normal_line(&self, frame: &MobiusRotation, sheet: usize, nu: Complex64) -> Result<SurfaceSample> {
        if sheet >= self.sheet_count() {
            return Err(TwistorError::InvalidParams(format!("sheet {sheet}")));
        }
        match self.shape {
            Shape::Plane { height } => {
                SurfaceSample { xi: Complex64::new(0.0, 0.0), eta: 0.5 * nu, r: height }.rotated(frame)
            }
            Shape::Sphere { center, radius } => {
                let c = frame.apply_vector(&center);
                let tr = Translation::to(EuclidPoint::from_vector(&c));
                Ok(SurfaceSample { xi: nu, eta: tr.eta_shift(nu), r: radius + tr.r_shift(nu) })
            }
            Shape::Torus { .. } => {
                let s = self.sheet(sheet).expect("torus sheet");
                if !s.contains(nu) {
                    return Err(TwistorError::OutsideDomain(format!("|xi| = {:e}", nu.norm())));
                }
                SurfaceSample { xi: nu, eta: s.f(nu), r: s.r(nu) }.rotated(frame)
            }
        }
    }

    fn implicit(&self) -> ImplicitSurface {
        match self.shape {
            Shape::Plane { height } => ImplicitSurface::Plane { height },
            Shape::Sphere { center, radius } => ImplicitSurface::Sphere { center, radius },
            Shape::Torus { a, b } => ImplicitSurface::Torus { a, b },
        }
    }

    fn locate(&self, frame: &MobiusRotation, p: &Vector3<f64>, n: &Vector3<f64>) -> Result<(usize, Complex64)> {
        match self.shape {
            Shape::Plane { .. } => Ok((0, Complex64::new(p.x, p.y))),
            Shape::Sphere { .. } => Ok((0, vector_to_dir(&frame.apply_vector(n))?)),
            Shape::Torus { .. } => {
                let outward = p.x * n.x + p.y * n.y >= 0.0;
                Ok((if outward { 0 } else { 1 }, vector_to_dir(n)?))
            }
        }
    }
}

/// Reflection of the line `(xi1, eta1)` in the `x¹x²`-plane.
pub fn reflect_in_plane(xi1: Complex64, eta1: Complex64) -> Result<(Complex64, Complex64)> {
    if xi1.norm() == 0.0 {
        return Err(TwistorError::ChartEscape("vertical ray reflects to the south pole"));
    }
    let c = xi1.conj();
    Ok((checked_chart(1.0 / c, "reflected ray near the south pole")?, -eta1.conj() / (c * c)))
}

/// Reflected line of a plane wave of direction `xi1` at the surface point `(xi0, eta0, r0)`.
pub fn plane_wave_by_surface_point(
    xi1: Complex64,
    xi0: Complex64,
    eta0: Complex64,
    r0: f64,
) -> Result<(Complex64, Complex64)> {
    Ok((reflect_direction(xi0, xi1)?, outgoing_eta(xi0, eta0, r0, xi1)?))
}

/// Which root of a quadratic to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchChoice {
    Plus,
    Minus,
    /// Whichever root gives the physical, outgoing reflection.
    #[default]
    Outgoing,
}

impl BranchChoice {
    pub fn from_sign(sign: i32) -> Result<Self> {
        match sign {
            1 => Ok(Self::Plus),
            -1 => Ok(Self::Minus),
            _ => Err(TwistorError::InvalidParams(format!("branch sign {sign}"))),
        }
    }

    fn candidates(self) -> &'static [f64] {
        match self {
            Self::Plus => &[1.0],
            Self::Minus => &[-1.0],
            Self::Outgoing => &[1.0, -1.0],
        }
    }
}

/// Reflected plane wave evaluated at an outgoing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalReflection {
    /// Surface normal at the reflection point.
    pub xi0: Complex64,
    pub gamma: Complex64,
    pub f2: Complex64,
    /// `+1` or `-1`.
    pub sign: f64,
}

/// Normal direction that reflects the plane wave `xi1` into `xi`, for one root.
fn plane_wave_normal(xi: Complex64, xi1: Complex64, sign: f64) -> Result<Complex64> {
    // Rationalized so neither root loses digits to cancellation.
    let b = 1.0 - xi.norm_sqr() * xi1.norm_sqr();
    let beta = xi * (1.0 + xi.conj() * xi1) + xi1 * (1.0 + xi * xi1.conj());
    let radicand = (1.0 + xi.norm_sqr()) * (1.0 + xi1.norm_sqr()) * (ONE + xi * xi1.conj()).norm_sqr();
    let scale = (1.0 + xi.norm_sqr()) * (1.0 + xi1.norm_sqr());
    if radicand <= 1e-24 * scale * scale {
        return Err(TwistorError::BranchUndefined);
    }
    let s = radicand.sqrt();
    let xi0 = if sign > 0.0 {
        if b >= 0.0 { beta / (b + s) } else { (s - b) / beta.conj() }
    } else if b <= 0.0 {
        -beta / (s - b)
    } else {
        -(b + s) / beta.conj()
    };
    checked_chart(xi0, "surface normal at the south pole")
}

/// Reflected plane wave parameterized by outgoing direction `xi`.
///
/// `xi1` is the antipode of the propagation direction: the wave travels along
/// `-1/conj(xi1)`, so `xi1 = 0` is a wave moving down the `x³`-axis.
pub fn plane_wave_by_direction(
    xi: Complex64,
    xi1: Complex64,
    surface: &TwistorSurface,
    branch: BranchChoice,
) -> Result<DirectionalReflection> {
    let mut last = TwistorError::BranchUndefined;
    for &sign in branch.candidates() {
        let xi0 = match plane_wave_normal(xi, xi1, sign) {
            Ok(x) => x,
            Err(e) => {
                last = e;
                continue;
            }
        };
        if branch == BranchChoice::Outgoing && dir_to_vector(xi).dot(&dir_to_vector(xi0)) <= 0.0 {
            continue;
        }
        if !surface.contains(xi0) {
            last = TwistorError::OutsideDomain(format!("|xi0| = {:e}", xi0.norm()));
            continue;
        }
        let ratio = (ONE + xi * xi1.conj()) * (1.0 + xi.norm_sqr()) / ((ONE + xi.conj() * xi1) * (1.0 + xi1.norm_sqr()));
        let mut gamma = sign * ratio.sqrt();
        // The principal root has a cut; keep gamma paired with the chosen xi0.
        let paired = 2.0 * (ONE + xi * xi0.conj()) / (1.0 + xi0.norm_sqr()) - 1.0;
        if (gamma - paired).norm() > (gamma + paired).norm() {
            gamma = -gamma;
        }
        let f0 = surface.f(xi0);
        let r0 = surface.r(xi0);
        let g1 = ONE + gamma;
        let w = xi - gamma * xi1;
        let f2 = 0.25 * (g1 * g1 * f0 - w * w * f0.conj() + 2.0 * (xi1 - xi) * gamma * r0);
        return Ok(DirectionalReflection { xi0, gamma, f2, sign });
    }
    Err(last)
}

/// Reflection of a plane wave moving down the `x³`-axis, at outgoing direction `xi`.
/// Returns `(xi0, F2)`.
pub fn plane_wave_down_axis(xi: Complex64, surface: &TwistorSurface) -> Result<(Complex64, Complex64)> {
    let s = (1.0 + xi.norm_sqr()).sqrt();
    // (-1 + s) / conj(xi), rationalized.
    let xi0 = xi / (1.0 + s);
    if !surface.contains(xi0) {
        return Err(TwistorError::OutsideDomain(format!("|xi0| = {:e}", xi0.norm())));
    }
    let f0 = surface.f(xi0);
    let r0 = surface.r(xi0);
    let f2 = 0.25 * ((1.0 + s) * (1.0 + s) * f0 - xi * xi * f0.conj() - 2.0 * xi * s * r0);
    Ok((xi0, f2))
}

/// A spherical wave from the origin reflected at one surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalReflection {
    pub xi2: Complex64,
    pub eta2: Complex64,
    pub alpha1: Complex64,
    pub alpha2: Complex64,
    pub alpha3: Complex64,
    pub beta0: f64,
    /// `+1` or `-1`.
    pub sign: f64,
}

/// Reflection, at the surface point `(xi0, eta0, r0)`, of the spherical wave focused at the origin.
pub fn spherical_wave_reflection(
    xi0: Complex64,
    eta0: Complex64,
    r0: f64,
    branch: BranchChoice,
) -> Result<SphericalReflection> {
    let q = xi0.norm_sqr();
    let s = 1.0 + q;
    let beta0 = (4.0 * eta0.norm_sqr() + s * s * r0 * r0).sqrt();
    let p = point_from_line(xi0, eta0, r0);
    if beta0 <= 1e-14 * (1.0 + eta0.norm() + r0.abs()) || p.norm() <= 1e-14 * (1.0 + eta0.norm() + r0.abs()) {
        return Err(TwistorError::DegenerateFocus);
    }
    let cross = 2.0 * (xi0 * eta0.conj() - xi0.conj() * eta0);
    let physical = {
        let d1 = p.to_vector() / p.norm();
        let n = dir_to_vector(xi0);
        d1 - 2.0 * d1.dot(&n) * n
    };
    let mut last = TwistorError::ChartEscape("reflected ray at the south pole");
    for &sign in branch.candidates() {
        let sb = sign * beta0;
        let den = cross - s * s * r0 + (1.0 - q) * sb;
        if den.norm() <= 1e-14 * (s * s * (r0.abs() + beta0) + cross.norm()) {
            last = TwistorError::ChartEscape("reflected ray at the south pole");
            continue;
        }
        let xi2 = match checked_chart((2.0 * eta0 + 2.0 * eta0.conj() * xi0 * xi0 + 2.0 * xi0 * sb) / den, "reflected ray at the south pole") {
            Ok(x) => x,
            Err(e) => {
                last = e;
                continue;
            }
        };
        if branch == BranchChoice::Outgoing && dir_to_vector(xi2).dot(&physical) <= 0.0 {
            continue;
        }
        let alpha1 = (2.0 * eta0.conj() * xi0 - s * r0 + sb) / den;
        let alpha2 = (2.0 * eta0 + xi0 * s * r0 + xi0 * sb) / den;
        let alpha3 = (4.0 * eta0.norm_sqr() * xi0 - (eta0 - eta0.conj() * xi0 * xi0) * s * r0
            + (eta0 + eta0.conj() * xi0 * xi0) * sb)
            / (den * den);
        let eta2 = alpha1 * alpha1 * eta0 - alpha2 * alpha2 * eta0.conj() - 2.0 * s * alpha3 * r0;
        return Ok(SphericalReflection { xi2, eta2, alpha1, alpha2, alpha3, beta0, sign });
    }
    Err(last)
}

/// Reference scenes with published reflected congruences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceCase {
    /// Plane wave down the `x³`-axis onto the unit sphere at the origin.
    SpherePlaneAxis,
    /// Plane wave down the `x³`-axis onto the torus `a = 2, b = 1`.
    TorusPlaneAxis,
    /// Plane wave propagating along `xi1` onto the outer sheet of the torus `a = 2, b = 1`.
    TorusPlaneGeneral { xi1: Complex64 },
    /// Spherical wave from the origin onto the unit sphere centred at `(0, 0, -2)`.
    SphereBelowSpherical,
}

impl ReferenceCase {
    /// `sphere-plane-axis`, `torus-plane-axis`, `torus-plane-general` (needs `xi1`),
    /// `sphere-below-spherical`.
    pub fn by_name(name: &str, xi1: Option<Complex64>) -> Result<Self> {
        match (name, xi1) {
            ("sphere-plane-axis", _) => Ok(Self::SpherePlaneAxis),
            ("torus-plane-axis", _) => Ok(Self::TorusPlaneAxis),
            ("torus-plane-general", Some(xi1)) => Ok(Self::TorusPlaneGeneral { xi1 }),
            ("torus-plane-general", None) => {
                Err(TwistorError::UnknownCase("torus-plane-general needs an incoming direction".into()))
            }
            ("sphere-below-spherical", _) => Ok(Self::SphereBelowSpherical),
            _ => Err(TwistorError::UnknownCase(name.to_string())),
        }
    }

    /// Surface of the scene.
    pub fn surface(&self) -> SurfaceGalleryEntry {
        match self {
            Self::SpherePlaneAxis => SurfaceGalleryEntry::sphere(Vector3::zeros(), 1.0),
            Self::TorusPlaneAxis | Self::TorusPlaneGeneral { .. } => SurfaceGalleryEntry::torus(2.0, 1.0),
            Self::SphereBelowSpherical => SurfaceGalleryEntry::sphere(Vector3::new(0.0, 0.0, -2.0), 1.0),
        }
        .expect("valid reference surface")
    }
}

/// What the reference functions are parameterized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceParam {
    /// The outgoing direction `xi`.
    OutgoingDirection,
    /// The surface normal `xi0` at the reflection point.
    SurfaceNormal,
}

/// Reflected congruence `(xi2, eta2)` with potential `r2`, all up to an additive constant in `r2`.
#[derive(Clone)]
pub struct ReferenceReflected {
    pub parameter: ReferenceParam,
    pub xi2: ComplexFn,
    pub eta2: ComplexFn,
    pub r2: RealFn,
}

pub fn reference_reflected(case: ReferenceCase) -> ReferenceReflected {
    match case {
        ReferenceCase::SpherePlaneAxis => ReferenceReflected {
            parameter: ReferenceParam::OutgoingDirection,
            xi2: Arc::new(|xi| xi),
            eta2: Arc::new(|xi: Complex64| -0.5 * xi * (1.0 + xi.norm_sqr()).sqrt()),
            r2: Arc::new(|xi: Complex64| 2.0 / (1.0 + xi.norm_sqr()).sqrt()),
        },
        ReferenceCase::TorusPlaneAxis => ReferenceReflected {
            parameter: ReferenceParam::OutgoingDirection,
            xi2: Arc::new(|xi| xi),
            eta2: Arc::new(|xi: Complex64| {
                let (m, s) = (xi.norm(), (1.0 + xi.norm_sqr()).sqrt());
                0.5 * (2.0 * (1.0 - m * m) - m * s) * xi / m
            }),
            r2: Arc::new(|xi: Complex64| {
                let (m, q) = (xi.norm(), xi.norm_sqr());
                (4.0 * m + 2.0 * (1.0 + q).sqrt()) / (1.0 + q)
            }),
        },
        ReferenceCase::TorusPlaneGeneral { xi1 } => ReferenceReflected {
            parameter: ReferenceParam::SurfaceNormal,
            xi2: Arc::new(move |x0| {
                let q = x0.norm_sqr();
                (2.0 * x0 * xi1.conj() + 1.0 - q) / ((1.0 - q) * xi1.conj() - 2.0 * x0.conj())
            }),
            eta2: Arc::new(move |x0: Complex64| {
                let (m, q) = (x0.norm(), x0.norm_sqr());
                let a = x0.conj() - xi1.conj();
                let b = ONE + x0 * xi1.conj();
                let den = (1.0 - q) * xi1.conj() - 2.0 * x0.conj();
                ((a * a * x0 - b * b * x0.conj()) * (1.0 - q) + a * b * ((1.0 + q) * m + 4.0 * q)) / (m * den * den)
            }),
            r2: Arc::new(move |x0: Complex64| {
                let (m, q) = (x0.norm(), x0.norm_sqr());
                let defect = (x0.conj() - xi1.conj()).norm_sqr() - (ONE + x0 * xi1.conj()).norm_sqr();
                let mixed = q * (1.0 - xi1.norm_sqr()) - 2.0 * (x0.conj() * xi1).re;
                4.0 * (2.0 * defect * m + mixed * (1.0 + q)) / ((1.0 + xi1.norm_sqr()) * (1.0 + q) * (1.0 + q))
            }),
        },
        ReferenceCase::SphereBelowSpherical => ReferenceReflected {
            parameter: ReferenceParam::SurfaceNormal,
            xi2: Arc::new(|x0: Complex64| {
                let q = x0.norm_sqr();
                let b = (1.0 + 10.0 * q + 9.0 * q * q).sqrt();
                2.0 * x0 * (2.0 * (1.0 + q) + b) / (1.0 - 2.0 * q - 3.0 * q * q + (1.0 - q) * b)
            }),
            eta2: Arc::new(|x0: Complex64| {
                let q = x0.norm_sqr();
                let b = (1.0 + 10.0 * q + 9.0 * q * q).sqrt();
                4.0 * x0 * (1.0 - 3.0 * q) * (1.0 + 3.0 * q + b)
                    / (1.0 + q - 7.0 * q * q + 9.0 * q * q * q + (1.0 - 4.0 * q + 3.0 * q * q) * b)
            }),
            r2: Arc::new(|x0: Complex64| {
                let q = x0.norm_sqr();
                let b = (1.0 + 10.0 * q + 9.0 * q * q).sqrt();
                -2.0 * (1.0 - 3.0 * q).powi(2) * b / (1.0 + 11.0 * q + 19.0 * q * q + 9.0 * q * q * q)
            }),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congruence::potential_residual;
    use crate::reflection::incidence_eta;
    use crate::twistor::{antipode, line_from_point_dir};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    const SAMPLES: [Complex64; 5] = [
        Complex64 { re: 0.3, im: 0.4 },
        Complex64 { re: -1.2, im: 0.7 },
        Complex64 { re: 0.05, im: -0.02 },
        Complex64 { re: 2.0, im: 1.5 },
        Complex64 { re: 0.0, im: -0.9 },
    ];

    #[test]
    fn plane_mirror_virtual_source() {
        let t1 = 1.7;
        for xi1 in SAMPLES {
            let eta1 = line_from_point_dir(EuclidPoint::from_xyz(0.0, 0.0, t1), xi1).eta;
            let (xi2, eta2) = reflect_in_plane(xi1, eta1).unwrap();
            let image = line_from_point_dir(EuclidPoint::from_xyz(0.0, 0.0, -t1), xi2).eta;
            assert!((eta2 - image).norm() < 1e-12);
        }
        assert_eq!(reflect_in_plane(c(1.0, 0.0), c(0.0, 0.0)).unwrap(), (c(1.0, 0.0), c(-0.0, 0.0)));
        assert!(matches!(reflect_in_plane(c(0.0, 0.0), c(1.0, 0.0)), Err(TwistorError::ChartEscape(_))));
    }

    #[test]
    fn gallery_examples() {
        let unit = gallery("sphere", &[]).unwrap().sheet(0).unwrap();
        assert_eq!(unit.f(c(0.4, 0.1)), c(0.0, 0.0));
        assert_eq!(unit.r(c(0.4, 0.1)), 1.0);
        let below = gallery("sphere", &[0.0, 0.0, -2.0, 1.0]).unwrap().sheet(0).unwrap();
        for x in SAMPLES {
            let q = x.norm_sqr();
            assert!((below.f(x) - 2.0 * x).norm() < 1e-14);
            assert!((below.r(x) - (1.0 - 2.0 * (1.0 - q) / (1.0 + q))).abs() < 1e-14);
        }
        assert!(gallery("torus", &[1.0, 2.0]).is_err());
        assert!(gallery("sphere", &[0.0, 0.0, 0.0, -1.0]).is_err());
        assert!(gallery("cone", &[]).is_err());
    }

    #[test]
    fn torus_sheets_lie_on_torus() {
        let t = gallery("torus", &[2.0, 1.0]).unwrap();
        for sheet in 0..2 {
            let s = t.sheet(sheet).unwrap();
            for x in SAMPLES {
                let p = s.point(x).to_vector();
                assert!(t.implicit().value(&p).abs() < 1e-12);
                assert!((t.implicit().normal(&p) - dir_to_vector(x)).norm() < 1e-12);
            }
            for m in [0.1, 0.5, 1.0, 3.0, 10.0] {
                assert!(potential_residual(&s, Complex64::from_polar(m, 0.7)) < 1e-6);
            }
        }
        assert!(t.normal_line(&MobiusRotation::IDENTITY, 0, c(1e-3, 0.0)).is_err());
    }

    #[test]
    fn down_axis_matches_direction_form() {
        let torus = gallery("torus", &[2.0, 1.0]).unwrap().sheet(0).unwrap();
        for xi in [c(0.3, 0.4), c(1.5, -0.2), c(3.0, 1.0)] {
            let (x0, f2) = plane_wave_down_axis(xi, &torus).unwrap();
            let d = plane_wave_by_direction(xi, c(0.0, 0.0), &torus, BranchChoice::Plus).unwrap();
            assert!((x0 - d.xi0).norm() < 1e-12);
            assert!((f2 - d.f2).norm() < 1e-12);
        }
    }

    #[test]
    fn unit_sphere_down_axis() {
        let unit = gallery("sphere", &[]).unwrap().sheet(0).unwrap();
        for xi in SAMPLES {
            let (_, f2) = plane_wave_down_axis(xi, &unit).unwrap();
            assert!((f2 + 0.5 * xi * (1.0 + xi.norm_sqr()).sqrt()).norm() < 1e-12);
        }
    }

    #[test]
    fn direction_form_reflects_into_xi() {
        let torus = gallery("torus", &[2.0, 1.0]).unwrap().sheet(0).unwrap();
        for xi1 in [c(0.5, -0.2), c(-0.4, 0.0)] {
            let prop = antipode(xi1).unwrap();
            for xi in [c(0.3, 0.4), c(1.1, 0.1), c(-0.2, -0.9)] {
                for branch in [BranchChoice::Plus, BranchChoice::Minus] {
                    let Ok(d) = plane_wave_by_direction(xi, xi1, &torus, branch) else { continue };
                    assert!((reflect_direction(d.xi0, prop).unwrap() - xi).norm() < 1e-10);
                    let p = torus.point(d.xi0);
                    assert!((d.f2 - line_from_point_dir(p, xi).eta).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn outgoing_branch_faces_the_wave() {
        let torus = gallery("torus", &[2.0, 1.0]).unwrap().sheet(0).unwrap();
        let xi1 = c(0.3, 0.1);
        let d1 = dir_to_vector(antipode(xi1).unwrap());
        for xi in [c(0.3, 0.4), c(1.1, 0.1), c(-0.2, -0.9)] {
            let d = plane_wave_by_direction(xi, xi1, &torus, BranchChoice::Outgoing).unwrap();
            assert!(d1.dot(&dir_to_vector(d.xi0)) < 0.0);
        }
    }

    #[test]
    fn grazing_direction_has_no_branch() {
        let torus = gallery("torus", &[2.0, 1.0]).unwrap().sheet(0).unwrap();
        let xi1 = c(0.5, 0.0);
        let along = antipode(xi1).unwrap();
        assert_eq!(plane_wave_by_direction(along, xi1, &torus, BranchChoice::Plus), Err(TwistorError::BranchUndefined));
    }

    #[test]
    fn spherical_wave_sphere_below() {
        let s = gallery("sphere", &[0.0, 0.0, -2.0, 1.0]).unwrap().sheet(0).unwrap();
        let reference = reference_reflected(ReferenceCase::SphereBelowSpherical);
        for x0 in [c(0.3, 0.2), c(0.8, -0.5), c(0.05, 0.0), c(1.2, 0.4)] {
            let q = x0.norm_sqr();
            let e = spherical_wave_reflection(x0, s.f(x0), s.r(x0), BranchChoice::Plus).unwrap();
            assert!((e.beta0 - (1.0 + 10.0 * q + 9.0 * q * q).sqrt()).abs() < 1e-12);
            assert!((e.xi2 - (reference.xi2)(x0)).norm() < 1e-12);
            assert!((e.eta2 - (reference.eta2)(x0)).norm() < 1e-12);
            assert!((e.eta2 - incidence_eta(x0, s.f(x0), s.r(x0), e.xi2)).norm() < 1e-12);
        }
    }

    #[test]
    fn spherical_wave_minus_branch_is_reversed_line() {
        let s = gallery("sphere", &[0.5, -0.3, 3.0, 1.2]).unwrap().sheet(0).unwrap();
        for x0 in [c(0.1, -0.2), c(-0.6, 0.3)] {
            let plus = spherical_wave_reflection(x0, s.f(x0), s.r(x0), BranchChoice::Plus).unwrap();
            let minus = spherical_wave_reflection(x0, s.f(x0), s.r(x0), BranchChoice::Minus).unwrap();
            assert!((dir_to_vector(plus.xi2) + dir_to_vector(minus.xi2)).norm() < 1e-10);
            let p = s.point(x0);
            assert!((minus.eta2 - line_from_point_dir(p, minus.xi2).eta).norm() < 1e-10);
        }
    }

    #[test]
    fn radial_event_retroreflects() {
        // Surface facing the focus: the normal at distance 2.5 points back at it.
        for x0 in SAMPLES {
            let e = spherical_wave_reflection(x0, c(0.0, 0.0), -2.5, BranchChoice::Outgoing).unwrap();
            assert!((e.xi2 - x0).norm() < 1e-12 * (1.0 + x0.norm_sqr()));
            assert!(e.eta2.norm() < 1e-12);
        }
        // Focus inside: back through the origin, along the reversed normal.
        let x0 = c(0.3, 0.4);
        let e = spherical_wave_reflection(x0, c(0.0, 0.0), 2.5, BranchChoice::Outgoing).unwrap();
        assert!((e.xi2 - antipode(x0).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn focus_on_surface_is_degenerate() {
        assert_eq!(
            spherical_wave_reflection(c(0.3, 0.1), c(0.0, 0.0), 0.0, BranchChoice::Plus),
            Err(TwistorError::DegenerateFocus)
        );
    }

    #[test]
    fn reference_lookup() {
        assert_eq!(ReferenceCase::by_name("torus-plane-axis", None).unwrap(), ReferenceCase::TorusPlaneAxis);
        assert!(matches!(ReferenceCase::by_name("cube", None), Err(TwistorError::UnknownCase(_))));
        assert!(matches!(ReferenceCase::by_name("torus-plane-general", None), Err(TwistorError::UnknownCase(_))));
    }
}
