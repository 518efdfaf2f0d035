//! Oriented lines in R³ as points of TS².
//!
//! A line is stored as `(xi, eta)`: `xi` is the stereographic coordinate of
//! its direction (projection from the south pole onto the equatorial plane)
//! and `eta` is the perpendicular distance vector to the origin written in
//! the tangent plane at `xi`. Points on the line are labelled by the signed
//! distance `r` from the foot point (the point closest to the origin).
//!
//! Space is split as R³ = C ⊕ R with `z = x¹ + i x²` and `t = x³`.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Result, TwistorError};

/// Largest admissible chart coordinate. Directions with `|xi|` above this
/// are treated as the south pole.
pub const CHART_LIMIT: f64 = 1e8;

/// A point of R³ in the split form `(z, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuclidPoint {
    pub z: Complex64,
    pub t: f64,
}

impl EuclidPoint {
    pub const ORIGIN: EuclidPoint = EuclidPoint { z: Complex64 { re: 0.0, im: 0.0 }, t: 0.0 };

    pub fn new(z: Complex64, t: f64) -> Self {
        Self { z, t }
    }

    pub fn from_xyz(x: f64, y: f64, t: f64) -> Self {
        Self { z: Complex64::new(x, y), t }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::from_xyz(v.x, v.y, v.z)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.z.re, self.z.im, self.t)
    }

    pub fn norm(&self) -> f64 {
        (self.z.norm_sqr() + self.t * self.t).sqrt()
    }

    pub fn distance(&self, other: &EuclidPoint) -> f64 {
        ((self.z - other.z).norm_sqr() + (self.t - other.t).powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.z.re.is_finite() && self.z.im.is_finite() && self.t.is_finite()
    }
}

/// An oriented line `(xi, eta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedLine {
    pub xi: Complex64,
    pub eta: Complex64,
}

impl OrientedLine {
    pub fn new(xi: Complex64, eta: Complex64) -> Self {
        Self { xi, eta }
    }

    /// The line through `p` with direction `xi`.
    pub fn through(p: EuclidPoint, xi: Complex64) -> Self {
        line_from_point_dir(p, xi)
    }

    /// Point at signed distance `r` from the foot point.
    pub fn point_at(&self, r: f64) -> EuclidPoint {
        point_from_line(self.xi, self.eta, r)
    }

    /// Unit direction vector.
    pub fn direction(&self) -> Vector3<f64> {
        dir_to_vector(self.xi)
    }

    /// Same line with opposite orientation.
    pub fn reversed(&self) -> Result<Self> {
        let foot = self.point_at(0.0);
        Ok(line_from_point_dir(foot, antipode(self.xi)?))
    }

    /// Euclidean distance from `p` to the line.
    pub fn distance_to(&self, p: EuclidPoint) -> f64 {
        let r = affine_param(p, self.xi);
        self.point_at(r).distance(&p)
    }

    pub fn is_finite(&self) -> bool {
        self.xi.re.is_finite() && self.xi.im.is_finite() && self.eta.re.is_finite() && self.eta.im.is_finite()
    }
}

/// Rejects chart coordinates at or beyond [`CHART_LIMIT`].
pub fn checked_chart(xi: Complex64, what: &'static str) -> Result<Complex64> {
    if xi.re.is_finite() && xi.im.is_finite() && xi.norm() <= CHART_LIMIT {
        Ok(xi)
    } else {
        Err(TwistorError::ChartEscape(what))
    }
}

/// Inverse stereographic projection: chart coordinate to unit vector.
pub fn dir_to_vector(xi: Complex64) -> Vector3<f64> {
    let q = xi.norm_sqr();
    let s = 1.0 + q;
    Vector3::new(2.0 * xi.re / s, 2.0 * xi.im / s, (1.0 - q) / s)
}

/// Stereographic projection of a nonzero vector. Fails near the south pole.
pub fn vector_to_dir(v: &Vector3<f64>) -> Result<Complex64> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(TwistorError::ChartEscape("zero or non-finite direction vector"));
    }
    let u = v / n;
    // For u.z < 0 this form avoids cancellation in 1 + u.z.
    let xi = if u.z >= 0.0 {
        Complex64::new(u.x, u.y) / (1.0 + u.z)
    } else {
        let rho2 = u.x * u.x + u.y * u.y;
        if rho2 == 0.0 {
            return Err(TwistorError::ChartEscape("direction is the south pole"));
        }
        Complex64::new(u.x, u.y) * (1.0 - u.z) / rho2
    };
    checked_chart(xi, "direction too close to the south pole")
}

/// `eta = (z - 2 t xi - conj(z) xi²) / 2`.
pub fn line_from_point_dir(p: EuclidPoint, xi: Complex64) -> OrientedLine {
    let eta = 0.5 * (p.z - 2.0 * p.t * xi - p.z.conj() * xi * xi);
    OrientedLine { xi, eta }
}

/// Signed distance of `p` from the foot point of the line through `p` with direction `xi`.
pub fn affine_param(p: EuclidPoint, xi: Complex64) -> f64 {
    let q = xi.norm_sqr();
    ((xi.conj() * p.z).re * 2.0 + (1.0 - q) * p.t) / (1.0 + q)
}

/// Point at distance `r` from the foot point of `(xi, eta)`.
pub fn point_from_line(xi: Complex64, eta: Complex64, r: f64) -> EuclidPoint {
    let q = xi.norm_sqr();
    let s = 1.0 + q;
    let s2 = s * s;
    let z = (2.0 * (eta - eta.conj() * xi * xi) + 2.0 * xi * s * r) / s2;
    let t = (-4.0 * (eta * xi.conj()).re + (1.0 - q * q) * r) / s2;
    EuclidPoint { z, t }
}

/// Antipodal map `xi -> -1/conj(xi)`.
pub fn antipode(xi: Complex64) -> Result<Complex64> {
    if xi == Complex64::new(0.0, 0.0) {
        return Err(TwistorError::ChartEscape("antipode of the north pole"));
    }
    checked_chart(-1.0 / xi.conj(), "antipode leaves the chart")
}

/// Unit vector of the homogeneous coordinate `[p : q]`, so that `q = 0` is the south pole.
fn homogeneous_to_vector(p: Complex64, q: Complex64) -> Vector3<f64> {
    let np = p.norm_sqr();
    let nq = q.norm_sqr();
    let w = p * q.conj();
    let s = np + nq;
    Vector3::new(2.0 * w.re / s, 2.0 * w.im / s, (nq - np) / s)
}

/// Rotation about the origin acting on the chart as
/// `xi -> (alpha xi - conj(beta)) / (beta xi + conj(alpha))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusRotation {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl Default for MobiusRotation {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl MobiusRotation {
    pub const IDENTITY: MobiusRotation = MobiusRotation {
        alpha: Complex64 { re: 1.0, im: 0.0 },
        beta: Complex64 { re: 0.0, im: 0.0 },
    };

    /// Validated constructor; `|alpha|² + |beta|²` must be 1 to within 1e-12.
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > 1e-12 {
            return Err(TwistorError::InvalidParams(format!(
                "|alpha|^2 + |beta|^2 = {n}, expected 1"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Normalizes an arbitrary nonzero pair.
    pub fn normalized(alpha: Complex64, beta: Complex64) -> Self {
        let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        Self { alpha: alpha / n, beta: beta / n }
    }

    /// The fixed chart-moving rotation `alpha = beta = 1/√2`; it sends the
    /// south pole to `xi = 1`.
    pub fn chart_shift() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { alpha: Complex64::new(h, 0.0), beta: Complex64::new(h, 0.0) }
    }

    /// Rotation taking `xi0` to the north pole (`xi = 0`); its south pole
    /// is the antipode of `xi0`.
    pub fn to_north(xi0: Complex64) -> Self {
        let s = (1.0 + xi0.norm_sqr()).sqrt();
        Self { alpha: Complex64::new(1.0 / s, 0.0), beta: xi0.conj() / s }
    }

    /// Rotation taking the unit vector `v` to the north pole; also fine for `v` pointing down.
    pub fn north_to(v: &Vector3<f64>) -> Self {
        let v = v.normalize();
        if v.z >= 0.0 {
            Self::to_north(vector_to_dir(&v).expect("upper hemisphere is in the chart"))
        } else {
            let flip = Self::flip();
            let w = flip.apply_vector(&v);
            Self::to_north(vector_to_dir(&w).expect("flipped into the upper hemisphere")).compose(&flip)
        }
    }

    /// Rotation swapping the poles, `xi -> -1/xi`.
    pub fn flip() -> Self {
        Self { alpha: Complex64::new(0.0, 0.0), beta: Complex64::new(1.0, 0.0) }
    }

    pub fn inverse(&self) -> Self {
        Self { alpha: self.alpha.conj(), beta: -self.beta }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &MobiusRotation) -> Self {
        // SU(2) matrices [[a, -conj(b)], [b, conj(a)]].
        let (a1, b1) = (self.alpha, self.beta);
        let (a2, b2) = (other.alpha, other.beta);
        Self {
            alpha: a1 * a2 - b1.conj() * b2,
            beta: b1 * a2 + a1.conj() * b2,
        }
    }

    fn homogeneous(&self, xi: Complex64) -> (Complex64, Complex64) {
        (self.alpha * xi - self.beta.conj(), self.beta * xi + self.alpha.conj())
    }

    /// Image of a chart coordinate.
    pub fn apply(&self, xi: Complex64) -> Result<Complex64> {
        let (p, q) = self.homogeneous(xi);
        if q == Complex64::new(0.0, 0.0) {
            return Err(TwistorError::ChartEscape("rotation sends direction to the south pole"));
        }
        checked_chart(p / q, "rotation sends direction to the south pole")
    }

    /// Image of the south pole (`xi = ∞`), if it lands in the chart.
    pub fn apply_south_pole(&self) -> Result<Complex64> {
        if self.beta == Complex64::new(0.0, 0.0) {
            return Err(TwistorError::ChartEscape("south pole is fixed"));
        }
        checked_chart(self.alpha / self.beta, "south pole stays outside the chart")
    }

    /// Rotated line; `r` along it is unchanged.
    pub fn apply_line(&self, line: &OrientedLine) -> Result<OrientedLine> {
        let den = self.beta * line.xi + self.alpha.conj();
        if den.norm() < 1.0 / CHART_LIMIT {
            return Err(TwistorError::ChartEscape("rotation sends line direction to the south pole"));
        }
        let xi = checked_chart((self.alpha * line.xi - self.beta.conj()) / den, "rotated direction")?;
        Ok(OrientedLine { xi, eta: line.eta / (den * den) })
    }

    /// Rotated unit vector of a chart coordinate; total even at the south pole.
    pub fn apply_dir_vector(&self, xi: Complex64) -> Vector3<f64> {
        let (p, q) = self.homogeneous(xi);
        homogeneous_to_vector(p, q)
    }

    /// The 3×3 rotation matrix realizing this Möbius map on R³.
    pub fn matrix(&self) -> Matrix3<f64> {
        let ex = self.apply_dir_vector(Complex64::new(1.0, 0.0));
        let ey = self.apply_dir_vector(Complex64::new(0.0, 1.0));
        let ez = self.apply_dir_vector(Complex64::new(0.0, 0.0));
        Matrix3::from_columns(&[ex, ey, ez])
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix() * v
    }

    pub fn apply_point(&self, p: EuclidPoint) -> EuclidPoint {
        EuclidPoint::from_vector(&self.apply_vector(&p.to_vector()))
    }

    /// The unit vector this frame sends to the south pole of its chart.
    pub fn pole(&self) -> Vector3<f64> {
        self.inverse().apply_dir_vector_south()
    }

    fn apply_dir_vector_south(&self) -> Vector3<f64> {
        // Image of xi = ∞ is [alpha : beta].
        homogeneous_to_vector(self.alpha, self.beta)
    }
}

/// Six chart frames whose south poles sit at ∓z, ∓x, ∓y.
pub fn candidate_frames() -> [MobiusRotation; 6] {
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [
        MobiusRotation::IDENTITY,
        MobiusRotation::flip(),
        MobiusRotation::to_north(one),
        MobiusRotation::to_north(-one),
        MobiusRotation::to_north(i),
        MobiusRotation::to_north(-i),
    ]
}

/// Picks the candidate frame in which every given direction stays farthest
/// from the chart's south pole.
pub fn best_frame(directions: &[Vector3<f64>]) -> MobiusRotation {
    let frames = candidate_frames();
    let mut best = frames[0];
    let mut best_score = f64::INFINITY;
    for f in frames {
        let pole = f.pole();
        let score = directions
            .iter()
            .map(|d| d.dot(&pole) / d.norm())
            .fold(f64::NEG_INFINITY, f64::max);
        if score < best_score {
            best_score = score;
            best = f;
        }
    }
    best
}

/// Rotation about the origin applied to a line and its affine parameter.
pub fn rotate_line(rot: &MobiusRotation, line: &OrientedLine, r: f64) -> Result<(OrientedLine, f64)> {
    Ok((rot.apply_line(line)?, r))
}

/// Translation taking the origin to `(z0, t0)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Translation {
    pub z0: Complex64,
    pub t0: f64,
}

impl Translation {
    pub fn new(z0: Complex64, t0: f64) -> Self {
        Self { z0, t0 }
    }

    pub fn to(p: EuclidPoint) -> Self {
        Self { z0: p.z, t0: p.t }
    }

    /// Fibre shift `(z0 - 2 t0 xi - conj(z0) xi²)/2` at direction `xi`.
    pub fn eta_shift(&self, xi: Complex64) -> Complex64 {
        line_from_point_dir(EuclidPoint::new(self.z0, self.t0), xi).eta
    }

    /// Shift of the affine parameter at direction `xi`.
    pub fn r_shift(&self, xi: Complex64) -> f64 {
        affine_param(EuclidPoint::new(self.z0, self.t0), xi)
    }
}

pub fn translate_line(tr: &Translation, line: &OrientedLine, r: f64) -> (OrientedLine, f64) {
    (
        OrientedLine { xi: line.xi, eta: line.eta + tr.eta_shift(line.xi) },
        r + tr.r_shift(line.xi),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn chart_basis_directions() {
        assert!((dir_to_vector(c(0.0, 0.0)) - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        assert!((dir_to_vector(c(1.0, 0.0)) - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((dir_to_vector(c(0.0, 1.0)) - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn chord_matches_direction() {
        // point_from_line(1, 0, r) = (r, 0, 0)
        let p = point_from_line(c(1.0, 0.0), c(0.0, 0.0), 1.5);
        assert!(close(p.z, c(1.5, 0.0), 1e-15) && p.t.abs() < 1e-15);
        let p = point_from_line(c(0.0, 1.0), c(0.0, 0.0), 2.0);
        assert!(close(p.z, c(0.0, 2.0), 1e-15) && p.t.abs() < 1e-15);
    }

    #[test]
    fn line_from_point_examples() {
        let l = line_from_point_dir(EuclidPoint::ORIGIN, c(0.3, -2.0));
        assert_eq!(l.eta, c(0.0, 0.0));
        let l = line_from_point_dir(EuclidPoint::from_xyz(1.0, 0.0, 0.0), c(0.0, 0.0));
        assert!(close(l.eta, c(0.5, 0.0), 1e-15));
        let xi = c(0.4, 0.7);
        let l = line_from_point_dir(EuclidPoint::from_xyz(0.0, 0.0, 2.5), xi);
        assert!(close(l.eta, -2.5 * xi, 1e-15));
    }

    #[test]
    fn affine_param_examples() {
        assert!((affine_param(EuclidPoint::from_xyz(0.0, 0.0, 1.0), c(0.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!((affine_param(EuclidPoint::from_xyz(1.0, 0.0, 0.0), c(1.0, 0.0)) - 1.0).abs() < 1e-15);
        assert_eq!(affine_param(EuclidPoint::ORIGIN, c(-3.0, 0.2)), 0.0);
    }

    #[test]
    fn point_from_line_examples() {
        let p = point_from_line(c(0.0, 0.0), c(0.0, 0.0), 0.0);
        assert_eq!(p, EuclidPoint::ORIGIN);
        let p = point_from_line(c(0.0, 0.0), c(0.5, 0.0), 0.0);
        assert!(close(p.z, c(1.0, 0.0), 1e-15) && p.t.abs() < 1e-15);
        let p = point_from_line(c(1.0, 0.0), c(0.0, 0.0), 2.0);
        assert!(close(p.z, c(2.0, 0.0), 1e-15) && p.t.abs() < 1e-15);
    }

    #[test]
    fn antipode_examples() {
        assert!(close(antipode(c(1.0, 0.0)).unwrap(), c(-1.0, 0.0), 1e-15));
        assert!(close(antipode(c(0.0, 1.0)).unwrap(), c(0.0, -1.0), 1e-15));
        assert!(close(antipode(c(2.0, 0.0)).unwrap(), c(-0.5, 0.0), 1e-15));
        assert!(matches!(antipode(c(0.0, 0.0)), Err(TwistorError::ChartEscape(_))));
        let v = dir_to_vector(c(0.0, 1.0));
        let w = dir_to_vector(antipode(c(0.0, 1.0)).unwrap());
        assert!((v + w).norm() < 1e-15);
    }

    #[test]
    fn vector_chart_round_trip() {
        for xi in [c(0.1, 0.2), c(3.0, -1.0), c(-40.0, 7.0), c(0.0, 0.0)] {
            let back = vector_to_dir(&dir_to_vector(xi)).unwrap();
            assert!((back - xi).norm() <= 1e-12 * (1.0 + xi.norm_sqr()), "{xi} -> {back}");
        }
        assert!(vector_to_dir(&Vector3::new(0.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn identity_rotation_is_identity() {
        let l = OrientedLine::new(c(0.3, 0.1), c(-1.0, 2.0));
        let (m, r) = rotate_line(&MobiusRotation::IDENTITY, &l, 0.7).unwrap();
        assert_eq!(m, l);
        assert_eq!(r, 0.7);
    }

    #[test]
    fn rotation_chart_escape() {
        // alpha = 0, beta = 1 sends xi = 0 to infinity.
        let rot = MobiusRotation::new(c(0.0, 0.0), c(1.0, 0.0)).unwrap();
        let l = OrientedLine::new(c(0.0, 0.0), c(1.0, 0.0));
        assert!(matches!(rotate_line(&rot, &l, 0.0), Err(TwistorError::ChartEscape(_))));
    }

    #[test]
    fn rotation_rejects_non_unitary() {
        assert!(MobiusRotation::new(c(1.0, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn chart_shift_moves_south_pole() {
        let s = MobiusRotation::chart_shift().apply_south_pole().unwrap();
        assert!(close(s, c(1.0, 0.0), 1e-15));
    }

    #[test]
    fn north_to_sends_vectors_up() {
        for v in [Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.3, -0.2, -0.9), Vector3::new(1.0, 2.0, 0.5), Vector3::z()] {
            let r = MobiusRotation::north_to(&v);
            assert!((r.apply_vector(&v.normalize()) - Vector3::z()).norm() < 1e-12);
        }
    }

    #[test]
    fn frame_poles_are_axes() {
        let poles: Vec<_> = candidate_frames().iter().map(|f| f.pole()).collect();
        let expect = [
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        for (p, e) in poles.iter().zip(expect.iter()) {
            assert!((p - e).norm() < 1e-15, "{p:?} vs {e:?}");
        }
    }

    #[test]
    fn best_frame_avoids_south_pole() {
        let down = Vector3::new(0.0, 0.0, -1.0);
        let f = best_frame(&[down]);
        let xi = f.inverse().inverse().apply_dir_vector(c(0.0, 0.0));
        assert!(xi.norm() > 0.0);
        // The chosen frame must keep the downward direction inside the chart.
        assert!(f.apply_south_pole().unwrap().norm() < 10.0);
    }

    #[test]
    fn sphere_translated_down_two() {
        // Unit sphere at the origin has eta = 0, r = 1; move it to (0,0,-2).
        let tr = Translation::new(c(0.0, 0.0), -2.0);
        for xi in [c(0.2, 0.3), c(-1.1, 0.4)] {
            let (l, r) = translate_line(&tr, &OrientedLine::new(xi, c(0.0, 0.0)), 1.0);
            assert!(close(l.eta, 2.0 * xi, 1e-14));
            let q = xi.norm_sqr();
            assert!((r - (1.0 - 2.0 * (1.0 - q) / (1.0 + q))).abs() < 1e-14);
        }
        let (l, r) = translate_line(&Translation::new(c(0.0, 0.0), 0.8), &OrientedLine::new(c(0.0, 0.0), c(0.0, 0.0)), 0.25);
        assert_eq!(l.eta, c(0.0, 0.0));
        assert!((r - 1.05).abs() < 1e-15);
    }
}
