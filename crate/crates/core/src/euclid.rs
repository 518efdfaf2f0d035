//! Brute-force Euclidean ray optics.
//!
//! Nothing here touches twistor coordinates: rays are origin + unit vector,
//! surfaces are implicit functions, and reflection is `d - 2(d·n)n`. The
//! module exists to cross-check the line-space computations.

use std::sync::Arc;

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Hits closer than this to the ray origin are ignored.
pub const MIN_HIT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    /// Normalizes `dir`.
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Self { origin, dir: dir.normalize() }
    }

    pub fn at(&self, s: f64) -> Vec3 {
        self.origin + s * self.dir
    }
}

/// A signed implicit surface `f = 0`, negative inside.
#[derive(Clone)]
pub enum ImplicitSurface {
    /// `x³ = height`; negative below.
    Plane { height: f64 },
    Sphere { center: Vec3, radius: f64 },
    /// Core radius `a`, tube radius `b`, axis `x³`.
    Torus { a: f64, b: f64 },
    /// Arbitrary function, bounded by the given sphere.
    Custom { f: Arc<dyn Fn(&Vec3) -> f64 + Send + Sync>, bound_center: Vec3, bound_radius: f64 },
}

impl std::fmt::Debug for ImplicitSurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Plane { height } => f.debug_struct("Plane").field("height", height).finish(),
            Self::Sphere { center, radius } => f.debug_struct("Sphere").field("center", center).field("radius", radius).finish(),
            Self::Torus { a, b } => f.debug_struct("Torus").field("a", a).field("b", b).finish(),
            Self::Custom { bound_center, bound_radius, .. } => f
                .debug_struct("Custom")
                .field("bound_center", bound_center)
                .field("bound_radius", bound_radius)
                .finish(),
        }
    }
}

impl ImplicitSurface {
    pub fn value(&self, p: &Vec3) -> f64 {
        match self {
            Self::Plane { height } => p.z - height,
            Self::Sphere { center, radius } => (p - center).norm() - radius,
            Self::Torus { a, b } => {
                let rho = (p.x * p.x + p.y * p.y).sqrt();
                (rho - a).powi(2) + p.z * p.z - b * b
            }
            Self::Custom { f, .. } => f(p),
        }
    }

    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        match self {
            Self::Plane { .. } => Vec3::new(0.0, 0.0, 1.0),
            Self::Sphere { center, .. } => (p - center).normalize(),
            Self::Torus { a, .. } => {
                let rho = (p.x * p.x + p.y * p.y).sqrt();
                let k = 2.0 * (rho - a) / rho;
                Vec3::new(k * p.x, k * p.y, 2.0 * p.z)
            }
            Self::Custom { f, .. } => {
                let h = 1e-6 * (1.0 + p.norm());
                let mut g = Vec3::zeros();
                for k in 0..3 {
                    let mut e = Vec3::zeros();
                    e[k] = h;
                    g[k] = (f(&(p + e)) - f(&(p - e))) / (2.0 * h);
                }
                g
            }
        }
    }

    /// Outward unit normal.
    pub fn normal(&self, p: &Vec3) -> Vec3 {
        self.gradient(p).normalize()
    }

    /// Bounding sphere, `None` for unbounded surfaces.
    pub fn bounds(&self) -> Option<(Vec3, f64)> {
        match self {
            Self::Plane { .. } => None,
            Self::Sphere { center, radius } => Some((*center, *radius)),
            Self::Torus { a, b } => Some((Vec3::zeros(), a + b)),
            Self::Custom { bound_center, bound_radius, .. } => Some((*bound_center, *bound_radius)),
        }
    }

    /// Characteristic length used for marching steps.
    pub fn scale(&self) -> f64 {
        self.bounds().map(|(_, r)| r).unwrap_or(1.0)
    }
}

/// Classical mirror reflection `d - 2(d·n)n`.
pub fn reflect_vector(d: &Vec3, n: &Vec3) -> Vec3 {
    d - 2.0 * d.dot(n) * n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub s: f64,
    pub point: Vec3,
}

fn ray_sphere(ray: &Ray, center: &Vec3, radius: f64) -> Option<(f64, f64)> {
    let oc = ray.origin - center;
    let b = oc.dot(&ray.dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Stable roots of s² + 2bs + c.
    let q = -b - b.signum() * sq;
    if q == 0.0 {
        return Some((0.0, 0.0));
    }
    let (s1, s2) = (q, c / q);
    Some((s1.min(s2), s1.max(s2)))
}

fn bisect(surface: &ImplicitSurface, ray: &Ray, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = surface.value(&ray.at(lo));
    while hi - lo > 1e-12 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        let fm = surface.value(&ray.at(mid));
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn march(surface: &ImplicitSurface, ray: &Ray, start: f64, end: f64) -> Vec<f64> {
    let step = 1e-2 * surface.scale();
    let mut out = Vec::new();
    let mut s0 = start;
    let mut f0 = surface.value(&ray.at(s0));
    while s0 < end {
        let s1 = (s0 + step).min(end);
        let f1 = surface.value(&ray.at(s1));
        if f0 == 0.0 {
            out.push(s0);
        } else if (f0 < 0.0) != (f1 < 0.0) && f1 != 0.0 {
            out.push(bisect(surface, ray, s0, s1));
        }
        s0 = s1;
        f0 = f1;
    }
    if f0 == 0.0 {
        out.push(end);
    }
    out
}

/// All intersections with `s > MIN_HIT`, in increasing order.
pub fn intersect_ray_surface(ray: &Ray, surface: &ImplicitSurface) -> Vec<Hit> {
    let params: Vec<f64> = match surface {
        ImplicitSurface::Plane { height } => {
            if ray.dir.z == 0.0 {
                Vec::new()
            } else {
                vec![(height - ray.origin.z) / ray.dir.z]
            }
        }
        ImplicitSurface::Sphere { center, radius } => match ray_sphere(ray, center, *radius) {
            Some((a, b)) if a == b => vec![a],
            Some((a, b)) => vec![a, b],
            None => Vec::new(),
        },
        _ => {
            let (c, r) = surface.bounds().expect("bounded surface");
            match ray_sphere(ray, &c, r * (1.0 + 1e-9)) {
                Some((a, b)) if b > MIN_HIT => march(surface, ray, a.max(MIN_HIT), b),
                _ => Vec::new(),
            }
        }
    };
    let mut hits: Vec<Hit> = params
        .into_iter()
        .filter(|s| *s > MIN_HIT && s.is_finite())
        .map(|s| Hit { s, point: ray.at(s) })
        .collect();
    hits.sort_by(|a, b| a.s.total_cmp(&b.s));
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Miss;

impl std::fmt::Display for Miss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ray misses the surface")
    }
}

impl std::error::Error for Miss {}

/// Outgoing ray at the first hit, with the hit distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Traced {
    pub hit: Hit,
    /// Surface normal at the hit, oriented against the incoming direction.
    pub normal: Vec3,
    pub outgoing: Ray,
}

pub fn trace_reflection(ray: &Ray, surface: &ImplicitSurface) -> Result<Traced, Miss> {
    let hit = *intersect_ray_surface(ray, surface).first().ok_or(Miss)?;
    let mut n = surface.normal(&hit.point);
    if n.dot(&ray.dir) > 0.0 {
        n = -n;
    }
    let out = reflect_vector(&ray.dir, &n);
    Ok(Traced { hit, normal: n, outgoing: Ray::new(hit.point, out) })
}

/// Rays of a point source, one per direction.
pub fn point_source_rays(source: Vec3, directions: &[Vec3]) -> Vec<Ray> {
    directions.iter().map(|d| Ray::new(source, *d)).collect()
}

/// Rays of a plane wave travelling along `dir`, starting on the plane through the given origins.
pub fn plane_source_rays(dir: Vec3, origins: &[Vec3]) -> Vec<Ray> {
    origins.iter().map(|o| Ray::new(*o, dir)).collect()
}

/// Points reached after travelling `total_path` from each ray origin,
/// reflecting once off `surface` if it is hit. Rays that miss a given
/// surface yield `None`; with no surface every ray travels straight.
pub fn wavefront_by_path_length(rays: &[Ray], surface: Option<&ImplicitSurface>, total_path: f64) -> Vec<Option<Vec3>> {
    rays.iter()
        .map(|ray| match surface {
            None => Some(ray.at(total_path)),
            Some(s) => trace_reflection(ray, s).ok().map(|t| t.outgoing.at(total_path - t.hit.s)),
        })
        .collect()
}
