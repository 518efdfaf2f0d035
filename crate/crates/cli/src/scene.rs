//! Scene files: `[section]` headers followed by `key = value` lines.
//!
//! ```text
//! [surface]
//! name = torus
//! params = 2, 1
//!
//! [wave]
//! kind = plane
//! # propagation direction, as a chart value or with `direction = x, y, z`
//! xi1 = 2.4
//!
//! [grid]
//! u = -3, 3
//! v = -3, 3
//! size = 128x128
//!
//! [output]
//! offsets = 0, 0.5
//! path = out
//! format = both
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Unknown sections or
//! keys are errors.

use std::fmt;
use std::path::PathBuf;

use nalgebra::Vector3;
use num_complex::Complex64;

use twistor_optics::closed_forms::{gallery, SurfaceGalleryEntry, TORUS_MASK};
use twistor_optics::congruence::Grid;
use twistor_optics::twistor::{dir_to_vector, MobiusRotation};

use crate::expr::{Expr, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> SceneError {
    SceneError::Parse { line, message: message.into() }
}

fn invalid(field: &str, message: impl Into<String>) -> SceneError {
    SceneError::Validation { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub name: String,
    pub params: Vec<f64>,
    /// Torus only: half-width of the excluded neighbourhood of the poles.
    pub mask: Option<f64>,
}

/// Chart in which custom wave expressions are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartSpec {
    /// `xi = 0` points up.
    World,
    /// `xi = 0` points down.
    Flipped,
}

impl ChartSpec {
    pub fn rotation(self) -> MobiusRotation {
        match self {
            Self::World => MobiusRotation::IDENTITY,
            Self::Flipped => MobiusRotation::north_to(&Vector3::new(0.0, 0.0, -1.0)),
        }
    }
}

/// Propagation direction of a plane wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaneDirection {
    /// Stereographic coordinate; `xi1 = 0` travels up the `x³`-axis.
    Chart(Complex64),
    /// A 3-vector, normalized on use.
    Vector(Vector3<f64>),
}

impl PlaneDirection {
    pub fn vector(&self) -> Vector3<f64> {
        match self {
            Self::Chart(xi1) => dir_to_vector(*xi1),
            Self::Vector(v) => v.normalize(),
        }
    }
}

impl Default for PlaneDirection {
    fn default() -> Self {
        Self::Vector(Vector3::new(0.0, 0.0, -1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WaveSpec {
    /// Plane wave travelling along `direction`.
    Plane { direction: PlaneDirection },
    /// Spherical wave from a point source.
    Spherical { source: Vector3<f64> },
    /// `nu -> (xi(nu), eta(nu, xi))` in the given chart.
    Custom { xi: Expr, eta: Expr, chart: ChartSpec },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub u: (f64, f64),
    pub v: (f64, f64),
    pub size: (usize, usize),
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { u: (-2.0, 2.0), v: (-2.0, 2.0), size: (128, 128) }
    }
}

impl GridSpec {
    pub fn to_grid(&self) -> Grid {
        Grid::new(self.u.0, self.u.1, self.v.0, self.v.1, self.size.0, self.size.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Obj,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }
    pub fn obj(self) -> bool {
        matches!(self, Self::Obj | Self::Both)
    }
}

/// Orientation of the exported outgoing lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Physically outgoing rays.
    Plus,
    /// The same lines, reversed.
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub path: PathBuf,
    pub format: Format,
    pub offsets: Vec<f64>,
    pub branch: Branch,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { path: PathBuf::from("out"), format: Format::Csv, offsets: vec![0.0], branch: Branch::Plus }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub surface: SurfaceSpec,
    pub wave: WaveSpec,
    pub grid: GridSpec,
    pub output: OutputSpec,
}

impl SceneConfig {
    /// Gallery entry with the configured mask applied.
    pub fn surface_entry(&self) -> Result<SurfaceGalleryEntry, SceneError> {
        let entry = gallery(&self.surface.name, &self.surface.params).map_err(|e| invalid("surface.params", e.to_string()))?;
        Ok(match self.surface.mask {
            Some(m) => entry.with_mask(m),
            None => entry,
        })
    }

    /// Short label for reports and file names.
    pub fn name(&self) -> String {
        let wave = match self.wave {
            WaveSpec::Plane { .. } => "plane",
            WaveSpec::Spherical { .. } => "spherical",
            WaveSpec::Custom { .. } => "custom",
        };
        format!("{}-{wave}", self.surface.name)
    }

    fn validate(self) -> Result<Self, SceneError> {
        self.surface_entry()?;
        if let Some(m) = self.surface.mask {
            if self.surface.name != "torus" {
                return Err(invalid("surface.mask", "only the torus has a mask"));
            }
            if !(0.0..1.0).contains(&m) {
                return Err(invalid("surface.mask", "needs 0 <= mask < 1"));
            }
        }
        let g = &self.grid;
        if !(g.u.0.is_finite() && g.u.1.is_finite() && g.u.0 < g.u.1) {
            return Err(invalid("grid.u", "needs finite min < max"));
        }
        if !(g.v.0.is_finite() && g.v.1.is_finite() && g.v.0 < g.v.1) {
            return Err(invalid("grid.v", "needs finite min < max"));
        }
        if g.size.0 < 2 || g.size.1 < 2 {
            return Err(invalid("grid.size", "needs at least 2x2 nodes"));
        }
        if self.output.offsets.is_empty() || self.output.offsets.iter().any(|c| !c.is_finite()) {
            return Err(invalid("output.offsets", "needs at least one finite value"));
        }
        match &self.wave {
            WaveSpec::Plane { direction: PlaneDirection::Chart(xi1) } if !xi1.is_finite() => Err(invalid("wave.xi1", "not finite")),
            WaveSpec::Plane { direction: PlaneDirection::Vector(v) } if !(v.iter().all(|x| x.is_finite()) && v.norm() > 0.0) => {
                Err(invalid("wave.direction", "needs a finite nonzero vector"))
            }
            WaveSpec::Spherical { source } if !source.iter().all(|x| x.is_finite()) => Err(invalid("wave.source", "not finite")),
            _ => Ok(self),
        }
    }
}

fn fmt_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{sign}{}i", z.re, z.im.abs())
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for SceneConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[surface]")?;
        writeln!(f, "name = {}", self.surface.name)?;
        if !self.surface.params.is_empty() {
            writeln!(f, "params = {}", fmt_list(&self.surface.params))?;
        }
        if let Some(m) = self.surface.mask {
            writeln!(f, "mask = {m}")?;
        }
        writeln!(f, "\n[wave]")?;
        match &self.wave {
            WaveSpec::Plane { direction: PlaneDirection::Chart(xi1) } => writeln!(f, "kind = plane\nxi1 = {}", fmt_complex(*xi1))?,
            WaveSpec::Plane { direction: PlaneDirection::Vector(v) } => {
                writeln!(f, "kind = plane\ndirection = {}", fmt_list(v.as_slice()))?
            }
            WaveSpec::Spherical { source } => writeln!(f, "kind = spherical\nsource = {}", fmt_list(source.as_slice()))?,
            WaveSpec::Custom { xi, eta, chart } => {
                let chart = match chart {
                    ChartSpec::World => "world",
                    ChartSpec::Flipped => "flipped",
                };
                writeln!(f, "kind = custom\nxi = {xi}\neta = {eta}\nchart = {chart}")?
            }
        }
        let g = &self.grid;
        writeln!(f, "\n[grid]")?;
        writeln!(f, "u = {}, {}", g.u.0, g.u.1)?;
        writeln!(f, "v = {}, {}", g.v.0, g.v.1)?;
        writeln!(f, "size = {}x{}", g.size.0, g.size.1)?;
        let o = &self.output;
        writeln!(f, "\n[output]")?;
        writeln!(f, "path = {}", o.path.display())?;
        let format = match o.format {
            Format::Csv => "csv",
            Format::Obj => "obj",
            Format::Both => "both",
        };
        writeln!(f, "format = {format}")?;
        writeln!(f, "offsets = {}", fmt_list(&o.offsets))?;
        writeln!(f, "branch = {}", if o.branch == Branch::Plus { "+" } else { "-" })
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("surface", &["name", "params", "mask"]),
    ("wave", &["kind", "xi1", "direction", "source", "xi", "eta", "chart"]),
    ("grid", &["u", "v", "size"]),
    ("output", &["path", "format", "offsets", "branch"]),
];

/// A value together with the line it came from.
struct Entry {
    line: usize,
    value: String,
}

#[derive(Default)]
struct Raw {
    entries: std::collections::HashMap<(String, String), Entry>,
}

impl Raw {
    fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }
}

fn parse_f64(e: &Entry, what: &str) -> Result<f64, SceneError> {
    e.value.trim().parse().map_err(|_| parse_err(e.line, format!("{what}: '{}' is not a number", e.value.trim())))
}

fn parse_list(e: &Entry, what: &str) -> Result<Vec<f64>, SceneError> {
    if e.value.trim().is_empty() {
        return Ok(Vec::new());
    }
    e.value
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| parse_err(e.line, format!("{what}: '{}' is not a number", s.trim()))))
        .collect()
}

fn parse_pair(e: &Entry, what: &str) -> Result<(f64, f64), SceneError> {
    match parse_list(e, what)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(parse_err(e.line, format!("{what}: expected two numbers"))),
    }
}

/// `NxM` grid size.
pub fn parse_size(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.trim().split_once(['x', 'X'])?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Parses and validates a scene; unknown keys are rejected.
pub fn parse_scene(text: &str) -> Result<SceneConfig, SceneError> {
    parse_scene_with(text, true)
}

/// As [`parse_scene`], but unknown keys are skipped when `strict` is false.
pub fn parse_scene_with(text: &str, strict: bool) -> Result<SceneConfig, SceneError> {
    let mut raw = Raw::default();
    let mut section: Option<&'static str> = None;
    let mut seen_sections = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let n = k + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| parse_err(n, "unterminated section header"))?.trim();
            let Some(&(known, _)) = KEYS.iter().find(|(s, _)| *s == name) else {
                if strict {
                    return Err(parse_err(n, format!("unknown section [{name}]")));
                }
                section = None;
                continue;
            };
            if seen_sections.contains(&known) {
                return Err(parse_err(n, format!("duplicate section [{name}]")));
            }
            seen_sections.push(known);
            section = Some(known);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| parse_err(n, "expected key = value"))?;
        let key = key.trim();
        let Some(sec) = section else {
            if seen_sections.is_empty() || strict {
                return Err(parse_err(n, format!("key '{key}' outside a section")));
            }
            continue;
        };
        let allowed = KEYS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            if strict {
                return Err(parse_err(n, format!("unknown key '{key}' in [{sec}]")));
            }
            continue;
        }
        let slot = (sec.to_string(), key.to_string());
        if raw.entries.contains_key(&slot) {
            return Err(parse_err(n, format!("duplicate key '{key}'")));
        }
        raw.entries.insert(slot, Entry { line: n, value: value.trim().to_string() });
    }

    let name = raw.take("surface", "name").ok_or_else(|| invalid("surface.name", "missing"))?.value;
    let params = match raw.take("surface", "params") {
        Some(e) => parse_list(&e, "params")?,
        None => Vec::new(),
    };
    let mask = match raw.take("surface", "mask") {
        Some(e) => Some(parse_f64(&e, "mask")?),
        None if name == "torus" => Some(TORUS_MASK),
        None => None,
    };
    let surface = SurfaceSpec { name, params, mask };

    let kind = raw.take("wave", "kind").map(|e| e.value).unwrap_or_else(|| "plane".into());
    let wave_keys: &[&str] = match kind.as_str() {
        "plane" => &["xi1", "direction"],
        "spherical" => &["source"],
        "custom" => &["xi", "eta", "chart"],
        _ => return Err(invalid("wave.kind", format!("'{kind}' is not plane, spherical or custom"))),
    };
    for key in ["xi1", "direction", "source", "xi", "eta", "chart"] {
        if !wave_keys.contains(&key) {
            if let Some(e) = raw.take("wave", key) {
                return Err(parse_err(e.line, format!("'{key}' does not apply to a {kind} wave")));
            }
        }
    }
    let wave = match kind.as_str() {
        "plane" => {
            let direction = match (raw.take("wave", "xi1"), raw.take("wave", "direction")) {
                (Some(_), Some(e)) => return Err(parse_err(e.line, "give either xi1 or direction, not both")),
                (Some(e), None) => {
                    PlaneDirection::Chart(Expr::constant(&e.value).map_err(|err| parse_err(e.line, format!("xi1: {err}")))?)
                }
                (None, Some(e)) => match parse_list(&e, "direction")?.as_slice() {
                    [x, y, z] => PlaneDirection::Vector(Vector3::new(*x, *y, *z)),
                    _ => return Err(parse_err(e.line, "direction: expected three numbers")),
                },
                (None, None) => PlaneDirection::default(),
            };
            WaveSpec::Plane { direction }
        }
        "spherical" => {
            let e = raw.take("wave", "source").ok_or_else(|| invalid("wave.source", "missing"))?;
            match parse_list(&e, "source")?.as_slice() {
                [x, y, z] => WaveSpec::Spherical { source: Vector3::new(*x, *y, *z) },
                _ => return Err(parse_err(e.line, "source: expected three numbers")),
            }
        }
        _ => {
            let xi = match raw.take("wave", "xi") {
                Some(e) => Expr::parse(&e.value, &[Var::Nu]).map_err(|err| parse_err(e.line, format!("xi: {err}")))?,
                None => Expr::parse("nu", &[Var::Nu]).expect("identity expression"),
            };
            let e = raw.take("wave", "eta").ok_or_else(|| invalid("wave.eta", "missing"))?;
            let eta = Expr::parse(&e.value, &[Var::Nu, Var::Xi]).map_err(|err| parse_err(e.line, format!("eta: {err}")))?;
            let chart = match raw.take("wave", "chart") {
                None => ChartSpec::World,
                Some(e) => match e.value.as_str() {
                    "world" => ChartSpec::World,
                    "flipped" => ChartSpec::Flipped,
                    other => return Err(parse_err(e.line, format!("chart: '{other}' is not world or flipped"))),
                },
            };
            WaveSpec::Custom { xi, eta, chart }
        }
    };

    let mut grid = GridSpec::default();
    if let Some(e) = raw.take("grid", "u") {
        grid.u = parse_pair(&e, "u")?;
    }
    if let Some(e) = raw.take("grid", "v") {
        grid.v = parse_pair(&e, "v")?;
    }
    if let Some(e) = raw.take("grid", "size") {
        grid.size = parse_size(&e.value).ok_or_else(|| parse_err(e.line, "size: expected NxM"))?;
    }

    let mut output = OutputSpec::default();
    if let Some(e) = raw.take("output", "path") {
        output.path = PathBuf::from(e.value);
    }
    if let Some(e) = raw.take("output", "format") {
        output.format = match e.value.as_str() {
            "csv" => Format::Csv,
            "obj" => Format::Obj,
            "both" => Format::Both,
            other => return Err(parse_err(e.line, format!("format: '{other}' is not csv, obj or both"))),
        };
    }
    if let Some(e) = raw.take("output", "offsets") {
        output.offsets = parse_list(&e, "offsets")?;
    }
    if let Some(e) = raw.take("output", "branch") {
        output.branch = parse_branch(&e.value).ok_or_else(|| parse_err(e.line, "branch: expected + or -"))?;
    }

    SceneConfig { surface, wave, grid, output }.validate()
}

pub fn parse_branch(s: &str) -> Option<Branch> {
    match s.trim() {
        "+" => Some(Branch::Plus),
        "-" => Some(Branch::Minus),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scene_gets_defaults() {
        let cfg = parse_scene("[surface]\nname = sphere\n").unwrap();
        assert_eq!(cfg.grid, GridSpec { u: (-2.0, 2.0), v: (-2.0, 2.0), size: (128, 128) });
        assert_eq!(cfg.wave, WaveSpec::Plane { direction: PlaneDirection::Vector(Vector3::new(0.0, 0.0, -1.0)) });
        assert_eq!(cfg.output.offsets, vec![0.0]);
    }

    #[test]
    fn torus_needs_a_larger_than_b() {
        let err = parse_scene("[surface]\nname = torus\nparams = 1, 2\n").unwrap_err();
        assert!(matches!(err, SceneError::Validation { ref field, .. } if field == "surface.params"), "{err}");
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let text = "[surface]\nname = sphere\n\n[wave]\nkind = plane\nxl1 = 2\n";
        assert_eq!(parse_scene(text).unwrap_err(), parse_err(6, "unknown key 'xl1' in [wave]"));
        assert!(parse_scene_with(text, false).is_ok());
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_scene("[surface\n"), Err(SceneError::Parse { line: 1, .. })));
        assert!(matches!(parse_scene("[surface]\nname sphere\n"), Err(SceneError::Parse { line: 2, .. })));
        assert!(matches!(parse_scene("name = sphere\n"), Err(SceneError::Parse { line: 1, .. })));
        assert!(matches!(parse_scene("[surface]\nname = sphere\n[grid]\nsize = 12\n"), Err(SceneError::Parse { line: 4, .. })));
        assert!(matches!(parse_scene("[wave]\nkind = plane\n"), Err(SceneError::Validation { .. })));
    }

    #[test]
    fn round_trip_through_text() {
        let text = "[surface]\nname = torus\nparams = 2, 1\n[wave]\nkind = custom\nxi = nu\neta = -0.5*xi*sqrt(1+xi*conj(xi))\nchart = flipped\n[grid]\nu = 0.1, 2\nsize = 33x17\n[output]\noffsets = 0, 0.25, -1e-3\nbranch = -\nformat = both\n";
        let cfg = parse_scene(text).unwrap();
        let again = parse_scene(&cfg.to_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_string(), again.to_string());
        for z in [Complex64::new(2.4, 0.0), Complex64::new(-0.1, -3.25), Complex64::new(0.1 + 0.2, 1.0 / 3.0)] {
            let mut cfg = cfg.clone();
            cfg.wave = WaveSpec::Plane { direction: PlaneDirection::Chart(z) };
            assert_eq!(parse_scene(&cfg.to_string()).unwrap(), cfg);
        }
    }
}
