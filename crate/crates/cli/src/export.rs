//! CSV and OBJ writers.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use twistor_optics::twistor::{EuclidPoint, OrientedLine};

use crate::scene::SceneConfig;

pub const HEADER: [&str; 12] = ["nu_re", "nu_im", "xi_re", "xi_im", "eta_re", "eta_im", "r", "C", "x1", "x2", "x3", "shadow"];

/// One exported node. Empty rows have `None` in every line and point field.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportRecord {
    pub nu: Complex64,
    pub xi: Option<Complex64>,
    pub eta: Option<Complex64>,
    pub r: Option<f64>,
    pub offset: Option<f64>,
    pub point: Option<EuclidPoint>,
    pub shadow: bool,
}

impl ExportRecord {
    pub fn line(nu: Complex64, line: OrientedLine, r: f64, offset: Option<f64>, point: Option<EuclidPoint>) -> Self {
        Self { nu, xi: Some(line.xi), eta: Some(line.eta), r: Some(r), offset, point, shadow: false }
    }

    pub fn empty(nu: Complex64, shadow: bool) -> Self {
        Self { nu, xi: None, eta: None, r: None, offset: None, point: None, shadow }
    }

    fn fields(&self) -> [String; 12] {
        let num = |x: f64| format!("{x:.16e}");
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        let p = self.point.map(|p| p.to_vector());
        [
            num(self.nu.re),
            num(self.nu.im),
            opt(self.xi.map(|z| z.re)),
            opt(self.xi.map(|z| z.im)),
            opt(self.eta.map(|z| z.re)),
            opt(self.eta.map(|z| z.im)),
            opt(self.r),
            opt(self.offset),
            opt(p.map(|v| v.x)),
            opt(p.map(|v| v.y)),
            opt(p.map(|v| v.z)),
            self.shadow.to_string(),
        ]
    }
}

pub fn csv_bytes(records: &[ExportRecord]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_csv(path: &Path, records: &[ExportRecord]) -> anyhow::Result<()> {
    std::fs::write(path, csv_bytes(records)?).with_context(|| format!("writing {}", path.display()))
}

/// SHA-256 of the canonical scene text.
pub fn scene_hash(cfg: &SceneConfig) -> String {
    let digest = Sha256::digest(cfg.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Vertices only, skipping empty rows.
pub fn obj_bytes(records: &[ExportRecord], hash: &str, offset: f64) -> Vec<u8> {
    let mut out = Vec::new();
    let _ = writeln!(out, "# twistor wavefront");
    let _ = writeln!(out, "# scene sha256 {hash}");
    let _ = writeln!(out, "# offset {offset:.16e}");
    for p in records.iter().filter_map(|r| r.point) {
        let v = p.to_vector();
        let _ = writeln!(out, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
    }
    out
}

pub fn write_obj(path: &Path, records: &[ExportRecord], hash: &str, offset: f64) -> anyhow::Result<()> {
    std::fs::write(path, obj_bytes(records, hash, offset)).with_context(|| format!("writing {}", path.display()))
}
