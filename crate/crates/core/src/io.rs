//! File formats: χ and complex matrices as JSON, count records, clouds,
//! locus scans and curves as CSV, and the JSON metadata sidecar.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channel::{DVector, ProcessMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix4};
use crate::polarization::Tolerances;
use crate::reachability::LocusPoint;
use crate::tomography::CountRecord;

/// `{"basis": "pauli", "matrix": [[[re, im], ×4], ×4]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiDocument {
    pub basis: String,
    pub matrix: Vec<Vec<[f64; 2]>>,
}

/// Row-major `[re, im]` pairs.
pub fn encode_complex_matrix<'a, I>(rows: usize, cols: usize, entry: I) -> Vec<Vec<[f64; 2]>>
where
    I: Fn(usize, usize) -> &'a C64,
{
    (0..rows)
        .map(|r| (0..cols).map(|c| [entry(r, c).re, entry(r, c).im]).collect())
        .collect()
}

impl ChiDocument {
    pub fn from_chi(chi: &ProcessMatrix) -> Self {
        let m = chi.matrix();
        ChiDocument { basis: "pauli".into(), matrix: encode_complex_matrix(4, 4, |r, c| &m[(r, c)]) }
    }

    /// Validates shape and basis, then hermiticity and unit trace at the input
    /// tolerance; the accepted matrix is symmetrized and renormalized.
    pub fn to_chi(&self) -> Result<ProcessMatrix> {
        if self.basis != "pauli" {
            return Err(Error::Parse(format!("unsupported basis `{}`", self.basis)));
        }
        if self.matrix.len() != 4 || self.matrix.iter().any(|row| row.len() != 4) {
            return Err(Error::Parse("chi matrix must be 4×4".into()));
        }
        let m = CMatrix4::from_fn(|r, c| C64::new(self.matrix[r][c][0], self.matrix[r][c][1]));
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Parse("chi entries must be finite".into()));
        }
        let tol = Tolerances::default().input;
        let herm = linalg::hermiticity_error(&m);
        if herm > tol {
            return Err(Error::NonPhysicalChannel(format!("chi not Hermitian (error {herm:.3e})")));
        }
        let tr = linalg::trace(&m);
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::NonPhysicalChannel(format!("chi trace {tr} differs from 1")));
        }
        let m = linalg::hermitian_part(&m);
        // Renormalize only when needed so exact documents round-trip bit for bit.
        let m = if (tr.re - 1.0).abs() > 1e-13 { m.unscale(tr.re) } else { m };
        ProcessMatrix::from_estimate(m)
    }
}

/// Serde adapter storing a [`ProcessMatrix`] as a [`ChiDocument`].
pub mod chi_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(chi: &ProcessMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        ChiDocument::from_chi(chi).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ProcessMatrix, D::Error> {
        let doc = ChiDocument::deserialize(d)?;
        doc.to_chi().map_err(serde::de::Error::custom)
    }
}

pub fn chi_to_json(chi: &ProcessMatrix) -> String {
    serde_json::to_string_pretty(&ChiDocument::from_chi(chi)).expect("chi serializes")
}

pub fn chi_from_json(text: &str) -> Result<ProcessMatrix> {
    let doc: ChiDocument = serde_json::from_str(text)?;
    doc.to_chi()
}

pub fn read_chi(path: &Path) -> Result<ProcessMatrix> {
    chi_from_json(&read_to_string(path)?)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Header `input,projector,mode,integration_s,counts`.
pub fn write_counts<W: Write>(w: W, records: &[CountRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_counts<R: Read>(r: R) -> Result<Vec<CountRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let expected = ["input", "projector", "mode", "integration_s", "counts"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse(format!(
            "count file header must be `{}`, got `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: CountRecord = rec?;
        if !(rec.integration_time.is_finite() && rec.integration_time > 0.0) {
            return Err(Error::Parse(format!(
                "integration time must be positive, got {}",
                rec.integration_time
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct CloudRow {
    d1: f64,
    d2: f64,
    d3: f64,
}

/// Header `d1,d2,d3`.
pub fn write_cloud<W: Write>(w: W, points: &[DVector]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in points {
        wtr.serialize(CloudRow { d1: p.d1, d2: p.d2, d3: p.d3 })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_cloud<R: Read>(r: R) -> Result<Vec<DVector>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|row| {
            let row: CloudRow = row?;
            Ok(DVector::new(row.d1, row.d2, row.d3))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocusRow {
    pub theta1_deg: f64,
    pub eig0: f64,
    pub eig1: f64,
    pub eig2: f64,
    pub eig3: f64,
    pub p_analytic: f64,
}

impl From<&LocusPoint> for LocusRow {
    fn from(p: &LocusPoint) -> Self {
        let [eig0, eig1, eig2, eig3] = p.chi_eigenvalues;
        LocusRow { theta1_deg: p.theta1, eig0, eig1, eig2, eig3, p_analytic: p.p }
    }
}

/// Header `theta1_deg,eig0,eig1,eig2,eig3,p_analytic`.
pub fn write_locus<W: Write>(w: W, points: &[LocusPoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in points {
        wtr.serialize(LocusRow::from(p))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_locus<R: Read>(r: R) -> Result<Vec<LocusRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| Ok(row?)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t_fs: f64,
    pub value: f64,
}

/// Header `t_fs,value`.
pub fn write_curve<W: Write>(w: W, points: &[(f64, f64)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for &(t_fs, value) in points {
        wtr.serialize(CurveRow { t_fs, value })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_curve<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|row| {
            let row: CurveRow = row?;
            Ok((row.t_fs, row.value))
        })
        .collect()
}

/// `<output>.meta.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn write_sidecar(output: &Path, metadata: &serde_json::Value) -> Result<PathBuf> {
    let path = sidecar_path(output);
    write_string(&path, &serde_json::to_string_pretty(metadata)?)?;
    Ok(path)
}
