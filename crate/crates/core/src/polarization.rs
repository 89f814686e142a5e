//! Polarization-qubit states: density matrices, Stokes vectors and the six
//! named basis polarizations.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix2, ONE, ZERO};

/// Numerical tolerances used for validation.
///
/// `exact` applies to quantities that are exactly representable (trace,
/// hermiticity of computed states); `input` applies to user-supplied values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub exact: f64,
    pub input: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { exact: 1e-12, input: 1e-9 }
    }
}

/// One of the six polarization basis states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisLabel {
    H,
    V,
    P,
    M,
    R,
    L,
}

impl BasisLabel {
    pub const ALL: [BasisLabel; 6] = [
        BasisLabel::H,
        BasisLabel::V,
        BasisLabel::P,
        BasisLabel::M,
        BasisLabel::R,
        BasisLabel::L,
    ];

    /// The orthogonal partner (h↔v, p↔m, r↔l).
    pub fn antipode(self) -> BasisLabel {
        match self {
            BasisLabel::H => BasisLabel::V,
            BasisLabel::V => BasisLabel::H,
            BasisLabel::P => BasisLabel::M,
            BasisLabel::M => BasisLabel::P,
            BasisLabel::R => BasisLabel::L,
            BasisLabel::L => BasisLabel::R,
        }
    }

    /// Ket amplitudes in the {|h⟩, |v⟩} basis.
    pub fn ket(self) -> [C64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            BasisLabel::H => [ONE, ZERO],
            BasisLabel::V => [ZERO, ONE],
            BasisLabel::P => [C64::new(s, 0.0), C64::new(s, 0.0)],
            BasisLabel::M => [C64::new(-s, 0.0), C64::new(s, 0.0)],
            BasisLabel::R => [C64::new(s, 0.0), C64::new(0.0, s)],
            BasisLabel::L => [C64::new(s, 0.0), C64::new(0.0, -s)],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BasisLabel::H => "h",
            BasisLabel::V => "v",
            BasisLabel::P => "p",
            BasisLabel::M => "m",
            BasisLabel::R => "r",
            BasisLabel::L => "l",
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BasisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h" => Ok(BasisLabel::H),
            "v" => Ok(BasisLabel::V),
            "p" => Ok(BasisLabel::P),
            "m" => Ok(BasisLabel::M),
            "r" => Ok(BasisLabel::R),
            "l" => Ok(BasisLabel::L),
            other => Err(Error::Parse(format!("unknown basis label `{other}`"))),
        }
    }
}

/// A 2×2 Hermitian, positive semidefinite, unit-trace polarization state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(CMatrix2);

impl DensityMatrix {
    /// Validates `m` with the default tolerances.
    pub fn new(m: CMatrix2) -> Result<Self> {
        Self::with_tolerance(m, Tolerances::default().exact)
    }

    pub fn with_tolerance(m: CMatrix2, tol: f64) -> Result<Self> {
        let herm = linalg::hermiticity_error(&m);
        if herm > tol {
            return Err(Error::NonPhysical(format!("not Hermitian (error {herm:.3e})")));
        }
        let tr = linalg::trace(&m);
        if (tr - ONE).norm() > tol {
            return Err(Error::NonPhysical(format!("trace {tr} differs from 1")));
        }
        let min = linalg::eigvalsh(&m)[1];
        if min < -tol {
            return Err(Error::NonPhysical(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(DensityMatrix(linalg::hermitian_part(&m)))
    }

    /// Wraps a matrix known to be physical, symmetrizing away round-off.
    pub(crate) fn from_trusted(m: CMatrix2) -> Self {
        DensityMatrix(linalg::hermitian_part(&m))
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(CMatrix2::identity().scale(0.5))
    }

    pub fn matrix(&self) -> &CMatrix2 {
        &self.0
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        linalg::eigvalsh(&self.0)
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        linalg::trace(&(self.0 * self.0)).re
    }

    /// `tr(Π ρ)` for a basis projector.
    pub fn probability(&self, label: BasisLabel) -> f64 {
        linalg::trace(&(basis_projector(label) * self.0)).re
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let [a, b] = linalg::eigvalsh(&(self.0 - other.0));
        0.5 * (a.abs() + b.abs())
    }

    pub fn stokes(&self) -> StokesVector {
        stokes_from_density(self)
    }
}

/// Stokes parameters `(S1, S2, S3)` with `S0 = 1` implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct StokesVector {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn new(s1: f64, s2: f64, s3: f64) -> Self {
        StokesVector { s1, s2, s3 }
    }

    pub fn norm(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.s1, self.s2, self.s3]
    }
}

impl From<[f64; 3]> for StokesVector {
    fn from(a: [f64; 3]) -> Self {
        StokesVector::new(a[0], a[1], a[2])
    }
}

impl From<StokesVector> for [f64; 3] {
    fn from(s: StokesVector) -> Self {
        s.to_array()
    }
}

/// `|ψ⟩⟨ψ|` for a named polarization, as a bare matrix.
pub fn basis_projector(label: BasisLabel) -> CMatrix2 {
    let k = label.ket();
    CMatrix2::from_fn(|r, c| k[r] * k[c].conj())
}

pub fn basis_state(label: BasisLabel) -> DensityMatrix {
    DensityMatrix::from_trusted(basis_projector(label))
}

/// `s_i = tr(ρ σ_i)`.
pub fn stokes_from_density(rho: &DensityMatrix) -> StokesVector {
    let s = |i| linalg::trace(&(rho.0 * linalg::pauli(i))).re;
    StokesVector::new(s(1), s(2), s(3))
}

/// `ρ = (I + Σ s_i σ_i) / 2`; vectors outside the Poincaré sphere by more than
/// the input tolerance are rejected.
pub fn density_from_stokes(s: &StokesVector) -> Result<DensityMatrix> {
    let norm = s.norm();
    if norm > 1.0 + Tolerances::default().input {
        return Err(Error::NonPhysical(format!(
            "Stokes vector length {norm} exceeds 1"
        )));
    }
    let m = (linalg::pauli(0)
        + linalg::pauli(1).scale(s.s1)
        + linalg::pauli(2).scale(s.s2)
        + linalg::pauli(3).scale(s.s3))
    .scale(0.5);
    Ok(DensityMatrix::from_trusted(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &CMatrix2, b: &CMatrix2, tol: f64) -> bool {
        (a - b).iter().all(|z| z.norm() <= tol)
    }

    #[test]
    fn named_basis_states() {
        let h = basis_state(BasisLabel::H);
        assert!(close(h.matrix(), &CMatrix2::new(ONE, ZERO, ZERO, ZERO), 1e-15));

        let p = basis_state(BasisLabel::P);
        assert!(p.matrix().iter().all(|z| (z - C64::new(0.5, 0.0)).norm() < 1e-15));

        let r = basis_state(BasisLabel::R);
        let expected = CMatrix2::new(
            C64::new(0.5, 0.0),
            C64::new(0.0, -0.5),
            C64::new(0.0, 0.5),
            C64::new(0.5, 0.0),
        );
        assert!(close(r.matrix(), &expected, 1e-15));
    }

    #[test]
    fn basis_states_are_pure_and_antipodes_opposite() {
        for label in BasisLabel::ALL {
            let rho = basis_state(label);
            assert!((rho.purity() - 1.0).abs() < 1e-12);
            let a = rho.stokes();
            let b = basis_state(label.antipode()).stokes();
            assert!((a.s1 + b.s1).abs() < 1e-12);
            assert!((a.s2 + b.s2).abs() < 1e-12);
            assert!((a.s3 + b.s3).abs() < 1e-12);
        }
    }

    #[test]
    fn stokes_examples() {
        assert_eq!(basis_state(BasisLabel::H).stokes().to_array(), [1.0, 0.0, 0.0]);
        assert_eq!(DensityMatrix::maximally_mixed().stokes().to_array(), [0.0, 0.0, 0.0]);
        let r = basis_state(BasisLabel::R).stokes();
        assert!((r.s3 - 1.0).abs() < 1e-15 && r.s1.abs() < 1e-15 && r.s2.abs() < 1e-15);
    }

    #[test]
    fn density_from_stokes_examples() {
        let mixed = density_from_stokes(&StokesVector::new(0.0, 0.0, 0.0)).unwrap();
        assert!(close(mixed.matrix(), DensityMatrix::maximally_mixed().matrix(), 1e-15));
        let p = density_from_stokes(&StokesVector::new(0.0, 1.0, 0.0)).unwrap();
        assert!(close(p.matrix(), basis_state(BasisLabel::P).matrix(), 1e-15));
        assert!(matches!(
            density_from_stokes(&StokesVector::new(0.0, 0.0, 2.0)),
            Err(Error::NonPhysical(_))
        ));
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let not_unit = CMatrix2::identity();
        assert!(DensityMatrix::new(not_unit).is_err());
        let negative = CMatrix2::new(C64::new(1.5, 0.0), ZERO, ZERO, C64::new(-0.5, 0.0));
        assert!(DensityMatrix::new(negative).is_err());
        let non_herm = CMatrix2::new(C64::new(0.5, 0.0), ONE, ZERO, C64::new(0.5, 0.0));
        assert!(DensityMatrix::new(non_herm).is_err());
    }

    #[test]
    fn labels_parse() {
        for label in BasisLabel::ALL {
            assert_eq!(label.as_str().parse::<BasisLabel>().unwrap(), label);
        }
        assert!("x".parse::<BasisLabel>().is_err());
    }

    proptest! {
        #[test]
        fn stokes_round_trip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let n = (x * x + y * y + z * z).sqrt().max(1.0);
            let s = StokesVector::new(x / n, y / n, z / n);
            let back = density_from_stokes(&s).unwrap().stokes();
            prop_assert!((back.s1 - s.s1).abs() < 1e-12);
            prop_assert!((back.s2 - s.s2).abs() < 1e-12);
            prop_assert!((back.s3 - s.s3).abs() < 1e-12);
        }
    }
}
