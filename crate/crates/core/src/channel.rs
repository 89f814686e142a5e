//! Process-matrix (χ) description of single-qubit channels.
//!
//! A channel acts as `E(ρ) = Σ_mn χ_mn σ_m ρ σ_n†` in the Pauli operator basis
//! `{σ0, σ1, σ2, σ3}`. For unital channels the 3×3 block
//! `D_ij = ½ tr(σ_i E(σ_j))` carries every parameter; stripping rotations
//! from `D` leaves a triple of signed singular values that lives inside the
//! tetrahedron with vertices `(1,1,1)`, `(1,-1,-1)`, `(-1,1,-1)`, `(-1,-1,1)`.

use nalgebra::Matrix3;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix2, CMatrix4, ONE, ZERO};
use crate::polarization::DensityMatrix;

/// Hermiticity and trace tolerance for process matrices.
pub const CHI_EXACT_TOL: f64 = 1e-12;
/// Most negative eigenvalue accepted in a process matrix.
pub const CHI_PSD_TOL: f64 = -1e-10;
/// Allowed deviation of `Σ χ_mn σ_n σ_m` from the identity.
pub const TRACE_PRESERVING_TOL: f64 = 1e-9;
/// Most negative eigenvalue accepted when building χ from a D matrix.
pub const CP_TOL: f64 = -1e-9;
/// Slack on the tetrahedron inequalities.
pub const TETRAHEDRON_SLACK: f64 = 1e-12;
/// Completeness tolerance for Kraus sets fed to [`chi_from_kraus`].
pub const KRAUS_TOL: f64 = 1e-8;
/// Eigenvalues above this threshold count as populated when testing for
/// dephasing shape.
pub const DEPHASING_EIG_THRESHOLD: f64 = 1e-6;

/// A 4×4 Hermitian, PSD, unit-trace process matrix in the Pauli basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessMatrix(CMatrix4);

impl ProcessMatrix {
    /// Validates every invariant, including trace preservation.
    pub fn new(m: CMatrix4) -> Result<Self> {
        let chi = Self::from_estimate(m)?;
        let tp = chi.trace_preservation_deviation();
        if tp > TRACE_PRESERVING_TOL {
            return Err(Error::NonPhysicalChannel(format!(
                "not trace preserving (deviation {tp:.3e})"
            )));
        }
        Ok(chi)
    }

    /// Validates hermiticity, unit trace and positivity but not trace
    /// preservation, which estimators only enforce approximately. Use
    /// [`ProcessMatrix::trace_preservation_deviation`] to inspect it.
    pub fn from_estimate(m: CMatrix4) -> Result<Self> {
        let herm = linalg::hermiticity_error(&m);
        if herm > CHI_EXACT_TOL {
            return Err(Error::NonPhysicalChannel(format!(
                "chi not Hermitian (error {herm:.3e})"
            )));
        }
        let tr = linalg::trace(&m);
        if (tr - ONE).norm() > CHI_EXACT_TOL {
            return Err(Error::NonPhysicalChannel(format!("chi trace {tr} differs from 1")));
        }
        let chi = ProcessMatrix(linalg::hermitian_part(&m));
        let min = chi.eigenvalues()[3];
        if min < CHI_PSD_TOL {
            return Err(Error::NonPhysicalChannel(format!(
                "chi has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(chi)
    }

    pub(crate) fn from_trusted(m: CMatrix4) -> Self {
        ProcessMatrix(linalg::hermitian_part(&m))
    }

    /// The identity channel, `χ = e00`.
    pub fn identity() -> Self {
        let mut m = CMatrix4::zeros();
        m[(0, 0)] = ONE;
        ProcessMatrix(m)
    }

    /// The fully depolarizing channel, `χ = I/4`.
    pub fn depolarizing() -> Self {
        ProcessMatrix(CMatrix4::identity().scale(0.25))
    }

    pub fn matrix(&self) -> &CMatrix4 {
        &self.0
    }

    /// Eigenvalues sorted descending.
    pub fn eigenvalues(&self) -> [f64; 4] {
        linalg::eigvalsh(&self.0)
    }

    /// Frobenius norm of `Σ χ_mn σ_n σ_m − I`.
    pub fn trace_preservation_deviation(&self) -> f64 {
        let s = linalg::paulis();
        let mut acc = CMatrix2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                acc += s[n] * s[m] * self.0[(m, n)];
            }
        }
        linalg::frobenius(&(acc - CMatrix2::identity()))
    }

    /// Frobenius norm of `E(I) − I`.
    pub fn unitality_deviation(&self) -> f64 {
        linalg::frobenius(&(self.apply_matrix(&CMatrix2::identity()) - CMatrix2::identity()))
    }

    /// Applies the channel to an arbitrary 2×2 operator.
    pub fn apply_matrix(&self, a: &CMatrix2) -> CMatrix2 {
        let s = linalg::paulis();
        let mut out = CMatrix2::zeros();
        for m in 0..4 {
            let left = s[m] * a;
            for n in 0..4 {
                let c = self.0[(m, n)];
                if c != ZERO {
                    out += left * s[n] * c;
                }
            }
        }
        out
    }
}

/// Builds χ for an arbitrary linear map on 2×2 operators through its Choi
/// matrix.
pub fn chi_from_map<F>(map: F) -> CMatrix4
where
    F: Fn(&CMatrix2) -> CMatrix2,
{
    // J = Σ_ab |a⟩⟨b| ⊗ E(|a⟩⟨b|) = Σ_mn χ_mn |v_m⟩⟨v_n| with
    // v_m[2a + c] = (σ_m)_ca, and ⟨v_m|v_n⟩ = 2 δ_mn.
    let mut choi = CMatrix4::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let mut unit = CMatrix2::zeros();
            unit[(a, b)] = ONE;
            let image = map(&unit);
            for c in 0..2 {
                for d in 0..2 {
                    choi[(2 * a + c, 2 * b + d)] = image[(c, d)];
                }
            }
        }
    }
    let s = linalg::paulis();
    let vecs: Vec<[C64; 4]> = s
        .iter()
        .map(|p| [p[(0, 0)], p[(1, 0)], p[(0, 1)], p[(1, 1)]])
        .collect();
    CMatrix4::from_fn(|m, n| {
        let mut acc = ZERO;
        for r in 0..4 {
            for c in 0..4 {
                acc += vecs[m][r].conj() * choi[(r, c)] * vecs[n][c];
            }
        }
        acc * 0.25
    })
}

/// `E(ρ) = Σ χ_mn σ_m ρ σ_n†`.
pub fn apply_channel(chi: &ProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let m = chi.matrix();
    let tr = linalg::trace(m);
    if (tr - ONE).norm() > CHI_EXACT_TOL {
        return Err(Error::NonPhysicalChannel(format!("chi trace {tr} differs from 1")));
    }
    let min = chi.eigenvalues()[3];
    if min < CHI_PSD_TOL {
        return Err(Error::NonPhysicalChannel(format!("chi has negative eigenvalue {min:.3e}")));
    }
    Ok(DensityMatrix::from_trusted(chi.apply_matrix(rho.matrix())))
}

/// Probability `P` of a phase flip in a dephasing channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingSpec {
    p: f64,
}

impl DephasingSpec {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange(format!("dephasing probability {p} not in [0, 1]")));
        }
        Ok(DephasingSpec { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// `E(ρ) = (1−P) ρ + P σ3 ρ σ3`.
pub fn dephasing_channel(spec: DephasingSpec) -> ProcessMatrix {
    let mut m = CMatrix4::zeros();
    m[(0, 0)] = C64::new(1.0 - spec.p, 0.0);
    m[(3, 3)] = C64::new(spec.p, 0.0);
    ProcessMatrix(m)
}

/// `P = 1 − χ0` for a χ with at most two populated eigenvalues.
pub fn dephasing_probability(chi: &ProcessMatrix) -> Result<f64> {
    let eigs = chi.eigenvalues();
    let populated = eigs.iter().filter(|&&e| e > DEPHASING_EIG_THRESHOLD).count();
    if populated > 2 {
        return Err(Error::NotDephasing(populated));
    }
    Ok(1.0 - eigs[0])
}

/// Real 3×3 Pauli block of a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DMatrix(Matrix3<f64>);

impl DMatrix {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if let Some(bad) = m.iter().find(|x| !x.is_finite() || x.abs() > 1.0 + TETRAHEDRON_SLACK) {
            return Err(Error::InvalidArgument(format!("D entry {bad} outside [-1, 1]")));
        }
        Ok(DMatrix(m))
    }

    pub fn diagonal(d: DVector) -> Self {
        DMatrix(Matrix3::from_diagonal(&nalgebra::Vector3::new(d.d1, d.d2, d.d3)))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Diagonal entries, without stripping any rotation.
    pub fn raw_diagonal(&self) -> DVector {
        DVector::new(self.0[(0, 0)], self.0[(1, 1)], self.0[(2, 2)])
    }
}

/// The D matrix of a channel together with how far the channel is from
/// unital.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DMatrixReport {
    pub d: DMatrix,
    pub unitality_deviation: f64,
}

pub fn d_matrix_from_chi(chi: &ProcessMatrix) -> DMatrixReport {
    let s = linalg::paulis();
    let images: Vec<CMatrix2> = (1..4).map(|j| chi.apply_matrix(&s[j])).collect();
    let m = Matrix3::from_fn(|i, j| 0.5 * linalg::trace(&(s[i + 1] * images[j])).re);
    DMatrixReport {
        d: DMatrix(m),
        unitality_deviation: chi.unitality_deviation(),
    }
}

/// χ of the unital channel `σ0 ↦ σ0`, `σ_j ↦ Σ_i D_ij σ_i`.
pub fn chi_from_d_matrix(d: &DMatrix) -> Result<ProcessMatrix> {
    let s = linalg::paulis();
    let dm = d.0;
    let m = chi_from_map(|a| {
        let coeff: Vec<C64> = s.iter().map(|p| linalg::trace(&(p * a)) * 0.5).collect();
        let mut out = s[0] * coeff[0];
        for i in 0..3 {
            let mut c = ZERO;
            for j in 0..3 {
                c += coeff[j + 1] * dm[(i, j)];
            }
            out += s[i + 1] * c;
        }
        out
    });
    let chi = ProcessMatrix::from_trusted(m);
    let min = chi.eigenvalues()[3];
    if min < CP_TOL {
        return Err(Error::NotCompletelyPositive(min));
    }
    Ok(chi)
}

/// Rotation-stripped coordinates of a unital channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct DVector {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl DVector {
    pub const fn new(d1: f64, d2: f64, d3: f64) -> Self {
        DVector { d1, d2, d3 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.d1, self.d2, self.d3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        DVector::new(a[0], a[1], a[2])
    }

    pub fn is_complete_positive(&self) -> bool {
        is_complete_positive(self)
    }

    /// Canonical representative under all rotations on either side:
    /// [`d_vector`] of the diagonal matrix.
    pub fn canonical(&self) -> DVector {
        d_vector(&DMatrix::diagonal(*self))
    }

    pub fn max_abs_diff(&self, other: &DVector) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<[f64; 3]> for DVector {
    fn from(a: [f64; 3]) -> Self {
        DVector::from_array(a)
    }
}

impl From<DVector> for [f64; 3] {
    fn from(d: DVector) -> Self {
        d.to_array()
    }
}

/// Signed singular values of `D`, ordered by descending magnitude, with the
/// sign of `det D` carried by the smallest entry.
///
/// Ties in magnitude need no further ordering: only the last entry can be
/// negative, and it is strictly the smallest or equal in magnitude to the
/// entries before it, which are positive.
pub fn d_vector(d: &DMatrix) -> DVector {
    let svd = d.0.svd(false, false);
    let mut sv: [f64; 3] = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    sv.sort_by(|a, b| b.total_cmp(a));
    if d.0.determinant() < 0.0 {
        sv[2] = -sv[2];
    }
    DVector::from_array(sv)
}

/// `|D_i ± D_j| ≤ |1 ± D_k|` for every ordering of distinct `i, j, k`.
pub fn is_complete_positive(d: &DVector) -> bool {
    let v = d.to_array();
    const ORDERS: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];
    ORDERS.iter().all(|&(i, j, k)| {
        (v[i] + v[j]).abs() <= (1.0 + v[k]).abs() + TETRAHEDRON_SLACK
            && (v[i] - v[j]).abs() <= (1.0 - v[k]).abs() + TETRAHEDRON_SLACK
    })
}

/// `D_i = χ0 + χ_i − χ_j − χ_k` from a χ spectrum with `χ0` the largest.
pub fn d_from_chi_eigenvalues(eigs: [f64; 4]) -> Result<DVector> {
    if let Some(neg) = eigs.iter().find(|&&e| e < CP_TOL) {
        return Err(Error::InvalidSpectrum(format!("negative eigenvalue {neg}")));
    }
    let sum: f64 = eigs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpectrum(format!("eigenvalues sum to {sum}")));
    }
    if eigs[1..].iter().any(|&e| e > eigs[0]) {
        return Err(Error::InvalidSpectrum("first eigenvalue is not the largest".into()));
    }
    let [c0, c1, c2, c3] = eigs;
    Ok(DVector::new(c0 + c1 - c2 - c3, c0 + c2 - c1 - c3, c0 + c3 - c1 - c2))
}

/// `F = (tr √(√a b √a))²`, clamped to `[0, 1]`.
///
/// Evaluated as the squared trace norm of `√a √b`, which equals the
/// expression above and stays accurate when `a` and `b` are nearly equal and
/// rank deficient.
pub fn process_fidelity(a: &ProcessMatrix, b: &ProcessMatrix) -> f64 {
    let prod = linalg::psd_sqrt(a.matrix()) * linalg::psd_sqrt(b.matrix());
    let f: f64 = prod.svd(false, false).singular_values.iter().sum();
    (f * f).clamp(0.0, 1.0)
}

/// Pauli-diagonal χ spectrum `(χ0, χ1, χ2, χ3)` of the channel whose D matrix
/// is `diag(d)`.
pub fn chi_spectrum_from_d(d: &DVector) -> [f64; 4] {
    let [a, b, c] = d.to_array();
    [
        0.25 * (1.0 + a + b + c),
        0.25 * (1.0 + a - b - c),
        0.25 * (1.0 - a + b - c),
        0.25 * (1.0 - a - b + c),
    ]
}

/// Process fidelity between the rotation-stripped channels with D vectors `a`
/// and `b`. Both are brought to canonical form first, so the result ignores
/// polarization rotations before and after either channel.
pub fn canonical_fidelity(a: &DVector, b: &DVector) -> f64 {
    let sa = chi_spectrum_from_d(&canonicalize_sign_flips(a.canonical()));
    let sb = chi_spectrum_from_d(&canonicalize_sign_flips(b.canonical()));
    let f: f64 = sa.iter().zip(&sb).map(|(x, y)| (x.max(0.0) * y.max(0.0)).sqrt()).sum();
    (f * f).clamp(0.0, 1.0)
}

/// [`canonical_fidelity`] of the D vectors of two process matrices.
pub fn fidelity_up_to_rotations(a: &ProcessMatrix, b: &ProcessMatrix) -> f64 {
    canonical_fidelity(&d_vector(&d_matrix_from_chi(a).d), &d_vector(&d_matrix_from_chi(b).d))
}

/// A list of Kraus operators.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    operators: Vec<CMatrix2>,
}

impl KrausSet {
    pub fn new(operators: Vec<CMatrix2>) -> Self {
        KrausSet { operators }
    }

    pub fn operators(&self) -> &[CMatrix2] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// Frobenius norm of `Σ K†K − I`.
    pub fn completeness_deviation(&self) -> f64 {
        let sum = self
            .operators
            .iter()
            .fold(CMatrix2::zeros(), |acc, k| acc + k.adjoint() * k);
        linalg::frobenius(&(sum - CMatrix2::identity()))
    }

    pub fn apply(&self, rho: &CMatrix2) -> CMatrix2 {
        self.operators
            .iter()
            .fold(CMatrix2::zeros(), |acc, k| acc + k * rho * k.adjoint())
    }

    /// Drops operators whose Frobenius norm is below `tol`.
    pub fn pruned(&self, tol: f64) -> KrausSet {
        KrausSet::new(
            self.operators
                .iter()
                .filter(|k| linalg::frobenius(k) > tol)
                .copied()
                .collect(),
        )
    }
}

/// `χ_mn = Σ_k c_km c*_kn` where `K_k = Σ_m c_km σ_m`.
pub fn chi_from_kraus(k: &KrausSet) -> Result<ProcessMatrix> {
    let dev = k.completeness_deviation();
    if dev > KRAUS_TOL {
        return Err(Error::IncompleteKraus(dev));
    }
    let s = linalg::paulis();
    let mut m = CMatrix4::zeros();
    for op in k.operators() {
        let c: Vec<C64> = s.iter().map(|p| linalg::trace(&(p * op)) * 0.5).collect();
        for a in 0..4 {
            for b in 0..4 {
                m[(a, b)] += c[a] * c[b].conj();
            }
        }
    }
    Ok(ProcessMatrix::from_trusted(m))
}

/// Lexicographically largest element of the orbit of `d` under flipping the
/// signs of two components. Components closer than `1e-12` compare equal so
/// that round-off near zero does not pick a different orbit element.
pub fn canonicalize_sign_flips(d: DVector) -> DVector {
    const TIE: f64 = 1e-12;
    let cmp = |x: &[f64; 3], y: &[f64; 3]| {
        for k in 0..3 {
            if (x[k] - y[k]).abs() > TIE {
                return x[k].total_cmp(&y[k]);
            }
        }
        std::cmp::Ordering::Equal
    };
    let [a, b, c] = d.to_array().map(|v| if v == 0.0 { 0.0 } else { v });
    let orbit = [[a, b, c], [-a, -b, c], [-a, b, -c], [a, -b, -c]];
    let mut best = orbit[0];
    for cand in &orbit[1..] {
        if cmp(cand, &best) == std::cmp::Ordering::Greater {
            best = *cand;
        }
    }
    DVector::from_array(best.map(|v| if v == 0.0 { 0.0 } else { v }))
}

/// A Haar-like random channel with `rank` Kraus operators, built from a random
/// isometry `C² → C^(2·rank)`.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, rank: usize) -> KrausSet {
    assert!(rank >= 1, "rank must be positive");
    let rows = 2 * rank;
    let mut gauss = || C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let mut cols: Vec<Vec<C64>> = (0..2).map(|_| (0..rows).map(|_| gauss()).collect()).collect();
    // Gram-Schmidt on the two columns.
    let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let n0 = norm(&cols[0]);
    cols[0].iter_mut().for_each(|z| *z /= n0);
    let overlap: C64 = cols[0].iter().zip(&cols[1]).map(|(a, b)| a.conj() * b).sum();
    let first = cols[0].clone();
    cols[1].iter_mut().zip(&first).for_each(|(b, a)| *b -= overlap * a);
    let n1 = norm(&cols[1]);
    cols[1].iter_mut().for_each(|z| *z /= n1);
    let ops = (0..rank)
        .map(|k| CMatrix2::from_fn(|r, c| cols[c][2 * k + r]))
        .collect();
    KrausSet::new(ops)
}
