//! Small dense complex linear-algebra helpers shared by the channel and
//! tomography code.
//!
//! The Pauli labelling follows the Stokes convention used throughout the crate:
//! `σ1` is the h/v axis, `σ2` the p/m axis and `σ3` the r/l axis. In the
//! computational basis {|h⟩, |v⟩} this is `σ1 = Z`, `σ2 = X`, `σ3 = Y`, which is
//! a right-handed set (`σ1 σ2 = i σ3`).

use nalgebra::{DMatrix as Dyn, Matrix2, Matrix4, SymmetricEigen};
pub use num_complex::Complex64 as C64;

pub type CMatrix2 = Matrix2<C64>;
pub type CMatrix4 = Matrix4<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Eigenvalues in `[SQRT_CLAMP, 0)` are numerical noise and are clamped to
/// zero when taking PSD square roots.
pub const SQRT_CLAMP: f64 = -1e-10;

/// Pauli operator `σ_index` (index 0 is the identity).
pub fn pauli(index: usize) -> CMatrix2 {
    match index {
        0 => CMatrix2::new(ONE, ZERO, ZERO, ONE),
        1 => CMatrix2::new(ONE, ZERO, ZERO, -ONE),
        2 => CMatrix2::new(ZERO, ONE, ONE, ZERO),
        3 => CMatrix2::new(ZERO, -I, I, ZERO),
        _ => panic!("pauli index {index} out of range"),
    }
}

pub fn paulis() -> [CMatrix2; 4] {
    [pauli(0), pauli(1), pauli(2), pauli(3)]
}

pub fn kron2(a: &CMatrix2, b: &CMatrix2) -> CMatrix4 {
    CMatrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// Largest absolute entry of `a - a†`.
pub fn hermiticity_error<const N: usize>(
    a: &nalgebra::SMatrix<C64, N, N>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..N {
        for c in 0..N {
            worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part<const N: usize>(
    a: &nalgebra::SMatrix<C64, N, N>,
) -> nalgebra::SMatrix<C64, N, N> {
    (a + a.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
///
/// Returns the eigenvalues and the matching eigenvectors as columns.
pub fn eigh<const N: usize>(
    a: &nalgebra::SMatrix<C64, N, N>,
) -> ([f64; N], nalgebra::SMatrix<C64, N, N>) {
    let h = hermitian_part(a);
    let eig = SymmetricEigen::new(Dyn::from_iterator(N, N, h.iter().copied()));
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut values = [0.0; N];
    let mut vectors = nalgebra::SMatrix::<C64, N, N>::zeros();
    for (k, &i) in order.iter().enumerate() {
        values[k] = eig.eigenvalues[i];
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn eigvalsh<const N: usize>(a: &nalgebra::SMatrix<C64, N, N>) -> [f64; N] {
    eigh(a).0
}

/// Square root of a PSD Hermitian matrix. Negative eigenvalues are clamped
/// to zero; callers validate positivity against `SQRT_CLAMP` beforehand.
pub fn psd_sqrt<const N: usize>(
    a: &nalgebra::SMatrix<C64, N, N>,
) -> nalgebra::SMatrix<C64, N, N> {
    let (values, vectors) = eigh(a);
    let mut out = nalgebra::SMatrix::<C64, N, N>::zeros();
    for k in 0..N {
        let s = values[k].max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (v * v.adjoint()).scale(s);
    }
    out
}

pub fn trace<const N: usize>(a: &nalgebra::SMatrix<C64, N, N>) -> C64 {
    (0..N).map(|k| a[(k, k)]).sum()
}

/// Frobenius norm of a complex matrix.
pub fn frobenius<const N: usize>(a: &nalgebra::SMatrix<C64, N, N>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
