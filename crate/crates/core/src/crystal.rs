//! The four-crystal channel: birefringent crystals separated by half-wave
//! plates, simulated on the joint polarization ⊗ temporal-bin space.
//!
//! Each crystal delays the component polarized along its slow axis by an
//! integer number of base delays. Temporal bins are treated as exactly
//! orthogonal, so tracing them out turns the amplitudes landing in bin `m`
//! into the Kraus operator `K_m`.

use log::warn;
use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channel::{KrausSet, ProcessMatrix, chi_from_kraus};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix2, ZERO};

/// Base delay per millimetre of calcite at 780 nm, in femtoseconds.
pub const CALCITE_DELAY_FS_PER_MM: f64 = 570.0;

/// Angles of the three half-wave plates, in degrees, each reduced to
/// `[0°, 180°)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct WavePlateAngles {
    theta1: f64,
    theta2: f64,
    theta3: f64,
}

fn reduce_degrees(theta: f64) -> f64 {
    let r = theta.rem_euclid(180.0);
    // rem_euclid can round up to exactly 180 for tiny negative inputs.
    if r >= 180.0 { 0.0 } else { r }
}

impl WavePlateAngles {
    pub fn new(theta1: f64, theta2: f64, theta3: f64) -> Self {
        WavePlateAngles {
            theta1: reduce_degrees(theta1),
            theta2: reduce_degrees(theta2),
            theta3: reduce_degrees(theta3),
        }
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn theta2(&self) -> f64 {
        self.theta2
    }

    pub fn theta3(&self) -> f64 {
        self.theta3
    }

    pub fn degrees(&self) -> [f64; 3] {
        [self.theta1, self.theta2, self.theta3]
    }

    pub fn radians(&self) -> [f64; 3] {
        self.degrees().map(f64::to_radians)
    }
}

impl From<[f64; 3]> for WavePlateAngles {
    fn from(a: [f64; 3]) -> Self {
        WavePlateAngles::new(a[0], a[1], a[2])
    }
}

impl From<WavePlateAngles> for [f64; 3] {
    fn from(a: WavePlateAngles) -> Self {
        a.degrees()
    }
}

/// Which linear polarization travels along a crystal's slow axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlowAxis {
    Horizontal,
    Vertical,
}

impl SlowAxis {
    fn index(self) -> usize {
        match self {
            SlowAxis::Horizontal => 0,
            SlowAxis::Vertical => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crystal {
    /// Delay of the slow axis in units of the base delay.
    pub delay_bins: usize,
    pub slow_axis: SlowAxis,
    /// Extra phase on the slow axis, radians.
    #[serde(default)]
    pub residual_phase: f64,
}

/// Four crystals with a half-wave plate between each consecutive pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CrystalStackDoc", into = "CrystalStackDoc")]
pub struct CrystalStack {
    crystals: [Crystal; 4],
    base_delay_fs: f64,
}

#[derive(Serialize, Deserialize)]
struct CrystalStackDoc {
    crystals: Vec<Crystal>,
    #[serde(default = "default_base_delay")]
    base_delay_fs: f64,
}

fn default_base_delay() -> f64 {
    CALCITE_DELAY_FS_PER_MM
}

impl TryFrom<CrystalStackDoc> for CrystalStack {
    type Error = Error;

    fn try_from(doc: CrystalStackDoc) -> Result<Self> {
        let crystals: [Crystal; 4] = doc.crystals.try_into().map_err(|v: Vec<Crystal>| {
            Error::InvalidArgument(format!("expected 4 crystals, got {}", v.len()))
        })?;
        CrystalStack::new(crystals, doc.base_delay_fs)
    }
}

impl From<CrystalStack> for CrystalStackDoc {
    fn from(s: CrystalStack) -> Self {
        CrystalStackDoc {
            crystals: s.crystals.to_vec(),
            base_delay_fs: s.base_delay_fs,
        }
    }
}

impl Default for CrystalStack {
    /// 1, 2, 2, 1 mm crystals; the fast axes of the first and third are
    /// parallel to the slow axes of the second and fourth.
    fn default() -> Self {
        let c = |delay_bins, slow_axis| Crystal {
            delay_bins,
            slow_axis,
            residual_phase: 0.0,
        };
        CrystalStack {
            crystals: [
                c(1, SlowAxis::Vertical),
                c(2, SlowAxis::Horizontal),
                c(2, SlowAxis::Vertical),
                c(1, SlowAxis::Horizontal),
            ],
            base_delay_fs: CALCITE_DELAY_FS_PER_MM,
        }
    }
}

impl CrystalStack {
    pub fn new(crystals: [Crystal; 4], base_delay_fs: f64) -> Result<Self> {
        if crystals.iter().any(|c| c.delay_bins == 0) {
            return Err(Error::InvalidArgument("crystal delays must be positive".into()));
        }
        if !(base_delay_fs > 0.0) {
            return Err(Error::InvalidArgument("base delay must be positive".into()));
        }
        if crystals.iter().any(|c| !c.residual_phase.is_finite()) {
            return Err(Error::InvalidArgument("residual phase must be finite".into()));
        }
        Ok(CrystalStack { crystals, base_delay_fs })
    }

    pub fn crystals(&self) -> &[Crystal; 4] {
        &self.crystals
    }

    pub fn base_delay_fs(&self) -> f64 {
        self.base_delay_fs
    }

    /// `1 + Σ delay_bins`.
    pub fn bin_count(&self) -> usize {
        1 + self.crystals.iter().map(|c| c.delay_bins).sum::<usize>()
    }

    /// Whether the base delay is long enough (at least twice the coherence
    /// time) for the temporal bins to count as orthogonal. Logs a warning
    /// when it is not.
    pub fn bins_orthogonal(&self, coherence_time_fs: f64) -> bool {
        let ok = self.base_delay_fs >= 2.0 * coherence_time_fs;
        if !ok {
            warn!(
                "base delay {} fs is shorter than twice the coherence time {} fs; \
                 temporal bins overlap and the channel model is approximate",
                self.base_delay_fs, coherence_time_fs
            );
        }
        ok
    }
}

/// Polarization amplitudes across the temporal bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalState {
    /// `amplitudes[pol][bin]` with `pol` 0 = h, 1 = v.
    amplitudes: [Vec<C64>; 2],
}

impl TemporalState {
    /// A polarization state `(a_h, a_v)` in bin 0.
    pub fn new(bins: usize, polarization: [C64; 2]) -> Self {
        let mut amplitudes = [vec![ZERO; bins], vec![ZERO; bins]];
        amplitudes[0][0] = polarization[0];
        amplitudes[1][0] = polarization[1];
        TemporalState { amplitudes }
    }

    pub fn bins(&self) -> usize {
        self.amplitudes[0].len()
    }

    pub fn amplitude(&self, pol: usize, bin: usize) -> C64 {
        self.amplitudes[pol][bin]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// Shifts the slow-axis component later by `delay_bins` and applies the
    /// residual phase to it.
    pub fn pass_crystal(&mut self, crystal: &Crystal) {
        let slow = &mut self.amplitudes[crystal.slow_axis.index()];
        let shift = crystal.delay_bins;
        assert!(
            slow[slow.len() - shift..].iter().all(|z| *z == ZERO),
            "temporal state overflows its bins"
        );
        slow.rotate_right(shift);
        if crystal.residual_phase != 0.0 {
            let phase = C64::from_polar(1.0, crystal.residual_phase);
            slow.iter_mut().for_each(|z| *z *= phase);
        }
    }

    /// Applies a real 2×2 Jones matrix bin by bin.
    pub fn pass_plate(&mut self, jones: &Matrix2<f64>) {
        let [h, v] = &mut self.amplitudes;
        for (a, b) in h.iter_mut().zip(v.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = x * jones[(0, 0)] + y * jones[(0, 1)];
            *b = x * jones[(1, 0)] + y * jones[(1, 1)];
        }
    }
}

/// Half-wave plate at `theta_deg` with the global phase dropped:
/// `[[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]`.
pub fn hwp_matrix(theta_deg: f64) -> Matrix2<f64> {
    let (s, c) = (2.0 * theta_deg.to_radians()).sin_cos();
    Matrix2::new(c, s, s, -c)
}

/// Kraus operators of the stack, one per temporal bin (zero operators
/// included, so the set always has `stack.bin_count()` entries).
pub fn four_crystal_kraus(angles: &WavePlateAngles, stack: &CrystalStack) -> KrausSet {
    let bins = stack.bin_count();
    let plates = angles.degrees().map(hwp_matrix);
    let columns: Vec<TemporalState> = (0..2)
        .map(|input| {
            let mut pol = [ZERO; 2];
            pol[input] = C64::new(1.0, 0.0);
            let mut state = TemporalState::new(bins, pol);
            for (k, crystal) in stack.crystals().iter().enumerate() {
                state.pass_crystal(crystal);
                if let Some(plate) = plates.get(k) {
                    state.pass_plate(plate);
                }
            }
            state
        })
        .collect();
    let ops = (0..bins)
        .map(|bin| CMatrix2::from_fn(|out, input| columns[input].amplitude(out, bin)))
        .collect();
    KrausSet::new(ops)
}

/// Process matrix of the default stack at the given plate angles.
pub fn four_crystal_channel(angles: &WavePlateAngles) -> ProcessMatrix {
    four_crystal_channel_with(angles, &CrystalStack::default())
}

pub fn four_crystal_channel_with(angles: &WavePlateAngles, stack: &CrystalStack) -> ProcessMatrix {
    chi_from_kraus(&four_crystal_kraus(angles, stack))
        .expect("crystal and plate evolution is unitary on the extended space")
}

/// Closed-form D triple of the default stack, valid up to rotations that flip
/// the sign of two entries.
pub fn analytic_d(angles: &WavePlateAngles) -> crate::channel::DVector {
    let [t1, t2, t3] = angles.radians();
    let (s4_1, c4_1) = (4.0 * t1).sin_cos();
    let (s4_2, c4_2) = (4.0 * t2).sin_cos();
    let (s4_3, c4_3) = (4.0 * t3).sin_cos();
    let (s2_2, c2_2) = (2.0 * t2).sin_cos();
    let c2_1 = (2.0 * t1).cos();
    let c2_3 = (2.0 * t3).cos();
    let (s13, c13) = (2.0 * t1 + 2.0 * t3).sin_cos();

    let d1 = -s4_1 * s4_3 * c2_2 * c2_2 + c4_1 * c4_2 * c4_3;
    let cross = s4_2 * s13 * c2_1 * c2_3;
    let common = c2_2 * c2_2 * c13 * c13 + 0.5 * s4_1 * s4_3 * s2_2 * s2_2;
    crate::channel::DVector::new(d1, cross - common, -cross - common)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DVector, canonicalize_sign_flips, d_matrix_from_chi, d_vector};
    use crate::linalg::frobenius;
    use crate::polarization::{BasisLabel, basis_state};
    use proptest::prelude::*;

    fn canon(d: DVector) -> DVector {
        canonicalize_sign_flips(d.canonical())
    }

    #[test]
    fn hwp_examples() {
        assert_eq!(hwp_matrix(0.0), Matrix2::new(1.0, 0.0, 0.0, -1.0));
        let q = hwp_matrix(45.0);
        assert!((q - Matrix2::new(0.0, 1.0, 1.0, 0.0)).norm() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((hwp_matrix(22.5) - Matrix2::new(s, s, s, -s)).norm() < 1e-15);
        for theta in [0.0, 13.0, 71.5, 133.0] {
            let m = hwp_matrix(theta);
            assert!((m.transpose() * m - Matrix2::identity()).norm() < 1e-14);
            assert!((m.determinant() + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn angles_reduce_mod_180() {
        let a = WavePlateAngles::new(190.0, -10.0, 360.0);
        assert_eq!(a.degrees(), [10.0, 170.0, 0.0]);
        assert!(WavePlateAngles::new(-1e-18, 0.0, 0.0).theta1() < 180.0);
    }

    #[test]
    fn default_stack_has_seven_bins() {
        assert_eq!(CrystalStack::default().bin_count(), 7);
        let k = four_crystal_kraus(&WavePlateAngles::new(10.0, 20.0, 30.0), &CrystalStack::default());
        assert_eq!(k.len(), 7);
        assert!(k.pruned(1e-12).len() <= 7);
    }

    #[test]
    fn zero_angles_route_both_polarizations_to_bin_three() {
        // h is delayed by crystals 2 and 4 (2 + 1), v by crystals 1 and 3 (1 + 2).
        let k = four_crystal_kraus(&WavePlateAngles::new(0.0, 0.0, 0.0), &CrystalStack::default());
        let nonzero: Vec<usize> = (0..k.len())
            .filter(|&m| frobenius(&k.operators()[m]) > 1e-12)
            .collect();
        assert_eq!(nonzero, vec![3]);
        let expected = crate::linalg::pauli(1);
        assert!((k.operators()[3] - expected).norm() < 1e-15);
    }

    #[test]
    fn zero_angle_channel_d_vector() {
        let chi = four_crystal_channel(&WavePlateAngles::new(0.0, 0.0, 0.0));
        let d = d_matrix_from_chi(&chi).d;
        assert!(d.raw_diagonal().max_abs_diff(&DVector::new(1.0, -1.0, -1.0)) < 1e-15);
        assert!(canon(d_vector(&d)).max_abs_diff(&DVector::new(1.0, 1.0, 1.0)) < 1e-15);
    }

    #[test]
    fn analytic_examples() {
        let zero = analytic_d(&WavePlateAngles::new(0.0, 0.0, 0.0));
        assert_eq!(zero, DVector::new(1.0, -1.0, -1.0));
        let mid = analytic_d(&WavePlateAngles::new(22.5, 45.0, 22.5));
        assert!(mid.max_abs_diff(&DVector::new(0.0, -0.5, -0.5)) < 1e-15);
        assert!(canonicalize_sign_flips(mid).max_abs_diff(&DVector::new(0.0, 0.5, 0.5)) < 1e-15);
        // On the dephasing locus at small angles one entry stays near -1 and
        // the other two agree.
        let locus = analytic_d(&WavePlateAngles::new(4.5, 9.0, 4.5));
        assert!(locus.d3.abs() > 0.999);
        assert!((locus.d1.abs() - locus.d2.abs()).abs() < 1e-3);
    }

    #[test]
    fn simulated_mid_point_matches_analytic() {
        let angles = WavePlateAngles::new(22.5, 45.0, 22.5);
        let d = d_matrix_from_chi(&four_crystal_channel(&angles)).d;
        assert!(canon(d_vector(&d)).max_abs_diff(&canon(analytic_d(&angles))) < 1e-12);
        assert!(canon(d_vector(&d)).max_abs_diff(&DVector::new(0.5, 0.5, 0.0)) < 1e-12);
    }

    #[test]
    fn simulated_d_is_diagonal_with_second_and_third_axes_swapped() {
        // With σ2 = p/m and σ3 = r/l the simulator's D matrix is
        // diag(D1, D3, D2) of the closed form.
        let angles = WavePlateAngles::new(31.0, 77.0, 140.0);
        let d = *d_matrix_from_chi(&four_crystal_channel(&angles)).d.matrix();
        let a = analytic_d(&angles);
        let expected = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(a.d1, a.d3, a.d2));
        assert!((d - expected).norm() < 1e-12);
    }

    #[test]
    fn locus_channel_keeps_s2_magnitude() {
        for theta1 in [0.0, 2.0, 5.0, 9.0] {
            let chi = four_crystal_channel(&WavePlateAngles::new(theta1, 2.0 * theta1, theta1));
            let out = crate::channel::apply_channel(&chi, &basis_state(BasisLabel::P))
                .unwrap()
                .stokes();
            assert!(out.s2 < -0.99, "theta1 {theta1}: S2 {}", out.s2);
        }
    }

    #[test]
    fn residual_phase_rotates_but_keeps_canonical_d() {
        let mut crystals = *CrystalStack::default().crystals();
        // Phases on the outer crystals commute out as rotations about σ1.
        crystals[0].residual_phase = 0.7;
        crystals[3].residual_phase = -1.1;
        let stack = CrystalStack::new(crystals, CALCITE_DELAY_FS_PER_MM).unwrap();
        let angles = WavePlateAngles::new(12.0, 50.0, 99.0);
        let plain = d_matrix_from_chi(&four_crystal_channel(&angles)).d;
        let tilted = d_matrix_from_chi(&four_crystal_channel_with(&angles, &stack)).d;
        assert!((plain.matrix() - tilted.matrix()).norm() > 1e-3);
        assert!(d_vector(&plain).max_abs_diff(&d_vector(&tilted)) < 1e-12);
    }

    #[test]
    fn bin_orthogonality_flag() {
        let stack = CrystalStack::default();
        assert!(stack.bins_orthogonal(180.0));
        assert!(!stack.bins_orthogonal(400.0));
    }

    #[test]
    fn stack_json_round_trip_and_validation() {
        let json = serde_json::to_string(&CrystalStack::default()).unwrap();
        let back: CrystalStack = serde_json::from_str(&json).unwrap();
        assert_eq!(back, CrystalStack::default());
        let three = r#"{"crystals":[{"delay_bins":1,"slow_axis":"vertical"}]}"#;
        assert!(serde_json::from_str::<CrystalStack>(three).is_err());
    }

    proptest! {
        #[test]
        fn kraus_completeness_and_norm(t1 in 0.0f64..180.0, t2 in 0.0f64..180.0, t3 in 0.0f64..180.0) {
            let k = four_crystal_kraus(&WavePlateAngles::new(t1, t2, t3), &CrystalStack::default());
            prop_assert!(k.completeness_deviation() < 1e-12);
            let chi = four_crystal_channel(&WavePlateAngles::new(t1, t2, t3));
            prop_assert!(chi.unitality_deviation() < 1e-10);
        }

        #[test]
        fn temporal_norm_preserved(t in 0.0f64..180.0, phase in -3.0f64..3.0) {
            let mut state = TemporalState::new(7, [C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
            state.pass_crystal(&Crystal { delay_bins: 2, slow_axis: SlowAxis::Vertical, residual_phase: phase });
            state.pass_plate(&hwp_matrix(t));
            state.pass_crystal(&Crystal { delay_bins: 1, slow_axis: SlowAxis::Horizontal, residual_phase: 0.0 });
            prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }
}
