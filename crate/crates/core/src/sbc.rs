//! Soleil-Babinet dephaser: delay geometry, the Gaussian wave-packet coherence
//! model, the resulting dephasing channel, and the S2 oscillation fit.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector as NVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channel::{KrausSet, ProcessMatrix, apply_channel, chi_from_kraus};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix2, ZERO};
use crate::optim::levenberg_marquardt;
use crate::polarization::DensityMatrix;

/// Speed of light in nm/fs.
pub const SPEED_OF_LIGHT_NM_PER_FS: f64 = 299.792458;
/// Speed of light in mm/fs.
pub const SPEED_OF_LIGHT_MM_PER_FS: f64 = 2.99792458e-4;
/// Quartz birefringence near 780 nm.
pub const QUARTZ_DELTA_N: f64 = 0.009;
/// Largest delay the wedge pair adds over its base path.
pub const WEDGE_SPAN_FS: f64 = 380.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpectralModel {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WavePacketDoc")]
pub struct WavePacket {
    center_wavelength_nm: f64,
    coherence_time_fs: f64,
    spectral_model: SpectralModel,
}

#[derive(Deserialize)]
struct WavePacketDoc {
    center_wavelength_nm: f64,
    coherence_time_fs: f64,
    #[serde(default)]
    spectral_model: SpectralModel,
}

impl TryFrom<WavePacketDoc> for WavePacket {
    type Error = Error;

    fn try_from(d: WavePacketDoc) -> Result<Self> {
        match d.spectral_model {
            SpectralModel::Gaussian => WavePacket::new(d.center_wavelength_nm, d.coherence_time_fs),
        }
    }
}

impl WavePacket {
    pub fn new(center_wavelength_nm: f64, coherence_time_fs: f64) -> Result<Self> {
        for (name, v) in [
            ("center wavelength", center_wavelength_nm),
            ("coherence time", coherence_time_fs),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(WavePacket {
            center_wavelength_nm,
            coherence_time_fs,
            spectral_model: SpectralModel::Gaussian,
        })
    }

    /// Heralded down-converted photons, τ = 180 fs at 780 nm.
    pub fn quantum() -> Self {
        WavePacket::new(780.0, 180.0).expect("valid preset")
    }

    /// Attenuated laser pulse. The coherence time is a placeholder shorter
    /// than the quantum preset.
    pub fn classical() -> Self {
        WavePacket::new(780.0, 120.0).expect("valid preset")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "quantum" => Ok(Self::quantum()),
            "classical" => Ok(Self::classical()),
            other => Err(Error::InvalidArgument(format!("unknown wave-packet preset `{other}`"))),
        }
    }

    pub fn center_wavelength_nm(&self) -> f64 {
        self.center_wavelength_nm
    }

    pub fn coherence_time_fs(&self) -> f64 {
        self.coherence_time_fs
    }

    pub fn spectral_model(&self) -> SpectralModel {
        self.spectral_model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compensator {
    Perpendicular,
    Omitted,
    Parallel,
}

/// Wedge pair plus optional rectangular compensator plate.
///
/// The birefringent path through the wedges is
/// `base_path_mm + translation_mm · tan(wedge_angle)`; `base_path_mm` is a
/// calibration constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbcGeometry {
    pub wedge_angle_deg: f64,
    pub translation_mm: f64,
    pub compensator: Compensator,
    pub delta_n: f64,
    pub compensator_length_mm: f64,
    #[serde(default = "default_base_path")]
    pub base_path_mm: f64,
}

fn default_base_path() -> f64 {
    9.0
}

impl Default for SbcGeometry {
    fn default() -> Self {
        SbcGeometry {
            wedge_angle_deg: 15.0,
            translation_mm: 0.0,
            compensator: Compensator::Perpendicular,
            delta_n: QUARTZ_DELTA_N,
            compensator_length_mm: 9.0,
            base_path_mm: default_base_path(),
        }
    }
}

impl SbcGeometry {
    /// Translation that adds [`WEDGE_SPAN_FS`] of delay.
    pub fn max_translation_mm(&self) -> f64 {
        WEDGE_SPAN_FS * SPEED_OF_LIGHT_MM_PER_FS
            / (self.delta_n * self.wedge_angle_deg.to_radians().tan())
    }

    /// Delay of the wedges alone.
    pub fn wedge_delay_fs(&self) -> f64 {
        let path = self.base_path_mm + self.translation_mm * self.wedge_angle_deg.to_radians().tan();
        path * self.delta_n / SPEED_OF_LIGHT_MM_PER_FS
    }

    pub fn compensator_delay_fs(&self) -> f64 {
        self.compensator_length_mm * self.delta_n / SPEED_OF_LIGHT_MM_PER_FS
    }
}

/// `t = LΔn/c`, with the compensator delay subtracted (perpendicular axes),
/// ignored (omitted) or added (parallel axes).
pub fn sbc_delay(geometry: &SbcGeometry) -> Result<f64> {
    let g = geometry;
    if !(g.delta_n.is_finite() && g.delta_n > 0.0) {
        return Err(Error::InvalidArgument(format!("delta_n must be positive, got {}", g.delta_n)));
    }
    if !(g.wedge_angle_deg > 0.0 && g.wedge_angle_deg < 90.0) {
        return Err(Error::InvalidArgument(format!(
            "wedge angle must lie in (0°, 90°), got {}",
            g.wedge_angle_deg
        )));
    }
    if !(g.base_path_mm >= 0.0 && g.compensator_length_mm >= 0.0) {
        return Err(Error::InvalidArgument("path lengths must be non-negative".into()));
    }
    let max = g.max_translation_mm();
    if !(g.translation_mm >= 0.0 && g.translation_mm <= max * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange(format!(
            "translation {} mm outside [0, {max:.4}] mm",
            g.translation_mm
        )));
    }
    let t = g.wedge_delay_fs();
    Ok(match g.compensator {
        Compensator::Perpendicular => t - g.compensator_delay_fs(),
        Compensator::Omitted => t,
        Compensator::Parallel => t + g.compensator_delay_fs(),
    })
}

/// `γ(t) = exp(−t²/(2τ²)) · exp(i·2πc·t/λ₀)`.
pub fn coherence(t_fs: f64, packet: &WavePacket) -> C64 {
    let tau = packet.coherence_time_fs;
    let envelope = (-t_fs * t_fs / (2.0 * tau * tau)).exp();
    let phase = 2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS * t_fs / packet.center_wavelength_nm;
    C64::from_polar(envelope, phase)
}

/// Dephasing probability `(1 − |γ(t)|)/2`.
pub fn sbc_dephasing_probability(t_fs: f64, packet: &WavePacket) -> f64 {
    0.5 * (1.0 - coherence(t_fs, packet).norm())
}

/// Kraus pair keeping the h/v populations and multiplying the h-v coherence
/// `ρ_hv` by `γ(t)`.
pub fn sbc_kraus(t_fs: f64, packet: &WavePacket) -> KrausSet {
    let g = coherence(t_fs, packet);
    let phase = C64::from_polar(1.0, -g.arg());
    let a = (0.5 * (1.0 + g.norm())).sqrt();
    let b = (0.5 * (1.0 - g.norm())).sqrt();
    let k0 = CMatrix2::new(C64::new(a, 0.0), ZERO, ZERO, phase * a);
    let k1 = CMatrix2::new(C64::new(b, 0.0), ZERO, ZERO, -phase * b);
    KrausSet::new(vec![k0, k1])
}

pub fn sbc_channel(t_fs: f64, packet: &WavePacket) -> ProcessMatrix {
    chi_from_kraus(&sbc_kraus(t_fs, packet)).expect("SBC Kraus pair is complete")
}

/// `(t, S₂)` of the channel output for each delay.
pub fn s2_curve(t_samples: &[f64], packet: &WavePacket, input: &DensityMatrix) -> Vec<(f64, f64)> {
    t_samples
        .iter()
        .map(|&t| {
            let out = apply_channel(&sbc_channel(t, packet), input).expect("SBC channel is physical");
            (t, out.stokes().s2)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthFit {
    pub wavelength_nm: f64,
    /// Standard error of `wavelength_nm`.
    pub uncertainty_nm: f64,
    pub amplitude: f64,
    /// Fitted envelope width; infinite when the data show no decay.
    pub envelope_fs: f64,
    pub phase_rad: f64,
    pub rms_residual: f64,
}

/// Residual RMS above this fraction of the signal RMS rejects the fit.
pub const FIT_RESIDUAL_LIMIT: f64 = 0.5;

/// Fits `A·exp(−κt²)·cos(2πc·t/λ + φ₀)` to `(t_fs, S₂)` samples.
///
/// The starting wavelength comes from a linear least-squares scan over
/// 300-3000 nm.
pub fn fit_wavelength(samples: &[(f64, f64)]) -> Result<WavelengthFit> {
    if samples.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|(t, s)| !t.is_finite() || !s.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let n = ts.len();
    let span = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - ts.iter().cloned().fold(f64::INFINITY, f64::min);
    if span <= 0.0 {
        return Err(Error::InsufficientData("samples must span a nonzero delay range".into()));
    }

    // Linear scan in optical frequency ν = c/λ (cycles per fs).
    let (nu_lo, nu_hi) = (SPEED_OF_LIGHT_NM_PER_FS / 3000.0, SPEED_OF_LIGHT_NM_PER_FS / 300.0);
    let steps = (((nu_hi - nu_lo) * span * 20.0).ceil() as usize).clamp(200, 200_000);
    let mut best = (f64::INFINITY, nu_lo, 0.0, 0.0);
    for k in 0..=steps {
        let nu = nu_lo + (nu_hi - nu_lo) * k as f64 / steps as f64;
        let (mut cc, mut ss, mut cs, mut yc, mut ysn) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&t, &y) in ts.iter().zip(&ys) {
            let (s, c) = (2.0 * PI * nu * t).sin_cos();
            cc += c * c;
            ss += s * s;
            cs += c * s;
            yc += y * c;
            ysn += y * s;
        }
        let det = cc * ss - cs * cs;
        if det.abs() < 1e-12 * (cc * ss).max(1e-300) {
            continue;
        }
        let a = (yc * ss - ysn * cs) / det;
        let b = (ysn * cc - yc * cs) / det;
        let resid: f64 = ts
            .iter()
            .zip(&ys)
            .map(|(&t, &y)| {
                let (s, c) = (2.0 * PI * nu * t).sin_cos();
                (y - a * c - b * s).powi(2)
            })
            .sum();
        if resid < best.0 {
            best = (resid, nu, a, b);
        }
    }
    let (_, nu0, a0, b0) = best;
    // y ≈ a cos − b·(−sin) → amplitude √(a²+b²), phase atan2(−b, a).
    let p0 = [
        a0.hypot(b0),
        0.0,
        SPEED_OF_LIGHT_NM_PER_FS / nu0,
        (-b0).atan2(a0),
    ];

    let model = |p: &[f64], t: f64| {
        let w = 2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS / p[2];
        p[0] * (-p[1] * t * t).exp() * (w * t + p[3]).cos()
    };
    let residuals = |p: &[f64]| NVector::from_iterator(n, ts.iter().zip(&ys).map(|(&t, &y)| model(p, t) - y));
    let jacobian = |p: &[f64]| {
        let w = 2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS / p[2];
        DMatrix::from_fn(n, 4, |i, j| {
            let t = ts[i];
            let env = (-p[1] * t * t).exp();
            let (s, c) = (w * t + p[3]).sin_cos();
            match j {
                0 => env * c,
                1 => -t * t * p[0] * env * c,
                2 => p[0] * env * s * w * t / p[2],
                _ => -p[0] * env * s,
            }
        })
    };
    let fit = levenberg_marquardt(residuals, jacobian, &p0, 500);
    let p = &fit.params;
    if !fit.converged || p.iter().any(|v| !v.is_finite()) || p[2] <= 0.0 {
        return Err(Error::FitDiverged("least-squares iteration did not converge".into()));
    }
    let rms = (fit.cost / n as f64).sqrt();
    let signal = (ys.iter().map(|y| y * y).sum::<f64>() / n as f64).sqrt();
    if !(rms <= FIT_RESIDUAL_LIMIT * signal) {
        return Err(Error::FitDiverged(format!(
            "residual RMS {rms:.3e} exceeds {FIT_RESIDUAL_LIMIT} of signal RMS {signal:.3e}"
        )));
    }
    let dof = n.saturating_sub(4).max(1) as f64;
    let sigma2 = fit.cost / dof;
    let cov = fit
        .normal_matrix
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::FitDiverged("singular normal matrix".into()))?;
    let var_lambda = cov[(2, 2)] * sigma2;
    let (amplitude, phase) = if p[0] < 0.0 {
        (-p[0], p[3] + PI)
    } else {
        (p[0], p[3])
    };
    Ok(WavelengthFit {
        wavelength_nm: p[2],
        uncertainty_nm: var_lambda.max(0.0).sqrt(),
        amplitude,
        envelope_fs: if p[1] > 0.0 { (0.5 / p[1]).sqrt() } else { f64::INFINITY },
        phase_rad: (phase + PI).rem_euclid(2.0 * PI) - PI,
        rms_residual: rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{d_matrix_from_chi, d_vector, dephasing_probability};
    use crate::polarization::{BasisLabel, basis_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Normalized overlap `∫ S(ω) e^{iωt} dω / ∫ S(ω) dω` for a Gaussian power
    /// spectrum of rms width `1/τ`, by trapezoidal quadrature.
    fn overlap_by_quadrature(t: f64, packet: &WavePacket) -> C64 {
        let w0 = 2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS / packet.center_wavelength_nm();
        let sw = 1.0 / packet.coherence_time_fs();
        let m = 4000;
        let (lo, hi) = (w0 - 10.0 * sw, w0 + 10.0 * sw);
        let h = (hi - lo) / m as f64;
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for k in 0..=m {
            let w = lo + h * k as f64;
            let weight = if k == 0 || k == m { 0.5 } else { 1.0 };
            let s = (-(w - w0).powi(2) / (2.0 * sw * sw)).exp() * weight;
            num += C64::from_polar(s, w * t);
            den += s;
        }
        num / den
    }

    #[test]
    fn coherence_matches_overlap_integral() {
        let packet = WavePacket::quantum();
        for t in [0.0, 1.3, 90.0, 180.0, 400.0] {
            let d = coherence(t, &packet) - overlap_by_quadrature(t, &packet);
            assert!(d.norm() < 1e-9, "t {t}: {d}");
        }
    }

    #[test]
    fn dephasing_probability_examples() {
        let packet = WavePacket::quantum();
        assert!(sbc_dephasing_probability(0.0, &packet).abs() < 1e-15);
        let p_tau = sbc_dephasing_probability(180.0, &packet);
        assert!((p_tau - 0.5 * (1.0 - (-0.5f64).exp())).abs() < 1e-12);
        assert!((p_tau - 0.1967).abs() < 1e-4);
        assert!((sbc_dephasing_probability(6.0 * 180.0, &packet) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn channel_is_pure_dephasing() {
        let packet = WavePacket::classical();
        for t in [0.0, 37.0, 120.0, 250.0, 900.0] {
            let chi = sbc_channel(t, &packet);
            let eig = chi.eigenvalues();
            assert!(eig[2].abs() < 1e-10 && eig[3].abs() < 1e-10);
            // Support on the σ0/σ1 block only.
            for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3), (2, 2), (3, 3), (2, 3)] {
                assert!(chi.matrix()[(i, j)].norm() < 1e-14);
            }
            let p = dephasing_probability(&chi).unwrap();
            assert!((p - sbc_dephasing_probability(t, &packet)).abs() < 1e-12);
            let d = d_vector(&d_matrix_from_chi(&chi).d);
            let x = 1.0 - 2.0 * p;
            assert!(d.max_abs_diff(&crate::channel::DVector::new(1.0, x, x)) < 1e-12);
        }
        let id = sbc_channel(0.0, &packet);
        assert!((id.matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn s2_curve_examples() {
        let packet = WavePacket::quantum();
        let p = basis_state(BasisLabel::P);
        let half = packet.center_wavelength_nm() / (2.0 * SPEED_OF_LIGHT_NM_PER_FS);
        let curve = s2_curve(&[0.0, half, 50.0], &packet, &p);
        assert!((curve[0].1 - 1.0).abs() < 1e-14);
        assert!((curve[1].1 + coherence(half, &packet).norm()).abs() < 1e-12);
        assert!((curve[2].1 - coherence(50.0, &packet).re).abs() < 1e-12);
    }

    #[test]
    fn shorter_packet_dephases_first() {
        let quantum = WavePacket::quantum();
        let classical = WavePacket::classical();
        for t in [50.0, 150.0, 300.0] {
            assert!(sbc_dephasing_probability(t, &classical) > sbc_dephasing_probability(t, &quantum));
        }
    }

    #[test]
    fn delay_ranges() {
        let mut g = SbcGeometry { base_path_mm: 0.0, ..SbcGeometry::default() };
        let t = sbc_delay(&g).unwrap();
        assert!((t.abs() - 270.2).abs() < 0.5, "{t}");

        g = SbcGeometry::default();
        let max = g.max_translation_mm();
        let range = |c: Compensator| {
            let lo = sbc_delay(&SbcGeometry { compensator: c, ..g }).unwrap();
            let hi = sbc_delay(&SbcGeometry { compensator: c, translation_mm: max, ..g }).unwrap();
            (lo, hi)
        };
        let (lo, hi) = range(Compensator::Perpendicular);
        assert!(lo.abs() < 1e-9 && (hi - 380.0).abs() < 1e-9);
        let (lo, hi) = range(Compensator::Omitted);
        assert!((lo - 270.0).abs() < 5.0 && (hi - 650.0).abs() < 5.0);
        let (lo, hi) = range(Compensator::Parallel);
        assert!((lo - 540.0).abs() < 15.0 && (hi - 920.0).abs() < 5.0);

        g.translation_mm = max * 1.01;
        assert!(matches!(sbc_delay(&g), Err(Error::OutOfRange(_))));
        g.translation_mm = -0.1;
        assert!(matches!(sbc_delay(&g), Err(Error::OutOfRange(_))));
    }

    fn synthetic(lambda: f64, noise: f64, seed: u64) -> Vec<(f64, f64)> {
        let packet = WavePacket::new(lambda, 180.0).unwrap();
        let period = lambda / SPEED_OF_LIGHT_NM_PER_FS;
        let ts: Vec<f64> = (0..60).map(|i| i as f64 * 4.0 * period / 59.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        s2_curve(&ts, &packet, &basis_state(BasisLabel::P))
            .into_iter()
            .map(|(t, s)| (t, if noise > 0.0 { s + normal.sample(&mut rng) } else { s }))
            .collect()
    }

    #[test]
    fn fit_recovers_noiseless_wavelength() {
        let fit = fit_wavelength(&synthetic(780.0, 0.0, 0)).unwrap();
        assert!((fit.wavelength_nm / 780.0 - 1.0).abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn fit_with_noise_within_one_percent() {
        for seed in 0..20 {
            let fit = fit_wavelength(&synthetic(780.0, 0.02, seed)).unwrap();
            assert!((fit.wavelength_nm / 780.0 - 1.0).abs() < 0.01, "seed {seed}: {fit:?}");
            assert!(fit.uncertainty_nm > 0.0);
        }
    }

    #[test]
    fn fit_rejects_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let samples: Vec<(f64, f64)> = (0..40).map(|i| (i as f64, normal.sample(&mut rng))).collect();
        assert!(fit_wavelength(&samples).is_err());
        assert!(matches!(fit_wavelength(&samples[..5]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn wave_packet_validation() {
        assert!(WavePacket::new(780.0, 0.0).is_err());
        assert!(WavePacket::new(-1.0, 10.0).is_err());
        let json = serde_json::to_string(&WavePacket::quantum()).unwrap();
        let back: WavePacket = serde_json::from_str(&json).unwrap();
        assert_eq!(back, WavePacket::quantum());
        assert!(serde_json::from_str::<WavePacket>(r#"{"center_wavelength_nm":780,"coherence_time_fs":-2}"#).is_err());
    }
}
