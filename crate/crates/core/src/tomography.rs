//! Simulated photon counting and maximum-likelihood state and process
//! tomography with Monte-Carlo error bars.
//!
//! Channels are probed with the inputs {h, v, p, r} and every output is
//! measured with the six projectors {h, v, p, m, r, l}.

use std::fmt;
use std::str::FromStr;

use nalgebra::SMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ProcessMatrix, process_fidelity};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix2, CMatrix4};
use crate::optim::{LbfgsOptions, LbfgsStatus, lbfgs};
use crate::polarization::{BasisLabel, DensityMatrix, basis_projector, basis_state};

pub const INPUTS: [BasisLabel; 4] = [BasisLabel::H, BasisLabel::V, BasisLabel::P, BasisLabel::R];
pub const PROJECTORS: [BasisLabel; 6] = BasisLabel::ALL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    Singles,
    Coincidence,
}

impl CountMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CountMode::Singles => "singles",
            CountMode::Coincidence => "coincidence",
        }
    }
}

impl fmt::Display for CountMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "singles" => Ok(CountMode::Singles),
            "coincidence" => Ok(CountMode::Coincidence),
            other => Err(Error::Parse(format!("unknown count mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub input: BasisLabel,
    pub projector: BasisLabel,
    pub mode: CountMode,
    #[serde(rename = "integration_s")]
    pub integration_time: f64,
    pub counts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub singles_rate: f64,
    pub coincidence_rate: f64,
    /// Stray light, added to singles only.
    pub background_rate: f64,
    /// Seconds per input/projector setting.
    pub integration_time: f64,
    pub mode: CountMode,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            singles_rate: 20_000.0,
            coincidence_rate: 1_000.0,
            background_rate: 2_000.0,
            integration_time: 10.0,
            mode: CountMode::Coincidence,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("singles_rate", self.singles_rate),
            ("coincidence_rate", self.coincidence_rate),
            ("background_rate", self.background_rate),
            ("integration_time", self.integration_time),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    fn signal_rate(&self) -> f64 {
        match self.mode {
            CountMode::Singles => self.singles_rate,
            CountMode::Coincidence => self.coincidence_rate,
        }
    }
}

/// A generator seeded by `seed` on its own stream, so that per-sample and
/// per-member randomness never overlaps.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Poisson means for every input/projector setting, in input-major order.
pub fn expected_counts(chi: &ProcessMatrix, config: &AcquisitionConfig) -> Vec<(BasisLabel, BasisLabel, f64)> {
    let t = config.integration_time;
    let background = match config.mode {
        CountMode::Singles => config.background_rate / PROJECTORS.len() as f64,
        CountMode::Coincidence => 0.0,
    };
    let mut out = Vec::with_capacity(INPUTS.len() * PROJECTORS.len());
    for input in INPUTS {
        let output = chi.apply_matrix(basis_state(input).matrix());
        for projector in PROJECTORS {
            let p = linalg::trace(&(basis_projector(projector) * output)).re.max(0.0);
            out.push((input, projector, (config.signal_rate() * p + background) * t));
        }
    }
    out
}

/// Poisson-distributed counts for the 24 settings; identical seeds give
/// identical records.
pub fn simulate_counts(chi: &ProcessMatrix, config: &AcquisitionConfig) -> Result<Vec<CountRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(expected_counts(chi, config)
        .into_iter()
        .map(|(input, projector, mean)| CountRecord {
            input,
            projector,
            mode: config.mode,
            integration_time: config.integration_time,
            counts: poisson(&mut rng, mean),
        })
        .collect())
}

/// Removes the per-projector share of the stray light from singles records,
/// rounding to the nearest count and clamping at zero.
pub fn subtract_background(records: &[CountRecord], background_rate: f64) -> Vec<CountRecord> {
    records
        .iter()
        .map(|r| match r.mode {
            CountMode::Coincidence => *r,
            CountMode::Singles => {
                let share = background_rate * r.integration_time / PROJECTORS.len() as f64;
                let counts = (r.counts as f64 - share).round().max(0.0) as u64;
                CountRecord { counts, ..*r }
            }
        })
        .collect()
}

/// Settings for the likelihood maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    /// Weight of `‖Σχ_mn σ_n σ_m − I‖²` in the process objective.
    pub penalty_weight: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { penalty_weight: 1e6, grad_tol: 1e-8, max_iter: 5000 }
    }
}

#[derive(Debug, Clone)]
pub struct MleFit<const N: usize> {
    /// Unit-trace estimate.
    pub estimate: SMatrix<C64, N, N>,
    pub iterations: usize,
    /// 0 when the first run converged, 1 after the perturbed restart.
    pub restarts: usize,
    /// Penalized normalized deviance after every accepted step.
    pub objective_history: Vec<f64>,
}

const POLISH_WINDOW: usize = 25;

type Penalty<'a, const N: usize> = &'a (dyn Fn(&SMatrix<C64, N, N>) -> (f64, SMatrix<C64, N, N>) + Sync);

fn t_from_params<const N: usize>(x: &[f64]) -> SMatrix<C64, N, N> {
    SMatrix::<C64, N, N>::from_fn(|i, j| C64::new(x[2 * (N * i + j)], x[2 * (N * i + j) + 1]))
}

/// Maps `df = Re tr(G dA)` with `A = T†T` onto the real parameters of `T`.
fn params_gradient<const N: usize>(g: &SMatrix<C64, N, N>, t: &SMatrix<C64, N, N>) -> Vec<f64> {
    let m = g * t.adjoint();
    let mut out = Vec::with_capacity(2 * N * N);
    for i in 0..N {
        for j in 0..N {
            out.push(2.0 * m[(j, i)].re);
            out.push(-2.0 * m[(j, i)].im);
        }
    }
    out
}

/// Minimizes the Poisson deviance `Σ (μ_k − n_k − n_k log(μ_k/n_k))` plus an
/// optional penalty on `T†T`, with `μ_k = c·tr(E_k T†T)`. `c` is fixed so that
/// `T = I` matches the total count. The objective is divided by the total
/// count so the gradient tolerance does not depend on the exposure.
fn mle<const N: usize>(
    terms: &[(SMatrix<C64, N, N>, f64)],
    penalty: Option<Penalty<'_, N>>,
    opts: &MleOptions,
) -> Result<MleFit<N>> {
    let total: f64 = terms.iter().map(|t| t.1).sum();
    if !(total > 0.0) {
        return Err(Error::InsufficientData("no counts recorded".into()));
    }
    let effect_trace: f64 = terms.iter().map(|t| linalg::trace(&t.0).re).sum();
    let c = total / effect_trace;

    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        let t = t_from_params::<N>(x);
        let a = t.adjoint() * t;
        let mut f = 0.0;
        let mut g = SMatrix::<C64, N, N>::zeros();
        for (e, n) in terms {
            let mu = c * (e * a).trace().re;
            if *n > 0.0 {
                if mu <= 0.0 {
                    return (f64::INFINITY, vec![0.0; 2 * N * N]);
                }
                // n·(u − ln(1 + u)) keeps full precision near the optimum.
                let u = (mu - n) / n;
                f += n * (u - u.ln_1p());
                g += e.scale(c * (mu - n) / mu);
            } else {
                f += mu;
                g += e.scale(c);
            }
        }
        if let Some(pen) = penalty {
            let (pv, pg) = pen(&a);
            f += pv;
            g += pg;
        }
        f /= total;
        g.unscale_mut(total);
        (f, params_gradient(&linalg::hermitian_part(&g), &t))
    };

    let mut x0 = vec![0.0; 2 * N * N];
    for i in 0..N {
        x0[2 * (N * i + i)] = 1.0;
    }
    let lopts = LbfgsOptions { memory: 20, grad_tol: opts.grad_tol, max_iter: opts.max_iter, min_progress: None };
    let mut run = lbfgs(objective, &x0, &lopts);
    let mut restarts = 0;
    if run.status != LbfgsStatus::Converged {
        log::debug!("likelihood fit stopped with {:?} at gradient {:.3e}; restarting", run.status, run.grad_inf_norm);
        let mut rng = stream_rng(0x5eed, 1);
        let start: Vec<f64> = run.x.iter().map(|v| v + 1e-3 * rng.random_range(-1.0..1.0)).collect();
        let mut history = run.history.clone();
        let iterations = run.iterations;
        run = lbfgs(objective, &start, &lopts);
        history.extend(run.history.iter().copied());
        run.history = history;
        run.iterations += iterations;
        restarts = 1;
    }
    if run.status != LbfgsStatus::Converged {
        return Err(Error::NonConvergence(run.grad_inf_norm));
    }
    // Directions that shrink a near-zero eigenvalue of T†T have gradients
    // proportional to its square root, so the tolerance above leaves them
    // loose. Polish until the line search can make no further progress.
    // Stop once the raw deviance gains less than 1e-6 over a window of steps.
    let polish_opts = LbfgsOptions {
        grad_tol: opts.grad_tol * 1e-6,
        max_iter: opts.max_iter,
        min_progress: Some((POLISH_WINDOW, 1e-6 / total)),
        ..lopts
    };
    let polish = lbfgs(objective, &run.x, &polish_opts);
    if polish.value <= run.value {
        run.history.extend(polish.history.iter().copied());
        run.iterations += polish.iterations;
        run.x = polish.x;
        run.value = polish.value;
    }
    let t = t_from_params::<N>(&run.x);
    let a = t.adjoint() * t;
    let tr = a.trace().re;
    Ok(MleFit {
        estimate: linalg::hermitian_part(&a.unscale(tr)),
        iterations: run.iterations,
        restarts,
        objective_history: run.history,
    })
}

/// Maximum-likelihood state from the six projector records of one input.
pub fn qst(records: &[CountRecord]) -> Result<DensityMatrix> {
    let Some(first) = records.first() else {
        return Err(Error::InsufficientData("no records".into()));
    };
    if records.iter().any(|r| r.input != first.input) {
        return Err(Error::InvalidArgument("state tomography records must share one input".into()));
    }
    let mut counts = [0.0; 6];
    let mut seen = [false; 6];
    for r in records {
        let k = PROJECTORS.iter().position(|p| *p == r.projector).expect("all labels are projectors");
        counts[k] += r.counts as f64;
        seen[k] = true;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::InsufficientData(format!("missing projector {}", PROJECTORS[k])));
    }
    let terms: Vec<(CMatrix2, f64)> = PROJECTORS.iter().zip(counts).map(|(p, n)| (basis_projector(*p), n)).collect();
    let fit = mle::<2>(&terms, None, &MleOptions::default())?;
    DensityMatrix::with_tolerance(fit.estimate, 1e-9)
}

/// `B_mn = tr(Π σ_m ρ σ_n)`; the count mean for process matrix `A` is
/// `tr(Bᵀ A)`.
fn process_effect(input: BasisLabel, projector: BasisLabel) -> CMatrix4 {
    let s = linalg::paulis();
    let rho = basis_projector(input);
    let pi = basis_projector(projector);
    CMatrix4::from_fn(|m, n| linalg::trace(&(pi * s[m] * rho * s[n]))).transpose()
}

/// `(‖TP(A)/trA − I‖², gradient)` weighted by `w`.
fn trace_preservation_penalty(w: f64) -> impl Fn(&CMatrix4) -> (f64, CMatrix4) + Sync {
    let s = linalg::paulis();
    move |a: &CMatrix4| {
        let tr = a.trace().re;
        let mut tp = CMatrix2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                tp += s[n] * s[m] * a[(m, n)];
            }
        }
        let delta = tp.unscale(tr) - CMatrix2::identity();
        let value = delta.norm_squared();
        let dd = delta.adjoint();
        let c = CMatrix4::from_fn(|m, n| linalg::trace(&(dd * s[n] * s[m])));
        let c2 = linalg::trace(&(dd * tp)).re;
        let grad = (c.transpose().unscale(tr) - CMatrix4::identity().scale(c2 / (tr * tr))).scale(2.0 * w);
        (w * value, grad)
    }
}

#[derive(Debug, Clone)]
pub struct QptFit {
    pub chi: ProcessMatrix,
    pub iterations: usize,
    pub restarts: usize,
    pub trace_preservation_deviation: f64,
    pub objective_history: Vec<f64>,
}

fn process_terms(records: &[CountRecord]) -> Result<Vec<(CMatrix4, f64)>> {
    let mut counts = [[0.0; 6]; 4];
    let mut seen = [[false; 6]; 4];
    for r in records {
        let Some(a) = INPUTS.iter().position(|i| *i == r.input) else {
            return Err(Error::InvalidArgument(format!("input {} is not one of h, v, p, r", r.input)));
        };
        let k = PROJECTORS.iter().position(|p| *p == r.projector).expect("all labels are projectors");
        counts[a][k] += r.counts as f64;
        seen[a][k] = true;
    }
    for (a, row) in seen.iter().enumerate() {
        if let Some(k) = row.iter().position(|s| !s) {
            return Err(Error::InsufficientData(format!(
                "missing record for input {} projector {}",
                INPUTS[a], PROJECTORS[k]
            )));
        }
    }
    let mut terms = Vec::with_capacity(24);
    for (a, input) in INPUTS.iter().enumerate() {
        for (k, projector) in PROJECTORS.iter().enumerate() {
            terms.push((process_effect(*input, *projector), counts[a][k]));
        }
    }
    Ok(terms)
}

pub fn qpt_with(records: &[CountRecord], opts: &MleOptions) -> Result<QptFit> {
    let terms = process_terms(records)?;
    let penalty = trace_preservation_penalty(opts.penalty_weight);
    let fit = mle::<4>(&terms, Some(&penalty), opts)?;
    let chi = ProcessMatrix::from_estimate(fit.estimate)?;
    Ok(QptFit {
        trace_preservation_deviation: chi.trace_preservation_deviation(),
        chi,
        iterations: fit.iterations,
        restarts: fit.restarts,
        objective_history: fit.objective_history,
    })
}

/// Maximum-likelihood process matrix from the 24 input/projector records.
pub fn qpt(records: &[CountRecord]) -> Result<ProcessMatrix> {
    Ok(qpt_with(records, &MleOptions::default())?.chi)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TomographyResult {
    #[serde(with = "crate::io::chi_serde")]
    pub chi_hat: ProcessMatrix,
    /// Descending.
    pub eigenvalues: [f64; 4],
    pub eigenvalue_errors: [f64; 4],
    pub fidelity_to_model: Option<f64>,
    pub fidelity_error: Option<f64>,
    pub mc_samples: usize,
    pub seed: u64,
    pub penalty_weight: f64,
    pub iterations: usize,
    pub trace_preservation_deviation: f64,
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Reconstructs χ from `records`, then repeats the reconstruction on
/// `n_samples` Poisson resamplings of the observed counts to attach standard
/// deviations. Sample `k` draws from stream `k` of `seed`.
pub fn monte_carlo_errors(
    records: &[CountRecord],
    model: Option<&ProcessMatrix>,
    n_samples: usize,
    seed: u64,
    opts: &MleOptions,
) -> Result<TomographyResult> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!("n_samples must be at least 2, got {n_samples}")));
    }
    let base = qpt_with(records, opts)?;
    let samples: Vec<ProcessMatrix> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let resampled: Vec<CountRecord> = records
                .iter()
                .map(|r| CountRecord { counts: poisson(&mut rng, r.counts as f64), ..*r })
                .collect();
            qpt_with(&resampled, opts).map(|f| f.chi)
        })
        .collect::<Result<_>>()?;

    let eigs: Vec<[f64; 4]> = samples.iter().map(|c| c.eigenvalues()).collect();
    let mut eigenvalue_errors = [0.0; 4];
    for (i, e) in eigenvalue_errors.iter_mut().enumerate() {
        *e = std_dev(&eigs.iter().map(|v| v[i]).collect::<Vec<_>>());
    }
    let (fidelity_to_model, fidelity_error) = match model {
        Some(m) => {
            let fs: Vec<f64> = samples.iter().map(|c| process_fidelity(c, m)).collect();
            (Some(process_fidelity(&base.chi, m)), Some(std_dev(&fs)))
        }
        None => (None, None),
    };
    Ok(TomographyResult {
        eigenvalues: base.chi.eigenvalues(),
        chi_hat: base.chi,
        eigenvalue_errors,
        fidelity_to_model,
        fidelity_error,
        mc_samples: n_samples,
        seed,
        penalty_weight: opts.penalty_weight,
        iterations: base.iterations,
        trace_preservation_deviation: base.trace_preservation_deviation,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenvalueRow {
    pub label: String,
    pub mode: CountMode,
    pub result: TomographyResult,
}

/// Simulates, background-corrects and reconstructs every family member in
/// both count modes. Member `i` uses count seed stream `2i` (coincidence) or
/// `2i + 1` (singles) of `config.seed`.
pub fn eigenvalue_curve(
    family: &[(String, ProcessMatrix)],
    config: &AcquisitionConfig,
    mc_samples: usize,
    opts: &MleOptions,
) -> Result<Vec<EigenvalueRow>> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("channel family is empty".into()));
    }
    config.validate()?;
    let jobs: Vec<(usize, CountMode)> = (0..family.len())
        .flat_map(|i| [(i, CountMode::Coincidence), (i, CountMode::Singles)])
        .collect();
    jobs.into_par_iter()
        .map(|(i, mode)| {
            let (label, chi) = &family[i];
            let stream = 2 * i as u64 + u64::from(mode == CountMode::Singles);
            let member_seed = stream_rng(config.seed, stream).next_u64();
            let cfg = AcquisitionConfig { mode, seed: member_seed, ..*config };
            let records = subtract_background(&simulate_counts(chi, &cfg)?, cfg.background_rate);
            let result = monte_carlo_errors(&records, Some(chi), mc_samples, member_seed, opts)?;
            Ok(EigenvalueRow { label: label.clone(), mode, result })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DephasingSpec, chi_from_kraus, dephasing_channel, dephasing_probability, random_channel};
    use crate::polarization::StokesVector;

    fn exact_records(chi: &ProcessMatrix, scale: f64) -> Vec<CountRecord> {
        let cfg = AcquisitionConfig { integration_time: scale, ..AcquisitionConfig::default() };
        expected_counts(chi, &cfg)
            .into_iter()
            .map(|(input, projector, mean)| CountRecord {
                input,
                projector,
                mode: CountMode::Coincidence,
                integration_time: scale,
                counts: mean.round() as u64,
            })
            .collect()
    }

    #[test]
    fn simulate_counts_examples() {
        let id = ProcessMatrix::identity();
        let zero = simulate_counts(&id, &AcquisitionConfig { integration_time: 0.0, ..Default::default() }).unwrap();
        assert!(zero.iter().all(|r| r.counts == 0));
        assert_eq!(zero.len(), 24);

        let means = expected_counts(&id, &AcquisitionConfig::default());
        let hh = means.iter().find(|m| m.0 == BasisLabel::H && m.1 == BasisLabel::H).unwrap();
        assert!((hh.2 - 10_000.0).abs() < 1e-9);
        let hv = means.iter().find(|m| m.0 == BasisLabel::H && m.1 == BasisLabel::V).unwrap();
        assert_eq!(hv.2, 0.0);

        let a = simulate_counts(&id, &AcquisitionConfig::default()).unwrap();
        let b = simulate_counts(&id, &AcquisitionConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = simulate_counts(&id, &AcquisitionConfig { seed: 1, ..Default::default() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn background_subtraction() {
        let rec = |counts, mode| CountRecord {
            input: BasisLabel::H,
            projector: BasisLabel::H,
            mode,
            integration_time: 1.0,
            counts,
        };
        let out = subtract_background(
            &[rec(5000, CountMode::Singles), rec(100, CountMode::Singles), rec(100, CountMode::Coincidence)],
            2000.0,
        );
        assert_eq!(out[0].counts, 4667);
        assert_eq!(out[1].counts, 0);
        assert_eq!(out[2].counts, 100);
    }

    #[test]
    fn qst_examples() {
        let chi = ProcessMatrix::identity();
        let records = exact_records(&chi, 1e4);
        let p: Vec<CountRecord> = records.iter().copied().filter(|r| r.input == BasisLabel::P).collect();
        let s = qst(&p).unwrap().stokes();
        assert!((s.s2 - 1.0).abs() < 1e-6 && s.s1.abs() < 1e-6 && s.s3.abs() < 1e-6, "{s:?}");

        let flat: Vec<CountRecord> = p.iter().map(|r| CountRecord { counts: 500, ..*r }).collect();
        let mixed = qst(&flat).unwrap();
        assert!(mixed.trace_distance(&DensityMatrix::maximally_mixed()) < 1e-7);

        assert!(matches!(qst(&p[..5]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn qst_poisson_accuracy() {
        let truth = crate::polarization::density_from_stokes(&StokesVector::new(0.3, -0.5, 0.6)).unwrap();
        let chi = ProcessMatrix::identity();
        let mut good = 0;
        let trials = 40;
        for seed in 0..trials {
            // Mean 10⁴ counts per projector pair.
            let mut rng = stream_rng(seed, 0);
            let records: Vec<CountRecord> = PROJECTORS
                .iter()
                .map(|p| CountRecord {
                    input: BasisLabel::H,
                    projector: *p,
                    mode: CountMode::Coincidence,
                    integration_time: 1.0,
                    counts: poisson(&mut rng, 1e4 * truth.probability(*p)),
                })
                .collect();
            let est = qst(&records).unwrap();
            if est.trace_distance(&truth) < 0.02 {
                good += 1;
            }
        }
        let _ = chi;
        assert!(good as f64 >= 0.95 * trials as f64, "{good}/{trials}");
    }

    #[test]
    fn qpt_recovers_dephasing() {
        let chi = dephasing_channel(DephasingSpec::new(0.3).unwrap());
        let fit = qpt_with(&exact_records(&chi, 1e6), &MleOptions::default()).unwrap();
        assert!(process_fidelity(&fit.chi, &chi) >= 0.9999);
        let eig = fit.chi.eigenvalues();
        assert!((1.0 - eig[0] - 0.3).abs() < 1e-4, "{eig:?}");
        let _ = dephasing_probability(&chi).unwrap();
        assert!(fit.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn qpt_recovers_identity() {
        let chi = qpt(&exact_records(&ProcessMatrix::identity(), 1e6)).unwrap();
        let diff = chi.matrix() - ProcessMatrix::identity().matrix();
        assert!(diff.iter().all(|z| z.norm() < 1e-6), "{chi:?}");
    }

    #[test]
    fn qpt_recovers_random_channels() {
        let mut rng = stream_rng(11, 0);
        for k in 0..10 {
            let truth = chi_from_kraus(&random_channel(&mut rng, 1 + k % 4)).unwrap();
            let est = qpt(&exact_records(&truth, 1e6)).unwrap();
            assert!(process_fidelity(&est, &truth) >= 0.9999);
        }
    }

    #[test]
    fn qpt_requires_all_records() {
        let records = exact_records(&ProcessMatrix::identity(), 1.0);
        assert!(matches!(qpt(&records[1..]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn monte_carlo_argument_checks_and_small_errors() {
        let chi = dephasing_channel(DephasingSpec::new(0.2).unwrap());
        let records = exact_records(&chi, 1e5);
        assert!(matches!(
            monte_carlo_errors(&records, None, 0, 0, &MleOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
        let res = monte_carlo_errors(&records, Some(&chi), 4, 0, &MleOptions::default()).unwrap();
        assert!(res.eigenvalue_errors.iter().all(|e| *e < 1e-3), "{:?}", res.eigenvalue_errors);
        assert!(res.fidelity_error.unwrap() < 1e-3);
        let again = monte_carlo_errors(&records, Some(&chi), 4, 0, &MleOptions::default()).unwrap();
        assert_eq!(res.eigenvalue_errors, again.eigenvalue_errors);
    }

    #[test]
    fn count_mode_parses() {
        assert_eq!("singles".parse::<CountMode>().unwrap(), CountMode::Singles);
        assert_eq!("Coincidence".parse::<CountMode>().unwrap(), CountMode::Coincidence);
        assert!("x".parse::<CountMode>().is_err());
    }
}
