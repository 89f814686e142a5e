//! Small unconstrained optimizers: Nelder-Mead, L-BFGS with a backtracking
//! Armijo line search, and Levenberg-Marquardt for least squares.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            initial_step: 1.0,
            x_tol: 1e-10,
            f_tol: 1e-15,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Derivative-free simplex search with the standard coefficients
/// (reflection 1, expansion 2, contraction ½, shrink ½).
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread_f = (values[n] - values[0]).abs();
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread_f <= opts.f_tol && spread_x <= opts.x_tol {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = along(-0.5);
            let fc = f(&c);
            (c, fc)
        } else {
            let c = along(0.5);
            let fc = f(&c);
            (c, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = simplex[i]
                .iter()
                .zip(&best)
                .map(|(x, b)| b + 0.5 * (x - b))
                .collect();
            values[i] = f(&simplex[i]);
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is nonempty");
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Converged once `‖g‖∞ ≤ grad_tol · max(1, |f|)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// `(window, tol)`: stop once the objective fell by less than `tol` over
    /// the last `window` steps.
    pub min_progress: Option<(usize, f64)>,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            grad_tol: 1e-8,
            max_iter: 5000,
            min_progress: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    /// The line search could not decrease the objective any further.
    Stalled,
    /// Stopped by `min_progress`.
    NoProgress,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
    /// Objective value after every accepted step, starting with `f(x0)`.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Limited-memory BFGS. Every accepted step satisfies the Armijo condition,
/// so the objective is non-increasing along `history`.
pub fn lbfgs<F>(f: F, x0: &[f64], opts: &LbfgsOptions) -> LbfgsResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut history = vec![fx];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if inf_norm(&g) <= opts.grad_tol * fx.abs().max(1.0) {
            status = LbfgsStatus::Converged;
            break;
        }
        if let Some((window, tol)) = opts.min_progress
            && history.len() > window
            && history[history.len() - 1 - window] - fx < tol
        {
            status = LbfgsStatus::NoProgress;
            break;
        }
        iterations += 1;

        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 1.0 / inf_norm(&g).max(1e-300);
            q.iter_mut().for_each(|v| *v *= scale.min(1.0));
        }
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            status = LbfgsStatus::Stalled;
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
    }

    LbfgsResult {
        grad_inf_norm: inf_norm(&g),
        x,
        value: fx,
        iterations,
        status,
        history,
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquaresResult {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    /// `JᵀJ` at the solution.
    pub normal_matrix: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg-Marquardt with multiplicative damping updates.
pub fn levenberg_marquardt<R, J>(
    residuals: R,
    jacobian: J,
    p0: &[f64],
    max_iter: usize,
) -> LeastSquaresResult
where
    R: Fn(&[f64]) -> DVector<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    let n = p0.len();
    let mut p = DVector::from_column_slice(p0);
    let mut r = residuals(p.as_slice());
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let jac = jacobian(p.as_slice());
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        if jtr.amax() <= 1e-14 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(delta) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &p + &delta;
            let r_trial = residuals(trial.as_slice());
            let c_trial = r_trial.norm_squared();
            if c_trial.is_finite() && c_trial < cost {
                let rel = (cost - c_trial) / cost.max(1e-300);
                let small_step = delta.amax() <= 1e-12 * (1.0 + p.amax());
                p = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < 1e-15 || small_step {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: a local minimum to working
            // precision.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    let jac = jacobian(p.as_slice());
    LeastSquaresResult {
        params: p.as_slice().to_vec(),
        cost,
        normal_matrix: jac.transpose() * jac,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn lbfgs_is_monotone_and_converges() {
        let f = |x: &[f64]| {
            let v = rosenbrock(x);
            let g = vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ];
            (v, g)
        };
        let r = lbfgs(f, &[-1.2, 1.0], &LbfgsOptions::default());
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn lm_fits_exponential() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * (-0.7 * t).exp()).collect();
        let res = |p: &[f64]| DVector::from_iterator(ts.len(), ts.iter().zip(&ys).map(|(t, y)| p[0] * (-p[1] * t).exp() - y));
        let jac = |p: &[f64]| {
            DMatrix::from_fn(ts.len(), 2, |i, j| {
                let e = (-p[1] * ts[i]).exp();
                if j == 0 { e } else { -p[0] * ts[i] * e }
            })
        };
        let r = levenberg_marquardt(res, jac, &[1.0, 0.1], 200);
        assert!(r.converged);
        assert!((r.params[0] - 2.0).abs() < 1e-9 && (r.params[1] - 0.7).abs() < 1e-9);
    }
}
