//! Points on a tetrahedron edge, with one |Dᵢ| = 1 and the other two equal
//! to 1 − 2P, are not reachable. Measured as the largest canonical |D|
//! achievable once the other two are pinned to 1 − 2P.

use polchan::crystal::{WavePlateAngles, analytic_d};
use polchan::optim::{NelderMeadOptions, nelder_mead};

fn canonical(t: &[f64]) -> [f64; 3] {
    analytic_d(&WavePlateAngles::new(t[0], t[1], t[2])).canonical().to_array()
}

/// Returns (largest component, constraint violation) of the best point found.
fn max_preserved_length(p: f64) -> (f64, f64) {
    let x = 1.0 - 2.0 * p;
    let violation = |c: &[f64; 3]| (c[1].abs() - x).abs().max((c[2].abs() - x).abs());
    let n = 30;
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let t = vec![180.0 * i as f64 / n as f64, 180.0 * j as f64 / n as f64, 180.0 * k as f64 / n as f64];
                let c = canonical(&t);
                starts.push((c[0] - 4.0 * violation(&c), t));
            }
        }
    }
    starts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for (_, t0) in starts.into_iter().take(40) {
        let mut t = t0;
        for w in [1e2, 1e4, 1e6, 1e8, 1e10, 1e12] {
            let obj = |t: &[f64]| {
                let c = canonical(t);
                -c[0] + w * ((c[1].abs() - x).powi(2) + (c[2].abs() - x).powi(2))
            };
            let opts = NelderMeadOptions { initial_step: 1.0 / w.sqrt().sqrt(), x_tol: 1e-13, f_tol: 1e-16, max_iter: 4000 };
            t = nelder_mead(obj, &t, &opts).x;
        }
        let c = canonical(&t);
        let v = violation(&c);
        if v < 1e-8 && c[0] > best.0 {
            best = (c[0], v);
        }
    }
    best
}

#[test]
fn dephasing_edges_are_unreachable() {
    for p in [0.1, 0.2, 0.3, 0.4] {
        let (top, violation) = max_preserved_length(p);
        let gap = 1.0 - top;
        eprintln!("P = {p}: max |D| = {top:.12}, gap = {gap:.3e}, constraint violation {violation:.1e}");
        assert!(top.is_finite(), "no feasible point found for P = {p}");
        // The gap shrinks towards the identity corner; at P = 0.1 it is about 2e-5.
        let margin = if p < 0.15 { 1e-5 } else { 1e-4 };
        assert!(gap > margin, "P = {p}: gap {gap:e}");
    }
}
