use polchan::channel::{
    DVector, canonicalize_sign_flips, chi_from_d_matrix, d_matrix_from_chi, d_vector, is_complete_positive, DMatrix,
};
use polchan::crystal::{WavePlateAngles, analytic_d, four_crystal_channel};
use polchan::reachability::{SweepConfig, find_angles_for_target, sweep, symmetry_orbit};
use polchan::tomography::stream_rng;
use proptest::prelude::*;
use rand::Rng;

fn simulated(angles: &WavePlateAngles) -> DVector {
    canonicalize_sign_flips(d_vector(&d_matrix_from_chi(&four_crystal_channel(angles)).d))
}

fn closed_form(angles: &WavePlateAngles) -> DVector {
    canonicalize_sign_flips(analytic_d(angles).canonical())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn simulator_matches_closed_form(t1 in 0.0f64..180.0, t2 in 0.0f64..180.0, t3 in 0.0f64..180.0) {
        let a = WavePlateAngles::new(t1, t2, t3);
        let (s, c) = (simulated(&a), closed_form(&a));
        prop_assert!(s.max_abs_diff(&c) < 1e-9, "{s:?} vs {c:?}");
    }

    #[test]
    fn reachable_points_are_cp(t1 in 0.0f64..180.0, t2 in 0.0f64..180.0, t3 in 0.0f64..180.0) {
        let d = analytic_d(&WavePlateAngles::new(t1, t2, t3));
        prop_assert!(symmetry_orbit(&d).iter().all(is_complete_positive));
    }
}

#[test]
fn seeded_triples_match_closed_form() {
    let mut rng = stream_rng(2024, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = WavePlateAngles::new(
            rng.random_range(0.0..180.0),
            rng.random_range(0.0..180.0),
            rng.random_range(0.0..180.0),
        );
        worst = worst.max(simulated(&a).max_abs_diff(&closed_form(&a)));
    }
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn sweep_clouds_are_legal() {
    for symmetry_extension in [false, true] {
        let cfg = SweepConfig { symmetry_extension, ..SweepConfig::default() };
        let cloud = sweep(&cfg, 0).unwrap();
        let n = 50usize.pow(3) * if symmetry_extension { 12 } else { 1 };
        assert_eq!(cloud.points.len(), n);
        for d in &cloud.points {
            let [a, b, c] = d.to_array();
            let slack = [1.0 + a + b + c, 1.0 + a - b - c, 1.0 - a + b - c, 1.0 - a - b + c];
            assert!(slack.iter().all(|s| *s >= -1e-12), "{d:?}");
        }
        let has = |p: DVector| cloud.points.iter().any(|d| d.max_abs_diff(&p) < 1e-12);
        assert!(has(DVector::new(1.0, -1.0, -1.0)));
        assert_eq!(has(DVector::new(1.0, 1.0, 1.0)), symmetry_extension);
    }
}

#[test]
fn target_search_is_symmetric() {
    let target = DVector::new(0.5, -0.2, 0.1);
    let reference = find_angles_for_target(&target, 16, 0).unwrap().fidelity;
    for image in symmetry_orbit(&target) {
        let f = find_angles_for_target(&image, 16, 0).unwrap().fidelity;
        assert!((f - reference).abs() < 1e-6, "{image:?}: {f} vs {reference}");
    }
}

#[test]
fn d_matrix_round_trip_preserves_canonical_vector() {
    let mut rng = stream_rng(5, 0);
    for _ in 0..200 {
        let a = WavePlateAngles::new(
            rng.random_range(0.0..180.0),
            rng.random_range(0.0..180.0),
            rng.random_range(0.0..180.0),
        );
        let d = simulated(&a);
        let chi = chi_from_d_matrix(&DMatrix::diagonal(d)).unwrap();
        let back = canonicalize_sign_flips(d_vector(&d_matrix_from_chi(&chi).d));
        assert!(back.max_abs_diff(&d) < 1e-12);
    }
}
