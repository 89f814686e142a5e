//! End-to-end tomography on the dephasing-locus family: simulated counts,
//! background correction, reconstruction and Monte-Carlo error bars.

use polchan::channel::{ProcessMatrix, chi_from_kraus, process_fidelity, random_channel};
use polchan::crystal::four_crystal_channel;
use polchan::reachability::{dephasing_locus_angles, locus_scan};
use polchan::tomography::{
    AcquisitionConfig, CountMode, CountRecord, MleOptions, eigenvalue_curve, expected_counts, monte_carlo_errors,
    qpt, simulate_counts, stream_rng,
};

fn locus_family() -> Vec<(String, ProcessMatrix)> {
    (0..=10)
        .map(|k| {
            let theta1 = k as f64;
            (format!("{theta1}"), four_crystal_channel(&dephasing_locus_angles(theta1).unwrap()))
        })
        .collect()
}

fn exact_records(chi: &ProcessMatrix, integration_time: f64) -> Vec<CountRecord> {
    let cfg = AcquisitionConfig { integration_time, ..AcquisitionConfig::default() };
    expected_counts(chi, &cfg)
        .into_iter()
        .map(|(input, projector, mean)| CountRecord {
            input,
            projector,
            mode: CountMode::Coincidence,
            integration_time,
            counts: mean.round() as u64,
        })
        .collect()
}

#[test]
fn noiseless_locus_family_matches_locus_scan() {
    let scan = locus_scan(10.0, 11).unwrap();
    for ((_, chi), pt) in locus_family().iter().zip(&scan) {
        let est = qpt(&exact_records(chi, 1e6)).unwrap().eigenvalues();
        for (a, b) in est.iter().zip(pt.chi_eigenvalues) {
            assert!((a - b).abs() < 1e-6, "theta1 {}: {est:?} vs {:?}", pt.theta1, pt.chi_eigenvalues);
        }
    }
}

#[test]
fn noiseless_random_channels_are_recovered() {
    let mut rng = stream_rng(7, 3);
    for k in 0..50 {
        let truth = chi_from_kraus(&random_channel(&mut rng, 1 + k % 4)).unwrap();
        let f = process_fidelity(&qpt(&exact_records(&truth, 1e6)).unwrap(), &truth);
        assert!(f >= 0.9999, "channel {k}: fidelity {f}");
    }
}

#[test]
fn realistic_rate_curves_agree_with_theory() {
    let family = locus_family();
    let scan = locus_scan(10.0, 11).unwrap();
    let rows = eigenvalue_curve(&family, &AcquisitionConfig::default(), 40, &MleOptions::default()).unwrap();
    assert_eq!(rows.len(), 2 * family.len());

    let (mut inside, mut total) = (0, 0);
    for row in &rows {
        let theory = scan.iter().find(|p| format!("{}", p.theta1) == row.label).unwrap().chi_eigenvalues;
        for i in 0..4 {
            total += 1;
            if (row.result.eigenvalues[i] - theory[i]).abs() <= 2.0 * row.result.eigenvalue_errors[i] + 1e-3 {
                inside += 1;
            }
        }
    }
    let fraction = inside as f64 / total as f64;
    eprintln!("{inside}/{total} eigenvalues within two error bars of theory");
    assert!(fraction >= 0.9, "{fraction}");

    // Singles and coincidence reconstructions of one channel agree.
    let (mut agree, mut pairs) = (0, 0);
    for pair in rows.chunks(2) {
        let (a, b) = (&pair[0].result, &pair[1].result);
        assert_ne!(pair[0].mode, pair[1].mode);
        for i in 0..4 {
            pairs += 1;
            let combined = a.eigenvalue_errors[i].hypot(b.eigenvalue_errors[i]);
            if (a.eigenvalues[i] - b.eigenvalues[i]).abs() <= 2.0 * combined + 1e-3 {
                agree += 1;
            }
        }
    }
    eprintln!("{agree}/{pairs} singles/coincidence eigenvalue pairs agree");
    assert!(agree as f64 / pairs as f64 >= 0.9);
}

#[test]
fn error_bars_shrink_with_integration_time() {
    let chi = four_crystal_channel(&dephasing_locus_angles(6.0).unwrap());
    let spread = |t: f64| {
        let cfg = AcquisitionConfig { integration_time: t, seed: 3, ..AcquisitionConfig::default() };
        let records = simulate_counts(&chi, &cfg).unwrap();
        let res = monte_carlo_errors(&records, Some(&chi), 60, 1, &MleOptions::default()).unwrap();
        res.eigenvalue_errors[0]
    };
    let ratio = spread(1.0) / spread(100.0);
    eprintln!("error ratio 1 s / 100 s = {ratio:.3}");
    assert!((ratio / 10.0 - 1.0).abs() < 0.3, "{ratio}");
}

#[test]
fn estimates_are_physical_for_arbitrary_counts() {
    use rand::Rng;
    let template = exact_records(&ProcessMatrix::identity(), 1.0);
    let mut rng = stream_rng(99, 0);
    for _ in 0..20 {
        let records: Vec<CountRecord> =
            template.iter().map(|r| CountRecord { counts: rng.random_range(0..500), ..*r }).collect();
        let chi = qpt(&records).unwrap();
        let e = chi.eigenvalues();
        assert!(e[3] >= -1e-12, "{e:?}");
        assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
