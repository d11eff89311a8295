use nondoubling::czo::i1_eps;
use nondoubling::experiments::{run_example_1, run_example_2, run_invariant_suite, ExperimentConfig, Tolerances};
use nondoubling::lattice::{Lattice, LatticeParams};
use nondoubling::measure::{lebesgue_interval, lebesgue_square, MeasureSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn default_suite_passes_and_is_reproducible() {
    let cfg = ExperimentConfig::default();
    let a = run_invariant_suite(&cfg).unwrap();
    let failed: Vec<_> = a.checks.iter().filter(|c| !c.passed).collect();
    assert!(a.passed, "{failed:?}");
    let b = run_invariant_suite(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.config_hash, cfg.hash());
}

#[test]
fn suite_runs_on_other_measures() {
    for measure in [
        MeasureSpec::LebesgueInterval { res: 512 },
        MeasureSpec::AdRegularLine { res: 128 },
        MeasureSpec::LebesgueSquare { res: 12 },
    ] {
        let cfg = ExperimentConfig {
            measure: measure.clone(),
            trials: 6,
            ..ExperimentConfig::default()
        };
        let r = run_invariant_suite(&cfg).unwrap();
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).collect();
        assert!(r.passed, "{measure:?}: {failed:?}");
    }
}

#[test]
fn perturbed_lattice_fails_with_a_witness() {
    let m = lebesgue_interval(1024).unwrap();
    let lat = Lattice::build(
        &m,
        LatticeParams {
            a: 10.0,
            a_min: 5.0,
            ..Default::default()
        },
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(lat.check_invariants(50, &mut rng).passed);
    let bad = lat.perturbed(0.1).check_invariants(50, &mut rng);
    assert!(!bad.passed);
    assert!(bad.increment_violations > 0);
    assert!(bad.witness.is_some());
}

#[test]
fn i1_of_one_at_the_centre_matches_the_integral() {
    // int over [-1/2, 1/2]^2 of dy / |y| is 4 ln(1 + sqrt 2); the sum drops the centre cell
    let res = 41;
    let m = lebesgue_square(res).unwrap();
    let centre = (res / 2) * res + res / 2;
    let v = i1_eps(&m, &vec![1.0; m.len()], 0.0)[centre];
    let h = 1.0 / res as f64;
    let exact = 4.0 * (1.0 + 2f64.sqrt()).ln() * (1.0 - h);
    assert!((v / exact - 1.0).abs() < 0.02, "{v} vs {exact}");
}

#[test]
fn example_windows_are_bounded_and_stable() {
    let tol = Tolerances::default();
    let e1 = run_example_1(128, 20, 5, &tol).unwrap();
    assert!(e1.passed, "{e1:?}");
    // N 1 and M_1 1 are both averages of 1 over comparable regions
    assert!(e1.window.ones_min > 0.5 && e1.window.ones_max < 2.0, "{e1:?}");
    let e2 = run_example_2(12, 10, 5, &tol).unwrap();
    assert!(e2.passed, "{e2:?}");
    assert!(e2.window.ones_min.is_finite() && e2.window.ones_min > 0.0);
}
