use nondoubling::covering::{besicovitch_select, random_cover_instance, wiener_select};
use nondoubling::cube::delta;
use nondoubling::czo::{apply_t_eps, apply_t_eps_adjoint, i1_eps, KernelSpec};
use nondoubling::kernels::KernelProfile;
use nondoubling::lattice::{Lattice, LatticeParams};
use nondoubling::maximal::{m_lambda, n_sup, radii_grid};
use nondoubling::measure::{lebesgue_square, saksman_intervals, DiscreteMeasure};
use nondoubling::weights::Weight;
use nondoubling::Cube;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn saksman() -> DiscreteMeasure {
    saksman_intervals(6, 16).unwrap()
}

fn values(n: usize, seed: u64, signed: bool) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| if signed { rng.gen_range(-1.0..1.0) } else { rng.gen::<f64>() })
        .collect()
}

fn pairing(m: &DiscreteMeasure, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(m.masses()).map(|((x, y), w)| x * y * w).sum()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn s_k_is_linear(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let m = saksman();
        let lat = Lattice::build(&m, LatticeParams::default()).unwrap();
        let prof = KernelProfile::new(&lat).unwrap();
        let f = values(m.len(), seed, true);
        let g = values(m.len(), seed ^ 1, true);
        let h: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        for k in 0..=lat.k_max() {
            let (sf, sg, sh) = (prof.apply(k, &f), prof.apply(k, &g), prof.apply(k, &h));
            for x in 0..m.len() {
                prop_assert!(close(sh[x], a * sf[x] + b * sg[x], 1e-12));
            }
        }
    }

    #[test]
    fn n_sup_is_sublinear_and_homogeneous(seed in any::<u64>(), c in 0.1..10.0f64) {
        let m = saksman();
        let lat = Lattice::build(&m, LatticeParams::default()).unwrap();
        let prof = KernelProfile::new(&lat).unwrap();
        let f = values(m.len(), seed, true);
        let g = values(m.len(), seed ^ 7, true);
        let fg: Vec<f64> = f.iter().zip(&g).map(|(x, y)| x + y).collect();
        let cf: Vec<f64> = f.iter().map(|x| -c * x).collect();
        let (nf, ng, nfg, ncf) = (n_sup(&prof, &f), n_sup(&prof, &g), n_sup(&prof, &fg), n_sup(&prof, &cf));
        for x in 0..m.len() {
            prop_assert!(nfg[x] <= nf[x] + ng[x] + 1e-12);
            prop_assert!(close(ncf[x], c * nf[x], 1e-12));
        }
    }

    #[test]
    fn m_lambda_is_monotone(seed in any::<u64>()) {
        let m = saksman();
        let grid = radii_grid(&m);
        let f = values(m.len(), seed, false);
        let bigger: Vec<f64> = f.iter().enumerate().map(|(i, v)| v + (i % 3) as f64).collect();
        let (a, b) = (m_lambda(&m, &f, 1.0, &grid), m_lambda(&m, &bigger, 1.0, &grid));
        for x in 0..m.len() {
            prop_assert!(a[x] <= b[x] + 1e-12);
        }
    }

    #[test]
    fn dual_weight_is_an_involution(seed in any::<u64>(), p in 1.1..8.0f64) {
        let m = saksman();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..m.len()).map(|_| (rng.gen_range(-20.0..20.0f64)).exp()).collect();
        let w = Weight::new(&m, v, p).unwrap();
        let back = w.dual().dual();
        prop_assert!(close(back.p(), p, 1e-12));
        for (a, b) in back.values().iter().zip(w.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn delta_grows_with_the_outer_cube(seed in any::<u64>(), s in 0.001..0.2f64, r1 in 1.0..4.0f64, r2 in 1.0..4.0f64) {
        let m = saksman();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = m.point(rng.gen_range(0..m.len())).to_vec();
        let q = Cube::new(c, s);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let a = delta(&m, &q, &q.dilate(lo)).unwrap();
        let b = delta(&m, &q, &q.dilate(hi)).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!(a <= b + 1e-12);
    }

    #[test]
    fn truncated_hilbert_is_antisymmetric(seed in any::<u64>(), eps in 0.001..0.3f64) {
        let m = saksman();
        let k = KernelSpec::hilbert();
        let f = values(m.len(), seed, true);
        let g = values(m.len(), seed ^ 3, true);
        let tf = apply_t_eps(&m, &k, &f, eps).unwrap();
        let tg = apply_t_eps(&m, &k, &g, eps).unwrap();
        let adj = apply_t_eps_adjoint(&m, &k, &g, eps).unwrap();
        prop_assert!(close(pairing(&m, &tf, &g), pairing(&m, &f, &adj), 1e-10));
        prop_assert!(close(pairing(&m, &tf, &g), -pairing(&m, &f, &tg), 1e-10));
    }

    #[test]
    fn cauchy_is_dominated_by_i1(seed in any::<u64>(), eps in 0.01..0.5f64) {
        let m = lebesgue_square(8).unwrap();
        let f = values(m.len(), seed, false);
        let i1 = i1_eps(&m, &f, eps);
        for k in [KernelSpec::cauchy_re(), KernelSpec::cauchy_im()] {
            let t = apply_t_eps(&m, &k, &f, eps).unwrap();
            for x in 0..m.len() {
                prop_assert!(t[x].abs() <= i1[x] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn wiener_selection_certifies(seed in any::<u64>(), count in 5usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cubes, pts) = random_cover_instance(2, count, 60, 0.005, 0.3, &mut rng);
        let s = wiener_select(&cubes, &pts).unwrap();
        prop_assert!(s.certificate.passed, "{:?}", s.certificate);
    }

    #[test]
    fn besicovitch_selection_certifies(seed in any::<u64>(), count in 1usize..150) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..count).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let cubes: Vec<Cube> = pts.iter().map(|p| Cube::new(p.clone(), rng.gen_range(0.001..0.5))).collect();
        let s = besicovitch_select(&pts, &cubes).unwrap();
        prop_assert!(s.certificate.passed, "{:?}", s.certificate);
    }

    #[test]
    fn measure_json_round_trips(k in 2usize..8, res in 2usize..12) {
        let m = saksman_intervals(k, res).unwrap();
        let back = DiscreteMeasure::from_json(&m.to_json()).unwrap();
        prop_assert_eq!(back.len(), m.len());
        prop_assert!(close(back.total_mass(), m.total_mass(), 1e-15));
    }
}
