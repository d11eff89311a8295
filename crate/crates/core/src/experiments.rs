//! Reproducible experiment drivers and the invariant suite. Every report is
//! deterministic for a fixed configuration and seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covering::{
    besicovitch_select, certify_whitney, random_cover_instance, whitney, wiener_select, Region,
};
use crate::cube::{check_delta_properties, random_cube, Cube, DeltaBounds};
use crate::czo::{apply_t_eps, check_cz_conditions, eps_grid, i1_eps, KernelSpec};
use crate::error::{Error, Result};
use crate::kernels::KernelProfile;
use crate::lattice::{Lattice, LatticeParams};
use crate::maximal::{m_lambda, n_phi_many, n_sup, n_sup_many, radii_grid};
use crate::measure::{
    ad_regular_line, lebesgue_interval, lebesgue_square, saksman_intervals, GrowthOptions, MeasureSpec,
};
use crate::weights::{default_cube_family, reverse_holder_probe, sawyer_constants, Weight};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub growth: f64,
    pub mass_lo: f64,
    pub mass_hi: f64,
    pub increment_frac: f64,
    pub closed_form: f64,
    pub c_eq: f64,
    pub c_dom: f64,
    pub cz_slack: f64,
    pub duality: f64,
    pub involution: f64,
    pub scaling: f64,
    pub w0_stability: f64,
    pub wbad_growth: f64,
    pub rh_growth: f64,
    pub res_stability: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            growth: 0.05,
            mass_lo: 0.88,
            mass_hi: 1.131,
            increment_frac: 0.05,
            closed_form: 0.10,
            c_eq: 50.0,
            c_dom: 50.0,
            cz_slack: 1e-12,
            duality: 1e-9,
            involution: 1e-12,
            scaling: 1e-10,
            w0_stability: 0.10,
            wbad_growth: 2.0,
            rh_growth: 2.0,
            res_stability: 0.20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub measure: MeasureSpec,
    pub lattice: LatticeParams,
    pub ops: Vec<String>,
    pub weight: String,
    pub p: f64,
    pub seed: u64,
    /// Random samples per randomized check.
    pub trials: usize,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            measure: MeasureSpec::SaksmanIntervals { k: 6, res: 64 },
            lattice: LatticeParams::default(),
            ops: vec!["Sk:1".into(), "N".into(), "Teps:hilbert".into(), "Tstar:hilbert".into()],
            weight: "w0".into(),
            p: 2.0,
            seed: 7,
            trials: 20,
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn random_nonneg(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // mix of smooth-ish and sparse inputs
    match rng.gen_range(0..3) {
        0 => (0..len).map(|_| rng.gen::<f64>()).collect(),
        1 => (0..len).map(|_| if rng.gen_bool(0.05) { rng.gen::<f64>() * 10.0 } else { 0.0 }).collect(),
        _ => {
            let c = rng.gen_range(0..len);
            let w = rng.gen_range(1..=len.max(2) / 2);
            (0..len).map(|i| if i.abs_diff(c) <= w { 1.0 } else { 0.0 }).collect()
        }
    }
}

/// `max(max ratio, 1 / min ratio)`, or infinity if a ratio is zero.
fn window_constant(min: f64, max: f64) -> f64 {
    if min > 0.0 {
        max.max(1.0 / min)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioWindow {
    pub res: usize,
    pub atoms: usize,
    pub functions: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub constant: f64,
    pub ones_min: f64,
    pub ones_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub schema: u32,
    pub example: String,
    pub seed: u64,
    pub window: RatioWindow,
    pub doubled: RatioWindow,
    /// `|C(2 res) / C(res) - 1|`.
    pub stability: f64,
    pub bound: f64,
    pub stability_bound: f64,
    pub passed: bool,
}

fn ratio_window(
    res: usize,
    atoms: usize,
    fs: &[Vec<f64>],
    num: &[Vec<f64>],
    den: &[Vec<f64>],
) -> RatioWindow {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut ones = (f64::INFINITY, 0.0f64);
    for (i, (a, b)) in num.iter().zip(den).enumerate() {
        for (x, y) in a.iter().zip(b) {
            if *y > 0.0 || *x > 0.0 {
                let r = if *y > 0.0 { x / y } else { f64::INFINITY };
                lo = lo.min(r);
                hi = hi.max(r);
                if i == 0 {
                    ones = (ones.0.min(r), ones.1.max(r));
                }
            }
        }
    }
    RatioWindow {
        res,
        atoms,
        functions: fs.len(),
        min_ratio: lo,
        max_ratio: hi,
        constant: window_constant(lo, hi),
        ones_min: ones.0,
        ones_max: ones.1,
    }
}

fn example_1_window(res: usize, trials: usize, seed: u64) -> Result<RatioWindow> {
    let m = ad_regular_line(res)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fs = vec![vec![1.0; m.len()]];
    let mut spike = vec![0.0; m.len()];
    spike[m.len() / 3] = 1.0;
    fs.push(spike);
    while fs.len() < trials.max(2) {
        fs.push(random_nonneg(m.len(), &mut rng));
    }
    let grid = radii_grid(&m);
    let refs: Vec<&[f64]> = fs.iter().map(Vec::as_slice).collect();
    let n = n_phi_many(&m, &refs, &grid);
    let mm: Vec<Vec<f64>> = fs.iter().map(|f| m_lambda(&m, f, 1.0, &grid)).collect();
    Ok(ratio_window(res, m.len(), &fs, &n, &mm))
}

/// `N f / M_1 f` on the segment measure over `trials` non-negative inputs,
/// at `res` and `2 res` atoms.
pub fn run_example_1(res: usize, trials: usize, seed: u64, tol: &Tolerances) -> Result<ExampleReport> {
    let window = example_1_window(res, trials, seed)?;
    let doubled = example_1_window(2 * res, trials, seed)?;
    Ok(finish_example("ex1", seed, window, doubled, tol))
}

fn finish_example(name: &str, seed: u64, window: RatioWindow, doubled: RatioWindow, tol: &Tolerances) -> ExampleReport {
    let stability = (doubled.constant / window.constant - 1.0).abs();
    let passed = window.constant <= tol.c_eq && doubled.constant <= tol.c_eq && stability <= tol.res_stability;
    ExampleReport {
        schema: SCHEMA,
        example: name.into(),
        seed,
        window,
        doubled,
        stability,
        bound: tol.c_eq,
        stability_bound: tol.res_stability,
        passed,
    }
}

fn example_2_window(res: usize, trials: usize, seed: u64) -> Result<RatioWindow> {
    let m = lebesgue_square(res)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fs = vec![vec![1.0; m.len()]];
    let sub = Cube::new(vec![0.3, 0.6], 0.25);
    fs.push((0..m.len()).map(|i| if sub.contains_point(m.point(i)) { 1.0 } else { 0.0 }).collect());
    while fs.len() < trials.max(2) {
        fs.push(random_nonneg(m.len(), &mut rng));
    }
    let grid = radii_grid(&m);
    let refs: Vec<&[f64]> = fs.iter().map(Vec::as_slice).collect();
    let n = n_phi_many(&m, &refs, &grid);
    let i1: Vec<Vec<f64>> = fs.iter().map(|f| i1_eps(&m, f, 0.0)).collect();
    Ok(ratio_window(res, m.len(), &fs, &n, &i1))
}

/// `N f / I_1 |f|` on the unit square with `n = 1`, at `res` and `2 res`
/// atoms per side.
pub fn run_example_2(res: usize, trials: usize, seed: u64, tol: &Tolerances) -> Result<ExampleReport> {
    let window = example_2_window(res, trials, seed)?;
    let doubled = example_2_window(2 * res, trials, seed)?;
    Ok(finish_example("ex2", seed, window, doubled, tol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example3Row {
    pub k: usize,
    pub atoms: usize,
    pub cubes_tested: usize,
    pub w0_strong: f64,
    pub w0_dual: f64,
    pub wbad_strong: f64,
    pub wbad_dual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example3Report {
    pub schema: u32,
    pub seed: u64,
    pub res: usize,
    pub p: f64,
    pub a: f64,
    pub rows: Vec<Example3Row>,
    /// Partial sums of `w0^{1 + eps}` for `eps = 0` and `eps = 0.5`.
    pub rh_eps0: Vec<f64>,
    pub rh_eps_half: Vec<f64>,
    pub w0_dual_change: Option<f64>,
    pub wbad_dual_growth: Option<f64>,
    pub rh_growth: Option<f64>,
    pub w0_stable: bool,
    pub wbad_grows: bool,
    pub rh_diverges: bool,
}

/// Sawyer constants of `w0` and `w_bad` on the Saksman measures with
/// `K = 4..=k_max` intervals, and reverse Hölder sums of `w0`.
pub fn run_example_3(k_max: usize, res: usize, p: f64, seed: u64, tol: &Tolerances) -> Result<Example3Report> {
    if k_max < 4 {
        return Err(Error::InvalidParameter(format!("K_max = {k_max} must be at least 4")));
    }
    let params = LatticeParams::default();
    let mut rows = Vec::new();
    for k in 4..=k_max {
        let m = saksman_intervals(k, res)?;
        let lat = Lattice::build(&m, params)?;
        let prof = KernelProfile::new(&lat)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let family = default_cube_family(&lat, 200, &mut rng);
        let ks: Vec<usize> = (0..=lat.k_max()).collect();
        let w0 = sawyer_constants(&prof, &Weight::w0(&m, p)?, &family, &ks)?;
        let wb = sawyer_constants(&prof, &Weight::w_bad(&m, p)?, &family, &ks)?;
        rows.push(Example3Row {
            k,
            atoms: m.len(),
            cubes_tested: w0.cubes_tested,
            w0_strong: w0.strong_const,
            w0_dual: w0.dual_const,
            wbad_strong: wb.strong_const,
            wbad_dual: wb.dual_const,
        });
    }
    let m = saksman_intervals(k_max, res)?;
    let w0 = Weight::w0(&m, p)?;
    let ks: Vec<usize> = (4..=k_max).collect();
    let rh0 = reverse_holder_probe(&m, &w0, 0.0, &ks)?;
    let rh = reverse_holder_probe(&m, &w0, 0.5, &ks)?;
    let row = |k: usize| rows.iter().find(|r| r.k == k);
    let w0_dual_change = match (row(6), row(8)) {
        (Some(a), Some(b)) => Some((b.w0_dual / a.w0_dual - 1.0).abs()),
        _ => None,
    };
    let wbad_dual_growth = match (row(6), row(8)) {
        (Some(a), Some(b)) => Some(b.wbad_dual / a.wbad_dual),
        _ => None,
    };
    let rh_growth = rh.ratio(6, 8);
    Ok(Example3Report {
        schema: SCHEMA,
        seed,
        res,
        p,
        a: params.a,
        rows,
        rh_eps0: rh0.sums,
        rh_eps_half: rh.sums,
        w0_stable: w0_dual_change.is_some_and(|c| c < tol.w0_stability),
        wbad_grows: wbad_dual_growth.is_some_and(|g| g >= tol.wbad_growth),
        rh_diverges: rh_growth.is_some_and(|g| g >= tol.rh_growth),
        w0_dual_change,
        wbad_dual_growth,
        rh_growth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub checks: Vec<Check>,
    pub passed: bool,
}

struct Checks(Vec<Check>);

impl Checks {
    /// Passes when `value <= bound`.
    fn at_most(&mut self, name: &str, value: f64, bound: f64) {
        self.0.push(Check {
            name: name.into(),
            passed: value <= bound,
            value,
            bound,
        });
    }

    fn at_least(&mut self, name: &str, value: f64, bound: f64) {
        self.0.push(Check {
            name: name.into(),
            passed: value >= bound,
            value,
            bound,
        });
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.0.push(Check {
            name: name.into(),
            passed: ok,
            value: if ok { 1.0 } else { 0.0 },
            bound: 1.0,
        });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Runs every module's invariants on the configured measure, plus fixed
/// fixtures for the checks that need transit cubes or planar geometry.
pub fn run_invariant_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let tol = &cfg.tolerances;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut c = Checks(Vec::new());
    let m = cfg.measure.build()?;
    if m.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let trials = cfg.trials.max(1);

    // measure
    let g = m.verify_growth(&GrowthOptions {
        tol: tol.growth,
        ..GrowthOptions::default()
    });
    c.at_most("measure.growth_normalized", g.normalized_ratio, 1.0 + tol.growth);

    // cube metric
    let dp = check_delta_properties(&m, 200, DeltaBounds::default(), &mut rng);
    c.at_most("cube.delta_dilation_violations", dp.dilation_violations as f64, 0.0);
    let mut mono = 0usize;
    for _ in 0..trials {
        let lo = m.resolution_floor().max(1e-12);
        let q = random_cube(&m, &mut rng, lo, m.diameter().max(lo));
        let a = crate::cube::delta(&m, &q, &q.dilate(2.0))?;
        let b = crate::cube::delta(&m, &q, &q.dilate(4.0))?;
        if a > b {
            mono += 1;
        }
    }
    c.at_most("cube.delta_monotone_violations", mono as f64, 0.0);

    // lattice
    let lat = Lattice::build(&m, cfg.lattice)?;
    let lr = lat.check_invariants(200, &mut rng);
    c.flag("lattice.invariants", lr.passed);
    let fixture = lebesgue_interval(1024)?;
    let low = LatticeParams {
        a: 10.0,
        a_min: 5.0,
        ..cfg.lattice
    };
    let flat = Lattice::build(&fixture, low)?;
    let fr = flat.check_invariants(50, &mut rng);
    c.flag("lattice.fixture_invariants", fr.passed && fr.transit_pairs > 0);
    c.at_most("lattice.fixture_increment_error", fr.max_increment_error, tol.increment_frac * low.a);
    let bad = flat.perturbed(0.1).check_invariants(10, &mut rng);
    c.flag("lattice.fault_injection_detected", !bad.passed && bad.increment_violations > 0);

    // kernels
    let prof = KernelProfile::new(&lat)?;
    let mw = prof.mass_window();
    c.at_most("kernels.mass_upper_all", mw.all_max.max(mw.all_adjoint_max), tol.mass_hi);
    c.flag("kernels.mass_window_deep", mw.deep_within(tol.mass_lo, tol.mass_hi));
    let kl = prof.check_kernel_lemmas(200, &mut rng);
    c.flag("kernels.lemmas", kl.passed);
    let f: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let gv: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut worst: f64 = 0.0;
    for k in 0..=lat.k_max() {
        let sf = prof.apply(k, &f);
        let sg = prof.apply_adjoint(k, &gv);
        let lhs: f64 = sf.iter().zip(&gv).zip(m.masses()).map(|((a, b), w)| a * b * w).sum();
        let rhs: f64 = f.iter().zip(&sg).zip(m.masses()).map(|((a, b), w)| a * b * w).sum();
        worst = worst.max(rel(lhs, rhs));
    }
    c.at_most("kernels.duality_pairing", worst, tol.duality);

    // maximal
    let grid = radii_grid(&m);
    let fs: Vec<Vec<f64>> = (0..trials).map(|_| random_nonneg(m.len(), &mut rng)).collect();
    let refs: Vec<&[f64]> = fs.iter().map(Vec::as_slice).collect();
    let nphi = n_phi_many(&m, &refs, &grid);
    let nsup = n_sup_many(&prof, &refs);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut dom: f64 = 0.0;
    for (i, f) in fs.iter().enumerate() {
        let ml = m_lambda(&m, f, 1.0, &grid);
        for x in 0..m.len() {
            if nsup[i][x] > 0.0 || nphi[i][x] > 0.0 {
                let r = if nsup[i][x] > 0.0 { nphi[i][x] / nsup[i][x] } else { f64::INFINITY };
                lo = lo.min(r);
                hi = hi.max(r);
            }
            if nsup[i][x] > 0.0 {
                dom = dom.max(if ml[x] > 0.0 { nsup[i][x] / ml[x] } else { f64::INFINITY });
            }
        }
    }
    c.at_most("maximal.equivalence_window", window_constant(lo, hi), tol.c_eq);
    c.at_most("maximal.domination", dom, tol.c_dom);
    let (f0, f1) = (&fs[0], &fs[fs.len() - 1]);
    let sum: Vec<f64> = f0.iter().zip(f1).map(|(a, b)| a + b).collect();
    let (n0, n1, ns) = (n_sup(&prof, f0), n_sup(&prof, f1), n_sup(&prof, &sum));
    let sub = (0..m.len()).map(|x| ns[x] - n0[x] - n1[x]).fold(f64::NEG_INFINITY, f64::max);
    c.at_most("maximal.sublinearity", sub, 1e-12);
    let scaled: Vec<f64> = f0.iter().map(|v| -3.0 * v).collect();
    let nsc = n_sup(&prof, &scaled);
    let hom = (0..m.len()).map(|x| rel(nsc[x], 3.0 * n0[x])).fold(0.0, f64::max);
    c.at_most("maximal.homogeneity", hom, 1e-12);

    // czo
    let plane = lebesgue_square(16)?;
    let pos: Vec<f64> = (0..plane.len()).map(|_| rng.gen::<f64>()).collect();
    let eps = 0.05;
    let i1 = i1_eps(&plane, &pos, eps);
    let mut dom_viol = 0usize;
    for k in [KernelSpec::cauchy_re(), KernelSpec::cauchy_im(), KernelSpec::frac(1.0)] {
        let t = apply_t_eps(&plane, &k, &pos, eps)?;
        dom_viol += (0..plane.len()).filter(|&x| t[x].abs() > k.c1 * i1[x] * (1.0 + 1e-12)).count();
    }
    c.at_most("czo.domination_by_i1", dom_viol as f64, 0.0);
    let line_eps = m.min_spacing() / 2.0;
    let h = KernelSpec::hilbert();
    let self_excl = if m.dim() == 1 {
        // T_eps of one atom's indicator vanishes at that atom
        let mut spike = vec![0.0; m.len()];
        spike[0] = 1.0;
        apply_t_eps(&m, &h, &spike, line_eps)?[0].abs()
    } else {
        0.0
    };
    c.at_most("czo.self_atom_excluded", self_excl, 0.0);
    for k in [KernelSpec::cauchy_re(), KernelSpec::cauchy_im(), KernelSpec::hilbert(), KernelSpec::frac(1.0)] {
        let r = check_cz_conditions(&k, 2, 2000, &mut rng);
        c.at_most(&format!("czo.conditions_{}", k.name), r.violations as f64, 0.0);
    }

    // weights
    let mut inv: f64 = 0.0;
    for p in [1.5, cfg.p, 4.0] {
        let w = Weight::from_components(&m, p, |k| (k as f64).powi(2)).or_else(|_| {
            Weight::new(&m, (0..m.len()).map(|i| 1.0 + (i % 7) as f64).collect(), p)
        })?;
        let back = w.dual().dual();
        for (a, b) in back.values().iter().zip(w.values()) {
            inv = inv.max(rel(*a, *b));
        }
    }
    c.at_most("weights.dual_involution", inv, tol.involution);
    let w = Weight::builtin(&cfg.weight, &m, cfg.p).or_else(|_| Weight::constant(&m, 1.0, cfg.p))?;
    let family = default_cube_family(&lat, 50, &mut rng);
    let ks: Vec<usize> = (0..=lat.k_max()).collect();
    let s1 = sawyer_constants(&prof, &w, &family, &ks)?;
    let s2 = sawyer_constants(&prof, &w.dual(), &family, &ks)?;
    c.at_most("weights.sawyer_duality", rel(s1.dual_const, s2.strong_const), tol.scaling);
    let s3 = sawyer_constants(&prof, &w.scaled(17.0)?, &family, &ks)?;
    c.at_most(
        "weights.sawyer_scaling",
        rel(s1.dual_const, s3.dual_const).max(rel(s1.strong_const, s3.strong_const)),
        tol.scaling,
    );
    let s4 = sawyer_constants(&prof, &w, &family[..family.len() / 2], &ks[..1])?;
    c.flag(
        "weights.sawyer_monotone",
        s4.dual_const <= s1.dual_const && s4.strong_const <= s1.strong_const,
    );

    // covering
    let root = Cube::new(vec![0.5, 0.5], 1.0);
    let regions = [
        Region::BoxInterior { cube: root.clone() },
        Region::Intersection {
            parts: vec![
                Region::HalfSpace { normal: vec![1.0, 0.0], offset: 0.5 },
                Region::BoxInterior { cube: root.clone() },
            ],
        },
        Region::Ball { center: vec![0.5, 0.5], radius: 0.4 },
    ];
    let mut wh = true;
    for r in &regions {
        wh &= certify_whitney(&whitney(r, &root, 6)?, 500, &mut rng).passed;
    }
    c.flag("covering.whitney", wh);
    let mut wi = true;
    let mut be = true;
    for _ in 0..5 {
        let (cubes, pts) = random_cover_instance(2, 100, 100, 0.002, 0.2, &mut rng);
        wi &= wiener_select(&cubes, &pts)?.certificate.passed;
        let pts: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let qs: Vec<Cube> = pts.iter().map(|p| Cube::new(p.clone(), rng.gen_range(-5.0..-1.0f64).exp())).collect();
        be &= besicovitch_select(&pts, &qs)?.certificate.passed;
    }
    c.flag("covering.wiener", wi);
    c.flag("covering.besicovitch", be);

    // the T_eps grid is part of the configuration surface
    c.at_least("czo.eps_grid_points", eps_grid(&m, 12).len() as f64, 12.0);

    let passed = c.0.iter().all(|k| k.passed);
    Ok(SuiteReport {
        schema: SCHEMA,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        checks: c.0,
        passed,
    })
}
