//! Closed axis-parallel cubes, the cube distance `delta(Q, R)`, and doubling
//! searches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dist, pow_n, DiscreteMeasure};

/// A closed cube `{y : |y - center|_inf <= side / 2}`.
///
/// `side == 0` is a point and `side == inf` is the whole space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "CubeRepr", into = "CubeRepr")]
pub struct Cube {
    center: Vec<f64>,
    side: f64,
}

#[derive(Serialize, Deserialize)]
struct CubeRepr {
    center: Vec<f64>,
    /// `null` encodes the whole space.
    side: Option<f64>,
}

impl From<CubeRepr> for Cube {
    fn from(r: CubeRepr) -> Self {
        Cube {
            center: r.center,
            side: r.side.unwrap_or(f64::INFINITY),
        }
    }
}

impl From<Cube> for CubeRepr {
    fn from(c: Cube) -> Self {
        CubeRepr {
            side: c.side.is_finite().then_some(c.side),
            center: c.center,
        }
    }
}

impl Cube {
    pub fn new(center: Vec<f64>, side: f64) -> Self {
        debug_assert!(side >= 0.0, "negative side {side}");
        Cube { center, side }
    }

    pub fn point(center: Vec<f64>) -> Self {
        Cube { center, side: 0.0 }
    }

    pub fn whole_space(dim: usize) -> Self {
        Cube {
            center: vec![0.0; dim],
            side: f64::INFINITY,
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_whole_space(&self) -> bool {
        self.side.is_infinite()
    }

    pub fn is_point(&self) -> bool {
        self.side == 0.0
    }

    /// Euclidean diameter `side * sqrt(d)`.
    pub fn diam(&self) -> f64 {
        self.side * (self.dim() as f64).sqrt()
    }

    /// `rho Q`: same centre, side multiplied by `rho`.
    pub fn dilate(&self, rho: f64) -> Cube {
        Cube {
            center: self.center.clone(),
            side: self.side * rho,
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - self.side / 2.0).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().map(|c| c + self.side / 2.0).collect()
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        if self.is_whole_space() {
            return true;
        }
        let h = self.side / 2.0;
        self.center.iter().zip(p).all(|(c, x)| (x - c).abs() <= h)
    }

    /// Closed containment `other ⊂ self`, up to a few ulps of the coordinates.
    pub fn contains_cube(&self, other: &Cube) -> bool {
        if self.is_whole_space() {
            return true;
        }
        if other.is_whole_space() {
            return false;
        }
        let h = self.side / 2.0;
        let g = other.side / 2.0;
        self.center
            .iter()
            .zip(&other.center)
            .all(|(a, b)| {
                let tol = 4.0 * f64::EPSILON * (a.abs() + b.abs() + h + g);
                b - g >= a - h - tol && b + g <= a + h + tol
            })
    }

    /// Whether the closed cubes share a point.
    pub fn intersects(&self, other: &Cube) -> bool {
        if self.is_whole_space() || other.is_whole_space() {
            return true;
        }
        let s = (self.side + other.side) / 2.0;
        self.center
            .iter()
            .zip(&other.center)
            .all(|(a, b)| (a - b).abs() <= s)
    }

    /// Largest `t` such that the cubes are separated by `t` along some axis;
    /// positive iff they are disjoint.
    pub fn separation(&self, other: &Cube) -> f64 {
        let s = (self.side + other.side) / 2.0;
        self.center
            .iter()
            .zip(&other.center)
            .map(|(a, b)| (a - b).abs() - s)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Q_R`: the smallest cube concentric with `Q` containing `Q` and `R`.
pub fn enclosing_cube(q: &Cube, r: &Cube) -> Cube {
    if q.is_whole_space() || r.is_whole_space() {
        return Cube::whole_space(q.dim());
    }
    let half = q
        .center
        .iter()
        .zip(&r.center)
        .map(|(zq, zr)| (zr - zq).abs() + r.side / 2.0)
        .fold(q.side / 2.0, f64::max);
    Cube::new(q.center.clone(), 2.0 * half)
}

/// `delta(Q, R)`: the sum over atoms `a` in `Q_R \ Q` of `mass(a) / |a - z_Q|^n`.
///
/// Requires `Q ⊂ R`.
pub fn delta(m: &DiscreteMeasure, q: &Cube, r: &Cube) -> Result<f64> {
    if !r.contains_cube(q) {
        return Err(Error::NotNested);
    }
    if q.is_whole_space() {
        return Ok(0.0);
    }
    let qr = enclosing_cube(q, r);
    let n = m.growth_exponent();
    let z = q.center();
    Ok(m.atoms_in_cube(&qr)
        .into_iter()
        .filter(|&i| !q.contains_point(m.point(i)))
        .map(|i| m.mass(i) / pow_n(dist(m.point(i), z), n))
        .sum())
}

/// `mu(alpha Q) <= beta mu(Q)`; a null cube is doubling iff `alpha Q` is null too.
pub fn is_doubling(m: &DiscreteMeasure, q: &Cube, alpha: f64, beta: f64) -> bool {
    is_doubling_weighted(m, None, q, alpha, beta)
}

/// Doubling test for the measure `values dmu` (plain `mu` when `values` is `None`).
pub fn is_doubling_weighted(
    m: &DiscreteMeasure,
    values: Option<&[f64]>,
    q: &Cube,
    alpha: f64,
    beta: f64,
) -> bool {
    let mass = |c: &Cube| match values {
        Some(v) => m.weighted_cube_mass(v, c),
        None => m.cube_mass(c),
    };
    let small = mass(q);
    let big = mass(&q.dilate(alpha));
    if small == 0.0 {
        big == 0.0
    } else {
        big <= beta * small
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingSearch {
    pub cube: Cube,
    /// Number of ladder cubes examined.
    pub steps: usize,
    /// True when the ladder hit its cap without finding a doubling cube.
    pub capped: bool,
}

/// Smallest `(alpha, beta)`-doubling cube centred at `x` on the ladder
/// `c, alpha c, alpha^2 c, ...`, capped at side `10 diam(supp)`.
pub fn find_big_doubling(
    m: &DiscreteMeasure,
    x: &[f64],
    c: f64,
    alpha: f64,
    beta: f64,
) -> Result<DoublingSearch> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must exceed 1")));
    }
    let bound = pow_n(alpha, m.growth_exponent());
    if !(beta > bound) {
        return Err(Error::DoublingPrecondition { beta, bound });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial side {c} must be positive")));
    }
    let cap = 10.0 * m.diameter();
    let mut side = c;
    let mut steps = 0;
    loop {
        steps += 1;
        let q = Cube::new(x.to_vec(), side);
        if is_doubling(m, &q, alpha, beta) {
            return Ok(DoublingSearch {
                cube: q,
                steps,
                capped: false,
            });
        }
        if side >= cap {
            return Ok(DoublingSearch {
                cube: q,
                steps,
                capped: true,
            });
        }
        side = (side * alpha).min(cap.max(side));
    }
}

/// First cube `P` on the ladder `R, R/100, R/100^2, ...` (down to `Q`) that is
/// `(100, beta)`-doubling for both `mu` and `sigma dmu`.
pub fn find_mu_sigma_doubling(
    m: &DiscreteMeasure,
    sigma: &[f64],
    q: &Cube,
    r: &Cube,
    beta: f64,
) -> Result<Option<Cube>> {
    if q.center() != r.center() {
        return Err(Error::NotConcentric);
    }
    if !r.contains_cube(q) || r.is_whole_space() {
        return Err(Error::NotNested);
    }
    if sigma.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            got: sigma.len(),
        });
    }
    let mut side = r.side();
    while side >= q.side() {
        let p = Cube::new(r.center().to_vec(), side);
        if is_doubling(m, &p, 100.0, beta) && is_doubling_weighted(m, Some(sigma), &p, 100.0, beta) {
            return Ok(Some(p));
        }
        if side == 0.0 {
            break;
        }
        side /= 100.0;
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaPropertyReport {
    pub trials: usize,
    /// `max delta(Q, rho Q) / rho^n` over `rho in {2, 4, 8}`.
    pub max_dilation_ratio: f64,
    /// The bound `C0 2^n`.
    pub dilation_bound: f64,
    pub dilation_violations: usize,
    /// `max delta(Q, R) / (1 + ln(l(R) / l(Q)))` over concentric pairs.
    pub max_log_ratio: f64,
    /// `max |delta(P, R) - delta(P, Q) - delta(Q, R)|` over nested triples.
    pub max_additivity_defect: f64,
    pub log_ratio_bound: Option<f64>,
    pub defect_bound: Option<f64>,
    pub passed: bool,
}

/// Thresholds for the two statistics whose constants are calibrated per
/// measure family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaBounds {
    pub log_ratio: Option<f64>,
    pub defect: Option<f64>,
}

/// A random cube centred near a random atom with log-uniform side in `[lo, hi]`.
pub fn random_cube<R: Rng>(m: &DiscreteMeasure, rng: &mut R, lo: f64, hi: f64) -> Cube {
    let i = rng.gen_range(0..m.len());
    let side = if hi > lo {
        (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
    } else {
        lo
    };
    let center = m
        .point(i)
        .iter()
        .map(|c| c + rng.gen_range(-0.5..0.5) * side)
        .collect();
    Cube::new(center, side)
}

/// A random cube contained in `outer` with side `outer.side() * frac`.
pub fn random_subcube<R: Rng>(rng: &mut R, outer: &Cube, frac: f64) -> Cube {
    let side = outer.side() * frac;
    let slack = (outer.side() - side) / 2.0;
    let center = outer
        .center()
        .iter()
        .map(|c| c + rng.gen_range(-1.0..=1.0) * slack)
        .collect();
    Cube::new(center, side)
}

/// Samples cubes and nested triples and measures the three `delta` statistics.
pub fn check_delta_properties<R: Rng>(
    m: &DiscreteMeasure,
    trials: usize,
    bounds: DeltaBounds,
    rng: &mut R,
) -> DeltaPropertyReport {
    let n = m.growth_exponent();
    let lo = m.resolution_floor().max(1e-9 * m.diameter().max(1e-300));
    let hi = m.diameter().max(lo);
    let dilation_bound = m.growth_constant() * pow_n(2.0, n);
    let mut max_dil: f64 = 0.0;
    let mut violations = 0;
    let mut max_log: f64 = 0.0;
    let mut max_defect: f64 = 0.0;
    for _ in 0..trials {
        let q = random_cube(m, rng, lo, hi);
        for rho in [2.0, 4.0, 8.0] {
            let d = delta(m, &q, &q.dilate(rho)).expect("concentric dilation is nested");
            let ratio = d / pow_n(rho, n);
            max_dil = max_dil.max(ratio);
            if ratio > dilation_bound {
                violations += 1;
            }
        }
        let rho = (rng.gen::<f64>() * 6.0).exp();
        let r = q.dilate(rho);
        let d = delta(m, &q, &r).expect("nested");
        max_log = max_log.max(d / (1.0 + rho.ln()));

        let (p, q2, r2) = random_nested_triple(rng, &q);
        let dpr = delta(m, &p, &r2).expect("nested");
        let dpq = delta(m, &p, &q2).expect("nested");
        let dqr = delta(m, &q2, &r2).expect("nested");
        max_defect = max_defect.max((dpr - dpq - dqr).abs());
    }
    let passed = violations == 0
        && bounds.log_ratio.is_none_or(|b| max_log <= b)
        && bounds.defect.is_none_or(|b| max_defect <= b);
    DeltaPropertyReport {
        trials,
        max_dilation_ratio: max_dil,
        dilation_bound,
        dilation_violations: violations,
        max_log_ratio: max_log,
        max_additivity_defect: max_defect,
        log_ratio_bound: bounds.log_ratio,
        defect_bound: bounds.defect,
        passed,
    }
}

/// Non-concentric nested triple `P ⊂ Q ⊂ R` with `Q` the given cube.
pub fn random_nested_triple<R: Rng>(rng: &mut R, q: &Cube) -> (Cube, Cube, Cube) {
    let frac = (-rng.gen::<f64>() * 4.0).exp();
    let p = random_subcube(rng, q, frac);
    let grow = (rng.gen::<f64>() * 4.0).exp();
    let big = q.dilate(grow);
    // shift R so that Q stays inside it
    let slack = (big.side() - q.side()) / 2.0;
    let center = q
        .center()
        .iter()
        .map(|c| c + rng.gen_range(-1.0..=1.0) * slack)
        .collect();
    (p, q.clone(), Cube::new(center, big.side()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{lebesgue_interval, saksman_intervals};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_delta(m: &DiscreteMeasure, q: &Cube, r: &Cube) -> f64 {
        // independent form: Q_R via corner enumeration in 1-D/2-D
        let qr = enclosing_cube(q, r);
        (0..m.len())
            .filter(|&i| qr.contains_point(m.point(i)) && !q.contains_point(m.point(i)))
            .map(|i| m.mass(i) / dist(m.point(i), q.center()).powf(m.growth_exponent()))
            .sum()
    }

    #[test]
    fn enclosing_examples() {
        let q = Cube::new(vec![0.0], 2.0);
        assert_eq!(enclosing_cube(&q, &q), q);
        let r = Cube::new(vec![3.0], 2.0);
        assert_eq!(enclosing_cube(&q, &r), Cube::new(vec![0.0], 8.0));
        assert!(enclosing_cube(&q, &Cube::whole_space(1)).is_whole_space());
    }

    #[test]
    fn enclosing_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let q = Cube::new(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(0.0..1.0));
            let r = Cube::new(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(0.0..1.0));
            let e = enclosing_cube(&q, &r);
            assert!(e.contains_cube(&q) && e.contains_cube(&r));
            let shrunk = e.dilate(1.0 - 1e-9);
            assert!(!(shrunk.contains_cube(&q) && shrunk.contains_cube(&r)));
        }
    }

    #[test]
    fn delta_single_atom() {
        let m = DiscreteMeasure::from_atoms(1, 1.0, 1.0, &[(vec![3.0], 0.5)]).unwrap();
        let q = Cube::new(vec![0.0], 2.0);
        let r = Cube::new(vec![0.0], 10.0);
        assert!((delta(&m, &q, &r).unwrap() - 0.5 / 3.0).abs() < 1e-15);
        assert_eq!(delta(&m, &q, &q).unwrap(), 0.0);
        assert_eq!(delta(&m, &Cube::new(vec![0.0], 8.0), &r).unwrap(), 0.0);
        assert_eq!(delta(&m, &r, &q), Err(Error::NotNested));
    }

    #[test]
    fn delta_matches_brute_force() {
        let m = saksman_intervals(6, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let q = random_cube(&m, &mut rng, 1e-4, 1.0);
            let (p, q, r) = random_nested_triple(&mut rng, &q);
            for (a, b) in [(&p, &q), (&q, &r), (&p, &r)] {
                let x = delta(&m, a, b).unwrap();
                let y = brute_delta(&m, a, b);
                assert!((x - y).abs() <= 1e-10 * y.max(1e-300));
            }
        }
    }

    #[test]
    fn delta_whole_space_sums_outside() {
        let m = lebesgue_interval(16).unwrap();
        let q = Cube::new(vec![0.5], 0.25);
        let all = delta(&m, &q, &Cube::whole_space(1)).unwrap();
        let expected: f64 = (0..16)
            .filter(|&i| (m.point(i)[0] - 0.5).abs() > 0.125)
            .map(|i| (1.0 / 16.0) / (m.point(i)[0] - 0.5).abs())
            .sum();
        assert!((all - expected).abs() < 1e-12);
    }

    #[test]
    fn doubling_examples() {
        let m = lebesgue_interval(1000).unwrap();
        assert!(is_doubling(&m, &Cube::new(vec![0.5], 4.0), 3.0, 1.01));
        // interior cube [0.4, 0.6]: 2Q = [0.3, 0.7] holds exactly twice the mass
        let q = Cube::new(vec![0.5], 0.2);
        assert!((m.cube_mass(&q.dilate(2.0)) - 2.0 * m.cube_mass(&q)).abs() < 1e-12);
        assert!(is_doubling(&m, &q, 2.0, 2.0));
        let two = DiscreteMeasure::from_atoms(1, 1.0, 1.0, &[(vec![0.0], 1.0), (vec![1.0], 2.0)]).unwrap();
        assert!(!is_doubling(&two, &Cube::new(vec![0.0], 1.0), 2.0, 2.0));
    }

    #[test]
    fn big_doubling_ladder() {
        let m = saksman_intervals(6, 64).unwrap();
        assert!(matches!(
            find_big_doubling(&m, &[0.5], 0.01, 2.0, 2.0),
            Err(Error::DoublingPrecondition { .. })
        ));
        let c = m.min_spacing();
        let near = (0..m.len())
            .min_by(|&a, &b| (m.point(a)[0] - 0.5).abs().total_cmp(&(m.point(b)[0] - 0.5).abs()))
            .unwrap();
        let x = [m.point(near)[0]];
        let found = find_big_doubling(&m, &x, c, 2.0, 4.0).unwrap();
        let mut side = c;
        loop {
            let q = Cube::new(x.to_vec(), side);
            if m.cube_mass(&q.dilate(2.0)) <= 4.0 * m.cube_mass(&q) {
                assert!((found.cube.side() - side).abs() <= 1e-12 * side);
                break;
            }
            side *= 2.0;
        }
        let bound = (10.0 * m.diameter() / c).ln() / 2f64.ln() + 1.0;
        assert!(found.steps as f64 <= bound + 1.0);
        let whole = find_big_doubling(&m, &[0.5], 4.0, 2.0, 4.0).unwrap();
        assert_eq!(whole.cube.side(), 4.0);
        assert_eq!(whole.steps, 1);
    }

    #[test]
    fn mu_sigma_doubling_trivial() {
        let m = saksman_intervals(4, 16).unwrap();
        let sigma = vec![1.0; m.len()];
        let r = Cube::new(vec![0.5], 10.0);
        let q = Cube::new(vec![0.5], 0.001);
        assert_eq!(find_mu_sigma_doubling(&m, &sigma, &q, &r, 1e9).unwrap(), Some(r.clone()));
        let off = Cube::new(vec![0.4], 0.001);
        assert_eq!(find_mu_sigma_doubling(&m, &sigma, &off, &r, 2.0), Err(Error::NotConcentric));
    }

    #[test]
    fn dilation_bound_on_test_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [lebesgue_interval(512).unwrap(), saksman_intervals(6, 64).unwrap()] {
            let rep = check_delta_properties(&m, 200, DeltaBounds::default(), &mut rng);
            assert_eq!(rep.dilation_violations, 0, "{rep:?}");
            assert!(rep.passed);
        }
    }

    #[test]
    fn distant_atom_gives_zero_statistics() {
        let m = DiscreteMeasure::from_atoms(1, 1.0, 1.0, &[(vec![100.0], 1.0)]).unwrap();
        let q = Cube::new(vec![0.0], 1.0);
        assert_eq!(delta(&m, &q, &q.dilate(8.0)).unwrap(), 0.0);
    }

    #[test]
    fn cube_serde_whole_space() {
        let w = Cube::whole_space(2);
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("null"));
        let back: Cube = serde_json::from_str(&s).unwrap();
        assert!(back.is_whole_space());
    }
}
