//! Per-atom ladders of nested cubes `Q_{x,k}` whose consecutive `delta`
//! increments are close to a fixed step `A`.
//!
//! Level `k = 0` is the initial cube (centred at `x`, containing the whole
//! support). Each later side is chosen so that `delta(Q_{x,k}, R^d)` is as
//! close as possible to `k A`, subject to a factor-100 gap between levels and
//! to the resolution floor of the measure. Once no admissible side yields an
//! increment within `eps_tol` of `A`, the ladder is collapsed to the point `x`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{delta, Cube};
use crate::error::{Error, Result};
use crate::measure::{dist, pow_n, sup_dist, DiscreteMeasure};

/// Default lower bound on `A`. In one dimension the kernel mass at a transit
/// scale is about `(A + 2.6) / A` (core plus cut-off overhead), which stays
/// below `10/9` once `A >= 23.4`.
pub const DEFAULT_A_MIN: f64 = 23.4;

/// Ratio between consecutive ladder sides is at least this.
pub const SCALE_GAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CubeClass {
    Initial,
    Transit,
    Stopping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScaleClass {
    Level(usize),
    AboveAll,
    BelowAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub a: f64,
    pub a_min: f64,
    /// `eps_tol = eps_frac * A`.
    pub eps_frac: f64,
    /// Number of levels after the initial one.
    pub k_span: usize,
    pub lipschitz: bool,
}

impl Default for LatticeParams {
    fn default() -> Self {
        LatticeParams {
            a: 40.0,
            a_min: DEFAULT_A_MIN,
            eps_frac: 0.05,
            k_span: 6,
            lipschitz: false,
        }
    }
}

impl LatticeParams {
    pub fn with_a(a: f64) -> Self {
        LatticeParams {
            a,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lattice<'m> {
    measure: &'m DiscreteMeasure,
    params: LatticeParams,
    /// `raw_sides[x][k]`: ladder sides before any regularization.
    raw_sides: Vec<Vec<f64>>,
    sides: Vec<Vec<f64>>,
    classes: Vec<Vec<CubeClass>>,
    epsilon_observed: f64,
}

struct Ladder {
    sides: Vec<f64>,
    classes: Vec<CubeClass>,
    eps: f64,
}

fn build_ladder(m: &DiscreteMeasure, x: usize, p: &LatticeParams, r_min: f64) -> Ladder {
    let k_max = p.k_span;
    let a = p.a;
    let eps_tol = p.eps_frac * a;
    let n = m.growth_exponent();
    let px = m.point(x);

    let mut l0: f64 = 0.0;
    let mut w_total = 0.0;
    for j in 0..m.len() {
        let pj = m.point(j);
        l0 = l0.max(2.0 * sup_dist(pj, px));
        let r = dist(pj, px);
        if r > 0.0 {
            w_total += m.mass(j) / pow_n(r, n);
        }
    }

    let mut sides = vec![0.0; k_max + 1];
    let mut classes = vec![CubeClass::Stopping; k_max + 1];
    sides[0] = l0;
    classes[0] = CubeClass::Initial;
    if l0 == 0.0 {
        return Ladder {
            sides,
            classes,
            eps: 0.0,
        };
    }

    // atoms that can enter a cube of side <= l0 / 100, sorted by sup-distance
    let reach = l0 / (2.0 * SCALE_GAP);
    let mut near: Vec<(f64, f64)> = (0..m.len())
        .filter_map(|j| {
            let u = sup_dist(m.point(j), px);
            (u > 0.0 && u <= reach).then(|| (u, m.mass(j) / pow_n(dist(m.point(j), px), n)))
        })
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // breakpoints t_j and the inner sum P(t_j) over atoms with u <= t_j
    let mut t = vec![0.0];
    let mut pref = vec![0.0];
    let mut acc = 0.0;
    let mut i = 0;
    while i < near.len() {
        let u = near[i].0;
        while i < near.len() && near[i].0 == u {
            acc += near[i].1;
            i += 1;
        }
        t.push(u);
        pref.push(acc);
    }

    let mut eps_obs: f64 = 0.0;
    let mut d_prev = 0.0;
    for k in 1..=k_max {
        let cap = sides[k - 1] / SCALE_GAP;
        if cap < r_min {
            break;
        }
        let target = k as f64 * a;
        // best (error, s, D(s)) over candidate intervals; ties go to the larger side
        let mut best: Option<(f64, f64, f64)> = None;
        for j in 0..t.len() {
            let lo = (2.0 * t[j]).max(r_min);
            let next = t.get(j + 1).map(|v| 2.0 * v);
            let s = match next {
                Some(hi_ex) if hi_ex <= cap => {
                    if lo >= hi_ex {
                        continue;
                    }
                    0.5 * (lo + hi_ex)
                }
                _ => {
                    if lo > cap {
                        continue;
                    }
                    0.5 * (lo + cap)
                }
            };
            let d = w_total - pref[j];
            let err = (d - target).abs();
            if best.is_none_or(|(e, _, _)| err <= e) {
                best = Some((err, s, d));
            }
        }
        let Some((_, s, d)) = best else { break };
        let inc = d - d_prev;
        if (inc - a).abs() > eps_tol {
            break;
        }
        eps_obs = eps_obs.max((inc - a).abs());
        sides[k] = s;
        classes[k] = CubeClass::Transit;
        d_prev = d;
    }
    Ladder {
        sides,
        classes,
        eps: eps_obs,
    }
}

impl<'m> Lattice<'m> {
    pub fn build(m: &'m DiscreteMeasure, params: LatticeParams) -> Result<Self> {
        if !(params.a.is_finite() && params.a >= params.a_min) {
            return Err(Error::ABelowMinimum {
                a: params.a,
                a_min: params.a_min,
            });
        }
        if !(params.eps_frac > 0.0 && params.eps_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps_frac = {} must lie in (0, 1)",
                params.eps_frac
            )));
        }
        if params.k_span == 0 {
            return Err(Error::InvalidParameter("k_span must be positive".into()));
        }
        let r_min = m.resolution_floor();
        let ladders: Vec<Ladder> = (0..m.len())
            .into_par_iter()
            .map(|x| build_ladder(m, x, &params, r_min))
            .collect();
        let epsilon_observed = ladders.iter().map(|l| l.eps).fold(0.0, f64::max);
        let mut raw_sides = Vec::with_capacity(m.len());
        let mut classes = Vec::with_capacity(m.len());
        for l in ladders {
            raw_sides.push(l.sides);
            classes.push(l.classes);
        }
        let mut lat = Lattice {
            measure: m,
            params,
            sides: raw_sides.clone(),
            raw_sides,
            classes,
            epsilon_observed,
        };
        if params.lipschitz {
            lat.apply_lipschitz();
        }
        Ok(lat)
    }

    /// Assembles a lattice from explicit ladders (used for fault injection and
    /// for loading cached lattices). No invariant is enforced here.
    pub fn from_parts(
        m: &'m DiscreteMeasure,
        params: LatticeParams,
        sides: Vec<Vec<f64>>,
        classes: Vec<Vec<CubeClass>>,
    ) -> Result<Self> {
        if sides.len() != m.len() || classes.len() != m.len() {
            return Err(Error::LengthMismatch {
                expected: m.len(),
                got: sides.len().min(classes.len()),
            });
        }
        let levels = params.k_span + 1;
        if sides.iter().any(|s| s.len() != levels) || classes.iter().any(|c| c.len() != levels) {
            return Err(Error::InvalidParameter("ladder length differs from k_span + 1".into()));
        }
        Ok(Lattice {
            measure: m,
            params,
            raw_sides: sides.clone(),
            sides,
            classes,
            epsilon_observed: f64::NAN,
        })
    }

    fn apply_lipschitz(&mut self) {
        let k_max = self.k_max();
        let mut psi: Vec<Vec<f64>> = vec![vec![0.0; k_max + 1]; self.measure.len()];
        for k in 0..=k_max {
            let col = self.lipschitz_sides(k);
            for (x, v) in col.into_iter().enumerate() {
                psi[x][k] = v;
            }
        }
        for (x, row) in psi.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                if k > 0 {
                    self.classes[x][k] = if v > 0.0 {
                        CubeClass::Transit
                    } else {
                        CubeClass::Stopping
                    };
                }
                self.sides[x][k] = v;
            }
        }
        self.params.lipschitz = true;
    }

    pub fn measure(&self) -> &'m DiscreteMeasure {
        self.measure
    }
    pub fn params(&self) -> &LatticeParams {
        &self.params
    }
    pub fn a(&self) -> f64 {
        self.params.a
    }
    pub fn eps_tol(&self) -> f64 {
        self.params.eps_frac * self.params.a
    }
    pub fn k_min(&self) -> usize {
        0
    }
    pub fn k_max(&self) -> usize {
        self.params.k_span
    }
    pub fn epsilon_observed(&self) -> f64 {
        self.epsilon_observed
    }
    pub fn side(&self, x: usize, k: usize) -> f64 {
        self.sides[x][k]
    }
    pub fn raw_side(&self, x: usize, k: usize) -> f64 {
        self.raw_sides[x][k]
    }
    pub fn class(&self, x: usize, k: usize) -> CubeClass {
        self.classes[x][k]
    }
    pub fn ladder(&self, x: usize) -> &[f64] {
        &self.sides[x]
    }
    pub fn cube(&self, x: usize, k: usize) -> Cube {
        Cube::new(self.measure.point(x).to_vec(), self.sides[x][k])
    }

    /// Last level whose cube is not a point, i.e. `K_x`.
    pub fn last_nonpoint(&self, x: usize) -> usize {
        (0..=self.k_max())
            .rev()
            .find(|&k| self.sides[x][k] > 0.0)
            .unwrap_or(0)
    }

    /// Transit levels `k` with at least two further transit levels below.
    pub fn deep_transit(&self, x: usize, k: usize) -> bool {
        self.classes[x][k] == CubeClass::Transit
            && k + 2 <= self.k_max()
            && self.classes[x][k + 2] == CubeClass::Transit
    }

    /// `psi_k(p) = max_z (l(Q_{z,k}) - |p - z|)`, clipped at 0, for any point `p`.
    pub fn psi_at(&self, k: usize, p: &[f64]) -> f64 {
        let m = self.measure;
        (0..m.len())
            .map(|z| self.raw_sides[z][k] - dist(m.point(z), p))
            .fold(0.0, f64::max)
    }

    /// The 1-Lipschitz regularization `psi_k` at every atom.
    pub fn lipschitz_sides(&self, k: usize) -> Vec<f64> {
        let m = self.measure;
        (0..m.len())
            .into_par_iter()
            .map(|x| self.psi_at(k, m.point(x)))
            .collect()
    }

    /// The scale class of an arbitrary cube: the level of the smallest
    /// non-degenerate lattice cube containing it.
    pub fn ad_class(&self, q: &Cube) -> ScaleClass {
        let mut best: Option<(f64, usize)> = None;
        for x in 0..self.measure.len() {
            for k in 0..=self.k_max() {
                let s = self.sides[x][k];
                if s <= 0.0 {
                    break;
                }
                if best.is_some_and(|(b, _)| s >= b) {
                    continue;
                }
                if self.cube(x, k).contains_cube(q) {
                    best = Some((s, k));
                }
            }
        }
        match best {
            None => ScaleClass::AboveAll,
            Some((_, k)) if k == self.k_max() => ScaleClass::BelowAll,
            Some((_, k)) => ScaleClass::Level(k),
        }
    }

    /// Checks the ladder invariants on `samples` random atom pairs.
    pub fn check_invariants<R: Rng>(&self, samples: usize, rng: &mut R) -> LatticeReport {
        let m = self.measure;
        let k_max = self.k_max();
        let mut rep = LatticeReport::default();
        rep.epsilon_observed = self.epsilon_observed;
        rep.eps_tol = self.eps_tol();

        for x in 0..m.len() {
            for k in 1..=k_max {
                if self.sides[x][k] > self.sides[x][k - 1] {
                    rep.nesting_violations += 1;
                    rep.witness.get_or_insert_with(|| format!("nesting x={x} k={k}"));
                }
                if self.classes[x][k - 1] == CubeClass::Stopping && self.classes[x][k] != CubeClass::Stopping {
                    rep.stopping_violations += 1;
                    rep.witness.get_or_insert_with(|| format!("stopping x={x} k={k}"));
                }
                if self.classes[x][k] == CubeClass::Transit && self.classes[x][k - 1] != CubeClass::Stopping {
                    rep.transit_pairs += 1;
                    let inc = delta(m, &self.cube(x, k), &self.cube(x, k - 1)).unwrap_or(f64::NAN);
                    let err = (inc - self.a()).abs();
                    rep.max_increment_error = rep.max_increment_error.max(err);
                    if !(err <= self.eps_tol()) {
                        rep.increment_violations += 1;
                        rep.witness
                            .get_or_insert_with(|| format!("increment x={x} k={k} delta={inc}"));
                    }
                }
            }
        }

        let mut eta = f64::INFINITY;
        for _ in 0..samples {
            let x = rng.gen_range(0..m.len());
            let y = rng.gen_range(0..m.len());
            for k in 1..=k_max {
                let qx = self.cube(x, k).dilate(2.0);
                let qy = self.cube(y, k).dilate(2.0);
                if qx.intersects(&qy) {
                    rep.separation_pairs += 1;
                    if !self.cube(y, k - 1).contains_cube(&qx) {
                        rep.separation_violations += 1;
                        rep.witness
                            .get_or_insert_with(|| format!("separation x={x} y={y} k={k}"));
                    }
                }
            }
            for k in 0..k_max {
                for j in k + 1..=k_max {
                    let (a, b) = (self.sides[y][k], self.sides[y][j]);
                    if self.classes[y][j] == CubeClass::Transit && b > 0.0 {
                        eta = eta.min((a / b).log2() / (self.a() * (j - k) as f64));
                    }
                }
            }
        }
        rep.eta_observed = eta.is_finite().then_some(eta);
        rep.passed = rep.nesting_violations == 0
            && rep.stopping_violations == 0
            && rep.increment_violations == 0
            && rep.separation_violations == 0
            && rep.eta_observed.is_none_or(|e| e > 0.0);
        rep
    }

    /// Fault injection: every transit step ratio `l(Q_{x,k-1}) / l(Q_{x,k})`
    /// is raised to the power `1 + frac`, which shifts each increment by about
    /// `frac * A`.
    pub fn perturbed(&self, frac: f64) -> Lattice<'m> {
        let mut out = self.clone();
        for x in 0..self.measure.len() {
            for k in 1..=self.k_max() {
                if self.classes[x][k] == CubeClass::Transit {
                    let ratio = self.sides[x][k - 1] / self.sides[x][k];
                    out.sides[x][k] = out.sides[x][k - 1] / ratio.powf(1.0 + frac);
                }
            }
        }
        out.raw_sides = out.sides.clone();
        out.epsilon_observed = f64::NAN;
        out
    }

    pub fn to_json(&self) -> LatticeJson {
        LatticeJson {
            schema: 1,
            a: self.a(),
            eps_tol: self.eps_tol(),
            k_min: 0,
            k_max: self.k_max(),
            lipschitz: self.params.lipschitz,
            epsilon_observed: self.epsilon_observed,
            sides: self.sides.clone(),
            classes: self.classes.clone(),
        }
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for row in &self.classes {
            for cl in row {
                match cl {
                    CubeClass::Initial => c.initial += 1,
                    CubeClass::Transit => c.transit += 1,
                    CubeClass::Stopping => c.stopping += 1,
                }
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub initial: usize,
    pub transit: usize,
    pub stopping: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatticeReport {
    pub nesting_violations: usize,
    pub stopping_violations: usize,
    pub transit_pairs: usize,
    pub increment_violations: usize,
    pub max_increment_error: f64,
    pub separation_pairs: usize,
    pub separation_violations: usize,
    /// `min log2(l(Q_{y,k}) / l(Q_{y,j})) / (A (j - k))` over sampled transit pairs.
    pub eta_observed: Option<f64>,
    pub epsilon_observed: f64,
    pub eps_tol: f64,
    pub witness: Option<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeJson {
    pub schema: u32,
    pub a: f64,
    pub eps_tol: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub lipschitz: bool,
    pub epsilon_observed: f64,
    pub sides: Vec<Vec<f64>>,
    pub classes: Vec<Vec<CubeClass>>,
}
