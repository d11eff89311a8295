//! Radial approximation-of-identity kernels `s_k(x, y)` built on a lattice, and
//! the averaging operators `S_k`, `S_k^*`.
//!
//! With `l = l(Q_{x,k})` and `L = l(Q_{x,k-1})` (`L = inf` at the initial
//! level) the profile is
//!
//! ```text
//! s_k(x, y) = cut(|x - y|) / (A max(|x - y|, r_core)^n)
//! r_core = max(l / 2, r_min / 2),  r_out = L sqrt(d) / 2,  r_supp = L
//! ```
//!
//! where `cut` is `1` up to `r_out`, the cubic `1 - 3u^2 + 2u^3` on
//! `[r_out, r_supp]`, and `0` beyond. The kernel vanishes when `Q_{x,k-1}` is
//! a point.

use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CubeClass, Lattice};
use crate::measure::{dist, pow_n};

/// Operators with more stored entries than this are applied on the fly.
pub const OPERATOR_BUDGET: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radii {
    pub core: f64,
    pub out: f64,
    pub supp: f64,
}

impl Radii {
    #[inline]
    fn value(&self, r: f64, a: f64, n: f64) -> f64 {
        if r >= self.supp {
            return 0.0;
        }
        let base = 1.0 / (a * pow_n(r.max(self.core), n));
        if r <= self.out {
            base
        } else {
            let u = (r - self.out) / (self.supp - self.out);
            base * (1.0 - u * u * (3.0 - 2.0 * u))
        }
    }
}

/// Sparse rows `x -> [(y, s_k(x, y))]` and the transposed columns.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    row_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    row_val: Vec<f64>,
    col_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    col_val: Vec<f64>,
}

impl KernelOperator {
    pub fn nnz(&self) -> usize {
        self.row_val.len()
    }

    pub fn row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[x]..self.row_ptr[x + 1];
        self.row_idx[r.clone()]
            .iter()
            .zip(&self.row_val[r])
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn col(&self, y: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[y]..self.col_ptr[y + 1];
        self.col_idx[r.clone()]
            .iter()
            .zip(&self.col_val[r])
            .map(|(&i, &v)| (i as usize, v))
    }
}

pub struct KernelProfile<'a> {
    lattice: &'a Lattice<'a>,
    r_min: f64,
    sqrt_d: f64,
    ops: Vec<OnceLock<Option<KernelOperator>>>,
    budget: usize,
}

impl<'a> KernelProfile<'a> {
    pub fn new(lattice: &'a Lattice<'a>) -> Result<Self> {
        let d = lattice.measure().dim();
        if d > 3 {
            return Err(Error::UnsupportedDimension(d));
        }
        Ok(KernelProfile {
            lattice,
            r_min: lattice.measure().resolution_floor(),
            sqrt_d: (d as f64).sqrt(),
            ops: (0..=lattice.k_max()).map(|_| OnceLock::new()).collect(),
            budget: OPERATOR_BUDGET,
        })
    }

    /// Overrides the stored-operator budget (0 forces on-the-fly evaluation).
    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn lattice(&self) -> &'a Lattice<'a> {
        self.lattice
    }

    pub fn a(&self) -> f64 {
        self.lattice.a()
    }

    fn n(&self) -> f64 {
        self.lattice.measure().growth_exponent()
    }

    fn radii_from(&self, small: f64, big: f64) -> Option<Radii> {
        if big <= 0.0 {
            return None;
        }
        Some(Radii {
            core: (small / 2.0).max(self.r_min / 2.0),
            out: big * self.sqrt_d / 2.0,
            supp: big,
        })
    }

    /// Profile radii at atom `x`, scale `k`; `None` when `s_k(x, .) == 0`.
    pub fn radii(&self, x: usize, k: usize) -> Option<Radii> {
        if k > self.lattice.k_max() {
            return None;
        }
        let big = if k == 0 {
            f64::INFINITY
        } else {
            self.lattice.side(x, k - 1)
        };
        self.radii_from(self.lattice.side(x, k), big)
    }

    /// Profile radii at an arbitrary point, using the regularized sides `psi`.
    pub fn radii_at_point(&self, k: usize, p: &[f64]) -> Option<Radii> {
        if k > self.lattice.k_max() {
            return None;
        }
        let big = if k == 0 {
            f64::INFINITY
        } else {
            self.lattice.psi_at(k - 1, p)
        };
        if big <= 0.0 {
            return None;
        }
        self.radii_from(self.lattice.psi_at(k, p), big)
    }

    /// `s_k(x, y)` for an atom `x` and any point `y`.
    pub fn s_eval(&self, k: usize, x: usize, y: &[f64]) -> f64 {
        match self.radii(x, k) {
            Some(r) => r.value(dist(self.lattice.measure().point(x), y), self.a(), self.n()),
            None => 0.0,
        }
    }

    /// `s_k(p, y)` for arbitrary points, with the sides at `p` given by `psi`.
    pub fn s_eval_at_point(&self, k: usize, p: &[f64], y: &[f64]) -> f64 {
        match self.radii_at_point(k, p) {
            Some(r) => r.value(dist(p, y), self.a(), self.n()),
            None => 0.0,
        }
    }

    fn support_radius(&self, k: usize) -> f64 {
        let m = self.lattice.measure();
        (0..m.len())
            .filter_map(|x| self.radii(x, k).map(|r| r.supp))
            .fold(0.0, f64::max)
    }

    /// Rows of level `k`, or `None` once the entry count passes the budget.
    fn build_rows(&self, k: usize) -> Option<Vec<Vec<(u32, f64)>>> {
        let m = self.lattice.measure();
        let (a, n) = (self.a(), self.n());
        let mut rows = Vec::with_capacity(m.len());
        let mut nnz = 0usize;
        // chunked so a dense level is abandoned early
        for start in (0..m.len()).step_by(256) {
            let end = (start + 256).min(m.len());
            let chunk: Vec<Vec<(u32, f64)>> = (start..end)
                .into_par_iter()
                .map(|x| {
                    let Some(r) = self.radii(x, k) else {
                        return Vec::new();
                    };
                    let px = m.point(x);
                    m.atoms_in_ball(px, r.supp)
                        .into_iter()
                        .filter_map(|y| {
                            let v = r.value(dist(px, m.point(y)), a, n);
                            (v > 0.0).then_some((y as u32, v))
                        })
                        .collect()
                })
                .collect();
            nnz += chunk.iter().map(Vec::len).sum::<usize>();
            if nnz > self.budget {
                return None;
            }
            rows.extend(chunk);
        }
        Some(rows)
    }

    /// The stored operator for level `k`, when it fits the budget.
    pub fn operator(&self, k: usize) -> Option<&KernelOperator> {
        if k > self.lattice.k_max() {
            return None;
        }
        self.ops[k]
            .get_or_init(|| {
                if self.budget == 0 {
                    return None;
                }
                let m = self.lattice.measure();
                // cheap size estimate before materializing anything
                let r = self.support_radius(k);
                if r.is_infinite() && m.len() * m.len() > self.budget {
                    return None;
                }
                let rows = self.build_rows(k)?;
                let nnz: usize = rows.iter().map(Vec::len).sum();
                let mut row_ptr = Vec::with_capacity(m.len() + 1);
                let mut row_idx = Vec::with_capacity(nnz);
                let mut row_val = Vec::with_capacity(nnz);
                let mut col_count = vec![0usize; m.len()];
                row_ptr.push(0);
                for row in &rows {
                    for &(y, v) in row {
                        row_idx.push(y);
                        row_val.push(v);
                        col_count[y as usize] += 1;
                    }
                    row_ptr.push(row_idx.len());
                }
                let mut col_ptr = vec![0usize; m.len() + 1];
                for y in 0..m.len() {
                    col_ptr[y + 1] = col_ptr[y] + col_count[y];
                }
                let mut fill = col_ptr.clone();
                let mut col_idx = vec![0u32; nnz];
                let mut col_val = vec![0.0; nnz];
                for (x, row) in rows.iter().enumerate() {
                    for &(y, v) in row {
                        let slot = &mut fill[y as usize];
                        col_idx[*slot] = x as u32;
                        col_val[*slot] = v;
                        *slot += 1;
                    }
                }
                Some(KernelOperator {
                    row_ptr,
                    row_idx,
                    row_val,
                    col_ptr,
                    col_idx,
                    col_val,
                })
            })
            .as_ref()
    }

    /// `(S_k f)(x) = sum_y s_k(x, y) f(y) mu({y})` at every atom.
    pub fn apply(&self, k: usize, f: &[f64]) -> Vec<f64> {
        self.apply_many(k, &[f]).pop().unwrap_or_default()
    }

    /// `S_k` applied to several functions, sharing kernel evaluations.
    pub fn apply_many(&self, k: usize, fs: &[&[f64]]) -> Vec<Vec<f64>> {
        let m = self.lattice.measure();
        let nf = fs.len();
        let masses = m.masses();
        let rows: Vec<Vec<f64>> = if k > self.lattice.k_max() {
            vec![vec![0.0; nf]; m.len()]
        } else if let Some(op) = self.operator(k) {
            (0..m.len())
                .into_par_iter()
                .map(|x| {
                    let mut acc = vec![0.0; nf];
                    for (y, v) in op.row(x) {
                        let w = v * masses[y];
                        for (a, f) in acc.iter_mut().zip(fs) {
                            *a += w * f[y];
                        }
                    }
                    acc
                })
                .collect()
        } else {
            let (a, n) = (self.a(), self.n());
            (0..m.len())
                .into_par_iter()
                .map(|x| {
                    let mut acc = vec![0.0; nf];
                    let Some(r) = self.radii(x, k) else {
                        return acc;
                    };
                    let px = m.point(x);
                    for y in m.atoms_in_ball(px, r.supp) {
                        let v = r.value(dist(px, m.point(y)), a, n);
                        if v > 0.0 {
                            let w = v * masses[y];
                            for (acc_i, f) in acc.iter_mut().zip(fs) {
                                *acc_i += w * f[y];
                            }
                        }
                    }
                    acc
                })
                .collect()
        };
        (0..nf)
            .map(|i| rows.iter().map(|r| r[i]).collect())
            .collect()
    }

    /// `(S_k^* g)(y) = sum_x s_k(x, y) g(x) mu({x})`.
    pub fn apply_adjoint(&self, k: usize, g: &[f64]) -> Vec<f64> {
        let m = self.lattice.measure();
        let masses = m.masses();
        if k > self.lattice.k_max() {
            return vec![0.0; m.len()];
        }
        if let Some(op) = self.operator(k) {
            return (0..m.len())
                .into_par_iter()
                .map(|y| op.col(y).map(|(x, v)| v * g[x] * masses[x]).sum())
                .collect();
        }
        let radii: Vec<Option<Radii>> = (0..m.len()).map(|x| self.radii(x, k)).collect();
        let reach = radii.iter().flatten().map(|r| r.supp).fold(0.0, f64::max);
        let (a, n) = (self.a(), self.n());
        (0..m.len())
            .into_par_iter()
            .map(|y| {
                let py = m.point(y);
                m.atoms_in_ball(py, reach)
                    .into_iter()
                    .map(|x| match &radii[x] {
                        Some(r) => r.value(dist(m.point(x), py), a, n) * g[x] * masses[x],
                        None => 0.0,
                    })
                    .sum()
            })
            .collect()
    }

    /// `S_k (g 1_E)` where `support` lists the atoms of `E`.
    pub fn apply_restricted(&self, k: usize, g: &[f64], support: &[usize]) -> Vec<f64> {
        let m = self.lattice.measure();
        if let Some(op) = self.operator(k) {
            let mut out = vec![0.0; m.len()];
            for &y in support {
                let w = g[y] * m.mass(y);
                if w != 0.0 {
                    for (x, v) in op.col(y) {
                        out[x] += v * w;
                    }
                }
            }
            return out;
        }
        let mut h = vec![0.0; m.len()];
        for &y in support {
            h[y] = g[y];
        }
        self.apply(k, &h)
    }

    /// `S_k g` evaluated at a single arbitrary point with the regularized sides.
    pub fn apply_at_point(&self, k: usize, p: &[f64], g: &[f64]) -> f64 {
        let m = self.lattice.measure();
        let Some(r) = self.radii_at_point(k, p) else {
            return 0.0;
        };
        let (a, n) = (self.a(), self.n());
        m.atoms_in_ball(p, r.supp)
            .into_iter()
            .map(|y| r.value(dist(p, m.point(y)), a, n) * g[y] * m.mass(y))
            .sum()
    }

    /// Row masses `int s_k(x, .) dmu` and column masses `int s_k(., z) dmu`.
    pub fn masses(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let one = vec![1.0; self.lattice.measure().len()];
        (self.apply(k, &one), self.apply_adjoint(k, &one))
    }

    /// Kernel masses over every `(x, k)`, split into the deep transit pairs on
    /// which the window is asserted and everything else.
    pub fn mass_window(&self) -> MassWindowReport {
        let lat = self.lattice;
        let mut rep = MassWindowReport {
            deep_pairs: 0,
            deep_min: f64::INFINITY,
            deep_max: f64::NEG_INFINITY,
            deep_adjoint_min: f64::INFINITY,
            deep_adjoint_max: f64::NEG_INFINITY,
            all_pairs: 0,
            all_max: 0.0,
            all_adjoint_max: 0.0,
        };
        for k in 0..=lat.k_max() {
            let (row, col) = self.masses(k);
            for x in 0..lat.measure().len() {
                if self.radii(x, k).is_some() {
                    rep.all_pairs += 1;
                    rep.all_max = rep.all_max.max(row[x]);
                }
                rep.all_adjoint_max = rep.all_adjoint_max.max(col[x]);
                if is_deep_transit(lat, x, k) {
                    rep.deep_pairs += 1;
                    rep.deep_min = rep.deep_min.min(row[x]);
                    rep.deep_max = rep.deep_max.max(row[x]);
                    rep.deep_adjoint_min = rep.deep_adjoint_min.min(col[x]);
                    rep.deep_adjoint_max = rep.deep_adjoint_max.max(col[x]);
                }
            }
        }
        rep
    }

    /// Samples `(x, y, k)` and measures the support, quasi-symmetry and
    /// gradient constants.
    pub fn check_kernel_lemmas<R: Rng>(&self, trials: usize, rng: &mut R) -> KernelLemmaReport {
        let lat = self.lattice;
        let m = lat.measure();
        let (a, n) = (self.a(), self.n());
        let mut rep = KernelLemmaReport::default();
        for _ in 0..trials {
            let k = rng.gen_range(0..=lat.k_max());
            let x = rng.gen_range(0..m.len());
            let Some(r) = self.radii(x, k) else {
                continue;
            };
            let px = m.point(x);
            // half the samples are local to the support of s_k(x, .)
            let y = if rng.gen_bool(0.5) && r.supp.is_finite() {
                let near = m.atoms_in_ball(px, r.supp);
                near[rng.gen_range(0..near.len())]
            } else {
                rng.gen_range(0..m.len())
            };
            let py = m.point(y);
            let s = self.s_eval(k, x, py);
            rep.samples += 1;
            // s_k(., y) lives in Q_{y,k-2}
            if s > 0.0 && k >= 2 && !lat.cube(y, k - 2).contains_point(px) {
                rep.support_violations += 1;
                rep.witness.get_or_insert_with(|| format!("support x={x} y={y} k={k}"));
            }
            if s > 0.0 {
                let mut denom = self.s_eval(k, y, px);
                if k > 0 {
                    denom += self.s_eval(k - 1, y, px);
                }
                denom += self.s_eval(k + 1, y, px);
                let c = if denom > 0.0 { s / denom } else { f64::INFINITY };
                rep.quasi_symmetry = rep.quasi_symmetry.max(c);
            }
            // finite-difference y-gradient along a random unit direction
            let rxy = dist(px, py);
            if rxy > 0.0 {
                let h = 1e-6 * rxy;
                let dir: Vec<f64> = (0..m.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let y2: Vec<f64> = py.iter().zip(&dir).map(|(c, v)| c + h * v / norm).collect();
                let g = (r.value(dist(px, &y2), a, n) - r.value(rxy, a, n)).abs() / h;
                rep.gradient_constant = rep.gradient_constant.max(g * a * pow_n(rxy, n) * rxy);
            }
            // size bound 0 <= s <= 1/(A |x-y|^n)
            if s < 0.0 || (rxy > 0.0 && s * a * pow_n(rxy, n) > 1.0 + 1e-12) {
                rep.size_violations += 1;
                rep.witness.get_or_insert_with(|| format!("size x={x} y={y} k={k}"));
            }
        }
        rep.passed = rep.support_violations == 0 && rep.size_violations == 0;
        rep
    }

    /// Finite-difference x-gradient of `s_k(p, y)` with regularized sides at
    /// sampled `(p, y)`; returns `max |grad_x s| A |p - y|^{n+1}`.
    pub fn x_gradient_constant<R: Rng>(&self, trials: usize, rng: &mut R) -> f64 {
        let lat = self.lattice;
        let m = lat.measure();
        let (a, n) = (self.a(), self.n());
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let k = rng.gen_range(0..=lat.k_max());
            let x = rng.gen_range(0..m.len());
            let y = rng.gen_range(0..m.len());
            let (px, py) = (m.point(x), m.point(y));
            let r = dist(px, py);
            if r == 0.0 {
                continue;
            }
            let h = 1e-7 * r;
            let p2: Vec<f64> = px.iter().enumerate().map(|(i, c)| if i == 0 { c + h } else { *c }).collect();
            let g = (self.s_eval_at_point(k, &p2, py) - self.s_eval_at_point(k, px, py)).abs() / h;
            worst = worst.max(g * a * pow_n(r, n) * r);
        }
        worst
    }
}

/// Transit `(x, k)` with at least two levels before the ladder stops.
pub fn is_deep_transit(lat: &Lattice<'_>, x: usize, k: usize) -> bool {
    lat.class(x, k) == CubeClass::Transit
        && k < lat.k_max()
        && lat.class(x, k + 1) == CubeClass::Transit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassWindowReport {
    pub deep_pairs: usize,
    pub deep_min: f64,
    pub deep_max: f64,
    pub deep_adjoint_min: f64,
    pub deep_adjoint_max: f64,
    /// Every `(x, k)` with a non-zero kernel.
    pub all_pairs: usize,
    pub all_max: f64,
    pub all_adjoint_max: f64,
}

impl MassWindowReport {
    pub fn deep_within(&self, lo: f64, hi: f64) -> bool {
        self.deep_pairs == 0
            || (self.deep_min >= lo
                && self.deep_max <= hi
                && self.deep_adjoint_min >= lo
                && self.deep_adjoint_max <= hi)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelLemmaReport {
    pub samples: usize,
    pub support_violations: usize,
    pub size_violations: usize,
    pub quasi_symmetry: f64,
    pub gradient_constant: f64,
    pub witness: Option<String>,
    pub passed: bool,
}
