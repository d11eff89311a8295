//! Weights on the support, dual weights, Sawyer-type testing constants, a
//! `Z_inf` search, reverse Hölder partial sums, and empirical weighted norms.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{random_cube, random_subcube, Cube};
use crate::czo::{apply_t_eps, apply_t_star, KernelSpec};
use crate::error::{Error, Result};
use crate::kernels::KernelProfile;
use crate::lattice::{CubeClass, Lattice};
use crate::maximal::n_sup;
use crate::measure::{factorial, DiscreteMeasure};

/// A positive weight on the atoms, tagged with the exponent it is tested at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    values: Vec<f64>,
    p: f64,
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::BadExponentP(p))
    }
}

impl Weight {
    pub fn new(m: &DiscreteMeasure, values: Vec<f64>, p: f64) -> Result<Self> {
        check_p(p)?;
        if values.len() != m.len() {
            return Err(Error::LengthMismatch {
                expected: m.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::BadWeight(i));
        }
        Ok(Weight { values, p })
    }

    pub fn constant(m: &DiscreteMeasure, c: f64, p: f64) -> Result<Self> {
        Self::new(m, vec![c; m.len()], p)
    }

    /// Piecewise constant weight `profile(k)` on the atoms labelled `k`.
    pub fn from_components(m: &DiscreteMeasure, p: f64, profile: impl Fn(usize) -> f64) -> Result<Self> {
        let labels = m.components().ok_or(Error::NoComponents)?;
        Self::new(m, labels.iter().map(|&k| profile(k)).collect(), p)
    }

    /// `(k - 2)!` on the `k`-th component, `1` on the first.
    pub fn w0(m: &DiscreteMeasure, p: f64) -> Result<Self> {
        Self::from_components(m, p, |k| if k >= 2 { factorial(k - 2) } else { 1.0 })
    }

    /// `k! k^2` on the `k`-th component.
    pub fn w_bad(m: &DiscreteMeasure, p: f64) -> Result<Self> {
        Self::from_components(m, p, |k| factorial(k) * (k * k) as f64)
    }

    /// `one`, `w0` or `wbad`.
    pub fn builtin(name: &str, m: &DiscreteMeasure, p: f64) -> Result<Self> {
        match name {
            "one" => Self::constant(m, 1.0, p),
            "w0" => Self::w0(m, p),
            "wbad" | "w_bad" => Self::w_bad(m, p),
            other => Err(Error::InvalidParameter(format!("unknown weight {other:?}"))),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn p_prime(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// `sigma = w^{-1/(p-1)}`, tested at `p'`.
    pub fn dual(&self) -> Weight {
        let e = -1.0 / (self.p - 1.0);
        Weight {
            values: self.values.iter().map(|w| w.powf(e)).collect(),
            p: self.p_prime(),
        }
    }

    pub fn scaled(&self, c: f64) -> Result<Weight> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("scale {c} must be positive")));
        }
        Ok(Weight {
            values: self.values.iter().map(|w| w * c).collect(),
            p: self.p,
        })
    }

    /// `w(E)` for a list of atoms.
    pub fn mass_of(&self, m: &DiscreteMeasure, atoms: &[usize]) -> f64 {
        atoms.iter().map(|&i| self.values[i] * m.mass(i)).sum()
    }

    /// `||f||_{L^p(w)}`.
    pub fn lp_norm(&self, m: &DiscreteMeasure, f: &[f64]) -> f64 {
        f.iter()
            .zip(&self.values)
            .zip(m.masses())
            .map(|((f, w), mu)| f.abs().powf(self.p) * w * mu)
            .sum::<f64>()
            .powf(1.0 / self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawyerWitness {
    pub k: usize,
    pub cube: Cube,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawyerReport {
    pub p: f64,
    /// `sup int |S_k(sigma 1_Q)|^p w / sigma(Q)`.
    pub strong_const: f64,
    /// `sup int |S_k(w 1_Q)|^{p'} sigma / w(Q)`.
    pub dual_const: f64,
    pub strong_witness: Option<SawyerWitness>,
    pub dual_witness: Option<SawyerWitness>,
    pub cubes_tested: usize,
    pub ks_tested: usize,
}

/// Lattice cubes, `random` atom-centred cubes with log-uniform sides, and the
/// dyadic cubes of the bounding box down to a few resolution floors.
pub fn default_cube_family<R: Rng>(lat: &Lattice<'_>, random: usize, rng: &mut R) -> Vec<Cube> {
    let m = lat.measure();
    let mut out = Vec::new();
    for x in 0..m.len() {
        for k in 0..=lat.k_max() {
            out.push(lat.cube(x, k));
        }
    }
    let lo = m.resolution_floor().max(f64::MIN_POSITIVE);
    let hi = (2.0 * m.diameter()).max(lo);
    out.extend((0..random).map(|_| random_cube(m, rng, lo, hi)));
    out.extend(dyadic_cubes(m, 4.0 * lo, 4096));
    out
}

/// Dyadic subcubes of the bounding cube that contain atoms, coarse to fine,
/// stopping below `min_side` or once `cap` cubes are collected.
pub fn dyadic_cubes(m: &DiscreteMeasure, min_side: f64, cap: usize) -> Vec<Cube> {
    let (lo, hi) = m.bbox();
    let side = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| b - a)
        .fold(0.0, f64::max)
        .max(m.resolution_floor());
    let d = m.dim();
    let mut level = vec![Cube::new(
        lo.iter().map(|a| a + side / 2.0).collect(),
        side,
    )];
    let mut out = Vec::new();
    while !level.is_empty() && out.len() < cap {
        let mut next = Vec::new();
        for q in level {
            if out.len() >= cap {
                break;
            }
            if m.atoms_in_cube(&q).is_empty() {
                continue;
            }
            let h = q.side() / 2.0;
            if h >= min_side {
                for mask in 0..(1usize << d) {
                    let c = (0..d)
                        .map(|j| q.center()[j] + if mask >> j & 1 == 1 { h / 2.0 } else { -h / 2.0 })
                        .collect();
                    next.push(Cube::new(c, h));
                }
            }
            out.push(q);
        }
        level = next;
    }
    out
}

/// Distinct nonempty atom sets of a cube family, each with the first cube
/// that produced it.
fn distinct_sets(m: &DiscreteMeasure, family: &[Cube]) -> Vec<(Vec<usize>, Cube)> {
    let mut seen: BTreeMap<Vec<usize>, Cube> = BTreeMap::new();
    for q in family {
        let atoms = m.atoms_in_cube(q);
        if !atoms.is_empty() {
            seen.entry(atoms).or_insert_with(|| q.clone());
        }
    }
    seen.into_iter().collect()
}

/// `int |S_k(g 1_Q)|^q h dmu / g(Q)` for one atom set.
fn testing_ratio(p: &KernelProfile<'_>, k: usize, g: &[f64], h: &[f64], q: f64, atoms: &[usize]) -> f64 {
    let m = p.lattice().measure();
    let den: f64 = atoms.iter().map(|&i| g[i] * m.mass(i)).sum();
    if !(den > 0.0) {
        return 0.0;
    }
    let u = p.apply_restricted(k, g, atoms);
    let num: f64 = u
        .iter()
        .zip(h)
        .zip(m.masses())
        .filter(|((u, _), _)| **u != 0.0)
        .map(|((u, h), mu)| u.abs().powf(q) * h * mu)
        .sum();
    num / den
}

/// Both Sawyer testing constants of `w` at its exponent over `family` and `ks`.
pub fn sawyer_constants(p: &KernelProfile<'_>, w: &Weight, family: &[Cube], ks: &[usize]) -> Result<SawyerReport> {
    let m = p.lattice().measure();
    if w.values().len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            got: w.values().len(),
        });
    }
    let sigma = w.dual();
    let (wv, sv) = (w.values(), sigma.values());
    let sets = distinct_sets(m, family);
    let mut rep = SawyerReport {
        p: w.p(),
        strong_const: 0.0,
        dual_const: 0.0,
        strong_witness: None,
        dual_witness: None,
        cubes_tested: sets.len(),
        ks_tested: ks.len(),
    };
    for &k in ks {
        let ratios: Vec<(f64, f64)> = sets
            .par_iter()
            .map(|(atoms, _)| {
                (
                    testing_ratio(p, k, sv, wv, w.p(), atoms),
                    testing_ratio(p, k, wv, sv, w.p_prime(), atoms),
                )
            })
            .collect();
        for ((strong, dual), (_, cube)) in ratios.into_iter().zip(&sets) {
            if strong > rep.strong_const {
                rep.strong_const = strong;
                rep.strong_witness = Some(SawyerWitness { k, cube: cube.clone(), ratio: strong });
            }
            if dual > rep.dual_const {
                rep.dual_const = dual;
                rep.dual_witness = Some(SawyerWitness { k, cube: cube.clone(), ratio: dual });
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZInftyWitness {
    pub k: usize,
    pub cube: Cube,
    pub kind: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZInftyReport {
    pub shift: usize,
    pub tried: usize,
    pub kept: usize,
    /// Minimum of `w(A n 2Q) / w(Q)` over the kept pairs; `None` if none was kept.
    pub tau_hat: Option<f64>,
    pub witness: Option<ZInftyWitness>,
}

fn candidate_sets<R: Rng>(m: &DiscreteMeasure, w: &Weight, q: &Cube, rng: &mut R) -> Vec<(&'static str, Vec<bool>)> {
    let n = m.len();
    let outer = q.dilate(2.0);
    let mut out = vec![("full", vec![true; n])];

    let mut union = vec![false; n];
    for _ in 0..rng.gen_range(1..=4) {
        let frac = rng.gen_range(0.2..0.7);
        let sub = random_subcube(rng, &outer, frac);
        for i in m.atoms_in_cube(&sub) {
            union[i] = true;
        }
    }
    out.push(("subcubes", union));

    let density = *[0.3, 0.6, 0.9].choose(rng).unwrap_or(&0.6);
    out.push(("random", (0..n).map(|_| rng.gen_bool(density)).collect()));
    out.push(("cosparse", (0..n).map(|_| !rng.gen_bool(0.05)).collect()));

    // drop a subcube of Q around its heaviest atom
    let inside = m.atoms_in_cube(q);
    if let Some(&heavy) = inside
        .iter()
        .max_by(|a, b| w.values()[**a].total_cmp(&w.values()[**b]))
    {
        let frac = rng.gen_range(0.1..0.5);
        let hole = Cube::new(m.point(heavy).to_vec(), q.side() * frac);
        let mut a = vec![true; n];
        for i in m.atoms_in_cube(&hole) {
            a[i] = false;
        }
        out.push(("heavy_hole", a));
    }
    out
}

/// Randomized search for the `Z_inf` constant: pairs `(Q, A)` with
/// `Q = Q_{x,k}` and `S_{k+shift} 1_A >= 1/4` on the non-stopping atoms of `Q`.
/// Pairs where every atom of `Q` is stopping at `k + shift` are not kept.
pub fn z_infty_estimate<R: Rng>(
    p: &KernelProfile<'_>,
    w: &Weight,
    trials: usize,
    shift: usize,
    rng: &mut R,
) -> ZInftyReport {
    let lat = p.lattice();
    let m = lat.measure();
    let mut rep = ZInftyReport {
        shift,
        tried: 0,
        kept: 0,
        tau_hat: None,
        witness: None,
    };
    if m.is_empty() {
        return rep;
    }
    for _ in 0..trials {
        let x = rng.gen_range(0..m.len());
        let k = rng.gen_range(0..=lat.last_nonpoint(x));
        let q = lat.cube(x, k);
        let atoms = m.atoms_in_cube(&q);
        let kk = k + shift;
        let active: Vec<usize> = atoms
            .iter()
            .copied()
            .filter(|&y| kk <= lat.k_max() && lat.class(y, kk) != CubeClass::Stopping)
            .collect();
        let wq = w.mass_of(m, &atoms);
        let two_q = m.atoms_in_cube(&q.dilate(2.0));
        for (kind, a) in candidate_sets(m, w, &q, rng) {
            rep.tried += 1;
            if active.is_empty() || !(wq > 0.0) {
                continue;
            }
            let ind: Vec<f64> = a.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let s = p.apply(kk, &ind);
            if active.iter().any(|&y| s[y] < 0.25) {
                continue;
            }
            rep.kept += 1;
            let hit: Vec<usize> = two_q.iter().copied().filter(|&i| a[i]).collect();
            let ratio = w.mass_of(m, &hit) / wq;
            if rep.tau_hat.is_none_or(|t| ratio < t) {
                rep.tau_hat = Some(ratio);
                rep.witness = Some(ZInftyWitness {
                    k,
                    cube: q.clone(),
                    kind: kind.to_string(),
                    ratio,
                });
            }
        }
    }
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseHolderReport {
    pub eps: f64,
    pub k_list: Vec<usize>,
    /// Natural logarithms of the partial sums.
    pub log_sums: Vec<f64>,
    /// The partial sums themselves; infinite past the float range.
    pub sums: Vec<f64>,
    /// First `K` whose partial sum exceeds `1e300`.
    pub overflow_at: Option<usize>,
    pub ratio_last_first: f64,
}

impl ReverseHolderReport {
    pub fn diverges(&self, threshold: f64) -> bool {
        self.ratio_last_first >= threshold
    }

    /// `S(K_b) / S(K_a)` for two entries of `k_list`.
    pub fn ratio(&self, ka: usize, kb: usize) -> Option<f64> {
        let ia = self.k_list.iter().position(|&k| k == ka)?;
        let ib = self.k_list.iter().position(|&k| k == kb)?;
        Some((self.log_sums[ib] - self.log_sums[ia]).exp())
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// Partial sums of `w^{1+eps} dmu` over the atoms of the first `K` components.
pub fn reverse_holder_probe(m: &DiscreteMeasure, w: &Weight, eps: f64, k_list: &[usize]) -> Result<ReverseHolderReport> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be non-negative")));
    }
    let labels = m.components().ok_or(Error::NoComponents)?;
    let logs: Vec<(usize, f64)> = labels
        .iter()
        .zip(w.values())
        .zip(m.masses())
        .map(|((&k, w), mu)| (k, (1.0 + eps) * w.ln() + mu.ln()))
        .collect();
    let mut log_sums = Vec::with_capacity(k_list.len());
    for &kk in k_list {
        let terms: Vec<f64> = logs.iter().filter(|(k, _)| *k <= kk).map(|(_, l)| *l).collect();
        log_sums.push(log_sum_exp(&terms));
    }
    let limit = 1e300_f64.ln();
    let overflow_at = k_list.iter().zip(&log_sums).find(|(_, l)| **l > limit).map(|(k, _)| *k);
    let sums = log_sums.iter().map(|l| if *l > limit { f64::INFINITY } else { l.exp() }).collect();
    let ratio_last_first = match (log_sums.first(), log_sums.last()) {
        (Some(a), Some(b)) => (b - a).exp(),
        _ => 1.0,
    };
    Ok(ReverseHolderReport {
        eps,
        k_list: k_list.to_vec(),
        log_sums,
        sums,
        overflow_at,
        ratio_last_first,
    })
}

/// Operator names accepted by [`weighted_norm_estimate`]: `Sk:<k>`, `N`,
/// `Teps:<kernel>` and `Tstar:<kernel>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OpTag {
    Sk(usize),
    N,
    Teps(String),
    Tstar(String),
}

impl FromStr for OpTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        let bad = || Error::InvalidParameter(format!("bad operator tag {s:?}"));
        match (head, tail) {
            ("N", None) => Ok(OpTag::N),
            ("Sk", Some(k)) => k.parse().map(OpTag::Sk).map_err(|_| bad()),
            ("Teps", t) => Ok(OpTag::Teps(t.unwrap_or("hilbert").to_string())),
            ("Tstar", t) => Ok(OpTag::Tstar(t.unwrap_or("hilbert").to_string())),
            _ => Err(bad()),
        }
    }
}

/// Evaluates the operator named by `tag` on `f`.
pub fn apply_op(p: &KernelProfile<'_>, tag: &OpTag, eps_grid: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let m = p.lattice().measure();
    let eps = eps_grid.first().copied().unwrap_or_else(|| m.min_spacing());
    Ok(match tag {
        OpTag::Sk(k) => p.apply(*k, f),
        OpTag::N => n_sup(p, f),
        OpTag::Teps(name) => apply_t_eps(m, &KernelSpec::by_name(name, m.growth_exponent())?, f, eps)?,
        OpTag::Tstar(name) => apply_t_star(m, &KernelSpec::by_name(name, m.growth_exponent())?, f, eps_grid)?,
    })
}

/// Trial inputs: indicators of lattice cubes, random signs, and `sigma 1_Q`.
pub fn trial_functions<R: Rng>(lat: &Lattice<'_>, w: &Weight, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let m = lat.measure();
    let sigma = w.dual();
    let mut out = Vec::with_capacity(3 * count);
    for _ in 0..count {
        let x = rng.gen_range(0..m.len());
        let k = rng.gen_range(0..=lat.last_nonpoint(x));
        let atoms = m.atoms_in_cube(&lat.cube(x, k));
        let mut ind = vec![0.0; m.len()];
        let mut sq = vec![0.0; m.len()];
        for i in atoms {
            ind[i] = 1.0;
            sq[i] = sigma.values()[i];
        }
        out.push(ind);
        out.push(sq);
        out.push((0..m.len()).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub op: OpTag,
    pub p: f64,
    pub lower_bound: f64,
    pub trials: usize,
    pub witness: Option<usize>,
}

/// `max_f ||op f||_{L^p(w)} / ||f||_{L^p(w)}` over the trial functions.
pub fn weighted_norm_estimate(
    p: &KernelProfile<'_>,
    tag: &OpTag,
    w: &Weight,
    eps_grid: &[f64],
    trials: &[Vec<f64>],
) -> Result<NormEstimate> {
    let m = p.lattice().measure();
    let mut est = NormEstimate {
        op: tag.clone(),
        p: w.p(),
        lower_bound: 0.0,
        trials: trials.len(),
        witness: None,
    };
    for (i, f) in trials.iter().enumerate() {
        let den = w.lp_norm(m, f);
        if !(den > 0.0) {
            continue;
        }
        let r = w.lp_norm(m, &apply_op(p, tag, eps_grid, f)?) / den;
        if r > est.lower_bound {
            est.lower_bound = r;
            est.witness = Some(i);
        }
    }
    Ok(est)
}
