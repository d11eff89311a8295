//! Atomic measures on `R^d` with polynomial growth `mu(B(x, r)) <= C0 r^n`.
//!
//! A [`DiscreteMeasure`] is a finite list of weighted atoms together with a
//! uniform-grid spatial index. All ball and cube queries use closed sets, so
//! atoms sitting exactly on a boundary are counted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cube::Cube;
use crate::error::{Error, Result};

/// Largest total mass accepted by the constructors.
pub const MAX_TOTAL_MASS: f64 = 1e15;

/// Euclidean distance between two points of the same dimension.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Sup-norm distance, the natural metric for axis-parallel cubes.
#[inline]
pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `r^n`, with fast paths for the common integer exponents.
#[inline]
pub fn pow_n(r: f64, n: f64) -> f64 {
    if n == 1.0 {
        r
    } else if n == 2.0 {
        r * r
    } else {
        r.powf(n)
    }
}

#[derive(Debug, Clone)]
struct GridIndex {
    origin: Vec<f64>,
    cell: f64,
    cells: BTreeMap<Vec<i64>, Vec<u32>>,
}

impl GridIndex {
    fn build(dim: usize, coords: &[f64], origin: Vec<f64>, cell: f64) -> Self {
        let mut cells: BTreeMap<Vec<i64>, Vec<u32>> = BTreeMap::new();
        for (i, p) in coords.chunks_exact(dim).enumerate() {
            let key: Vec<i64> = p
                .iter()
                .zip(&origin)
                .map(|(x, o)| ((x - o) / cell).floor() as i64)
                .collect();
            cells.entry(key).or_default().push(i as u32);
        }
        GridIndex {
            origin,
            cell,
            cells,
        }
    }

    /// Candidate atoms whose cell meets the box `[lo, hi]`.
    fn candidates(&self, lo: &[f64], hi: &[f64], out: &mut Vec<u32>) {
        let klo: Vec<i64> = lo
            .iter()
            .zip(&self.origin)
            .map(|(x, o)| ((x - o) / self.cell).floor() as i64)
            .collect();
        let khi: Vec<i64> = hi
            .iter()
            .zip(&self.origin)
            .map(|(x, o)| ((x - o) / self.cell).floor() as i64)
            .collect();
        let mut span: f64 = 1.0;
        for (a, b) in klo.iter().zip(&khi) {
            span *= (b - a + 1) as f64;
        }
        if span > self.cells.len() as f64 {
            for (key, atoms) in &self.cells {
                if key
                    .iter()
                    .zip(klo.iter().zip(&khi))
                    .all(|(k, (a, b))| k >= a && k <= b)
                {
                    out.extend_from_slice(atoms);
                }
            }
        } else {
            let mut key = klo.clone();
            loop {
                if let Some(atoms) = self.cells.get(&key) {
                    out.extend_from_slice(atoms);
                }
                let mut axis = 0;
                loop {
                    if axis == key.len() {
                        return;
                    }
                    key[axis] += 1;
                    if key[axis] <= khi[axis] {
                        break;
                    }
                    key[axis] = klo[axis];
                    axis += 1;
                }
            }
        }
    }
}

/// A finite atomic measure on `R^d` with declared growth data `(n, C0)`.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    dim: usize,
    growth_exponent: f64,
    growth_constant: f64,
    coords: Vec<f64>,
    masses: Vec<f64>,
    components: Option<Vec<usize>>,
    total_mass: f64,
    bbox_lo: Vec<f64>,
    bbox_hi: Vec<f64>,
    nn_dist: Vec<f64>,
    index: GridIndex,
}

impl DiscreteMeasure {
    /// Builds a measure from flat coordinates (`dim` values per atom) and masses.
    pub fn new(
        dim: usize,
        growth_exponent: f64,
        growth_constant: f64,
        coords: Vec<f64>,
        masses: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if masses.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if coords.len() != dim * masses.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * masses.len(),
                got: coords.len(),
            });
        }
        if !(growth_exponent > 0.0 && growth_exponent <= dim as f64) {
            return Err(Error::BadExponent {
                n: growth_exponent,
                d: dim,
            });
        }
        if !(growth_constant > 0.0 && growth_constant.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "growth constant must be positive, got {growth_constant}"
            )));
        }
        for (i, &m) in masses.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::BadMass { index: i, mass: m });
            }
        }
        for (i, c) in coords.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite(i / dim));
            }
        }
        let total_mass: f64 = masses.iter().sum();
        if total_mass > MAX_TOTAL_MASS {
            return Err(Error::InvalidParameter(format!(
                "total mass {total_mass:e} exceeds {MAX_TOTAL_MASS:e}"
            )));
        }

        let mut bbox_lo = vec![f64::INFINITY; dim];
        let mut bbox_hi = vec![f64::NEG_INFINITY; dim];
        for p in coords.chunks_exact(dim) {
            for a in 0..dim {
                bbox_lo[a] = bbox_lo[a].min(p[a]);
                bbox_hi[a] = bbox_hi[a].max(p[a]);
            }
        }
        let nn_dist = nearest_neighbour_distances(dim, &coords);

        let mut positive: Vec<f64> = nn_dist
            .iter()
            .copied()
            .filter(|d| *d > 0.0 && d.is_finite())
            .collect();
        positive.sort_by(f64::total_cmp);
        let extent = bbox_lo
            .iter()
            .zip(&bbox_hi)
            .map(|(l, h)| h - l)
            .fold(0.0, f64::max);
        let cell = if positive.is_empty() {
            extent.max(1.0)
        } else {
            positive[positive.len() / 2]
        };
        let index = GridIndex::build(dim, &coords, bbox_lo.clone(), cell);

        Ok(DiscreteMeasure {
            dim,
            growth_exponent,
            growth_constant,
            coords,
            masses,
            components: None,
            total_mass,
            bbox_lo,
            bbox_hi,
            nn_dist,
            index,
        })
    }

    /// Builds a measure from `(point, mass)` pairs.
    pub fn from_atoms(
        dim: usize,
        growth_exponent: f64,
        growth_constant: f64,
        atoms: &[(Vec<f64>, f64)],
    ) -> Result<Self> {
        let mut coords = Vec::with_capacity(dim * atoms.len());
        let mut masses = Vec::with_capacity(atoms.len());
        for (p, m) in atoms {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
            masses.push(*m);
        }
        Self::new(dim, growth_exponent, growth_constant, coords, masses)
    }

    /// Attaches a component label to every atom (used by the interval generators).
    pub fn with_components(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: labels.len(),
            });
        }
        self.components = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn growth_exponent(&self) -> f64 {
        self.growth_exponent
    }
    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }
    pub fn len(&self) -> usize {
        self.masses.len()
    }
    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
    pub fn components(&self) -> Option<&[usize]> {
        self.components.as_deref()
    }
    pub fn bbox(&self) -> (&[f64], &[f64]) {
        (&self.bbox_lo, &self.bbox_hi)
    }

    /// Euclidean diameter of the bounding box of the support.
    pub fn diameter(&self) -> f64 {
        self.bbox_lo
            .iter()
            .zip(&self.bbox_hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Distance from atom `i` to its nearest distinct atom (infinite for a lone atom).
    pub fn nn_distance(&self, i: usize) -> f64 {
        self.nn_dist[i]
    }

    /// Largest nearest-neighbour distance over all atoms (0 for a single atom).
    pub fn max_spacing(&self) -> f64 {
        self.nn_dist
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }

    /// Smallest positive nearest-neighbour distance (0 for a single atom).
    pub fn min_spacing(&self) -> f64 {
        let m = self
            .nn_dist
            .iter()
            .copied()
            .filter(|d| d.is_finite() && *d > 0.0)
            .fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            m
        } else {
            0.0
        }
    }

    /// Scales below which the atoms cannot represent the growth condition:
    /// twice the largest nearest-neighbour spacing.
    pub fn resolution_floor(&self) -> f64 {
        2.0 * self.max_spacing()
    }

    /// Default lower radius for growth verification. A closed ball of radius
    /// `r` can hold one atom more than the continuous measure predicts, a
    /// relative excess of `spacing / (2 r)`; at ten resolution floors that
    /// excess is at most 2.5%.
    pub fn growth_floor(&self) -> f64 {
        10.0 * self.resolution_floor()
    }

    /// Indices (ascending) of atoms inside the closed box `[lo, hi]`.
    pub fn atoms_in_box(&self, lo: &[f64], hi: &[f64]) -> Vec<usize> {
        let clo: Vec<f64> = lo
            .iter()
            .zip(&self.bbox_lo)
            .map(|(a, b)| a.max(*b))
            .collect();
        let chi: Vec<f64> = hi
            .iter()
            .zip(&self.bbox_hi)
            .map(|(a, b)| a.min(*b))
            .collect();
        if clo.iter().zip(&chi).any(|(l, h)| l > h) {
            return Vec::new();
        }
        let mut cand = Vec::new();
        self.index.candidates(&clo, &chi, &mut cand);
        let mut out: Vec<usize> = cand
            .into_iter()
            .map(|i| i as usize)
            .filter(|&i| {
                let p = self.point(i);
                p.iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(x, (l, h))| *x >= *l && *x <= *h)
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Indices (ascending) of atoms in the closed Euclidean ball `B(x, r)`.
    pub fn atoms_in_ball(&self, x: &[f64], r: f64) -> Vec<usize> {
        // farthest bounding-box corner inside the ball: every atom is
        let far = x
            .iter()
            .zip(self.bbox_lo.iter().zip(&self.bbox_hi))
            .map(|(c, (l, h))| (c - l).abs().max((h - c).abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        if r.is_infinite() || far <= r {
            return (0..self.len()).collect();
        }
        let lo: Vec<f64> = x.iter().map(|c| c - r).collect();
        let hi: Vec<f64> = x.iter().map(|c| c + r).collect();
        let mut v = self.atoms_in_box(&lo, &hi);
        v.retain(|&i| dist(self.point(i), x) <= r);
        v
    }

    /// Indices (ascending) of atoms in the closed cube `q`.
    pub fn atoms_in_cube(&self, q: &Cube) -> Vec<usize> {
        if q.is_whole_space() {
            return (0..self.len()).collect();
        }
        let h = q.side() / 2.0;
        let c = q.center();
        let mut v = self.atoms_in_box(
            &c.iter().map(|x| x - h).collect::<Vec<_>>(),
            &c.iter().map(|x| x + h).collect::<Vec<_>>(),
        );
        v.retain(|&i| q.contains_point(self.point(i)));
        v
    }

    /// `mu(B(x, r))` for the closed ball.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        self.atoms_in_ball(x, r).iter().map(|&i| self.masses[i]).sum()
    }

    /// `mu(Q)` for the closed cube `Q`.
    pub fn cube_mass(&self, q: &Cube) -> f64 {
        if q.is_whole_space() {
            return self.total_mass;
        }
        self.atoms_in_cube(q).iter().map(|&i| self.masses[i]).sum()
    }

    /// `sum_{a in Q} values[a] * mass[a]`, the measure `values d mu` of a cube.
    pub fn weighted_cube_mass(&self, values: &[f64], q: &Cube) -> f64 {
        self.atoms_in_cube(q)
            .iter()
            .map(|&i| values[i] * self.masses[i])
            .sum()
    }

    /// Returns the image of the measure under `x -> t x` with masses scaled by
    /// `t^n`, which preserves the growth constant.
    pub fn dilated(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("dilation {t} must be positive")));
        }
        let scale = pow_n(t, self.growth_exponent);
        let m = DiscreteMeasure::new(
            self.dim,
            self.growth_exponent,
            self.growth_constant,
            self.coords.iter().map(|c| c * t).collect(),
            self.masses.iter().map(|m| m * scale).collect(),
        )?;
        Ok(DiscreteMeasure {
            components: self.components.clone(),
            ..m
        })
    }

    /// Checks `mu(B(x, r)) <= C0 r^n (1 + tol)` at sampled support points for
    /// every radius `r >= r_lo`.
    ///
    /// For a fixed centre the ratio `mu(B(x, r)) / r^n` only increases at the
    /// radii where a new atom enters the ball, so scanning those radii (plus
    /// `r_lo` itself) gives the exact supremum over `r >= r_lo`.
    pub fn verify_growth(&self, opts: &GrowthOptions) -> GrowthReport {
        let r_lo = opts.r_lo.unwrap_or_else(|| self.growth_floor());
        let n = self.growth_exponent;
        let count = opts.samples.max(1).min(self.len());
        let mut best = (0.0_f64, 0usize, r_lo);
        for s in 0..count {
            let i = s * self.len() / count;
            let x = self.point(i);
            let mut d: Vec<(f64, f64)> = (0..self.len())
                .map(|j| (dist(self.point(j), x), self.masses[j]))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cum = 0.0;
            let mut k = 0;
            while k < d.len() && d[k].0 <= r_lo {
                cum += d[k].1;
                k += 1;
            }
            if r_lo > 0.0 {
                let ratio = cum / pow_n(r_lo, n);
                if ratio > best.0 {
                    best = (ratio, i, r_lo);
                }
            }
            while k < d.len() {
                let r = d[k].0;
                while k < d.len() && d[k].0 == r {
                    cum += d[k].1;
                    k += 1;
                }
                if r > 0.0 {
                    let ratio = cum / pow_n(r, n);
                    if ratio > best.0 {
                        best = (ratio, i, r);
                    }
                }
            }
        }
        let (max_ratio, worst_atom, worst_r) = best;
        let normalized = max_ratio / self.growth_constant;
        GrowthReport {
            max_ratio,
            normalized_ratio: normalized,
            worst_atom,
            worst_point: self.point(worst_atom).to_vec(),
            worst_radius: worst_r,
            r_lo,
            tol: opts.tol,
            passed: normalized <= 1.0 + opts.tol,
        }
    }

    pub fn to_json(&self) -> MeasureJson {
        MeasureJson {
            d: self.dim,
            n: self.growth_exponent,
            c0: self.growth_constant,
            atoms: (0..self.len())
                .map(|i| {
                    let mut v = self.point(i).to_vec();
                    v.push(self.masses[i]);
                    v
                })
                .collect(),
            components: self.components.clone(),
        }
    }

    pub fn from_json(j: &MeasureJson) -> Result<Self> {
        let mut coords = Vec::with_capacity(j.d * j.atoms.len());
        let mut masses = Vec::with_capacity(j.atoms.len());
        for a in &j.atoms {
            if a.len() != j.d + 1 {
                return Err(Error::DimensionMismatch {
                    expected: j.d + 1,
                    got: a.len(),
                });
            }
            coords.extend_from_slice(&a[..j.d]);
            masses.push(a[j.d]);
        }
        let m = DiscreteMeasure::new(j.d, j.n, j.c0, coords, masses)?;
        match &j.components {
            Some(c) => m.with_components(c.clone()),
            None => Ok(m),
        }
    }
}

fn nearest_neighbour_distances(dim: usize, coords: &[f64]) -> Vec<f64> {
    let n = coords.len() / dim;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coords[a * dim].total_cmp(&coords[b * dim]).then(a.cmp(&b)));
    let p = |i: usize| &coords[i * dim..(i + 1) * dim];
    let mut out = vec![f64::INFINITY; n];
    for (pos, &i) in order.iter().enumerate() {
        let xi = p(i);
        let mut best = f64::INFINITY;
        for &j in order[pos + 1..].iter() {
            if coords[j * dim] - xi[0] >= best {
                break;
            }
            let d = dist(xi, p(j));
            if d > 0.0 && d < best {
                best = d;
            }
        }
        for &j in order[..pos].iter().rev() {
            if xi[0] - coords[j * dim] >= best {
                break;
            }
            let d = dist(xi, p(j));
            if d > 0.0 && d < best {
                best = d;
            }
        }
        out[i] = best;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthOptions {
    /// Number of support points used as ball centres.
    pub samples: usize,
    pub tol: f64,
    /// Smallest radius checked; defaults to [`DiscreteMeasure::growth_floor`].
    pub r_lo: Option<f64>,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            samples: 64,
            tol: 0.05,
            r_lo: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `max mu(B(x, r)) / r^n` over the scanned pairs.
    pub max_ratio: f64,
    /// `max_ratio / C0`.
    pub normalized_ratio: f64,
    pub worst_atom: usize,
    pub worst_point: Vec<f64>,
    pub worst_radius: f64,
    pub r_lo: f64,
    pub tol: f64,
    pub passed: bool,
}

/// The JSON measure format `{ "d", "n", "c0", "atoms": [[x..., mass], ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureJson {
    pub d: usize,
    pub n: f64,
    pub c0: f64,
    pub atoms: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<usize>>,
}

/// Real values attached to the atoms of a measure (a function in `L^1_loc`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridFunction(pub Vec<f64>);

impl GridFunction {
    pub fn new(m: &DiscreteMeasure, values: Vec<f64>) -> Result<Self> {
        if values.len() != m.len() {
            return Err(Error::LengthMismatch {
                expected: m.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(GridFunction(values))
    }

    pub fn constant(m: &DiscreteMeasure, c: f64) -> Self {
        GridFunction(vec![c; m.len()])
    }

    pub fn indicator(m: &DiscreteMeasure, atoms: &[usize]) -> Self {
        let mut v = vec![0.0; m.len()];
        for &a in atoms {
            v[a] = 1.0;
        }
        GridFunction(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn abs(&self) -> GridFunction {
        GridFunction(self.0.iter().map(|v| v.abs()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Named measure families used by the experiments and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    LebesgueInterval { res: usize },
    LebesgueSquare { res: usize },
    SaksmanIntervals { k: usize, res: usize },
    AdRegularLine { res: usize },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<DiscreteMeasure> {
        match *self {
            MeasureSpec::LebesgueInterval { res } => lebesgue_interval(res),
            MeasureSpec::LebesgueSquare { res } => lebesgue_square(res),
            MeasureSpec::SaksmanIntervals { k, res } => saksman_intervals(k, res),
            MeasureSpec::AdRegularLine { res } => ad_regular_line(res),
        }
    }
}

fn check_res(res: usize) -> Result<()> {
    if res < 2 {
        return Err(Error::InvalidParameter(format!("res must be >= 2, got {res}")));
    }
    Ok(())
}

/// Lebesgue measure on `[0, 1]`: `res` cell-centred atoms of mass `1/res`, `n = 1`.
pub fn lebesgue_interval(res: usize) -> Result<DiscreteMeasure> {
    check_res(res)?;
    let h = 1.0 / res as f64;
    let coords = (0..res).map(|i| (i as f64 + 0.5) * h).collect();
    DiscreteMeasure::new(1, 1.0, 2.0, coords, vec![h; res])
}

/// Planar Lebesgue measure on the unit square, studied with `n = 1`.
pub fn lebesgue_square(res: usize) -> Result<DiscreteMeasure> {
    check_res(res)?;
    let h = 1.0 / res as f64;
    let mut coords = Vec::with_capacity(2 * res * res);
    for i in 0..res {
        for j in 0..res {
            coords.push((i as f64 + 0.5) * h);
            coords.push((j as f64 + 0.5) * h);
        }
    }
    DiscreteMeasure::new(2, 1.0, 2.0, coords, vec![h * h; res * res])
}

/// Length measure on the segment `[0, 1] x {0}` in the plane (`d = 2`, `n = 1`).
pub fn ad_regular_line(res: usize) -> Result<DiscreteMeasure> {
    check_res(res)?;
    let h = 1.0 / res as f64;
    let mut coords = Vec::with_capacity(2 * res);
    for i in 0..res {
        coords.push((i as f64 + 0.5) * h);
        coords.push(0.0);
    }
    DiscreteMeasure::new(2, 1.0, 2.0, coords, vec![h; res])
}

pub const SAKSMAN_MAX_K: usize = 18;

/// Factorial as a float; exact for the range used here (`k <= 20`).
pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// The intervals `I_k = (1/k - l_k/4, 1/k + l_k/4)`, `l_k = 1/k!`, `k = 1..=K`,
/// as `(left, right)` pairs.
pub fn saksman_interval_bounds(k_max: usize) -> Vec<(f64, f64)> {
    (1..=k_max)
        .map(|k| {
            let c = 1.0 / k as f64;
            let l = 1.0 / factorial(k);
            (c - l / 4.0, c + l / 4.0)
        })
        .collect()
}

/// Lebesgue measure restricted to `I_1 u ... u I_K`, `res` atoms per interval.
/// Atoms carry the component label `k` of their interval.
pub fn saksman_intervals(k_max: usize, res: usize) -> Result<DiscreteMeasure> {
    check_res(res)?;
    // beyond 18 the interval widths drop below double precision at 1/K
    if !(2..=SAKSMAN_MAX_K).contains(&k_max) {
        return Err(Error::InvalidParameter(format!(
            "K must lie in 2..={SAKSMAN_MAX_K}, got {k_max}"
        )));
    }
    let bounds = saksman_interval_bounds(k_max);
    for w in bounds.windows(2) {
        // w[0] = I_k lies to the right of w[1] = I_{k+1}; open intervals may touch
        if w[1].1 > w[0].0 {
            return Err(Error::InvalidParameter("Saksman intervals overlap".into()));
        }
    }
    let mut coords = Vec::with_capacity(k_max * res);
    let mut masses = Vec::with_capacity(k_max * res);
    let mut labels = Vec::with_capacity(k_max * res);
    for (idx, (a, b)) in bounds.iter().enumerate() {
        let h = (b - a) / res as f64;
        for i in 0..res {
            coords.push(a + (i as f64 + 0.5) * h);
            masses.push(h);
            labels.push(idx + 1);
        }
    }
    DiscreteMeasure::new(1, 1.0, 2.0, coords, masses)?.with_components(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_ball(m: &DiscreteMeasure, x: &[f64], r: f64) -> f64 {
        (0..m.len())
            .filter(|&i| dist(m.point(i), x) <= r)
            .map(|i| m.mass(i))
            .sum()
    }

    fn brute_cube(m: &DiscreteMeasure, q: &Cube) -> f64 {
        (0..m.len())
            .filter(|&i| q.contains_point(m.point(i)))
            .map(|i| m.mass(i))
            .sum()
    }

    fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
        let coords = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let masses = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        DiscreteMeasure::new(d, d as f64, 10.0, coords, masses).unwrap()
    }

    #[test]
    fn single_atom_closed_ball() {
        let m = DiscreteMeasure::from_atoms(1, 1.0, 1.0, &[(vec![0.0], 1.0)]).unwrap();
        assert_eq!(m.ball_mass(&[0.0], 0.0), 1.0);
        assert_eq!(m.ball_mass(&[2.0], 1.0), 0.0);
    }

    #[test]
    fn cube_counts_face_atoms() {
        let m = DiscreteMeasure::from_atoms(2, 1.0, 1.0, &[(vec![0.0, 0.0], 1.0), (vec![1.0, 0.3], 2.0)])
            .unwrap();
        assert_eq!(m.cube_mass(&Cube::new(vec![0.0, 0.0], 2.0)), 3.0);
        assert_eq!(m.cube_mass(&Cube::new(vec![0.0, 0.0], 1.0)), 1.0);
    }

    #[test]
    fn index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..=3 {
            let m = random_measure(&mut rng, 100, d);
            for _ in 0..1000 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let r = rng.gen_range(0.0..1.5_f64).powi(2);
                let a = m.ball_mass(&x, r);
                let b = brute_ball(&m, &x, r);
                assert!((a - b).abs() <= 1e-10 * b.max(1e-300), "{a} vs {b}");
                let q = Cube::new(x.clone(), 2.0 * r);
                let a = m.cube_mass(&q);
                let b = brute_cube(&m, &q);
                assert!((a - b).abs() <= 1e-10 * b.max(1e-300));
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            DiscreteMeasure::new(1, 1.0, 1.0, vec![], vec![]),
            Err(Error::EmptyMeasure)
        ));
        assert!(matches!(
            DiscreteMeasure::new(1, 1.0, 1.0, vec![0.0], vec![0.0]),
            Err(Error::BadMass { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(1, 2.0, 1.0, vec![0.0], vec![1.0]),
            Err(Error::BadExponent { .. })
        ));
        assert!(lebesgue_interval(1).is_err());
        assert!(saksman_intervals(1, 10).is_err());
        assert!(saksman_intervals(19, 10).is_err());
    }

    #[test]
    fn generator_masses() {
        let m = saksman_intervals(3, 10).unwrap();
        let expected = 0.5 * (1.0 + 0.5 + 1.0 / 6.0);
        assert!((m.total_mass() - expected).abs() < 1e-12);
        assert_eq!(m.components().unwrap()[0], 1);
        assert_eq!(m.components().unwrap()[29], 3);

        let sq = lebesgue_square(50).unwrap();
        assert!((sq.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(sq.dim(), 2);

        let one = DiscreteMeasure::from_atoms(1, 1.0, 1.0, &[(vec![0.0], 1.0)]).unwrap();
        assert_eq!(one.dim(), 1);
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn saksman_intervals_are_disjoint_up_to_twenty() {
        let b = saksman_interval_bounds(20);
        for w in b.windows(2) {
            assert!(w[1].1 <= w[0].0);
        }
    }

    #[test]
    fn growth_on_interval_sets() {
        let m = saksman_intervals(8, 64).unwrap();
        let rep = m.verify_growth(&GrowthOptions {
            samples: 512,
            tol: 0.05,
            r_lo: None,
        });
        // Lebesgue on subsets of the line: mu(B(x, r)) <= 2r.
        assert!(rep.passed, "{rep:?}");
        assert!(rep.normalized_ratio <= 1.05);

        let sq = lebesgue_square(40).unwrap();
        let rep = sq.verify_growth(&GrowthOptions {
            samples: 200,
            tol: 0.05,
            r_lo: Some(sq.resolution_floor()),
        });
        assert!(rep.max_ratio <= 4.0 + 0.05, "{rep:?}");
    }

    #[test]
    fn growth_fails_for_an_atom_at_small_scales() {
        let m = DiscreteMeasure::from_atoms(1, 1.0, 1.0, &[(vec![0.0], 1.0)]).unwrap();
        let rep = m.verify_growth(&GrowthOptions {
            samples: 1,
            tol: 0.05,
            r_lo: Some(1e-6),
        });
        assert!(!rep.passed);
        assert!(rep.max_ratio >= 1e6 * 0.999);
    }

    #[test]
    fn json_roundtrip_keeps_components() {
        let m = saksman_intervals(3, 4).unwrap();
        let j = serde_json::to_string(&m.to_json()).unwrap();
        let back = DiscreteMeasure::from_json(&serde_json::from_str(&j).unwrap()).unwrap();
        assert_eq!(back.len(), m.len());
        assert_eq!(back.components(), m.components());
        assert_eq!(back.total_mass(), m.total_mass());
    }

    #[test]
    fn spacing_and_floor() {
        let m = lebesgue_interval(100).unwrap();
        assert!((m.max_spacing() - 0.01).abs() < 1e-12);
        assert!((m.resolution_floor() - 0.02).abs() < 1e-12);
    }
}
