//! Whitney decompositions of open sets, Wiener-type and Besicovitch-type
//! selections, each returned together with a checked certificate.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::Cube;
use crate::error::{Error, Result};
use crate::measure::dist;

/// An open set given through its signed distance: positive inside (distance
/// to the complement), non-positive outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Interior of an axis-parallel cube.
    BoxInterior { cube: Cube },
    /// `{x : normal . x < offset}`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Intersection { parts: Vec<Region> },
    Empty,
}

impl Region {
    /// Signed distance. Exact for the primitive regions; for intersections it
    /// is exact inside and never exceeds the true distance outside.
    pub fn signed_distance(&self, p: &[f64]) -> f64 {
        match self {
            Region::BoxInterior { cube } => {
                let h = cube.side() / 2.0;
                let gaps: Vec<f64> = p.iter().zip(cube.center()).map(|(x, c)| (x - c).abs() - h).collect();
                let worst = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if worst < 0.0 {
                    -worst
                } else {
                    -gaps.iter().map(|g| g.max(0.0).powi(2)).sum::<f64>().sqrt()
                }
            }
            Region::HalfSpace { normal, offset } => {
                let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = normal.iter().zip(p).map(|(a, b)| a * b).sum();
                (offset - dot) / norm
            }
            Region::Ball { center, radius } => radius - dist(center, p),
            Region::Intersection { parts } => parts
                .iter()
                .map(|r| r.signed_distance(p))
                .fold(f64::INFINITY, f64::min),
            Region::Empty => f64::NEG_INFINITY,
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.signed_distance(p) > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitneyDecomposition {
    pub region: Region,
    pub root: Cube,
    pub max_depth: usize,
    pub cubes: Vec<Cube>,
    /// Cubes at the depth floor that meet the region but were not accepted.
    pub incomplete: Vec<Cube>,
}

/// Lower and upper Whitney constants on `dist(Q, boundary) / l(Q)`.
pub const WHITNEY_C1: f64 = 1.0;

pub fn whitney_c2(d: usize) -> f64 {
    40.0 * (d as f64).sqrt()
}

fn children(q: &Cube) -> Vec<Cube> {
    let d = q.dim();
    let h = q.side() / 2.0;
    (0..1usize << d)
        .map(|mask| {
            let c = q
                .center()
                .iter()
                .enumerate()
                .map(|(j, c)| c + if mask >> j & 1 == 1 { h / 2.0 } else { -h / 2.0 })
                .collect();
            Cube::new(c, h)
        })
        .collect()
}

/// Dyadic refinement of `root`: a cube is accepted when
/// `10 diam(Q) <= dist(center, boundary)`, otherwise split while it may meet
/// the region.
pub fn whitney(region: &Region, root: &Cube, max_depth: usize) -> Result<WhitneyDecomposition> {
    if root.is_whole_space() || root.is_point() {
        return Err(Error::InvalidParameter("Whitney root must be a bounded cube".into()));
    }
    let mut cubes = Vec::new();
    let mut incomplete = Vec::new();
    let mut stack = vec![(root.clone(), 0usize)];
    while let Some((q, depth)) = stack.pop() {
        let sd = region.signed_distance(q.center());
        if 10.0 * q.diam() <= sd {
            cubes.push(q);
        } else if sd > -q.diam() / 2.0 {
            if depth < max_depth {
                stack.extend(children(&q).into_iter().rev().map(|c| (c, depth + 1)));
            } else {
                incomplete.push(q);
            }
        }
    }
    Ok(WhitneyDecomposition {
        region: region.clone(),
        root: root.clone(),
        max_depth,
        cubes,
        incomplete,
    })
}

/// Largest number of closed boxes sharing a point.
///
/// The deepest point of a clique can be taken with every coordinate equal to
/// some member's lower bound, and each member meets the one supplying the
/// first coordinate, so it is enough to scan those tuples neighbourhood by
/// neighbourhood.
pub fn max_overlap(boxes: &[Cube]) -> usize {
    let d = match boxes.first() {
        Some(b) => b.dim(),
        None => return 0,
    };
    let lows: Vec<Vec<f64>> = boxes.iter().map(Cube::lower).collect();
    let highs: Vec<Vec<f64>> = boxes.iter().map(Cube::upper).collect();
    // compare against the stored bounds so a box always holds its own corner
    let cand = candidate_pairs(boxes);
    let holds = |b: usize, p: &[f64]| (0..d).all(|j| lows[b][j] <= p[j] && p[j] <= highs[b][j]);
    (0..boxes.len())
        .into_par_iter()
        .map(|a| {
            let near: Vec<usize> = cand[a].iter().copied().filter(|&b| boxes[a].intersects(&boxes[b])).collect();
            let mut best = 0;
            let mut idx = vec![0usize; d.saturating_sub(1)];
            loop {
                let mut p = Vec::with_capacity(d);
                p.push(lows[a][0]);
                for (j, &i) in idx.iter().enumerate() {
                    p.push(lows[near[i]][j + 1]);
                }
                let count = near.iter().filter(|&&b| holds(b, &p)).count();
                best = best.max(count);
                // odometer over near^(d-1)
                let mut j = 0;
                while j < idx.len() {
                    idx[j] += 1;
                    if idx[j] < near.len() {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if j == idx.len() {
                    break;
                }
            }
            best
        })
        .max()
        .unwrap_or(0)
}

/// For each box, the boxes (itself included) whose first-axis extent meets
/// its own, by a sweep over the sorted lower bounds.
fn candidate_pairs(boxes: &[Cube]) -> Vec<Vec<usize>> {
    let lo: Vec<f64> = boxes.iter().map(|b| b.center()[0] - b.side() / 2.0).collect();
    let hi: Vec<f64> = boxes.iter().map(|b| b.center()[0] + b.side() / 2.0).collect();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| lo[a].total_cmp(&lo[b]));
    let mut out = vec![Vec::new(); boxes.len()];
    for (pos, &a) in order.iter().enumerate() {
        out[a].push(a);
        for &b in &order[pos + 1..] {
            if lo[b] > hi[a] {
                break;
            }
            out[a].push(b);
            out[b].push(a);
        }
    }
    out
}

/// Closed-box containment of `b` in the union of `cover`, decided exactly by
/// splitting `b` along the faces of the boxes that cut it.
pub fn box_in_union(b: &Cube, cover: &[Cube]) -> bool {
    let lo = b.lower();
    let hi = b.upper();
    let boxes: Vec<(Vec<f64>, Vec<f64>)> = cover
        .iter()
        .filter(|c| c.intersects(b))
        .map(|c| (c.lower(), c.upper()))
        .collect();
    rect_in_union(&lo, &hi, &boxes)
}

fn rect_in_union(lo: &[f64], hi: &[f64], boxes: &[(Vec<f64>, Vec<f64>)]) -> bool {
    let d = lo.len();
    let meets = |(bl, bh): &(Vec<f64>, Vec<f64>)| (0..d).all(|j| bl[j] <= hi[j] && lo[j] <= bh[j]);
    let Some(first) = boxes.iter().position(meets) else {
        return false;
    };
    let (bl, bh) = &boxes[first];
    if (0..d).all(|j| bl[j] <= lo[j] && hi[j] <= bh[j]) {
        return true;
    }
    // split along the first axis where the box cuts through
    for j in 0..d {
        let mut cuts = Vec::new();
        if bl[j] > lo[j] && bl[j] < hi[j] {
            cuts.push(bl[j]);
        }
        if bh[j] > lo[j] && bh[j] < hi[j] {
            cuts.push(bh[j]);
        }
        if cuts.is_empty() {
            continue;
        }
        let mut edges = vec![lo[j]];
        edges.extend(cuts);
        edges.push(hi[j]);
        let rest = boxes;
        return edges.windows(2).all(|w| {
            let mut l = lo.to_vec();
            let mut h = hi.to_vec();
            l[j] = w[0];
            h[j] = w[1];
            rect_in_union(&l, &h, rest)
        });
    }
    // the box covers the rectangle in every axis it was not skipped on, and
    // touches it only on a face in the others
    let rest: Vec<(Vec<f64>, Vec<f64>)> = boxes
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != first)
        .map(|(_, b)| b.clone())
        .collect();
    let degenerate = (0..d).any(|j| bl[j] == hi[j] || bh[j] == lo[j]);
    if degenerate {
        rect_in_union(lo, hi, &rest)
    } else {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCertificate {
    pub cubes: usize,
    pub incomplete: usize,
    pub overlapping_pairs: usize,
    pub dilation_violations: usize,
    pub min_distance_ratio: f64,
    pub max_distance_ratio: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_overlap_4q: usize,
    pub overlap_bound: usize,
    pub coverage_samples: usize,
    pub coverage_failures: usize,
    pub passed: bool,
}

/// Checks disjoint interiors, `10Q` inside the region, the distance window,
/// the overlap of the `4Q` and sampled coverage of `region n root`.
pub fn certify_whitney<R: Rng>(w: &WhitneyDecomposition, samples: usize, rng: &mut R) -> WhitneyCertificate {
    let d = w.root.dim();
    let cubes = &w.cubes;
    let overlapping_pairs: usize = candidate_pairs(cubes)
        .into_par_iter()
        .enumerate()
        .map(|(i, near)| {
            near.into_iter()
                .filter(|&j| {
                    let (a, b) = (&cubes[i], &cubes[j]);
                    j > i
                        && (0..d).all(|t| {
                            a.center()[t] - a.side() / 2.0 < b.center()[t] + b.side() / 2.0
                                && b.center()[t] - b.side() / 2.0 < a.center()[t] + a.side() / 2.0
                        })
                })
                .count()
        })
        .sum();
    // corners of 10Q are the farthest points from its centre
    let dilation_violations = cubes
        .par_iter()
        .filter(|q| w.region.signed_distance(q.center()) <= 5.0 * q.diam())
        .count();
    let (min_ratio, max_ratio) = cubes
        .par_iter()
        .map(|q| {
            let sd = w.region.signed_distance(q.center());
            let lo = (sd - q.diam() / 2.0) / q.side();
            let hi = sd / q.side();
            (lo, hi)
        })
        .reduce(
            || (f64::INFINITY, 0.0),
            |a, b| (a.0.min(b.0), f64::max(a.1, b.1)),
        );
    let quad: Vec<Cube> = cubes.iter().map(|q| q.dilate(4.0)).collect();
    let max_overlap_4q = max_overlap(&quad);
    let overlap_bound = 2 * 5usize.pow(d as u32);

    let mut coverage_failures = 0;
    let lo = w.root.lower();
    for _ in 0..samples {
        let p: Vec<f64> = lo.iter().map(|l| l + rng.gen::<f64>() * w.root.side()).collect();
        let inside = w.region.contains(&p);
        let in_kept = cubes.iter().any(|q| q.contains_point(&p));
        let in_floor = w.incomplete.iter().any(|q| q.contains_point(&p));
        if (inside && !in_kept && !in_floor) || (!inside && in_kept) {
            coverage_failures += 1;
        }
    }
    let c2 = whitney_c2(d);
    let passed = overlapping_pairs == 0
        && dilation_violations == 0
        && (cubes.is_empty() || (min_ratio >= WHITNEY_C1 && max_ratio <= c2))
        && max_overlap_4q <= overlap_bound
        && coverage_failures == 0;
    WhitneyCertificate {
        cubes: cubes.len(),
        incomplete: w.incomplete.len(),
        overlapping_pairs,
        dilation_violations,
        min_distance_ratio: if cubes.is_empty() { 0.0 } else { min_ratio },
        max_distance_ratio: max_ratio,
        c1: WHITNEY_C1,
        c2,
        max_overlap_4q,
        overlap_bound,
        coverage_samples: samples,
        coverage_failures,
        passed,
    }
}

/// `U_m(Q_i)`: the cubes meeting `3Q_i`, then `m - 1` further layers of cubes
/// meeting the previous layer (closed intersections).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborLayers {
    pub index: usize,
    pub m: usize,
    pub double: Cube,
    pub members: Vec<usize>,
}

pub fn neighbor_layers(w: &WhitneyDecomposition, i: usize, m: usize) -> Result<NeighborLayers> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let q = w
        .cubes
        .get(i)
        .ok_or_else(|| Error::InvalidParameter(format!("no Whitney cube {i}")))?;
    let triple = q.dilate(3.0);
    let mut inside = vec![false; w.cubes.len()];
    let mut frontier: Vec<usize> = (0..w.cubes.len()).filter(|&j| w.cubes[j].intersects(&triple)).collect();
    for &j in &frontier {
        inside[j] = true;
    }
    for _ in 1..m {
        let mut next = Vec::new();
        for j in 0..w.cubes.len() {
            if !inside[j] && frontier.iter().any(|&f| w.cubes[f].intersects(&w.cubes[j])) {
                next.push(j);
            }
        }
        for &j in &next {
            inside[j] = true;
        }
        frontier = next;
    }
    Ok(NeighborLayers {
        index: i,
        m,
        double: q.dilate(2.0),
        members: (0..w.cubes.len()).filter(|&j| inside[j]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerCertificate {
    pub selected: usize,
    pub uncovered_points: usize,
    pub intersecting_pairs: usize,
    /// Smallest gap between two selected `2Q`; infinite with fewer than two.
    pub min_gap: f64,
    pub size_violations: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerSelection {
    pub selected: Vec<usize>,
    pub certificate: WienerCertificate,
}

/// Greedy selection: repeatedly take a largest cube whose `4Q` is not yet
/// inside the union of the selected `20Q` (ties to the lower index).
pub fn wiener_select(cubes: &[Cube], points: &[Vec<f64>]) -> Result<WienerSelection> {
    if let Some(i) = points.iter().position(|p| !cubes.iter().any(|q| q.contains_point(p))) {
        return Err(Error::NotCovered(i));
    }
    let selected = if let Some(i) = cubes.iter().position(Cube::is_whole_space) {
        vec![i]
    } else {
        let mut order: Vec<usize> = (0..cubes.len()).collect();
        order.sort_by(|&a, &b| cubes[b].side().total_cmp(&cubes[a].side()).then(a.cmp(&b)));
        let mut sel: Vec<usize> = Vec::new();
        let mut twenty: Vec<Cube> = Vec::new();
        // sides are visited in decreasing order and the union only grows, so a
        // cube rejected once stays rejected
        for i in order {
            if !box_in_union(&cubes[i].dilate(4.0), &twenty) {
                sel.push(i);
                twenty.push(cubes[i].dilate(20.0));
            }
        }
        sel
    };
    let certificate = certify_wiener(cubes, points, &selected);
    Ok(WienerSelection { selected, certificate })
}

/// Exhaustive check of the three selection properties.
pub fn certify_wiener(cubes: &[Cube], points: &[Vec<f64>], selected: &[usize]) -> WienerCertificate {
    let twenty: Vec<Cube> = selected.iter().map(|&j| cubes[j].dilate(20.0)).collect();
    let uncovered_points = points
        .par_iter()
        .filter(|p| !twenty.iter().any(|q| q.contains_point(p)))
        .count();
    let double: Vec<Cube> = selected.iter().map(|&j| cubes[j].dilate(2.0)).collect();
    let mut intersecting_pairs = 0;
    let mut min_gap = f64::INFINITY;
    for a in 0..double.len() {
        for b in a + 1..double.len() {
            let gap = double[a].separation(&double[b]);
            min_gap = min_gap.min(gap);
            if double[a].intersects(&double[b]) {
                intersecting_pairs += 1;
            }
        }
    }
    let mut is_sel = vec![false; cubes.len()];
    for &j in selected {
        is_sel[j] = true;
    }
    let size_violations: usize = selected
        .par_iter()
        .map(|&j| {
            let dj = cubes[j].dilate(2.0);
            (0..cubes.len())
                .filter(|&k| !is_sel[k] && dj.intersects(&cubes[k].dilate(2.0)) && cubes[k].side() > 10.0 * cubes[j].side())
                .count()
        })
        .sum();
    WienerCertificate {
        selected: selected.len(),
        uncovered_points,
        intersecting_pairs,
        min_gap,
        size_violations,
        passed: uncovered_points == 0 && intersecting_pairs == 0 && size_violations == 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesicovitchCertificate {
    pub selected: usize,
    pub uncovered_points: usize,
    /// Pairs `(z, i)` with `z` in the `i`-th selected cube and `l(Q_z) > 4 l(R_i)`.
    pub factor4_violations: usize,
    pub max_size_ratio: f64,
    pub max_overlap: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesicovitchSelection {
    /// For each point `x`, the index `y` with `R_x = Q_y`.
    pub r_of: Vec<usize>,
    /// Points `x_i` whose `R_{x_i}` were selected.
    pub selected: Vec<usize>,
    pub certificate: BesicovitchCertificate,
}

/// For each point, `R_x` is a largest `Q_y` with `x` in `Q_y / 2`; then points
/// are taken greedily by decreasing `l(R_x)` among those not yet covered.
pub fn besicovitch_select(points: &[Vec<f64>], cubes: &[Cube]) -> Result<BesicovitchSelection> {
    if points.len() != cubes.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            got: cubes.len(),
        });
    }
    for (i, (p, q)) in points.iter().zip(cubes).enumerate() {
        let off = p.iter().zip(q.center()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if off > 1e-12 * (1.0 + q.side()) || q.is_whole_space() {
            return Err(Error::InvalidParameter(format!("cube {i} is not a bounded cube centred at its point")));
        }
    }
    let halves: Vec<Cube> = cubes.iter().map(|q| q.dilate(0.5)).collect();
    let r_of: Vec<usize> = points
        .par_iter()
        .map(|x| {
            (0..cubes.len())
                .filter(|&y| halves[y].contains_point(x))
                .max_by(|&a, &b| cubes[a].side().total_cmp(&cubes[b].side()).then(b.cmp(&a)))
                .expect("every point lies in its own half cube")
        })
        .collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| cubes[r_of[b]].side().total_cmp(&cubes[r_of[a]].side()).then(a.cmp(&b)));
    let mut covered = vec![false; points.len()];
    let mut selected = Vec::new();
    for x in order {
        if covered[x] {
            continue;
        }
        selected.push(x);
        let r = &cubes[r_of[x]];
        for (z, c) in covered.iter_mut().enumerate() {
            if !*c && r.contains_point(&points[z]) {
                *c = true;
            }
        }
    }
    let certificate = certify_besicovitch(points, cubes, &r_of, &selected);
    Ok(BesicovitchSelection { r_of, selected, certificate })
}

pub fn certify_besicovitch(points: &[Vec<f64>], cubes: &[Cube], r_of: &[usize], selected: &[usize]) -> BesicovitchCertificate {
    let chosen: Vec<&Cube> = selected.iter().map(|&x| &cubes[r_of[x]]).collect();
    let per_point: Vec<(bool, usize, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(z, p)| {
            let mut hit = false;
            let mut bad = 0;
            let mut ratio: f64 = 0.0;
            for r in &chosen {
                if r.contains_point(p) {
                    hit = true;
                    let q = cubes[z].side() / r.side();
                    ratio = ratio.max(q);
                    if cubes[z].side() > 4.0 * r.side() {
                        bad += 1;
                    }
                }
            }
            (hit, bad, ratio)
        })
        .collect();
    let uncovered_points = per_point.iter().filter(|t| !t.0).count();
    let factor4_violations = per_point.iter().map(|t| t.1).sum();
    let max_size_ratio = per_point.iter().map(|t| t.2).fold(0.0, f64::max);
    let boxes: Vec<Cube> = chosen.into_iter().cloned().collect();
    let max_overlap = max_overlap(&boxes);
    BesicovitchCertificate {
        selected: selected.len(),
        uncovered_points,
        factor4_violations,
        max_size_ratio,
        max_overlap,
        passed: uncovered_points == 0 && factor4_violations == 0,
    }
}

/// A random instance: `count` cubes on the line (`d = 1`) or in the unit
/// square, log-uniform sides in `[lo, hi]`, and points drawn inside them.
pub fn random_cover_instance<R: Rng>(
    d: usize,
    count: usize,
    points: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> (Vec<Cube>, Vec<Vec<f64>>) {
    let cubes: Vec<Cube> = (0..count)
        .map(|_| {
            let side = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp();
            Cube::new((0..d).map(|_| rng.gen::<f64>()).collect(), side)
        })
        .collect();
    let pts = (0..points)
        .map(|_| {
            let q = &cubes[rng.gen_range(0..cubes.len())];
            q.center().iter().map(|c| c + (rng.gen::<f64>() - 0.5) * q.side()).collect()
        })
        .collect();
    (cubes, pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> Cube {
        Cube::new(vec![0.5, 0.5], 1.0)
    }

    #[test]
    fn signed_distances() {
        let b = Region::BoxInterior { cube: unit_square() };
        assert!((b.signed_distance(&[0.5, 0.5]) - 0.5).abs() < 1e-15);
        assert!((b.signed_distance(&[0.1, 0.5]) - 0.1).abs() < 1e-15);
        assert!((b.signed_distance(&[2.0, 2.0]) + 2f64.sqrt()).abs() < 1e-12);
        let h = Region::HalfSpace { normal: vec![2.0, 0.0], offset: 1.0 };
        assert!((h.signed_distance(&[0.25, 9.0]) - 0.25).abs() < 1e-15);
        assert!(!Region::Empty.contains(&[0.0, 0.0]));
    }

    #[test]
    fn whitney_on_canonical_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let root = unit_square();
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
        for r in &regions {
            let w = whitney(r, &root, 7).unwrap();
            assert!(!w.cubes.is_empty());
            let cert = certify_whitney(&w, 2000, &mut rng);
            assert!(cert.passed, "{cert:?}");
        }
        let w = whitney(&Region::Empty, &root, 7).unwrap();
        assert!(w.cubes.is_empty() && w.incomplete.is_empty());
        assert!(certify_whitney(&w, 100, &mut rng).passed);
    }

    #[test]
    fn half_space_sizes_track_distance() {
        let root = unit_square();
        let r = Region::HalfSpace { normal: vec![1.0, 0.0], offset: 1.0 };
        let w = whitney(&r, &root, 9).unwrap();
        for q in &w.cubes {
            let sd = 1.0 - q.center()[0];
            assert!(sd / q.side() >= 10.0 * 2f64.sqrt() && sd / q.side() <= 20.5 * 2f64.sqrt() + 1e-9);
        }
    }

    #[test]
    fn overlap_is_exact_on_small_cases() {
        let boxes = vec![
            Cube::new(vec![0.0, 0.0], 2.0),
            Cube::new(vec![1.0, 0.0], 2.0),
            Cube::new(vec![0.0, 1.0], 2.0),
            Cube::new(vec![5.0, 5.0], 1.0),
        ];
        assert_eq!(max_overlap(&boxes), 3);
        // pairwise intersecting along a staircase without a common point is impossible for boxes
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (cubes, _) = random_cover_instance(2, 40, 0, 0.05, 0.4, &mut rng);
        // every cell of the arrangement has a representative on the grid of
        // all box faces
        let lo: Vec<Vec<f64>> = cubes.iter().map(Cube::lower).collect();
        let hi: Vec<Vec<f64>> = cubes.iter().map(Cube::upper).collect();
        let axis = |j: usize| -> Vec<f64> { lo.iter().chain(&hi).map(|v| v[j]).collect() };
        let mut brute = 0;
        for x in axis(0) {
            for y in axis(1) {
                let c = (0..cubes.len())
                    .filter(|&b| lo[b][0] <= x && x <= hi[b][0] && lo[b][1] <= y && y <= hi[b][1])
                    .count();
                brute = brute.max(c);
            }
        }
        assert_eq!(max_overlap(&cubes), brute);
    }

    #[test]
    fn union_containment() {
        let a = Cube::new(vec![0.0, 0.0], 2.0);
        let halves = [Cube::new(vec![-0.5, 0.0], 1.0), Cube::new(vec![0.5, 0.0], 1.0)];
        // two unit squares do not cover the 2 x 2 square
        assert!(!box_in_union(&a, &halves));
        let tiles: Vec<Cube> = [(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)]
            .iter()
            .map(|&(x, y)| Cube::new(vec![x, y], 1.0))
            .collect();
        assert!(box_in_union(&a, &tiles));
        assert!(!box_in_union(&a, &tiles[..3]));
        assert!(box_in_union(&Cube::new(vec![0.0], 1.0), &[Cube::new(vec![-0.3], 0.8), Cube::new(vec![0.3], 0.8)]));
    }

    #[test]
    fn neighbor_layers_grow_and_match_bfs() {
        let root = unit_square();
        let w = whitney(&Region::BoxInterior { cube: root.clone() }, &root, 7).unwrap();
        let n = w.cubes.len();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|a| (0..n).filter(|&b| w.cubes[a].intersects(&w.cubes[b])).collect())
            .collect();
        for i in [0, n / 3, n - 1] {
            let mut prev: Vec<usize> = Vec::new();
            for m in 1..=3 {
                let u = neighbor_layers(&w, i, m).unwrap();
                assert!(prev.iter().all(|j| u.members.contains(j)));
                // BFS from the cubes meeting 3Q_i
                let triple = w.cubes[i].dilate(3.0);
                let mut level: Vec<Option<usize>> = (0..n).map(|j| w.cubes[j].intersects(&triple).then_some(1)).collect();
                for step in 1..m {
                    for j in 0..n {
                        if level[j].is_none() && adj[j].iter().any(|&k| level[k] == Some(step)) {
                            level[j] = Some(step + 1);
                        }
                    }
                }
                let expect: Vec<usize> = (0..n).filter(|&j| level[j].is_some()).collect();
                assert_eq!(u.members, expect);
                prev = u.members;
            }
        }
        assert!(neighbor_layers(&w, 0, 0).is_err());
    }

    #[test]
    fn wiener_small_cases() {
        let one = vec![Cube::new(vec![0.0], 1.0)];
        let s = wiener_select(&one, &[vec![0.2]]).unwrap();
        assert_eq!(s.selected, vec![0]);
        let two = vec![Cube::new(vec![0.0], 1.0), Cube::new(vec![100.0], 1.0)];
        let s = wiener_select(&two, &[vec![0.0], vec![100.0]]).unwrap();
        assert_eq!(s.selected, vec![0, 1]);
        assert!(s.certificate.passed);
        assert!(wiener_select(&one, &[vec![3.0]]).is_err());
        let whole = vec![Cube::new(vec![0.0], 1.0), Cube::whole_space(1)];
        assert_eq!(wiener_select(&whole, &[vec![0.0]]).unwrap().selected, vec![1]);
    }

    #[test]
    fn wiener_random_lines() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for d in [1, 2] {
            for _ in 0..10 {
                let (cubes, pts) = random_cover_instance(d, 100, 200, 0.001, 0.2, &mut rng);
                let s = wiener_select(&cubes, &pts).unwrap();
                assert!(s.certificate.passed, "{:?}", s.certificate);
            }
        }
    }

    #[test]
    fn besicovitch_cases() {
        let pts = vec![vec![0.3, 0.3]];
        let s = besicovitch_select(&pts, &[Cube::new(vec![0.3, 0.3], 0.1)]).unwrap();
        assert_eq!(s.selected, vec![0]);

        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let grid: Vec<Vec<f64>> = (0..10).flat_map(|i| (0..10).map(move |j| vec![i as f64 * 0.1, j as f64 * 0.1])).collect();
        let same: Vec<Cube> = grid.iter().map(|p| Cube::new(p.clone(), 0.15)).collect();
        let s = besicovitch_select(&grid, &same).unwrap();
        assert!(s.certificate.passed);
        assert!((s.certificate.max_size_ratio - 1.0).abs() < 1e-15);

        let mut giant = same.clone();
        giant[55] = Cube::new(grid[55].clone(), 0.9);
        let s = besicovitch_select(&grid, &giant).unwrap();
        assert!(s.selected.contains(&55) || s.r_of.contains(&55));
        assert!(s.certificate.passed);

        for _ in 0..10 {
            let pts: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen(), rng.gen()]).collect();
            let cubes: Vec<Cube> = pts
                .iter()
                .map(|p| Cube::new(p.clone(), (rng.gen_range(-6.0..-1.0f64)).exp()))
                .collect();
            let s = besicovitch_select(&pts, &cubes).unwrap();
            assert!(s.certificate.passed, "{:?}", s.certificate);
        }
        assert!(besicovitch_select(&pts, &[Cube::new(vec![0.0, 0.0], 1.0)]).is_err());
    }
}
