//! Maximal operators: `N` through the test functions `phi_{x,r,R}` and through
//! `sup_k S_k`, the truncations `N^h`, the centred `M_lambda`, the radial
//! `M_R`, and the search for doubling cubes with small mean.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{is_doubling, Cube};
use crate::kernels::KernelProfile;
use crate::lattice::{CubeClass, ScaleClass};
use crate::measure::{dist, pow_n, DiscreteMeasure};

/// Ratio between consecutive grid radii.
pub const GRID_RATIO: f64 = 1.189_207_115_002_721; // 2^(1/4)

/// Log grid with ratio `2^(1/4)` covering `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo, "log grid needs 0 < lo <= hi");
    let mut v = vec![lo];
    let mut r = lo;
    while r < hi {
        r *= GRID_RATIO;
        v.push(r);
    }
    v
}

/// The default radii grid `[r_min, 4 diam(supp)]`.
pub fn radii_grid(m: &DiscreteMeasure) -> Vec<f64> {
    let lo = if m.resolution_floor() > 0.0 {
        m.resolution_floor()
    } else {
        1.0
    };
    log_grid(lo, (4.0 * m.diameter()).max(lo))
}

/// Atoms sorted by distance from `p`, with the index where each grid radius
/// ends (closed balls).
struct Sorted {
    order: Vec<usize>,
    dists: Vec<f64>,
    cut: Vec<usize>,
}

fn sort_from(m: &DiscreteMeasure, p: &[f64], grid: &[f64]) -> Sorted {
    let mut pairs: Vec<(f64, usize)> = (0..m.len()).map(|j| (dist(m.point(j), p), j)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let dists: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let order = pairs.into_iter().map(|p| p.1).collect();
    let cut = grid.iter().map(|&r| dists.partition_point(|&d| d <= r)).collect();
    Sorted { order, dists, cut }
}

fn phi_max(m: &DiscreteMeasure, s: &Sorted, grid: &[f64], fabs: &[f64]) -> f64 {
    let n = m.growth_exponent();
    let len = s.order.len();
    // prefix sums of |f| dmu and |f| dmu / d^n (and the same for f = 1)
    let mut pf = vec![0.0; len + 1];
    let mut qf = vec![0.0; len + 1];
    let mut p1 = vec![0.0; len + 1];
    let mut q1 = vec![0.0; len + 1];
    for (i, &j) in s.order.iter().enumerate() {
        let w = m.mass(j);
        let inv = if s.dists[i] > 0.0 { 1.0 / pow_n(s.dists[i], n) } else { 0.0 };
        pf[i + 1] = pf[i] + fabs[j] * w;
        qf[i + 1] = qf[i] + fabs[j] * w * inv;
        p1[i + 1] = p1[i] + w;
        q1[i + 1] = q1[i] + w * inv;
    }
    let mut best: f64 = 0.0;
    for (a, &r) in grid.iter().enumerate() {
        let ir = s.cut[a];
        let rn = pow_n(r, n);
        let core_f = pf[ir] / rn;
        let core_1 = p1[ir] / rn;
        for b in a + 1..grid.len() {
            let i_r = s.cut[b];
            let num = core_f + (qf[i_r] - qf[ir]);
            let norm = core_1 + (q1[i_r] - q1[ir]);
            best = best.max(num / (1.0 + norm));
        }
    }
    best
}

/// `N f(p)` through `phi_{p,r,R}` for `(r, R)` ranging over pairs of grid radii
/// with `r < R`, at an arbitrary point `p`.
pub fn n_phi_at(m: &DiscreteMeasure, f: &[f64], p: &[f64], grid: &[f64]) -> f64 {
    let fabs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    phi_max(m, &sort_from(m, p, grid), grid, &fabs)
}

/// `N f` through `phi_{x,r,R}` at every atom, for several functions at once.
pub fn n_phi_many(m: &DiscreteMeasure, fs: &[&[f64]], grid: &[f64]) -> Vec<Vec<f64>> {
    let abs: Vec<Vec<f64>> = fs.iter().map(|f| f.iter().map(|v| v.abs()).collect()).collect();
    let per_x: Vec<Vec<f64>> = (0..m.len())
        .into_par_iter()
        .map(|x| {
            let s = sort_from(m, m.point(x), grid);
            abs.iter().map(|f| phi_max(m, &s, grid, f)).collect()
        })
        .collect();
    (0..fs.len())
        .map(|i| per_x.iter().map(|v| v[i]).collect())
        .collect()
}

pub fn n_phi(m: &DiscreteMeasure, f: &[f64], grid: &[f64]) -> Vec<f64> {
    n_phi_many(m, &[f], grid).pop().unwrap_or_default()
}

/// `N^h f = max_{k >= h} S_k |f|` for several functions.
pub fn n_trunc_many(p: &KernelProfile<'_>, fs: &[&[f64]], h: usize) -> Vec<Vec<f64>> {
    let lat = p.lattice();
    let len = lat.measure().len();
    let abs: Vec<Vec<f64>> = fs.iter().map(|f| f.iter().map(|v| v.abs()).collect()).collect();
    let refs: Vec<&[f64]> = abs.iter().map(Vec::as_slice).collect();
    let mut out = vec![vec![0.0; len]; fs.len()];
    for k in h.min(lat.k_max())..=lat.k_max() {
        for (o, s) in out.iter_mut().zip(p.apply_many(k, &refs)) {
            for (a, b) in o.iter_mut().zip(s) {
                *a = f64::max(*a, b);
            }
        }
    }
    out
}

pub fn n_sup_many(p: &KernelProfile<'_>, fs: &[&[f64]]) -> Vec<Vec<f64>> {
    n_trunc_many(p, fs, 0)
}

/// `N f = max_k S_k |f|`.
pub fn n_sup(p: &KernelProfile<'_>, f: &[f64]) -> Vec<f64> {
    n_trunc(p, f, 0)
}

/// `N^h f = max_{k >= h} S_k |f|` (with `h` clipped to the lattice range).
pub fn n_trunc(p: &KernelProfile<'_>, f: &[f64], h: usize) -> Vec<f64> {
    n_trunc_many(p, &[f], h).pop().unwrap_or_default()
}

fn m_lambda_at(m: &DiscreteMeasure, fabs: &[f64], x: usize, lambda: f64, grid: &[f64]) -> f64 {
    let big: Vec<f64> = grid.iter().map(|r| r * lambda).collect();
    let s = sort_from(m, m.point(x), grid);
    let mut pf = vec![0.0; s.order.len() + 1];
    let mut pm = vec![0.0; s.order.len() + 1];
    for (i, &j) in s.order.iter().enumerate() {
        pf[i + 1] = pf[i] + fabs[j] * m.mass(j);
        pm[i + 1] = pm[i] + m.mass(j);
    }
    let mut best: f64 = 0.0;
    for (a, &rb) in big.iter().enumerate() {
        let den = pm[s.dists.partition_point(|&d| d <= rb)];
        if den > 0.0 {
            best = best.max(pf[s.cut[a]] / den);
        }
    }
    best
}

/// `M_lambda f(x) = sup_r mu(B(x, lambda r))^{-1} int_{B(x, r)} |f| dmu` on the grid.
pub fn m_lambda(m: &DiscreteMeasure, f: &[f64], lambda: f64, grid: &[f64]) -> Vec<f64> {
    assert!(lambda >= 1.0, "lambda must be at least 1");
    let fabs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    (0..m.len())
        .into_par_iter()
        .map(|x| m_lambda_at(m, &fabs, x, lambda, grid))
        .collect()
}

/// `M_R f(x) = sup r^{-n} int_B |f| dmu` over balls `B` with atom centres and
/// grid radii that contain `x`.
pub fn m_radial(m: &DiscreteMeasure, f: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = m.growth_exponent();
    let fabs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    // suffix maxima over radii of the ball values, per centre
    let table: Vec<Vec<f64>> = (0..m.len())
        .into_par_iter()
        .map(|c| {
            let s = sort_from(m, m.point(c), grid);
            let mut pf = 0.0;
            let mut i = 0;
            let mut vals = vec![0.0; grid.len()];
            for (a, &r) in grid.iter().enumerate() {
                while i < s.cut[a] {
                    pf += fabs[s.order[i]] * m.mass(s.order[i]);
                    i += 1;
                }
                vals[a] = pf / pow_n(r, n);
            }
            for a in (0..grid.len().saturating_sub(1)).rev() {
                vals[a] = vals[a].max(vals[a + 1]);
            }
            vals
        })
        .collect();
    (0..m.len())
        .into_par_iter()
        .map(|x| {
            let px = m.point(x);
            let mut best: f64 = 0.0;
            for (c, row) in table.iter().enumerate() {
                let d = dist(px, m.point(c));
                let a = grid.partition_point(|&r| r < d);
                if a < grid.len() {
                    best = best.max(row[a]);
                }
            }
            best
        })
        .collect()
}

/// The centred restriction of [`m_radial`]: only balls centred at `x`.
pub fn m_radial_centered(m: &DiscreteMeasure, f: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = m.growth_exponent();
    (0..m.len())
        .map(|x| {
            grid.iter()
                .map(|&r| {
                    m.atoms_in_ball(m.point(x), r)
                        .iter()
                        .map(|&j| f[j].abs() * m.mass(j))
                        .sum::<f64>()
                        / pow_n(r, n)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SmallMean {
    Found {
        cube: Cube,
        mean: f64,
        sk: f64,
        class: ScaleClass,
    },
    NotFound {
        best_ratio: f64,
        candidates: usize,
    },
}

/// Scans cubes centred at atom `x` with sides between `l(Q_{x,k})` and
/// `l(Q_{x,k-1})` on a `2^(1/8)` grid, keeping those whose scale class is `k`
/// or `k - 1`, and returns the first `(alpha, beta)`-doubling one with
/// `m_{2Q} |f| <= c6 S_k |f|(x)`.
pub fn find_small_mean_doubling(
    p: &KernelProfile<'_>,
    x: usize,
    k: usize,
    f: &[f64],
    alpha: f64,
    beta: f64,
    c6: f64,
) -> SmallMean {
    let lat = p.lattice();
    let m = lat.measure();
    if k == 0 || k > lat.k_max() || lat.class(x, k) != CubeClass::Transit {
        return SmallMean::NotFound {
            best_ratio: f64::INFINITY,
            candidates: 0,
        };
    }
    let fabs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    let sk = p.apply(k, &fabs)[x];
    let lo = lat.side(x, k);
    let hi = lat.side(x, k - 1);
    let step = 2f64.powf(0.125);
    let mut side = lo;
    let mut best = f64::INFINITY;
    let mut candidates = 0;
    while side <= hi * (1.0 + 1e-12) {
        let q = Cube::new(m.point(x).to_vec(), side);
        let class = lat.ad_class(&q);
        let in_band = matches!(class, ScaleClass::Level(c) if c == k || c + 1 == k);
        if in_band && is_doubling(m, &q, alpha, beta) {
            candidates += 1;
            let q2 = q.dilate(2.0);
            let mass = m.cube_mass(&q2);
            let mean = if mass > 0.0 {
                m.weighted_cube_mass(&fabs, &q2) / mass
            } else {
                0.0
            };
            if mean <= c6 * sk {
                return SmallMean::Found {
                    cube: q,
                    mean,
                    sk,
                    class,
                };
            }
            best = best.min(if sk > 0.0 { mean / sk } else { f64::INFINITY });
        }
        side *= step;
    }
    SmallMean::NotFound {
        best_ratio: best,
        candidates,
    }
}

/// Largest jump of `S_k |f|` between consecutive samples along segments
/// joining random pairs of nearby atoms, at two sampling densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub coarse_jump: f64,
    pub fine_jump: f64,
}

pub fn continuity_probe<R: Rng>(
    p: &KernelProfile<'_>,
    k: usize,
    f: &[f64],
    segments: usize,
    samples: usize,
    rng: &mut R,
) -> ContinuityReport {
    let m = p.lattice().measure();
    let fabs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    let mut coarse: f64 = 0.0;
    let mut fine: f64 = 0.0;
    for _ in 0..segments {
        let x = rng.gen_range(0..m.len());
        let y = (x + 1).min(m.len() - 1);
        let (a, b) = (m.point(x), m.point(y));
        let at = |t: f64| -> f64 {
            let pt: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + t * (v - u)).collect();
            p.apply_at_point(k, &pt, &fabs)
        };
        for (count, out) in [(samples, &mut coarse), (2 * samples, &mut fine)] {
            let vals: Vec<f64> = (0..=count).map(|i| at(i as f64 / count as f64)).collect();
            for w in vals.windows(2) {
                *out = out.max((w[1] - w[0]).abs());
            }
        }
    }
    ContinuityReport {
        coarse_jump: coarse,
        fine_jump: fine,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Lattice, LatticeParams};
    use crate::measure::{lebesgue_interval, saksman_intervals};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn phi(m: &DiscreteMeasure, x: &[f64], r: f64, big: f64, y: &[f64]) -> f64 {
        let d = dist(x, y);
        let n = m.growth_exponent();
        if d <= r {
            1.0 / r.powf(n)
        } else if d <= big {
            1.0 / d.powf(n)
        } else {
            0.0
        }
    }

    #[test]
    fn one_atom_closed_form() {
        let m = DiscreteMeasure::from_atoms(1, 1.0, 1.0, &[(vec![0.0], 1.0)]).unwrap();
        let grid = [0.5, 1.0];
        let v = n_phi(&m, &[1.0], &grid);
        // phi(x) = 1/r, ||phi||_1 = 1/r: the best pair has r = 0.5
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(n_phi(&m, &[0.0], &grid), vec![0.0]);
    }

    #[test]
    fn n_phi_matches_direct_scan() {
        let m = saksman_intervals(4, 16).unwrap();
        let grid = radii_grid(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = n_phi(&m, &f, &grid);
        for x in (0..m.len()).step_by(5) {
            let px = m.point(x);
            let mut best: f64 = 0.0;
            for (i, &r) in grid.iter().enumerate() {
                for &big in &grid[i + 1..] {
                    let mut num = 0.0;
                    let mut norm = 0.0;
                    for y in 0..m.len() {
                        let v = phi(&m, px, r, big, m.point(y));
                        num += v * f[y].abs() * m.mass(y);
                        norm += v * m.mass(y);
                    }
                    best = best.max(num / (1.0 + norm));
                }
            }
            assert!((fast[x] - best).abs() <= 1e-10 * best.max(1e-300), "{} {}", fast[x], best);
        }
    }

    #[test]
    fn m_lambda_constant_and_brute_force() {
        let m = saksman_intervals(4, 16).unwrap();
        let grid = radii_grid(&m);
        let one = vec![1.0; m.len()];
        for v in m_lambda(&m, &one, 1.0, &grid) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(0.0..3.0)).collect();
        let fast = m_lambda(&m, &f, 2.0, &grid);
        let scaled: Vec<f64> = f.iter().map(|v| -2.5 * v).collect();
        let fast2 = m_lambda(&m, &scaled, 2.0, &grid);
        for x in 0..m.len() {
            let px = m.point(x);
            let brute = grid
                .iter()
                .map(|&r| {
                    let num: f64 = m.atoms_in_ball(px, r).iter().map(|&j| f[j] * m.mass(j)).sum();
                    num / m.ball_mass(px, 2.0 * r)
                })
                .fold(0.0, f64::max);
            assert!((fast[x] - brute).abs() <= 1e-12 * brute);
            assert!((fast2[x] - 2.5 * fast[x]).abs() <= 1e-12 * fast[x]);
        }
    }

    #[test]
    fn m_radial_examples() {
        let one = DiscreteMeasure::from_atoms(1, 1.0, 1.0, &[(vec![0.0], 1.0)]).unwrap();
        let grid = log_grid(0.01, 10.0);
        let v = m_radial(&one, &[1.0], &grid);
        assert!((v[0] - 100.0).abs() < 1e-9);
        let m = saksman_intervals(4, 16).unwrap();
        let grid = radii_grid(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(0.0..3.0)).collect();
        let full = m_radial(&m, &f, &grid);
        let centred = m_radial_centered(&m, &f, &grid);
        for x in 0..m.len() {
            assert!(full[x] >= centred[x] * (1.0 - 1e-12));
            // independent scan over all atom-centred balls containing x
            let mut brute: f64 = 0.0;
            for c in 0..m.len() {
                for &r in &grid {
                    if dist(m.point(c), m.point(x)) <= r {
                        let s: f64 = m.atoms_in_ball(m.point(c), r).iter().map(|&j| f[j] * m.mass(j)).sum();
                        brute = brute.max(s / r);
                    }
                }
            }
            assert!((full[x] - brute).abs() <= 1e-12 * brute);
        }
        assert_eq!(m_radial(&m, &vec![0.0; m.len()], &grid), vec![0.0; m.len()]);
    }

    #[test]
    fn n_sup_and_truncations() {
        let m = lebesgue_interval(1024).unwrap();
        let lat = Lattice::build(&m, LatticeParams::default()).unwrap();
        let p = KernelProfile::new(&lat).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let full = n_sup(&p, &f);
        let fabs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
        for k in 0..=lat.k_max() {
            let s = p.apply(k, &fabs);
            for x in 0..m.len() {
                assert!(full[x] >= s[x]);
            }
        }
        assert_eq!(n_trunc(&p, &f, 0), full);
        assert_eq!(n_trunc(&p, &f, lat.k_max()), p.apply(lat.k_max(), &fabs));
        for h in 0..lat.k_max() {
            let a = n_trunc(&p, &f, h);
            let b = n_trunc(&p, &f, h + 1);
            assert!(a.iter().zip(&b).all(|(u, v)| u >= v));
        }
    }

    #[test]
    fn small_mean_doubling_for_constants() {
        let m = lebesgue_interval(4096).unwrap();
        let lat = Lattice::build(&m, LatticeParams { a: 10.0, a_min: 1.0, ..Default::default() }).unwrap();
        let p = KernelProfile::new(&lat).unwrap();
        let one = vec![1.0; m.len()];
        let x = 2048;
        match find_small_mean_doubling(&p, x, 1, &one, 2.0, 100.0, 2.0) {
            SmallMean::Found { mean, .. } => assert!((mean - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        // f supported far away: the mean over 2Q vanishes
        let far: Vec<f64> = (0..m.len()).map(|i| if i < 10 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(
            find_small_mean_doubling(&p, x, 1, &far, 2.0, 100.0, 1.0),
            SmallMean::Found { mean, .. } if mean == 0.0
        ));
    }
}
