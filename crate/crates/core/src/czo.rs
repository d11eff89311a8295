//! Truncated singular integrals `T_eps`, the maximal truncation `T_*`, and a
//! sampler for the size and smoothness conditions of a kernel.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dist, pow_n, DiscreteMeasure};

type KernelFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A real kernel `k(x, y)` with its declared constants.
#[derive(Clone)]
pub struct KernelSpec {
    pub name: String,
    pub n: f64,
    pub c1: f64,
    pub c2: f64,
    pub gamma: f64,
    /// Required dimension, if the kernel only makes sense in one.
    pub dim: Option<usize>,
    eval: KernelFn,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("gamma", &self.gamma)
            .finish()
    }
}

/// Names accepted by [`KernelSpec::by_name`].
pub const BUILTIN_KERNELS: [&str; 5] = ["hilbert", "cauchy_re", "cauchy_im", "frac_I1", "zero"];

impl KernelSpec {
    pub fn custom(
        name: &str,
        n: f64,
        c1: f64,
        c2: f64,
        gamma: f64,
        eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        KernelSpec {
            name: name.to_string(),
            n,
            c1,
            c2,
            gamma,
            dim: None,
            eval: Arc::new(eval),
        }
    }

    /// `1 / (x - y)` on the line.
    pub fn hilbert() -> Self {
        KernelSpec {
            dim: Some(1),
            ..Self::custom("hilbert", 1.0, 1.0, 4.0, 1.0, |x, y| 1.0 / (x[0] - y[0]))
        }
    }

    /// Real part of `1 / (z - w)` in the plane.
    pub fn cauchy_re() -> Self {
        KernelSpec {
            dim: Some(2),
            ..Self::custom("cauchy_re", 1.0, 1.0, 4.0, 1.0, |x, y| {
                let (a, b) = (x[0] - y[0], x[1] - y[1]);
                a / (a * a + b * b)
            })
        }
    }

    /// Imaginary part of `1 / (z - w)` in the plane.
    pub fn cauchy_im() -> Self {
        KernelSpec {
            dim: Some(2),
            ..Self::custom("cauchy_im", 1.0, 1.0, 4.0, 1.0, |x, y| {
                let (a, b) = (x[0] - y[0], x[1] - y[1]);
                -b / (a * a + b * b)
            })
        }
    }

    /// The non-negative kernel `1 / |x - y|^n`.
    pub fn frac(n: f64) -> Self {
        Self::custom("frac_I1", n, 1.0, 4.0, 1.0, move |x, y| 1.0 / pow_n(dist(x, y), n))
    }

    pub fn zero(n: f64) -> Self {
        Self::custom("zero", n, 1.0, 4.0, 1.0, |_, _| 0.0)
    }

    /// Looks up a built-in kernel; `n` is used by the dimension-free ones.
    pub fn by_name(name: &str, n: f64) -> Result<Self> {
        match name {
            "hilbert" => Ok(Self::hilbert()),
            "cauchy_re" => Ok(Self::cauchy_re()),
            "cauchy_im" => Ok(Self::cauchy_im()),
            "frac_I1" | "frac" | "I1" => Ok(Self::frac(n)),
            "zero" => Ok(Self::zero(n)),
            other => Err(Error::InvalidParameter(format!(
                "unknown kernel {other:?}; expected one of {BUILTIN_KERNELS:?}"
            ))),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.eval)(x, y)
    }

    fn check_dim(&self, m: &DiscreteMeasure) -> Result<()> {
        match self.dim {
            Some(d) if d != m.dim() => Err(Error::DimensionMismatch {
                expected: d,
                got: m.dim(),
            }),
            _ => Ok(()),
        }
    }
}

/// `T_eps f(x) = sum_{|x - y| > eps} k(x, y) f(y) mu({y})` at every atom.
pub fn apply_t_eps(m: &DiscreteMeasure, k: &KernelSpec, f: &[f64], eps: f64) -> Result<Vec<f64>> {
    k.check_dim(m)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    Ok((0..m.len())
        .into_par_iter()
        .map(|x| {
            let px = m.point(x);
            (0..m.len())
                .filter(|&y| dist(px, m.point(y)) > eps)
                .map(|y| k.eval(px, m.point(y)) * f[y] * m.mass(y))
                .sum()
        })
        .collect())
}

/// Adjoint of `T_eps` in `L^2(mu)`.
pub fn apply_t_eps_adjoint(m: &DiscreteMeasure, k: &KernelSpec, g: &[f64], eps: f64) -> Result<Vec<f64>> {
    k.check_dim(m)?;
    Ok((0..m.len())
        .into_par_iter()
        .map(|y| {
            let py = m.point(y);
            (0..m.len())
                .filter(|&x| dist(py, m.point(x)) > eps)
                .map(|x| k.eval(m.point(x), py) * g[x] * m.mass(x))
                .sum()
        })
        .collect())
}

/// `eps`-grid of `count` log-spaced points from the minimum spacing to the diameter.
pub fn eps_grid(m: &DiscreteMeasure, count: usize) -> Vec<f64> {
    let lo = if m.min_spacing() > 0.0 { m.min_spacing() } else { 1.0 };
    let hi = m.diameter().max(lo);
    if count <= 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// `T_* f(x) = max over the grid of |T_eps f(x)|`.
pub fn apply_t_star(m: &DiscreteMeasure, k: &KernelSpec, f: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    k.check_dim(m)?;
    Ok((0..m.len())
        .into_par_iter()
        .map(|x| {
            let px = m.point(x);
            let mut terms: Vec<(f64, f64)> = (0..m.len())
                .filter_map(|y| {
                    let d = dist(px, m.point(y));
                    (d > 0.0).then(|| (d, k.eval(px, m.point(y)) * f[y] * m.mass(y)))
                })
                .collect();
            // far to near, so that each truncation is a prefix
            terms.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut eps: Vec<f64> = grid.to_vec();
            eps.sort_by(|a, b| b.total_cmp(a));
            let mut acc = 0.0;
            let mut i = 0;
            let mut best: f64 = 0.0;
            for e in eps {
                while i < terms.len() && terms[i].0 > e {
                    acc += terms[i].1;
                    i += 1;
                }
                best = best.max(acc.abs());
            }
            best
        })
        .collect())
}

/// `I_1`-type comparison sum `sum_{|x - y| > eps} |f(y)| / |x - y|^n`.
pub fn i1_eps(m: &DiscreteMeasure, f: &[f64], eps: f64) -> Vec<f64> {
    let n = m.growth_exponent();
    (0..m.len())
        .into_par_iter()
        .map(|x| {
            let px = m.point(x);
            (0..m.len())
                .filter_map(|y| {
                    let d = dist(px, m.point(y));
                    (d > eps).then(|| f[y].abs() * m.mass(y) / pow_n(d, n))
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2NormReport {
    pub eps: f64,
    pub norm: f64,
    pub iterations: usize,
}

/// Power iteration for `||T_eps||_{L^2(mu) -> L^2(mu)}` from a seeded start.
pub fn l2_norm_estimate<R: Rng>(
    m: &DiscreteMeasure,
    k: &KernelSpec,
    eps: f64,
    iterations: usize,
    rng: &mut R,
) -> Result<L2NormReport> {
    let norm2 = |v: &[f64]| -> f64 { v.iter().zip(m.masses()).map(|(a, w)| a * a * w).sum::<f64>().sqrt() };
    let mut v: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let nv = norm2(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        let tv = apply_t_eps(m, k, &v, eps)?;
        lambda = norm2(&tv);
        v = apply_t_eps_adjoint(m, k, &tv, eps)?;
    }
    Ok(L2NormReport {
        eps,
        norm: lambda,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzReport {
    pub kernel: String,
    pub trials: usize,
    /// `max |k(x, y)| |x - y|^n / C1`.
    pub size_ratio: f64,
    /// `max |k(x, y) - k(x', y)| |x - y|^{n + gamma} / (C2 |x - x'|^gamma)`,
    /// together with the symmetric difference in the second variable.
    pub smoothness_ratio: f64,
    pub violations: usize,
    pub witness: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    pub passed: bool,
}

/// Samples triples `(x, x', y)` in `[-1, 1]^d` with `|x - x'| <= |x - y| / 2`
/// and evaluates both kernel conditions with the declared constants.
pub fn check_cz_conditions<R: Rng>(k: &KernelSpec, dim: usize, trials: usize, rng: &mut R) -> CzReport {
    let slack = 1e-12;
    let mut rep = CzReport {
        kernel: k.name.clone(),
        trials,
        size_ratio: 0.0,
        smoothness_ratio: 0.0,
        violations: 0,
        witness: None,
        passed: true,
    };
    let d = k.dim.unwrap_or(dim);
    for _ in 0..trials {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = dist(&x, &y);
        if r == 0.0 {
            continue;
        }
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let t = rng.gen_range(0.0..=0.5) * r;
        let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, v)| a + t * v / dn).collect();
        let h = dist(&x, &xp);

        let size = k.eval(&x, &y).abs() * pow_n(r, k.n) / k.c1;
        let mut smooth = 0.0;
        if h > 0.0 {
            let diff = (k.eval(&x, &y) - k.eval(&xp, &y))
                .abs()
                .max((k.eval(&y, &x) - k.eval(&y, &xp)).abs());
            smooth = diff * (pow_n(r, k.n) * r.powf(k.gamma)) / (k.c2 * h.powf(k.gamma));
        }
        rep.size_ratio = rep.size_ratio.max(size);
        rep.smoothness_ratio = rep.smoothness_ratio.max(smooth);
        if size > 1.0 + slack || smooth > 1.0 + slack {
            rep.violations += 1;
            rep.witness.get_or_insert((x, xp, y));
        }
    }
    rep.passed = rep.violations == 0;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{lebesgue_square, saksman_intervals};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_atom_hilbert() {
        let m = DiscreteMeasure::from_atoms(1, 1.0, 1.0, &[(vec![-1.0], 0.5), (vec![1.0], 0.5)]).unwrap();
        let t = apply_t_eps(&m, &KernelSpec::hilbert(), &[1.0, 1.0], 0.5).unwrap();
        assert!((t[0] + 0.25).abs() < 1e-15);
        assert!((t[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn linear_and_zero() {
        let m = saksman_intervals(4, 16).unwrap();
        let k = KernelSpec::hilbert();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let comb: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let eps = 0.01;
        let tf = apply_t_eps(&m, &k, &f, eps).unwrap();
        let tg = apply_t_eps(&m, &k, &g, eps).unwrap();
        let tc = apply_t_eps(&m, &k, &comb, eps).unwrap();
        for i in 0..m.len() {
            let expect = 2.0 * tf[i] - 3.0 * tg[i];
            assert!((tc[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
        assert!(apply_t_eps(&m, &k, &vec![0.0; m.len()], eps).unwrap().iter().all(|v| *v == 0.0));
        assert!(apply_t_eps(&m, &k, &f, 0.0).is_err());
    }

    #[test]
    fn t_star_dominates_each_truncation() {
        let m = saksman_intervals(4, 16).unwrap();
        let k = KernelSpec::hilbert();
        let grid = eps_grid(&m, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let f: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let star = apply_t_star(&m, &k, &f, &grid).unwrap();
        let mut brute = vec![0.0_f64; m.len()];
        for &e in &grid {
            let t = apply_t_eps(&m, &k, &f, e).unwrap();
            for i in 0..m.len() {
                assert!(star[i] >= t[i].abs() * (1.0 - 1e-12) - 1e-15);
                brute[i] = brute[i].max(t[i].abs());
            }
        }
        for i in 0..m.len() {
            assert!((star[i] - brute[i]).abs() <= 1e-10 * (1.0 + brute[i]));
        }
    }

    #[test]
    fn builtins_pass_their_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for k in [KernelSpec::hilbert(), KernelSpec::frac(1.0), KernelSpec::cauchy_re(), KernelSpec::cauchy_im(), KernelSpec::zero(1.0)] {
            let rep = check_cz_conditions(&k, 2, 10_000, &mut rng);
            assert!(rep.passed, "{rep:?}");
        }
        // a kernel with the wrong declared size constant is caught
        let bad = KernelSpec::custom("twice", 1.0, 1.0, 4.0, 1.0, |x, y| 2.0 / dist(x, y));
        assert!(!check_cz_conditions(&bad, 1, 100, &mut rng).passed);
    }

    #[test]
    fn domination_by_i1() {
        let m = lebesgue_square(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let f: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let i1 = i1_eps(&m, &f, 0.05);
        for k in [KernelSpec::cauchy_re(), KernelSpec::cauchy_im(), KernelSpec::frac(1.0)] {
            let t = apply_t_eps(&m, &k, &f, 0.05).unwrap();
            for i in 0..m.len() {
                assert!(t[i].abs() <= k.c1 * i1[i] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn norm_of_zero_kernel() {
        let m = saksman_intervals(3, 8).unwrap();
        let rep = l2_norm_estimate(&m, &KernelSpec::zero(1.0), 0.01, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(rep.norm, 0.0);
    }
}
