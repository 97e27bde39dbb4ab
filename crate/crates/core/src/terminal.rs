//! Ellipsoidal terminal sets and their inscribed polytopes.
//!
//! The ellipsoid `{z : z'Pz <= c}` is mapped to the ball of radius `sqrt(c)` by
//! `w = L'z` with `P = LL'`. The polytope `{w : d_j'w <= beta sqrt(c)}` over unit
//! directions `d_j` is scaled by `beta = 1 / max vertex norm of {d_j'w <= 1}` so
//! that it sits inside the ball.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::INF_BOUND;
use crate::numerics::{cholesky, dot, is_positive_definite, norm2, Lu, Matrix};

/// Facet-generation controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalOptions {
    /// Facets per state dimension; must be even and at least 2.
    pub facets_per_dim: usize,
    pub seed: u64,
}

impl Default for TerminalOptions {
    fn default() -> Self {
        Self {
            facets_per_dim: 16,
            seed: 0x5eed,
        }
    }
}

/// `normal' z <= offset`, with `z` measured from the set's center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// A constraint row `row' z` with the admissible distance from the center value.
#[derive(Debug, Clone)]
pub struct MarginRow {
    pub row: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSet {
    pub center: Vec<f64>,
    pub p: Matrix,
    /// `INF_BOUND` when no row constrains the set.
    pub radius: f64,
    pub facets: Vec<HalfSpace>,
    /// Ratio between the inscribed ball of the polytope and the ellipsoid.
    pub inscribed_ratio: f64,
}

/// Largest `c` with `row' z <= margin` on all of `{z'Pz <= c}`: `min margin^2 / (row' P^-1 row)`.
pub fn terminal_radius(p: &Matrix, rows: &[MarginRow]) -> Result<f64, Error> {
    let p_inv = p.inverse()?;
    let mut c = INF_BOUND;
    for r in rows {
        let denom = p_inv.quad_form(&r.row);
        if denom <= 0.0 {
            continue;
        }
        if r.margin <= 0.0 {
            return Err(Error::EmptyTerminalSet(format!(
                "equilibrium sits on or outside a bound (margin {:e})",
                r.margin
            )));
        }
        c = c.min(r.margin * r.margin / denom);
    }
    Ok(c)
}

/// `±e_i` plus seeded random `±v` pairs, `per_dim * n` unit vectors in all.
pub fn facet_directions(n: usize, opts: TerminalOptions) -> Vec<Vec<f64>> {
    let total = (opts.facets_per_dim.max(2) * n) & !1;
    let mut dirs = Vec::with_capacity(total);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        dirs.push(e.clone());
        e[i] = -1.0;
        dirs.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (n as u64).wrapping_mul(0x9e37_79b9));
    while dirs.len() < total {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nrm = norm2(&v);
        if !(0.1..=1.0).contains(&nrm) {
            continue;
        }
        let v: Vec<f64> = v.iter().map(|x| x / nrm).collect();
        dirs.push(v.iter().map(|x| -x).collect());
        dirs.push(v);
    }
    dirs
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    if k <= n {
        rec(0, n, k, &mut Vec::with_capacity(k), f);
    }
}

/// `1 / max ‖w‖` over the vertices of `{w : d_j'w <= 1}`, by exhaustive vertex enumeration.
pub fn inscribed_ratio(dirs: &[Vec<f64>]) -> f64 {
    let n = dirs.first().map_or(0, Vec::len);
    if n == 0 {
        return 1.0;
    }
    let mut best = 0.0f64;
    combinations(dirs.len(), n, &mut |idx| {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| dirs[i].clone()).collect();
        let m = Matrix::from_rows(&rows).expect("finite directions");
        let Ok(lu) = Lu::new(&m) else {
            return;
        };
        let w = lu.solve_vec(&vec![1.0; n]);
        let nrm = norm2(&w);
        if nrm <= best {
            return;
        }
        if dirs.iter().all(|d| dot(d, &w) <= 1.0 + 1e-9) {
            best = nrm;
        }
    });
    1.0 / best
}

fn cached_ratio(n: usize, opts: TerminalOptions) -> (Vec<Vec<f64>>, f64) {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, u64), f64>>> = OnceLock::new();
    let dirs = facet_directions(n, opts);
    let key = (n, opts.facets_per_dim, opts.seed);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&r) = cache.lock().expect("cache lock").get(&key) {
        return (dirs, r);
    }
    let r = inscribed_ratio(&dirs);
    cache.lock().expect("cache lock").insert(key, r);
    (dirs, r)
}

/// Largest singular value via power iteration on `G'G`.
pub fn spectral_norm(g: &Matrix) -> f64 {
    let gtg = g.transpose().matmul(g);
    let mut v = vec![1.0; g.cols()];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = gtg.mul_vec(&v);
        let nrm = norm2(&w);
        if nrm == 0.0 {
            return 0.0;
        }
        lambda = dot(&v, &w) / dot(&v, &v);
        v = w.iter().map(|x| x / nrm).collect();
    }
    lambda.max(0.0).sqrt()
}

impl TerminalSet {
    /// Builds the inscribed polytope and certifies invariance under `z -> F z`.
    pub fn new(center: Vec<f64>, p: Matrix, rows: &[MarginRow], f: &Matrix, opts: TerminalOptions) -> Result<Self, Error> {
        let radius = terminal_radius(&p, rows)?;
        let n = p.rows();
        if radius >= INF_BOUND {
            return Ok(Self {
                center,
                p,
                radius,
                facets: Vec::new(),
                inscribed_ratio: 1.0,
            });
        }
        let l = cholesky(&p)?;
        let (dirs, beta) = cached_ratio(n, opts);
        // Contraction of F in the P-norm must not exceed beta.
        let lt = l.transpose();
        let g = lt.matmul(f).matmul(&lt.inverse()?);
        let slack = &Matrix::identity(n).scale(beta * beta) - &g.transpose().matmul(&g);
        if !is_positive_definite(&slack) {
            return Err(Error::TerminalSetNotInvariant {
                contraction: spectral_norm(&g),
                ratio: beta,
            });
        }
        let bound = beta * radius.sqrt();
        let facets = dirs
            .iter()
            .map(|d| HalfSpace {
                normal: l.mul_vec(d),
                offset: bound,
            })
            .collect();
        Ok(Self {
            center,
            p,
            radius,
            facets,
            inscribed_ratio: beta,
        })
    }

    pub fn is_bounded(&self) -> bool {
        !self.facets.is_empty()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let z: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.facets.iter().all(|h| dot(&h.normal, &z) <= h.offset + tol)
    }

    pub fn in_ellipsoid(&self, x: &[f64], tol: f64) -> bool {
        let z: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.p.quad_form(&z) <= self.radius * (1.0 + tol)
    }

    /// Random points on the polytope boundary, in absolute coordinates.
    pub fn sample_boundary(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let n = self.center.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let t = self
                    .facets
                    .iter()
                    .filter_map(|h| {
                        let s = dot(&h.normal, &dir);
                        (s > 0.0).then(|| h.offset / s)
                    })
                    .fold(f64::INFINITY, f64::min);
                dir.iter().zip(&self.center).map(|(d, c)| c + t * d).collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{solve_dare_gain, solve_discrete_lyapunov};

    #[test]
    fn scalar_radius_closed_form() {
        // a=0.5, b=1, q=r=1: the DARE gain is -a b p / (r + b^2 p).
        let (a, b) = (Matrix::from_diag(&[0.5]), Matrix::from_diag(&[1.0]));
        let one = Matrix::from_diag(&[1.0]);
        let (k, _) = solve_dare_gain(&a, &b, &one, &one).unwrap();
        let kk = k[(0, 0)];
        let f = 0.5 + kk;
        let p = (1.0 + kk * kk) / (1.0 - f * f);
        let pm = solve_discrete_lyapunov(&Matrix::from_diag(&[f]), &Matrix::from_diag(&[1.0 + kk * kk])).unwrap();
        assert!((pm[(0, 0)] - p).abs() < 1e-12);
        let c = terminal_radius(&pm, &[MarginRow { row: vec![kk], margin: 1.0 }]).unwrap();
        assert!((c - p / (kk * kk)).abs() < 1e-9 * c);
    }

    #[test]
    fn scalar_radius_with_stated_gain() {
        let p = Matrix::from_diag(&[2.0]);
        let c = terminal_radius(&p, &[MarginRow { row: vec![-0.25], margin: 1.0 }]).unwrap();
        assert!((c - 1.0 / (0.0625 / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn unconstrained_is_unbounded() {
        let set = TerminalSet::new(vec![0.0; 2], Matrix::identity(2), &[], &Matrix::zeros(2, 2), TerminalOptions::default())
            .unwrap();
        assert_eq!(set.radius, INF_BOUND);
        assert!(set.facets.is_empty());
    }

    #[test]
    fn negative_margin_is_empty() {
        let r = terminal_radius(&Matrix::identity(1), &[MarginRow { row: vec![1.0], margin: -0.1 }]);
        assert!(matches!(r, Err(Error::EmptyTerminalSet(_))));
    }

    #[test]
    fn square_ratio_in_two_dims() {
        // Only the four axis directions: vertices at (±1, ±1).
        let dirs = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        assert!((inscribed_ratio(&dirs) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn polytope_inside_ellipsoid_and_invariant() {
        let p = Matrix::from_rows(&[vec![3.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let f = Matrix::from_rows(&[vec![0.3, 0.1], vec![-0.2, 0.2]]).unwrap();
        let rows = [MarginRow { row: vec![1.0, 1.0], margin: 0.5 }];
        let set = TerminalSet::new(vec![1.0, -1.0], p, &rows, &f, TerminalOptions::default()).unwrap();
        assert_eq!(set.facets.len(), 32);
        for x in set.sample_boundary(1000, 1) {
            assert!(set.in_ellipsoid(&x, 1e-9));
            let z: Vec<f64> = x.iter().zip(&set.center).map(|(a, b)| a - b).collect();
            let fz = f.mul_vec(&z);
            let next: Vec<f64> = fz.iter().zip(&set.center).map(|(a, b)| a + b).collect();
            assert!(set.contains(&next, 1e-9));
        }
    }

    #[test]
    fn slow_contraction_rejected() {
        let p = Matrix::identity(2);
        let f = Matrix::identity(2).scale(0.99);
        let rows = [MarginRow { row: vec![1.0, 0.0], margin: 1.0 }];
        assert!(matches!(
            TerminalSet::new(vec![0.0; 2], p, &rows, &f, TerminalOptions::default()),
            Err(Error::TerminalSetNotInvariant { .. })
        ));
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        assert!((spectral_norm(&Matrix::from_diag(&[0.3, -0.8, 0.5])) - 0.8).abs() < 1e-9);
    }
}
