//! Reference computations written independently of the library, on plain
//! slices.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Squared,
    Logistic,
}

/// A penalized problem in row-major plain storage.
#[derive(Clone, Debug)]
pub struct RefProblem {
    pub family: Family,
    pub rows: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub sizes: Vec<usize>,
    pub lambda: f64,
    pub gamma: f64,
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl RefProblem {
    pub fn n(&self) -> f64 {
        self.rows.len() as f64
    }

    pub fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.sizes
            .iter()
            .map(|&s| {
                let r = start..start + s;
                start += s;
                r
            })
            .collect()
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let total: f64 = self
            .rows
            .iter()
            .zip(&self.y)
            .map(|(x, &y)| {
                let eta = dot(x, theta);
                match self.family {
                    Family::Squared => 0.5 * (y - eta) * (y - eta),
                    Family::Logistic => log1p_exp(eta) - y * eta,
                }
            })
            .sum();
        total / self.n()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; theta.len()];
        for (x, &y) in self.rows.iter().zip(&self.y) {
            let eta = dot(x, theta);
            let r = match self.family {
                Family::Squared => eta - y,
                Family::Logistic => 1.0 / (1.0 + (-eta).exp()) - y,
            };
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
        }
        g.iter().map(|v| v / self.n()).collect()
    }

    pub fn penalty(&self, theta: &[f64]) -> f64 {
        let l1: f64 = theta.iter().zip(&self.alpha).map(|(t, a)| a * t.abs()).sum();
        let grp: f64 = self
            .blocks()
            .iter()
            .zip(&self.xi)
            .map(|(r, w)| w * theta[r.clone()].iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum();
        (self.lambda * l1 + self.gamma * grp) / self.n()
    }

    pub fn objective(&self, theta: &[f64]) -> f64 {
        self.loss(theta) + self.penalty(theta)
    }

    /// One element of the subdifferential (sign(0) = 0, zero block → 0).
    pub fn subgradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut s = self.gradient(theta);
        let n = self.n();
        for (j, v) in theta.iter().enumerate() {
            s[j] += self.lambda * self.alpha[j] / n * v.signum() * f64::from(u8::from(*v != 0.0));
        }
        for (r, w) in self.blocks().iter().zip(&self.xi) {
            let norm = theta[r.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for j in r.clone() {
                    s[j] += self.gamma * w / n * theta[j] / norm;
                }
            }
        }
        s
    }

    /// Distance of the zero vector to the subdifferential, computed block by
    /// block from the stationarity conditions.
    pub fn kkt_residual(&self, theta: &[f64]) -> f64 {
        let g = self.gradient(theta);
        let n = self.n();
        let mut worst: f64 = 0.0;
        for (r, w) in self.blocks().iter().zip(&self.xi) {
            let norm = theta[r.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
            let glev = self.gamma * w / n;
            if norm == 0.0 {
                // need u with |g_j + a_j u_j| minimal, u_j in [-1, 1]; remainder in the ball
                let rem: f64 = r
                    .clone()
                    .map(|j| {
                        let a = self.lambda * self.alpha[j] / n;
                        let e = (g[j].abs() - a).max(0.0);
                        e * e
                    })
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(rem - glev);
            } else {
                for j in r.clone() {
                    let a = self.lambda * self.alpha[j] / n;
                    let v = if theta[j] == 0.0 {
                        (g[j].abs() - a).max(0.0)
                    } else {
                        (g[j] + a * theta[j].signum() + glev * theta[j] / norm).abs()
                    };
                    worst = worst.max(v);
                }
            }
        }
        worst.max(0.0)
    }

    pub fn design(&self) -> DMatrix<f64> {
        let d = self.rows[0].len();
        DMatrix::from_fn(self.rows.len(), d, |i, j| self.rows[i][j])
    }

    pub fn response(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y)
    }
}

/// Random problem with coefficients in `[-1, 1]` on every third coordinate.
pub fn random_problem(seed: u64, t: usize, sizes: &[usize], family: Family, lambda: f64, gamma: f64) -> RefProblem {
    random_problem_every(seed, t, sizes, family, lambda, gamma, 3)
}

/// As [`random_problem`] with a non-zero coefficient every `every` coordinates.
pub fn random_problem_every(
    seed: u64,
    t: usize,
    sizes: &[usize],
    family: Family,
    lambda: f64,
    gamma: f64,
    every: usize,
) -> RefProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d: usize = sizes.iter().sum();
    let beta: Vec<f64> = (0..d)
        .map(|j| {
            if j % every == 0 {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..t)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let y = rows
        .iter()
        .map(|x| {
            let eta = dot(x, &beta);
            match family {
                Family::Squared => eta + 0.5 * rng.sample::<f64, _>(StandardNormal),
                Family::Logistic => f64::from(u8::from(rng.random_bool(1.0 / (1.0 + (-eta).exp())))),
            }
        })
        .collect();
    let alpha = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    let xi = sizes.iter().map(|_| rng.random_range(0.5..2.0)).collect();
    RefProblem {
        family,
        rows,
        y,
        sizes: sizes.to_vec(),
        lambda,
        gamma,
        alpha,
        xi,
    }
}

/// `X = √T · Q` with `Q` the thin orthogonal factor of a Gaussian matrix, so
/// that `X'X / T = I`.
pub fn orthonormal_design(rng: &mut ChaCha8Rng, t: usize, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(t, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q() * (t as f64).sqrt()
}

pub fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Clone, Copy)]
struct Node {
    bound: f64,
    lo: [usize; 3],
    hi: [usize; 3],
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound.total_cmp(&other.bound) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on the bound
        other.bound.total_cmp(&self.bound)
    }
}

pub struct GridResult {
    pub value: f64,
    pub argmin: [f64; 3],
    pub evaluated: usize,
}

/// Exact minimum of a convex `f` over the grid `lo + step·i`, `i = 0..n`, in
/// three dimensions. Boxes are pruned with the convexity bound
/// `f(x) ≥ f(c) − Σ |s_i| h_i` for a subgradient `s` at the box centre `c`;
/// small boxes are enumerated point by point.
pub fn grid_minimum<F, S>(f: F, subgrad: S, lo: f64, hi: f64, step: f64) -> GridResult
where
    F: Fn(&[f64]) -> f64,
    S: Fn(&[f64]) -> Vec<f64>,
{
    let n = ((hi - lo) / step).round() as usize;
    let coord = |i: usize| lo + step * i as f64;
    let bound = |l: [usize; 3], h: [usize; 3]| -> f64 {
        let c: Vec<f64> = (0..3).map(|k| lo + step * (l[k] + h[k]) as f64 / 2.0).collect();
        let s = subgrad(&c);
        let slack: f64 = (0..3).map(|k| s[k].abs() * step * (h[k] - l[k]) as f64 / 2.0).sum();
        f(&c) - slack
    };
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: bound([0; 3], [n; 3]),
        lo: [0; 3],
        hi: [n; 3],
    });
    let mut best = f64::INFINITY;
    let mut argmin = [0.0; 3];
    let mut evaluated = 0;
    while let Some(node) = heap.pop() {
        if node.bound >= best {
            break;
        }
        let widths: Vec<usize> = (0..3).map(|k| node.hi[k] - node.lo[k]).collect();
        if widths.iter().all(|&w| w < 8) {
            for i in node.lo[0]..=node.hi[0] {
                for j in node.lo[1]..=node.hi[1] {
                    for k in node.lo[2]..=node.hi[2] {
                        let p = [coord(i), coord(j), coord(k)];
                        let v = f(&p);
                        evaluated += 1;
                        if v < best {
                            best = v;
                            argmin = p;
                        }
                    }
                }
            }
            continue;
        }
        let axis = (0..3).max_by_key(|&k| widths[k]).unwrap();
        let mid = (node.lo[axis] + node.hi[axis]) / 2;
        let mut left_hi = node.hi;
        left_hi[axis] = mid;
        let mut right_lo = node.lo;
        right_lo[axis] = mid + 1;
        for (l, h) in [(node.lo, left_hi), (right_lo, node.hi)] {
            let b = bound(l, h);
            if b < best {
                heap.push(Node { bound: b, lo: l, hi: h });
            }
        }
    }
    GridResult {
        value: best,
        argmin,
        evaluated,
    }
}

/// The five rate inequalities evaluated by hand, as `(holds, lhs)`.
pub fn hand_rate_conditions(eta: f64, mu: f64, kappa: f64, beta: f64, alpha: f64, c: f64) -> [(bool, f64); 5] {
    let i = alpha + 0.5 * c + kappa * mu - 0.5;
    let ii = alpha + 0.5 * ((1.0 + mu) * (1.0 - c)) - 1.0;
    let iii = beta + kappa * eta - 0.5;
    let iv = beta + 0.5 * ((1.0 + eta) * (1.0 - c)) - 1.0;
    let v = (1.0 + mu) * (1.0 - 0.5 * c - kappa * eta - beta) + alpha - 1.0;
    [
        (i < 0.0, i),
        (ii > 0.0, ii),
        (iii < 0.0, iii),
        (iv > 0.0, iv),
        (v > 0.0, v),
    ]
}
