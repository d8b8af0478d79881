//! Independent dense oracles shared by the integration tests.

#![allow(dead_code)]

use exitfsp::{ChainModel, Cmp, DomainPredicate, Generator, RateRow, ReactionChannel, State};

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(n: usize, m: usize) -> Dense {
    vec![vec![0.0; m]; n]
}

pub fn identity(n: usize) -> Dense {
    let mut a = zeros(n, n);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = zeros(n, m);
    for i in 0..n {
        for l in 0..k {
            let v = a[i][l];
            if v != 0.0 {
                for j in 0..m {
                    c[i][j] += v * b[l][j];
                }
            }
        }
    }
    c
}

pub fn row_times(x: &[f64], a: &Dense) -> Vec<f64> {
    let m = a.first().map_or(0, |r| r.len());
    let mut y = vec![0.0; m];
    for (xi, row) in x.iter().zip(a) {
        for (yj, aij) in y.iter_mut().zip(row) {
            *yj += xi * aij;
        }
    }
    y
}

fn one_norm(a: &Dense) -> f64 {
    let m = a[0].len();
    (0..m).map(|j| a.iter().map(|r| r[j].abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(a)` by scaling and squaring with a Taylor series run to machine
/// precision on the scaled matrix.
pub fn expm(a: &Dense) -> Dense {
    let n = a.len();
    let norm = one_norm(a);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 2f64.powi(-s);
    let b: Dense = a.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let mut sum = identity(n);
    let mut term = identity(n);
    for k in 1..60 {
        term = matmul(&term, &b);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        let mut biggest: f64 = 0.0;
        for (sr, tr) in sum.iter_mut().zip(&term) {
            for (s, t) in sr.iter_mut().zip(tr) {
                *s += t;
                biggest = biggest.max(t.abs());
            }
        }
        if biggest < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = matmul(&sum, &sum);
    }
    sum
}

/// `(exp(q t), ∫₀ᵗ exp(q s) ds)` from the block exponential of `[[q, I], [0, 0]]`.
pub fn expm_and_integral(q: &Dense, t: f64) -> (Dense, Dense) {
    let n = q.len();
    let mut big = zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            big[i][j] = q[i][j] * t;
        }
        big[i][n + i] = t;
    }
    let e = expm(&big);
    let top: Dense = e[..n].iter().map(|r| r[..n].to_vec()).collect();
    let int: Dense = e[..n].iter().map(|r| r[n..].to_vec()).collect();
    (top, int)
}

/// A chain on `{0, …, n−1}` (one coordinate) with a dense rate matrix.
#[derive(Debug, Clone)]
pub struct DenseChain {
    pub q: Dense,
}

impl DenseChain {
    /// Off-diagonal rates; the diagonal is filled in to make rows sum to zero.
    pub fn new(mut rates: Dense) -> Self {
        for (i, row) in rates.iter_mut().enumerate() {
            row[i] = 0.0;
            let out: f64 = row.iter().sum();
            row[i] = -out;
        }
        DenseChain { q: rates }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }
}

impl Generator for DenseChain {
    fn dimension(&self) -> usize {
        1
    }

    fn rate_row(&self, x: &State) -> RateRow {
        let i = x.coords()[0] as usize;
        if i >= self.q.len() {
            return RateRow {
                diagonal: 0.0,
                transitions: Vec::new(),
            };
        }
        RateRow {
            diagonal: self.q[i][i],
            transitions: (0..self.q.len())
                .filter(|&j| j != i && self.q[i][j] > 0.0)
                .map(|j| (State::new(vec![j as u32]), self.q[i][j]))
                .collect(),
        }
    }
}

/// `{x : x < k}` in one coordinate.
pub fn below(k: i64) -> DomainPredicate {
    DomainPredicate::coordinate(1, 0, Cmp::Lt, k)
}

/// `{x : x > 0}` in one coordinate.
pub fn positive() -> DomainPredicate {
    DomainPredicate::coordinate(1, 0, Cmp::Gt, 0)
}

/// Pure death with rate `d·n`.
pub fn pure_death(d: f64) -> ChainModel {
    ChainModel::new(
        vec!["n".into()],
        vec![ReactionChannel::mass_action("death", vec![-1], d, vec![(0, 1)])],
    )
    .unwrap()
}

/// Pure birth with rate `f(n)`.
pub fn pure_birth(f: impl Fn(u32) -> f64 + Send + Sync + 'static) -> ChainModel {
    ChainModel::new(
        vec!["n".into()],
        vec![ReactionChannel::custom("birth", vec![1], move |x: &[u32]| f(x[0]))],
    )
    .unwrap()
}

/// Density of a sum of independent exponentials with distinct rates.
pub fn hypoexponential_pdf(rates: &[f64], t: f64) -> f64 {
    rates
        .iter()
        .enumerate()
        .map(|(i, &li)| {
            let w: f64 = rates
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &lj)| lj / (lj - li))
                .product();
            w * li * (-li * t).exp()
        })
        .sum()
}

pub fn hypoexponential_cdf(rates: &[f64], t: f64) -> f64 {
    1.0 - rates
        .iter()
        .enumerate()
        .map(|(i, &li)| {
            let w: f64 = rates
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &lj)| lj / (lj - li))
                .product();
            w * (-li * t).exp()
        })
        .sum::<f64>()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
