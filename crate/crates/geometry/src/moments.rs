//! Exact polynomial moments `∫ xⁱ yʲ` over convex polygons and their
//! transport under affine maps and arithmetic families of translates.
//!
//! Monomials of total degree at most `d` are indexed by [`index`]; a moment
//! table stores one such vector per channel.

use std::sync::OnceLock;

use crate::polygon::ConvexPolygon;
use crate::{Mat2, Vec2};

/// Degree needed for gradients of products of `(1 − s²)³` bumps.
pub const MAX_DEGREE: usize = 11;

/// Families with at most this many members are summed directly.
const DIRECT_SUM_LIMIT: u64 = 4096;

pub const fn monomial_count(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

/// Position of `xⁱ yʲ`, grouped by total degree.
pub const fn index(i: usize, j: usize) -> usize {
    let n = i + j;
    n * (n + 1) / 2 + j
}

/// Inverse of [`index`] for degree at most `d`.
pub fn exponents(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(monomial_count(d));
    for n in 0..=d {
        for j in 0..=n {
            out.push((n - j, j));
        }
    }
    out
}

fn gauss_legendre_01() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        // 7 nodes integrate degree 13 exactly, enough for degree 11 plus the
        // collapsed-coordinate Jacobian.
        let n = 7;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for m in 2..=n {
                    let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            out.push((0.5 * (x + 1.0), 0.5 * w));
        }
        out
    })
}

/// `∫_P xⁱ yʲ dA` for all `i + j ≤ d`.
pub fn polygon_moments(poly: &ConvexPolygon, d: usize) -> Vec<f64> {
    let gl = gauss_legendre_01();
    let mut out = vec![0.0; monomial_count(d)];
    let v = poly.vertices();
    let mut px = vec![0.0; d + 1];
    let mut py = vec![0.0; d + 1];
    for w in v[1..].windows(2) {
        let (p0, p1, p2) = (v[0], w[0], w[1]);
        let twice = (p1 - p0).cross(p2 - p0);
        for &(u, wu) in gl {
            for &(t, wt) in gl {
                let p = p0 + (p1 - p0) * u + (p2 - p1) * (u * t);
                let wgt = wu * wt * u * twice;
                px[0] = 1.0;
                py[0] = 1.0;
                for k in 1..=d {
                    px[k] = px[k - 1] * p.x;
                    py[k] = py[k - 1] * p.y;
                }
                for n in 0..=d {
                    for j in 0..=n {
                        out[index(n - j, j)] += wgt * px[n - j] * py[j];
                    }
                }
            }
        }
    }
    out
}

/// `Σ_{j=0}^{n} (j/n)^k` for `k ≤ kmax`, with `n = count − 1`.
pub fn normalized_power_sums(count: u64, kmax: usize) -> Vec<f64> {
    let mut s = vec![0.0; kmax + 1];
    if count == 0 {
        return s;
    }
    s[0] = count as f64;
    if count == 1 {
        return s;
    }
    let n = (count - 1) as f64;
    if count <= DIRECT_SUM_LIMIT {
        for j in 1..count {
            let t = j as f64 / n;
            let mut p = t;
            for sk in s.iter_mut().skip(1) {
                *sk += p;
                p *= t;
            }
        }
        return s;
    }
    // Faulhaber with B₁ = +1/2, divided through by n^k.
    const B: [f64; 12] = [
        1.0,
        0.5,
        1.0 / 6.0,
        0.0,
        -1.0 / 30.0,
        0.0,
        1.0 / 42.0,
        0.0,
        -1.0 / 30.0,
        0.0,
        5.0 / 66.0,
        0.0,
    ];
    assert!(
        kmax < B.len() + 1,
        "power sums implemented up to degree {}",
        B.len()
    );
    for (k, sk) in s.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for (i, b) in B.iter().enumerate().take(k + 1) {
            if i > 0 {
                binom *= (k + 2 - i) as f64 / i as f64;
            }
            acc += binom * b * n.powi(1 - i as i32);
        }
        *sk = acc / (k + 1) as f64;
    }
    s
}

/// Linear map between moment vectors: `out[α] = Σ_β m[α][β] · in[β]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transfer {
    d: usize,
    m: Vec<f64>,
}

impl Transfer {
    /// Moments over `{a + B z : z ∈ Q}` from moments over `Q`.
    pub fn affine(a: Vec2, b: Mat2, d: usize) -> Self {
        Self::build(a, Vec2::ZERO, b, &[1.0], d)
    }

    /// Moments over `⋃_{j<count} {a + j u + B z : z ∈ Q}` from moments over
    /// `Q`.
    pub fn family(a: Vec2, u: Vec2, count: u64, b: Mat2, d: usize) -> Self {
        if count <= 1 {
            let mut t = Self::affine(a, b, d);
            if count == 0 {
                t.m.iter_mut().for_each(|x| *x = 0.0);
            }
            return t;
        }
        let n = (count - 1) as f64;
        let sums = normalized_power_sums(count, d);
        Self::build(a, u * n, b, &sums, d)
    }

    fn build(a: Vec2, big_u: Vec2, b: Mat2, sums: &[f64], d: usize) -> Self {
        let nm = monomial_count(d);
        let side = d + 1;
        let at = |k: usize, i: usize, j: usize| (k * side + i) * side + j;
        let lx = [a.x, big_u.x, b.a11, b.a12];
        let ly = [a.y, big_u.y, b.a21, b.a22];
        let times = |p: &[f64], l: &[f64; 4], deg: usize| -> Vec<f64> {
            let mut out = vec![0.0; side * side * side];
            for k in 0..=deg {
                for i in 0..=deg - k {
                    for j in 0..=deg - k - i {
                        let c = p[at(k, i, j)];
                        if c == 0.0 {
                            continue;
                        }
                        out[at(k, i, j)] += l[0] * c;
                        if k < d {
                            out[at(k + 1, i, j)] += l[1] * c;
                        }
                        if i < d {
                            out[at(k, i + 1, j)] += l[2] * c;
                        }
                        if j < d {
                            out[at(k, i, j + 1)] += l[3] * c;
                        }
                    }
                }
            }
            out
        };
        let jac = b.det().abs();
        let mut m = vec![0.0; nm * nm];
        let mut one = vec![0.0; side * side * side];
        one[0] = 1.0;
        let mut row = one;
        for i in 0..=d {
            if i > 0 {
                row = times(&row, &lx, i - 1);
            }
            let mut p = row.clone();
            for j in 0..=d - i {
                if j > 0 {
                    p = times(&p, &ly, i + j - 1);
                }
                let alpha = index(i, j);
                let deg = i + j;
                for k in 0..=deg.min(sums.len() - 1) {
                    let sk = sums[k];
                    if sk == 0.0 {
                        continue;
                    }
                    for bi in 0..=deg - k {
                        for bj in 0..=deg - k - bi {
                            let c = p[at(k, bi, bj)];
                            if c != 0.0 {
                                m[alpha * nm + index(bi, bj)] += jac * sk * c;
                            }
                        }
                    }
                }
            }
        }
        Transfer { d, m }
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let nm = monomial_count(self.d);
        let mut out = vec![0.0; nm];
        for (a, o) in out.iter_mut().enumerate() {
            let row = &self.m[a * nm..(a + 1) * nm];
            *o = row.iter().zip(input).map(|(x, y)| x * y).sum();
        }
        out
    }
}

/// Moment vectors for several weight channels.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    pub degree: usize,
    pub channels: Vec<Vec<f64>>,
}

impl MomentTable {
    pub fn zeros(degree: usize, channels: usize) -> Self {
        MomentTable {
            degree,
            channels: vec![vec![0.0; monomial_count(degree)]; channels],
        }
    }

    /// Adds `weights[c] · moments` to channel `c`.
    pub fn add_weighted(&mut self, moments: &[f64], weights: &[f64]) {
        for (ch, w) in self.channels.iter_mut().zip(weights) {
            if *w != 0.0 {
                for (x, m) in ch.iter_mut().zip(moments) {
                    *x += w * m;
                }
            }
        }
    }

    pub fn add(&mut self, other: &MomentTable) {
        for (a, b) in self.channels.iter_mut().zip(&other.channels) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn transfer(&self, t: &Transfer) -> MomentTable {
        MomentTable {
            degree: self.degree,
            channels: self.channels.iter().map(|c| t.apply(c)).collect(),
        }
    }

    /// `Σ_α coeffs[α] · channel[α]`.
    pub fn contract(&self, channel: usize, coeffs: &[f64]) -> f64 {
        self.channels[channel]
            .iter()
            .zip(coeffs)
            .map(|(m, c)| m * c)
            .sum()
    }
}
