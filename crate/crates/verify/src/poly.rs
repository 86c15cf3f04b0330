//! Bivariate polynomials in the monomial order of the moment tables.

use laminate_core::Vec2;
use laminate_geometry::moments::{exponents, index, monomial_count};

#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    degree: usize,
    /// Coefficient of `xⁱ yʲ` at `index(i, j)`.
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly {
            degree: 0,
            coeffs: vec![c],
        }
    }

    /// `c + a·x + b·y`.
    pub fn linear(c: f64, a: f64, b: f64) -> Self {
        let mut coeffs = vec![0.0; 3];
        coeffs[index(0, 0)] = c;
        coeffs[index(1, 0)] = a;
        coeffs[index(0, 1)] = b;
        Poly { degree: 1, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i + j > self.degree {
            0.0
        } else {
            self.coeffs[index(i, j)]
        }
    }

    /// Coefficients padded to degree `d ≥ self.degree()`.
    pub fn padded(&self, d: usize) -> Vec<f64> {
        let mut out = self.coeffs.clone();
        out.resize(monomial_count(d), 0.0);
        out
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let degree = self.degree.max(o.degree);
        let coeffs = self
            .padded(degree)
            .iter()
            .zip(o.padded(degree))
            .map(|(a, b)| a + b)
            .collect();
        Poly { degree, coeffs }
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| k * c).collect(),
        }
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let degree = self.degree + o.degree;
        let mut coeffs = vec![0.0; monomial_count(degree)];
        for (a, (i, j)) in exponents(self.degree).into_iter().enumerate() {
            if self.coeffs[a] == 0.0 {
                continue;
            }
            for (b, (k, l)) in exponents(o.degree).into_iter().enumerate() {
                coeffs[index(i + k, j + l)] += self.coeffs[a] * o.coeffs[b];
            }
        }
        Poly { degree, coeffs }
    }

    pub fn pow(&self, n: u32) -> Poly {
        (0..n).fold(Poly::constant(1.0), |acc, _| acc.mul(self))
    }

    pub fn dx(&self) -> Poly {
        self.derive(|i, j| (i > 0).then(|| (i as f64, i - 1, j)))
    }

    pub fn dy(&self) -> Poly {
        self.derive(|i, j| (j > 0).then(|| (j as f64, i, j - 1)))
    }

    fn derive(&self, rule: impl Fn(usize, usize) -> Option<(f64, usize, usize)>) -> Poly {
        let degree = self.degree.saturating_sub(1);
        let mut coeffs = vec![0.0; monomial_count(degree)];
        for (a, (i, j)) in exponents(self.degree).into_iter().enumerate() {
            if let Some((f, ni, nj)) = rule(i, j) {
                coeffs[index(ni, nj)] += f * self.coeffs[a];
            }
        }
        Poly { degree, coeffs }
    }

    pub fn eval(&self, p: Vec2) -> f64 {
        let mut px = vec![1.0; self.degree + 1];
        let mut py = vec![1.0; self.degree + 1];
        for k in 1..=self.degree {
            px[k] = px[k - 1] * p.x;
            py[k] = py[k - 1] * p.y;
        }
        exponents(self.degree)
            .into_iter()
            .zip(&self.coeffs)
            .map(|((i, j), c)| c * px[i] * py[j])
            .sum()
    }
}
