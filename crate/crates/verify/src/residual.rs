//! Weak residual of `div(A∇u) = 0` for a field `w = (u, v)`.
//!
//! With `∇^⊥v = (−∂₂v, ∂₁v)`, a gradient in `K_Λ` satisfies
//! `A∇u = −∇^⊥v`. For a test function `φ` vanishing on `∂Ω`,
//! `R(φ) = Σ_cells (A_cell ∇u_cell)·∫_cell ∇φ` and the curl part
//! `Σ_cells ∇^⊥v_cell·∫_cell ∇φ` is zero for every continuous `v`.
//!
//! The cell integrals are polynomial moments: every patch gets a table of
//! `∫ yᵅ` weighted by the four channels `A∇u` and `∇^⊥v`, and families move
//! their child's table into the parent frame in closed form.

use std::collections::HashMap;
use std::sync::Arc;

use laminate_core::afs::{in_k_lambda, EllipticCoefficient, K_TOL};
use laminate_core::{Mat2, Vec2};
use laminate_geometry::moments::{polygon_moments, MomentTable, Transfer, MAX_DEGREE};
use laminate_geometry::ConvexPolygon;
use laminate_realize::field::{error_integral, patch_id};
use laminate_realize::{Field, Patch, Tag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::poly::Poly;
use crate::VerifyError;

/// Absolute slack for rounding in the moment sums.
pub const QUADRATURE_SLACK: f64 = 1e-8;

/// Points per axis when sampling `|∇φ|`.
const GRAD_SAMPLES: usize = 257;

/// `φ = Π_e ℓ_e · Π_i (1 − s_i²)^k` with `ℓ_e` the distance to the line of
/// edge `e` over the diameter, `s = (x − c)/h`, and `k` as large as the
/// moment degree allows.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub center: Vec2,
    pub width: Vec2,
    pub power: u32,
    pub phi: Poly,
    pub grad: [Poly; 2],
    /// `max |∇φ|` over a fine grid of the domain.
    pub grad_sup: f64,
}

impl TestFunction {
    pub fn new(domain: &ConvexPolygon, center: Vec2, width: Vec2) -> Result<Self, VerifyError> {
        let n = domain.len();
        if n > MAX_DEGREE + 1 {
            return Err(VerifyError::Invalid(format!(
                "{n} edges exceed the moment degree"
            )));
        }
        let power = ((MAX_DEGREE + 1 - n) / 4).min(3) as u32;
        let diam = domain.diameter();
        let mut phi = Poly::constant(1.0);
        for (a, b) in domain.edges() {
            // Counter-clockwise vertices: the inward normal is the left perp.
            let nrm = (b - a).perp().normalized();
            phi = phi.mul(&Poly::linear(
                -nrm.dot(a) / diam,
                nrm.x / diam,
                nrm.y / diam,
            ));
        }
        let sx = Poly::linear(-center.x / width.x, 1.0 / width.x, 0.0);
        let sy = Poly::linear(-center.y / width.y, 0.0, 1.0 / width.y);
        for s in [sx, sy] {
            phi = phi.mul(&Poly::constant(1.0).add(&s.mul(&s).scale(-1.0)).pow(power));
        }
        let grad = [phi.dx(), phi.dy()];
        let (lo, hi) = domain.bbox();
        let mut grad_sup: f64 = 0.0;
        let mut probe = |p: Vec2| grad_sup = grad_sup.max(grad[0].eval(p).hypot(grad[1].eval(p)));
        for &v in domain.vertices() {
            probe(v);
        }
        let m = GRAD_SAMPLES - 1;
        for i in 0..=m {
            for j in 0..=m {
                let p = Vec2::new(
                    lo.x + (hi.x - lo.x) * i as f64 / m as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / m as f64,
                );
                if domain.contains(p, 0.0) {
                    probe(p);
                }
            }
        }
        Ok(TestFunction {
            center,
            width,
            power,
            phi,
            grad,
            grad_sup,
        })
    }

    /// Seeded centers inside the domain and widths between a quarter and
    /// two thirds of its diameter.
    pub fn seeded(domain: &ConvexPolygon, n: usize, seed: u64) -> Result<Vec<Self>, VerifyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = domain.bbox();
        let diam = domain.diameter();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let c = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
            if !domain.contains(c, 0.0) {
                continue;
            }
            let w = Vec2::new(
                rng.gen_range(0.25..0.67) * diam,
                rng.gen_range(0.25..0.67) * diam,
            );
            out.push(TestFunction::new(domain, c, w)?);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub index: usize,
    pub residual: f64,
    pub bound: f64,
    /// `Σ_cells ∇^⊥v·∫∇φ`.
    pub curl: f64,
    pub grad_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub test_functions: usize,
    pub max_abs_residual: f64,
    /// Largest per-test bound `(1+Λ)·‖∇φ‖_∞·∫_err(1+|∇w|)`.
    pub bound: f64,
    pub max_abs_curl: f64,
    /// `∫_err (1 + |∇w|)`.
    pub error_integral: f64,
    pub rows: Vec<ResidualRow>,
    pub pass: bool,
}

impl ResidualReport {
    /// CSV with columns `index,residual,bound,curl`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,residual,bound,curl\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.index, r.residual, r.bound, r.curl
            ));
        }
        s
    }
}

/// Exact diagonal coefficient `diag(d/a, −c/b)` of a gradient with
/// `A∇u = −∇^⊥v`, when it is `Λ`-elliptic.
pub fn diagonal_coefficient(g: &Mat2, lambda: f64) -> Option<EllipticCoefficient> {
    let (a, b, c, d) = (g.a11, g.a12, g.a21, g.a22);
    if a == 0.0 || b == 0.0 {
        return None;
    }
    let (l1, l2) = (d / a, -c / b);
    let ok = |l: f64| l >= (1.0 - K_TOL) / lambda && l <= lambda * (1.0 + K_TOL);
    (ok(l1) && ok(l2)).then_some(EllipticCoefficient {
        lambda1: l1,
        lambda2: l2,
    })
}

/// Channel weights `(A∇u, ∇^⊥v)` of a cell: `A` from `K_Λ` on K cells, the
/// exact diagonal coefficient on active cells and the identity on error
/// cells.
fn weights(g: &Mat2, tag: Tag, lambda: f64) -> Result<[f64; 4], VerifyError> {
    let du = g.row1();
    let fail = || VerifyError::ExtractionFailed {
        matrix: *g,
        tag: tag.name(),
    };
    let a = match tag {
        Tag::K => in_k_lambda(g, lambda, K_TOL).ok_or_else(fail)?,
        Tag::Active => diagonal_coefficient(g, lambda).ok_or_else(fail)?,
        Tag::Dust | Tag::Residual => EllipticCoefficient::IDENTITY,
    };
    let q = a.apply(du);
    Ok([q.x, q.y, -g.a22, g.a21])
}

struct Tables {
    degree: usize,
    lambda: f64,
    memo: HashMap<usize, Arc<MomentTable>>,
}

impl Tables {
    fn table(&mut self, p: &Arc<Patch>) -> Result<Arc<MomentTable>, VerifyError> {
        if let Some(t) = self.memo.get(&patch_id(p)) {
            return Ok(t.clone());
        }
        let mut t = MomentTable::zeros(self.degree, 4);
        for c in &p.cells {
            let w = weights(&c.grad, c.tag, self.lambda)?;
            t.add_weighted(&polygon_moments(&c.poly, self.degree), &w);
        }
        for f in &p.families {
            let child = self.table(&f.patch)?;
            let tr = Transfer::family(f.origin, f.step, f.count, f.linear(p.rot), self.degree);
            t.add(&child.transfer(&tr));
        }
        let t = Arc::new(t);
        self.memo.insert(patch_id(p), t.clone());
        Ok(t)
    }
}

/// Weak residuals against the given test functions.
pub fn residual_for(
    field: &Field,
    lambda: f64,
    tests: &[TestFunction],
) -> Result<ResidualReport, VerifyError> {
    let degree = tests
        .iter()
        .map(|t| t.grad[0].degree().max(t.grad[1].degree()))
        .max()
        .unwrap_or(0);
    let mut tables = Tables {
        degree,
        lambda,
        memo: HashMap::new(),
    };
    let root = tables.table(&field.root)?;
    let e1 = error_integral(&field.census(), 1.0);
    let rows: Vec<ResidualRow> = tests
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let (gx, gy) = (t.grad[0].padded(degree), t.grad[1].padded(degree));
            ResidualRow {
                index,
                residual: (root.contract(0, &gx) + root.contract(1, &gy)).abs(),
                bound: (1.0 + lambda) * t.grad_sup * e1,
                curl: (root.contract(2, &gx) + root.contract(3, &gy)).abs(),
                grad_sup: t.grad_sup,
            }
        })
        .collect();
    let pass = rows
        .iter()
        .all(|r| r.residual <= r.bound + QUADRATURE_SLACK && r.curl <= QUADRATURE_SLACK);
    Ok(ResidualReport {
        test_functions: rows.len(),
        max_abs_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
        bound: rows.iter().map(|r| r.bound).fold(0.0, f64::max),
        max_abs_curl: rows.iter().map(|r| r.curl).fold(0.0, f64::max),
        error_integral: e1,
        rows,
        pass,
    })
}

/// Weak residuals against `n_tests` seeded test functions.
pub fn weak_residual(
    field: &Field,
    lambda: f64,
    n_tests: usize,
    seed: u64,
) -> Result<ResidualReport, VerifyError> {
    if n_tests == 0 {
        return Err(VerifyError::Invalid("at least one test function".into()));
    }
    let tests = TestFunction::seeded(&field.domain, n_tests, seed)?;
    residual_for(field, lambda, &tests)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use laminate_realize::{wiggle, FlatCell, WiggleSpec};

    fn square_test() -> TestFunction {
        TestFunction::new(
            &ConvexPolygon::unit_square(),
            Vec2::new(0.4, 0.55),
            Vec2::new(0.5, 0.3),
        )
        .unwrap()
    }

    #[test]
    fn test_functions_vanish_on_the_boundary() {
        let t = square_test();
        assert!(t.phi.degree() <= MAX_DEGREE + 1);
        for s in [0.0, 0.3, 0.77, 1.0] {
            for p in [
                Vec2::new(s, 0.0),
                Vec2::new(s, 1.0),
                Vec2::new(0.0, s),
                Vec2::new(1.0, s),
            ] {
                assert!(t.phi.eval(p).abs() < 1e-11);
            }
        }
        assert!(t.phi.eval(Vec2::new(0.4, 0.55)) > 0.0);
        assert!(t.grad_sup > 0.0);
    }

    #[test]
    fn constant_gradient_is_divergence_free() {
        let x = Mat2::new(7.0, 1.0, -1.0, 14.0);
        let f = Field::affine(ConvexPolygon::unit_square(), x, Vec2::ZERO, Tag::K);
        let r = residual_for(&f, 2.0, &[square_test()]).unwrap();
        assert!(r.max_abs_residual <= 1e-10);
        assert!(r.max_abs_curl <= 1e-10);
        assert!(r.pass);
    }

    /// Two K cells meeting along a line with a rank-one jump, against a direct
    /// per-cell sum.
    #[test]
    fn two_cell_fixture_matches_direct_sum() {
        let a = Mat2::new(7.0, 1.0, -1.0, 14.0);
        let b = Mat2::new(7.0, 1.5, -1.0, 14.25);
        // Jump (b − a) = (0.5, 0.25)ᵀ ⊗ (0, 1): continuity across y = ½.
        assert!((b - a).is_rank_one(0.0));
        let cells = vec![
            FlatCell {
                poly: ConvexPolygon::rect(0.0, 0.0, 1.0, 0.5),
                grad: a,
                b: Vec2::ZERO,
                tag: Tag::K,
                round: 0,
            },
            FlatCell {
                poly: ConvexPolygon::rect(0.0, 0.5, 1.0, 1.0),
                grad: b,
                b: (a - b) * Vec2::new(0.0, 0.5),
                tag: Tag::Residual,
                round: 0,
            },
        ];
        let f = Field::from_flat(ConvexPolygon::unit_square(), a, Vec2::ZERO, cells.clone());
        let t = square_test();
        let r = residual_for(&f, 2.0, std::slice::from_ref(&t)).unwrap();
        let mut direct = 0.0;
        for c in &cells {
            let m = polygon_moments(&c.poly, t.grad[0].degree());
            let w = weights(&c.grad, c.tag, 2.0).unwrap();
            let gx: f64 = t.grad[0]
                .padded(t.grad[0].degree())
                .iter()
                .zip(&m)
                .map(|(p, q)| p * q)
                .sum();
            let gy: f64 = t.grad[1]
                .padded(t.grad[0].degree())
                .iter()
                .zip(&m)
                .map(|(p, q)| p * q)
                .sum();
            direct += w[0] * gx + w[1] * gy;
        }
        assert_abs_diff_eq!(r.rows[0].residual, direct.abs(), epsilon = 1e-10);
        assert!(r.max_abs_curl <= 1e-10);
    }

    #[test]
    fn wiggle_curl_part_vanishes() {
        let x1 = Mat2::new(1.0, 2.0, 0.0, 1.0);
        let x2 = Mat2::new(1.0, 2.0, 3.0, -1.0);
        let spec = WiggleSpec::new(x1, x2, 0.35, 0.05).unwrap();
        let f = wiggle(
            &spec,
            Vec2::new(0.1, 0.2),
            &ConvexPolygon::regular(5, 1.0),
            None,
        )
        .unwrap();
        let tests = TestFunction::seeded(&f.domain, 4, 7).unwrap();
        let cells = f.census();
        assert!(!cells.is_empty());
        let mut tables = Tables {
            degree: tests[0].grad[0].degree(),
            lambda: 2.0,
            memo: HashMap::new(),
        };
        // Residual cells only, so every cell gets the identity coefficient.
        let relabeled = relabel(&f.root);
        let t = tables.table(&relabeled).unwrap();
        for test in &tests {
            let d = tables.degree;
            let curl =
                t.contract(2, &test.grad[0].padded(d)) + t.contract(3, &test.grad[1].padded(d));
            assert!(curl.abs() <= 1e-10, "{curl}");
        }
    }

    fn relabel(p: &Arc<Patch>) -> Arc<Patch> {
        let mut q = (**p).clone();
        for c in &mut q.cells {
            c.tag = Tag::Residual;
        }
        for f in &mut q.families {
            f.patch = relabel(&f.patch);
        }
        Arc::new(q)
    }

    #[test]
    fn seeded_tests_are_reproducible() {
        let d = ConvexPolygon::unit_square();
        let a = TestFunction::seeded(&d, 3, 11).unwrap();
        let b = TestFunction::seeded(&d, 3, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, TestFunction::seeded(&d, 3, 12).unwrap());
    }
}
