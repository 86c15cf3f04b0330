//! The elliptic sets `K_Λ`, `K_{Λ,Γ}`, the open set `U_{ā,δ,γ}` and the
//! explicit staircase whose stages live in `K_{Λ,Γ}` with construction steps
//! in `U`.
//!
//! Matrices in `U` are written `[[a, b], [−c, d]]`.

use serde::{Deserialize, Serialize};

use crate::error::AfsError;
use crate::mat::Mat2;
use crate::measure::{ConstructionReport, DiscreteMeasure, SplitStep, SplitTree, WeightedAtom};
use crate::staircase::StaircaseTruncation;

/// Tolerance used when checking constructed atoms against `K_{Λ,Γ}`.
pub const K_TOL: f64 = 1e-9;

/// An open set of matrices with a computable inner radius.
pub trait OpenSet {
    fn contains(&self, x: &Mat2) -> bool;
    /// Largest `ρ` with the Frobenius ball `B(x, ρ)` inside the set (0 when
    /// `x` is outside).
    fn margin(&self, x: &Mat2) -> f64;
}

/// Parameters `Λ, ā, δ, γ, Γ` and the exponent `p = 2Λ/(Λ−1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AfsParams {
    pub lambda: f64,
    pub a_bar: f64,
    pub delta: f64,
    /// The cap `γ` on `|1−b|` and `|1−c|` in `U`.
    pub gamma: f64,
    /// The row-sum ratio bound `Γ` of `K_{Λ,Γ}`.
    pub big_gamma: f64,
    pub p: f64,
}

impl AfsParams {
    pub fn new(
        lambda: f64,
        a_bar: f64,
        delta: f64,
        gamma: f64,
        big_gamma: f64,
    ) -> Result<Self, AfsError> {
        let p = AfsParams {
            lambda,
            a_bar,
            delta,
            gamma,
            big_gamma,
            p: exponent(lambda),
        };
        p.validate()?;
        Ok(p)
    }

    /// The default feasible block for a given `Λ`.
    pub fn defaults(lambda: f64) -> Result<Self, AfsError> {
        if !(lambda > 1.0 && lambda.is_finite()) {
            return Err(AfsError::Infeasible(format!("Λ = {lambda} must exceed 1")));
        }
        let a_bar = lambda / (lambda - 1.0) + 10.5;
        let mut delta = f64::min(0.1, 0.5 * (1.0 - 1.0 / lambda));
        if 1.0 / a_bar >= delta {
            delta = 0.5 * (1.0 / a_bar + (1.0 - 1.0 / lambda));
        }
        let gamma = (lambda - 1.0) / (2.0 * (lambda + 1.0));
        AfsParams::new(lambda, a_bar, delta, gamma, 2.0 * lambda + 11.0)
    }

    pub fn validate(&self) -> Result<(), AfsError> {
        let AfsParams {
            lambda: l,
            a_bar,
            delta,
            gamma,
            big_gamma,
            p,
        } = *self;
        let fail = |m: String| Err(AfsError::Infeasible(m));
        if !(l > 1.0 && l.is_finite()) {
            return fail(format!("Λ = {l} must exceed 1"));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return fail(format!("δ = {delta} outside (0, 1/2)"));
        }
        if !(gamma > 0.0 && gamma < 0.5) {
            return fail(format!("γ = {gamma} outside (0, 1/2)"));
        }
        if 1.0 - delta <= 1.0 / l {
            return fail(format!("1 − δ = {} must exceed 1/Λ", 1.0 - delta));
        }
        if gamma >= (l - 1.0) / (l + 1.0) {
            return fail(format!("γ = {gamma} must be below (Λ−1)/(Λ+1)"));
        }
        if a_bar <= l / (l - 1.0) + 10.0 {
            return fail(format!("ā = {a_bar} must exceed Λ/(Λ−1) + 10"));
        }
        if 1.0 / a_bar >= delta {
            return fail(format!("1/ā = {} must be below δ", 1.0 / a_bar));
        }
        if big_gamma <= 2.0 * l + 10.0 {
            return fail(format!("Γ = {big_gamma} must exceed 2Λ + 10"));
        }
        if (p - exponent(l)).abs() > 1e-12 * p.abs().max(1.0) {
            return fail(format!("p = {p} must equal 2Λ/(Λ−1)"));
        }
        Ok(())
    }

    /// `[[ā+1, 1], [−1, ā+1]]`, the default starting matrix.
    pub fn default_x0(&self) -> Mat2 {
        let x = self.a_bar + 1.0;
        Mat2::new(x, 1.0, -1.0, x)
    }

    pub fn in_u(&self, x: &Mat2) -> bool {
        let (a, b, c, d) = (x.a11, x.a12, -x.a21, x.a22);
        a > self.a_bar
            && d > self.a_bar
            && (1.0 - a / d).abs() < self.delta
            && (1.0 - b).abs() < self.gamma
            && (1.0 - c).abs() < self.gamma
    }

    /// Distance from `x` to the complement of `U`, from the half-spaces that
    /// cut out `U`.
    pub fn margin_u(&self, x: &Mat2) -> f64 {
        if !self.in_u(x) {
            return 0.0;
        }
        let (a, b, c, d) = (x.a11, x.a12, -x.a21, x.a22);
        let lo = 1.0 - self.delta;
        let hi = 1.0 + self.delta;
        [
            a - self.a_bar,
            d - self.a_bar,
            self.gamma - (1.0 - b).abs(),
            self.gamma - (1.0 - c).abs(),
            (a - lo * d) / (1.0 + lo * lo).sqrt(),
            (hi * d - a) / (1.0 + hi * hi).sqrt(),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
    }

    pub fn in_k(&self, x: &Mat2, tol: f64) -> bool {
        in_k_lambda_gamma(x, self.lambda, self.big_gamma, tol)
    }
}

impl OpenSet for AfsParams {
    fn contains(&self, x: &Mat2) -> bool {
        self.in_u(x)
    }
    fn margin(&self, x: &Mat2) -> f64 {
        self.margin_u(x)
    }
}

pub fn exponent(lambda: f64) -> f64 {
    2.0 * lambda / (lambda - 1.0)
}

/// Diagonal coefficient `A = diag(lambda1, lambda2)` with
/// `A(a, b)ᵀ + (−d, c)ᵀ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticCoefficient {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl EllipticCoefficient {
    pub const IDENTITY: EllipticCoefficient = EllipticCoefficient {
        lambda1: 1.0,
        lambda2: 1.0,
    };

    pub fn apply(&self, v: crate::Vec2) -> crate::Vec2 {
        crate::Vec2::new(self.lambda1 * v.x, self.lambda2 * v.y)
    }
}

/// Membership in `K_Λ`, returning the coefficient that certifies it.
pub fn in_k_lambda(x: &Mat2, lambda: f64, tol: f64) -> Option<EllipticCoefficient> {
    let (a, b, c, d) = (x.a11, x.a12, x.a21, x.a22);
    let scale = x.frobenius_norm();
    let lambda1 = if a.abs() <= tol * scale {
        if d.abs() > tol * scale {
            return None;
        }
        lambda
    } else {
        let r = d / a;
        let slack = tol * (1.0 + r.abs());
        if (r - lambda).abs() <= slack {
            lambda
        } else if (r - 1.0 / lambda).abs() <= slack {
            1.0 / lambda
        } else {
            return None;
        }
    };
    let lambda2 = if b.abs() <= tol * scale {
        if c.abs() > tol * scale {
            return None;
        }
        1.0
    } else {
        let alpha = -c / b;
        if alpha < 1.0 / lambda - tol || alpha > lambda + tol {
            return None;
        }
        alpha.clamp(1.0 / lambda, lambda)
    };
    let residual = (lambda1 * a - d).hypot(lambda2 * b + c);
    (residual <= tol * scale.max(f64::MIN_POSITIVE))
        .then_some(EllipticCoefficient { lambda1, lambda2 })
}

/// Membership in `K_{Λ,Γ}`: `K_Λ` plus the row-sum ratio bound.
pub fn in_k_lambda_gamma(x: &Mat2, lambda: f64, big_gamma: f64, tol: f64) -> bool {
    if x.frobenius_norm() == 0.0 || in_k_lambda(x, lambda, tol).is_none() {
        return false;
    }
    let top = x.a11.abs() + x.a12.abs();
    let bottom = x.a21.abs() + x.a22.abs();
    if bottom == 0.0 {
        return false;
    }
    let ratio = top / bottom;
    ratio >= (1.0 - tol) / big_gamma && ratio <= big_gamma * (1.0 + tol)
}

/// The reduction of `[[x, σ₁], [−σ₂, y]]` to equal diagonal entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EqualizeSplit {
    pub weight: f64,
    pub g: Mat2,
    pub x_half: Mat2,
}

impl EqualizeSplit {
    pub fn step(&self, parent: Mat2) -> SplitStep {
        SplitStep::new(parent, self.g, self.x_half, self.weight)
    }
}

/// Split `X_0` into a `K_{Λ,Γ}` atom and a matrix with equal diagonal
/// entries; `None` when the diagonal is already equal.
pub fn equalize_diagonal(x0: &Mat2, params: &AfsParams) -> Result<Option<EqualizeSplit>, AfsError> {
    if !params.in_u(x0) {
        return Err(AfsError::NotInU(*x0));
    }
    let l = params.lambda;
    let (x, s1, s2, y) = (x0.a11, x0.a12, -x0.a21, x0.a22);
    let out = if x < y {
        EqualizeSplit {
            weight: l * (y - x) / ((l - 1.0) * y),
            g: Mat2::new(y / l, s1, -s2, y),
            x_half: Mat2::new(y, s1, -s2, y),
        }
    } else if x > y {
        EqualizeSplit {
            weight: l * (x - y) / ((l - 1.0) * x),
            g: Mat2::new(x, s1, -s2, x / l),
            x_half: Mat2::new(x, s1, -s2, x),
        }
    } else {
        return Ok(None);
    };
    if !(out.weight > 0.0 && out.weight < 1.0) {
        return Err(AfsError::ParamViolation(format!(
            "equalizing weight {}",
            out.weight
        )));
    }
    let err = (out.g * out.weight + out.x_half * (1.0 - out.weight)).distance(x0);
    if err > 1e-10 * x0.frobenius_norm().max(1.0) {
        return Err(AfsError::Reconstruction(err));
    }
    if !params.in_k(&out.g, K_TOL) {
        return Err(AfsError::ParamViolation(format!("{:?} is not in K", out.g)));
    }
    if !params.in_u(&out.x_half) {
        return Err(AfsError::NotInU(out.x_half));
    }
    Ok(Some(out))
}

/// Stage `n` of the staircase started at `[[x, σ₁], [−σ₂, x]]`:
/// `X_{n−1} = λ₁G₁ + λ₂G₂ + γX_n`, realized as two elementary splittings
/// through `Y = [[x+n, σ₁], [−σ₂, x+n−1]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageSplit {
    pub n: usize,
    pub lambda1: f64,
    pub g1: Mat2,
    pub lambda2: f64,
    pub g2: Mat2,
    pub gamma: f64,
    pub x_prev: Mat2,
    pub y: Mat2,
    pub x_n: Mat2,
    /// Weight of `G₂` in the splitting of `Y`.
    pub lambda_prime: f64,
}

impl StageSplit {
    pub fn steps(&self) -> [SplitStep; 2] {
        [
            SplitStep::new(self.x_prev, self.g1, self.y, self.lambda1),
            SplitStep::new(self.y, self.g2, self.x_n, self.lambda_prime),
        ]
    }

    /// `μ_n`: the two `K` atoms, normalized.
    pub fn stage_measure(&self) -> Result<DiscreteMeasure, AfsError> {
        let total = self.lambda1 + self.lambda2;
        Ok(DiscreteMeasure::from_atoms(vec![
            WeightedAtom::new(self.lambda1 / total, self.g1),
            WeightedAtom::new(self.lambda2 / total, self.g2),
        ])?)
    }
}

pub fn staircase_stage(
    x: f64,
    sigma1: f64,
    sigma2: f64,
    n: usize,
    params: &AfsParams,
) -> Result<StageSplit, AfsError> {
    if !(x > params.a_bar) {
        return Err(AfsError::ParamViolation(format!(
            "x = {x} must exceed ā = {}",
            params.a_bar
        )));
    }
    if (1.0 - sigma1).abs() >= params.gamma || (1.0 - sigma2).abs() >= params.gamma {
        return Err(AfsError::ParamViolation(format!(
            "σ = ({sigma1}, {sigma2}) outside the γ-band"
        )));
    }
    if n == 0 {
        return Err(AfsError::ParamViolation("stages start at n = 1".into()));
    }
    let l = params.lambda;
    let s = x + n as f64;
    // Matches the previous stage's `x + (n−1)` bit for bit.
    let s1 = x + (n - 1) as f64;
    let lambda1 = l / (l * s - s1);
    let lambda_prime = l / ((l - 1.0) * s);
    let st = StageSplit {
        n,
        lambda1,
        g1: Mat2::new(s1 / l, sigma1, -sigma2, s1),
        lambda2: (1.0 - lambda1) * lambda_prime,
        g2: Mat2::new(s, sigma1, -sigma2, s / l),
        gamma: (1.0 - lambda1) * (1.0 - lambda_prime),
        x_prev: Mat2::new(s1, sigma1, -sigma2, s1),
        y: Mat2::new(s, sigma1, -sigma2, s1),
        x_n: Mat2::new(s, sigma1, -sigma2, s),
        lambda_prime,
    };
    let sum = st.lambda1 + st.lambda2 + st.gamma;
    if (sum - 1.0).abs() > 1e-12 {
        return Err(AfsError::ParamViolation(format!(
            "stage {n} weights sum to {sum}"
        )));
    }
    let rec = st.g1 * st.lambda1 + st.g2 * st.lambda2 + st.x_n * st.gamma;
    let err = rec.distance(&st.x_prev);
    if err > 1e-10 * st.x_prev.frobenius_norm().max(1.0) {
        return Err(AfsError::Reconstruction(err));
    }
    for g in [st.g1, st.g2] {
        if !params.in_k(&g, K_TOL) {
            return Err(AfsError::ParamViolation(format!(
                "stage {n}: {g:?} is not in K"
            )));
        }
    }
    for u in [st.y, st.x_n] {
        if !params.in_u(&u) {
            return Err(AfsError::NotInU(u));
        }
    }
    Ok(st)
}

/// `γ_n` in product form `[(x+n−1)/(x+n)]·[(x+n−a)/(x+n+b)]` with
/// `a = Λ/(Λ−1)`, `b = 1/(Λ−1)`.
pub fn gamma_ratio_form(x: f64, n: usize, lambda: f64) -> f64 {
    let s = x + n as f64;
    let a = lambda / (lambda - 1.0);
    let b = 1.0 / (lambda - 1.0);
    ((s - 1.0) / s) * ((s - a) / (s + b))
}

/// The explicit staircase together with its construction data.
#[derive(Clone, Debug)]
pub struct AfsStaircase {
    pub params: AfsParams,
    pub trunc: StaircaseTruncation,
    /// The equalizing split, when `X_0` has unequal diagonal entries. It is
    /// stored as the first stage of `trunc`.
    pub prefix: Option<EqualizeSplit>,
    pub stages: Vec<StageSplit>,
    /// Common diagonal entry after equalizing.
    pub x: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub construction: ConstructionReport,
    /// Largest and smallest row-sum ratio over the stage atoms.
    pub ratio_range: (f64, f64),
}

impl AfsStaircase {
    /// `N` stages after the optional equalizing prefix.
    pub fn build(x0: Mat2, params: &AfsParams, depth: usize) -> Result<Self, AfsError> {
        params.validate()?;
        if !params.in_u(&x0) {
            return Err(AfsError::NotInU(x0));
        }
        let prefix = equalize_diagonal(&x0, params)?;
        let sigma1 = x0.a12;
        let sigma2 = -x0.a21;
        let mut soar = vec![x0];
        let mut mu = Vec::new();
        let mut gamma = Vec::new();
        let mut trees = Vec::new();
        if let Some(pre) = prefix {
            soar.push(pre.x_half);
            mu.push(DiscreteMeasure::dirac(pre.g));
            gamma.push(1.0 - pre.weight);
            trees.push(SplitTree::replay(x0, vec![pre.step(x0)])?);
        }
        let x = soar.last().expect("soar starts non-empty").a11;
        let mut stages = Vec::with_capacity(depth);
        for n in 1..=depth {
            let st = staircase_stage(x, sigma1, sigma2, n, params)?;
            let root = *soar.last().expect("soar starts non-empty");
            if root.distance(&st.x_prev) != 0.0 {
                return Err(AfsError::Reconstruction(root.distance(&st.x_prev)));
            }
            soar.push(st.x_n);
            mu.push(st.stage_measure()?);
            gamma.push(st.gamma);
            trees.push(SplitTree::replay(root, st.steps().to_vec())?);
            stages.push(st);
        }
        let trunc = StaircaseTruncation::assemble(soar, mu, gamma)?.with_trees(trees)?;

        let mut violations = Vec::new();
        let mut offset = 0;
        for t in &trunc.trees {
            let r = t.validate_construction_steps(|m| params.in_u(m))?;
            violations.extend(r.violations.iter().map(|v| v + offset));
            offset += r.steps;
        }
        let construction = ConstructionReport {
            steps: offset,
            violations,
        };

        let mut ratio_range = (f64::INFINITY, f64::NEG_INFINITY);
        for m in &trunc.mu {
            for a in m.atoms() {
                if !params.in_k(&a.matrix, K_TOL) {
                    return Err(AfsError::ParamViolation(format!(
                        "{:?} is not in K",
                        a.matrix
                    )));
                }
                let r = row_ratio(&a.matrix);
                ratio_range = (ratio_range.0.min(r), ratio_range.1.max(r));
            }
        }
        Ok(AfsStaircase {
            params: *params,
            trunc,
            prefix,
            stages,
            x,
            sigma1,
            sigma2,
            construction,
            ratio_range,
        })
    }

    /// Membership in `SL(K_{Λ,Γ}, U)`: stage atoms in `K`, every
    /// construction step in `U`.
    pub fn is_admissible(&self) -> bool {
        self.construction.in_u()
    }
}

fn row_ratio(x: &Mat2) -> f64 {
    (x.a11.abs() + x.a12.abs()) / (x.a21.abs() + x.a22.abs())
}
