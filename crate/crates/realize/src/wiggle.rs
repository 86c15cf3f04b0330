//! The wiggle for one split and its iteration over a split tree.

use laminate_core::afs::OpenSet;
use laminate_core::{Mat2, SplitTree, Vec2};
use laminate_geometry::ConvexPolygon;
use serde::{Deserialize, Serialize};

use crate::build::{Builder, NodeRule, Sizing};
use crate::field::{CensusEntry, Field, Tag};
use crate::plan::{Plan, PlanNode, PlanSplit};
use crate::RealizeError;

/// Largest number of frequency doublings.
const MAX_DOUBLINGS: usize = 30;

/// Data of one wiggle: `X = λX₁ + (1−λ)X₂`, `X₁ − X₂ = ξ ⊗ ζ`, roof slope
/// `r` and `nfreq` teeth per unit length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WiggleSpec {
    pub x: Mat2,
    pub x1: Mat2,
    pub x2: Mat2,
    pub lambda: f64,
    pub xi: Vec2,
    pub zeta: Vec2,
    pub r: f64,
    pub nfreq: u64,
    pub eps: f64,
}

impl WiggleSpec {
    pub fn new(x1: Mat2, x2: Mat2, lambda: f64, eps: f64) -> Result<Self, RealizeError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(RealizeError::DegenerateSplit(format!(
                "λ = {lambda} outside (0, 1)"
            )));
        }
        let f = (x1 - x2)
            .rank_one_factor()
            .map_err(|e| RealizeError::DegenerateSplit(e.to_string()))?;
        let spec = WiggleSpec {
            x: x1 * lambda + x2 * (1.0 - lambda),
            x1,
            x2,
            lambda,
            xi: f.xi,
            zeta: f.zeta,
            r: eps / (2.0 * f.xi.norm()),
            nfreq: 1,
            eps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RealizeError> {
        let bad = |m: String| Err(RealizeError::DegenerateSplit(m));
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("λ = {} outside (0, 1)", self.lambda));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(RealizeError::InvalidConfig(format!(
                "eps = {} outside (0, 1)",
                self.eps
            )));
        }
        let scale = 1.0f64.max(self.x.frobenius_norm());
        if (self.x1 * self.lambda + self.x2 * (1.0 - self.lambda)).distance(&self.x) > 1e-10 * scale
        {
            return bad("X is not the barycenter of X₁, X₂".into());
        }
        let d = self.x1 - self.x2;
        if d.frobenius_norm() == 0.0
            || (d - Mat2::outer(self.xi, self.zeta)).frobenius_norm() > 1e-9 * d.frobenius_norm()
        {
            return bad("X₁ − X₂ is not ξ ⊗ ζ".into());
        }
        if (self.zeta.norm() - 1.0).abs() > 1e-12 {
            return bad("ζ is not a unit vector".into());
        }
        if !(self.r > 0.0 && self.r <= self.eps / (2.0 * self.xi.norm()) * (1.0 + 1e-12)) {
            return bad(format!("roof slope r = {} outside (0, ε/(2|ξ|)]", self.r));
        }
        if self.nfreq == 0 {
            return bad("nfreq must be positive".into());
        }
        Ok(())
    }
}

/// Distance of the dust from `x`: `wanted`, capped by half the margin of
/// `U` and half the norm gap to the larger child.
fn dust_radius(
    x: &Mat2,
    x1: &Mat2,
    x2: &Mat2,
    wanted: f64,
    u: Option<&dyn OpenSet>,
) -> Result<f64, RealizeError> {
    let gap = x1.frobenius_norm().max(x2.frobenius_norm()) - x.frobenius_norm();
    let mut d = wanted.min(0.5 * gap);
    if let Some(u) = u {
        let margin = u.margin(x);
        if !(margin > 0.0) {
            return Err(RealizeError::EpsilonTooLargeForU {
                matrix: *x,
                dust: wanted,
                margin,
            });
        }
        d = d.min(0.5 * margin);
    }
    if !(d > 0.0) {
        return Err(RealizeError::DegenerateSplit(format!(
            "no room for dust at {x:?}"
        )));
    }
    Ok(d)
}

/// Non-error area carried by gradients within `tol` of `m`.
pub(crate) fn mass_near(census: &[CensusEntry], m: &Mat2, tol: f64) -> f64 {
    census
        .iter()
        .filter(|e| !e.tag.is_error() && e.grad.distance(m) <= tol)
        .map(|e| e.area)
        .sum()
}

fn error_area(census: &[CensusEntry]) -> f64 {
    census
        .iter()
        .filter(|e| e.tag.is_error())
        .map(|e| e.area)
        .sum()
}

/// Realizes one split with affine boundary values `Xx + b`, doubling the
/// frequency until the exact fractions of `X₁` and `X₂` are within `1 ± ε`
/// and the error area is at most `ε`.
pub fn wiggle(
    spec: &WiggleSpec,
    b: Vec2,
    domain: &ConvexPolygon,
    u: Option<&dyn OpenSet>,
) -> Result<Field, RealizeError> {
    spec.validate()?;
    let dust = dust_radius(&spec.x, &spec.x1, &spec.x2, spec.r * spec.xi.norm(), u)?;
    let plan = Plan {
        nodes: vec![
            PlanNode {
                matrix: spec.x,
                split: Some(PlanSplit {
                    step: 0,
                    lambda: spec.lambda,
                    left: 1,
                    right: 2,
                    xi: spec.xi,
                    zeta: spec.zeta,
                }),
            },
            PlanNode {
                matrix: spec.x1,
                split: None,
            },
            PlanNode {
                matrix: spec.x2,
                split: None,
            },
        ],
    };
    let rules = vec![
        NodeRule {
            area_tol: spec.eps,
            dust
        };
        3
    ];
    let area = domain.area();
    let mut nfreq = spec.nfreq as f64;
    for _ in 0..=MAX_DOUBLINGS {
        let mut builder = Builder::new(
            plan.clone(),
            rules.clone(),
            vec![Tag::K; 3],
            Sizing::Exact { per_unit: nfreq },
        );
        let root = builder.build_root(domain, 1.0 - 0.25 * spec.eps)?;
        let field = Field::assemble(domain.clone(), spec.x, b, root, 2.0)?;
        let census = field.census();
        let ok = |m: &Mat2, w: f64| {
            let f = mass_near(&census, m, 0.0) / area;
            f >= (1.0 - spec.eps) * w && f <= (1.0 + spec.eps) * w
        };
        if ok(&spec.x1, spec.lambda)
            && ok(&spec.x2, 1.0 - spec.lambda)
            && error_area(&census) <= spec.eps * area
        {
            return Ok(field);
        }
        nfreq *= 2.0;
    }
    Err(RealizeError::BudgetExceeded {
        stage: 1,
        detail: format!(
            "fractions not within 1 ± {} after {MAX_DOUBLINGS} doublings",
            spec.eps
        ),
    })
}

/// Realizes a laminate of finite order: every leaf atom gets area fraction
/// within `1 ± ε` of its weight, the error set has area at most `ε|Ω|` and
/// every error gradient is a split parent or lies within `ε/2` of one.
pub fn realize_finite_laminate(
    tree: &SplitTree,
    b: Vec2,
    eps: f64,
    domain: &ConvexPolygon,
    u: Option<&dyn OpenSet>,
) -> Result<Field, RealizeError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(RealizeError::InvalidConfig(format!(
            "eps = {eps} outside (0, 1)"
        )));
    }
    if let Some(u) = u {
        if let Some(s) = tree.steps().iter().find(|s| !u.contains(&s.parent)) {
            return Err(RealizeError::EpsilonTooLargeForU {
                matrix: s.parent,
                dust: 0.0,
                margin: 0.0,
            });
        }
    }
    let plan = Plan::from_tree(tree)?;
    let depths = plan.depths();
    let mut rules = Vec::with_capacity(plan.nodes.len());
    for (i, n) in plan.nodes.iter().enumerate() {
        let area_tol = eps * 0.5f64.powi(depths[i] as i32 + 2);
        let dust = match n.split {
            Some(s) => dust_radius(
                &n.matrix,
                &plan.nodes[s.left].matrix,
                &plan.nodes[s.right].matrix,
                0.5 * eps,
                u,
            )?,
            None => 0.0,
        };
        rules.push(NodeRule { area_tol, dust });
    }
    let tags = vec![Tag::K; plan.nodes.len()];
    let x0 = plan.root().matrix;
    let mut builder = Builder::new(plan, rules, tags, Sizing::Shared);
    let root = builder.build_root(domain, 1.0 - 0.25 * eps)?;
    let field = Field::assemble(domain.clone(), x0, b, root, 2.0)?;

    let census = field.census();
    let area = domain.area();
    for a in tree.leaves().atoms() {
        let f = mass_near(&census, &a.matrix, 1e-10) / area;
        if !(f >= (1.0 - eps) * a.weight && f <= (1.0 + eps) * a.weight) {
            return Err(RealizeError::BudgetExceeded {
                stage: 0,
                detail: format!("atom {:?}: fraction {f} for weight {}", a.matrix, a.weight),
            });
        }
    }
    if error_area(&census) > eps * area {
        return Err(RealizeError::BudgetExceeded {
            stage: 0,
            detail: "error area above ε|Ω|".into(),
        });
    }
    Ok(field)
}
