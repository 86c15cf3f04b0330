//! Finite-depth realization of a staircase laminate.

use laminate_core::afs::OpenSet;
use laminate_core::measure::MERGE_TOL;
use laminate_core::{StaircaseTruncation, Vec2};
use laminate_geometry::ConvexPolygon;
use serde::{Deserialize, Serialize};

use crate::build::{Builder, NodeRule, Sizing};
use crate::field::{error_integral, Field, Tag};
use crate::plan::Plan;
use crate::wiggle::mass_near;
use crate::RealizeError;

/// Smallest global copy scale before the construction is refused.
const MIN_SCALE: f64 = 1e-250;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizeConfig {
    /// Stage `n` keeps its dust within `eps·2^{−n}/4` of the split parent.
    pub eps: f64,
    /// Mass slack: atom masses stay within `c_N = Π(1 + 2^{−j}η)`.
    pub eta: f64,
    /// Exponent of the error integral `∫_err (1 + |∇w|)^q`.
    pub q: f64,
    /// Hölder exponent for the closeness report.
    pub alpha: f64,
    /// Bound on `sup |w − (X₀x + b)|`.
    pub closeness_delta: f64,
    /// Least covered fraction for quadtree covers of the domain.
    pub fill: f64,
    pub depth: usize,
    pub rounds: u32,
}

impl Default for RealizeConfig {
    fn default() -> Self {
        RealizeConfig {
            eps: 0.05,
            eta: 0.1,
            q: 2.0,
            alpha: 0.5,
            closeness_delta: 0.1,
            fill: 0.99,
            depth: 4,
            rounds: 0,
        }
    }
}

impl RealizeConfig {
    pub fn validate(&self) -> Result<(), RealizeError> {
        let bad = |m: String| Err(RealizeError::InvalidConfig(m));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps = {} must be positive", self.eps));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta = {} outside (0, 1]", self.eta));
        }
        if !(self.q > 1.0 && self.q.is_finite()) {
            return bad(format!("q = {} must exceed 1", self.q));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        if !(self.closeness_delta > 0.0) {
            return bad(format!(
                "closeness_delta = {} must be positive",
                self.closeness_delta
            ));
        }
        if !(self.fill > 0.0 && self.fill < 1.0) {
            return bad(format!("fill = {} outside (0, 1)", self.fill));
        }
        if self.rounds > 16 {
            return bad(format!("{} rounds", self.rounds));
        }
        Ok(())
    }

    /// `c_n = Π_{j=1}^{n} (1 + 2^{−j}η)`.
    pub fn c_n(&self, n: usize) -> f64 {
        (1..=n)
            .map(|j| 1.0 + 0.5f64.powi(j as i32) * self.eta)
            .product()
    }
}

/// Builder for the whole staircase: stage `n` loses at most
/// `f_n = min(ε_n, η2^{−n}/(2+η), η2^{−n−1}(1+Y_n)^{−q})/2` of area per split,
/// where `Y_n` bounds the stage's gradients. With `strict`, dust that does
/// not fit inside `U` is an error; otherwise the dust radius shrinks.
pub(crate) fn staircase_builder(
    trunc: &StaircaseTruncation,
    cfg: &RealizeConfig,
    u: &dyn OpenSet,
    strict: bool,
) -> Result<(Builder, f64), RealizeError> {
    let tree = trunc.combined_tree()?;
    let plan = Plan::from_tree(&tree)?;
    let mut stage_of_step = Vec::new();
    for (k, t) in trunc.trees.iter().enumerate() {
        stage_of_step.extend(std::iter::repeat_n(k + 1, t.steps().len()));
    }
    if stage_of_step.len() != tree.steps().len() {
        return Err(RealizeError::InvalidConfig(
            "truncation carries no per-stage split trees".into(),
        ));
    }
    let depth = trunc.depth();
    let mut ymax = vec![0.0f64; depth + 1];
    for n in &plan.nodes {
        if let Some(s) = n.split {
            let st = stage_of_step[s.step];
            let y = [
                n.matrix,
                plan.nodes[s.left].matrix,
                plan.nodes[s.right].matrix,
            ]
            .iter()
            .map(|m| m.frobenius_norm())
            .fold(0.0, f64::max);
            ymax[st] = ymax[st].max(y);
        }
    }
    let eta = cfg.eta;
    let f = |n: usize| {
        let p = 0.5f64.powi(n as i32);
        let eps_n = cfg.eps * p;
        let y = ymax[n] + eps_n;
        eps_n
            .min(eta * p / (2.0 + eta))
            .min(0.5 * eta * p * (1.0 + y).powf(-cfg.q))
            * 0.5
    };
    let mut rules = Vec::with_capacity(plan.nodes.len());
    for n in &plan.nodes {
        let Some(s) = n.split else {
            rules.push(NodeRule {
                area_tol: 0.0,
                dust: 0.0,
            });
            continue;
        };
        let st = stage_of_step[s.step];
        let wanted = 0.25 * cfg.eps * 0.5f64.powi(st as i32);
        let margin = u.margin(&n.matrix);
        if strict && wanted >= margin {
            return Err(RealizeError::EpsilonTooLargeForU {
                matrix: n.matrix,
                dust: wanted,
                margin,
            });
        }
        if !(margin > 0.0) {
            return Err(RealizeError::RestartOutsideU(n.matrix));
        }
        let gap = plan.nodes[s.left]
            .matrix
            .frobenius_norm()
            .max(plan.nodes[s.right].matrix.frobenius_norm())
            - n.matrix.frobenius_norm();
        let dust = wanted.min(0.5 * margin).min(0.5 * gap);
        rules.push(NodeRule {
            area_tol: f(st),
            dust,
        });
    }
    let x_last = trunc.x_last();
    let tags = plan
        .nodes
        .iter()
        .map(|n| {
            if n.matrix.distance(&x_last) <= MERGE_TOL {
                Tag::Active
            } else {
                Tag::K
            }
        })
        .collect();
    let fill = if depth == 0 {
        cfg.fill
    } else {
        cfg.fill.max(1.0 - 0.5 * f(1))
    };
    let mut b = Builder::new(plan, rules, tags, Sizing::Shared);
    b.avoid = trunc.soar.clone();
    Ok((b, fill))
}

/// Realizes `ν^N` on `domain` with boundary values `X₀x + b`, checking the
/// mass sandwich with `c_N`, the error budget `η|Ω|(1 − 2^{−N})` and the
/// closeness bound exactly.
pub fn realize_staircase(
    trunc: &StaircaseTruncation,
    cfg: &RealizeConfig,
    b: Vec2,
    domain: &ConvexPolygon,
    u: &dyn OpenSet,
) -> Result<Field, RealizeError> {
    cfg.validate()?;
    let (mut builder, fill) = staircase_builder(trunc, cfg, u, true)?;
    let root = builder.build_root(domain, fill)?;
    let field = Field::assemble(domain.clone(), trunc.x0(), b, root, cfg.q)?;
    check_staircase(&field, trunc, cfg)?;
    Ok(field)
}

fn check_staircase(
    field: &Field,
    trunc: &StaircaseTruncation,
    cfg: &RealizeConfig,
) -> Result<(), RealizeError> {
    let stats = field.stats();
    if stats.min_scale < MIN_SCALE {
        return Err(RealizeError::ScaleUnderflow(format!(
            "copy scale {:e}",
            stats.min_scale
        )));
    }
    let census = field.census();
    let area = field.domain.area();
    let n = trunc.depth();
    let c = cfg.c_n(n);
    for a in trunc.nu.atoms() {
        let m = mass_near(&census, &a.matrix, 1e-8) / area;
        if !(m >= a.weight / c && m <= a.weight * c) {
            let stage = trunc
                .mu
                .iter()
                .position(|mu| mu.find(&a.matrix).is_some())
                .map_or(n, |k| k + 1);
            return Err(RealizeError::BudgetExceeded {
                stage,
                detail: format!(
                    "atom mass {m:e} outside [{:e}, {:e}]",
                    a.weight / c,
                    a.weight * c
                ),
            });
        }
    }
    let e = error_integral(&census, cfg.q);
    let budget = cfg.eta * area * (1.0 - 0.5f64.powi(n as i32));
    if e > budget {
        return Err(RealizeError::BudgetExceeded {
            stage: n,
            detail: format!("error integral {e:e} above {budget:e}"),
        });
    }
    let sup = field.sup_bound()?;
    if sup > cfg.closeness_delta {
        return Err(RealizeError::BudgetExceeded {
            stage: n,
            detail: format!("sup distance bound {sup:e} above {}", cfg.closeness_delta),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use laminate_core::{AfsParams, AfsStaircase};

    fn afs(depth: usize) -> (AfsParams, AfsStaircase) {
        let p = AfsParams::defaults(2.0).unwrap();
        let st = AfsStaircase::build(p.default_x0(), &p, depth).unwrap();
        (p, st)
    }

    #[test]
    fn c_n_is_below_exp_eta() {
        let cfg = RealizeConfig::default();
        assert!((cfg.c_n(1) - 1.05).abs() < 1e-15);
        assert!(cfg.c_n(60) < cfg.eta.exp());
    }

    #[test]
    fn config_ranges() {
        assert!(RealizeConfig::default().validate().is_ok());
        assert!(RealizeConfig {
            q: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RealizeConfig {
            fill: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RealizeConfig {
            alpha: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn depth_zero_is_affine() {
        let (p, st) = afs(0);
        let f = realize_staircase(
            &st.trunc,
            &RealizeConfig::default(),
            Vec2::ZERO,
            &ConvexPolygon::unit_square(),
            &p,
        )
        .unwrap();
        assert_eq!(f.stats().log10_cells, 0.0);
        assert_eq!(f.root.cells[0].tag, Tag::Active);
    }

    #[test]
    fn depth_two_meets_budgets() {
        let (p, st) = afs(2);
        let cfg = RealizeConfig {
            depth: 2,
            ..Default::default()
        };
        let f = realize_staircase(
            &st.trunc,
            &cfg,
            Vec2::ZERO,
            &ConvexPolygon::unit_square(),
            &p,
        )
        .unwrap();
        let census = f.census();
        for e in &census {
            match e.tag {
                Tag::K => assert!(p.in_k(&e.grad, 1e-9)),
                Tag::Active => assert_eq!(e.grad, st.trunc.x_last()),
                _ => assert!(p.in_u(&e.grad)),
            }
        }
        assert!(f.error_integral(2.0) <= 0.1 * 0.75);
    }

    #[test]
    fn oversized_eps_is_rejected() {
        let (p, st) = afs(1);
        let cfg = RealizeConfig {
            eps: 2.0,
            depth: 1,
            ..Default::default()
        };
        let r = realize_staircase(
            &st.trunc,
            &cfg,
            Vec2::ZERO,
            &ConvexPolygon::unit_square(),
            &p,
        );
        assert!(matches!(r, Err(RealizeError::EpsilonTooLargeForU { .. })));
    }
}
