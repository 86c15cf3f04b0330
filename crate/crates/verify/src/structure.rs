//! Structural checks on the patch hierarchy: pieces tile each footprint,
//! perturbations agree where pieces meet and vanish on the footprint
//! boundary, and cell gradients lie where their tags say.
//!
//! A patch is valid when its own pieces (cells and family hulls) pass;
//! copies then glue continuously because each child perturbation vanishes on
//! the child's boundary.

use std::collections::HashSet;
use std::sync::Arc;

use laminate_core::afs::K_TOL;
use laminate_core::{AfsParams, Mat2, Vec2};
use laminate_geometry::ConvexPolygon;
use laminate_realize::field::{area_defect, patch_id};
use laminate_realize::{Field, Patch, Piece, Tag};
use serde::Serialize;

use crate::residual::diagonal_coefficient;
use crate::VerifyError;

/// Relative tolerance of the structural checks.
pub const STRUCTURE_TOL: f64 = 1e-9;

const MAX_REPORTED: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    pub patches: usize,
    pub pieces: usize,
    /// Largest jump of the perturbation at a piece vertex, relative to the
    /// patch's perturbation scale.
    pub continuity_gap: f64,
    /// Largest perturbation at a footprint boundary vertex, relative.
    pub boundary_gap: f64,
    /// Largest distance of a piece vertex outside its footprint, over the
    /// footprint diameter.
    pub containment_gap: f64,
    /// Largest `|Σ piece areas − footprint area|`, relative to the footprint
    /// size.
    pub area_defect: f64,
    /// Largest `|hull area − copies area|` over families, relative to the
    /// hull size.
    pub tiling_defect: f64,
    pub root_matches_boundary: bool,
    pub tol: f64,
    pub pass: bool,
    pub failures: Vec<String>,
}

fn boundary_distance(poly: &ConvexPolygon, p: Vec2) -> f64 {
    poly.edges()
        .map(|(a, b)| {
            let e = b - a;
            let t = ((p - a).dot(e) / e.dot(e)).clamp(0.0, 1.0);
            (a + e * t - p).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Smallest extent of a convex polygon over its edge normals.
fn min_width(poly: &ConvexPolygon) -> f64 {
    poly.edges()
        .map(|(a, b)| {
            let (lo, hi) = poly.extent((b - a).perp().normalized());
            hi - lo
        })
        .fold(f64::INFINITY, f64::min)
}

/// Distance outside a convex polygon, 0 inside.
fn outside_distance(poly: &ConvexPolygon, p: Vec2) -> f64 {
    if poly.contains(p, 0.0) {
        0.0
    } else {
        boundary_distance(poly, p)
    }
}

struct Walker {
    tol: f64,
    seen: HashSet<usize>,
    report: StructureReport,
}

impl Walker {
    fn note(&mut self, gap: f64, what: impl FnOnce() -> String) {
        if gap > self.tol && self.report.failures.len() < MAX_REPORTED {
            self.report.failures.push(what());
        }
    }

    fn patch(&mut self, p: &Arc<Patch>) -> Result<(), VerifyError> {
        if !self.seen.insert(patch_id(p)) {
            return Ok(());
        }
        self.report.patches += 1;
        let pieces = p.pieces()?;
        self.report.pieces += pieces.len();
        let diam = p.footprint.diameter();
        // Vertices count as shared within a fraction of the thinnest
        // direction; teeth can be a billion times longer than wide.
        let geo = self.tol * min_width(&p.footprint);
        let scale = pieces
            .iter()
            .map(|q| p.slope(&q.grad).operator_norm() * diam + q.offset.norm())
            .fold(0.0, f64::max);
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let id = self.report.patches;

        let area: f64 = p.local_area();
        let defect = area_defect(&p.footprint, area);
        self.report.area_defect = self.report.area_defect.max(defect);
        self.note(defect, || {
            format!("patch {id}: pieces cover {area} of {}", p.footprint.area())
        });

        for f in &p.families {
            let hull = f.hull(p.rot)?;
            let d = area_defect(&hull, f.covered_area());
            self.report.tiling_defect = self.report.tiling_defect.max(d);
            self.note(d, || {
                format!(
                    "patch {id}: family copies cover {} of their hull {}",
                    f.covered_area(),
                    hull.area()
                )
            });
        }

        let boxes: Vec<(Vec2, Vec2)> = pieces.iter().map(|q| q.poly.bbox()).collect();
        let phi = |q: &Piece, y: Vec2| p.phi(&q.grad, q.offset, y);
        for (i, a) in pieces.iter().enumerate() {
            for &v in a.poly.vertices() {
                let out = outside_distance(&p.footprint, v) / diam;
                self.report.containment_gap = self.report.containment_gap.max(out);
                self.note(out, || {
                    format!("patch {id}: vertex {v:?} outside the footprint")
                });
                let here = phi(a, v);
                if boundary_distance(&p.footprint, v) <= geo {
                    let g = here.norm() / scale;
                    self.report.boundary_gap = self.report.boundary_gap.max(g);
                    self.note(g, || {
                        format!("patch {id}: perturbation {here:?} at boundary vertex {v:?}")
                    });
                }
                for (j, b) in pieces.iter().enumerate() {
                    let (lo, hi) = boxes[j];
                    if j == i
                        || v.x < lo.x - geo
                        || v.x > hi.x + geo
                        || v.y < lo.y - geo
                        || v.y > hi.y + geo
                    {
                        continue;
                    }
                    if b.poly.contains(v, geo) {
                        let g = (phi(b, v) - here).norm() / scale;
                        self.report.continuity_gap = self.report.continuity_gap.max(g);
                        self.note(g, || {
                            format!("patch {id}: jump {g:e} at {v:?} between pieces {i} and {j}")
                        });
                    }
                }
            }
        }
        for f in &p.families {
            self.patch(&f.patch)?;
        }
        Ok(())
    }
}

pub fn check_structure(field: &Field, tol: f64) -> Result<StructureReport, VerifyError> {
    let root = &field.root;
    let root_matches_boundary = root.host == field.x0
        && root.rot == Vec2::new(1.0, 0.0)
        && root.footprint.vertices() == field.domain.vertices();
    let mut w = Walker {
        tol,
        seen: HashSet::new(),
        report: StructureReport {
            patches: 0,
            pieces: 0,
            continuity_gap: 0.0,
            boundary_gap: 0.0,
            containment_gap: 0.0,
            area_defect: 0.0,
            tiling_defect: 0.0,
            root_matches_boundary,
            tol,
            pass: false,
            failures: Vec::new(),
        },
    };
    if !root_matches_boundary {
        w.report
            .failures
            .push("root patch does not carry the domain and boundary map".into());
    }
    w.patch(root)?;
    let r = &mut w.report;
    r.pass = r.root_matches_boundary
        && [
            r.continuity_gap,
            r.boundary_gap,
            r.containment_gap,
            r.area_defect,
            r.tiling_defect,
        ]
        .iter()
        .all(|&g| g <= tol);
    Ok(w.report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MembershipReport {
    pub classes: usize,
    /// K-tagged gradients outside `K_{Λ,Γ}`.
    pub k_failures: Vec<Mat2>,
    /// Error gradients outside `U`.
    pub error_outside_u: Vec<Mat2>,
    /// Active gradients without a `Λ`-elliptic diagonal coefficient.
    pub active_failures: Vec<Mat2>,
    pub pass: bool,
}

/// Gradient classes against their tags: K cells in `K_{Λ,Γ}`, error cells
/// in `U`, active cells solving the equation with a diagonal coefficient.
pub fn check_membership(field: &Field, params: &AfsParams) -> MembershipReport {
    let census = field.census();
    let mut r = MembershipReport {
        classes: census.len(),
        k_failures: Vec::new(),
        error_outside_u: Vec::new(),
        active_failures: Vec::new(),
        pass: true,
    };
    for e in census.iter().filter(|e| e.area > 0.0) {
        let bucket = match e.tag {
            Tag::K if !params.in_k(&e.grad, K_TOL) => &mut r.k_failures,
            Tag::Dust | Tag::Residual if !params.in_u(&e.grad) => &mut r.error_outside_u,
            Tag::Active if diagonal_coefficient(&e.grad, params.lambda).is_none() => {
                &mut r.active_failures
            }
            _ => continue,
        };
        r.pass = false;
        if bucket.len() < MAX_REPORTED {
            bucket.push(e.grad);
        }
    }
    r
}

/// Outcome of [`check_preserved`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Preservation {
    /// Non-error cells of the older field that were compared.
    pub compared: usize,
    pub mismatch: Option<String>,
}

/// Every non-error cell of `old` reappears bit for bit in `new` at the same
/// place in the hierarchy.
pub fn check_preserved(old: &Field, new: &Field) -> Preservation {
    fn walk(
        a: &Arc<Patch>,
        b: &Arc<Patch>,
        seen: &mut HashSet<(usize, usize)>,
        n: &mut usize,
    ) -> Result<(), String> {
        if Arc::ptr_eq(a, b) || !seen.insert((patch_id(a), patch_id(b))) {
            return Ok(());
        }
        if a.footprint != b.footprint || a.host != b.host || a.rot != b.rot {
            return Err("patch frame changed".into());
        }
        let mut rest = b.cells.iter();
        for c in a.cells.iter().filter(|c| !c.tag.is_error()) {
            if !rest.any(|d| d == c) {
                return Err(format!(
                    "{} cell with gradient {:?} lost",
                    c.tag.name(),
                    c.grad
                ));
            }
            *n += 1;
        }
        if b.families.len() < a.families.len() {
            return Err("families lost".into());
        }
        for (f, g) in a.families.iter().zip(&b.families) {
            let same = f.origin == g.origin
                && f.step == g.step
                && f.count == g.count
                && f.scale == g.scale
                && f.offset == g.offset
                && f.round == g.round;
            if !same {
                return Err("family placement changed".into());
            }
            walk(&f.patch, &g.patch, seen, n)?;
        }
        Ok(())
    }
    let mut compared = 0;
    let mismatch = walk(&old.root, &new.root, &mut HashSet::new(), &mut compared).err();
    Preservation { compared, mismatch }
}

#[cfg(test)]
mod tests {
    use super::*;
    use laminate_core::AfsStaircase;
    use laminate_realize::{
        realize_staircase, restart_iteration, wiggle, Cell, RealizeConfig, WiggleSpec,
    };

    fn wiggle_field() -> Field {
        let x1 = Mat2::new(1.0, 2.0, 0.0, 1.0);
        let x2 = Mat2::new(1.0, 2.0, 3.0, -1.0);
        let spec = WiggleSpec::new(x1, x2, 0.3, 0.05).unwrap();
        wiggle(
            &spec,
            Vec2::new(0.5, -0.25),
            &ConvexPolygon::regular(6, 1.0),
            None,
        )
        .unwrap()
    }

    #[test]
    fn wiggle_is_continuous_and_matches_the_boundary() {
        let r = check_structure(&wiggle_field(), STRUCTURE_TOL).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.patches >= 2);
    }

    #[test]
    fn zeroed_gradient_breaks_continuity() {
        let f = wiggle_field();
        let mut root = (*f.root).clone();
        let i = root
            .cells
            .iter()
            .position(|c| c.tag == Tag::Residual || c.tag == Tag::K)
            .unwrap_or(0);
        root.cells[i] = Cell {
            grad: Mat2::ZERO,
            ..root.cells[i].clone()
        };
        let g = Field {
            root: Arc::new(root),
            ..f
        };
        let r = check_structure(&g, STRUCTURE_TOL).unwrap();
        assert!(!r.pass);
        assert!(r.continuity_gap > 1e-3 || r.boundary_gap > 1e-3);
    }

    #[test]
    fn staircase_membership_and_preservation() {
        let p = AfsParams::defaults(2.0).unwrap();
        let cfg = RealizeConfig {
            depth: 2,
            ..Default::default()
        };
        let st = AfsStaircase::build(p.default_x0(), &p, 2).unwrap();
        let f = realize_staircase(
            &st.trunc,
            &cfg,
            Vec2::ZERO,
            &ConvexPolygon::unit_square(),
            &p,
        )
        .unwrap();
        assert!(check_membership(&f, &p).pass);
        assert!(check_structure(&f, STRUCTURE_TOL).unwrap().pass);
        let g = restart_iteration(&f, &p, &cfg).unwrap();
        let kept = check_preserved(&f, &g);
        assert!(kept.mismatch.is_none(), "{kept:?}");
        assert!(kept.compared > 0);
        assert!(check_membership(&g, &p).pass);
    }

    #[test]
    fn zero_gradient_is_not_in_k() {
        let p = AfsParams::defaults(2.0).unwrap();
        let f = Field::affine(ConvexPolygon::unit_square(), Mat2::ZERO, Vec2::ZERO, Tag::K);
        let r = check_membership(&f, &p);
        assert!(!r.pass);
        assert_eq!(r.k_failures, vec![Mat2::ZERO]);
    }
}
