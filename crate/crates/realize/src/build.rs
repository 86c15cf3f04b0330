//! Teeth, slabs and their assembly into patches.
//!
//! A tooth realizes one split `X = λX₁ + (1−λ)X₂` with `X₁ − X₂ = ξ ⊗ ζ` in
//! coordinates `σ = ⟨y, e₁⟩` (along `ζ`) and `τ = ⟨y, n'⟩` (across the slab
//! it sits in). Its footprint is `0 ≤ σ ≤ 1, |τ| ≤ C` and the perturbation is
//! `ξ·min((1−λ)σ, λ(1−σ), ρ(C−τ), ρ(C+τ))`, which vanishes on the boundary.
//! Rows of teeth fill a slab; refined children are slabs again.

use std::collections::HashMap;
use std::sync::Arc;

use laminate_core::{Mat2, Vec2};
use laminate_geometry::{quadtree_cover, ConvexPolygon};

use crate::field::{area_defect, Cell, Family, Patch, Tag};
use crate::plan::Plan;
use crate::RealizeError;

const PARALLEL_TOL: f64 = 1e-12;
const MAX_SIZING_ITERS: usize = 80;
/// Copy counts stay exactly representable.
/// Largest count in one family, so that copy indices stay exact in `f64`.
const MAX_COUNT: u64 = 1 << 53;

/// Tolerances for the tooth of one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct NodeRule {
    /// Largest relative area loss of the tooth and of each child.
    pub area_tol: f64,
    /// Distance `ρ|ξ|` of the dust gradients from the node matrix.
    pub dust: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Sizing {
    /// Tooth aspect chosen per node to meet `area_tol`; shared by all slabs.
    Shared,
    /// `ceil(per_unit · length)` teeth per slab.
    Exact { per_unit: f64 },
}

/// `{y : ⟨y, n⟩ ∈ [lo, hi]}` with unit `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Band {
    pub n: Vec2,
    pub lo: f64,
    pub hi: f64,
}

/// `{y : ⟨y, u⟩ ∈ s, ⟨y, n⟩ ∈ t}` with unit, non-parallel `u`, `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Slab {
    pub u: Vec2,
    pub n: Vec2,
    pub s: (f64, f64),
    pub t: (f64, f64),
}

/// The point with `⟨y, u⟩ = s` and `⟨y, n⟩ = t`.
fn dual_point(u: Vec2, n: Vec2, s: f64, t: f64) -> Vec2 {
    let det = u.cross(n);
    Vec2::new((s * n.y - t * u.y) / det, (t * u.x - s * n.x) / det)
}

impl Slab {
    pub fn point(&self, s: f64, t: f64) -> Vec2 {
        dual_point(self.u, self.n, s, t)
    }

    /// `None` when the piece is too thin to be a polygon.
    pub fn polygon(&self, s0: f64, s1: f64) -> Option<ConvexPolygon> {
        let (t0, t1) = self.t;
        ConvexPolygon::hull(&[
            self.point(s0, t0),
            self.point(s1, t0),
            self.point(s1, t1),
            self.point(s0, t1),
        ])
        .ok()
    }

    pub fn area(&self) -> f64 {
        (self.s.1 - self.s.0) * (self.t.1 - self.t.0) / self.u.cross(self.n).abs()
    }
}

fn band_polygon(a: Band, b: Band) -> ConvexPolygon {
    ConvexPolygon::hull(&[
        dual_point(a.n, b.n, a.lo, b.lo),
        dual_point(a.n, b.n, a.hi, b.lo),
        dual_point(a.n, b.n, a.hi, b.hi),
        dual_point(a.n, b.n, a.lo, b.hi),
    ])
    .expect("non-parallel bands meet in a parallelogram")
}

/// Largest slab along `zeta` inside the parallelogram `a ∩ b`, with the
/// uncovered pieces.
pub(crate) fn inscribe(a: Band, b: Band, zeta: Vec2) -> Option<(Slab, Vec<ConvexPolygon>)> {
    for (p, q) in [(a, b), (b, a)] {
        if p.n.cross(zeta).abs() <= PARALLEL_TOL {
            let s = if p.n.dot(zeta) > 0.0 {
                (p.lo, p.hi)
            } else {
                (-p.hi, -p.lo)
            };
            return Some((
                Slab {
                    u: zeta,
                    n: q.n,
                    s,
                    t: (q.lo, q.hi),
                },
                Vec::new(),
            ));
        }
    }
    let region = band_polygon(a, b);
    let mut best: Option<(Slab, f64)> = None;
    for (roof, other) in [(a, b), (b, a)] {
        let seg = |t: f64| {
            let s1 = dual_point(roof.n, other.n, t, other.lo).dot(zeta);
            let s2 = dual_point(roof.n, other.n, t, other.hi).dot(zeta);
            (s1.min(s2), s1.max(s2))
        };
        let (l0, h0) = seg(roof.lo);
        let (l1, h1) = seg(roof.hi);
        let (lo, hi) = (l0.max(l1), h0.min(h1));
        if lo < hi {
            let slab = Slab {
                u: zeta,
                n: roof.n,
                s: (lo, hi),
                t: (roof.lo, roof.hi),
            };
            let area = slab.area();
            if best.as_ref().is_none_or(|(_, a)| area > *a) {
                best = Some((slab, area));
            }
        }
    }
    let (slab, _) = best?;
    let mut rest = Vec::new();
    rest.extend(region.clip(zeta, slab.s.0));
    rest.extend(region.clip(-zeta, -slab.s.1));
    Some((slab, rest))
}

/// Exact areas of one tooth, in tooth units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ToothStats {
    pub area: f64,
    pub error: f64,
    /// Area realizing the left and right child.
    pub content: [f64; 2],
}

impl ToothStats {
    fn loss(&self, lambda: f64) -> f64 {
        let l = [lambda, 1.0 - lambda];
        let child = (0..2)
            .map(|i| 1.0 - self.content[i] / (l[i] * self.area))
            .fold(0.0, f64::max);
        (self.error / self.area).max(child)
    }
}

type ToothKey = (usize, u64, u64, u64);

pub(crate) struct Builder {
    pub plan: Plan,
    pub rules: Vec<NodeRule>,
    pub tags: Vec<Tag>,
    pub round: u32,
    pub sizing: Sizing,
    /// Dust gradients must stay away from these.
    pub avoid: Vec<Mat2>,
    teeth: HashMap<ToothKey, Arc<Patch>>,
    widths: HashMap<(usize, u64, u64), f64>,
}

fn nkey(n: Vec2) -> (u64, u64) {
    (n.x.to_bits(), n.y.to_bits())
}

impl Builder {
    pub fn new(plan: Plan, rules: Vec<NodeRule>, tags: Vec<Tag>, sizing: Sizing) -> Self {
        Builder {
            plan,
            rules,
            tags,
            round: 0,
            sizing,
            avoid: Vec::new(),
            teeth: HashMap::new(),
            widths: HashMap::new(),
        }
    }

    fn cell(&self, poly: ConvexPolygon, grad: Mat2, offset: Vec2, tag: Tag) -> Cell {
        Cell {
            poly,
            grad,
            offset,
            tag,
            round: self.round,
        }
    }

    /// Slope of the node's roof, adjusted so no dust gradient lands on a
    /// matrix in `avoid`.
    fn rho(&self, node: usize, n_abs: Vec2) -> Result<f64, RealizeError> {
        let nd = &self.plan.nodes[node];
        let s = nd.split.expect("rho of a split node");
        let mut rho = self.rules[node].dust / s.xi.norm();
        for _ in 0..20 {
            let d = Mat2::outer(s.xi, n_abs) * rho;
            let hit = self.avoid.iter().any(|a| {
                (nd.matrix + d).distance(a) <= 1e-8 || (nd.matrix - d).distance(a) <= 1e-8
            });
            if !hit {
                return Ok(rho);
            }
            rho *= 0.5;
        }
        Err(RealizeError::DegenerateSplit(
            "dust keeps hitting the soaring sequence".into(),
        ))
    }

    /// Tooth of `node` with roof normal `n'` and half-width `c`; `None`
    /// when `c` leaves no room for the refined children.
    fn build_tooth(
        &mut self,
        node: usize,
        np: Vec2,
        c: f64,
    ) -> Result<Option<(Patch, ToothStats)>, RealizeError> {
        let nd = self.plan.nodes[node];
        let sp = nd.split.expect("tooth of a split node");
        let (lam, x, xi, zeta) = (sp.lambda, nd.matrix, sp.xi, sp.zeta);
        let n_abs = np.rotate(zeta);
        let rho = self.rho(node, n_abs)?;
        let h = lam * (1.0 - lam);
        let t_in = c - h / rho;
        let refined = [sp.left, sp.right]
            .iter()
            .any(|&i| self.plan.nodes[i].split.is_some());
        if refined && !(t_in > 0.0) {
            return Ok(None);
        }
        let to_y = |p: &ConvexPolygon| p.map(|v| Vec2::new(v.x, (v.y - np.x * v.x) / np.y));
        let rect = ConvexPolygon::rect(0.0, -c, 1.0, c);
        let hp = |p: &ConvexPolygon, a: f64, b: f64, off: f64| p.clip(Vec2::new(a, b), off);
        let pc = rho * c;
        let regions = [
            rect.clip(Vec2::new(1.0, 0.0), lam)
                .and_then(|p| hp(&p, 1.0 - lam, rho, pc))
                .and_then(|p| hp(&p, 1.0 - lam, -rho, pc)),
            rect.clip(Vec2::new(-1.0, 0.0), -lam)
                .and_then(|p| hp(&p, -lam, rho, pc - lam))
                .and_then(|p| hp(&p, -lam, -rho, pc - lam)),
        ];
        let dust = [
            rect.clip(Vec2::new(0.0, -1.0), 0.0)
                .and_then(|p| hp(&p, -(1.0 - lam), -rho, -pc))
                .and_then(|p| hp(&p, lam, -rho, lam - pc)),
            rect.clip(Vec2::new(0.0, 1.0), 0.0)
                .and_then(|p| hp(&p, -(1.0 - lam), rho, -pc))
                .and_then(|p| hp(&p, lam, rho, lam - pc)),
        ];
        let footprint = to_y(&rect);
        let mut cells = Vec::new();
        let mut families = Vec::new();
        let mut stats = ToothStats {
            area: footprint.area(),
            error: 0.0,
            content: [0.0; 2],
        };

        let dust_grad = [
            x - Mat2::outer(xi, n_abs) * rho,
            x + Mat2::outer(xi, n_abs) * rho,
        ];
        for (poly, g) in dust.iter().zip(dust_grad) {
            if let Some(p) = poly {
                let p = to_y(p);
                stats.error += p.area();
                cells.push(self.cell(p, g, xi * (rho * c), Tag::Dust));
            }
        }

        let ranges = [(0.0, lam), (lam, 1.0)];
        let offsets = [Vec2::ZERO, xi * lam];
        let children = [sp.left, sp.right];
        for i in 0..2 {
            let Some(region) = &regions[i] else {
                return Err(RealizeError::DegenerateSplit(format!(
                    "empty child region, λ = {lam}"
                )));
            };
            let child = self.plan.nodes[children[i]];
            let (g, d) = (child.matrix, offsets[i]);
            let Some(csplit) = child.split else {
                let p = to_y(region);
                stats.content[i] += p.area();
                cells.push(self.cell(p, g, d, self.tags[children[i]]));
                continue;
            };
            for corner in [
                region.clip(Vec2::new(0.0, -1.0), -t_in),
                region.clip(Vec2::new(0.0, 1.0), -t_in),
            ]
            .into_iter()
            .flatten()
            {
                let p = to_y(&corner);
                stats.error += p.area();
                cells.push(self.cell(p, g, d, Tag::Residual));
            }
            let b1 = Band {
                n: Vec2::new(1.0, 0.0),
                lo: ranges[i].0,
                hi: ranges[i].1,
            };
            let b2 = Band {
                n: np,
                lo: -t_in,
                hi: t_in,
            };
            let Some((slab, rest)) = inscribe(b1, b2, csplit.zeta.unrotate(zeta)) else {
                return Ok(None);
            };
            for p in rest {
                stats.error += p.area();
                cells.push(self.cell(p, g, d, Tag::Residual));
            }
            let (fam, slivers) = self.slab_family(children[i], &slab, zeta, d)?;
            if let Some(f) = fam {
                stats.content[i] += f.covered_area();
                families.push(f);
            }
            for p in slivers {
                stats.error += p.area();
                cells.push(self.cell(p, g, d, Tag::Residual));
            }
        }
        let patch = Patch {
            footprint,
            host: x,
            rot: zeta,
            cells,
            families,
        };
        check_partition(&patch)?;
        Ok(Some((patch, stats)))
    }

    /// Half-width ratio `C` of the node's shared tooth.
    fn width(&mut self, node: usize, np: Vec2) -> Result<f64, RealizeError> {
        let (kx, ky) = nkey(np);
        if let Some(c) = self.widths.get(&(node, kx, ky)) {
            return Ok(*c);
        }
        let nd = self.plan.nodes[node];
        let sp = nd.split.expect("width of a split node");
        let rule = self.rules[node];
        let rho = self.rho(node, np.rotate(sp.zeta))?;
        let mut c = 2.0 * sp.lambda * (1.0 - sp.lambda) / rho + 1.0;
        for _ in 0..MAX_SIZING_ITERS {
            match self.build_tooth(node, np, c)? {
                None => c *= 2.0,
                Some((patch, stats)) => {
                    let loss = stats.loss(sp.lambda);
                    if loss <= rule.area_tol {
                        self.widths.insert((node, kx, ky), c);
                        self.teeth
                            .insert((node, kx, ky, c.to_bits()), Arc::new(patch));
                        return Ok(c);
                    }
                    c *= (1.1 * loss / rule.area_tol).max(1.1);
                }
            }
            if !c.is_finite() || c > 1e150 {
                break;
            }
        }
        Err(RealizeError::BudgetExceeded {
            stage: 0,
            detail: format!(
                "no tooth width meets area tolerance {:e} at {:?}",
                rule.area_tol, nd.matrix
            ),
        })
    }

    fn tooth(&mut self, node: usize, np: Vec2, c: f64) -> Result<Arc<Patch>, RealizeError> {
        let (kx, ky) = nkey(np);
        let k = (node, kx, ky, c.to_bits());
        if let Some(p) = self.teeth.get(&k) {
            return Ok(p.clone());
        }
        let (patch, _) = self.build_tooth(node, np, c)?.ok_or_else(|| {
            RealizeError::DegenerateSplit(format!("tooth too thin for its dust, C = {c}"))
        })?;
        let p = Arc::new(patch);
        self.teeth.insert(k, p.clone());
        Ok(p)
    }

    /// A row of teeth of `node` along the slab, which sits in a patch with
    /// rotation `parent_rot`; returns the family and the uncovered sliver.
    pub fn slab_family(
        &mut self,
        node: usize,
        slab: &Slab,
        parent_rot: Vec2,
        offset: Vec2,
    ) -> Result<(Option<Family>, Vec<ConvexPolygon>), RealizeError> {
        let zeta = self.plan.nodes[node]
            .split
            .expect("slab of a split node")
            .zeta;
        let mut np = slab.n.rotate(parent_rot).unrotate(zeta);
        if np.y < 0.0 {
            np = -np;
        }
        let half = 0.5 * (slab.t.1 - slab.t.0);
        let tm = 0.5 * (slab.t.0 + slab.t.1);
        let len = slab.s.1 - slab.s.0;
        let (k, pitch, c) = match self.sizing {
            Sizing::Shared => {
                let c = self.width(node, np)?;
                let pitch = half / c;
                ((len / pitch).floor(), pitch, c)
            }
            Sizing::Exact { per_unit } => {
                let k = (per_unit * len).ceil().max(1.0);
                let pitch = len / k;
                (k, pitch, half / pitch)
            }
        };
        if !k.is_finite() {
            return Err(RealizeError::ScaleUnderflow(format!(
                "{k:e} teeth in one row"
            )));
        }
        if k < 1.0 {
            return Ok((None, slab.polygon(slab.s.0, slab.s.1).into_iter().collect()));
        }
        let patch = self.tooth(node, np, c)?;
        let fam = Family {
            patch,
            origin: slab.point(slab.s.0, tm),
            step: slab.point(1.0, 0.0) * pitch,
            count: 0,
            scale: pitch,
            offset,
            round: self.round,
        };
        let (fam, k) = row(fam, k, parent_rot)?;
        let end = slab.s.0 + k * pitch;
        let mut rest = Vec::new();
        if end < slab.s.1 - 1e-13 * len {
            rest.extend(slab.polygon(end, slab.s.1));
        }
        Ok((Some(fam), rest))
    }

    /// Slab along the node's `ζ` filled with teeth, placed in a patch with
    /// rotation `rot`, plus residual cells for what it leaves over.
    pub fn fill_slab(
        &mut self,
        node: usize,
        slab: &Slab,
        rot: Vec2,
        offset: Vec2,
        cells: &mut Vec<Cell>,
        families: &mut Vec<Family>,
    ) -> Result<(), RealizeError> {
        let g = self.plan.nodes[node].matrix;
        let (fam, rest) = self.slab_family(node, slab, rot, offset)?;
        families.extend(fam);
        for p in rest {
            cells.push(self.cell(p, g, offset, Tag::Residual));
        }
        Ok(())
    }

    /// Fills `target` (local coordinates of a patch with rotation `rot`) with
    /// teeth of `node`: one slab when the target is a parallelogram the slab
    /// fits into with loss at most `1 − fill`, quadtree squares otherwise.
    pub fn fill_region(
        &mut self,
        node: usize,
        target: &ConvexPolygon,
        rot: Vec2,
        offset: Vec2,
        fill: f64,
    ) -> Result<(Vec<Cell>, Vec<Family>), RealizeError> {
        let nd = self.plan.nodes[node];
        let mut cells = Vec::new();
        let mut families = Vec::new();
        let Some(sp) = nd.split else {
            cells.push(self.cell(target.clone(), nd.matrix, offset, self.tags[node]));
            return Ok((cells, families));
        };
        let zeta = sp.zeta.unrotate(rot);
        if let Some((a, b)) = parallelogram_bands(target) {
            if let Some((slab, rest)) = inscribe(a, b, zeta) {
                let lost: f64 = rest.iter().map(ConvexPolygon::area).sum();
                if lost <= (1.0 - fill) * target.area() {
                    for p in rest {
                        cells.push(self.cell(p, nd.matrix, offset, Tag::Residual));
                    }
                    self.fill_slab(node, &slab, rot, offset, &mut cells, &mut families)?;
                    return Ok((cells, families));
                }
            }
        }
        let qc = quadtree_cover(target, zeta, fill)?;
        let square = {
            let mut sc = Vec::new();
            let mut sf = Vec::new();
            let slab = Slab {
                u: Vec2::new(1.0, 0.0),
                n: Vec2::new(0.0, 1.0),
                s: (0.0, 1.0),
                t: (0.0, 1.0),
            };
            let abs = zeta.rotate(rot);
            self.fill_slab(node, &slab, abs, Vec2::ZERO, &mut sc, &mut sf)?;
            Arc::new(Patch {
                footprint: ConvexPolygon::unit_square(),
                host: nd.matrix,
                rot: abs,
                cells: sc,
                families: sf,
            })
        };
        let mut squares = qc.squares.clone();
        squares.sort_by_key(|&(l, ix, iy)| (l, iy, ix));
        let mut i = 0;
        while i < squares.len() {
            let (l, ix, iy) = squares[i];
            let mut j = i + 1;
            while j < squares.len() && squares[j] == (l, ix + (j - i) as u64, iy) {
                j += 1;
            }
            let side = qc.side(l);
            families.push(Family {
                patch: square.clone(),
                origin: qc.corner(l, ix, iy).rotate(zeta),
                step: Vec2::new(side, 0.0).rotate(zeta),
                count: (j - i) as u64,
                scale: side,
                offset,
                round: self.round,
            });
            i = j;
        }
        for p in qc.remainder {
            cells.push(self.cell(p, nd.matrix, offset, Tag::Residual));
        }
        Ok((cells, families))
    }
}

impl Builder {
    /// Root patch on `domain`, in global coordinates.
    pub fn build_root(&mut self, domain: &ConvexPolygon, fill: f64) -> Result<Patch, RealizeError> {
        let x0 = self.plan.nodes[0].matrix;
        let rot = Vec2::new(1.0, 0.0);
        let (cells, families) = self.fill_region(0, domain, rot, Vec2::ZERO, fill)?;
        let patch = Patch {
            footprint: domain.clone(),
            host: x0,
            rot,
            cells,
            families,
        };
        check_partition(&patch)?;
        Ok(patch)
    }
}

/// The two bands of a parallelogram.
pub(crate) fn parallelogram_bands(p: &ConvexPolygon) -> Option<(Band, Band)> {
    if p.len() != 4 {
        return None;
    }
    let v = p.vertices();
    let e0 = v[1] - v[0];
    let e1 = v[2] - v[1];
    let e2 = v[3] - v[2];
    let e3 = v[0] - v[3];
    let tol = 1e-12;
    if e0.cross(e2).abs() > tol * e0.norm() * e2.norm()
        || e1.cross(e3).abs() > tol * e1.norm() * e3.norm()
    {
        return None;
    }
    let band = |e: Vec2| {
        let n = e.perp().normalized();
        let (lo, hi) = p.extent(n);
        Band { n, lo, hi }
    };
    Some((band(e0), band(e1)))
}

/// A row of at most `k` copies of `fam.patch`. Rows longer than `MAX_COUNT`
/// become rows of equal blocks, each a patch holding a shorter row; the
/// fewer than `√k` copies that do not fill a block are dropped, since a lone
/// block at the end of a row this long cannot be placed to within rounding.
/// Returns the family and the number of copies it holds.
fn row(fam: Family, k: f64, parent_rot: Vec2) -> Result<(Family, f64), RealizeError> {
    if k <= MAX_COUNT as f64 {
        return Ok((
            Family {
                count: k as u64,
                ..fam
            },
            k,
        ));
    }
    let m = k.sqrt().ceil().max((k / MAX_COUNT as f64).ceil());
    let full = (k / m).floor();
    let span = fam.step * m;
    let scale = span.norm();
    let inner = Family {
        origin: Vec2::ZERO,
        step: fam.step * (1.0 / scale),
        scale: fam.scale / scale,
        offset: Vec2::ZERO,
        ..fam.clone()
    };
    let (inner, _) = row(inner, m, parent_rot)?;
    let block = Patch {
        footprint: inner.hull(parent_rot)?,
        host: fam.patch.host,
        rot: parent_rot,
        cells: Vec::new(),
        families: vec![inner],
    };
    let blocks = Family {
        patch: Arc::new(block),
        origin: Vec2::ZERO,
        step: span * (1.0 / scale),
        count: full as u64,
        scale: 1.0,
        offset: Vec2::ZERO,
        ..fam.clone()
    };
    let outer = Patch {
        footprint: blocks.hull(parent_rot)?,
        host: fam.patch.host,
        rot: parent_rot,
        cells: Vec::new(),
        families: vec![blocks],
    };
    let fam = Family {
        patch: Arc::new(outer),
        step: Vec2::ZERO,
        count: 1,
        scale,
        ..fam
    };
    Ok((fam, full * m))
}

/// Cells and family copies tile the footprint.
pub(crate) fn check_partition(p: &Patch) -> Result<(), RealizeError> {
    let total = p.local_area();
    let want = p.footprint.area();
    if area_defect(&p.footprint, total) > 1e-9 {
        return Err(RealizeError::DegenerateSplit(format!(
            "pieces cover {total} of a footprint of area {want}"
        )));
    }
    Ok(())
}
