//! Piecewise affine fields stored as a hierarchy of patches.
//!
//! A patch lives in its own local coordinates `y`. On a patch with host
//! matrix `H` and absolute rotation `R`, every cell carries its gradient `G`
//! and a local perturbation `φ(y) = (G − H)·R·y + d`. Placing the patch at
//! global origin `o` with scale `s` gives `w(x) = H x + c + s·φ(y)` with
//! `x = o + s·R·y`. Families place `count` translated copies of a child
//! patch inside a region of the parent on which the parent's perturbation is
//! `(H_child − H)·R·y + offset`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use laminate_core::{Mat2, Vec2};
use laminate_geometry::{ConvexPolygon, GeometryError};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "K")]
    K,
    #[serde(rename = "dust")]
    Dust,
    #[serde(rename = "active")]
    Active,
    #[serde(rename = "residual")]
    Residual,
}

impl Tag {
    /// Dust and residual cells form the error set.
    pub fn is_error(self) -> bool {
        matches!(self, Tag::Dust | Tag::Residual)
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::K => "K",
            Tag::Dust => "dust",
            Tag::Active => "active",
            Tag::Residual => "residual",
        }
    }
}

/// Matrix of the rotation by the angle with cosine `r.x` and sine `r.y`.
pub fn rot_mat(r: Vec2) -> Mat2 {
    Mat2::new(r.x, -r.y, r.y, r.x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub poly: ConvexPolygon,
    pub grad: Mat2,
    pub offset: Vec2,
    pub tag: Tag,
    /// Restart round that created the cell.
    pub round: u32,
}

#[derive(Clone, Debug)]
pub struct Family {
    pub patch: Arc<Patch>,
    /// Parent-local position of the first copy's local origin.
    pub origin: Vec2,
    /// Parent-local translation between consecutive copies.
    pub step: Vec2,
    pub count: u64,
    /// Child length unit measured in parent units.
    pub scale: f64,
    /// Constant term of the parent perturbation on the covered region.
    pub offset: Vec2,
    pub round: u32,
}

impl Family {
    /// Linear part of the copy map from child-local to parent-local
    /// coordinates.
    pub fn linear(&self, parent_rot: Vec2) -> Mat2 {
        rot_mat(parent_rot).transpose() * rot_mat(self.patch.rot) * self.scale
    }

    pub fn copy_origin(&self, j: u64) -> Vec2 {
        self.origin + self.step * j as f64
    }

    /// Union of all copies' footprints, in parent coordinates.
    pub fn hull(&self, parent_rot: Vec2) -> Result<ConvexPolygon, GeometryError> {
        let l = self.linear(parent_rot);
        let last = self.copy_origin(self.count.saturating_sub(1));
        let mut pts = Vec::with_capacity(2 * self.patch.footprint.len());
        for v in self.patch.footprint.vertices() {
            let lv = l * *v;
            pts.push(self.origin + lv);
            pts.push(last + lv);
        }
        ConvexPolygon::hull(&pts)
    }

    /// Area of the union of copies, in parent units.
    pub fn covered_area(&self) -> f64 {
        self.count as f64 * self.scale * self.scale * self.patch.footprint.area()
    }
}

#[derive(Clone, Debug)]
pub struct Patch {
    pub footprint: ConvexPolygon,
    pub host: Mat2,
    /// Absolute rotation of the local frame, as a unit vector.
    pub rot: Vec2,
    pub cells: Vec<Cell>,
    pub families: Vec<Family>,
}

/// One convex piece of a patch: a cell or the hull of a family.
#[derive(Clone, Debug)]
pub struct Piece {
    pub poly: ConvexPolygon,
    pub grad: Mat2,
    pub offset: Vec2,
    /// `None` for family hulls.
    pub tag: Option<Tag>,
}

impl Patch {
    pub fn single(footprint: ConvexPolygon, host: Mat2, tag: Tag) -> Self {
        let cell = Cell {
            poly: footprint.clone(),
            grad: host,
            offset: Vec2::ZERO,
            tag,
            round: 0,
        };
        Patch {
            footprint,
            host,
            rot: Vec2::new(1.0, 0.0),
            cells: vec![cell],
            families: Vec::new(),
        }
    }

    /// Linear part `(G − H)·R` of a perturbation with gradient `grad`.
    pub fn slope(&self, grad: &Mat2) -> Mat2 {
        (*grad - self.host) * rot_mat(self.rot)
    }

    pub fn phi(&self, grad: &Mat2, offset: Vec2, y: Vec2) -> Vec2 {
        self.slope(grad) * y + offset
    }

    pub fn pieces(&self) -> Result<Vec<Piece>, GeometryError> {
        let mut out: Vec<Piece> = self
            .cells
            .iter()
            .map(|c| Piece {
                poly: c.poly.clone(),
                grad: c.grad,
                offset: c.offset,
                tag: Some(c.tag),
            })
            .collect();
        for f in &self.families {
            out.push(Piece {
                poly: f.hull(self.rot)?,
                grad: f.patch.host,
                offset: f.offset,
                tag: None,
            });
        }
        Ok(out)
    }

    /// Area of cells plus covered family areas, in local units.
    pub fn local_area(&self) -> f64 {
        self.cells.iter().map(|c| c.poly.area()).sum::<f64>()
            + self.families.iter().map(Family::covered_area).sum::<f64>()
    }
}

/// Per-round budget record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub error_integral: f64,
    pub error_area: f64,
    pub k_area: f64,
    pub active_area: f64,
    /// `log₁₀` of the number of cells after full expansion.
    pub log10_cells: f64,
    pub sup_bound: f64,
}

/// A continuous piecewise affine map on a convex polygonal domain with
/// affine boundary values `X₀x + b`.
#[derive(Clone, Debug)]
pub struct Field {
    pub domain: ConvexPolygon,
    pub x0: Mat2,
    pub b: Vec2,
    pub root: Arc<Patch>,
    /// Exponent of the recorded error integrals.
    pub q: f64,
    pub history: Vec<RoundRecord>,
}

/// Area carried by one `(gradient, tag, round)` class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CensusEntry {
    pub grad: Mat2,
    pub tag: Tag,
    pub round: u32,
    pub area: f64,
}

/// Cell in global coordinates, `w(x) = grad·x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatCell {
    pub poly: ConvexPolygon,
    pub grad: Mat2,
    pub b: Vec2,
    pub tag: Tag,
    pub round: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub patches: usize,
    pub families: usize,
    pub local_cells: usize,
    /// `log₁₀` of the number of cells after full expansion.
    pub log10_cells: f64,
    /// Longest chain of nested families.
    pub depth: usize,
    pub min_scale: f64,
}

type Key = ([u64; 4], Tag, u32);

fn key(g: &Mat2, tag: Tag, round: u32) -> Key {
    let e = g.entries();
    (
        [
            e[0].to_bits(),
            e[1].to_bits(),
            e[2].to_bits(),
            e[3].to_bits(),
        ],
        tag,
        round,
    )
}

fn unkey(k: &Key) -> Mat2 {
    let e = k.0.map(f64::from_bits);
    Mat2::new(e[0], e[1], e[2], e[3])
}

/// Identity of a shared patch.
pub fn patch_id(p: &Arc<Patch>) -> usize {
    Arc::as_ptr(p) as usize
}

fn patch_census(
    p: &Arc<Patch>,
    memo: &mut HashMap<usize, Arc<BTreeMap<Key, f64>>>,
) -> Arc<BTreeMap<Key, f64>> {
    if let Some(m) = memo.get(&patch_id(p)) {
        return m.clone();
    }
    let mut acc: BTreeMap<Key, f64> = BTreeMap::new();
    for c in &p.cells {
        *acc.entry(key(&c.grad, c.tag, c.round)).or_insert(0.0) += c.poly.area();
    }
    for f in &p.families {
        let child = patch_census(&f.patch, memo);
        let w = f.count as f64 * f.scale * f.scale;
        for (k, a) in child.iter() {
            *acc.entry(*k).or_insert(0.0) += w * a;
        }
    }
    let acc = Arc::new(acc);
    memo.insert(patch_id(p), acc.clone());
    acc
}

impl Field {
    /// The affine map itself, as one cell.
    pub fn affine(domain: ConvexPolygon, x0: Mat2, b: Vec2, tag: Tag) -> Self {
        let root = Arc::new(Patch::single(domain.clone(), x0, tag));
        Field {
            domain,
            x0,
            b,
            root,
            q: 2.0,
            history: Vec::new(),
        }
    }

    /// Wraps a root patch and records round 0.
    pub fn assemble(
        domain: ConvexPolygon,
        x0: Mat2,
        b: Vec2,
        root: Patch,
        q: f64,
    ) -> Result<Self, GeometryError> {
        let mut f = Field {
            domain,
            x0,
            b,
            root: Arc::new(root),
            q,
            history: Vec::new(),
        };
        let r = f.record(0)?;
        f.history.push(r);
        Ok(f)
    }

    pub fn rounds(&self) -> u32 {
        self.history.iter().map(|r| r.round).max().unwrap_or(0)
    }

    /// Areas by gradient, tag and round, in canonical order.
    pub fn census(&self) -> Vec<CensusEntry> {
        let mut memo = HashMap::new();
        patch_census(&self.root, &mut memo)
            .iter()
            .map(|(k, a)| CensusEntry {
                grad: unkey(k),
                tag: k.1,
                round: k.2,
                area: *a,
            })
            .collect()
    }

    /// `∫_err (1 + |∇w|)^q`.
    pub fn error_integral(&self, q: f64) -> f64 {
        error_integral(&self.census(), q)
    }

    pub fn stats(&self) -> FieldStats {
        fn walk(
            p: &Arc<Patch>,
            memo: &mut HashMap<usize, (f64, usize, f64)>,
            seen: &mut FieldStats,
        ) -> (f64, usize, f64) {
            if let Some(v) = memo.get(&patch_id(p)) {
                return *v;
            }
            seen.patches += 1;
            seen.families += p.families.len();
            seen.local_cells += p.cells.len();
            let mut cells = (p.cells.len() as f64).log10();
            let mut depth = 0;
            let mut min_scale: f64 = 1.0;
            for f in &p.families {
                let (c, d, s) = walk(&f.patch, memo, seen);
                cells = log10_add(cells, (f.count as f64).log10() + c);
                depth = depth.max(d + 1);
                min_scale = min_scale.min(f.scale * s);
            }
            memo.insert(patch_id(p), (cells, depth, min_scale));
            (cells, depth, min_scale)
        }
        let mut s = FieldStats {
            patches: 0,
            families: 0,
            local_cells: 0,
            log10_cells: f64::NEG_INFINITY,
            depth: 0,
            min_scale: 1.0,
        };
        let (cells, depth, min_scale) = walk(&self.root, &mut HashMap::new(), &mut s);
        s.log10_cells = cells;
        s.depth = depth;
        s.min_scale = min_scale;
        s
    }

    /// Fully expanded cells, or `None` when there are more than `limit`.
    pub fn flatten(&self, limit: usize) -> Option<Vec<FlatCell>> {
        if self.stats().log10_cells > (limit as f64).log10() {
            return None;
        }
        let mut out = Vec::new();
        flatten_into(&self.root, Vec2::ZERO, 1.0, self.b, &mut out);
        Some(out)
    }

    /// Rebuilds a field from expanded cells; every cell becomes a root cell.
    pub fn from_flat(domain: ConvexPolygon, x0: Mat2, b: Vec2, cells: Vec<FlatCell>) -> Self {
        let cells = cells
            .into_iter()
            .map(|c| Cell {
                poly: c.poly,
                grad: c.grad,
                offset: c.b - b,
                tag: c.tag,
                round: c.round,
            })
            .collect();
        let root = Patch {
            footprint: domain.clone(),
            host: x0,
            rot: Vec2::new(1.0, 0.0),
            cells,
            families: Vec::new(),
        };
        Field {
            domain,
            x0,
            b,
            root: Arc::new(root),
            q: 2.0,
            history: Vec::new(),
        }
    }
}

/// Bound on `max |w − (X₀x + b)|` over the patch, in its own units: the
/// exact maximum over cell vertices, with families bounded by their hull
/// vertices plus the scaled bound of the child.
fn patch_sup(p: &Arc<Patch>, memo: &mut HashMap<usize, f64>) -> Result<f64, GeometryError> {
    if let Some(v) = memo.get(&patch_id(p)) {
        return Ok(*v);
    }
    let mut m: f64 = 0.0;
    for c in &p.cells {
        for v in c.poly.vertices() {
            m = m.max(p.phi(&c.grad, c.offset, *v).norm());
        }
    }
    for f in &p.families {
        let child = patch_sup(&f.patch, memo)?;
        let mut hull: f64 = 0.0;
        for v in f.hull(p.rot)?.vertices() {
            hull = hull.max(p.phi(&f.patch.host, f.offset, *v).norm());
        }
        m = m.max(hull + f.scale * child);
    }
    memo.insert(patch_id(p), m);
    Ok(m)
}

impl Field {
    /// Upper bound on the sup distance to the boundary map; exact when the
    /// field has no families.
    pub fn sup_bound(&self) -> Result<f64, GeometryError> {
        patch_sup(&self.root, &mut HashMap::new())
    }

    /// Budget summary of the current state, labelled `round`.
    pub fn record(&self, round: u32) -> Result<RoundRecord, GeometryError> {
        let census = self.census();
        let area = |pred: &dyn Fn(&CensusEntry) -> bool| {
            census
                .iter()
                .filter(|e| pred(e))
                .fold(0.0, |s, e| s + e.area)
        };
        Ok(RoundRecord {
            round,
            error_integral: error_integral(&census, self.q),
            error_area: area(&|e| e.tag.is_error()),
            k_area: area(&|e| e.tag == Tag::K),
            active_area: area(&|e| e.tag == Tag::Active),
            log10_cells: self.stats().log10_cells,
            sup_bound: self.sup_bound()?,
        })
    }
}

fn log10_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (1.0 + 10f64.powf(lo - hi)).log10()
}

/// `|covered − area(poly)|` relative to the polygon's size. Slivers are
/// measured against their diameter squared, since clipping leaves rounding
/// residue of that order whatever their area.
pub fn area_defect(poly: &ConvexPolygon, covered: f64) -> f64 {
    let d = poly.diameter();
    (covered - poly.area()).abs() / (poly.area() + 1e-4 * d * d)
}

pub fn error_integral(census: &[CensusEntry], q: f64) -> f64 {
    census
        .iter()
        .filter(|e| e.tag.is_error())
        .map(|e| e.area * (1.0 + e.grad.frobenius_norm()).powf(q))
        .fold(0.0, |s, x| s + x)
}

fn flatten_into(p: &Patch, o: Vec2, s: f64, c: Vec2, out: &mut Vec<FlatCell>) {
    let r = rot_mat(p.rot);
    for cell in &p.cells {
        let poly = cell.poly.map(|y| o + r * y * s);
        let b = c - (cell.grad - p.host) * o + cell.offset * s;
        out.push(FlatCell {
            poly,
            grad: cell.grad,
            b,
            tag: cell.tag,
            round: cell.round,
        });
    }
    for f in &p.families {
        let child = &f.patch;
        let cc = c - (child.host - p.host) * o + f.offset * s;
        for j in 0..f.count {
            let oc = o + r * f.copy_origin(j) * s;
            flatten_into(child, oc, s * f.scale, cc, out);
        }
    }
}
