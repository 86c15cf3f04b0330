use serde::{Deserialize, Serialize};

use crate::{GeometryError, Vec2};

/// Relative tolerance for convexity and duplicate-vertex checks.
pub const SHAPE_TOL: f64 = 1e-12;
/// Pieces whose area falls below this fraction of the clipped polygon are
/// dropped.
pub const DEGENERATE_AREA: f64 = 1e-14;

/// `{x : ⟨x, normal⟩ ≤ offset}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Vec2, offset: f64) -> Self {
        HalfPlane { normal, offset }
    }

    /// Positive outside, negative inside.
    pub fn excess(&self, p: Vec2) -> f64 {
        p.dot(self.normal) - self.offset
    }

    pub fn complement(&self) -> HalfPlane {
        HalfPlane::new(-self.normal, -self.offset)
    }
}

/// A convex polygon with counter-clockwise vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

impl TryFrom<Vec<Vec2>> for ConvexPolygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Vec2>) -> Result<Self, GeometryError> {
        ConvexPolygon::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Vec2> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

impl ConvexPolygon {
    /// Validates convexity; clockwise input is reversed.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPolygon("non-finite vertex".into()));
        }
        let mut p = ConvexPolygon { vertices };
        p.dedup();
        if p.vertices.len() < 3 {
            return Err(GeometryError::InvalidPolygon(format!(
                "{} distinct vertices",
                p.vertices.len()
            )));
        }
        if p.signed_area() < 0.0 {
            p.vertices.reverse();
        }
        if !(p.signed_area() > 0.0) {
            return Err(GeometryError::InvalidPolygon("zero area".into()));
        }
        let n = p.vertices.len();
        for i in 0..n {
            let e1 = p.vertices[(i + 1) % n] - p.vertices[i];
            let e2 = p.vertices[(i + 2) % n] - p.vertices[(i + 1) % n];
            if e1.cross(e2) < -SHAPE_TOL * e1.norm() * e2.norm() {
                return Err(GeometryError::InvalidPolygon(format!(
                    "reflex vertex {}",
                    (i + 1) % n
                )));
            }
        }
        let mut turn = 0.0;
        for i in 0..n {
            let e1 = p.vertices[(i + 1) % n] - p.vertices[i];
            let e2 = p.vertices[(i + 2) % n] - p.vertices[(i + 1) % n];
            turn += e1.cross(e2).atan2(e1.dot(e2));
        }
        if (turn - std::f64::consts::TAU).abs() > 1e-6 {
            return Err(GeometryError::InvalidPolygon(
                "self-intersecting boundary".into(),
            ));
        }
        Ok(p)
    }

    /// Convex hull of a point set (monotone chain).
    pub fn hull(points: &[Vec2]) -> Result<Self, GeometryError> {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup();
        if pts.len() < 3 {
            return Err(GeometryError::InvalidPolygon(
                "hull of fewer than 3 points".into(),
            ));
        }
        let mut lower: Vec<Vec2> = Vec::new();
        for p in &pts {
            while lower.len() >= 2
                && (lower[lower.len() - 1] - lower[lower.len() - 2])
                    .cross(*p - lower[lower.len() - 2])
                    <= 0.0
            {
                lower.pop();
            }
            lower.push(*p);
        }
        let mut upper: Vec<Vec2> = Vec::new();
        for p in pts.iter().rev() {
            while upper.len() >= 2
                && (upper[upper.len() - 1] - upper[upper.len() - 2])
                    .cross(*p - upper[upper.len() - 2])
                    <= 0.0
            {
                upper.pop();
            }
            upper.push(*p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        ConvexPolygon::new(lower)
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        ConvexPolygon {
            vertices: vec![
                Vec2::new(x0, y0),
                Vec2::new(x1, y0),
                Vec2::new(x1, y1),
                Vec2::new(x0, y1),
            ],
        }
    }

    pub fn unit_square() -> Self {
        Self::rect(0.0, 0.0, 1.0, 1.0)
    }

    /// `{origin + s·e1 + t·e2 : s, t ∈ [0, 1]}`.
    pub fn parallelogram(origin: Vec2, e1: Vec2, e2: Vec2) -> Self {
        let mut vertices = vec![origin, origin + e1, origin + e1 + e2, origin + e2];
        if e1.cross(e2) < 0.0 {
            vertices.reverse();
        }
        ConvexPolygon { vertices }
    }

    /// Regular `n`-gon of circumradius `r` centred at the origin.
    pub fn regular(n: usize, r: f64) -> Self {
        let vertices = (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        ConvexPolygon { vertices }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as `(start, end)` pairs in counter-clockwise order.
    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace sum taken relative to the first vertex.
    pub fn signed_area(&self) -> f64 {
        let o = self.vertices[0];
        let mut s = 0.0;
        for w in self.vertices[1..].windows(2) {
            s += (w[0] - o).cross(w[1] - o);
        }
        0.5 * s
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> Vec2 {
        let o = self.vertices[0];
        let mut acc = Vec2::ZERO;
        let mut a2 = 0.0;
        for w in self.vertices[1..].windows(2) {
            let (p, q) = (w[0] - o, w[1] - o);
            let c = p.cross(q);
            a2 += c;
            acc += (p + q) * c;
        }
        o + acc * (1.0 / (3.0 * a2))
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        let mut lo = self.vertices[0];
        let mut hi = lo;
        for v in &self.vertices[1..] {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max((*a - *b).norm());
            }
        }
        d
    }

    /// Range of `⟨x, dir⟩` over the polygon.
    pub fn extent(&self, dir: Vec2) -> (f64, f64) {
        self.vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                let s = v.dot(dir);
                (lo.min(s), hi.max(s))
            })
    }

    /// Point membership with an absolute slack.
    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        self.edges().all(|(a, b)| {
            let e = b - a;
            e.cross(p - a) >= -tol * e.norm()
        })
    }

    /// Whether `other` lies inside this polygon up to an absolute slack.
    pub fn contains_polygon(&self, other: &ConvexPolygon, tol: f64) -> bool {
        other.vertices.iter().all(|v| self.contains(*v, tol))
    }

    /// Intersection with `{⟨x, normal⟩ ≤ offset}`; `None` when the piece is
    /// empty or degenerate.
    pub fn clip(&self, normal: Vec2, offset: f64) -> Option<ConvexPolygon> {
        let scale = normal.norm() * self.diameter();
        let snap = SHAPE_TOL * scale;
        let d: Vec<f64> = self
            .vertices
            .iter()
            .map(|v| {
                let e = v.dot(normal) - offset;
                if e.abs() <= snap {
                    0.0
                } else {
                    e
                }
            })
            .collect();
        if d.iter().all(|&e| e <= 0.0) {
            return Some(self.clone());
        }
        if d.iter().all(|&e| e >= 0.0) {
            return None;
        }
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let j = (i + 1) % n;
            let (p, q) = (self.vertices[i], self.vertices[j]);
            if d[i] <= 0.0 {
                out.push(p);
            }
            if (d[i] < 0.0 && d[j] > 0.0) || (d[i] > 0.0 && d[j] < 0.0) {
                let t = d[i] / (d[i] - d[j]);
                out.push(p + (q - p) * t);
            }
        }
        let mut piece = ConvexPolygon { vertices: out };
        piece.dedup();
        if piece.vertices.len() < 3 || piece.signed_area() <= DEGENERATE_AREA * self.area() {
            return None;
        }
        Some(piece)
    }

    pub fn clip_half_plane(&self, h: &HalfPlane) -> Option<ConvexPolygon> {
        self.clip(h.normal, h.offset)
    }

    pub fn clip_all(&self, hs: &[HalfPlane]) -> Option<ConvexPolygon> {
        let mut p = self.clone();
        for h in hs {
            p = p.clip_half_plane(h)?;
        }
        Some(p)
    }

    /// Both sides of the line `⟨x, normal⟩ = offset`.
    pub fn split(
        &self,
        normal: Vec2,
        offset: f64,
    ) -> (Option<ConvexPolygon>, Option<ConvexPolygon>) {
        (self.clip(normal, offset), self.clip(-normal, -offset))
    }

    /// Image under a map that is affine and orientation-agnostic.
    pub fn map(&self, f: impl Fn(Vec2) -> Vec2) -> ConvexPolygon {
        let mut vertices: Vec<Vec2> = self.vertices.iter().map(|v| f(*v)).collect();
        let p = ConvexPolygon {
            vertices: vertices.clone(),
        };
        if p.signed_area() < 0.0 {
            vertices.reverse();
        }
        ConvexPolygon { vertices }
    }

    pub fn translate(&self, t: Vec2) -> ConvexPolygon {
        self.map(|v| v + t)
    }

    pub fn scale(&self, s: f64) -> ConvexPolygon {
        self.map(|v| v * s)
    }

    fn dedup(&mut self) {
        if self.vertices.is_empty() {
            return;
        }
        let diam = {
            let (lo, hi) = bbox_of(&self.vertices);
            (hi - lo).norm()
        };
        let tol = SHAPE_TOL * diam;
        let mut out: Vec<Vec2> = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            if out.last().is_none_or(|l| (*l - *v).norm() > tol) {
                out.push(*v);
            }
        }
        while out.len() > 1 && (out[0] - *out.last().unwrap()).norm() <= tol {
            out.pop();
        }
        self.vertices = out;
    }
}

fn bbox_of(vs: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = vs[0];
    let mut hi = lo;
    for v in &vs[1..] {
        lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn clip_examples() {
        let sq = ConvexPolygon::unit_square();
        let half = sq.clip(Vec2::new(1.0, 0.0), 0.5).unwrap();
        assert_abs_diff_eq!(half.area(), 0.5, epsilon = 1e-15);
        assert!(sq.clip(Vec2::new(1.0, 0.0), -0.1).is_none());
        let tri = sq.clip(Vec2::new(1.0, 1.0), 1.0).unwrap();
        assert_eq!(tri.len(), 3);
        assert_abs_diff_eq!(tri.area(), 0.5, epsilon = 1e-15);
        // clipping along an edge keeps the polygon
        assert_eq!(sq.clip(Vec2::new(1.0, 0.0), 1.0).unwrap(), sq);
        // a sliver below the degeneracy threshold disappears
        assert!(sq.clip(Vec2::new(-1.0, 0.0), -(1.0 - 1e-15)).is_none());
    }

    #[test]
    fn area_examples() {
        assert_abs_diff_eq!(ConvexPolygon::unit_square().area(), 1.0);
        let tri = ConvexPolygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ])
        .unwrap();
        assert_abs_diff_eq!(tri.area(), 0.5);
        // shoelace by hand: six triangles of side 1
        assert_abs_diff_eq!(
            ConvexPolygon::regular(6, 1.0).area(),
            6.0 * 3f64.sqrt() / 4.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(ConvexPolygon::regular(6, 1.0).area(), 2.598, epsilon = 1e-3);
    }

    #[test]
    fn validation() {
        let cw = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ];
        let p = ConvexPolygon::new(cw).unwrap();
        assert!(p.signed_area() > 0.0);
        let reflex = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, 0.2),
            Vec2::new(1.0, 2.0),
        ];
        assert!(ConvexPolygon::new(reflex).is_err());
        let line = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 0.0),
        ];
        assert!(ConvexPolygon::new(line).is_err());
        let dup = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert_eq!(ConvexPolygon::new(dup).unwrap().len(), 3);
        let star = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.0, 0.0) + Vec2::new(1.0, 0.0) * 0.5,
        ];
        assert!(ConvexPolygon::new(star).is_err());
    }

    #[test]
    fn json_is_a_vertex_array() {
        let sq = ConvexPolygon::unit_square();
        let s = serde_json::to_string(&sq).unwrap();
        assert_eq!(s, "[[0.0,0.0],[1.0,0.0],[1.0,1.0],[0.0,1.0]]");
        let back: ConvexPolygon = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sq);
        assert!(serde_json::from_str::<ConvexPolygon>("[[0,0],[1,0]]").is_err());
    }

    #[test]
    fn hull_of_two_squares() {
        let mut pts = ConvexPolygon::unit_square().vertices().to_vec();
        pts.extend(ConvexPolygon::rect(1.0, 0.0, 2.0, 1.0).vertices());
        pts.push(Vec2::new(0.5, 0.5));
        let h = ConvexPolygon::hull(&pts).unwrap();
        assert_eq!(h.len(), 4);
        assert_abs_diff_eq!(h.area(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn centroid_and_parallelogram() {
        let p = ConvexPolygon::parallelogram(
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 2.0),
            Vec2::new(3.0, 0.0),
        );
        assert!(p.signed_area() > 0.0);
        assert_abs_diff_eq!(p.area(), 6.0, epsilon = 1e-14);
        let c = p.centroid();
        assert_abs_diff_eq!(c.x, 2.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c.y, 2.0, epsilon = 1e-14);
    }

    fn poly() -> impl Strategy<Value = ConvexPolygon> {
        (
            3usize..9,
            0.1f64..10.0,
            -5.0f64..5.0,
            -5.0f64..5.0,
            0.0f64..1.0,
        )
            .prop_map(|(n, r, cx, cy, phase)| {
                ConvexPolygon::regular(n, r)
                    .map(|v| v.rotate(Vec2::new(phase.cos(), phase.sin())) + Vec2::new(cx, cy))
            })
    }

    proptest! {
        #[test]
        fn complementary_clips_partition_area(p in poly(), a in 0.0f64..6.3, t in -1.0f64..1.0) {
            let n = Vec2::new(a.cos(), a.sin());
            let (lo, hi) = p.extent(n);
            let off = 0.5 * (lo + hi) + 0.5 * t * (hi - lo);
            let (l, r) = p.split(n, off);
            let total = l.as_ref().map_or(0.0, |q| q.area()) + r.as_ref().map_or(0.0, |q| q.area());
            prop_assert!((total - p.area()).abs() <= 1e-10 * p.area());
            for q in [l, r].into_iter().flatten() {
                prop_assert!(q.area() <= p.area() * (1.0 + 1e-12));
                prop_assert!(ConvexPolygon::new(q.vertices().to_vec()).is_ok());
            }
        }
    }
}
