//! Covers of a convex target by disjoint rescaled copies of a template.

use serde::{Deserialize, Serialize};

use crate::polygon::ConvexPolygon;
use crate::{GeometryError, Vec2};

/// Deepest quadtree level before a cover is declared stalled.
pub const MAX_LEVEL: u32 = 40;
/// Largest number of boundary squares kept on one level.
pub const MAX_FRONT: usize = 1 << 21;
/// Largest number of strips tried by [`strip_cover`].
pub const MAX_STRIPS: usize = 1 << 16;

/// A copy `scale · template + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub scale: f64,
    pub offset: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cover {
    pub placements: Vec<Placement>,
    pub remainder_area: f64,
}

/// Axis-aligned rectangle in some frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }
    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    /// The rectangle in original coordinates, for a frame rotated by `frame`.
    pub fn polygon(&self, frame: Vec2) -> ConvexPolygon {
        ConvexPolygon::rect(self.x0, self.y0, self.x1, self.y1).map(|v| v.rotate(frame))
    }
}

/// Quadtree squares of a target, expressed in a frame rotated by `frame`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadCover {
    pub frame: Vec2,
    /// Lower-left corner of the root square, in frame coordinates.
    pub origin: Vec2,
    pub size: f64,
    /// `(level, ix, iy)` of every placed square.
    pub squares: Vec<(u32, u64, u64)>,
    /// Uncovered pieces, in original coordinates.
    pub remainder: Vec<ConvexPolygon>,
    pub covered_area: f64,
    pub target_area: f64,
}

impl QuadCover {
    pub fn side(&self, level: u32) -> f64 {
        self.size / 2f64.powi(level as i32)
    }

    /// Lower-left corner of a square in frame coordinates.
    pub fn corner(&self, level: u32, ix: u64, iy: u64) -> Vec2 {
        let h = self.side(level);
        self.origin + Vec2::new(ix as f64 * h, iy as f64 * h)
    }

    pub fn remainder_area(&self) -> f64 {
        self.target_area - self.covered_area
    }
}

fn to_frame(p: &ConvexPolygon, frame: Vec2) -> ConvexPolygon {
    p.map(|v| v.unrotate(frame))
}

fn check_fill(fill: f64) -> Result<(), GeometryError> {
    if fill > 0.0 && fill <= 1.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidFill(fill))
    }
}

/// Quadtree refinement of the bounding square of `target` (in the rotated
/// frame) until the squares inside cover `fill` of its area.
pub fn quadtree_cover(
    target: &ConvexPolygon,
    frame: Vec2,
    fill: f64,
) -> Result<QuadCover, GeometryError> {
    check_fill(fill)?;
    let t = to_frame(target, frame);
    let (lo, hi) = t.bbox();
    let size = (hi.x - lo.x).max(hi.y - lo.y);
    let area = t.area();
    let tol = 1e-12 * size;
    let mut out = QuadCover {
        frame,
        origin: lo,
        size,
        squares: Vec::new(),
        remainder: Vec::new(),
        covered_area: 0.0,
        target_area: area,
    };
    let mut front: Vec<(u64, u64)> = vec![(0, 0)];
    for level in 0..=MAX_LEVEL {
        let h = out.side(level);
        let mut boundary = Vec::new();
        let mut pieces = Vec::new();
        for &(ix, iy) in &front {
            let c = out.corner(level, ix, iy);
            let corners = [
                c,
                c + Vec2::new(h, 0.0),
                c + Vec2::new(h, h),
                c + Vec2::new(0.0, h),
            ];
            if corners.iter().all(|p| t.contains(*p, tol)) {
                out.squares.push((level, ix, iy));
                out.covered_area += h * h;
                continue;
            }
            let piece = t
                .clip(Vec2::new(-1.0, 0.0), -c.x)
                .and_then(|q| q.clip(Vec2::new(1.0, 0.0), c.x + h))
                .and_then(|q| q.clip(Vec2::new(0.0, -1.0), -c.y))
                .and_then(|q| q.clip(Vec2::new(0.0, 1.0), c.y + h));
            if let Some(q) = piece {
                boundary.push((ix, iy));
                pieces.push(q);
            }
        }
        if out.covered_area >= fill * area * (1.0 - 1e-12) || boundary.is_empty() {
            out.remainder = pieces.iter().map(|q| q.map(|v| v.rotate(frame))).collect();
            return Ok(out);
        }
        if boundary.len() * 4 > MAX_FRONT {
            break;
        }
        front = boundary
            .iter()
            .flat_map(|&(ix, iy)| {
                [
                    (2 * ix, 2 * iy),
                    (2 * ix + 1, 2 * iy),
                    (2 * ix, 2 * iy + 1),
                    (2 * ix + 1, 2 * iy + 1),
                ]
            })
            .collect();
    }
    Err(GeometryError::FillUnreachable {
        achieved: out.covered_area / area,
        fill,
    })
}

/// Disjoint copies of `template` inside `target` covering at least `fill` of
/// its area. Each quadtree square receives the template scaled to fit the
/// square and aligned with its lower-left corner.
pub fn cover(
    target: &ConvexPolygon,
    template: &ConvexPolygon,
    fill: f64,
) -> Result<Cover, GeometryError> {
    if !(fill > 0.0 && fill < 1.0) {
        return Err(GeometryError::InvalidFill(fill));
    }
    let (tlo, thi) = template.bbox();
    let m = (thi.x - tlo.x).max(thi.y - tlo.y);
    let density = template.area() / (m * m);
    if density < fill {
        return Err(GeometryError::FillUnreachable {
            achieved: density,
            fill,
        });
    }
    let q = quadtree_cover(target, Vec2::new(1.0, 0.0), (fill / density).min(1.0))?;
    let placements: Vec<Placement> = q
        .squares
        .iter()
        .map(|&(level, ix, iy)| {
            let r = q.side(level) / m;
            Placement {
                scale: r,
                offset: q.corner(level, ix, iy) - tlo * r,
            }
        })
        .collect();
    let covered: f64 = placements.iter().map(|p| p.scale * p.scale).sum::<f64>() * template.area();
    Ok(Cover {
        placements,
        remainder_area: target.area() - covered,
    })
}

/// Horizontal strips (in the rotated frame) with inscribed rectangles.
#[derive(Clone, Debug, PartialEq)]
pub struct StripCover {
    pub frame: Vec2,
    pub rects: Vec<Rect>,
    /// Uncovered pieces, in original coordinates.
    pub remainder: Vec<ConvexPolygon>,
    pub covered_area: f64,
    pub target_area: f64,
}

impl StripCover {
    pub fn remainder_area(&self) -> f64 {
        self.target_area - self.covered_area
    }
}

fn x_range_at(p: &ConvexPolygon, y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, b) in p.edges() {
        if (a.y - y) * (b.y - y) <= 0.0 {
            let x = if a.y == b.y {
                lo = lo.min(a.x.min(b.x));
                hi = hi.max(a.x.max(b.x));
                continue;
            } else {
                a.x + (b.x - a.x) * (y - a.y) / (b.y - a.y)
            };
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Slices `target` into `m` horizontal strips of the rotated frame, doubling
/// `m` until the inscribed rectangles cover `fill` of the area.
pub fn strip_cover(
    target: &ConvexPolygon,
    frame: Vec2,
    fill: f64,
) -> Result<StripCover, GeometryError> {
    check_fill(fill)?;
    let t = to_frame(target, frame);
    let area = t.area();
    let (ylo, yhi) = t.extent(Vec2::new(0.0, 1.0));
    let mut m = 1usize;
    let mut best = 0.0;
    while m <= MAX_STRIPS {
        let h = (yhi - ylo) / m as f64;
        let mut rects = Vec::with_capacity(m);
        let mut remainder = Vec::new();
        let mut covered = 0.0;
        for k in 0..m {
            let y0 = ylo + k as f64 * h;
            let y1 = if k + 1 == m {
                yhi
            } else {
                ylo + (k + 1) as f64 * h
            };
            let Some(piece) = t
                .clip(Vec2::new(0.0, -1.0), -y0)
                .and_then(|q| q.clip(Vec2::new(0.0, 1.0), y1))
            else {
                continue;
            };
            let rect = match (x_range_at(&t, y0), x_range_at(&t, y1)) {
                (Some(a), Some(b)) if a.0.max(b.0) < a.1.min(b.1) => Some(Rect {
                    x0: a.0.max(b.0),
                    x1: a.1.min(b.1),
                    y0,
                    y1,
                }),
                _ => None,
            };
            match rect {
                Some(r) => {
                    covered += r.area();
                    remainder.extend(piece.clip(Vec2::new(1.0, 0.0), r.x0));
                    remainder.extend(piece.clip(Vec2::new(-1.0, 0.0), -r.x1));
                    rects.push(r);
                }
                None => remainder.push(piece),
            }
        }
        if covered >= fill * area * (1.0 - 1e-12) {
            return Ok(StripCover {
                frame,
                rects,
                remainder: remainder
                    .iter()
                    .map(|q| q.map(|v| v.rotate(frame)))
                    .collect(),
                covered_area: covered,
                target_area: area,
            });
        }
        best = covered / area;
        m *= 2;
    }
    Err(GeometryError::FillUnreachable {
        achieved: best,
        fill,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn disjoint(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
        // separating axis test on the edge normals, touching allowed
        for p in [a, b] {
            for (s, e) in p.edges() {
                let n = (e - s).perp();
                let (alo, ahi) = a.extent(n);
                let (blo, bhi) = b.extent(n);
                let tol = 1e-12 * n.norm() * (a.diameter() + b.diameter());
                if ahi <= blo + tol || bhi <= alo + tol {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn square_covers_itself() {
        let sq = ConvexPolygon::unit_square();
        let c = cover(&sq, &sq, 0.99).unwrap();
        assert_eq!(
            c.placements,
            vec![Placement {
                scale: 1.0,
                offset: Vec2::ZERO
            }]
        );
        assert_eq!(c.remainder_area, 0.0);
    }

    #[test]
    fn square_by_smaller_squares() {
        let sq = ConvexPolygon::rect(0.0, 0.0, 1.0, 1.0);
        let tmpl = ConvexPolygon::rect(0.0, 0.0, 0.5, 0.5);
        let c = cover(&sq, &tmpl, 0.99).unwrap();
        assert!(c.remainder_area <= 0.01);
    }

    #[test]
    fn triangle_by_squares() {
        let tri = ConvexPolygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ])
        .unwrap();
        let sq = ConvexPolygon::unit_square();
        let c = cover(&tri, &sq, 0.95).unwrap();
        assert!(c.remainder_area <= 0.05 * tri.area());
        let copies: Vec<ConvexPolygon> = c
            .placements
            .iter()
            .map(|p| sq.scale(p.scale).translate(p.offset))
            .collect();
        for (i, a) in copies.iter().enumerate() {
            assert!(tri.contains_polygon(a, 1e-12));
            for b in &copies[i + 1..] {
                assert!(disjoint(a, b));
            }
        }
        let placed: f64 = copies.iter().map(|q| q.area()).sum();
        assert_abs_diff_eq!(
            placed + c.remainder_area,
            tri.area(),
            epsilon = 1e-9 * tri.area()
        );
    }

    #[test]
    fn thin_template_stalls() {
        let sq = ConvexPolygon::unit_square();
        let thin = ConvexPolygon::rect(0.0, 0.0, 1.0, 0.1);
        assert!(matches!(
            cover(&sq, &thin, 0.5),
            Err(GeometryError::FillUnreachable { .. })
        ));
        assert!(matches!(
            cover(&sq, &sq, 1.5),
            Err(GeometryError::InvalidFill(_))
        ));
    }

    #[test]
    fn rotated_quadtree_pieces_tile_the_target() {
        let sq = ConvexPolygon::unit_square();
        let a: f64 = 0.3;
        let q = quadtree_cover(&sq, Vec2::new(a.cos(), a.sin()), 0.97).unwrap();
        let rem: f64 = q.remainder.iter().map(|p| p.area()).sum();
        assert_abs_diff_eq!(q.covered_area + rem, 1.0, epsilon = 1e-9);
        assert!(q.remainder_area() <= 0.03 + 1e-12);
        for &(l, ix, iy) in &q.squares {
            let c = q.corner(l, ix, iy);
            let h = q.side(l);
            let p = Rect {
                x0: c.x,
                x1: c.x + h,
                y0: c.y,
                y1: c.y + h,
            }
            .polygon(q.frame);
            assert!(sq.contains_polygon(&p, 1e-12));
        }
    }

    #[test]
    fn strips_cover_a_thin_triangle() {
        let tri = ConvexPolygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.4, 30.0),
        ])
        .unwrap();
        let s = strip_cover(&tri, Vec2::new(0.0, 1.0), 0.99).unwrap();
        let rem: f64 = s.remainder.iter().map(|p| p.area()).sum();
        assert_abs_diff_eq!(
            s.covered_area + rem,
            tri.area(),
            epsilon = 1e-9 * tri.area()
        );
        assert!(s.remainder_area() <= 0.01 * tri.area() * (1.0 + 1e-9));
        for r in &s.rects {
            assert!(tri.contains_polygon(&r.polygon(s.frame), 1e-9));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn quadtree_accounts_for_all_area(n in 3usize..8, a in 0.0f64..6.3, fill in 0.5f64..0.98) {
            let p = ConvexPolygon::regular(n, 1.0);
            let q = quadtree_cover(&p, Vec2::new(a.cos(), a.sin()), fill).unwrap();
            let rem: f64 = q.remainder.iter().map(|p| p.area()).sum();
            prop_assert!((q.covered_area + rem - p.area()).abs() <= 1e-9 * p.area());
            prop_assert!(q.covered_area >= fill * p.area() * (1.0 - 1e-12));
        }

        #[test]
        fn strips_account_for_all_area(n in 3usize..8, a in 0.0f64..6.3, fill in 0.5f64..0.98) {
            let p = ConvexPolygon::regular(n, 1.0);
            let s = strip_cover(&p, Vec2::new(a.cos(), a.sin()), fill).unwrap();
            let rem: f64 = s.remainder.iter().map(|p| p.area()).sum();
            prop_assert!((s.covered_area + rem - p.area()).abs() <= 1e-9 * p.area());
        }
    }
}
