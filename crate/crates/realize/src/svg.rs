//! SVG rendering: cells colored by `log₁₀|∇w|`, error cells hatched.
//! Families too small to see, or too numerous, are drawn as their hull.

use std::fmt::Write as _;

use laminate_core::{Mat2, Vec2};
use laminate_geometry::ConvexPolygon;

use crate::field::{rot_mat, Field, Patch};

const PALETTE: [(u8, u8, u8); 8] = [
    (48, 18, 59),
    (65, 69, 171),
    (57, 162, 252),
    (27, 229, 181),
    (116, 254, 93),
    (225, 221, 55),
    (249, 140, 34),
    (180, 24, 8),
];

const WIDTH: f64 = 800.0;

struct Painter {
    lo: f64,
    hi: f64,
    pixel: f64,
    budget: usize,
    view: (Vec2, Vec2),
    out: String,
}

impl Painter {
    fn color(&self, g: &Mat2) -> String {
        let v = g.frobenius_norm().max(1e-300).log10();
        let t = if self.hi > self.lo {
            ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let (r, g, b) = PALETTE[((t * 7.0).round() as usize).min(7)];
        format!("#{r:02x}{g:02x}{b:02x}")
    }

    fn poly(&mut self, p: &ConvexPolygon, grad: &Mat2, hatched: bool) {
        let (lo, hi) = self.view;
        let mut pts = String::new();
        for v in p.vertices() {
            let x = (v.x - lo.x) / self.pixel;
            let y = (hi.y - v.y) / self.pixel;
            let _ = write!(pts, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.out,
            r#"<polygon points="{}" fill="{}"/>"#,
            pts.trim_end(),
            self.color(grad)
        );
        if hatched {
            let _ = writeln!(
                self.out,
                r#"<polygon points="{}" fill="url(#hatch)"/>"#,
                pts.trim_end()
            );
        }
        self.budget = self.budget.saturating_sub(1);
    }

    fn patch(&mut self, p: &Patch, o: Vec2, s: f64) {
        let r = rot_mat(p.rot);
        let place = |poly: &ConvexPolygon| poly.map(|y| o + r * y * s);
        for c in &p.cells {
            self.poly(&place(&c.poly), &c.grad, c.tag.is_error());
        }
        for f in &p.families {
            let child_size = s * f.scale * f.patch.footprint.diameter();
            let pieces =
                (f.count as usize).saturating_mul(f.patch.cells.len() + f.patch.families.len());
            if child_size < 2.0 * self.pixel || pieces > self.budget / 2 {
                if let Ok(h) = f.hull(p.rot) {
                    self.poly(&place(&h), &f.patch.host, false);
                }
                continue;
            }
            for j in 0..f.count {
                self.patch(&f.patch, o + r * f.copy_origin(j) * s, s * f.scale);
            }
        }
    }
}

/// Renders at most about `max_elements` polygons.
pub fn render(field: &Field, max_elements: usize) -> String {
    let census = field.census();
    let logs: Vec<f64> = census
        .iter()
        .map(|e| e.grad.frobenius_norm().max(1e-300).log10())
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let view = field.domain.bbox();
    let span = (view.1.x - view.0.x).max(view.1.y - view.0.y);
    let pixel = span / WIDTH;
    let w = (view.1.x - view.0.x) / pixel;
    let h = (view.1.y - view.0.y) / pixel;
    let mut p = Painter {
        lo,
        hi,
        pixel,
        budget: max_elements,
        view,
        out: String::new(),
    };
    let _ = writeln!(
        p.out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    p.out.push_str(
        r#"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="6" stroke="black" stroke-width="1.5"/></pattern></defs>
"#,
    );
    p.patch(&field.root, Vec2::ZERO, 1.0);
    p.out.push_str("</svg>\n");
    p.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Tag;

    #[test]
    fn affine_field_is_one_polygon() {
        let f = Field::affine(
            ConvexPolygon::unit_square(),
            Mat2::IDENTITY,
            Vec2::ZERO,
            Tag::Residual,
        );
        let s = render(&f, 100);
        assert!(s.starts_with("<svg"));
        assert_eq!(s.matches("<polygon").count(), 2);
        assert!(s.contains("url(#hatch)"));
    }
}
