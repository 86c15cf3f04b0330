//! Distance of a field to its affine boundary map.

use laminate_realize::Field;
use serde::Serialize;

use crate::VerifyError;

/// Fields with at most this many expanded cells are measured exactly.
pub const EXACT_CELL_LIMIT: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupReport {
    /// `sup |w − (X₀x + b)|`, or an upper bound on it when `exact` is false.
    pub value: f64,
    pub exact: bool,
}

/// Maximum over cell vertices when the field is small enough to expand,
/// the hierarchical bound otherwise.
pub fn sup_distance(field: &Field) -> Result<SupReport, VerifyError> {
    if let Some(cells) = field.flatten(EXACT_CELL_LIMIT) {
        let value = cells
            .iter()
            .flat_map(|c| {
                c.poly
                    .vertices()
                    .iter()
                    .map(move |&v| ((c.grad - field.x0) * v + c.b - field.b).norm())
            })
            .fold(0.0, f64::max);
        return Ok(SupReport { value, exact: true });
    }
    Ok(SupReport {
        value: field.sup_bound()?,
        exact: false,
    })
}

/// Interpolated `C^α` seminorm bound `(2S)^{1−α} L^α` of `w − (X₀x + b)`,
/// with `S` the sup distance and `L` the largest `|∇w − X₀|`.
pub fn holder_estimate(field: &Field, alpha: f64, sup: f64) -> f64 {
    let lip = field
        .census()
        .iter()
        .filter(|e| e.area > 0.0)
        .map(|e| (e.grad - field.x0).operator_norm())
        .fold(0.0, f64::max);
    (2.0 * sup).powf(1.0 - alpha) * lip.powf(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use laminate_core::{Mat2, Vec2};
    use laminate_geometry::ConvexPolygon;
    use laminate_realize::{wiggle, Tag, WiggleSpec};

    #[test]
    fn affine_field_is_at_distance_zero() {
        let f = Field::affine(
            ConvexPolygon::unit_square(),
            Mat2::diag(2.0, 1.0),
            Vec2::new(1.0, 0.0),
            Tag::K,
        );
        let s = sup_distance(&f).unwrap();
        assert!(s.exact);
        assert_eq!(s.value, 0.0);
        assert_eq!(holder_estimate(&f, 0.5, s.value), 0.0);
    }

    #[test]
    fn wiggle_distance_is_exact_and_below_the_bound() {
        let e11 = Mat2::new(1.0, 0.0, 0.0, 0.0);
        let spec = WiggleSpec::new(e11, -e11, 0.5, 0.05).unwrap();
        let f = wiggle(&spec, Vec2::ZERO, &ConvexPolygon::unit_square(), None).unwrap();
        let s = sup_distance(&f).unwrap();
        assert!(s.exact);
        assert!(s.value > 0.0 && s.value <= f.sup_bound().unwrap() + 1e-15);
        // α = 0 gives 2S and α = 1 the largest gradient deviation, here 1.
        assert!((holder_estimate(&f, 0.0, s.value) - 2.0 * s.value).abs() < 1e-15);
        assert!((holder_estimate(&f, 1.0, s.value) - 1.0).abs() < 1e-12);
    }
}
